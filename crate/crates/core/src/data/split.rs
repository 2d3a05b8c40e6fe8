use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Corpus, Style};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct CrossStyleSplit {
    pub train: Corpus,
    pub val: Corpus,
    pub test: Corpus,
}

/// Train and validation come from `source_style`; the test set is every
/// record of the opposite style, in corpus order.
pub fn split_cross_style(
    corpus: &Corpus,
    source_style: Style,
    val_fraction: f64,
    seed: u64,
) -> Result<CrossStyleSplit> {
    if !(0.0..1.0).contains(&val_fraction) {
        return Err(Error::invalid(format!(
            "val_fraction must be in [0, 1), got {val_fraction}"
        )));
    }
    if let Some(r) = corpus.records().iter().find(|r| r.s.is_none()) {
        return Err(Error::invalid(format!(
            "record {} has no style; tag styles before splitting",
            r.id
        )));
    }
    for style in Style::ALL {
        if corpus.style_counts().get(style) == 0 {
            return Err(Error::MissingStyle(style));
        }
    }

    let mut source: Vec<usize> = (0..corpus.len())
        .filter(|&i| corpus.records()[i].s == Some(source_style))
        .collect();
    let test: Vec<usize> = (0..corpus.len())
        .filter(|&i| corpus.records()[i].s == Some(source_style.opposite()))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    source.shuffle(&mut rng);
    let n_val = (val_fraction * source.len() as f64).round() as usize;
    let (val, train) = source.split_at(n_val);
    let mut train = train.to_vec();
    let mut val = val.to_vec();
    train.sort_unstable();
    val.sort_unstable();

    Ok(CrossStyleSplit {
        train: corpus.subset(&train),
        val: corpus.subset(&val),
        test: corpus.subset(&test),
    })
}

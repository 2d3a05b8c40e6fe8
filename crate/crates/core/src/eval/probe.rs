//! Logistic-regression probes on exported factor vectors.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Area under the ROC curve by the rank-sum statistic, ties counted half.
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::invalid("scores and labels differ in length"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut ranks = vec![0.0; scores.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    let pos = labels.iter().filter(|&&y| y == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::invalid("AUC needs both classes"));
    }
    let rank_sum: f64 = ranks.iter().zip(labels).filter(|(_, &y)| y == 1).map(|(r, _)| r).sum();
    Ok((rank_sum - (pos * (pos + 1)) as f64 / 2.0) / (pos * neg) as f64)
}

/// L2-regularised logistic regression on standardised features, fitted by
/// full-batch gradient descent.
#[derive(Debug, Clone)]
pub struct LogisticProbe {
    mean: Vec<f64>,
    scale: Vec<f64>,
    weights: Vec<f64>,
    bias: f64,
}

impl LogisticProbe {
    pub fn fit(features: &[Vec<f64>], labels: &[u8]) -> Result<Self> {
        let n = features.len();
        if n == 0 || n != labels.len() {
            return Err(Error::invalid("probe needs one label per non-empty feature row"));
        }
        let d = features[0].len();
        let mut mean = vec![0.0; d];
        for x in features {
            for (m, v) in mean.iter_mut().zip(x) {
                *m += v / n as f64;
            }
        }
        let mut scale = vec![0.0; d];
        for x in features {
            for ((s, v), m) in scale.iter_mut().zip(x).zip(&mean) {
                *s += (v - m).powi(2) / n as f64;
            }
        }
        for s in &mut scale {
            *s = if *s > 1e-12 { s.sqrt() } else { 1.0 };
        }
        let mut probe = Self {
            mean,
            scale,
            weights: vec![0.0; d],
            bias: 0.0,
        };
        let xs: Vec<Vec<f64>> = features.iter().map(|x| probe.standardize(x)).collect();
        let (lr, l2) = (0.5, 1e-3);
        for _ in 0..300 {
            let mut gw = vec![0.0; d];
            let mut gb = 0.0;
            for (x, &y) in xs.iter().zip(labels) {
                let err = sigmoid(probe.logit(x)) - y as f64;
                for (g, v) in gw.iter_mut().zip(x) {
                    *g += err * v / n as f64;
                }
                gb += err / n as f64;
            }
            for (w, g) in probe.weights.iter_mut().zip(&gw) {
                *w -= lr * (g + l2 * *w);
            }
            probe.bias -= lr * gb;
        }
        Ok(probe)
    }

    fn standardize(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.mean).zip(&self.scale).map(|((v, m), s)| (v - m) / s).collect()
    }

    fn logit(&self, standardized: &[f64]) -> f64 {
        self.bias + self.weights.iter().zip(standardized).map(|(w, v)| w * v).sum::<f64>()
    }

    pub fn score(&self, x: &[f64]) -> f64 {
        sigmoid(self.logit(&self.standardize(x)))
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Held-out AUC of a logistic probe: fitted on a seeded half of the rows,
/// scored on the other half.
pub fn probe_auc(features: &[Vec<f64>], labels: &[u8], seed: u64) -> Result<f64> {
    let mut idx: Vec<usize> = (0..features.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (fit_idx, test_idx) = idx.split_at(features.len() / 2);
    let pick = |ix: &[usize]| -> (Vec<Vec<f64>>, Vec<u8>) {
        (ix.iter().map(|&i| features[i].clone()).collect(), ix.iter().map(|&i| labels[i]).collect())
    };
    let (fx, fy) = pick(fit_idx);
    let (tx, ty) = pick(test_idx);
    let probe = LogisticProbe::fit(&fx, &fy)?;
    let scores: Vec<f64> = tx.iter().map(|x| probe.score(x)).collect();
    auc(&scores, &ty)
}

//! Synthetic corpora drawn from the hate-speech causal graph.
//!
//! An unobserved platform `u` drives motivation `m`, target `t` and style
//! `s`; the post is a shuffled bag of tokens emitted by `u`, `m`, `t` and `s`
//! plus filler, and the label is `m` flipped with platform-specific noise.
//! Style never causes the label, but `u` makes them correlated.

use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Corpus, PostRecord, Style};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VocabSizes {
    pub motivation_hate: usize,
    pub motivation_benign: usize,
    pub per_target: usize,
    pub style_explicit: usize,
    pub style_implicit: usize,
    /// Tokens per platform.
    pub platform: usize,
    pub filler: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n_platforms: usize,
    pub n_targets: usize,
    pub vocab: VocabSizes,
    /// P(m = 1 | u).
    pub theta_m: Vec<f64>,
    /// P(t | u), one row per platform.
    pub pi_t: Vec<Vec<f64>>,
    /// P(s = implicit | u).
    pub theta_s: Vec<f64>,
    /// Label flip probability per platform, each in [0, 0.5).
    pub eta: Vec<f64>,
    /// Inclusive token-count range of a post.
    pub seq_len: (usize, usize),
    pub seed: u64,
}

/// Number of non-filler slots in every post.
const FACTOR_SLOTS: usize = 4;

impl Default for SyntheticSpec {
    /// Two platforms with confounded style: platform 0 is mostly implicit and
    /// mostly hateful, platform 1 mostly explicit and mostly benign.
    fn default() -> Self {
        Self {
            n_platforms: 2,
            n_targets: 3,
            vocab: VocabSizes {
                motivation_hate: 8,
                motivation_benign: 8,
                per_target: 4,
                style_explicit: 6,
                style_implicit: 6,
                platform: 4,
                filler: 40,
            },
            theta_m: vec![0.8, 0.2],
            pi_t: vec![vec![0.6, 0.3, 0.1], vec![0.1, 0.3, 0.6]],
            theta_s: vec![0.9, 0.1],
            eta: vec![0.0, 0.1],
            seq_len: (6, 10),
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let spec: SyntheticSpec = serde_json::from_str(&text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.n_platforms;
        if k < 2 || self.n_targets < 2 {
            return Err(Error::invalid("need at least 2 platforms and 2 targets"));
        }
        let per_platform = [
            ("theta_m", self.theta_m.len()),
            ("theta_s", self.theta_s.len()),
            ("eta", self.eta.len()),
            ("pi_t", self.pi_t.len()),
        ];
        for (name, len) in per_platform {
            if len != k {
                return Err(Error::invalid(format!("{name} has {len} rows, expected {k}")));
            }
        }
        let is_prob = |p: f64| (0.0..=1.0).contains(&p);
        if !self.theta_m.iter().chain(&self.theta_s).all(|&p| is_prob(p)) {
            return Err(Error::invalid("theta_m and theta_s must be probabilities"));
        }
        if !self.eta.iter().all(|&e| (0.0..0.5).contains(&e)) {
            return Err(Error::invalid("eta must lie in [0, 0.5)"));
        }
        for (u, row) in self.pi_t.iter().enumerate() {
            if row.len() != self.n_targets || !row.iter().all(|&p| is_prob(p)) {
                return Err(Error::invalid(format!("pi_t row {u} is not a distribution over targets")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::invalid(format!("pi_t row {u} sums to {sum}")));
            }
        }
        let v = &self.vocab;
        let sizes = [
            v.motivation_hate,
            v.motivation_benign,
            v.per_target,
            v.style_explicit,
            v.style_implicit,
            v.platform,
            v.filler,
        ];
        if sizes.contains(&0) {
            return Err(Error::invalid("every vocabulary partition needs at least one token"));
        }
        let (lo, hi) = self.seq_len;
        if lo < FACTOR_SLOTS || hi < lo {
            return Err(Error::invalid(format!(
                "seq_len must satisfy {FACTOR_SLOTS} <= min <= max, got ({lo}, {hi})"
            )));
        }
        Ok(())
    }

    pub fn target_names(&self) -> Vec<String> {
        (0..self.n_targets).map(|t| format!("target{t}")).collect()
    }
}

/// Latent causes of one synthetic record. Evaluation only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub u: usize,
    pub m: u8,
    pub t: usize,
    pub s: Style,
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub corpus: Corpus,
    /// Parallel to `corpus.records()`.
    pub truth: Vec<GroundTruth>,
}

#[derive(Serialize)]
struct SidecarRow<'a> {
    id: &'a str,
    u: usize,
    m: u8,
    t: usize,
    s: Style,
}

impl SyntheticCorpus {
    pub fn write_sidecar(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        for (r, g) in self.corpus.records().iter().zip(&self.truth) {
            let row = SidecarRow {
                id: &r.id,
                u: g.u,
                m: g.m,
                t: g.t,
                s: g.s,
            };
            serde_json::to_writer(&mut out, &row)?;
            out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        }
        out.flush().map_err(|e| Error::io(path, e))
    }
}

pub fn generate_synthetic(spec: &SyntheticSpec, n: usize) -> Result<SyntheticCorpus> {
    spec.validate()?;
    if n == 0 {
        return Err(Error::invalid("n must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let v = &spec.vocab;
    let mut records = Vec::with_capacity(n);
    let mut truth = Vec::with_capacity(n);

    for i in 0..n {
        let u = rng.random_range(0..spec.n_platforms);
        let m = rng.random_bool(spec.theta_m[u]) as u8;
        let t = sample_categorical(&mut rng, &spec.pi_t[u]);
        let s = if rng.random_bool(spec.theta_s[u]) {
            Style::Implicit
        } else {
            Style::Explicit
        };
        let y = m ^ rng.random_bool(spec.eta[u]) as u8;

        let len = rng.random_range(spec.seq_len.0..=spec.seq_len.1);
        let mut tokens = Vec::with_capacity(len);
        tokens.push(format!("plat{u}_{}", rng.random_range(0..v.platform)));
        tokens.push(if m == 1 {
            format!("mhate_{}", rng.random_range(0..v.motivation_hate))
        } else {
            format!("mbenign_{}", rng.random_range(0..v.motivation_benign))
        });
        tokens.push(format!("tgt{t}_{}", rng.random_range(0..v.per_target)));
        tokens.push(match s {
            Style::Explicit => format!("sexp_{}", rng.random_range(0..v.style_explicit)),
            Style::Implicit => format!("simp_{}", rng.random_range(0..v.style_implicit)),
        });
        for _ in FACTOR_SLOTS..len {
            tokens.push(format!("fill_{}", rng.random_range(0..v.filler)));
        }
        tokens.shuffle(&mut rng);

        records.push(PostRecord {
            id: format!("syn-{i:06}"),
            text: tokens.join(" "),
            y,
            s: Some(s),
            t: Some(t),
            source: Some("synthetic".to_string()),
        });
        truth.push(GroundTruth { u, m, t, s });
    }

    Ok(SyntheticCorpus {
        corpus: Corpus::new(records, spec.target_names())?,
        truth,
    })
}

fn sample_categorical(rng: &mut impl Rng, probs: &[f64]) -> usize {
    let x: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if x < acc {
            return i;
        }
    }
    probs.len() - 1
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pearson(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let ma = a.iter().sum::<f64>() / n;
        let mb = b.iter().sum::<f64>() / n;
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    }

    #[test]
    fn noise_free_labels_equal_motivation() {
        let spec = SyntheticSpec {
            eta: vec![0.0, 0.0],
            ..SyntheticSpec::default()
        };
        let syn = generate_synthetic(&spec, 500).unwrap();
        for (r, g) in syn.corpus.records().iter().zip(&syn.truth) {
            assert_eq!(r.y, g.m);
        }
    }

    #[test]
    fn zero_theta_s_gives_all_explicit() {
        let spec = SyntheticSpec {
            theta_s: vec![0.0, 0.0],
            ..SyntheticSpec::default()
        };
        let syn = generate_synthetic(&spec, 300).unwrap();
        assert_eq!(syn.corpus.style_counts().explicit, 300);
    }

    #[test]
    fn motivation_marginal_follows_total_probability() {
        // P(m=1) = (0.8 + 0.2) / 2 under a uniform platform.
        let syn = generate_synthetic(&SyntheticSpec::default(), 10_000).unwrap();
        let p = syn.truth.iter().filter(|g| g.m == 1).count() as f64 / 10_000.0;
        assert!((p - 0.5).abs() <= 0.02, "P(m=1) = {p}");
    }

    #[test]
    fn confounding_induces_style_label_correlation() {
        let syn = generate_synthetic(&SyntheticSpec::default(), 10_000).unwrap();
        let s: Vec<f64> = syn.truth.iter().map(|g| g.s.index() as f64).collect();
        let y: Vec<f64> = syn.corpus.records().iter().map(|r| r.y as f64).collect();
        let corr = pearson(&s, &y);
        assert!(corr.abs() > 0.1, "corr(s, y) = {corr}");
    }

    #[test]
    fn fixed_seed_is_reproducible() {
        let a = generate_synthetic(&SyntheticSpec::default(), 200).unwrap();
        let b = generate_synthetic(&SyntheticSpec::default(), 200).unwrap();
        assert_eq!(a.corpus, b.corpus);
        assert_eq!(a.truth, b.truth);
        let c = generate_synthetic(&SyntheticSpec { seed: 1, ..SyntheticSpec::default() }, 200).unwrap();
        assert_ne!(a.corpus, c.corpus);
    }

    #[test]
    fn posts_carry_one_token_per_factor() {
        let syn = generate_synthetic(&SyntheticSpec::default(), 100).unwrap();
        for (r, g) in syn.corpus.records().iter().zip(&syn.truth) {
            let words: Vec<&str> = r.text.split(' ').collect();
            assert!((6..=10).contains(&words.len()));
            let count = |prefix: &str| words.iter().filter(|w| w.starts_with(prefix)).count();
            assert_eq!(count(&format!("plat{}_", g.u)), 1);
            assert_eq!(count(&format!("tgt{}_", g.t)), 1);
            assert_eq!(count(if g.m == 1 { "mhate_" } else { "mbenign_" }), 1);
            assert_eq!(count(if g.s == Style::Explicit { "sexp_" } else { "simp_" }), 1);
            assert_eq!(r.t, Some(g.t));
            assert_eq!(r.s, Some(g.s));
        }
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let bad_row = SyntheticSpec {
            pi_t: vec![vec![0.5, 0.3, 0.1], vec![0.1, 0.3, 0.6]],
            ..SyntheticSpec::default()
        };
        assert!(bad_row.validate().is_err());
        let bad_eta = SyntheticSpec {
            eta: vec![0.5, 0.0],
            ..SyntheticSpec::default()
        };
        assert!(bad_eta.validate().is_err());
        assert!(generate_synthetic(&SyntheticSpec::default(), 0).is_err());
    }

    #[test]
    fn split_test_size_matches_implicit_count() {
        let syn = generate_synthetic(&SyntheticSpec::default(), 2000).unwrap();
        let implicit = syn.truth.iter().filter(|g| g.s == Style::Implicit).count();
        let split = crate::data::split_cross_style(&syn.corpus, Style::Explicit, 0.1, 0).unwrap();
        assert_eq!(split.test.len(), implicit);
    }

    #[test]
    fn sidecar_has_one_row_per_record() {
        let syn = generate_synthetic(&SyntheticSpec::default(), 20).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("truth.jsonl");
        syn.write_sidecar(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert_eq!(text.lines().count(), 20);
        for key in ["id", "u", "m", "t", "s"] {
            assert!(first.get(key).is_some(), "missing {key}");
        }
    }
}

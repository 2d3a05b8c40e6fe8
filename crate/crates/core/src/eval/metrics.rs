use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Precision and recall of the hate class alongside macro-F1 over both
/// classes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub precision: f64,
    pub recall: f64,
    pub macro_f1: f64,
    /// Set when some ratio had a zero denominator and was taken as 0.
    pub zero_division: bool,
    /// `confusion[label][prediction]`.
    pub confusion: [[usize; 2]; 2],
}

fn ratio(num: usize, den: usize, flag: &mut bool) -> f64 {
    if den == 0 {
        *flag = true;
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

pub fn compute_metrics(preds: &[u8], labels: &[u8]) -> Result<Metrics> {
    if preds.len() != labels.len() {
        return Err(Error::invalid(format!(
            "{} predictions for {} labels",
            preds.len(),
            labels.len()
        )));
    }
    let mut c = [[0usize; 2]; 2];
    for (&p, &y) in preds.iter().zip(labels) {
        if p > 1 || y > 1 {
            return Err(Error::invalid("predictions and labels must be 0 or 1"));
        }
        c[y as usize][p as usize] += 1;
    }
    let mut flag = false;
    let mut per_class = [0.0; 2];
    let mut hate = (0.0, 0.0);
    for k in 0..2 {
        let tp = c[k][k];
        let predicted = c[0][k] + c[1][k];
        let actual = c[k][0] + c[k][1];
        let p = ratio(tp, predicted, &mut flag);
        let r = ratio(tp, actual, &mut flag);
        per_class[k] = f1(p, r);
        if k == 1 {
            hate = (p, r);
        }
    }
    Ok(Metrics {
        precision: hate.0,
        recall: hate.1,
        macro_f1: (per_class[0] + per_class[1]) / 2.0,
        zero_division: flag,
        confusion: c,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub precision: f64,
    pub recall: f64,
    pub macro_f1: f64,
}

/// Arithmetic mean and sample standard deviation (0 for a single run).
pub fn mean_std(runs: &[Metrics]) -> (MetricsSummary, MetricsSummary) {
    let n = runs.len().max(1) as f64;
    let stat = |f: fn(&Metrics) -> f64| {
        let mean = runs.iter().map(f).sum::<f64>() / n;
        let var = if runs.len() > 1 {
            runs.iter().map(|m| (f(m) - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        (mean, var.sqrt())
    };
    let (p, r, f) = (stat(|m| m.precision), stat(|m| m.recall), stat(|m| m.macro_f1));
    (
        MetricsSummary {
            precision: p.0,
            recall: r.0,
            macro_f1: f.0,
        },
        MetricsSummary {
            precision: p.1,
            recall: r.1,
            macro_f1: f.1,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_and_all_negative() {
        let y = [1, 0, 1, 0];
        let m = compute_metrics(&y, &y).unwrap();
        assert_eq!((m.precision, m.recall, m.macro_f1, m.zero_division), (1.0, 1.0, 1.0, false));
        let m = compute_metrics(&[0, 0, 0, 0], &y).unwrap();
        assert_eq!((m.precision, m.recall), (0.0, 0.0));
        assert!(m.zero_division);
        assert!((m.macro_f1 - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn length_mismatch_is_an_error() {
        assert!(compute_metrics(&[1], &[1, 0]).is_err());
    }

    #[test]
    fn mean_and_std() {
        let mk = |f| Metrics {
            precision: f,
            recall: f,
            macro_f1: f,
            zero_division: false,
            confusion: [[0; 2]; 2],
        };
        let (mean, sd) = mean_std(&[mk(0.5), mk(0.7)]);
        assert!((mean.macro_f1 - 0.6).abs() < 1e-12);
        assert!((sd.macro_f1 - (0.02f64).sqrt()).abs() < 1e-12);
    }
}

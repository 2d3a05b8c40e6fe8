//! Weighted sum of the loss components and its per-step record.

use std::collections::BTreeMap;

use candle_core::Tensor;
use serde::{Deserialize, Serialize};

use super::{LossName, WeightSet};
use crate::error::{Error, Result};
use crate::nn::to_f64;

/// Raw component values, their effective weights and the weighted total of
/// one optimisation step. Components that were not computed are absent and
/// count as zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub epoch: usize,
    pub step: usize,
    pub components: BTreeMap<LossName, f64>,
    pub weights: WeightSet,
    pub total: f64,
}

impl LossReport {
    pub fn component(&self, name: LossName) -> f64 {
        self.components.get(&name).copied().unwrap_or(0.0)
    }

    /// `sum_i weight_i * component_i` recomputed from the parts.
    pub fn recomputed_total(&self) -> f64 {
        weighted_total(self.components.iter().map(|(&n, &v)| (n, v)), &self.weights)
    }
}

/// Host-side weighted sum. Zero-weight components contribute nothing, even
/// when their value is not finite.
pub fn weighted_total(components: impl IntoIterator<Item = (LossName, f64)>, weights: &WeightSet) -> f64 {
    components
        .into_iter()
        .map(|(n, v)| (weights.get(n), v))
        .filter(|&(w, _)| w != 0.0)
        .map(|(w, v)| w * v)
        .sum()
}

/// Differentiable weighted sum of scalar components. Components with zero
/// weight are recorded but detached from the total.
pub fn total_loss(
    components: &[(LossName, Tensor)],
    weights: &WeightSet,
    epoch: usize,
    step: usize,
) -> Result<(Tensor, LossReport)> {
    let mut values = BTreeMap::new();
    let mut total: Option<Tensor> = None;
    for (name, value) in components {
        let v = to_f64(value)?;
        let w = weights.get(*name);
        if !v.is_finite() && w != 0.0 {
            return Err(Error::NonFinite(format!("loss component {name}")));
        }
        values.insert(*name, v);
        if w != 0.0 {
            let term = (value * w)?;
            total = Some(match total {
                Some(acc) => (acc + term)?,
                None => term,
            });
        }
    }
    let total = match total {
        Some(t) => t,
        None => match components.first() {
            Some((_, v)) => v.zeros_like()?.detach(),
            None => return Err(Error::invalid("no loss components")),
        },
    };
    let report = LossReport {
        epoch,
        step,
        total: to_f64(&total)?,
        components: values,
        weights: *weights,
    };
    Ok((total, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use candle_core::Device;

    fn scalar(v: f64) -> Tensor {
        Tensor::new(v, &Device::Cpu).unwrap()
    }

    #[test]
    fn examples() {
        let zeros: Vec<_> = LossName::ALL.iter().map(|&n| (n, scalar(0.0))).collect();
        assert_eq!(total_loss(&zeros, &WeightSet::FINAL, 0, 0).unwrap().1.total, 0.0);

        let mut w = WeightSet::ZERO;
        w.rec = 2.0;
        let one = [(LossName::Rec, scalar(1.0)), (LossName::Task, scalar(0.0))];
        assert_eq!(total_loss(&one, &w, 0, 0).unwrap().1.total, 2.0);

        let ones: Vec<_> = LossName::ALL.iter().map(|&n| (n, scalar(1.0))).collect();
        let (t, report) = total_loss(&ones, &WeightSet::FINAL, 3, 7).unwrap();
        assert!((to_f64(&t).unwrap() - 9.1).abs() < 1e-12);
        assert!((report.recomputed_total() - report.total).abs() < 1e-12);
    }

    #[test]
    fn non_finite_component_is_named() {
        let c = [(LossName::Task, scalar(1.0)), (LossName::Cycle, scalar(f64::NAN))];
        let err = total_loss(&c, &WeightSet::FINAL, 0, 0).unwrap_err();
        assert!(err.to_string().contains("cycle"), "{err}");
    }

    #[test]
    fn report_serializes_with_loss_names() {
        let c = [(LossName::Kl, scalar(0.5))];
        let (_, r) = total_loss(&c, &WeightSet::FINAL, 1, 2).unwrap();
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains("\"KL\":0.5"), "{json}");
        assert_eq!(serde_json::from_str::<LossReport>(&json).unwrap(), r);
    }
}

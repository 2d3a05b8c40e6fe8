//! Per-epoch loss weights, gradient-reversal strength and temperature.

use serde::Serialize;

use super::WeightSet;
use crate::config::{Config, CurriculumConfig, GumbelConfig};

/// Loss weights for `epoch` (0-based) of a run of `max_epochs`.
///
/// Reconstruction ramps linearly from `rec_start` to its final weight over
/// the first `rec_ramp_epochs` epochs. KL is off through `kl_off_through`
/// and reaches its final weight at `kl_full_epoch`. Orthogonality switches
/// on after `orth_off_through`. The adversarial weight ramps from
/// `adv_start` to its final weight at the last configured epoch. Components
/// whose final weight is zero stay at zero.
pub fn schedule_weights(epoch: usize, max_epochs: usize, final_w: &WeightSet, cur: &CurriculumConfig) -> WeightSet {
    let e = epoch as f64;
    let mut w = *final_w;
    let ramp = |start: f64, end: f64, frac: f64| if end == 0.0 { 0.0 } else { start + (end - start) * frac };

    let rec_frac = if cur.rec_ramp_epochs == 0 {
        1.0
    } else {
        epoch.min(cur.rec_ramp_epochs) as f64 / cur.rec_ramp_epochs as f64
    };
    w.rec = ramp(cur.rec_start, final_w.rec, rec_frac);

    let kl_span = (cur.kl_full_epoch - cur.kl_off_through) as f64;
    w.kl = final_w.kl * ((e - cur.kl_off_through as f64) / kl_span).clamp(0.0, 1.0);

    w.orth = if epoch <= cur.orth_off_through { 0.0 } else { final_w.orth };

    let adv_frac = if max_epochs <= 1 {
        1.0
    } else {
        (e / (max_epochs - 1) as f64).min(1.0)
    };
    w.adv = ramp(cur.adv_start, final_w.adv, adv_frac);
    w
}

/// `min(grl_step * epoch, grl_max)`.
pub fn schedule_grl(epoch: usize, cur: &CurriculumConfig) -> f64 {
    (cur.grl_step * epoch as f64).min(cur.grl_max)
}

/// Every per-epoch schedule of a run, with ablated components forced to
/// zero.
#[derive(Debug, Clone, Serialize)]
pub struct CurriculumSchedule {
    pub final_weights: WeightSet,
    pub curriculum: CurriculumConfig,
    pub gumbel: GumbelConfig,
    pub max_epochs: usize,
}

impl CurriculumSchedule {
    pub fn from_config(config: &Config) -> Self {
        Self {
            final_weights: config.weights.without(&config.train.disabled),
            curriculum: config.curriculum.clone(),
            gumbel: config.gumbel.clone(),
            max_epochs: config.train.max_epochs,
        }
    }

    pub fn weights(&self, epoch: usize) -> WeightSet {
        schedule_weights(epoch, self.max_epochs, &self.final_weights, &self.curriculum)
    }

    pub fn grl(&self, epoch: usize) -> f64 {
        schedule_grl(epoch, &self.curriculum)
    }

    pub fn tau(&self, epoch: usize) -> f64 {
        crate::latent::schedule_temperature(epoch, &self.gumbel)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w(epoch: usize) -> WeightSet {
        schedule_weights(epoch, 50, &WeightSet::FINAL, &CurriculumConfig::default())
    }

    #[test]
    fn reference_epochs() {
        let e0 = w(0);
        assert_eq!((e0.rec, e0.kl, e0.orth, e0.adv), (0.1, 0.0, 0.0, 0.1));
        assert!((w(5).rec - 0.5).abs() < 1e-15);
        assert_eq!(w(3).orth, 3.0);
        assert!((w(3).kl - 0.025).abs() < 1e-15);
        assert_eq!(w(6).kl, 0.1);
        assert_eq!(w(49).adv, 1.0);
        assert_eq!(w(2).orth, 0.0);
        let c = CurriculumConfig::default();
        assert_eq!(schedule_grl(0, &c), 0.0);
        assert_eq!(schedule_grl(5, &c), 1.0);
        assert_eq!(schedule_grl(50, &c), 2.0);
    }

    #[test]
    fn constant_components_stay_final() {
        for e in 0..12 {
            let x = w(e);
            assert_eq!((x.task, x.target, x.style, x.cf, x.cycle), (2.0, 0.5, 1.0, 0.5, 0.5));
        }
    }

    #[test]
    fn disabled_components_stay_zero() {
        let mut cfg = Config::default();
        cfg.train.disabled = vec![super::super::LossName::Rec, super::super::LossName::Adv];
        let s = CurriculumSchedule::from_config(&cfg);
        for e in 0..60 {
            assert_eq!(s.weights(e).rec, 0.0);
            assert_eq!(s.weights(e).adv, 0.0);
        }
    }
}

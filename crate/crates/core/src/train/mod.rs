//! Loss composition, staged curriculum, the training loop and checkpoints.

mod checkpoint;
mod engine;
mod loss;
mod schedule;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use checkpoint::{load_checkpoint, read_metrics, save_checkpoint, Manifest};
pub use engine::{train, EpochSummary, StepContext, TrainOutcome, Trainer};
pub use loss::{total_loss, weighted_total, LossReport};
pub use schedule::{schedule_grl, schedule_weights, CurriculumSchedule};

/// The nine loss components.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LossName {
    #[serde(rename = "task")]
    Task,
    #[serde(rename = "target")]
    Target,
    #[serde(rename = "style")]
    Style,
    #[serde(rename = "orth")]
    Orth,
    #[serde(rename = "adv")]
    Adv,
    #[serde(rename = "rec")]
    Rec,
    #[serde(rename = "cf")]
    Cf,
    #[serde(rename = "cycle")]
    Cycle,
    #[serde(rename = "KL", alias = "kl")]
    Kl,
}

impl LossName {
    pub const ALL: [LossName; 9] = [
        LossName::Task,
        LossName::Target,
        LossName::Style,
        LossName::Orth,
        LossName::Adv,
        LossName::Rec,
        LossName::Cf,
        LossName::Cycle,
        LossName::Kl,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LossName::Task => "task",
            LossName::Target => "target",
            LossName::Style => "style",
            LossName::Orth => "orth",
            LossName::Adv => "adv",
            LossName::Rec => "rec",
            LossName::Cf => "cf",
            LossName::Cycle => "cycle",
            LossName::Kl => "KL",
        }
    }

    /// Parses a comma-separated list such as `cf,cycle`.
    pub fn parse_list(list: &str) -> Result<Vec<LossName>> {
        list.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(str::parse)
            .collect()
    }
}

impl fmt::Display for LossName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LossName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LossName::ALL
            .into_iter()
            .find(|n| n.as_str() == s || (*n == LossName::Kl && s == "kl"))
            .ok_or_else(|| Error::UnknownLoss(s.to_string()))
    }
}

/// One weight per loss component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeightSet {
    pub task: f64,
    pub target: f64,
    pub style: f64,
    pub orth: f64,
    pub adv: f64,
    pub rec: f64,
    pub cf: f64,
    pub cycle: f64,
    #[serde(rename = "KL", alias = "kl")]
    pub kl: f64,
}

impl Default for WeightSet {
    fn default() -> Self {
        Self::FINAL
    }
}

impl WeightSet {
    /// Weights in effect once every curriculum ramp has finished.
    pub const FINAL: WeightSet = WeightSet {
        task: 2.0,
        target: 0.5,
        style: 1.0,
        orth: 3.0,
        adv: 1.0,
        rec: 0.5,
        cf: 0.5,
        cycle: 0.5,
        kl: 0.1,
    };

    pub const ZERO: WeightSet = WeightSet {
        task: 0.0,
        target: 0.0,
        style: 0.0,
        orth: 0.0,
        adv: 0.0,
        rec: 0.0,
        cf: 0.0,
        cycle: 0.0,
        kl: 0.0,
    };

    pub fn get(&self, name: LossName) -> f64 {
        match name {
            LossName::Task => self.task,
            LossName::Target => self.target,
            LossName::Style => self.style,
            LossName::Orth => self.orth,
            LossName::Adv => self.adv,
            LossName::Rec => self.rec,
            LossName::Cf => self.cf,
            LossName::Cycle => self.cycle,
            LossName::Kl => self.kl,
        }
    }

    pub fn set(&mut self, name: LossName, value: f64) {
        *match name {
            LossName::Task => &mut self.task,
            LossName::Target => &mut self.target,
            LossName::Style => &mut self.style,
            LossName::Orth => &mut self.orth,
            LossName::Adv => &mut self.adv,
            LossName::Rec => &mut self.rec,
            LossName::Cf => &mut self.cf,
            LossName::Cycle => &mut self.cycle,
            LossName::Kl => &mut self.kl,
        } = value;
    }

    pub fn iter(&self) -> impl Iterator<Item = (LossName, f64)> + '_ {
        LossName::ALL.into_iter().map(|n| (n, self.get(n)))
    }

    /// Copy with the listed components set to zero.
    pub fn without(&self, disabled: &[LossName]) -> WeightSet {
        let mut w = *self;
        for &n in disabled {
            w.set(n, 0.0);
        }
        w
    }
}

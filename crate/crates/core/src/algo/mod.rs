//! Cooperative algorithms.

pub mod init;
pub mod punish;
pub mod rsdgt;
pub mod sicgt;
pub mod statistic;

pub use init::FullSensingInit;
pub use punish::PunishEstimator;
pub use rsdgt::{RsdGtHooks, RsdGtPlayer};
pub use sicgt::{SicGtHooks, SicGtPlayer};
pub use statistic::{SelfishRobustMmab, StatisticConfig};

use serde::{Deserialize, Serialize};

use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algo {
    SelfishRobustMmab,
    SicGt,
    RsdGt,
}

impl Algo {
    pub fn as_str(self) -> &'static str {
        match self {
            Algo::SelfishRobustMmab => "selfish-robust-mmab",
            Algo::SicGt => "sic-gt",
            Algo::RsdGt => "rsd-gt",
        }
    }
}

impl std::fmt::Display for Algo {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Algo {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "selfish-robust-mmab" | "mmab" => Ok(Algo::SelfishRobustMmab),
            "sic-gt" => Ok(Algo::SicGt),
            "rsd-gt" => Ok(Algo::RsdGt),
            _ => Err(Error::config("algo", format!("unknown algorithm {s:?}"))),
        }
    }
}

/// `round(x) = floor(x + 0.5)`.
pub fn round_half_up(x: f64) -> i64 {
    (x + 0.5).floor() as i64
}

/// Player-count estimate from a per-arm collision probability `rate` when all
/// players sample uniformly over `arms`: `1 + round(log(1 - rate) / log(1 - 1/K))`,
/// clamped to `[1, arms]`. Returns the estimate and whether it was clamped.
pub fn players_from_collision_rate(rate: f64, arms: usize) -> (usize, bool) {
    if arms == 1 {
        return (1, rate > 0.0);
    }
    let raw = if rate >= 1.0 {
        i64::MAX
    } else {
        1 + round_half_up((1.0 - rate).ln() / (1.0 - 1.0 / arms as f64).ln())
    };
    let clamped = raw.clamp(1, arms as i64);
    (clamped as usize, clamped != raw)
}

/// Per-arm empirical means.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmStats {
    pub pulls: Vec<u64>,
    pub sums: Vec<f64>,
}

impl ArmStats {
    pub fn new(arms: usize) -> Self {
        ArmStats {
            pulls: vec![0; arms],
            sums: vec![0.0; arms],
        }
    }

    pub fn push(&mut self, arm: usize, x: f64) {
        self.pulls[arm] += 1;
        self.sums[arm] += x;
    }

    pub fn mean(&self, arm: usize) -> f64 {
        if self.pulls[arm] == 0 {
            0.0
        } else {
            self.sums[arm] / self.pulls[arm] as f64
        }
    }

    pub fn means(&self) -> Vec<f64> {
        (0..self.pulls.len()).map(|k| self.mean(k)).collect()
    }
}

/// Arm indices sorted by decreasing value, ties by lowest index.
pub fn ranking(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    idx
}

/// Index of the largest value, ties by lowest index.
pub fn argmax(values: &[f64]) -> usize {
    ranking(values)[0]
}

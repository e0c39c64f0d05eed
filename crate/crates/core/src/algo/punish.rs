//! Collective punishment after the signalling stage: estimate every arm to a
//! multiplicative precision, then sample arms i.i.d. so that no single
//! deviator can earn more than a fraction of the cooperative average.

use crate::env::Observation;
use crate::math::{punishment_precision, punishment_probs, sample_index, MultPrecisionState};
use crate::rng::SimRng;

#[derive(Debug, Clone)]
pub struct PunishEstimator {
    arms: usize,
    players: usize,
    offset: usize,
    factor: f64,
    states: Vec<MultPrecisionState>,
    stopped: Vec<bool>,
    remaining: usize,
    probs: Option<Vec<f64>>,
    estimation_rounds: u64,
}

impl PunishEstimator {
    /// `factor` is gamma (homogeneous) or alpha (semi-heterogeneous); it
    /// must lie in (0, 1).
    pub fn new(arms: usize, players: usize, factor: f64, log_t: f64, offset: usize) -> Self {
        let delta = punishment_precision(factor);
        PunishEstimator {
            arms,
            players: players.max(2),
            offset,
            factor,
            states: vec![MultPrecisionState::new(delta, log_t); arms],
            stopped: vec![false; arms],
            remaining: arms,
            probs: None,
            estimation_rounds: 0,
        }
    }

    pub fn act(&mut self, t: u64, rng: &mut SimRng) -> usize {
        match &self.probs {
            None => ((t + self.offset as u64) % self.arms as u64) as usize,
            Some(p) => sample_index(p, rng),
        }
    }

    pub fn observe(&mut self, obs: &Observation) {
        if self.probs.is_some() {
            return;
        }
        self.estimation_rounds += 1;
        let k = obs.arm;
        if let Some(x) = obs.value {
            if !self.stopped[k] && self.states[k].push(x) {
                self.stopped[k] = true;
                self.remaining -= 1;
            }
        }
        if self.remaining == 0 {
            let est: Vec<f64> = self.states.iter().map(|s| s.mean).collect();
            let out = punishment_probs(&est, self.players, self.factor)
                .expect("validated punishment inputs");
            self.probs = Some(out.probs);
        }
    }

    pub fn estimating(&self) -> bool {
        self.probs.is_none()
    }

    pub fn estimation_rounds(&self) -> u64 {
        self.estimation_rounds
    }

    /// Sampling distribution, once estimation ended.
    pub fn probs(&self) -> Option<&[f64]> {
        self.probs.as_deref()
    }

    pub fn estimates(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.mean).collect()
    }
}

//! Selfish-robust algorithm for statistic sensing: estimate M from per-arm
//! collision frequencies, draw ranks by musical chairs behind two waiting
//! rooms, then play the shifted kl-UCB round robin over the empirical top M.

use std::any::Any;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{players_from_collision_rate, ranking, ArmStats};
use crate::env::Observation;
use crate::error::{Error, Result};
use crate::math::{bernoulli_kl, explo_budget};
use crate::player::{Phase, Player};
use crate::rng::SimRng;

pub const GAMMA1: f64 = 13.0 / 14.0;
pub const GAMMA2: f64 = 16.0 / 15.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatisticConfig {
    pub beta: f64,
}

impl Default for StatisticConfig {
    fn default() -> Self {
        StatisticConfig { beta: 39.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    EstimatingM,
    WaitRoom1 { until: u64 },
    GettingRank { until: u64 },
    WaitRoom2 { until: u64 },
    Exploring,
    Fallback,
}

/// `M̂ = 1 + round(log(1 - mean_k p̂_k) / log(1 - 1/K))`, clamped to [1, K].
pub fn estimate_m_finalize(observed: &[u64], collided: &[u64]) -> Result<usize> {
    if observed.contains(&0) {
        return Err(Error::domain("an arm has no collision observation"));
    }
    let k = observed.len();
    let rate = observed
        .iter()
        .zip(collided)
        .map(|(&n, &c)| c as f64 / n as f64)
        .sum::<f64>()
        / k as f64;
    Ok(players_from_collision_rate(rate, k).0)
}

/// One ExploOne decision. `top` is the empirical top-M̂ sorted by arm index,
/// `worst` its member with the lowest mean, `candidates` the arms to explore.
pub fn explo_one_arm(
    t: u64,
    rank: usize,
    top: &[usize],
    worst: usize,
    candidates: &[usize],
    rng: &mut impl Rng,
) -> usize {
    let slot = ((t + rank as u64) % top.len() as u64) as usize;
    let arm = top[slot];
    if arm != worst || candidates.is_empty() || rng.gen::<bool>() {
        arm
    } else {
        candidates[rng.gen_range(0..candidates.len())]
    }
}

pub struct SelfishRobustMmab {
    arms: usize,
    log_t: f64,
    beta: f64,
    n_target: f64,
    stage: Stage,
    t_m: u64,
    m_hat: usize,
    clamped: bool,
    rank: Option<usize>,
    observed: Vec<u64>,
    collided: Vec<u64>,
    stats: ArmStats,
    top: Vec<usize>,
    worst: usize,
    candidates: Vec<usize>,
    refreshed: bool,
    rank_target: Option<usize>,
    rng: SimRng,
}

impl SelfishRobustMmab {
    pub fn new(arms: usize, horizon: u64, config: StatisticConfig, rng: SimRng) -> Self {
        let log_t = (horizon as f64).ln();
        let k = arms as f64;
        SelfishRobustMmab {
            arms,
            log_t,
            beta: config.beta,
            n_target: config.beta * config.beta * k * k * log_t,
            stage: Stage::EstimatingM,
            t_m: 0,
            m_hat: 0,
            clamped: false,
            rank: None,
            observed: vec![0; arms],
            collided: vec![0; arms],
            stats: ArmStats::new(arms),
            top: Vec::new(),
            worst: 0,
            candidates: Vec::new(),
            refreshed: false,
            rank_target: None,
            rng,
        }
    }

    /// Selfish variant that always tries `target` during rank attribution.
    pub fn with_rank_target(mut self, target: usize) -> Self {
        self.rank_target = Some(target);
        self
    }

    pub fn stage(&self) -> Stage {
        self.stage
    }

    pub fn estimation_rounds(&self) -> u64 {
        self.t_m
    }

    pub fn estimate_clamped(&self) -> bool {
        self.clamped
    }

    pub fn stats(&self) -> &ArmStats {
        &self.stats
    }

    pub fn collision_counts(&self) -> (&[u64], &[u64]) {
        (&self.observed, &self.collided)
    }

    fn bb_kk(&self) -> f64 {
        self.beta * self.beta * (self.arms * self.arms) as f64
    }

    fn advance_stage(&mut self, t: u64) {
        loop {
            self.stage = match self.stage {
                Stage::WaitRoom1 { until } if t >= until => {
                    let len = (self.t_m as f64 / (GAMMA1 * self.bb_kk())).ceil() as u64;
                    Stage::GettingRank { until: t + len }
                }
                Stage::GettingRank { until } if t >= until => match self.rank {
                    None => {
                        log::debug!("no rank after musical chairs, falling back to uniform play");
                        Stage::Fallback
                    }
                    Some(_) => {
                        let c = GAMMA2 / (GAMMA1 * GAMMA1 * self.bb_kk())
                            + GAMMA2 * GAMMA2 / (GAMMA1 * GAMMA1);
                        Stage::WaitRoom2 {
                            until: ((c * self.t_m as f64).ceil() as u64).max(t),
                        }
                    }
                },
                Stage::WaitRoom2 { until } if t >= until => Stage::Exploring,
                _ => return,
            };
        }
    }

    fn refresh(&mut self, t: u64) {
        let means = self.stats.means();
        let order = ranking(&means);
        let m = self.m_hat;
        self.worst = order[m - 1];
        self.top = order[..m].to_vec();
        self.top.sort_unstable();
        let threshold = means[self.worst];
        let budget = explo_budget(t + 1);
        self.candidates.clear();
        for &k in &order[m..] {
            let n = self.stats.pulls[k];
            // b_k >= threshold  <=>  n kl(mean_k, threshold) <= f(t), kl being increasing above the mean
            let optimistic = n == 0
                || means[k] >= threshold
                || n as f64 * bernoulli_kl(means[k], threshold).unwrap_or(f64::INFINITY) <= budget;
            if optimistic {
                self.candidates.push(k);
            }
        }
        self.candidates.sort_unstable();
        self.refreshed = true;
    }

    /// Empirical top-M̂ (sorted by index), its worst member and the current
    /// exploration set.
    pub fn explo_state(&self) -> (&[usize], usize, &[usize]) {
        (&self.top, self.worst, &self.candidates)
    }
}

impl Player for SelfishRobustMmab {
    fn act(&mut self, t: u64) -> usize {
        self.advance_stage(t);
        match self.stage {
            Stage::EstimatingM | Stage::WaitRoom1 { .. } | Stage::Fallback => {
                self.rng.gen_range(0..self.arms)
            }
            Stage::GettingRank { .. } => match (self.rank, self.rank_target) {
                (Some(r), _) => r,
                (None, Some(target)) => target.min(self.m_hat - 1),
                (None, None) => self.rng.gen_range(0..self.m_hat),
            },
            Stage::WaitRoom2 { .. } => self
                .rank
                .expect("rank fixed before the second waiting room"),
            Stage::Exploring => {
                if !self.refreshed || t.is_multiple_of(self.m_hat as u64) {
                    self.refresh(t);
                }
                let rank = self.rank.expect("rank fixed before exploration");
                explo_one_arm(
                    t,
                    rank,
                    &self.top,
                    self.worst,
                    &self.candidates,
                    &mut self.rng,
                )
            }
        }
    }

    fn observe(&mut self, obs: &Observation) {
        let Some(x) = obs.value else { return };
        self.stats.push(obs.arm, x);
        match self.stage {
            Stage::EstimatingM => {
                if let Some(c) = obs.collision {
                    self.observed[obs.arm] += 1;
                    self.collided[obs.arm] += c as u64;
                }
                self.t_m += 1;
                let min = *self.observed.iter().min().expect("at least one arm");
                if min as f64 >= self.n_target {
                    let rate = self
                        .observed
                        .iter()
                        .zip(&self.collided)
                        .map(|(&n, &c)| c as f64 / n as f64)
                        .sum::<f64>()
                        / self.arms as f64;
                    let (m, clamped) = players_from_collision_rate(rate, self.arms);
                    if clamped {
                        log::debug!("player-count estimate clamped to {m}");
                    }
                    self.m_hat = m;
                    self.clamped = clamped;
                    let until = (GAMMA2 / GAMMA1 * self.t_m as f64).ceil() as u64;
                    self.stage = Stage::WaitRoom1 { until };
                }
            }
            Stage::GettingRank { .. } if self.rank.is_none() && obs.reward > 0.0 => {
                self.rank = Some(obs.arm);
            }
            _ => {}
        }
    }

    fn phase(&self) -> Phase {
        match self.stage {
            Stage::EstimatingM | Stage::GettingRank { .. } => Phase::Init,
            Stage::WaitRoom1 { .. } | Stage::WaitRoom2 { .. } => Phase::WaitRoom,
            Stage::Exploring => Phase::Explore,
            Stage::Fallback => Phase::Fallback,
        }
    }

    fn rank(&self) -> Option<usize> {
        self.rank
    }

    fn estimated_players(&self) -> Option<usize> {
        (self.m_hat > 0).then_some(self.m_hat)
    }

    fn as_any(&self) -> &dyn Any {
        self
    }
}

impl SelfishRobustMmab {
    pub fn log_t(&self) -> f64 {
        self.log_t
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::player_rng;

    #[test]
    fn finalize_examples() {
        // K = 10, p = 1 - 0.9^2 on every arm
        let observed = vec![10_000u64; 10];
        let collided = vec![1_900u64; 10];
        assert_eq!(estimate_m_finalize(&observed, &collided).unwrap(), 3);
        assert_eq!(estimate_m_finalize(&observed, &[0; 10]).unwrap(), 1);
        assert!(estimate_m_finalize(&[0, 3], &[0, 0]).is_err());
    }

    #[test]
    fn explo_one_slot_formula() {
        let mut rng = player_rng(0, 0);
        // t = 0, rank 1 (second player), M = 3: slot 1
        assert_eq!(explo_one_arm(0, 1, &[2, 4, 7], 2, &[], &mut rng), 4);
        for t in 0..30 {
            let a = explo_one_arm(t, 0, &[2, 4, 7], 7, &[], &mut rng);
            assert_eq!(a, [2, 4, 7][(t % 3) as usize]);
        }
    }

    #[test]
    fn shifted_round_robin_is_collision_free() {
        let mut rng = player_rng(0, 0);
        let top = [0, 3, 5, 6];
        for t in 0..40u64 {
            let mut arms: Vec<usize> = (0..4)
                .map(|r| explo_one_arm(t, r, &top, 99, &[1], &mut rng))
                .collect();
            arms.sort_unstable();
            arms.dedup();
            assert_eq!(arms.len(), 4);
        }
    }
}

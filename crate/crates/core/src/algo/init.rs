//! Full-sensing initialization: estimate M from the collision frequency of
//! uniform play, then musical chairs over the first M̂ arms.

use rand::Rng;

use super::players_from_collision_rate;
use crate::env::Observation;
use crate::rng::SimRng;

#[derive(Debug, Clone)]
pub struct FullSensingInit {
    arms: usize,
    est_rounds: u64,
    rank_rounds: u64,
    elapsed: u64,
    n_coll: u64,
    m_hat: Option<usize>,
    rank: Option<usize>,
    clamped: bool,
    /// Selfish override: always try this rank instead of a uniform one.
    rank_target: Option<usize>,
}

impl FullSensingInit {
    pub fn new(arms: usize, horizon: u64, rank_target: Option<usize>) -> Self {
        let (est_rounds, rank_rounds) = Self::durations(arms, horizon);
        FullSensingInit {
            arms,
            est_rounds,
            rank_rounds,
            elapsed: 0,
            n_coll: 0,
            m_hat: None,
            rank: None,
            clamped: false,
            rank_target,
        }
    }

    /// `(ceil(12 e K^2 log T), ceil(K log T))`.
    pub fn durations(arms: usize, horizon: u64) -> (u64, u64) {
        let log_t = (horizon as f64).ln();
        let k = arms as f64;
        let est = (12.0 * std::f64::consts::E * k * k * log_t).ceil() as u64;
        let rank = (k * log_t).ceil() as u64;
        (est, rank)
    }

    pub fn duration(&self) -> u64 {
        self.est_rounds + self.rank_rounds
    }

    pub fn act(&mut self, rng: &mut SimRng) -> usize {
        if self.elapsed < self.est_rounds {
            return rng.gen_range(0..self.arms);
        }
        let m_hat = self.m_hat.expect("estimate fixed after the first stage");
        match (self.rank, self.rank_target) {
            (Some(r), _) => r,
            (None, Some(target)) => target.min(m_hat - 1),
            (None, None) => rng.gen_range(0..m_hat),
        }
    }

    pub fn observe(&mut self, obs: &Observation) {
        let collision = obs.collision.unwrap_or(false);
        if self.elapsed < self.est_rounds {
            self.n_coll += collision as u64;
            if self.elapsed + 1 == self.est_rounds {
                let rate = self.n_coll as f64 / self.est_rounds as f64;
                let (m, clamped) = players_from_collision_rate(rate, self.arms);
                if clamped {
                    log::debug!("player-count estimate clamped to {m} (collision rate {rate})");
                }
                self.m_hat = Some(m);
                self.clamped = clamped;
            }
        } else if self.rank.is_none() && !collision {
            self.rank = Some(obs.arm);
        }
        self.elapsed += 1;
    }

    pub fn finished(&self) -> bool {
        self.elapsed >= self.duration()
    }

    pub fn estimating(&self) -> bool {
        self.elapsed < self.est_rounds
    }

    pub fn m_hat(&self) -> Option<usize> {
        self.m_hat
    }

    pub fn rank(&self) -> Option<usize> {
        self.rank
    }

    pub fn estimate_clamped(&self) -> bool {
        self.clamped
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn durations_match_formula() {
        // 12 e 25 ln(1e5) = 9388.61, 5 ln(1e5) = 57.56
        assert_eq!(FullSensingInit::durations(5, 100_000), (9389, 58));
    }

    #[test]
    fn lone_player_estimates_one() {
        let mut init = FullSensingInit::new(3, 1000, None);
        let mut rng = crate::rng::player_rng(0, 0);
        let mut t = 0;
        while !init.finished() {
            let arm = init.act(&mut rng);
            init.observe(&Observation {
                t,
                arm,
                value: Some(1.0),
                collision: Some(false),
                reward: 1.0,
            });
            t += 1;
        }
        assert_eq!(init.m_hat(), Some(1));
        assert_eq!(init.rank(), Some(0));
    }
}

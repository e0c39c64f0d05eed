//! Synchronous collision environment.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sensing {
    /// Arm value and collision bit are always observed.
    Full,
    /// Arm value is observed; the collision bit only when the value is positive.
    Statistic,
    /// Only the reward is observed.
    None,
}

impl std::str::FromStr for Sensing {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Sensing::Full),
            "statistic" => Ok(Sensing::Statistic),
            "none" => Ok(Sensing::None),
            _ => Err(Error::config("sensing", format!("unknown regime {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum ArmDistribution {
    Bernoulli,
    /// Support {0, 1/2, 1} with the requested mean. `spread` in [0, 1] moves
    /// mass onto 1/2, so that `P(X > 0) = mu + spread * min(mu, 1 - mu)`.
    ThreePoint {
        spread: f64,
    },
}

impl ArmDistribution {
    pub fn sample<R: Rng + ?Sized>(&self, mu: f64, rng: &mut R) -> f64 {
        let u: f64 = rng.gen();
        match *self {
            ArmDistribution::Bernoulli => {
                if u < mu {
                    1.0
                } else {
                    0.0
                }
            }
            ArmDistribution::ThreePoint { spread } => {
                let half = spread * (2.0 * mu).min(2.0 * (1.0 - mu));
                let one = mu - half / 2.0;
                if u < one {
                    1.0
                } else if u < one + half {
                    0.5
                } else {
                    0.0
                }
            }
        }
    }

    /// `P(X > 0)` for an arm of mean `mu`.
    pub fn positive_prob(&self, mu: f64) -> f64 {
        match *self {
            ArmDistribution::Bernoulli => mu,
            ArmDistribution::ThreePoint { spread } => mu + spread * mu.min(1.0 - mu),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Means {
    Homogeneous(Vec<f64>),
    Heterogeneous {
        /// `matrix[j][k]` is player j's mean on arm k.
        matrix: Vec<Vec<f64>>,
        delta: f64,
        /// Common base vector certifying delta-heterogeneity.
        base: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvModel {
    pub arms: usize,
    pub players: usize,
    pub horizon: u64,
    pub means: Means,
    pub distribution: ArmDistribution,
    pub sensing: Sensing,
}

/// One player's feedback for one round.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub t: u64,
    pub arm: usize,
    pub value: Option<f64>,
    pub collision: Option<bool>,
    pub reward: f64,
}

/// Joint outcome of one round. Buffers are reused across rounds.
#[derive(Debug, Clone, Default)]
pub struct RoundTrace {
    pub t: u64,
    pub actions: Vec<usize>,
    /// Whether player j's arm was shared this round.
    pub collided: Vec<bool>,
    pub rewards: Vec<f64>,
    /// `mu^j_{a_j} * (1 - eta)`, the quantity pseudo-regret is built from.
    pub expected: Vec<f64>,
    /// Arm draws: K values (homogeneous) or M*K row-major (heterogeneous).
    pub draws: Vec<f64>,
    load: Vec<u32>,
}

impl RoundTrace {
    pub fn new(env: &EnvModel) -> Self {
        let m = env.players;
        RoundTrace {
            t: 0,
            actions: vec![0; m],
            collided: vec![false; m],
            rewards: vec![0.0; m],
            expected: vec![0.0; m],
            draws: vec![0.0; env.draw_count()],
            load: vec![0; env.arms],
        }
    }

    /// Number of players on `arm` this round.
    pub fn load(&self, arm: usize) -> u32 {
        self.load[arm]
    }
}

fn check_unit(name: &str, x: f64) -> Result<()> {
    if (0.0..=1.0).contains(&x) {
        Ok(())
    } else {
        Err(Error::config(name, format!("mean {x} is not in [0, 1]")))
    }
}

impl EnvModel {
    pub fn homogeneous(
        means: Vec<f64>,
        players: usize,
        horizon: u64,
        sensing: Sensing,
    ) -> Result<Self> {
        let arms = means.len();
        Self::check_shape(arms, players, horizon)?;
        for &mu in &means {
            check_unit("means", mu)?;
        }
        let mut sorted = means.clone();
        sorted.sort_by(f64::total_cmp);
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            log::warn!("arm means are not pairwise distinct: {means:?}");
        }
        Ok(EnvModel {
            arms,
            players,
            horizon,
            means: Means::Homogeneous(means),
            distribution: ArmDistribution::Bernoulli,
            sensing,
        })
    }

    /// Full mean matrix, validated against the delta-heterogeneity condition.
    /// The base is the midpoint of the feasible interval for each arm.
    pub fn heterogeneous(
        matrix: Vec<Vec<f64>>,
        delta: f64,
        horizon: u64,
        sensing: Sensing,
    ) -> Result<Self> {
        if !(0.0..1.0).contains(&delta) {
            return Err(Error::config("delta", format!("{delta} is not in [0, 1)")));
        }
        let players = matrix.len();
        let arms = matrix.first().map_or(0, Vec::len);
        Self::check_shape(arms, players, horizon)?;
        if matrix.iter().any(|row| row.len() != arms) {
            return Err(Error::config(
                "means",
                "rows of the mean matrix differ in length",
            ));
        }
        let mut base = Vec::with_capacity(arms);
        for k in 0..arms {
            let mut lo: f64 = 0.0;
            let mut hi = f64::INFINITY;
            for row in &matrix {
                check_unit("means", row[k])?;
                lo = lo.max(row[k] / (1.0 + delta));
                hi = hi.min(row[k] / (1.0 - delta));
            }
            if lo > hi * (1.0 + 1e-12) {
                return Err(Error::config(
                    "means",
                    format!("arm {k} is not {delta}-heterogeneous: no base in [{lo}, {hi}]"),
                ));
            }
            base.push(0.5 * (lo + hi.max(lo)));
        }
        Ok(EnvModel {
            arms,
            players,
            horizon,
            means: Means::Heterogeneous {
                matrix,
                delta,
                base,
            },
            distribution: ArmDistribution::Bernoulli,
            sensing,
        })
    }

    /// Heterogeneous instance from a base vector and per-entry multipliers in
    /// `[1 - delta, 1 + delta]`; entries are clipped to [0, 1].
    pub fn from_base(
        base: &[f64],
        multipliers: &[Vec<f64>],
        delta: f64,
        horizon: u64,
        sensing: Sensing,
    ) -> Result<Self> {
        let mut matrix = Vec::with_capacity(multipliers.len());
        for row in multipliers {
            if row.len() != base.len() {
                return Err(Error::config(
                    "multipliers",
                    "row length differs from base length",
                ));
            }
            let mut out = Vec::with_capacity(base.len());
            for (&b, &c) in base.iter().zip(row) {
                if c < 1.0 - delta - 1e-12 || c > 1.0 + delta + 1e-12 {
                    return Err(Error::config(
                        "multipliers",
                        format!("{c} outside [1 - delta, 1 + delta]"),
                    ));
                }
                out.push((b * c).clamp(0.0, 1.0));
            }
            matrix.push(out);
        }
        Self::heterogeneous(matrix, delta, horizon, sensing)
    }

    pub fn with_distribution(mut self, distribution: ArmDistribution) -> Result<Self> {
        if let ArmDistribution::ThreePoint { spread } = distribution {
            if !(0.0..=1.0).contains(&spread) {
                return Err(Error::config(
                    "distribution",
                    format!("spread {spread} is not in [0, 1]"),
                ));
            }
        }
        self.distribution = distribution;
        Ok(self)
    }

    fn check_shape(arms: usize, players: usize, horizon: u64) -> Result<()> {
        if arms == 0 {
            return Err(Error::config("K", "need at least one arm"));
        }
        if players == 0 || players > arms {
            return Err(Error::config(
                "M",
                format!("need 1 <= M <= K, got M = {players}, K = {arms}"),
            ));
        }
        if horizon == 0 {
            return Err(Error::config("T", "horizon must be positive"));
        }
        Ok(())
    }

    pub fn is_homogeneous(&self) -> bool {
        matches!(self.means, Means::Homogeneous(_))
    }

    pub fn delta(&self) -> f64 {
        match &self.means {
            Means::Homogeneous(_) => 0.0,
            Means::Heterogeneous { delta, .. } => *delta,
        }
    }

    pub fn mean(&self, player: usize, arm: usize) -> f64 {
        match &self.means {
            Means::Homogeneous(mu) => mu[arm],
            Means::Heterogeneous { matrix, .. } => matrix[player][arm],
        }
    }

    /// Mean vector seen by `player`.
    pub fn player_means(&self, player: usize) -> &[f64] {
        match &self.means {
            Means::Homogeneous(mu) => mu,
            Means::Heterogeneous { matrix, .. } => &matrix[player],
        }
    }

    /// Sum of the M largest means (homogeneous optimal welfare per round).
    pub fn top_m_sum(&self) -> f64 {
        let mut mu = self.player_means(0).to_vec();
        mu.sort_by(|a, b| b.total_cmp(a));
        mu[..self.players].iter().sum()
    }

    fn draw_count(&self) -> usize {
        match self.means {
            Means::Homogeneous(_) => self.arms,
            Means::Heterogeneous { .. } => self.arms * self.players,
        }
    }

    /// Plays one round. Fills `trace` and `obs` (one entry per player).
    pub fn step<R: Rng + ?Sized>(
        &self,
        t: u64,
        actions: &[usize],
        rng: &mut R,
        trace: &mut RoundTrace,
        obs: &mut Vec<Observation>,
    ) -> Result<()> {
        if t >= self.horizon {
            return Err(Error::HorizonExhausted(self.horizon));
        }
        if actions.len() != self.players {
            return Err(Error::config(
                "actions",
                format!("expected {} actions", self.players),
            ));
        }
        for (player, &arm) in actions.iter().enumerate() {
            if arm >= self.arms {
                return Err(Error::ProtocolViolation {
                    player,
                    arm,
                    arms: self.arms,
                });
            }
        }
        // every value is drawn each round so that paired runs share draws
        match &self.means {
            Means::Homogeneous(mu) => {
                for (x, &m) in trace.draws.iter_mut().zip(mu) {
                    *x = self.distribution.sample(m, rng);
                }
            }
            Means::Heterogeneous { matrix, .. } => {
                for (x, &m) in trace.draws.iter_mut().zip(matrix.iter().flatten()) {
                    *x = self.distribution.sample(m, rng);
                }
            }
        }
        trace.t = t;
        trace.load.iter_mut().for_each(|c| *c = 0);
        for &arm in actions {
            trace.load[arm] += 1;
        }
        obs.clear();
        let homogeneous = self.is_homogeneous();
        for (j, &arm) in actions.iter().enumerate() {
            let collision = trace.load[arm] > 1;
            let x = if homogeneous {
                trace.draws[arm]
            } else {
                trace.draws[j * self.arms + arm]
            };
            let reward = if collision { 0.0 } else { x };
            trace.actions[j] = arm;
            trace.collided[j] = collision;
            trace.rewards[j] = reward;
            trace.expected[j] = if collision { 0.0 } else { self.mean(j, arm) };
            let (value, eta) = match self.sensing {
                Sensing::Full => (Some(x), Some(collision)),
                Sensing::Statistic => (Some(x), if x > 0.0 { Some(collision) } else { None }),
                Sensing::None => (None, None),
            };
            obs.push(Observation {
                t,
                arm,
                value,
                collision: eta,
                reward,
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::env_rng;

    fn run_one(env: &EnvModel, actions: &[usize], seed: u64) -> (RoundTrace, Vec<Observation>) {
        let mut trace = RoundTrace::new(env);
        let mut obs = Vec::new();
        env.step(0, actions, &mut env_rng(seed), &mut trace, &mut obs)
            .unwrap();
        (trace, obs)
    }

    #[test]
    fn shared_arm_collides() {
        let env = EnvModel::homogeneous(vec![0.1, 0.2, 1.0, 0.4], 2, 10, Sensing::Full).unwrap();
        let (trace, obs) = run_one(&env, &[2, 2], 1);
        assert_eq!(trace.load(2), 2);
        for o in &obs {
            assert_eq!(o.reward, 0.0);
            assert_eq!(o.collision, Some(true));
            assert_eq!(o.value, Some(1.0));
        }
    }

    #[test]
    fn certain_arm_pays_one() {
        let env = EnvModel::homogeneous(vec![0.3, 1.0], 1, 10, Sensing::Full).unwrap();
        let (_, obs) = run_one(&env, &[1], 3);
        assert_eq!(obs[0].reward, 1.0);
        assert_eq!(obs[0].collision, Some(false));
    }

    #[test]
    fn statistic_sensing_hides_eta_on_zero_draw() {
        let env = EnvModel::homogeneous(vec![0.0, 0.5], 1, 10, Sensing::Statistic).unwrap();
        let (_, obs) = run_one(&env, &[0], 3);
        assert_eq!(obs[0].value, Some(0.0));
        assert_eq!(obs[0].collision, None);
        assert_eq!(obs[0].reward, 0.0);
    }

    #[test]
    fn no_sensing_reports_reward_only() {
        let env = EnvModel::homogeneous(vec![1.0, 0.5], 1, 10, Sensing::None).unwrap();
        let (_, obs) = run_one(&env, &[0], 3);
        assert_eq!(obs[0].value, None);
        assert_eq!(obs[0].collision, None);
        assert_eq!(obs[0].reward, 1.0);
    }

    #[test]
    fn out_of_range_action_names_player() {
        let env = EnvModel::homogeneous(vec![0.3, 0.6], 2, 10, Sensing::Full).unwrap();
        let mut trace = RoundTrace::new(&env);
        let mut obs = Vec::new();
        let err = env
            .step(0, &[0, 5], &mut env_rng(0), &mut trace, &mut obs)
            .unwrap_err();
        assert!(matches!(
            err,
            Error::ProtocolViolation {
                player: 1,
                arm: 5,
                arms: 2
            }
        ));
        assert!(env
            .step(10, &[0, 1], &mut env_rng(0), &mut trace, &mut obs)
            .is_err());
    }

    #[test]
    fn validation() {
        assert!(EnvModel::homogeneous(vec![0.3], 2, 10, Sensing::Full).is_err());
        assert!(EnvModel::homogeneous(vec![1.3, 0.2], 1, 10, Sensing::Full).is_err());
        assert!(EnvModel::homogeneous(vec![0.3, 0.3], 1, 10, Sensing::Full).is_ok());
        let ok = EnvModel::heterogeneous(
            vec![vec![0.5, 0.2], vec![0.55, 0.19]],
            0.1,
            10,
            Sensing::Full,
        );
        assert!(ok.is_ok());
        let bad =
            EnvModel::heterogeneous(vec![vec![0.5, 0.2], vec![0.9, 0.2]], 0.1, 10, Sensing::Full);
        assert!(bad.is_err());
        let env = EnvModel::from_base(
            &[0.5, 0.2],
            &[vec![1.1, 0.9], vec![0.9, 1.0]],
            0.1,
            10,
            Sensing::Full,
        )
        .unwrap();
        if let Means::Heterogeneous { matrix, base, .. } = &env.means {
            for row in matrix {
                for (k, &x) in row.iter().enumerate() {
                    assert!(x >= 0.9 * base[k] - 1e-12 && x <= 1.1 * base[k] + 1e-12);
                }
            }
        }
        assert!(EnvModel::from_base(&[0.5], &[vec![1.3]], 0.1, 10, Sensing::Full).is_err());
    }

    #[test]
    fn three_point_has_requested_mean_and_extra_positive_mass() {
        let d = ArmDistribution::ThreePoint { spread: 0.8 };
        let mu = 0.3;
        let mut rng = env_rng(9);
        let n = 200_000;
        let mut sum = 0.0;
        let mut positive = 0;
        for _ in 0..n {
            let x = d.sample(mu, &mut rng);
            assert!(x == 0.0 || x == 0.5 || x == 1.0);
            sum += x;
            positive += (x > 0.0) as u32;
        }
        let mean = sum / n as f64;
        assert!((mean - mu).abs() < 4.0 * (0.25 / n as f64).sqrt());
        let alpha = d.positive_prob(mu);
        assert!(alpha > mu);
        let frac = positive as f64 / n as f64;
        assert!((frac - alpha).abs() < 4.0 * (0.25 / n as f64).sqrt());
    }

    #[test]
    fn uncontested_arm_mean_concentrates() {
        let mu = 0.37;
        let env = EnvModel::homogeneous(vec![mu, 0.5], 1, 20_000, Sensing::Full).unwrap();
        let mut rng = env_rng(17);
        let mut trace = RoundTrace::new(&env);
        let mut obs = Vec::new();
        let n = 10_000;
        let mut total = 0.0;
        for t in 0..n {
            env.step(t, &[0], &mut rng, &mut trace, &mut obs).unwrap();
            total += obs[0].reward;
        }
        let mean = total / n as f64;
        assert!((mean - mu).abs() <= 4.0 * (mu * (1.0 - mu) / n as f64).sqrt());
    }
}

//! Regret accounting and the serial-dictatorship benchmark.

use itertools::Itertools;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::{EnvModel, RoundTrace};
use crate::error::{Error, Result};
use crate::player::Phase;
use crate::sim::RoundObserver;

/// Rounds (as counts `t = 1..=T`) at which cumulative values are recorded.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Checkpoints {
    /// `1, 2, 4, ...` and `T`.
    #[default]
    Pow2,
    /// `n` evenly spaced rounds ending at `T`.
    Linear(u64),
    List(Vec<u64>),
}

impl Checkpoints {
    pub fn rounds(&self, horizon: u64) -> Vec<u64> {
        let mut out: Vec<u64> = match self {
            Checkpoints::Pow2 => {
                let mut v: Vec<u64> = std::iter::successors(Some(1u64), |&x| x.checked_mul(2))
                    .take_while(|&x| x <= horizon)
                    .collect();
                v.push(horizon);
                v
            }
            Checkpoints::Linear(n) => {
                let n = (*n).max(1);
                (1..=n).map(|i| (horizon * i / n).max(1)).collect()
            }
            Checkpoints::List(v) => v
                .iter()
                .copied()
                .filter(|&t| t >= 1 && t <= horizon)
                .collect(),
        };
        out.sort_unstable();
        out.dedup();
        out
    }
}

impl std::str::FromStr for Checkpoints {
    type Err = Error;

    /// `pow2`, `linear:N` or a comma-separated list of rounds.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "pow2" {
            return Ok(Checkpoints::Pow2);
        }
        if let Some(n) = s.strip_prefix("linear:") {
            return n
                .parse()
                .map(Checkpoints::Linear)
                .map_err(|_| Error::config("checkpoints", format!("bad count {n:?}")));
        }
        s.split(',')
            .map(|x| x.trim().parse::<u64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map(Checkpoints::List)
            .map_err(|_| Error::config("checkpoints", format!("cannot parse {s:?}")))
    }
}

/// Cumulative values after `t` rounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointRow {
    pub t: u64,
    pub cum_regret: f64,
    /// Per player: sum of `mu^j_{a_j} (1 - eta)`.
    pub expected: Vec<f64>,
    /// Per player realized reward.
    pub rewards: Vec<f64>,
    pub phases: Vec<Phase>,
}

/// Phase change of one player.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseEvent {
    pub t: u64,
    pub player: usize,
    pub phase: Phase,
}

/// Streams a run into checkpoint rows. Regret is measured against a
/// per-round `baseline`: the top-M sum for homogeneous instances, the
/// serial-dictatorship welfare for heterogeneous ones.
#[derive(Debug, Clone)]
pub struct RegretRecorder {
    baseline: f64,
    checkpoints: Vec<u64>,
    next: usize,
    rounds: u64,
    expected: Vec<f64>,
    rewards: Vec<f64>,
    last_phases: Vec<Option<Phase>>,
    pub rows: Vec<CheckpointRow>,
    pub events: Vec<PhaseEvent>,
    /// Most negative per-round regret seen (0 if none).
    pub min_round_regret: f64,
}

impl RegretRecorder {
    pub fn new(players: usize, baseline: f64, checkpoints: Vec<u64>) -> Self {
        RegretRecorder {
            baseline,
            checkpoints,
            next: 0,
            rounds: 0,
            expected: vec![0.0; players],
            rewards: vec![0.0; players],
            last_phases: vec![None; players],
            rows: Vec::new(),
            events: Vec::new(),
            min_round_regret: 0.0,
        }
    }

    pub fn for_env(env: &EnvModel, baseline: f64, checkpoints: &Checkpoints) -> Self {
        Self::new(env.players, baseline, checkpoints.rounds(env.horizon))
    }

    pub fn baseline(&self) -> f64 {
        self.baseline
    }

    pub fn rounds(&self) -> u64 {
        self.rounds
    }

    pub fn expected(&self) -> &[f64] {
        &self.expected
    }

    pub fn rewards(&self) -> &[f64] {
        &self.rewards
    }

    pub fn cum_regret(&self) -> f64 {
        self.rounds as f64 * self.baseline - self.expected.iter().sum::<f64>()
    }
}

impl RoundObserver for RegretRecorder {
    fn on_round(&mut self, trace: &RoundTrace, phases: &[Phase]) {
        let mut total = 0.0;
        for (j, (&e, &r)) in trace.expected.iter().zip(&trace.rewards).enumerate() {
            self.expected[j] += e;
            self.rewards[j] += r;
            total += e;
        }
        self.min_round_regret = self.min_round_regret.min(self.baseline - total);
        for (j, &p) in phases.iter().enumerate() {
            if self.last_phases[j] != Some(p) {
                self.last_phases[j] = Some(p);
                self.events.push(PhaseEvent {
                    t: trace.t,
                    player: j,
                    phase: p,
                });
            }
        }
        self.rounds += 1;
        while self.next < self.checkpoints.len() && self.checkpoints[self.next] <= self.rounds {
            if self.checkpoints[self.next] == self.rounds {
                self.rows.push(CheckpointRow {
                    t: self.rounds,
                    cum_regret: self.cum_regret(),
                    expected: self.expected.clone(),
                    rewards: self.rewards.clone(),
                    phases: phases.to_vec(),
                });
            }
            self.next += 1;
        }
    }
}

/// Arms a dictator may pick from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChoiceSet {
    /// Every arm not yet taken.
    #[default]
    AllArms,
    /// Only arms `0..M`.
    FirstM,
}

/// Arm of each player when dictators pick in `order` (ties by lowest arm).
pub fn serial_dictatorship(means: &[Vec<f64>], order: &[usize], choice: ChoiceSet) -> Vec<usize> {
    let m = means.len();
    let arms = means.first().map_or(0, Vec::len);
    let limit = match choice {
        ChoiceSet::AllArms => arms,
        ChoiceSet::FirstM => m.min(arms),
    };
    let mut taken = vec![false; arms];
    let mut out = vec![usize::MAX; m];
    for &d in order {
        let mut best: Option<usize> = None;
        for k in (0..limit).filter(|&k| !taken[k]) {
            if best.is_none_or(|b| means[d][k] > means[d][b]) {
                best = Some(k);
            }
        }
        if let Some(k) = best {
            taken[k] = true;
            out[d] = k;
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum BenchmarkMethod {
    Exact,
    MonteCarlo { samples: u64 },
}

/// Expected welfare of serial dictatorship under a uniform order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RsdBenchmark {
    pub welfare: f64,
    pub utilities: Vec<f64>,
    pub method: BenchmarkMethod,
    /// Standard error of `welfare` (0 for the exact method).
    pub stderr: f64,
}

fn utility(means: &[Vec<f64>], assign: &[usize], j: usize) -> f64 {
    assign
        .get(j)
        .and_then(|&k| means[j].get(k))
        .copied()
        .unwrap_or(0.0)
}

fn check_matrix(means: &[Vec<f64>]) -> Result<()> {
    let arms = means.first().map_or(0, Vec::len);
    if means.is_empty() || arms == 0 || means.iter().any(|r| r.len() != arms) {
        return Err(Error::config(
            "means",
            "expected a non-empty rectangular matrix",
        ));
    }
    if means.len() > arms {
        return Err(Error::config("means", "more players than arms"));
    }
    Ok(())
}

/// Averages over all `M!` orders; `M <= 8`.
pub fn rsd_welfare_exact(means: &[Vec<f64>], choice: ChoiceSet) -> Result<RsdBenchmark> {
    check_matrix(means)?;
    let m = means.len();
    if m > 8 {
        return Err(Error::config(
            "means",
            format!("exact benchmark limited to 8 players, got {m}"),
        ));
    }
    let mut utilities = vec![0.0; m];
    let mut count = 0u64;
    for order in (0..m).permutations(m) {
        let assign = serial_dictatorship(means, &order, choice);
        for (j, u) in utilities.iter_mut().enumerate() {
            *u += utility(means, &assign, j);
        }
        count += 1;
    }
    utilities.iter_mut().for_each(|u| *u /= count as f64);
    Ok(RsdBenchmark {
        welfare: utilities.iter().sum(),
        utilities,
        method: BenchmarkMethod::Exact,
        stderr: 0.0,
    })
}

/// Monte Carlo estimate over `samples` uniform orders.
pub fn rsd_welfare_mc<R: Rng + ?Sized>(
    means: &[Vec<f64>],
    choice: ChoiceSet,
    samples: u64,
    rng: &mut R,
) -> Result<RsdBenchmark> {
    check_matrix(means)?;
    if samples < 2 {
        return Err(Error::config("samples", "need at least two samples"));
    }
    let m = means.len();
    let mut order: Vec<usize> = (0..m).collect();
    let mut utilities = vec![0.0; m];
    let (mut sum, mut sumsq) = (0.0, 0.0);
    for _ in 0..samples {
        order.shuffle(rng);
        let assign = serial_dictatorship(means, &order, choice);
        let mut w = 0.0;
        for (j, u) in utilities.iter_mut().enumerate() {
            let x = utility(means, &assign, j);
            *u += x;
            w += x;
        }
        sum += w;
        sumsq += w * w;
    }
    let n = samples as f64;
    let mean = sum / n;
    let var = ((sumsq - n * mean * mean) / (n - 1.0)).max(0.0);
    utilities.iter_mut().for_each(|u| *u /= n);
    Ok(RsdBenchmark {
        welfare: mean,
        utilities,
        method: BenchmarkMethod::MonteCarlo { samples },
        stderr: (var / n).sqrt(),
    })
}

/// Per-round regret baseline of an instance: top-M sum (homogeneous) or the
/// exact serial-dictatorship welfare (heterogeneous, Monte Carlo above 8 players).
pub fn baseline(env: &EnvModel, choice: ChoiceSet) -> Result<f64> {
    if env.is_homogeneous() {
        return Ok(env.top_m_sum());
    }
    let means: Vec<Vec<f64>> = (0..env.players)
        .map(|j| env.player_means(j).to_vec())
        .collect();
    if env.players <= 8 {
        Ok(rsd_welfare_exact(&means, choice)?.welfare)
    } else {
        let mut rng = crate::rng::aux_rng(0, 0);
        Ok(rsd_welfare_mc(&means, choice, 200_000, &mut rng)?.welfare)
    }
}

/// `max_j |r_j - mean| / mean`, 0 when the mean is 0.
pub fn fairness_gap(rewards: &[f64]) -> f64 {
    if rewards.is_empty() {
        return 0.0;
    }
    let mean = rewards.iter().sum::<f64>() / rewards.len() as f64;
    if mean == 0.0 {
        return 0.0;
    }
    rewards
        .iter()
        .map(|r| (r - mean).abs() / mean)
        .fold(0.0, f64::max)
}

/// Mean and unbiased standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn pow2_schedule() {
        assert_eq!(Checkpoints::Pow2.rounds(10), vec![1, 2, 4, 8, 10]);
        assert_eq!(Checkpoints::Pow2.rounds(8), vec![1, 2, 4, 8]);
        assert_eq!(Checkpoints::Linear(4).rounds(10), vec![2, 5, 7, 10]);
        assert_eq!("pow2".parse::<Checkpoints>().unwrap(), Checkpoints::Pow2);
        assert_eq!("3, 1".parse::<Checkpoints>().unwrap().rounds(5), vec![1, 3]);
    }

    #[test]
    fn two_player_conflict_benchmark() {
        // both want arm 0; second choices differ
        let means = vec![vec![0.9, 0.5, 0.1], vec![0.8, 0.1, 0.6]];
        assert_eq!(
            serial_dictatorship(&means, &[0, 1], ChoiceSet::AllArms),
            vec![0, 2]
        );
        assert_eq!(
            serial_dictatorship(&means, &[1, 0], ChoiceSet::AllArms),
            vec![1, 0]
        );
        let b = rsd_welfare_exact(&means, ChoiceSet::AllArms).unwrap();
        assert_abs_diff_eq!(
            b.welfare,
            ((0.9 + 0.6) + (0.5 + 0.8)) / 2.0,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(b.utilities[0], 0.7, epsilon = 1e-12);
        let first_m = rsd_welfare_exact(&means, ChoiceSet::FirstM).unwrap();
        assert_abs_diff_eq!(
            first_m.welfare,
            ((0.9 + 0.1) + (0.5 + 0.8)) / 2.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn identical_preferences_give_top_sum() {
        let row = vec![0.2, 0.9, 0.4, 0.7];
        let means = vec![row.clone(), row.clone(), row];
        let b = rsd_welfare_exact(&means, ChoiceSet::AllArms).unwrap();
        assert_abs_diff_eq!(b.welfare, 2.0, epsilon = 1e-12);
        for u in b.utilities {
            assert_abs_diff_eq!(u, 2.0 / 3.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn fairness_and_moments() {
        assert_abs_diff_eq!(fairness_gap(&[1.0, 1.0, 1.3]), 0.2 / 1.1, epsilon = 1e-12);
        let (m, s) = mean_std(&[1.0, 2.0, 3.0]);
        assert_eq!((m, s), (2.0, 1.0));
    }
}

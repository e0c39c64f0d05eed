//! Acceptance suite: thirteen end-to-end checks with fixed seeds, shared by
//! the `acceptance` test target and `mmab bench`.

use std::fmt;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use crate::adversary::AdversarySpec;
use crate::algo::rsdgt::rsd_attribution;
use crate::algo::statistic::Stage as MmabStage;
use crate::algo::{Algo, FullSensingInit, PunishEstimator, RsdGtPlayer, SelfishRobustMmab};
use crate::commproto::{receive_value, send_value_schedule, BackAndForth, BitMessage};
use crate::env::{ArmDistribution, EnvModel, Observation, RoundTrace, Sensing};
use crate::error::Result;
use crate::harness::{build_team, run_one, RunConfig, Seeds};
use crate::math::{
    bernoulli_kl, explo_budget, homogeneous_gamma, klucb_index, mult_precision_n0,
    punishment_probs, semi_heterogeneous_alpha, trimmed_mean, MultPrecisionState,
};
use crate::metrics::{
    baseline, mean_std, rsd_welfare_exact, rsd_welfare_mc, Checkpoints, ChoiceSet,
};
use crate::player::{Phase, Player};
use crate::rng::{aux_rng, env_rng, player_rng, SimRng};
use crate::sim::{run, run_rounds, RoundObserver};

/// Result of one criterion.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub id: u8,
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.pass { "PASS" } else { "FAIL" };
        write!(
            f,
            "{verdict} [{:>2}] {}: {}",
            self.id, self.name, self.detail
        )
    }
}

pub const NAMES: [&str; 13] = [
    "punishment simplex bound",
    "communication soundness",
    "trimmed-mean sandwich",
    "player-count estimation",
    "kl-ucb residual",
    "multiplicative precision",
    "logarithmic regret scaling",
    "zero cooperative collisions",
    "rsd correctness",
    "punishment effectiveness",
    "deviation gains",
    "rsd-gt false punishments",
    "rank-rigging neutrality",
];

fn outcome(id: u8, pass: bool, detail: String) -> Outcome {
    Outcome {
        id,
        name: NAMES[id as usize - 1],
        pass,
        detail,
    }
}

/// Runs criterion `id` (1 to 13). Simulation errors count as failures.
pub fn criterion(id: u8) -> Outcome {
    let res = match id {
        1 => Ok(punishment_simplex()),
        2 => communication_soundness(),
        3 => trimmed_sandwich(),
        4 => player_count_estimation(),
        5 => klucb_residual(),
        6 => Ok(mult_precision()),
        7 => log_regret_scaling(),
        8 => cooperative_collisions(),
        9 => rsd_correctness(),
        10 => punishment_effectiveness(),
        11 => deviation_gains(),
        12 => false_punishments(),
        13 => rank_rigging(),
        _ => panic!("no criterion {id}"),
    };
    res.unwrap_or_else(|e| outcome(id, false, format!("error: {e}")))
}

pub fn all() -> Vec<Outcome> {
    (1..=13).map(criterion).collect()
}

// Instances shared by several criteria.

/// Homogeneous, K = 5, M = 3: top three well apart from the rest.
const HOMOGENEOUS: &str = "0.9,0.85,0.8,0.2,0.1";
/// K = 6, M = 3, delta = 0.08: players 0 and 2 prefer arm 0, player 1 arm 1.
const RSD_MATRIX: &str = "0.91375,0.78625,0.55,0.4,0.25,0.1;\
                          0.78625,0.91375,0.55,0.4,0.25,0.1;\
                          0.91375,0.78625,0.55,0.4,0.25,0.1";
const RSD_DELTA: f64 = 0.08;
/// Exploration constant of the statistic-sensing algorithm in the
/// simulation criteria; the default is far too slow for these horizons.
const MMAB_BETA: f64 = 1.0;

fn config(algo: Algo, arms: usize, players: usize, horizon: u64, means: &str) -> RunConfig {
    RunConfig {
        algo,
        arms,
        players,
        horizon,
        means: means.to_string(),
        delta: if algo == Algo::RsdGt { RSD_DELTA } else { 0.0 },
        sensing: None,
        adversary: None,
        seeds: Seeds::default(),
        checkpoints: Checkpoints::List(vec![horizon]),
        out: None,
        beta: (algo == Algo::SelfishRobustMmab).then_some(MMAB_BETA),
        choice_set: ChoiceSet::default(),
        distribution: ArmDistribution::Bernoulli,
    }
}

fn homogeneous_cfg(algo: Algo, horizon: u64) -> RunConfig {
    config(algo, 5, 3, horizon, HOMOGENEOUS)
}

fn rsd_cfg(horizon: u64) -> RunConfig {
    config(Algo::RsdGt, 6, 3, horizon, RSD_MATRIX)
}

fn median(xs: &mut [f64]) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

fn seeds(n: u64) -> Vec<u64> {
    (0..n).collect()
}

fn punishment_simplex() -> Outcome {
    let start = Instant::now();
    let mut rng = aux_rng(1, 0);
    let mut worst: f64 = 0.0;
    let mut over = 0;
    for _ in 0..100_000 {
        let k = rng.gen_range(2..=50);
        let m = rng.gen_range(2..=k);
        let means: Vec<f64> = (0..k).map(|_| rng.gen_range(0.0..=1.0)).collect();
        let raw = punishment_probs(&means, m, homogeneous_gamma(k, m))
            .expect("valid instance")
            .raw;
        let s: f64 = raw.iter().sum();
        worst = worst.max(s);
        if s > 1.0 + 1e-12 {
            over += 1;
        }
    }
    let mut eq_err: f64 = 0.0;
    for k in 2..=50usize {
        for m in 2..=k {
            for mu in [0.05, 0.5, 1.0] {
                let raw = punishment_probs(&vec![mu; k], m, homogeneous_gamma(k, m))
                    .expect("valid")
                    .raw;
                for p in raw {
                    eq_err = eq_err.max((p - 1.0 / k as f64).abs());
                }
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = over == 0 && eq_err <= 1e-12 && secs < 5.0;
    outcome(
        1,
        pass,
        format!(
            "max raw sum {worst:.15}, {over} above 1, equal-means error {eq_err:.1e}, {secs:.2}s"
        ),
    )
}

/// Back-and-forth between two players while a third one jams: `fwd` and
/// `back` are bitmasks of the forward and echo rounds it collides on.
fn jammed_exchange(msg: &BitMessage, fwd: u32, back: u32) -> (bool, BitMessage) {
    let len = msg.len();
    let (sa, ra) = (0, 1);
    let mut s = BackAndForth::sender(msg, sa, ra);
    let mut r = BackAndForth::receiver(len, ra, sa);
    for n in 0..2 * len {
        let (a_s, a_r) = (s.arm(), r.arm());
        let jam = if n < len {
            (fwd >> n) & 1 == 1
        } else {
            (back >> (n - len)) & 1 == 1
        };
        let jam_arm = if n < len { ra } else { sa };
        let load =
            |arm: usize| (a_s == arm) as u32 + (a_r == arm) as u32 + (jam && jam_arm == arm) as u32;
        let (c_s, c_r) = (load(a_s) > 1, load(a_r) > 1);
        s.feed(c_s);
        r.feed(c_r);
    }
    let out = s.outcome().expect("exchange finished");
    (out.corrupted, r.received().expect("forward leg finished"))
}

fn communication_soundness() -> Result<Outcome> {
    let start = Instant::now();
    let mut roundtrip_err = 0;
    let mut values = 0u64;
    for p in 0..=10u32 {
        let scale = (p as f64).exp2();
        for i in 0..=(1u64 << p) {
            let v = i as f64 / scale;
            let sched = send_value_schedule(0, 1, p, v)?;
            let bits: Vec<bool> = sched.iter().map(|&a| a == 1).collect();
            values += 1;
            if receive_value(&bits) != v {
                roundtrip_err += 1;
            }
        }
    }
    let (mut patterns, mut missed, mut false_alarms) = (0u64, 0u64, 0u64);
    for len in 1..=8usize {
        let p = len as u32 - 1;
        let scale = (p as f64).exp2();
        for i in 0..=(1u64 << p) {
            let msg = BitMessage::encode(i as f64 / scale, p)?;
            let zeros = msg
                .bits()
                .iter()
                .enumerate()
                .filter(|(_, &b)| !b)
                .fold(0u32, |m, (n, _)| m | 1 << n);
            for fwd in 0..(1u32 << len) {
                // the receiver echoes the ones it decoded: original bits plus forward flips
                let echo_zeros = zeros & !fwd;
                for back in 0..(1u32 << len) {
                    let flipped = (fwd & zeros) != 0 || (back & echo_zeros) != 0;
                    let (detected, _) = jammed_exchange(&msg, fwd, back);
                    patterns += 1;
                    match (flipped, detected) {
                        (true, false) => missed += 1,
                        (false, true) => false_alarms += 1,
                        _ => {}
                    }
                }
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = roundtrip_err == 0 && missed == 0 && false_alarms == 0 && secs < 10.0;
    Ok(outcome(
        2,
        pass,
        format!(
            "{values} values round-tripped ({roundtrip_err} errors), {patterns} jam patterns: \
             {missed} undetected flips, {false_alarms} false alarms, {secs:.2}s"
        ),
    ))
}

fn trimmed_sandwich() -> Result<Outcome> {
    let mut rng = aux_rng(3, 0);
    let mut violations = 0;
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        let n = rng.gen_range(2..=9);
        let honest: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..=1.0)).collect();
        let lo_h = honest.iter().copied().fold(f64::INFINITY, f64::min);
        let hi_h = honest.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let adv = match rng.gen_range(0..5) {
            0 => 0.0,
            1 => 1.0,
            2 => lo_h,
            3 => hi_h,
            _ => rng.gen_range(0.0..=1.0),
        };
        let mut all = honest.clone();
        all.insert(rng.gen_range(0..=n), adv);
        let tm = trimmed_mean(&all)?;
        let total: f64 = honest.iter().sum();
        let loo: Vec<f64> = honest
            .iter()
            .map(|x| (total - x) / (n - 1) as f64)
            .collect();
        let lo = loo.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = loo.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let excess = (lo - tm).max(tm - hi).max(0.0);
        worst = worst.max(excess);
        // only summation-order rounding is tolerated
        if excess > 1e-12 {
            violations += 1;
        }
    }
    Ok(outcome(
        3,
        violations == 0,
        format!(
            "10000 vectors, {violations} outside the leave-one-out range, worst excess {worst:.1e}"
        ),
    ))
}

/// Wraps the full-sensing initialization as a player.
struct InitOnly {
    init: FullSensingInit,
    rng: SimRng,
}

impl Player for InitOnly {
    fn act(&mut self, _t: u64) -> usize {
        self.init.act(&mut self.rng)
    }
    fn observe(&mut self, obs: &Observation) {
        self.init.observe(obs);
    }
    fn phase(&self) -> Phase {
        Phase::Init
    }
    fn rank(&self) -> Option<usize> {
        self.init.rank()
    }
    fn estimated_players(&self) -> Option<usize> {
        self.init.m_hat()
    }
    fn as_any(&self) -> &dyn std::any::Any {
        self
    }
}

fn init_correct(players: &[Box<dyn Player>], m: usize) -> bool {
    let mut ranks: Vec<Option<usize>> = players.iter().map(|p| p.rank()).collect();
    ranks.sort();
    ranks.dedup();
    players.iter().all(|p| p.estimated_players() == Some(m))
        && ranks.len() == m
        && ranks.iter().all(Option::is_some)
}

fn player_count_estimation() -> Result<Outcome> {
    const SEEDS: u64 = 200;
    const T: u64 = 100_000;
    let mut pass = true;
    let mut parts = Vec::new();
    for m in [2usize, 3, 5] {
        let env = EnvModel::homogeneous(vec![0.9, 0.8, 0.7, 0.6, 0.5], m, T, Sensing::Full)?;
        let ok = seeds(SEEDS)
            .into_par_iter()
            .map(|seed| -> Result<bool> {
                let mut players: Vec<Box<dyn Player>> = (0..m)
                    .map(|j| {
                        Box::new(InitOnly {
                            init: FullSensingInit::new(5, T, None),
                            rng: player_rng(seed, j),
                        }) as Box<dyn Player>
                    })
                    .collect();
                let rounds = FullSensingInit::durations(5, T);
                run_rounds(
                    &env,
                    &mut players,
                    &mut env_rng(seed),
                    0,
                    rounds.0 + rounds.1,
                    &mut [],
                )?;
                Ok(init_correct(&players, m))
            })
            .collect::<Result<Vec<bool>>>()?
            .into_iter()
            .filter(|&b| b)
            .count();
        pass &= ok as f64 >= 0.99 * SEEDS as f64;
        parts.push(format!("full M={m}: {ok}/{SEEDS}"));
    }
    // statistic sensing, reduced exploration constant
    let beta = 5.0;
    for m in [2usize, 3, 5] {
        let env = EnvModel::homogeneous(vec![0.9, 0.8, 0.7, 0.6, 0.5], m, T, Sensing::Statistic)?;
        let ok = seeds(SEEDS)
            .into_par_iter()
            .map(|seed| -> Result<bool> {
                let cfg = crate::algo::statistic::StatisticConfig { beta };
                let mut players: Vec<Box<dyn Player>> = (0..m)
                    .map(|j| {
                        Box::new(SelfishRobustMmab::new(5, T, cfg, player_rng(seed, j)))
                            as Box<dyn Player>
                    })
                    .collect();
                let mut rng = env_rng(seed);
                let mut t = 0;
                while t < T {
                    run_rounds(&env, &mut players, &mut rng, t, t + 1000, &mut [])?;
                    t += 1000;
                    let settled = players.iter().all(|p| {
                        let s = p
                            .as_any()
                            .downcast_ref::<SelfishRobustMmab>()
                            .expect("mmab player")
                            .stage();
                        matches!(
                            s,
                            MmabStage::WaitRoom2 { .. }
                                | MmabStage::Exploring
                                | MmabStage::Fallback
                        )
                    });
                    if settled {
                        break;
                    }
                }
                Ok(init_correct(&players, m))
            })
            .collect::<Result<Vec<bool>>>()?
            .into_iter()
            .filter(|&b| b)
            .count();
        pass &= ok as f64 >= 0.99 * SEEDS as f64;
        parts.push(format!("statistic beta={beta} M={m}: {ok}/{SEEDS}"));
    }
    Ok(outcome(4, pass, parts.join(", ")))
}

fn klucb_residual() -> Result<Outcome> {
    let mut rng = aux_rng(5, 0);
    let (mut checked, mut bad, mut at_limit) = (0, 0, 0);
    let mut worst: f64 = 0.0;
    for _ in 0..100_000 {
        // empirical means of Bernoulli samples
        let pulls = rng.gen_range(1..=100_000u64);
        let mean = rng.gen_range(0..=pulls) as f64 / pulls as f64;
        let t = rng.gen_range(1..=100_000u64);
        let budget = explo_budget(t);
        let b = klucb_index(mean, pulls, budget);
        if b < 1.0 {
            checked += 1;
            let r = (pulls as f64 * bernoulli_kl(mean, b)? - budget).abs();
            worst = worst.max(r);
            if r > 1e-6 {
                bad += 1;
                // is b still the best double, i.e. does the next one overshoot?
                let next = f64::from_bits(b.to_bits() + 1);
                if pulls as f64 * bernoulli_kl(mean, next)? > budget {
                    at_limit += 1;
                }
            }
        }
    }
    Ok(outcome(
        5,
        bad == 0,
        format!(
            "{checked} queries with b < 1, {bad} residuals above 1e-6 ({at_limit} of them at the last \
             double before the root), worst {worst:.1e}"
        ),
    ))
}

fn mult_precision() -> Outcome {
    const DELTA: f64 = 0.1;
    let log_t = (1e4f64).ln();
    let mut pass = true;
    let mut parts = Vec::new();
    for mu in [0.1, 0.5, 0.9] {
        let n0 = mult_precision_n0(DELTA, mu, log_t);
        let ok = (0..1000u64)
            .into_par_iter()
            .filter(|&seed| {
                let mut rng = aux_rng(seed, 6);
                let mut s = MultPrecisionState::new(DELTA, log_t);
                loop {
                    let x = if rng.gen::<f64>() < mu { 1.0 } else { 0.0 };
                    if s.push(x) {
                        break;
                    }
                    if s.n > n0 {
                        return false;
                    }
                }
                (1.0 - DELTA) * s.mean < mu && mu < (1.0 + DELTA) * s.mean
            })
            .count();
        pass &= ok >= 990;
        parts.push(format!("mu={mu}: {ok}/1000 (n0={n0})"));
    }
    outcome(6, pass, format!("delta={DELTA}, {}", parts.join(", ")))
}

fn log_regret_scaling() -> Result<Outcome> {
    const SEEDS: u64 = 50;
    let means = "0.9,0.8,0.5,0.4,0.3";
    let mut pass = true;
    let mut parts = Vec::new();
    for algo in [Algo::SelfishRobustMmab, Algo::SicGt] {
        let mut med = Vec::new();
        for horizon in [1u64 << 14, 1 << 16] {
            let cfg = config(algo, 5, 2, horizon, means);
            let env = cfg.build_env()?;
            let base = baseline(&env, cfg.choice_set)?;
            let mut xs = seeds(SEEDS)
                .into_par_iter()
                .map(|seed| {
                    Ok(run_one(&cfg, &env, 0, seed, base)?.last().cum_regret
                        / (horizon as f64).ln())
                })
                .collect::<Result<Vec<f64>>>()?;
            med.push(median(&mut xs));
        }
        let ratio = med[1] / med[0];
        pass &= (0.5..=2.0).contains(&ratio);
        parts.push(format!(
            "{algo}: R/logT {:.1} -> {:.1} (x{ratio:.2})",
            med[0], med[1]
        ));
    }
    Ok(outcome(7, pass, parts.join(", ")))
}

/// Counts pairs of players colliding while both are in a phase where the
/// protocol schedules them on distinct arms.
struct CollisionCounter {
    same_phase_only: bool,
    count: u64,
}

impl RoundObserver for CollisionCounter {
    fn on_round(&mut self, trace: &RoundTrace, phases: &[Phase]) {
        let quiet = |p: Phase| matches!(p, Phase::Explore | Phase::Exploit);
        for i in 0..phases.len() {
            for j in i + 1..phases.len() {
                let both = quiet(phases[i]) && quiet(phases[j]);
                let paired = !self.same_phase_only || phases[i] == phases[j];
                if both && paired && trace.actions[i] == trace.actions[j] {
                    self.count += 1;
                }
            }
        }
    }
}

fn cooperative_collisions() -> Result<Outcome> {
    const SEEDS: u64 = 50;
    let mut parts = Vec::new();
    let mut pass = true;
    // RSD-GT explorers sweep across the exploiters' arms by design; only
    // explore-explore and exploit-exploit pairs are scheduled apart there.
    for (cfg, same_phase_only) in [
        (homogeneous_cfg(Algo::SicGt, 100_000), false),
        (rsd_cfg(100_000), true),
    ] {
        let env = cfg.build_env()?;
        let counts = seeds(SEEDS)
            .into_par_iter()
            .map(|seed| -> Result<(u64, bool)> {
                let mut players = build_team(&cfg, &env, seed)?;
                let mut counter = CollisionCounter {
                    same_phase_only,
                    count: 0,
                };
                run(&env, &mut players, &mut env_rng(seed), &mut [&mut counter])?;
                let reached = players
                    .iter()
                    .all(|p| p.phase() == Phase::Exploit || p.phase() == Phase::Inspect);
                Ok((counter.count, reached))
            })
            .collect::<Result<Vec<_>>>()?;
        let total: u64 = counts.iter().map(|c| c.0).sum();
        let exploiting = counts.iter().filter(|c| c.1).count();
        pass &= total == 0;
        parts.push(format!(
            "{}: {total} collisions, {exploiting}/{SEEDS} runs end exploiting",
            cfg.algo
        ));
    }
    Ok(outcome(8, pass, parts.join(", ")))
}

/// Serial dictatorship over `order`, each player taking the first free arm
/// of her list.
fn dictatorship_oracle(prefs: &[Vec<usize>], order: &[usize], arms: usize) -> Vec<usize> {
    let mut taken = vec![false; arms];
    let mut out = vec![usize::MAX; prefs.len()];
    for &d in order {
        for &a in &prefs[d] {
            if !taken[a] {
                taken[a] = true;
                out[d] = a;
                break;
            }
        }
    }
    out
}

fn rsd_correctness() -> Result<Outcome> {
    let mut rng = aux_rng(9, 0);
    let (mut checks, mut mismatches) = (0u64, 0u64);
    for _ in 0..1000 {
        let m = rng.gen_range(1..=6);
        let arms = rng.gen_range(m + 1..=m + 4);
        let prefs: Vec<Vec<usize>> = (0..m)
            .map(|_| {
                let mut all: Vec<usize> = (0..arms).collect();
                all.shuffle(&mut rng);
                all.truncate(m);
                all
            })
            .collect();
        for order in itertools::Itertools::permutations(0..m, m) {
            // put the order's dictators at ranks 0..m, so block 0 plays it
            let relabeled: Vec<Option<Vec<usize>>> =
                order.iter().map(|&d| Some(prefs[d].clone())).collect();
            let got = rsd_attribution(&relabeled, 0, arms)?;
            let want = dictatorship_oracle(&prefs, &order, arms);
            checks += 1;
            if order
                .iter()
                .enumerate()
                .any(|(s, &d)| got.arms[s] != Some(want[d]))
            {
                mismatches += 1;
            }
        }
    }
    let mut worst_z: f64 = 0.0;
    for i in 0..5u64 {
        let mut r = aux_rng(9, 1 + i);
        let (m, arms) = (4, 6);
        // shared base plus individual noise, so that players compete
        let base: Vec<f64> = (0..arms).map(|_| r.gen_range(0.2..0.8)).collect();
        let means: Vec<Vec<f64>> = (0..m)
            .map(|_| base.iter().map(|b| b + r.gen_range(-0.15..0.15)).collect())
            .collect();
        let exact = rsd_welfare_exact(&means, ChoiceSet::AllArms)?;
        let mc = rsd_welfare_mc(&means, ChoiceSet::AllArms, 1_000_000, &mut r)?;
        let diff = (exact.welfare - mc.welfare).abs();
        worst_z = worst_z.max(if mc.stderr > 1e-12 {
            diff / mc.stderr
        } else if diff < 1e-9 {
            0.0
        } else {
            f64::INFINITY
        });
    }
    let pass = mismatches == 0 && worst_z <= 3.0;
    Ok(outcome(
        9,
        pass,
        format!("{checks} (matrix, order) pairs, {mismatches} mismatches; exact vs 1e6-sample welfare worst |z| = {worst_z:.2}"),
    ))
}

/// Selfish reward rate after the punishers finish estimating, against an
/// omniscient best response to their sampling distributions. Returns
/// (mean, standard error).
fn punished_rate(env: &EnvModel, factor: f64, seed: u64, rounds: u64) -> Result<(f64, f64)> {
    let (k, m) = (env.arms, env.players);
    let log_t = (1e5f64).ln();
    let mut pes: Vec<PunishEstimator> = (1..m)
        .map(|i| PunishEstimator::new(k, m, factor, log_t, i))
        .collect();
    let mut rngs: Vec<SimRng> = (1..m).map(|j| player_rng(seed, j)).collect();
    let mut env_r = env_rng(seed);
    let own = env.player_means(0).to_vec();
    let best = crate::algo::argmax(&own);
    let mut trace = RoundTrace::new(env);
    let mut obs = Vec::new();
    let mut actions = vec![0; m];
    let (mut sum, mut sumsq, mut n) = (0.0, 0.0, 0u64);
    for t in 0..env.horizon {
        let sampling = pes.iter().all(|p| !p.estimating());
        actions[0] = if sampling {
            let gain: Vec<f64> = (0..k)
                .map(|a| {
                    own[a]
                        * pes
                            .iter()
                            .map(|p| 1.0 - p.probs().expect("sampling")[a])
                            .product::<f64>()
                })
                .collect();
            crate::algo::argmax(&gain)
        } else {
            best
        };
        for (i, (p, r)) in pes.iter_mut().zip(&mut rngs).enumerate() {
            actions[i + 1] = p.act(t, r);
        }
        env.step(t, &actions, &mut env_r, &mut trace, &mut obs)?;
        for (i, p) in pes.iter_mut().enumerate() {
            p.observe(&obs[i + 1]);
        }
        if sampling {
            let x = trace.rewards[0];
            sum += x;
            sumsq += x * x;
            n += 1;
            if n == rounds {
                break;
            }
        }
    }
    if n < 2 {
        return Err(crate::error::Error::domain(
            "punishers never finished estimating",
        ));
    }
    let mean = sum / n as f64;
    let var = (sumsq - n as f64 * mean * mean) / (n as f64 - 1.0);
    Ok((mean, (var / n as f64).sqrt()))
}

fn punishment_effectiveness() -> Result<Outcome> {
    const ROUNDS: u64 = 100_000;
    let (k, m) = (5usize, 3usize);
    let horizon = 5_000_000;
    let base = vec![0.9, 0.8, 0.7, 0.6, 0.5];
    let top_mean = |row: &[f64]| {
        let mut v = row.to_vec();
        v.sort_by(|a, b| b.total_cmp(a));
        v[..m].iter().sum::<f64>() / m as f64
    };
    let gamma = homogeneous_gamma(k, m);
    let homo = EnvModel::homogeneous(base.clone(), m, horizon, Sensing::Full)?;
    let delta = 0.05;
    let mut r = aux_rng(10, 0);
    let mult: Vec<Vec<f64>> = (0..m)
        .map(|_| {
            (0..k)
                .map(|_| r.gen_range(1.0 - delta..=1.0 + delta))
                .collect()
        })
        .collect();
    let hetero = EnvModel::from_base(&base, &mult, delta, horizon, Sensing::Full)?;
    let alpha = semi_heterogeneous_alpha(k, m, delta);
    let mut pass = true;
    let mut parts = Vec::new();
    for (label, env, factor) in [
        ("homogeneous", &homo, gamma),
        ("heterogeneous", &hetero, alpha),
    ] {
        let bound = (1.0 + factor) / 2.0 * top_mean(env.player_means(0));
        let rates = (0..5u64)
            .into_par_iter()
            .map(|seed| punished_rate(env, factor, seed, ROUNDS))
            .collect::<Result<Vec<_>>>()?;
        let worst = rates
            .iter()
            .map(|&(mu, se)| mu - 3.0 * se)
            .fold(f64::NEG_INFINITY, f64::max);
        let max_rate = rates.iter().map(|r| r.0).fold(f64::NEG_INFINITY, f64::max);
        pass &= worst <= bound;
        parts.push(format!(
            "{label}: best selfish rate {max_rate:.4} vs bound {bound:.4}"
        ));
    }
    Ok(outcome(10, pass, parts.join(", ")))
}

/// Per-player expected reward of one run.
fn expected_rewards(cfg: &RunConfig, env: &EnvModel, seed: u64) -> Result<Vec<f64>> {
    Ok(run_one(cfg, env, 0, seed, 0.0)?.last().expected.clone())
}

/// Mean over seeds of (selfish gain, worst cooperative loss, cooperative
/// baseline), all against the honest run with the same seed.
fn deviation_stats(cfg: &RunConfig, adv: &AdversarySpec, n: u64) -> Result<(f64, f64, f64)> {
    let env = cfg.build_env()?;
    let mut bad = cfg.clone();
    bad.adversary = Some(adv.clone());
    let per_seed = seeds(n)
        .into_par_iter()
        .map(|seed| -> Result<(Vec<f64>, Vec<f64>)> {
            Ok((
                expected_rewards(cfg, &env, seed)?,
                expected_rewards(&bad, &env, seed)?,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let m = cfg.players;
    let avg = |f: &dyn Fn(&Vec<f64>, &Vec<f64>) -> f64| {
        per_seed.iter().map(|(h, d)| f(h, d)).sum::<f64>() / n as f64
    };
    let gain = avg(&|h, d| d[0] - h[0]);
    let coop_loss = (1..m)
        .map(|j| avg(&|h, d| h[j] - d[j]))
        .fold(f64::NEG_INFINITY, f64::max);
    let coop_base = (1..m).map(|j| avg(&|h, _| h[j])).sum::<f64>() / (m - 1) as f64;
    Ok((gain, coop_loss, coop_base))
}

fn deviation_gains() -> Result<Outcome> {
    const SEEDS: u64 = 100;
    let matrix: Vec<(Algo, AdversarySpec)> = vec![
        (Algo::SelfishRobustMmab, AdversarySpec::BestArm),
        (Algo::SelfishRobustMmab, AdversarySpec::Greedy),
        (Algo::SelfishRobustMmab, AdversarySpec::Jammer { arm: 1 }),
        (Algo::SicGt, AdversarySpec::BestArm),
        (
            Algo::SicGt,
            AdversarySpec::StatLiar {
                arm: 4,
                values: [1.0, 0.0],
            },
        ),
        (
            Algo::SicGt,
            AdversarySpec::MessageCorruptor {
                phase: 1,
                transmission: 0,
                leg: 0,
                bit: 0,
            },
        ),
        (Algo::SicGt, AdversarySpec::Jammer { arm: 1 }),
        (Algo::RsdGt, AdversarySpec::BestArm),
        (
            Algo::RsdGt,
            AdversarySpec::PreferenceLiar {
                fake_means: vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.9],
                exploit_arm: Some(0),
            },
        ),
        (Algo::RsdGt, AdversarySpec::Jammer { arm: 1 }),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (algo, adv) in &matrix {
        let cfg_at = |horizon: u64| match algo {
            Algo::RsdGt => rsd_cfg(horizon),
            _ => homogeneous_cfg(*algo, horizon),
        };
        let (g4, _, _) = deviation_stats(&cfg_at(10_000), adv, SEEDS)?;
        let (g5, loss, coop_base) = deviation_stats(&cfg_at(100_000), adv, SEEDS)?;
        let sublinear = g5 <= 10.0 * g4.max(0.0);
        let grim = *algo != Algo::SelfishRobustMmab;
        let stable = !grim || loss < 0.05 * coop_base || -g5 >= 0.1 * loss;
        pass &= sublinear && stable;
        parts.push(format!(
            "{algo}/{}: gain {g4:.0} -> {g5:.0}, coop loss {loss:.0}{}",
            adv.name(),
            if sublinear && stable { "" } else { " FAIL" }
        ));
    }
    Ok(outcome(11, pass, parts.join("; ")))
}

fn false_punishments() -> Result<Outcome> {
    const SEEDS: u64 = 500;
    let cfg = rsd_cfg(100_000);
    let env = cfg.build_env()?;
    let punished = seeds(SEEDS)
        .into_par_iter()
        .map(|seed| Ok(run_one(&cfg, &env, 0, seed, 0.0)?.punish_round.is_some()))
        .collect::<Result<Vec<bool>>>()?
        .into_iter()
        .filter(|&b| b)
        .count();
    let rate = punished as f64 / SEEDS as f64;
    Ok(outcome(
        12,
        rate < 0.01,
        format!(
            "{punished}/{SEEDS} cooperative runs punished ({:.1}%)",
            100.0 * rate
        ),
    ))
}

/// Per-round expected reward of player 0 and the last round in which some
/// player was outside exploitation.
struct ExploitTracker {
    expected: Vec<f64>,
    last_other: Option<u64>,
}

impl RoundObserver for ExploitTracker {
    fn on_round(&mut self, trace: &RoundTrace, phases: &[Phase]) {
        self.expected.push(trace.expected[0]);
        if phases
            .iter()
            .any(|&p| !matches!(p, Phase::Exploit | Phase::Inspect))
        {
            self.last_other = Some(trace.t);
        }
    }
}

/// Player 0's mean utility over the whole superblocks of the final
/// exploitation stretch, if there is one.
fn exploitation_utility(cfg: &RunConfig, env: &EnvModel, seed: u64) -> Result<Option<f64>> {
    let mut players = build_team(cfg, env, seed)?;
    let mut tr = ExploitTracker {
        expected: Vec::with_capacity(env.horizon as usize),
        last_other: None,
    };
    run(env, &mut players, &mut env_rng(seed), &mut [&mut tr])?;
    let Some(p) = players[1].as_any().downcast_ref::<RsdGtPlayer>() else {
        return Ok(None);
    };
    let (start, block) = (p.start_round(), p.block_len());
    let first = tr.last_other.map_or(0, |t| t + 1).max(start);
    let aligned = start + (first - start).div_ceil(block) * block;
    let superblock = block * env.players as u64;
    let count = env.horizon.saturating_sub(aligned) / superblock;
    if count == 0 {
        return Ok(None);
    }
    let window = &tr.expected[aligned as usize..(aligned + count * superblock) as usize];
    Ok(Some(window.iter().sum::<f64>() / window.len() as f64))
}

fn rank_rigging() -> Result<Outcome> {
    const SEEDS: u64 = 500;
    let honest = rsd_cfg(100_000);
    let env = honest.build_env()?;
    let mut rigged = honest.clone();
    rigged.adversary = Some(AdversarySpec::RankRigger);
    let collect = |cfg: &RunConfig| -> Result<Vec<f64>> {
        Ok(seeds(SEEDS)
            .into_par_iter()
            .map(|seed| exploitation_utility(cfg, &env, seed))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .flatten()
            .collect())
    };
    let h = collect(&honest)?;
    let r = collect(&rigged)?;
    let (mh, sh) = mean_std(&h);
    let (mr, _) = mean_std(&r);
    let half = 1.96 * sh / (h.len() as f64).sqrt();
    let pass = h.len() >= 500 && r.len() >= 500 && (mr - mh).abs() <= half;
    Ok(outcome(
        13,
        pass,
        format!(
            "rigger {mr:.5} ({} runs) vs honest {mh:.5} +- {half:.5} ({} runs)",
            r.len(),
            h.len()
        ),
    ))
}

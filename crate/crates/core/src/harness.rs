//! Batch runner: configuration, seeded runs, CSV and JSON output.

use std::io::Write;
use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adversary::{honest_player, selfish_player, AdversarySpec, TeamParams};
use crate::algo::rsdgt::check_config;
use crate::algo::{Algo, StatisticConfig};
use crate::env::{ArmDistribution, EnvModel, Sensing};
use crate::error::{Error, Result};
use crate::metrics::{baseline, mean_std, CheckpointRow, Checkpoints, ChoiceSet, RegretRecorder};
use crate::player::Player;
use crate::rng::{aux_rng, env_rng, player_rng};
use crate::sim::run;

/// Seeds of a batch: an explicit list or `count` consecutive values from `base`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Seeds {
    List(Vec<u64>),
    Range { count: u64, base: u64 },
}

impl Default for Seeds {
    fn default() -> Self {
        Seeds::Range { count: 1, base: 0 }
    }
}

impl Seeds {
    pub fn values(&self) -> Vec<u64> {
        match self {
            Seeds::List(v) => v.clone(),
            Seeds::Range { count, base } => (0..*count).map(|i| base + i).collect(),
        }
    }
}

fn default_delta() -> f64 {
    0.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub algo: Algo,
    #[serde(rename = "K")]
    pub arms: usize,
    #[serde(rename = "M")]
    pub players: usize,
    #[serde(rename = "T")]
    pub horizon: u64,
    /// See [`parse_means`].
    pub means: String,
    #[serde(default = "default_delta")]
    pub delta: f64,
    /// Defaults to statistic sensing for selfish-robust-mmab, full otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sensing: Option<Sensing>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adversary: Option<AdversarySpec>,
    #[serde(default)]
    pub seeds: Seeds,
    #[serde(default)]
    pub checkpoints: Checkpoints,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default)]
    pub choice_set: ChoiceSet,
    #[serde(default = "default_distribution")]
    pub distribution: ArmDistribution,
}

fn default_distribution() -> ArmDistribution {
    ArmDistribution::Bernoulli
}

/// Parsed means specification.
#[derive(Debug, Clone, PartialEq)]
pub enum MeansSpec {
    List(Vec<f64>),
    Matrix(Vec<Vec<f64>>),
    UniformGaps { lo: f64, hi: f64 },
    Random { min_gap: f64, seed: u64 },
}

fn parse_floats(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|x| x.trim().parse::<f64>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|_| Error::config("means", format!("cannot parse {s:?} as numbers")))
}

/// `0.9,0.8,0.5` (one mean per arm), `0.9,0.5;0.8,0.6` (one row per
/// player), `gen:uniform-gaps[:lo=..,hi=..]` or `gen:random[:min_gap=..,seed=..]`.
pub fn parse_means(spec: &str) -> Result<MeansSpec> {
    let spec = spec.trim();
    if let Some(rest) = spec.strip_prefix("gen:") {
        let (kind, args) = rest.split_once(':').unwrap_or((rest, ""));
        let mut kv = std::collections::HashMap::new();
        for part in args.split(',').filter(|p| !p.trim().is_empty()) {
            let (k, v) = part.split_once('=').ok_or_else(|| {
                Error::config("means", format!("expected key=value, got {part:?}"))
            })?;
            kv.insert(k.trim().to_string(), v.trim().to_string());
        }
        let num = |key: &str, default: f64| -> Result<f64> {
            kv.get(key).map_or(Ok(default), |v| {
                v.parse()
                    .map_err(|_| Error::config("means", format!("bad {key}={v:?}")))
            })
        };
        return match kind {
            "uniform-gaps" => Ok(MeansSpec::UniformGaps {
                lo: num("lo", 0.1)?,
                hi: num("hi", 0.9)?,
            }),
            "random" => Ok(MeansSpec::Random {
                min_gap: num("min_gap", 0.05)?,
                seed: num("seed", 0.0)? as u64,
            }),
            other => Err(Error::config(
                "means",
                format!("unknown generator {other:?}"),
            )),
        };
    }
    if spec.contains(';') {
        return spec
            .split(';')
            .map(parse_floats)
            .collect::<Result<Vec<_>>>()
            .map(MeansSpec::Matrix);
    }
    parse_floats(spec).map(MeansSpec::List)
}

/// Means at least `min_gap` apart, drawn uniformly in [0.05, 0.95] by rejection.
pub fn random_means(arms: usize, min_gap: f64, seed: u64) -> Result<Vec<f64>> {
    if min_gap * (arms as f64 - 1.0) > 0.9 {
        return Err(Error::config(
            "means",
            format!("{arms} means cannot be {min_gap} apart in [0.05, 0.95]"),
        ));
    }
    let mut rng = aux_rng(seed, 1);
    for _ in 0..100_000 {
        let mut v: Vec<f64> = (0..arms).map(|_| rng.gen_range(0.05..0.95)).collect();
        v.sort_by(|a, b| b.total_cmp(a));
        if v.windows(2).all(|w| w[0] - w[1] >= min_gap) {
            return Ok(v);
        }
    }
    Err(Error::config(
        "means",
        format!("could not draw {arms} means with gap {min_gap}"),
    ))
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config("config", e.to_string()))
    }

    pub fn sensing(&self) -> Sensing {
        self.sensing.unwrap_or(match self.algo {
            Algo::SelfishRobustMmab => Sensing::Statistic,
            Algo::SicGt | Algo::RsdGt => Sensing::Full,
        })
    }

    pub fn statistic(&self) -> StatisticConfig {
        let mut c = StatisticConfig::default();
        if let Some(b) = self.beta {
            c.beta = b;
        }
        c
    }

    pub fn params(&self) -> TeamParams {
        TeamParams {
            algo: self.algo,
            statistic: self.statistic(),
        }
    }

    /// Builds the instance. With rsd-gt, `delta > 0` and a per-arm list, each
    /// player's means are the list times independent multipliers in
    /// `[1 - delta, 1 + delta]`.
    pub fn build_env(&self) -> Result<EnvModel> {
        let sensing = self.sensing();
        let per_arm = match parse_means(&self.means)? {
            MeansSpec::Matrix(matrix) => {
                if matrix.len() != self.players || matrix.iter().any(|r| r.len() != self.arms) {
                    return Err(Error::config(
                        "means",
                        format!("expected a {}x{} matrix", self.players, self.arms),
                    ));
                }
                let env = EnvModel::heterogeneous(matrix, self.delta, self.horizon, sensing)?;
                return env.with_distribution(self.distribution);
            }
            MeansSpec::List(v) => v,
            MeansSpec::UniformGaps { lo, hi } => {
                let k = self.arms;
                (0..k)
                    .map(|i| {
                        if k == 1 {
                            hi
                        } else {
                            hi - (hi - lo) * i as f64 / (k - 1) as f64
                        }
                    })
                    .collect()
            }
            MeansSpec::Random { min_gap, seed } => random_means(self.arms, min_gap, seed)?,
        };
        if per_arm.len() != self.arms {
            return Err(Error::config(
                "means",
                format!("expected {} means, got {}", self.arms, per_arm.len()),
            ));
        }
        let env = if self.algo == Algo::RsdGt && self.delta > 0.0 {
            let mut rng = aux_rng(0, 2);
            let mult: Vec<Vec<f64>> = (0..self.players)
                .map(|_| {
                    (0..self.arms)
                        .map(|_| rng.gen_range(1.0 - self.delta..=1.0 + self.delta))
                        .collect()
                })
                .collect();
            EnvModel::from_base(&per_arm, &mult, self.delta, self.horizon, sensing)?
        } else {
            EnvModel::homogeneous(per_arm, self.players, self.horizon, sensing)?
        };
        env.with_distribution(self.distribution)
    }

    pub fn validate(&self) -> Result<()> {
        if self.arms == 0 {
            return Err(Error::config("K", "need at least one arm"));
        }
        if self.players == 0 || self.players > self.arms {
            return Err(Error::config(
                "M",
                format!("need 1 <= M <= K, got M = {}", self.players),
            ));
        }
        if self.horizon == 0 {
            return Err(Error::config("T", "horizon must be positive"));
        }
        if self.seeds.values().is_empty() {
            return Err(Error::config("seeds", "no seed to run"));
        }
        if let Some(b) = self.beta {
            if b.is_nan() || b <= 0.0 {
                return Err(Error::config("beta", format!("{b} must be positive")));
            }
        }
        let sensing = self.sensing();
        match self.algo {
            Algo::SelfishRobustMmab if sensing == Sensing::None => {
                return Err(Error::config(
                    "sensing",
                    "selfish-robust-mmab needs statistic or full sensing",
                ));
            }
            Algo::SicGt | Algo::RsdGt if sensing != Sensing::Full => {
                return Err(Error::config(
                    "sensing",
                    format!("{} needs full sensing", self.algo),
                ));
            }
            Algo::RsdGt => check_config(self.arms, self.players, self.delta)?,
            _ => {}
        }
        if let Some(a) = &self.adversary {
            if !a.supports(self.algo) {
                return Err(Error::config(
                    "adversary",
                    format!("{} does not apply to {}", a.name(), self.algo),
                ));
            }
        }
        self.build_env().map(|_| ())
    }
}

/// Players of one run; the deviating player, if any, has index 0.
pub fn build_team(cfg: &RunConfig, env: &EnvModel, seed: u64) -> Result<Vec<Box<dyn Player>>> {
    let params = cfg.params();
    (0..env.players)
        .map(|j| match (&cfg.adversary, j) {
            (Some(spec), 0) => selfish_player(spec, params, env, 0, player_rng(seed, 0)),
            _ => honest_player(params, env, player_rng(seed, j)),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub run_id: usize,
    pub seed: u64,
    pub baseline: f64,
    pub rows: Vec<CheckpointRow>,
    /// First round at which a cooperative player started punishing.
    pub punish_round: Option<u64>,
}

impl RunResult {
    pub fn last(&self) -> &CheckpointRow {
        self.rows
            .last()
            .expect("the horizon is always a checkpoint")
    }
}

/// Runs one seed of `cfg`.
pub fn run_one(
    cfg: &RunConfig,
    env: &EnvModel,
    run_id: usize,
    seed: u64,
    base: f64,
) -> Result<RunResult> {
    let mut players = build_team(cfg, env, seed)?;
    let mut checkpoints = cfg.checkpoints.rounds(env.horizon);
    if checkpoints.last() != Some(&env.horizon) {
        checkpoints.push(env.horizon);
    }
    let mut rec = RegretRecorder::new(env.players, base, checkpoints);
    run(env, &mut players, &mut env_rng(seed), &mut [&mut rec])?;
    let first_coop = usize::from(cfg.adversary.is_some());
    let punish_round = players[first_coop..]
        .iter()
        .filter_map(|p| p.punished_at())
        .min();
    Ok(RunResult {
        run_id,
        seed,
        baseline: base,
        rows: rec.rows,
        punish_round,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    fn of(xs: &[f64]) -> Self {
        let (mean, std) = mean_std(xs);
        Stat { mean, std }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub algo: Algo,
    #[serde(rename = "K")]
    pub arms: usize,
    #[serde(rename = "M")]
    pub players: usize,
    #[serde(rename = "T")]
    pub horizon: u64,
    pub adversary: Option<String>,
    pub runs: usize,
    pub baseline: f64,
    pub final_regret: Stat,
    /// Per player total expected reward.
    pub expected_reward: Vec<Stat>,
    pub punish_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchResult {
    pub runs: Vec<RunResult>,
    pub summary: Summary,
}

/// Runs every seed, in parallel or not; the output does not depend on it.
pub fn run_batch_with(cfg: &RunConfig, parallel: bool) -> Result<BatchResult> {
    cfg.validate()?;
    let env = cfg.build_env()?;
    let base = baseline(&env, cfg.choice_set)?;
    let seeds = cfg.seeds.values();
    let job = |(i, &s): (usize, &u64)| run_one(cfg, &env, i, s, base);
    let mut runs: Vec<RunResult> = if parallel {
        seeds
            .par_iter()
            .enumerate()
            .map(job)
            .collect::<Result<_>>()?
    } else {
        seeds.iter().enumerate().map(job).collect::<Result<_>>()?
    };
    runs.sort_by_key(|r| r.run_id);
    let finals: Vec<f64> = runs.iter().map(|r| r.last().cum_regret).collect();
    let expected_reward = (0..env.players)
        .map(|j| {
            Stat::of(
                &runs
                    .iter()
                    .map(|r| r.last().expected[j])
                    .collect::<Vec<_>>(),
            )
        })
        .collect();
    let punished = runs.iter().filter(|r| r.punish_round.is_some()).count();
    let summary = Summary {
        algo: cfg.algo,
        arms: env.arms,
        players: env.players,
        horizon: env.horizon,
        adversary: cfg.adversary.as_ref().map(ToString::to_string),
        runs: runs.len(),
        baseline: base,
        final_regret: Stat::of(&finals),
        expected_reward,
        punish_rate: punished as f64 / runs.len() as f64,
    };
    Ok(BatchResult { runs, summary })
}

pub fn run_batch(cfg: &RunConfig) -> Result<BatchResult> {
    run_batch_with(cfg, true)
}

/// One row per (seed, checkpoint).
pub fn write_csv<W: Write>(cfg: &RunConfig, batch: &BatchResult, out: W) -> Result<()> {
    let m = batch.summary.players;
    let regret_col = if cfg.build_env()?.is_homogeneous() {
        "cum_regret"
    } else {
        "cum_rsd_regret"
    };
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    let mut header: Vec<String> = ["run_id", "seed", "algo", "K", "M", "T", "t", regret_col]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend((0..m).map(|j| format!("reward_{j}")));
    header.extend((0..m).map(|j| format!("exp_reward_{j}")));
    header.push("punish_round".into());
    header.push("phases".into());
    w.write_record(&header)?;
    for r in &batch.runs {
        let punish = r.punish_round.map_or("-1".to_string(), |p| p.to_string());
        for row in &r.rows {
            let mut rec = vec![
                r.run_id.to_string(),
                r.seed.to_string(),
                cfg.algo.to_string(),
                batch.summary.arms.to_string(),
                m.to_string(),
                batch.summary.horizon.to_string(),
                row.t.to_string(),
                row.cum_regret.to_string(),
            ];
            rec.extend(row.rewards.iter().map(f64::to_string));
            rec.extend(row.expected.iter().map(f64::to_string));
            rec.push(punish.clone());
            rec.push(
                row.phases
                    .iter()
                    .map(|p| p.as_str())
                    .collect::<Vec<_>>()
                    .join("|"),
            );
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes `<out>.csv` and `<out>.json` (or the given paths if they already
/// carry those extensions).
pub fn write_outputs(
    cfg: &RunConfig,
    batch: &BatchResult,
    out: &Path,
) -> Result<(PathBuf, PathBuf)> {
    let csv_path = out.with_extension("csv");
    let json_path = out.with_extension("json");
    if let Some(dir) = csv_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    write_csv(
        cfg,
        batch,
        std::io::BufWriter::new(std::fs::File::create(&csv_path)?),
    )?;
    let json = serde_json::to_string_pretty(&batch.summary)?;
    std::fs::write(&json_path, json + "\n")?;
    Ok((csv_path, json_path))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> RunConfig {
        RunConfig {
            algo: Algo::SicGt,
            arms: 4,
            players: 2,
            horizon: 3000,
            means: "0.9,0.8,0.3,0.2".into(),
            delta: 0.0,
            sensing: None,
            adversary: None,
            seeds: Seeds::Range { count: 3, base: 10 },
            checkpoints: Checkpoints::Pow2,
            out: None,
            beta: None,
            choice_set: ChoiceSet::AllArms,
            distribution: ArmDistribution::Bernoulli,
        }
    }

    #[test]
    fn means_specs() {
        assert_eq!(
            parse_means("0.5, 0.25").unwrap(),
            MeansSpec::List(vec![0.5, 0.25])
        );
        assert_eq!(
            parse_means("0.5,0.2;0.4,0.3").unwrap(),
            MeansSpec::Matrix(vec![vec![0.5, 0.2], vec![0.4, 0.3]])
        );
        assert_eq!(
            parse_means("gen:uniform-gaps:lo=0.2").unwrap(),
            MeansSpec::UniformGaps { lo: 0.2, hi: 0.9 }
        );
        assert!(parse_means("gen:zipf").is_err());
        assert!(parse_means("a,b").is_err());
        let v = random_means(6, 0.1, 3).unwrap();
        assert!(v.windows(2).all(|w| w[0] - w[1] >= 0.1));
    }

    #[test]
    fn config_toml_round_trip() {
        let mut cfg = small();
        cfg.adversary = Some(AdversarySpec::StatLiar {
            arm: 1,
            values: [1.0, 0.5],
        });
        cfg.beta = Some(5.0);
        let text = cfg.to_toml().unwrap();
        assert_eq!(RunConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn invalid_pairs_are_rejected() {
        let mut cfg = small();
        cfg.sensing = Some(Sensing::Statistic);
        assert!(
            matches!(cfg.validate(), Err(Error::InvalidConfig { field, .. }) if field == "sensing")
        );
        let mut cfg = small();
        cfg.algo = Algo::RsdGt;
        cfg.players = 4;
        assert!(matches!(cfg.validate(), Err(Error::InvalidConfig { field, .. }) if field == "M"));
        let mut cfg = small();
        cfg.adversary = Some(AdversarySpec::Greedy);
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn csv_is_deterministic_and_order_independent() {
        let cfg = small();
        let a = run_batch_with(&cfg, true).unwrap();
        let b = run_batch_with(&cfg, false).unwrap();
        let (mut x, mut y) = (Vec::new(), Vec::new());
        write_csv(&cfg, &a, &mut x).unwrap();
        write_csv(&cfg, &b, &mut y).unwrap();
        assert_eq!(x, y);
        let text = String::from_utf8(x).unwrap();
        assert!(
            text.starts_with("run_id,seed,algo,K,M,T,t,cum_regret,reward_0,reward_1,exp_reward_0")
        );
        // 3 seeds x 13 checkpoints (1, 2, ..., 2048, 3000) + header
        assert_eq!(text.lines().count(), 1 + 3 * 13);
    }
}

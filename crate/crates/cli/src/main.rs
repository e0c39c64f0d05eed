use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use mmab_core::acceptance;
use mmab_core::adversary::AdversarySpec;
use mmab_core::algo::Algo;
use mmab_core::env::{ArmDistribution, Sensing};
use mmab_core::harness::{run_batch_with, write_outputs, RunConfig, Seeds};
use mmab_core::metrics::{rsd_welfare_exact, rsd_welfare_mc, Checkpoints, ChoiceSet};
use mmab_core::rng::aux_rng;

/// Log verbosity comes from MMAB_LOG (env_logger syntax, default "warn").
#[derive(Parser)]
#[command(
    name = "mmab",
    version,
    about = "Multiplayer bandit simulations with selfish players"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a seeded batch and write <out>.csv and <out>.json.
    Run(Box<RunArgs>),
    /// Run a named test suite.
    Bench {
        #[arg(long, value_enum, default_value = "acceptance")]
        suite: Suite,
        /// Criterion ids to run, e.g. 4,7 (all by default).
        #[arg(long, value_delimiter = ',')]
        only: Vec<u8>,
    },
    /// Expected serial-dictatorship welfare of a means matrix.
    RsdBenchmark {
        /// One row per player; values separated by commas or whitespace.
        #[arg(long)]
        means_file: PathBuf,
        #[arg(long, value_enum, default_value = "all-arms")]
        choice_set: ChoiceArg,
        /// Monte Carlo sample count (0 skips the estimate).
        #[arg(long, default_value_t = 1_000_000)]
        samples: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Suite {
    Acceptance,
}

#[derive(Clone, Copy, ValueEnum)]
enum ChoiceArg {
    AllArms,
    FirstM,
}

impl From<ChoiceArg> for ChoiceSet {
    fn from(c: ChoiceArg) -> Self {
        match c {
            ChoiceArg::AllArms => ChoiceSet::AllArms,
            ChoiceArg::FirstM => ChoiceSet::FirstM,
        }
    }
}

#[derive(Args)]
struct RunArgs {
    /// TOML config; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    algo: Option<Algo>,
    #[arg(long = "K")]
    arms: Option<usize>,
    #[arg(long = "M")]
    players: Option<usize>,
    #[arg(long = "T")]
    horizon: Option<u64>,
    /// `0.9,0.8,...`, a `;`-separated matrix, `gen:uniform-gaps` or `gen:random:min_gap=..,seed=..`.
    #[arg(long)]
    means: Option<String>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    sensing: Option<Sensing>,
    /// e.g. `best-arm`, `jammer:arm=2`, `preference-liar:means=0.1/0.9/0.5,exploit=1`.
    #[arg(long)]
    adversary: Option<AdversarySpec>,
    /// Number of seeds.
    #[arg(long)]
    seeds: Option<u64>,
    #[arg(long, default_value_t = 0)]
    seed_base: u64,
    /// `pow2`, `linear:N` or a comma-separated list.
    #[arg(long)]
    checkpoints: Option<Checkpoints>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long, value_enum)]
    choice_set: Option<ChoiceArg>,
    /// Output prefix; `.csv` and `.json` are appended.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run seeds one after the other.
    #[arg(long)]
    sequential: bool,
}

fn build_config(a: RunArgs) -> anyhow::Result<(RunConfig, bool)> {
    let mut cfg = match &a.config {
        Some(path) => {
            RunConfig::load(path).with_context(|| format!("reading {}", path.display()))?
        }
        None => {
            let missing = |name: &str| anyhow::anyhow!("--{name} is required without --config");
            RunConfig {
                algo: a.algo.ok_or_else(|| missing("algo"))?,
                arms: a.arms.ok_or_else(|| missing("K"))?,
                players: a.players.ok_or_else(|| missing("M"))?,
                horizon: a.horizon.ok_or_else(|| missing("T"))?,
                means: a.means.clone().ok_or_else(|| missing("means"))?,
                delta: 0.0,
                sensing: None,
                adversary: None,
                seeds: Seeds::default(),
                checkpoints: Checkpoints::default(),
                out: None,
                beta: None,
                choice_set: ChoiceSet::default(),
                distribution: ArmDistribution::Bernoulli,
            }
        }
    };
    if let Some(v) = a.algo {
        cfg.algo = v;
    }
    if let Some(v) = a.arms {
        cfg.arms = v;
    }
    if let Some(v) = a.players {
        cfg.players = v;
    }
    if let Some(v) = a.horizon {
        cfg.horizon = v;
    }
    if let Some(v) = a.means {
        cfg.means = v;
    }
    if let Some(v) = a.delta {
        cfg.delta = v;
    }
    if a.sensing.is_some() {
        cfg.sensing = a.sensing;
    }
    if a.adversary.is_some() {
        cfg.adversary = a.adversary;
    }
    if let Some(n) = a.seeds {
        cfg.seeds = Seeds::Range {
            count: n,
            base: a.seed_base,
        };
    }
    if let Some(v) = a.checkpoints {
        cfg.checkpoints = v;
    }
    if a.beta.is_some() {
        cfg.beta = a.beta;
    }
    if let Some(v) = a.choice_set {
        cfg.choice_set = v.into();
    }
    if a.out.is_some() {
        cfg.out = a.out;
    }
    Ok((cfg, !a.sequential))
}

fn run(a: RunArgs) -> anyhow::Result<()> {
    let (cfg, parallel) = build_config(a)?;
    cfg.validate()?;
    let Some(out) = cfg.out.clone() else {
        bail!("--out is required")
    };
    let batch = run_batch_with(&cfg, parallel)?;
    let (csv, json) = write_outputs(&cfg, &batch, &out)?;
    log::info!("wrote {} and {}", csv.display(), json.display());
    println!("{}", serde_json::to_string_pretty(&batch.summary)?);
    Ok(())
}

fn read_matrix(path: &PathBuf) -> anyhow::Result<Vec<Vec<f64>>> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| {
            l.split(|c: char| c == ',' || c.is_whitespace())
                .filter(|x| !x.is_empty())
                .map(|x| {
                    x.parse::<f64>()
                        .with_context(|| format!("bad number {x:?}"))
                })
                .collect()
        })
        .collect()
}

fn rsd_benchmark(path: PathBuf, choice: ChoiceSet, samples: u64, seed: u64) -> anyhow::Result<()> {
    let means = read_matrix(&path)?;
    if means.len() <= 8 {
        let exact = rsd_welfare_exact(&means, choice)?;
        println!("exact welfare {:.6}", exact.welfare);
        println!("exact utilities {:?}", exact.utilities);
    }
    if samples > 0 {
        let mc = rsd_welfare_mc(&means, choice, samples, &mut aux_rng(seed, 0))?;
        println!(
            "monte carlo welfare {:.6} +- {:.6} ({samples} samples)",
            mc.welfare, mc.stderr
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("MMAB_LOG", "warn")).init();
    let cli = Cli::parse();
    let res = match cli.cmd {
        Cmd::Run(a) => run(*a),
        Cmd::Bench {
            suite: Suite::Acceptance,
            only,
        } => {
            let ids = if only.is_empty() {
                (1..=13).collect()
            } else {
                only
            };
            if let Some(bad) = ids.iter().find(|&&i| !(1..=13).contains(&i)) {
                eprintln!("error: no criterion {bad}");
                return ExitCode::from(2);
            }
            let failed = ids
                .into_iter()
                .map(acceptance::criterion)
                .inspect(|o| println!("{o}"))
                .filter(|o| !o.pass)
                .count();
            return if failed == 0 {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            };
        }
        Cmd::RsdBenchmark {
            means_file,
            choice_set,
            samples,
            seed,
        } => rsd_benchmark(means_file, choice_set.into(), samples, seed),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

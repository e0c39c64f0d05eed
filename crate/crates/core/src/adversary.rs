//! Selfish and malicious strategies. All of them implement [`Player`]; the
//! omniscient ones are handed the true means at construction.

use std::any::Any;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::algo::sicgt::{Corruption, StatLie};
use crate::algo::statistic::Stage;
use crate::algo::{
    argmax, ranking, Algo, RsdGtHooks, RsdGtPlayer, SelfishRobustMmab, SicGtHooks, SicGtPlayer,
    StatisticConfig,
};
use crate::env::{EnvModel, Observation};
use crate::error::{Error, Result};
use crate::player::{Phase, Player};
use crate::rng::SimRng;

/// Description of the single deviating player of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum AdversarySpec {
    /// Pulls its best arm forever.
    BestArm,
    /// Honest, except that it always claims rank 0 during initialization.
    RankRigger,
    /// Honest SIC-GT player reporting `values[l]` for `arm` to leader `l`.
    StatLiar { arm: usize, values: [f64; 2] },
    /// Honest SIC-GT player flipping one bit of another pair's exchange.
    MessageCorruptor {
        phase: u32,
        transmission: usize,
        leg: u8,
        bit: usize,
    },
    /// Pulls `arm` forever.
    Jammer { arm: usize },
    /// Honest RSD-GT player broadcasting preferences from fake means.
    PreferenceLiar {
        fake_means: Vec<f64>,
        #[serde(default)]
        exploit_arm: Option<usize>,
    },
    /// Honest statistic-sensing player that stops exploring and takes the
    /// best arm left free by the others' round robin.
    Greedy,
}

impl AdversarySpec {
    pub fn name(&self) -> &'static str {
        match self {
            AdversarySpec::BestArm => "best-arm",
            AdversarySpec::RankRigger => "rank-rigger",
            AdversarySpec::StatLiar { .. } => "stat-liar",
            AdversarySpec::MessageCorruptor { .. } => "message-corruptor",
            AdversarySpec::Jammer { .. } => "jammer",
            AdversarySpec::PreferenceLiar { .. } => "preference-liar",
            AdversarySpec::Greedy => "greedy",
        }
    }

    pub fn omniscient(&self) -> bool {
        matches!(self, AdversarySpec::BestArm | AdversarySpec::Greedy)
    }

    /// Whether the deviation makes sense against `algo`.
    pub fn supports(&self, algo: Algo) -> bool {
        match self {
            AdversarySpec::BestArm | AdversarySpec::RankRigger | AdversarySpec::Jammer { .. } => {
                true
            }
            AdversarySpec::StatLiar { .. } | AdversarySpec::MessageCorruptor { .. } => {
                algo == Algo::SicGt
            }
            AdversarySpec::PreferenceLiar { .. } => algo == Algo::RsdGt,
            AdversarySpec::Greedy => algo == Algo::SelfishRobustMmab,
        }
    }
}

impl fmt::Display for AdversarySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AdversarySpec::StatLiar { arm, values } => {
                write!(f, "stat-liar:arm={arm},v0={},v1={}", values[0], values[1])
            }
            AdversarySpec::MessageCorruptor {
                phase,
                transmission,
                leg,
                bit,
            } => {
                write!(f, "message-corruptor:phase={phase},transmission={transmission},leg={leg},bit={bit}")
            }
            AdversarySpec::Jammer { arm } => write!(f, "jammer:arm={arm}"),
            AdversarySpec::PreferenceLiar {
                fake_means,
                exploit_arm,
            } => {
                let means: Vec<String> = fake_means.iter().map(f64::to_string).collect();
                write!(f, "preference-liar:means={}", means.join("/"))?;
                if let Some(a) = exploit_arm {
                    write!(f, ",exploit={a}")?;
                }
                Ok(())
            }
            other => f.write_str(other.name()),
        }
    }
}

fn parse_arg<T: FromStr>(args: &[(&str, &str)], key: &str) -> Result<Option<T>> {
    match args.iter().find(|(k, _)| *k == key) {
        None => Ok(None),
        Some((_, v)) => v
            .parse()
            .map(Some)
            .map_err(|_| Error::config("adversary", format!("cannot parse {key}={v:?}"))),
    }
}

fn required<T: FromStr>(args: &[(&str, &str)], key: &str) -> Result<T> {
    parse_arg(args, key)?
        .ok_or_else(|| Error::config("adversary", format!("missing argument {key}")))
}

/// `kind[:key=value,...]`, e.g. `jammer:arm=2` or
/// `preference-liar:means=0.1/0.9/0.5,exploit=1`.
impl FromStr for AdversarySpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, rest) = s.split_once(':').unwrap_or((s, ""));
        let mut args = Vec::new();
        for part in rest.split(',').filter(|p| !p.is_empty()) {
            let (k, v) = part.split_once('=').ok_or_else(|| {
                Error::config("adversary", format!("expected key=value, got {part:?}"))
            })?;
            args.push((k.trim(), v.trim()));
        }
        Ok(match kind.trim() {
            "best-arm" => AdversarySpec::BestArm,
            "rank-rigger" => AdversarySpec::RankRigger,
            "stat-liar" => AdversarySpec::StatLiar {
                arm: required(&args, "arm")?,
                values: [required(&args, "v0")?, required(&args, "v1")?],
            },
            "message-corruptor" => AdversarySpec::MessageCorruptor {
                phase: parse_arg(&args, "phase")?.unwrap_or(1),
                transmission: parse_arg(&args, "transmission")?.unwrap_or(0),
                leg: parse_arg(&args, "leg")?.unwrap_or(0),
                bit: parse_arg(&args, "bit")?.unwrap_or(0),
            },
            "jammer" => AdversarySpec::Jammer {
                arm: parse_arg(&args, "arm")?.unwrap_or(0),
            },
            "preference-liar" => {
                let raw: String = required(&args, "means")?;
                let fake_means = raw
                    .split('/')
                    .map(|x| x.trim().parse::<f64>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|_| Error::config("adversary", format!("bad means {raw:?}")))?;
                AdversarySpec::PreferenceLiar {
                    fake_means,
                    exploit_arm: parse_arg(&args, "exploit")?,
                }
            }
            "greedy" => AdversarySpec::Greedy,
            other => {
                return Err(Error::config(
                    "adversary",
                    format!("unknown adversary {other:?}"),
                ))
            }
        })
    }
}

/// Pulls the arm with the highest true mean for its player index.
#[derive(Debug, Clone)]
pub struct BestArmCommitter {
    arm: usize,
}

impl BestArmCommitter {
    pub fn new(env: &EnvModel, player: usize) -> Self {
        BestArmCommitter {
            arm: argmax(env.player_means(player)),
        }
    }

    pub fn arm(&self) -> usize {
        self.arm
    }
}

impl Player for BestArmCommitter {
    fn act(&mut self, _t: u64) -> usize {
        self.arm
    }
    fn observe(&mut self, _obs: &Observation) {}
    fn phase(&self) -> Phase {
        Phase::Deviate
    }
    fn as_any(&self) -> &dyn Any {
        self
    }
}

/// Pulls one arm forever, whatever happens.
#[derive(Debug, Clone)]
pub struct Jammer {
    pub arm: usize,
}

impl Player for Jammer {
    fn act(&mut self, _t: u64) -> usize {
        self.arm
    }
    fn observe(&mut self, _obs: &Observation) {}
    fn phase(&self) -> Phase {
        Phase::Deviate
    }
    fn as_any(&self) -> &dyn Any {
        self
    }
}

/// Follows `base`, but collides on the given `(round, arm)` pairs.
pub struct ScheduledCollisions {
    base: Box<dyn Player>,
    schedule: Vec<(u64, usize)>,
    next: usize,
    deviating: bool,
}

impl ScheduledCollisions {
    pub fn new(base: Box<dyn Player>, mut schedule: Vec<(u64, usize)>) -> Self {
        schedule.sort_unstable();
        ScheduledCollisions {
            base,
            schedule,
            next: 0,
            deviating: false,
        }
    }
}

impl Player for ScheduledCollisions {
    fn act(&mut self, t: u64) -> usize {
        let own = self.base.act(t);
        while self.next < self.schedule.len() && self.schedule[self.next].0 < t {
            self.next += 1;
        }
        self.deviating = self.schedule.get(self.next).is_some_and(|&(r, _)| r == t);
        if self.deviating {
            self.schedule[self.next].1
        } else {
            own
        }
    }
    fn observe(&mut self, obs: &Observation) {
        self.base.observe(obs);
    }
    fn phase(&self) -> Phase {
        if self.deviating {
            Phase::Deviate
        } else {
            self.base.phase()
        }
    }
    fn rank(&self) -> Option<usize> {
        self.base.rank()
    }
    fn estimated_players(&self) -> Option<usize> {
        self.base.estimated_players()
    }
    fn punished_at(&self) -> Option<u64> {
        self.base.punished_at()
    }
    fn as_any(&self) -> &dyn Any {
        self
    }
}

/// Statistic-sensing player that behaves honestly until exploration, then
/// always takes the best arm (true means) not claimed by the other ranks'
/// round-robin slots over the true top M̂.
pub struct GreedyBestResponse {
    inner: SelfishRobustMmab,
    order: Vec<usize>,
    top: Vec<usize>,
    claimed: Vec<bool>,
}

impl GreedyBestResponse {
    pub fn new(inner: SelfishRobustMmab, means: &[f64]) -> Self {
        GreedyBestResponse {
            claimed: vec![false; means.len()],
            inner,
            order: ranking(means),
            top: Vec::new(),
        }
    }
}

impl Player for GreedyBestResponse {
    fn act(&mut self, t: u64) -> usize {
        let arm = self.inner.act(t);
        if self.inner.stage() != Stage::Exploring {
            return arm;
        }
        let (Some(rank), Some(m)) = (self.inner.rank(), self.inner.estimated_players()) else {
            return arm;
        };
        if self.top.len() != m {
            self.top = self.order[..m.min(self.order.len())].to_vec();
            self.top.sort_unstable();
        }
        self.claimed.iter_mut().for_each(|c| *c = false);
        for r in (0..m).filter(|&r| r != rank) {
            self.claimed[self.top[((t + r as u64) % m as u64) as usize]] = true;
        }
        self.order
            .iter()
            .copied()
            .find(|&k| !self.claimed[k])
            .unwrap_or(arm)
    }
    fn observe(&mut self, obs: &Observation) {
        self.inner.observe(obs);
    }
    fn phase(&self) -> Phase {
        match self.inner.phase() {
            Phase::Explore => Phase::Deviate,
            p => p,
        }
    }
    fn rank(&self) -> Option<usize> {
        self.inner.rank()
    }
    fn estimated_players(&self) -> Option<usize> {
        self.inner.estimated_players()
    }
    fn as_any(&self) -> &dyn Any {
        self
    }
}

/// Parameters shared by every cooperative player of a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TeamParams {
    pub algo: Algo,
    pub statistic: StatisticConfig,
}

/// Honest player `j` of a run.
pub fn honest_player(params: TeamParams, env: &EnvModel, rng: SimRng) -> Result<Box<dyn Player>> {
    Ok(match params.algo {
        Algo::SelfishRobustMmab => Box::new(SelfishRobustMmab::new(
            env.arms,
            env.horizon,
            params.statistic,
            rng,
        )),
        Algo::SicGt => Box::new(SicGtPlayer::new(env.arms, env.horizon, rng)),
        Algo::RsdGt => Box::new(RsdGtPlayer::new(env.arms, env.horizon, env.delta(), rng)?),
    })
}

/// The deviating player occupying index `player` of the run.
pub fn selfish_player(
    spec: &AdversarySpec,
    params: TeamParams,
    env: &EnvModel,
    player: usize,
    rng: SimRng,
) -> Result<Box<dyn Player>> {
    if !spec.supports(params.algo) {
        return Err(Error::config(
            "adversary",
            format!("{} does not apply to {}", spec.name(), params.algo),
        ));
    }
    let (arms, horizon) = (env.arms, env.horizon);
    let check_arm = |arm: usize| {
        if arm < arms {
            Ok(())
        } else {
            Err(Error::config(
                "adversary",
                format!("arm {arm} outside [0, {arms})"),
            ))
        }
    };
    Ok(match spec {
        AdversarySpec::BestArm => Box::new(BestArmCommitter::new(env, player)),
        AdversarySpec::Jammer { arm } => {
            check_arm(*arm)?;
            Box::new(Jammer { arm: *arm })
        }
        AdversarySpec::RankRigger => match params.algo {
            Algo::SelfishRobustMmab => Box::new(
                SelfishRobustMmab::new(arms, horizon, params.statistic, rng).with_rank_target(0),
            ),
            Algo::SicGt => {
                let hooks = SicGtHooks {
                    rank_target: Some(0),
                    ..Default::default()
                };
                Box::new(SicGtPlayer::with_hooks(arms, horizon, hooks, rng))
            }
            Algo::RsdGt => {
                let hooks = RsdGtHooks {
                    rank_target: Some(0),
                    ..Default::default()
                };
                Box::new(RsdGtPlayer::with_hooks(
                    arms,
                    horizon,
                    env.delta(),
                    hooks,
                    rng,
                )?)
            }
        },
        AdversarySpec::StatLiar { arm, values } => {
            check_arm(*arm)?;
            let hooks = SicGtHooks {
                stat_lie: Some(StatLie {
                    arm: *arm,
                    values: *values,
                }),
                ..Default::default()
            };
            Box::new(SicGtPlayer::with_hooks(arms, horizon, hooks, rng))
        }
        &AdversarySpec::MessageCorruptor {
            phase,
            transmission,
            leg,
            bit,
        } => {
            let corruption = Corruption {
                phase,
                transmission,
                leg: leg.min(1),
                bit,
            };
            let hooks = SicGtHooks {
                corruption: Some(corruption),
                ..Default::default()
            };
            Box::new(SicGtPlayer::with_hooks(arms, horizon, hooks, rng))
        }
        AdversarySpec::PreferenceLiar {
            fake_means,
            exploit_arm,
        } => {
            if let Some(a) = exploit_arm {
                check_arm(*a)?;
            }
            let hooks = RsdGtHooks {
                fake_means: Some(fake_means.clone()),
                exploit_arm: *exploit_arm,
                ..Default::default()
            };
            Box::new(RsdGtPlayer::with_hooks(
                arms,
                horizon,
                env.delta(),
                hooks,
                rng,
            )?)
        }
        AdversarySpec::Greedy => {
            let inner = SelfishRobustMmab::new(arms, horizon, params.statistic, rng);
            Box::new(GreedyBestResponse::new(inner, env.player_means(player)))
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn specs_round_trip_through_text() {
        let specs = [
            AdversarySpec::BestArm,
            AdversarySpec::RankRigger,
            AdversarySpec::StatLiar {
                arm: 3,
                values: [1.0, 0.25],
            },
            AdversarySpec::MessageCorruptor {
                phase: 2,
                transmission: 5,
                leg: 1,
                bit: 0,
            },
            AdversarySpec::Jammer { arm: 1 },
            AdversarySpec::PreferenceLiar {
                fake_means: vec![0.1, 0.9, 0.5],
                exploit_arm: Some(2),
            },
            AdversarySpec::Greedy,
        ];
        for s in specs {
            assert_eq!(s.to_string().parse::<AdversarySpec>().unwrap(), s);
        }
        assert!("teleporter".parse::<AdversarySpec>().is_err());
        assert!("stat-liar:arm=1".parse::<AdversarySpec>().is_err());
    }

    #[test]
    fn scheduled_collisions_override_base() {
        let base = Box::new(Jammer { arm: 0 });
        let mut p = ScheduledCollisions::new(base, vec![(3, 2), (1, 4)]);
        let arms: Vec<usize> = (0..5).map(|t| p.act(t)).collect();
        assert_eq!(arms, vec![0, 4, 0, 2, 0]);
    }
}

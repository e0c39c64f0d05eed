//! Full-sensing, homogeneous algorithm with two leaders: collisionless
//! exploration phases alternate with communication phases where every
//! player reports quantized means to both leaders through back-and-forth
//! messages; leaders accept or reject arms from trimmed means. Any anomaly
//! triggers the collective punishment for the rest of the game.

use std::any::Any;

use rand::Rng;

use super::{ArmStats, FullSensingInit, PunishEstimator};
use crate::commproto::{BackAndForth, BitMessage, Receive, SetBroadcast, Transmit};
use crate::env::Observation;
use crate::math::{homogeneous_gamma, quantize, trimmed_mean};
use crate::player::{Phase, Player};
use crate::rng::SimRng;

/// Number of leaders; ranks `0..LEADERS` lead.
pub const LEADERS: usize = 2;

/// Report fake values for one arm, possibly different to each leader.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StatLie {
    pub arm: usize,
    pub values: [f64; 2],
}

/// Collide on one bit of another pair's exchange.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Corruption {
    pub phase: u32,
    /// Index among the exchanges this player takes no part in (wraps).
    pub transmission: usize,
    /// 0: forward leg, 1: echo leg.
    pub leg: u8,
    pub bit: usize,
}

/// Deviations a selfish player can graft onto the protocol.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SicGtHooks {
    pub rank_target: Option<usize>,
    pub stat_lie: Option<StatLie>,
    pub corruption: Option<Corruption>,
}

/// Sorted union of `opt` and the sliding window `m` over `active`.
pub fn arms_to_pull(opt: &[usize], active: &[usize], m_p: usize, window: u64) -> Vec<usize> {
    let mut v = opt.to_vec();
    let kp = active.len();
    if kp > 0 {
        for r in 0..m_p {
            v.push(active[((window as usize * m_p) + r) % kp]);
        }
    }
    v.sort_unstable();
    v.dedup();
    v
}

/// `b = 4 sqrt(log T / ((M - 2) 2^(p+1)))`; with fewer than 3 players the
/// plain mean over all M reports is used, so M replaces M - 2.
pub fn update_bound(log_t: f64, players: usize, p: u32) -> f64 {
    let effective = if players >= 3 {
        players - 2
    } else {
        players.max(1)
    };
    4.0 * (log_t / (effective as f64 * (p as f64 + 1.0).exp2())).sqrt()
}

/// Accept/reject sets over `active` given aggregated means indexed by arm.
pub fn update_decide(
    agg: &[f64],
    active: &[usize],
    m_p: usize,
    b: f64,
) -> (Vec<usize>, Vec<usize>) {
    let kp = active.len();
    let mut acc = Vec::new();
    let mut rej = Vec::new();
    for &k in active {
        let better = active.iter().filter(|&&i| agg[i] - b >= agg[k] + b).count();
        let worse = active.iter().filter(|&&i| agg[k] - b >= agg[i] + b).count();
        if better >= m_p {
            rej.push(k);
        } else if worse >= kp - m_p {
            acc.push(k);
        }
    }
    (acc, rej)
}

/// Per-arm aggregate of the reports `records[player][arm]`.
pub fn aggregate(records: &[Vec<f64>], arm: usize) -> f64 {
    let col: Vec<f64> = records.iter().map(|r| r[arm]).collect();
    if col.len() >= 3 {
        trimmed_mean(&col).expect("at least three reports")
    } else {
        col.iter().sum::<f64>() / col.len() as f64
    }
}

fn on_grid(value: f64, p: u32) -> f64 {
    let scale = (p as f64).exp2();
    ((value.clamp(0.0, 1.0) * scale).round()) / scale
}

#[derive(Debug, Clone)]
enum CrossRole {
    Send(Transmit),
    Check(Receive, f64),
    Idle(usize),
}

#[derive(Debug, Clone)]
enum CommStep {
    Scan {
        n: usize,
    },
    Exchange {
        idx: usize,
        n: usize,
        machine: Option<BackAndForth>,
    },
    Cross {
        idx: usize,
        role: CrossRole,
    },
    SetAcc(SetBroadcast),
    SetRej(SetBroadcast),
    Done,
}

/// One communication phase, as a resumable machine.
#[derive(Debug, Clone)]
struct MeanSignal {
    p: u32,
    arms: usize,
    players: usize,
    leaders: usize,
    rank: usize,
    step: CommStep,
    exchanges: Vec<(usize, usize, usize)>,
    crosses: Vec<(usize, usize, usize, usize)>,
    /// Values known for `[player][arm]`: the own row for everybody, all rows for leaders.
    records: Vec<Vec<f64>>,
    own: Vec<f64>,
    lie: Option<StatLie>,
    jam_exchange: Option<(usize, u8, usize)>,
    active: Vec<usize>,
    m_p: usize,
    log_t: f64,
    acc: Vec<usize>,
    rej: Vec<usize>,
    punish: bool,
}

impl MeanSignal {
    #[allow(clippy::too_many_arguments)]
    fn new(
        p: u32,
        arms: usize,
        players: usize,
        rank: usize,
        own: Vec<f64>,
        lie: Option<StatLie>,
        corruption: Option<Corruption>,
        (active, m_p, log_t): (Vec<usize>, usize, f64),
    ) -> Self {
        let leaders = LEADERS.min(players);
        let mut exchanges = Vec::new();
        for i in 0..players {
            for l in 0..leaders {
                if i != l {
                    for k in 0..arms {
                        exchanges.push((i, l, k));
                    }
                }
            }
        }
        let mut crosses = Vec::new();
        if leaders == 2 {
            for (i, l) in [(0, 1), (1, 0)] {
                for m in 0..players {
                    for k in 0..arms {
                        crosses.push((i, l, m, k));
                    }
                }
            }
        }
        let foreign: Vec<usize> = (0..exchanges.len())
            .filter(|&x| exchanges[x].0 != rank && exchanges[x].1 != rank)
            .collect();
        let jam_exchange = corruption
            .filter(|c| c.phase == p && !foreign.is_empty())
            .map(|c| {
                (
                    foreign[c.transmission % foreign.len()],
                    c.leg,
                    c.bit % (p as usize + 1),
                )
            });
        let mut records = vec![vec![0.0; arms]; players];
        records[rank] = own.clone();
        if let Some(lie) = lie {
            if rank < leaders {
                records[rank][lie.arm] = on_grid(lie.values[rank], p);
            }
        }
        MeanSignal {
            p,
            arms,
            players,
            leaders,
            rank,
            step: CommStep::Scan { n: 0 },
            exchanges,
            crosses,
            records,
            own,
            lie,
            jam_exchange,
            active,
            m_p,
            log_t,
            acc: Vec::new(),
            rej: Vec::new(),
            punish: false,
        }
    }

    fn len(&self) -> usize {
        self.p as usize + 1
    }

    fn is_leader(&self) -> bool {
        self.rank < self.leaders
    }

    /// Value this player reports for arm k to leader l.
    fn reported(&self, l: usize, k: usize) -> f64 {
        match self.lie {
            Some(lie) if lie.arm == k => on_grid(lie.values[l.min(1)], self.p),
            _ => self.own[k],
        }
    }

    fn scan_arm(&self, t: u64) -> usize {
        ((t + self.rank as u64) % self.arms as u64) as usize
    }

    fn start_exchange(&mut self, idx: usize) -> CommStep {
        if idx >= self.exchanges.len() {
            return self.start_cross(0);
        }
        let (i, l, k) = self.exchanges[idx];
        let machine = if i == self.rank {
            let msg = BitMessage::encode(self.reported(l, k), self.p).expect("grid value");
            Some(BackAndForth::sender(&msg, i, l))
        } else if l == self.rank {
            Some(BackAndForth::receiver(self.len(), l, i))
        } else {
            None
        };
        CommStep::Exchange { idx, n: 0, machine }
    }

    fn start_cross(&mut self, idx: usize) -> CommStep {
        if idx >= self.crosses.len() {
            return self.start_sets();
        }
        let (i, l, m, k) = self.crosses[idx];
        let role = if i == self.rank {
            let v = if m == self.rank {
                self.reported(l, k)
            } else {
                self.records[m][k]
            };
            let msg = BitMessage::encode(v.min(1.0), self.p).expect("grid value");
            CrossRole::Send(Transmit::new(&msg, i, l))
        } else if l == self.rank {
            CrossRole::Check(Receive::new(l, self.len()), self.records[m][k])
        } else {
            CrossRole::Idle(0)
        };
        CommStep::Cross { idx, role }
    }

    fn start_sets(&mut self) -> CommStep {
        self.decide();
        CommStep::SetAcc(SetBroadcast::new(
            self.arms,
            self.rank,
            self.is_leader(),
            &self.acc,
        ))
    }

    fn decide(&mut self) {
        if !self.is_leader() {
            return;
        }
        let agg: Vec<f64> = (0..self.arms)
            .map(|k| aggregate(&self.records, k))
            .collect();
        let b = update_bound(self.log_t, self.players, self.p);
        (self.acc, self.rej) = update_decide(&agg, &self.active, self.m_p, b);
    }

    fn arm(&self, t: u64) -> usize {
        match &self.step {
            CommStep::Scan { .. } => self.scan_arm(t),
            CommStep::Exchange { idx, n, machine } => {
                if let Some((target, leg, bit)) = self.jam_exchange {
                    let len = self.len();
                    if *idx == target && *n == leg as usize * len + bit {
                        let (i, l, _) = self.exchanges[*idx];
                        return if leg == 0 { l } else { i };
                    }
                }
                machine.as_ref().map_or(self.rank, |m| m.arm())
            }
            CommStep::Cross { role, .. } => match role {
                CrossRole::Send(tx) => tx.arm(),
                CrossRole::Check(rx, _) => rx.arm(),
                CrossRole::Idle(_) => self.rank,
            },
            CommStep::SetAcc(sb) | CommStep::SetRej(sb) => sb.arm(t),
            CommStep::Done => self.rank,
        }
    }

    fn feed(&mut self, t: u64, collision: bool) {
        let step = std::mem::replace(&mut self.step, CommStep::Done);
        self.step = match step {
            CommStep::Scan { n } => {
                self.punish |= collision;
                if n + 1 < self.arms {
                    CommStep::Scan { n: n + 1 }
                } else {
                    self.start_exchange(0)
                }
            }
            CommStep::Exchange {
                idx,
                n,
                mut machine,
            } => {
                if let Some(m) = machine.as_mut() {
                    m.feed(collision);
                }
                if n + 1 < 2 * self.len() {
                    CommStep::Exchange {
                        idx,
                        n: n + 1,
                        machine,
                    }
                } else {
                    if let Some(m) = machine {
                        let (i, _, k) = self.exchanges[idx];
                        if let Some(out) = m.outcome() {
                            self.punish |= out.corrupted;
                        } else if let Some(msg) = m.received() {
                            let v = msg.value();
                            if v > 1.0 {
                                self.punish = true;
                            }
                            self.records[i][k] = v.min(1.0);
                        }
                    }
                    self.start_exchange(idx + 1)
                }
            }
            CommStep::Cross { idx, role } => {
                let (role, finished) = match role {
                    CrossRole::Send(mut tx) => {
                        tx.advance();
                        let done = tx.done();
                        (CrossRole::Send(tx), done)
                    }
                    CrossRole::Check(mut rx, expected) => {
                        rx.feed(collision);
                        if rx.done() && rx.message().value() != expected {
                            self.punish = true;
                        }
                        let done = rx.done();
                        (CrossRole::Check(rx, expected), done)
                    }
                    CrossRole::Idle(n) => (CrossRole::Idle(n + 1), n + 1 >= self.len()),
                };
                if finished {
                    self.start_cross(idx + 1)
                } else {
                    CommStep::Cross { idx, role }
                }
            }
            CommStep::SetAcc(mut sb) => {
                sb.feed(t, collision);
                if sb.done() {
                    self.punish |= sb.punish();
                    self.acc = sb.set().to_vec();
                    CommStep::SetRej(SetBroadcast::new(
                        self.arms,
                        self.rank,
                        self.is_leader(),
                        &self.rej,
                    ))
                } else {
                    CommStep::SetAcc(sb)
                }
            }
            CommStep::SetRej(mut sb) => {
                sb.feed(t, collision);
                if sb.done() {
                    self.punish |= sb.punish();
                    self.rej = sb.set().to_vec();
                    CommStep::Done
                } else {
                    CommStep::SetRej(sb)
                }
            }
            CommStep::Done => CommStep::Done,
        };
    }

    fn done(&self) -> bool {
        matches!(self.step, CommStep::Done)
    }
}

#[derive(Debug, Clone)]
enum Stage {
    Init(FullSensingInit),
    Fallback,
    Explore { round: u64, total: u64 },
    Comm(Box<MeanSignal>),
    Exploit,
    Punish(PunishEstimator),
}

#[derive(Debug, Clone, Copy)]
struct Signal {
    remaining: u64,
    sit: bool,
}

pub struct SicGtPlayer {
    arms: usize,
    log_t: f64,
    stage: Stage,
    rank: usize,
    m_hat: usize,
    p: u32,
    opt: Vec<usize>,
    active: Vec<usize>,
    m_p: usize,
    stats: ArmStats,
    phase_pulls: Vec<u64>,
    atp: Vec<usize>,
    atp_window: Option<u64>,
    punish: bool,
    punished_at: Option<u64>,
    signal: Option<Signal>,
    hooks: SicGtHooks,
    accept_log: Vec<(u32, Vec<usize>, Vec<usize>)>,
    rng: SimRng,
}

impl SicGtPlayer {
    pub fn new(arms: usize, horizon: u64, rng: SimRng) -> Self {
        Self::with_hooks(arms, horizon, SicGtHooks::default(), rng)
    }

    pub fn with_hooks(arms: usize, horizon: u64, hooks: SicGtHooks, rng: SimRng) -> Self {
        SicGtPlayer {
            arms,
            log_t: (horizon as f64).ln(),
            stage: Stage::Init(FullSensingInit::new(arms, horizon, hooks.rank_target)),
            rank: 0,
            m_hat: 0,
            p: 1,
            opt: Vec::new(),
            active: (0..arms).collect(),
            m_p: 0,
            stats: ArmStats::new(arms),
            phase_pulls: vec![0; arms],
            atp: Vec::new(),
            atp_window: None,
            punish: false,
            punished_at: None,
            signal: None,
            hooks,
            accept_log: Vec::new(),
            rng,
        }
    }

    pub fn opt(&self) -> &[usize] {
        &self.opt
    }

    pub fn active(&self) -> &[usize] {
        &self.active
    }

    pub fn phase_index(&self) -> u32 {
        self.p
    }

    pub fn stats(&self) -> &ArmStats {
        &self.stats
    }

    /// `(phase, accepted, rejected)` for every completed communication phase.
    pub fn decisions(&self) -> &[(u32, Vec<usize>, Vec<usize>)] {
        &self.accept_log
    }

    pub fn punish_estimator(&self) -> Option<&PunishEstimator> {
        match &self.stage {
            Stage::Punish(pe) => Some(pe),
            _ => None,
        }
    }

    /// Leader records gathered during the current communication phase.
    pub fn is_communicating(&self) -> bool {
        matches!(self.stage, Stage::Comm(_))
    }

    fn start_phase(&mut self) -> Stage {
        if self.opt.len() >= self.m_hat || self.m_p == 0 || self.active.is_empty() {
            return Stage::Exploit;
        }
        self.phase_pulls.iter_mut().for_each(|c| *c = 0);
        self.atp_window = None;
        let kp = self.active.len() as u64;
        let windows = (kp << self.p).div_ceil(self.m_p as u64);
        Stage::Explore {
            round: 0,
            total: windows * self.m_hat as u64,
        }
    }

    fn window_atp(&mut self, round: u64) -> &[usize] {
        let window = round / self.m_hat as u64;
        if self.atp_window != Some(window) {
            self.atp = arms_to_pull(&self.opt, &self.active, self.m_p, window);
            self.atp_window = Some(window);
        }
        &self.atp
    }

    fn first_scheduled_arm(&mut self) -> usize {
        match self.stage {
            Stage::Explore { round, .. } => self.window_atp(round)[0],
            _ => self.opt.first().copied().unwrap_or(self.rank),
        }
    }

    fn trigger(&mut self, t: u64) {
        if !self.punish {
            self.punish = true;
            self.punished_at = Some(t);
            log::debug!("rank {} detected a deviation at round {t}", self.rank);
        }
    }

    fn enter_punishment(&mut self) {
        let players = self.m_hat.max(2);
        let gamma = homogeneous_gamma(self.arms, players);
        self.stage = Stage::Punish(PunishEstimator::new(
            self.arms, players, gamma, self.log_t, self.rank,
        ));
    }
}

impl Player for SicGtPlayer {
    fn act(&mut self, t: u64) -> usize {
        if self.punish && self.signal.is_none() {
            match self.stage {
                Stage::Explore { round, total } => {
                    let m = self.m_hat as u64;
                    let sit = total - round < m;
                    let remaining = if sit { m + self.arms as u64 } else { m };
                    self.signal = Some(Signal { remaining, sit });
                }
                Stage::Exploit => {
                    self.signal = Some(Signal {
                        remaining: self.m_hat as u64,
                        sit: false,
                    })
                }
                _ => {}
            }
        }
        if let Some(sig) = self.signal {
            return if sig.sit {
                self.rank
            } else {
                self.first_scheduled_arm()
            };
        }
        let rank = self.rank;
        match &mut self.stage {
            Stage::Init(init) => init.act(&mut self.rng),
            Stage::Fallback => self.rng.gen_range(0..self.arms),
            Stage::Explore { round, .. } => {
                let round = *round;
                let atp = self.window_atp(round);
                atp[((t + rank as u64) % atp.len() as u64) as usize]
            }
            Stage::Comm(ms) => ms.arm(t),
            Stage::Exploit => self.opt[((t + rank as u64) % self.opt.len() as u64) as usize],
            Stage::Punish(pe) => pe.act(t, &mut self.rng),
        }
    }

    fn observe(&mut self, obs: &Observation) {
        let collision = obs.collision.unwrap_or(false);
        let t = obs.t;
        let signalling = self.signal.is_some();
        match &mut self.stage {
            Stage::Init(init) => {
                init.observe(obs);
                if init.finished() {
                    let m_hat = init.m_hat().expect("estimate fixed");
                    let rank = init.rank();
                    self.m_hat = m_hat;
                    self.m_p = m_hat;
                    self.stage = match rank {
                        Some(r) => {
                            self.rank = r;
                            self.start_phase()
                        }
                        None => Stage::Fallback,
                    };
                }
            }
            Stage::Fallback => {}
            Stage::Explore { round, total } => {
                *round += 1;
                let finished = *round == *total;
                if !signalling {
                    self.phase_pulls[obs.arm] += 1;
                    if self.phase_pulls[obs.arm] <= 1u64 << self.p {
                        if let Some(x) = obs.value {
                            self.stats.push(obs.arm, x);
                        }
                    }
                    if collision {
                        self.trigger(t);
                    }
                }
                if finished {
                    let own: Vec<f64> = (0..self.arms)
                        .map(|k| quantize(self.stats.mean(k), self.p, &mut self.rng))
                        .collect();
                    let ms = MeanSignal::new(
                        self.p,
                        self.arms,
                        self.m_hat,
                        self.rank,
                        own,
                        self.hooks.stat_lie,
                        self.hooks.corruption,
                        (self.active.clone(), self.m_p, self.log_t),
                    );
                    self.stage = Stage::Comm(Box::new(ms));
                }
            }
            Stage::Comm(ms) => {
                ms.feed(t, collision);
                if ms.done() {
                    let detected = ms.punish;
                    let (acc, rej) = (ms.acc.clone(), ms.rej.clone());
                    if detected && !signalling {
                        self.trigger(t);
                    }
                    self.accept_log.push((self.p, acc.clone(), rej.clone()));
                    self.opt.extend(&acc);
                    self.opt.sort_unstable();
                    self.opt.dedup();
                    self.active.retain(|k| !acc.contains(k) && !rej.contains(k));
                    self.m_p = self.m_p.saturating_sub(acc.len());
                    self.p += 1;
                    self.stage = self.start_phase();
                }
            }
            Stage::Exploit => {
                if collision && !signalling {
                    self.trigger(t);
                }
            }
            Stage::Punish(pe) => pe.observe(obs),
        }
        if let Some(sig) = self.signal.as_mut() {
            sig.remaining -= 1;
            if sig.remaining == 0 {
                self.signal = None;
                self.enter_punishment();
            }
        }
    }

    fn phase(&self) -> Phase {
        if self.signal.is_some() {
            return Phase::Punish;
        }
        match self.stage {
            Stage::Init(_) => Phase::Init,
            Stage::Fallback => Phase::Fallback,
            Stage::Explore { .. } => Phase::Explore,
            Stage::Comm(_) => Phase::Communicate,
            Stage::Exploit => Phase::Exploit,
            Stage::Punish(_) => Phase::Punish,
        }
    }

    fn rank(&self) -> Option<usize> {
        match &self.stage {
            Stage::Init(init) => init.rank(),
            Stage::Fallback => None,
            _ => Some(self.rank),
        }
    }

    fn estimated_players(&self) -> Option<usize> {
        match &self.stage {
            Stage::Init(init) => init.m_hat(),
            _ => Some(self.m_hat),
        }
    }

    fn punished_at(&self) -> Option<u64> {
        self.punished_at
    }

    fn as_any(&self) -> &dyn Any {
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{EnvModel, Sensing};
    use crate::rng::{env_rng, player_rng};
    use crate::sim::run;

    fn honest(k: usize, m: usize, horizon: u64, seed: u64) -> (EnvModel, Vec<Box<dyn Player>>) {
        let means: Vec<f64> = (0..k)
            .map(|i| if i < m { 0.95 - 0.05 * i as f64 } else { 0.1 })
            .collect();
        let env = EnvModel::homogeneous(means, m, horizon, Sensing::Full).unwrap();
        let players = (0..m)
            .map(|j| Box::new(SicGtPlayer::new(k, horizon, player_rng(seed, j))) as Box<dyn Player>)
            .collect();
        (env, players)
    }

    #[test]
    fn window_union_is_sorted() {
        assert_eq!(arms_to_pull(&[4], &[0, 1, 2, 3], 2, 0), vec![0, 1, 4]);
        assert_eq!(arms_to_pull(&[4], &[0, 1, 2, 3], 2, 1), vec![2, 3, 4]);
        assert_eq!(arms_to_pull(&[], &[0, 1, 2], 2, 1), vec![0, 2]);
    }

    #[test]
    fn decide_separated_means() {
        let agg = [0.9, 0.1, 0.5, 0.12];
        let (acc, rej) = update_decide(&agg, &[0, 1, 2, 3], 2, 0.05);
        assert_eq!(acc, vec![0, 2]);
        assert_eq!(rej, vec![1, 3]);
        let (acc, rej) = update_decide(&agg, &[0, 1, 2, 3], 2, 0.5);
        assert!(acc.is_empty() && rej.is_empty());
    }

    #[test]
    fn bound_with_two_players_uses_plain_mean() {
        assert_eq!(update_bound(2.0, 2, 1), 4.0 * (2.0f64 / 8.0).sqrt());
        assert_eq!(update_bound(2.0, 5, 1), 4.0 * (2.0f64 / 12.0).sqrt());
    }

    #[test]
    fn honest_run_reaches_exploitation_without_punishment() {
        let (env, mut players) = honest(5, 3, 100_000, 3);
        run(&env, &mut players, &mut env_rng(3), &mut []).unwrap();
        for p in &players {
            assert_eq!(p.punished_at(), None);
            assert_eq!(p.phase(), Phase::Exploit);
            let s = p.as_any().downcast_ref::<SicGtPlayer>().unwrap();
            assert_eq!(s.opt(), &[0, 1, 2]);
        }
    }

    #[test]
    fn lie_to_leaders_is_caught() {
        let (k, m, horizon, seed) = (5, 3, 100_000, 5);
        let (env, mut players) = honest(k, m, horizon, seed);
        let lie = StatLie {
            arm: 4,
            values: [1.0, 0.0],
        };
        let hooks = SicGtHooks {
            rank_target: Some(2),
            stat_lie: Some(lie),
            ..Default::default()
        };
        players[2] = Box::new(SicGtPlayer::with_hooks(
            k,
            horizon,
            hooks,
            player_rng(seed, 2),
        ));
        run(&env, &mut players, &mut env_rng(seed), &mut []).unwrap();
        assert_eq!(players[2].rank(), Some(2));
        for p in &players[..2] {
            assert!(p.punished_at().is_some());
            assert_eq!(p.phase(), Phase::Punish);
        }
    }
}

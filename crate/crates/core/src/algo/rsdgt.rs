//! Full-sensing, semi-heterogeneous algorithm: after the shared
//! initialization, time is cut into blocks of `5K + MK + M^2 K` rounds. The
//! dictator order rotates by one player every block. An exploring player
//! broadcasts her ordered top-M once it is statistically separated, after
//! which everybody plays the serial-dictatorship assignment of the known
//! preferences. Random inspections keep exploiting players honest.

use std::any::Any;

use rand::Rng;

use super::{ranking, ArmStats, FullSensingInit, PunishEstimator};
use crate::env::Observation;
use crate::error::{Error, Result};
use crate::math::semi_heterogeneous_alpha;
use crate::player::{Phase, Player};
use crate::rng::SimRng;

/// Serial-dictatorship attribution of one block.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RsdAssignment {
    /// Arm of each player with known preferences; `None` while exploring.
    pub arms: Vec<Option<usize>>,
    /// Lowest arm left free by the known players.
    pub comm_arm: usize,
}

impl RsdAssignment {
    /// Arm scheduled for `player` at round `t`.
    pub fn arm(&self, player: usize, t: u64, arms: usize) -> usize {
        self.arms[player].unwrap_or(((t + player as u64) % arms as u64) as usize)
    }
}

/// Dictators in order `block, block + 1, ...` (mod M) take their best arm
/// not yet taken; players with unknown preferences explore.
pub fn rsd_attribution(
    prefs: &[Option<Vec<usize>>],
    block: usize,
    arms: usize,
) -> Result<RsdAssignment> {
    let m = prefs.len();
    let mut taken = vec![false; arms];
    let mut out = vec![None; m];
    for s in 0..m {
        let dict = (s + block) % m;
        let Some(col) = &prefs[dict] else { continue };
        let mut seen = vec![false; arms];
        for &a in col {
            if a >= arms || seen[a] {
                return Err(Error::domain(format!(
                    "preference list {col:?} of player {dict} is not a list of distinct arms"
                )));
            }
            seen[a] = true;
        }
        let pick = col
            .iter()
            .copied()
            .find(|&a| !taken[a])
            .ok_or_else(|| Error::domain(format!("player {dict} has no free preferred arm")))?;
        taken[pick] = true;
        out[dict] = Some(pick);
    }
    let comm_arm = (0..arms)
        .find(|&a| !taken[a])
        .ok_or_else(|| Error::domain("no free communication arm, M must be below K"))?;
    Ok(RsdAssignment {
        arms: out,
        comm_arm,
    })
}

/// Whether the top `m` of `order` are pairwise separated, including from
/// the (m+1)-th, by their confidence intervals.
pub fn top_m_separated(stats: &ArmStats, order: &[usize], m: usize, log_t: f64) -> bool {
    if order.len() <= m {
        return false;
    }
    let radius = |k: usize| {
        let n = stats.pulls[k];
        if n == 0 {
            f64::INFINITY
        } else {
            (2.0 * log_t / n as f64).sqrt()
        }
    };
    (0..m).all(|i| {
        let (a, b) = (order[i], order[i + 1]);
        stats.mean(a) - radius(a) >= stats.mean(b) + radius(b)
    })
}

/// Repetition slot of offset `n` in `1..=M^2 K`: `(repeater, preference slot)`.
pub fn repetition_slot(n: u64, k: u64, m: u64) -> (usize, usize) {
    let slot = ((n - 1) % (m * k) + 1).div_ceil(k);
    let repeater = n.div_ceil(m * k);
    (repeater as usize - 1, slot as usize - 1)
}

/// Rejects configurations the algorithm cannot run.
pub fn check_config(arms: usize, players: usize, delta: f64) -> Result<()> {
    if players >= arms {
        return Err(Error::config(
            "M",
            format!("rsd-gt needs M < K, got M = {players}, K = {arms}"),
        ));
    }
    if !(0.0..1.0).contains(&delta) {
        return Err(Error::config("delta", format!("{delta} is not in [0, 1)")));
    }
    let alpha = semi_heterogeneous_alpha(arms, players, delta);
    if alpha >= 1.0 {
        return Err(Error::config(
            "delta",
            format!("punishment factor {alpha:.4} >= 1 for delta = {delta}, K = {arms}, M = {players}; punishment cannot be guaranteed"),
        ));
    }
    Ok(())
}

/// Deviations a selfish player can graft onto the protocol.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RsdGtHooks {
    pub rank_target: Option<usize>,
    /// Preferences are broadcast from these means instead of the empirical ones.
    pub fake_means: Option<Vec<f64>>,
    /// Once every preference is known, sit on this arm instead of the attributed one.
    pub exploit_arm: Option<usize>,
}

#[derive(Debug, Clone)]
struct Sending {
    lambda: Vec<usize>,
    tilde: usize,
    punish: bool,
}

#[derive(Debug, Clone)]
struct Listening {
    sender: usize,
    lambda: Vec<Option<usize>>,
    repeat: bool,
    tilde: usize,
    punish: bool,
    exploring: bool,
}

#[derive(Debug, Clone)]
enum PunishSignal {
    /// Collide twice in a row with every other player.
    Collide {
        targets: Vec<usize>,
        n: usize,
    },
    Waiting,
    Signalling {
        tilde: usize,
    },
    Done,
}

#[derive(Debug, Clone)]
enum Mode {
    Init(FullSensingInit),
    Fallback,
    Explore,
    Exploit,
    Send(Sending),
    Listen(Listening),
    Punish(PunishSignal, PunishEstimator),
}

pub struct RsdGtPlayer {
    arms: usize,
    horizon: u64,
    log_t: f64,
    delta: f64,
    inspect_prob: f64,
    mode: Mode,
    rank: usize,
    m_hat: usize,
    start: u64,
    block_len: u64,
    prefs: Vec<Option<Vec<usize>>>,
    assignment: RsdAssignment,
    stats: ArmStats,
    inspecting: Option<usize>,
    consecutive: u32,
    punished_at: Option<u64>,
    hooks: RsdGtHooks,
    rng: SimRng,
}

impl RsdGtPlayer {
    pub fn new(arms: usize, horizon: u64, delta: f64, rng: SimRng) -> Result<Self> {
        Self::with_hooks(arms, horizon, delta, RsdGtHooks::default(), rng)
    }

    pub fn with_hooks(
        arms: usize,
        horizon: u64,
        delta: f64,
        hooks: RsdGtHooks,
        rng: SimRng,
    ) -> Result<Self> {
        if arms < 2 {
            return Err(Error::config("K", "rsd-gt needs at least two arms"));
        }
        if !(0.0..1.0).contains(&delta) {
            return Err(Error::config("delta", format!("{delta} is not in [0, 1)")));
        }
        if let Some(f) = &hooks.fake_means {
            if f.len() != arms {
                return Err(Error::config(
                    "fake_means",
                    format!("expected {arms} values"),
                ));
            }
        }
        let log_t = (horizon as f64).ln();
        Ok(RsdGtPlayer {
            arms,
            horizon,
            log_t,
            delta,
            inspect_prob: log_t.sqrt() / horizon as f64,
            mode: Mode::Init(FullSensingInit::new(arms, horizon, hooks.rank_target)),
            rank: 0,
            m_hat: 0,
            start: 0,
            block_len: 0,
            prefs: Vec::new(),
            assignment: RsdAssignment::default(),
            stats: ArmStats::new(arms),
            inspecting: None,
            consecutive: 0,
            punished_at: None,
            hooks,
            rng,
        })
    }

    /// Known preference lists, indexed by rank.
    pub fn preferences(&self) -> &[Option<Vec<usize>>] {
        &self.prefs
    }

    pub fn assignment(&self) -> &RsdAssignment {
        &self.assignment
    }

    pub fn stats(&self) -> &ArmStats {
        &self.stats
    }

    pub fn block_len(&self) -> u64 {
        self.block_len
    }

    /// First round after initialization.
    pub fn start_round(&self) -> u64 {
        self.start
    }

    pub fn is_listening(&self) -> bool {
        matches!(self.mode, Mode::Listen(_))
    }

    pub fn punish_estimator(&self) -> Option<&PunishEstimator> {
        match &self.mode {
            Mode::Punish(_, pe) => Some(pe),
            _ => None,
        }
    }

    /// `(blocktime in 1..=L, block index in 0..M)`.
    fn clock(&self, t: u64) -> (u64, usize) {
        let s = t - self.start;
        (
            s % self.block_len + 1,
            ((s / self.block_len) % self.m_hat as u64) as usize,
        )
    }

    fn k(&self) -> u64 {
        self.arms as u64
    }

    fn sweep(&self, t: u64, offset: usize) -> usize {
        ((t + offset as u64) % self.k()) as usize
    }

    fn all_known(&self) -> bool {
        self.prefs.iter().all(Option::is_some)
    }

    fn exploit_players_min(&self, include_self: bool) -> usize {
        (0..self.m_hat)
            .find(|&i| (include_self || i != self.rank) && self.prefs[i].is_some())
            .unwrap_or(self.rank)
    }

    /// SendBit at offset `n` in `1..=2K`.
    fn send_bit_arm(&self, t: u64, n: u64, tilde: usize) -> usize {
        if n <= self.k() {
            self.sweep(t, tilde)
        } else {
            self.assignment.comm_arm
        }
    }

    fn scheduled_for_others(&self, arm: usize, t: u64) -> bool {
        (0..self.m_hat).any(|i| i != self.rank && self.assignment.arm(i, t, self.arms) == arm)
    }

    fn repetition_slot(&self, n: u64) -> (usize, usize) {
        repetition_slot(n, self.k(), self.m_hat as u64)
    }

    fn preference_order(&self) -> Vec<usize> {
        let order = ranking(&self.stats.means());
        if !top_m_separated(&self.stats, &order, self.m_hat, self.log_t) {
            return Vec::new();
        }
        match &self.hooks.fake_means {
            Some(fake) => ranking(fake)[..self.m_hat].to_vec(),
            None => order[..self.m_hat].to_vec(),
        }
    }

    fn trigger(&mut self, t: u64) {
        if matches!(self.mode, Mode::Punish(..)) {
            return;
        }
        self.punished_at.get_or_insert(t);
        log::debug!("rank {} starts punishing at round {t}", self.rank);
        let signal = if self.all_known() {
            let targets = (0..self.m_hat)
                .filter(|&i| i != self.rank)
                .flat_map(|i| [i, i])
                .collect();
            PunishSignal::Collide { targets, n: 0 }
        } else {
            PunishSignal::Waiting
        };
        let alpha = semi_heterogeneous_alpha(self.arms, self.m_hat, self.delta);
        let est = PunishEstimator::new(self.arms, self.m_hat, alpha, self.log_t, self.rank);
        self.mode = Mode::Punish(signal, est);
    }

    fn start_listening(&mut self, bt: u64, block: usize) {
        let exploring = matches!(self.mode, Mode::Explore);
        let l = Listening {
            sender: block,
            lambda: vec![None; self.m_hat],
            repeat: bt <= 2 * self.k(),
            tilde: self.exploit_players_min(true),
            punish: self.prefs[block].is_some(),
            exploring,
        };
        self.mode = Mode::Listen(l);
    }

    fn finish_init(&mut self, t: u64, m_hat: usize, rank: Option<usize>) {
        let Some(rank) = rank else {
            log::debug!("no rank after musical chairs, falling back to uniform play");
            self.mode = Mode::Fallback;
            return;
        };
        if let Err(e) = check_config(self.arms, m_hat, self.delta) {
            log::warn!("estimated {m_hat} players: {e}; falling back to uniform play");
            self.mode = Mode::Fallback;
            return;
        }
        let (k, m) = (self.arms as u64, m_hat as u64);
        self.rank = rank;
        self.m_hat = m_hat;
        self.start = t + 1;
        self.block_len = 5 * k + m * k + m * m * k;
        self.prefs = vec![None; m_hat];
        self.mode = Mode::Explore;
    }

    fn block_start(&mut self, block: usize) {
        self.assignment = rsd_attribution(&self.prefs, block, self.arms)
            .expect("preference lists are validated on reception");
        if matches!(self.mode, Mode::Explore) && block == self.rank {
            let lambda = self.preference_order();
            if !lambda.is_empty() {
                let tilde = self.exploit_players_min(false);
                self.mode = Mode::Send(Sending {
                    lambda,
                    tilde,
                    punish: false,
                });
            }
        }
        if let Mode::Punish(sig @ PunishSignal::Waiting, _) = &mut self.mode {
            *sig = PunishSignal::Signalling {
                tilde: (0..self.m_hat)
                    .find(|&i| i != self.rank && self.prefs[i].is_some())
                    .unwrap_or(self.rank),
            };
        }
    }

    fn listen_arm(&self, l: &Listening, t: u64, bt: u64) -> usize {
        let k = self.k();
        let own = self.sweep(t, self.rank);
        if bt <= 2 * k {
            own
        } else if bt <= 4 * k {
            if l.repeat {
                self.send_bit_arm(t, bt - 2 * k, l.tilde)
            } else {
                own
            }
        } else if bt <= 5 * k {
            if l.punish {
                self.rank
            } else {
                own
            }
        } else if bt <= 5 * k + self.m_hat as u64 * k {
            own
        } else {
            let (repeater, slot) = self.repetition_slot(bt - 5 * k - self.m_hat as u64 * k);
            match (repeater == self.rank, l.lambda[slot]) {
                (true, Some(a)) => a,
                _ => own,
            }
        }
    }

    fn send_arm(&self, s: &Sending, t: u64, bt: u64) -> usize {
        let k = self.k();
        let m = self.m_hat as u64;
        if bt <= 2 * k {
            self.send_bit_arm(t, bt, s.tilde)
        } else if bt <= 5 * k {
            self.sweep(t, self.rank)
        } else if bt <= 5 * k + m * k {
            s.lambda[((bt - 5 * k).div_ceil(k) - 1) as usize]
        } else {
            let (repeater, slot) = self.repetition_slot(bt - 5 * k - m * k);
            if repeater == self.rank {
                s.lambda[slot]
            } else {
                self.sweep(t, self.rank)
            }
        }
    }
}

impl Player for RsdGtPlayer {
    fn act(&mut self, t: u64) -> usize {
        self.inspecting = None;
        match &mut self.mode {
            Mode::Init(init) => return init.act(&mut self.rng),
            Mode::Fallback => return self.rng.gen_range(0..self.arms),
            _ => {}
        }
        let (bt, block) = self.clock(t);
        if bt == 1 {
            self.block_start(block);
        }
        if let Mode::Punish(PunishSignal::Done, pe) = &mut self.mode {
            return pe.act(t, &mut self.rng);
        }
        match &self.mode {
            Mode::Init(_) | Mode::Fallback => unreachable!(),
            Mode::Explore => self.assignment.arm(self.rank, t, self.arms),
            Mode::Exploit => {
                if self.all_known() {
                    if let Some(a) = self.hooks.exploit_arm {
                        return a;
                    }
                    if self.m_hat > 1 && self.rng.gen::<f64>() < self.inspect_prob {
                        let mut i = self.rng.gen_range(0..self.m_hat - 1);
                        if i >= self.rank {
                            i += 1;
                        }
                        self.inspecting = Some(i);
                        return self.assignment.arm(i, t, self.arms);
                    }
                }
                self.assignment.arm(self.rank, t, self.arms)
            }
            Mode::Send(s) => self.send_arm(s, t, bt),
            Mode::Listen(l) => self.listen_arm(l, t, bt),
            Mode::Punish(sig, _) => match sig {
                PunishSignal::Collide { targets, n } => {
                    self.assignment.arm(targets[*n], t, self.arms)
                }
                PunishSignal::Waiting => self.assignment.arm(self.rank, t, self.arms),
                PunishSignal::Signalling { tilde } => {
                    let k = self.k();
                    if bt <= 3 * k {
                        self.sweep(t, self.rank)
                    } else {
                        self.send_bit_arm(t, bt - 3 * k, *tilde)
                    }
                }
                PunishSignal::Done => unreachable!("handled above"),
            },
        }
    }

    fn observe(&mut self, obs: &Observation) {
        let t = obs.t;
        let collision = obs.collision.unwrap_or(false);
        if let Mode::Init(init) = &mut self.mode {
            init.observe(obs);
            if init.finished() {
                let m_hat = init.m_hat().expect("estimate fixed");
                let rank = init.rank();
                self.finish_init(t, m_hat, rank);
            }
            return;
        }
        if matches!(self.mode, Mode::Fallback) {
            return;
        }
        let (bt, block) = self.clock(t);
        let k = self.k();
        let m = self.m_hat as u64;
        let last = bt == self.block_len;
        match &mut self.mode {
            Mode::Init(_) | Mode::Fallback => unreachable!(),
            Mode::Explore => {
                if let Some(x) = obs.value {
                    self.stats.push(obs.arm, x);
                }
                if obs.arm == self.assignment.comm_arm && collision {
                    if bt > 4 * k {
                        self.trigger(t);
                    } else {
                        self.start_listening(bt, block);
                    }
                }
            }
            Mode::Exploit => {
                if self.inspecting.is_some() {
                    self.consecutive = 0;
                    if !collision {
                        self.trigger(t);
                    }
                } else if self.all_known() {
                    self.consecutive = if collision { self.consecutive + 1 } else { 0 };
                    if self.consecutive >= 2 {
                        self.trigger(t);
                    }
                } else if collision && !self.scheduled_for_others(obs.arm, t) {
                    if bt > 4 * k {
                        self.trigger(t);
                    } else {
                        self.start_listening(bt, block);
                    }
                }
            }
            Mode::Send(s) => {
                if bt > 4 * k && bt <= 5 * k && collision {
                    s.punish = true;
                } else if bt > 5 * k + m * k && collision {
                    let (repeater, slot) = repetition_slot(bt - 5 * k - m * k, k, m);
                    if repeater != self.rank && s.lambda[slot] != obs.arm {
                        s.punish = true;
                    }
                }
                if last {
                    let (lambda, punish) = (s.lambda.clone(), s.punish);
                    self.prefs[self.rank] = Some(lambda);
                    self.mode = Mode::Exploit;
                    self.consecutive = 0;
                    if punish {
                        self.trigger(t);
                    }
                }
            }
            Mode::Listen(l) => {
                if bt > 4 * k && bt <= 5 * k {
                    l.punish |= collision;
                } else if bt > 5 * k && bt <= 5 * k + m * k {
                    if collision {
                        let slot = ((bt - 5 * k).div_ceil(k) - 1) as usize;
                        if l.lambda[slot].is_some() {
                            l.punish = true;
                        } else {
                            l.lambda[slot] = Some(obs.arm);
                        }
                    }
                } else if bt > 5 * k + m * k && collision {
                    let (repeater, slot) = repetition_slot(bt - 5 * k - m * k, k, m);
                    if repeater != self.rank && l.lambda[slot] != Some(obs.arm) {
                        l.punish = true;
                    }
                }
                if last {
                    let received: Option<Vec<usize>> = l.lambda.iter().copied().collect();
                    let distinct = received.as_ref().is_some_and(|v| {
                        let mut s = v.clone();
                        s.sort_unstable();
                        s.dedup();
                        s.len() == v.len()
                    });
                    let (punish, sender, exploring) =
                        (l.punish || !distinct, l.sender, l.exploring);
                    self.mode = if exploring {
                        Mode::Explore
                    } else {
                        Mode::Exploit
                    };
                    self.consecutive = 0;
                    if punish {
                        self.trigger(t);
                    } else {
                        self.prefs[sender] = received;
                    }
                }
            }
            Mode::Punish(sig, pe) => match sig {
                PunishSignal::Collide { targets, n } => {
                    *n += 1;
                    if *n >= targets.len() {
                        *sig = PunishSignal::Done;
                    }
                }
                PunishSignal::Waiting => {}
                PunishSignal::Signalling { .. } => {
                    if bt == 5 * k {
                        *sig = PunishSignal::Done;
                    }
                }
                PunishSignal::Done => pe.observe(obs),
            },
        }
    }

    fn phase(&self) -> Phase {
        match &self.mode {
            Mode::Init(_) => Phase::Init,
            Mode::Fallback => Phase::Fallback,
            Mode::Explore => Phase::Explore,
            Mode::Exploit if self.inspecting.is_some() => Phase::Inspect,
            Mode::Exploit if self.hooks.exploit_arm.is_some() && self.all_known() => Phase::Deviate,
            Mode::Exploit => Phase::Exploit,
            Mode::Send(_) | Mode::Listen(_) => Phase::Communicate,
            Mode::Punish(..) => Phase::Punish,
        }
    }

    fn rank(&self) -> Option<usize> {
        match &self.mode {
            Mode::Init(init) => init.rank(),
            Mode::Fallback => None,
            _ => Some(self.rank),
        }
    }

    fn estimated_players(&self) -> Option<usize> {
        match &self.mode {
            Mode::Init(init) => init.m_hat(),
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

impl std::fmt::Debug for RsdGtPlayer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RsdGtPlayer")
            .field("arms", &self.arms)
            .field("horizon", &self.horizon)
            .field("rank", &self.rank)
            .field("m_hat", &self.m_hat)
            .field("prefs", &self.prefs)
            .finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{EnvModel, RoundTrace, Sensing};
    use crate::rng::{env_rng, player_rng};
    use crate::sim::run;

    fn instance(horizon: u64) -> EnvModel {
        let matrix = vec![
            vec![0.9, 0.8, 0.6, 0.3, 0.2],
            vec![0.75, 0.95, 0.55, 0.3, 0.2],
            vec![0.9, 0.8, 0.62, 0.3, 0.2],
        ];
        EnvModel::heterogeneous(matrix, 0.1, horizon, Sensing::Full).unwrap()
    }

    fn team(env: &EnvModel, seed: u64) -> Vec<Box<dyn Player>> {
        (0..env.players)
            .map(|j| {
                let p = RsdGtPlayer::new(env.arms, env.horizon, env.delta(), player_rng(seed, j))
                    .unwrap();
                Box::new(p) as Box<dyn Player>
            })
            .collect()
    }

    #[test]
    fn attribution_rotates_dictators() {
        let prefs = vec![Some(vec![0, 1]), Some(vec![0, 2])];
        let a = rsd_attribution(&prefs, 0, 4).unwrap();
        assert_eq!(a.arms, vec![Some(0), Some(2)]);
        assert_eq!(a.comm_arm, 1);
        let b = rsd_attribution(&prefs, 1, 4).unwrap();
        assert_eq!(b.arms, vec![Some(1), Some(0)]);
        assert_eq!(b.comm_arm, 2);
        let c = rsd_attribution(&[None, Some(vec![3, 1])], 0, 4).unwrap();
        assert_eq!(c.arms, vec![None, Some(3)]);
        assert_eq!(c.arm(0, 6, 4), 2);
        assert_eq!(c.comm_arm, 0);
        assert!(rsd_attribution(&[Some(vec![1, 1])], 0, 3).is_err());
        assert!(rsd_attribution(&[Some(vec![0]), Some(vec![1])], 0, 2).is_err());
    }

    #[test]
    fn repetition_slots() {
        // K = 2, M = 2: repeater 0 sends slots 0,0,1,1 then repeater 1
        let got: Vec<_> = (1..=8).map(|n| repetition_slot(n, 2, 2)).collect();
        assert_eq!(
            got,
            vec![
                (0, 0),
                (0, 0),
                (0, 1),
                (0, 1),
                (1, 0),
                (1, 0),
                (1, 1),
                (1, 1)
            ]
        );
    }

    #[test]
    fn config_checks() {
        assert!(check_config(5, 3, 0.05).is_ok());
        assert!(check_config(3, 3, 0.0).is_err());
        assert!(check_config(5, 3, 0.3).is_err());
    }

    #[test]
    fn honest_run_learns_all_preferences() {
        let env = instance(100_000);
        let mut players = team(&env, 1);
        let mut coop_collisions = 0;
        let mut obs = |tr: &RoundTrace, ph: &[Phase]| {
            for i in 0..ph.len() {
                for j in i + 1..ph.len() {
                    if ph[i] == Phase::Exploit
                        && ph[j] == Phase::Exploit
                        && tr.actions[i] == tr.actions[j]
                    {
                        coop_collisions += 1;
                    }
                }
            }
        };
        run(&env, &mut players, &mut env_rng(1), &mut [&mut obs]).unwrap();
        assert_eq!(coop_collisions, 0);
        for p in &players {
            assert_eq!(p.punished_at(), None);
            assert_eq!(p.phase(), Phase::Exploit);
            let r = p.as_any().downcast_ref::<RsdGtPlayer>().unwrap();
            let by_player: Vec<Vec<usize>> = (0..3)
                .map(|j| {
                    let rank = players[j].rank().unwrap();
                    r.preferences()[rank].clone().unwrap()
                })
                .collect();
            assert_eq!(by_player, vec![vec![0, 1, 2], vec![1, 0, 2], vec![0, 1, 2]]);
        }
    }

    #[test]
    fn squatting_another_arm_is_punished() {
        let env = instance(100_000);
        let mut players = team(&env, 2);
        let hooks = RsdGtHooks {
            exploit_arm: Some(0),
            ..Default::default()
        };
        players[1] = Box::new(
            RsdGtPlayer::with_hooks(5, env.horizon, env.delta(), hooks, player_rng(2, 1)).unwrap(),
        );
        run(&env, &mut players, &mut env_rng(2), &mut []).unwrap();
        for j in [0, 2] {
            assert!(players[j].punished_at().is_some());
            assert_eq!(players[j].phase(), Phase::Punish);
        }
    }
}

//! Communication through forced collisions.
//!
//! A 1 bit is sent by pulling the receiver's arm (forcing a collision), a 0
//! bit by staying on one's own arm. A third party can only add collisions, so
//! corruption flips bits from 0 to 1 and never back; the back-and-forth echo
//! exploits this to detect any tampering.
//!
//! All machines here are resumable: ask for `arm`, then `feed` the collision
//! bit observed on that round. Their durations depend only on their sizes.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `p + 1` bits `m_0..m_p` encoding `sum m_n 2^-n`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BitMessage {
    bits: Vec<bool>,
}

impl BitMessage {
    /// Dyadic writing of `value`, which must lie on the `2^-p` grid in [0, 1].
    pub fn encode(value: f64, p: u32) -> Result<Self> {
        if p > 52 {
            return Err(Error::Encoding(format!(
                "{} bits exceed f64 precision",
                p + 1
            )));
        }
        let scale = (p as f64).exp2();
        let scaled = value * scale;
        if !(0.0..=1.0).contains(&value) || scaled.fract() != 0.0 {
            return Err(Error::Encoding(format!(
                "{value} is not a multiple of 2^-{p} in [0, 1]"
            )));
        }
        let v = scaled as u64;
        let bits = (0..=p).map(|n| (v >> (p - n)) & 1 == 1).collect();
        Ok(BitMessage { bits })
    }

    pub fn from_bits(bits: Vec<bool>) -> Self {
        BitMessage { bits }
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    /// Decoded value; may exceed 1 if the bits were corrupted.
    pub fn value(&self) -> f64 {
        self.bits
            .iter()
            .enumerate()
            .filter(|&(_, &b)| b)
            .map(|(n, _)| (-(n as f64)).exp2())
            .sum()
    }

    /// True if every bit set here is also set in `other`.
    pub fn is_subset_of(&self, other: &BitMessage) -> bool {
        self.bits.len() == other.bits.len()
            && self.bits.iter().zip(&other.bits).all(|(&a, &b)| !a || b)
    }
}

/// Result of a back-and-forth exchange, as seen by the sender.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommOutcome {
    pub received: BitMessage,
    pub corrupted: bool,
}

/// Arms pulled by the sender of `value` over its `p + 1` rounds.
pub fn send_value_schedule(
    sender_arm: usize,
    receiver_arm: usize,
    p: u32,
    value: f64,
) -> Result<Vec<usize>> {
    if sender_arm == receiver_arm {
        return Err(Error::Encoding("sender and receiver share an arm".into()));
    }
    let msg = BitMessage::encode(value, p)?;
    Ok(msg
        .bits()
        .iter()
        .map(|&b| if b { receiver_arm } else { sender_arm })
        .collect())
}

/// Value carried by the collision bits seen on the receiver's own arm.
pub fn receive_value(collision_bits: &[bool]) -> f64 {
    BitMessage::from_bits(collision_bits.to_vec()).value()
}

/// One-way transmission of a bit string.
#[derive(Debug, Clone)]
pub struct Transmit {
    bits: Vec<bool>,
    own_arm: usize,
    target_arm: usize,
    n: usize,
}

impl Transmit {
    pub fn new(msg: &BitMessage, own_arm: usize, target_arm: usize) -> Self {
        Transmit {
            bits: msg.bits.clone(),
            own_arm,
            target_arm,
            n: 0,
        }
    }

    pub fn arm(&self) -> usize {
        if self.bits[self.n] {
            self.target_arm
        } else {
            self.own_arm
        }
    }

    pub fn advance(&mut self) {
        self.n += 1;
    }

    pub fn done(&self) -> bool {
        self.n >= self.bits.len()
    }
}

/// One-way reception: sit on the own arm and record collisions.
#[derive(Debug, Clone)]
pub struct Receive {
    own_arm: usize,
    len: usize,
    bits: Vec<bool>,
}

impl Receive {
    pub fn new(own_arm: usize, len: usize) -> Self {
        Receive {
            own_arm,
            len,
            bits: Vec::with_capacity(len),
        }
    }

    pub fn arm(&self) -> usize {
        self.own_arm
    }

    pub fn feed(&mut self, collision: bool) {
        self.bits.push(collision);
    }

    pub fn done(&self) -> bool {
        self.bits.len() >= self.len
    }

    pub fn message(&self) -> BitMessage {
        BitMessage::from_bits(self.bits.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Sender,
    Receiver,
}

/// Send then echo: `2 * len` rounds. The receiver echoes the raw bits it
/// decoded, the sender compares the echo with what it sent.
#[derive(Debug, Clone)]
pub struct BackAndForth {
    role: Role,
    own_arm: usize,
    peer_arm: usize,
    len: usize,
    n: usize,
    sent: Vec<bool>,
    first: Vec<bool>,
    echo: Vec<bool>,
}

impl BackAndForth {
    pub fn sender(msg: &BitMessage, own_arm: usize, receiver_arm: usize) -> Self {
        BackAndForth {
            role: Role::Sender,
            own_arm,
            peer_arm: receiver_arm,
            len: msg.len(),
            n: 0,
            sent: msg.bits.clone(),
            first: Vec::new(),
            echo: Vec::with_capacity(msg.len()),
        }
    }

    pub fn receiver(len: usize, own_arm: usize, sender_arm: usize) -> Self {
        BackAndForth {
            role: Role::Receiver,
            own_arm,
            peer_arm: sender_arm,
            len,
            n: 0,
            sent: Vec::new(),
            first: Vec::with_capacity(len),
            echo: Vec::new(),
        }
    }

    pub fn duration(&self) -> usize {
        2 * self.len
    }

    pub fn arm(&self) -> usize {
        let forward = self.n < self.len;
        match (self.role, forward) {
            (Role::Sender, true) if self.sent[self.n] => self.peer_arm,
            (Role::Receiver, false) if self.first[self.n - self.len] => self.peer_arm,
            _ => self.own_arm,
        }
    }

    pub fn feed(&mut self, collision: bool) {
        let forward = self.n < self.len;
        match (self.role, forward) {
            (Role::Receiver, true) => self.first.push(collision),
            (Role::Sender, false) => self.echo.push(collision),
            _ => {}
        }
        self.n += 1;
    }

    pub fn done(&self) -> bool {
        self.n >= 2 * self.len
    }

    /// Receiver: the message decoded on the forward leg, once available.
    pub fn received(&self) -> Option<BitMessage> {
        (self.role == Role::Receiver && self.first.len() == self.len)
            .then(|| BitMessage::from_bits(self.first.clone()))
    }

    /// Sender: the echo and the corruption verdict, once the exchange ended.
    pub fn outcome(&self) -> Option<CommOutcome> {
        (self.role == Role::Sender && self.done()).then(|| CommOutcome {
            received: BitMessage::from_bits(self.echo.clone()),
            corrupted: self.echo != self.sent,
        })
    }
}

/// Simulates one back-and-forth exchange in which a third party collides
/// with the receiver at the forward rounds `flips_forward` and with the
/// sender at the echo rounds `flips_back`.
pub fn back_and_forth(
    p: u32,
    value: f64,
    flips_forward: &[usize],
    flips_back: &[usize],
) -> Result<CommOutcome> {
    let msg = BitMessage::encode(value, p)?;
    let (sender_arm, receiver_arm) = (0, 1);
    let mut s = BackAndForth::sender(&msg, sender_arm, receiver_arm);
    let mut r = BackAndForth::receiver(msg.len(), receiver_arm, sender_arm);
    let len = msg.len();
    for n in 0..2 * len {
        let (a_s, a_r) = (s.arm(), r.arm());
        let jam = if n < len {
            flips_forward.contains(&n)
        } else {
            flips_back.contains(&(n - len))
        };
        let jam_arm = if n < len { receiver_arm } else { sender_arm };
        let load =
            |arm: usize| (a_s == arm) as u32 + (a_r == arm) as u32 + (jam && jam_arm == arm) as u32;
        let (c_s, c_r) = (load(a_s) > 1, load(a_r) > 1);
        s.feed(c_s);
        r.feed(c_r);
    }
    Ok(s.outcome().expect("exchange finished"))
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum SetStage {
    Length { n: usize },
    Elements { idx: usize, n: usize },
    Done,
}

/// Set broadcast from the leaders: K rounds announcing the cardinality, then
/// one K-round block per element. Listeners scan arm `(t + offset) mod K`.
#[derive(Debug, Clone)]
pub struct SetBroadcast {
    arms: usize,
    offset: usize,
    leader: bool,
    stage: SetStage,
    length: usize,
    set: Vec<usize>,
    heard: BTreeSet<usize>,
    punish: bool,
}

impl SetBroadcast {
    /// `set` is ignored for non-leaders.
    pub fn new(arms: usize, offset: usize, leader: bool, set: &[usize]) -> Self {
        let mut set = set.to_vec();
        set.sort_unstable();
        set.dedup();
        SetBroadcast {
            arms,
            offset,
            leader,
            stage: SetStage::Length { n: 0 },
            length: if leader { set.len() } else { 0 },
            set: if leader { set } else { Vec::new() },
            heard: BTreeSet::new(),
            punish: false,
        }
    }

    fn scan_arm(&self, t: u64) -> usize {
        ((t + self.offset as u64) % self.arms as u64) as usize
    }

    pub fn arm(&self, t: u64) -> usize {
        match self.stage {
            SetStage::Length { .. } if self.leader && self.length > 0 => self.length - 1,
            SetStage::Elements { idx, .. } if self.leader => self.set[idx],
            _ => self.scan_arm(t),
        }
    }

    pub fn feed(&mut self, t: u64, collision: bool) {
        match self.stage {
            SetStage::Length { n } => {
                if !self.leader && collision {
                    if self.length != 0 {
                        self.punish = true;
                    } else {
                        self.length = self.scan_arm(t) + 1;
                    }
                }
                self.stage = if n + 1 < self.arms {
                    SetStage::Length { n: n + 1 }
                } else if self.length > 0 {
                    SetStage::Elements { idx: 0, n: 0 }
                } else {
                    self.finish()
                };
            }
            SetStage::Elements { idx, n } => {
                if !self.leader && collision {
                    self.heard.insert(self.scan_arm(t));
                }
                self.stage = if n + 1 < self.arms {
                    SetStage::Elements { idx, n: n + 1 }
                } else if idx + 1 < self.length {
                    SetStage::Elements { idx: idx + 1, n: 0 }
                } else {
                    self.finish()
                };
            }
            SetStage::Done => {}
        }
    }

    fn finish(&mut self) -> SetStage {
        if !self.leader {
            if self.heard.len() != self.length {
                self.punish = true;
            }
            self.set = self.heard.iter().copied().collect();
        }
        SetStage::Done
    }

    pub fn done(&self) -> bool {
        self.stage == SetStage::Done
    }

    /// Decoded (or, for leaders, sent) set, sorted.
    pub fn set(&self) -> &[usize] {
        &self.set
    }

    pub fn punish(&self) -> bool {
        self.punish
    }
}

/// What one participant of [`signal_set`] ends with.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SetReception {
    pub rank: usize,
    pub set: Vec<usize>,
    pub punish: bool,
}

/// Simulates a full set broadcast. `leaders` pairs a rank with the set it
/// sends; `listeners` are the other ranks; `jam` lists `(round, arm)` pairs
/// where a third party pulls. Ranks index scan offsets and must be distinct.
pub fn signal_set(
    arms: usize,
    leaders: &[(usize, Vec<usize>)],
    listeners: &[usize],
    jam: &[(u64, usize)],
) -> Vec<SetReception> {
    let mut machines: Vec<(usize, SetBroadcast)> = leaders
        .iter()
        .map(|(r, s)| (*r, SetBroadcast::new(arms, *r, true, s)))
        .chain(
            listeners
                .iter()
                .map(|&r| (r, SetBroadcast::new(arms, r, false, &[]))),
        )
        .collect();
    let mut load = vec![0u32; arms];
    let mut pulls = vec![None; machines.len()];
    let mut t = 0u64;
    while machines.iter().any(|(_, m)| !m.done()) {
        load.iter_mut().for_each(|c| *c = 0);
        for (i, (_, m)) in machines.iter().enumerate() {
            pulls[i] = (!m.done()).then(|| m.arm(t));
            if let Some(a) = pulls[i] {
                load[a] += 1;
            }
        }
        for &(_, a) in jam.iter().filter(|&&(r, _)| r == t) {
            load[a] += 1;
        }
        for (i, (_, m)) in machines.iter_mut().enumerate() {
            if let Some(a) = pulls[i] {
                m.feed(t, load[a] > 1);
            }
        }
        t += 1;
    }
    machines
        .into_iter()
        .map(|(rank, m)| SetReception {
            rank,
            set: m.set().to_vec(),
            punish: m.punish(),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedules() {
        assert_eq!(send_value_schedule(0, 3, 4, 0.0).unwrap(), vec![0; 5]);
        assert_eq!(
            send_value_schedule(0, 3, 4, 1.0).unwrap(),
            vec![3, 0, 0, 0, 0]
        );
        // 0.625 = 0/1 + 1/2 + 0/4 + 1/8
        assert_eq!(
            send_value_schedule(2, 7, 3, 0.625).unwrap(),
            vec![2, 7, 2, 7]
        );
        assert!(send_value_schedule(0, 1, 2, 0.3).is_err());
        assert!(send_value_schedule(1, 1, 2, 0.5).is_err());
    }

    #[test]
    fn receive_examples() {
        assert_eq!(receive_value(&[false; 6]), 0.0);
        assert_eq!(receive_value(&[false, false, true, false]), 0.25);
    }

    #[test]
    fn back_and_forth_examples() {
        let clean = back_and_forth(3, 0.625, &[], &[]).unwrap();
        assert!(!clean.corrupted);
        assert_eq!(clean.received.value(), 0.625);
        assert!(back_and_forth(3, 0.625, &[0], &[]).unwrap().corrupted);
        assert!(back_and_forth(3, 0.625, &[], &[2]).unwrap().corrupted);
        // jamming a 1 bit is invisible and harmless
        assert!(!back_and_forth(3, 0.625, &[1], &[3]).unwrap().corrupted);
    }

    #[test]
    fn set_broadcast_examples() {
        let out = signal_set(6, &[(0, vec![2, 5]), (1, vec![5, 2])], &[2, 3, 4], &[]);
        for r in &out {
            assert_eq!(r.set, vec![2, 5]);
            assert!(!r.punish);
        }
        let out = signal_set(6, &[(0, vec![]), (1, vec![])], &[2, 3], &[]);
        assert!(out.iter().all(|r| r.set.is_empty() && !r.punish));
        let out = signal_set(6, &[(0, vec![1]), (1, vec![1, 3])], &[2, 3, 4], &[]);
        assert!(out.iter().any(|r| r.punish));
    }

    #[test]
    fn jammed_set_is_detected() {
        // an extra collision during the element block adds an element
        let out = signal_set(5, &[(0, vec![3]), (1, vec![3])], &[2, 4], &[(6, 0)]);
        assert!(out.iter().any(|r| r.punish));
    }
}

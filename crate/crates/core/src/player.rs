//! Strategy interface shared by cooperative algorithms and adversaries.

use std::any::Any;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::env::Observation;

/// Coarse phase label, reported every round for traces and event logs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    Init,
    WaitRoom,
    Explore,
    Communicate,
    Exploit,
    Inspect,
    Punish,
    Fallback,
    Deviate,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Init => "init",
            Phase::WaitRoom => "wait-room",
            Phase::Explore => "explore",
            Phase::Communicate => "communicate",
            Phase::Exploit => "exploit",
            Phase::Inspect => "inspect",
            Phase::Punish => "punish",
            Phase::Fallback => "fallback",
            Phase::Deviate => "deviate",
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A decentralized player. It only ever sees its own observations.
///
/// Each round the simulator calls `act`, then `phase`, then `observe` with
/// the outcome of that same round.
pub trait Player: Send {
    fn act(&mut self, t: u64) -> usize;
    fn observe(&mut self, obs: &Observation);
    fn phase(&self) -> Phase;
    fn rank(&self) -> Option<usize> {
        None
    }
    fn estimated_players(&self) -> Option<usize> {
        None
    }
    /// Round at which the player switched to punishment, if it did.
    fn punished_at(&self) -> Option<u64> {
        None
    }
    fn as_any(&self) -> &dyn Any;
}

/// Pulls the same arm forever.
#[derive(Debug, Clone)]
pub struct FixedArm {
    pub arm: usize,
    pub label: Phase,
}

impl Player for FixedArm {
    fn act(&mut self, _t: u64) -> usize {
        self.arm
    }
    fn observe(&mut self, _obs: &Observation) {}
    fn phase(&self) -> Phase {
        self.label
    }
    fn as_any(&self) -> &dyn Any {
        self
    }
}

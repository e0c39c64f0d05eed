//! Decentralized multiplayer multi-armed bandits with collisions, robust to a
//! selfish player.

pub mod acceptance;
pub mod adversary;
pub mod algo;
pub mod commproto;
pub mod env;
pub mod error;
pub mod harness;
pub mod math;
pub mod metrics;
pub mod player;
pub mod rng;
pub mod sim;

pub use env::{ArmDistribution, EnvModel, Means, Observation, RoundTrace, Sensing};
pub use error::{Error, Result};
pub use player::{Phase, Player};

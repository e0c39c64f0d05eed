//! The synchronous run loop.

use crate::env::{EnvModel, Observation, RoundTrace};
use crate::error::Result;
use crate::player::{Phase, Player};
use crate::rng::SimRng;

/// Streaming consumer of round outcomes. `phases[j]` is player j's phase at
/// the moment it chose its action.
pub trait RoundObserver {
    fn on_round(&mut self, trace: &RoundTrace, phases: &[Phase]);
}

impl<F: FnMut(&RoundTrace, &[Phase])> RoundObserver for F {
    fn on_round(&mut self, trace: &RoundTrace, phases: &[Phase]) {
        self(trace, phases)
    }
}

/// Runs rounds `0..env.horizon`.
pub fn run(
    env: &EnvModel,
    players: &mut [Box<dyn Player>],
    rng: &mut SimRng,
    observers: &mut [&mut dyn RoundObserver],
) -> Result<()> {
    run_rounds(env, players, rng, 0, env.horizon, observers)
}

/// Runs rounds `start..end` (end clipped to the horizon).
pub fn run_rounds(
    env: &EnvModel,
    players: &mut [Box<dyn Player>],
    rng: &mut SimRng,
    start: u64,
    end: u64,
    observers: &mut [&mut dyn RoundObserver],
) -> Result<()> {
    let m = players.len();
    let mut actions = vec![0usize; m];
    let mut phases = vec![Phase::Init; m];
    let mut trace = RoundTrace::new(env);
    let mut obs: Vec<Observation> = Vec::with_capacity(m);
    for t in start..end.min(env.horizon) {
        for (j, p) in players.iter_mut().enumerate() {
            actions[j] = p.act(t);
            phases[j] = p.phase();
        }
        env.step(t, &actions, rng, &mut trace, &mut obs)?;
        for (p, o) in players.iter_mut().zip(&obs) {
            p.observe(o);
        }
        for ob in observers.iter_mut() {
            ob.on_round(&trace, &phases);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::Sensing;
    use crate::player::FixedArm;
    use crate::rng::env_rng;

    #[test]
    fn observers_see_every_round() {
        let env = EnvModel::homogeneous(vec![0.2, 0.8], 2, 50, Sensing::Full).unwrap();
        let mut players: Vec<Box<dyn Player>> = vec![
            Box::new(FixedArm {
                arm: 0,
                label: Phase::Exploit,
            }),
            Box::new(FixedArm {
                arm: 0,
                label: Phase::Deviate,
            }),
        ];
        let mut rounds = 0;
        let mut collisions = 0;
        let mut count = |tr: &RoundTrace, ph: &[Phase]| {
            rounds += 1;
            collisions += tr.collided.iter().filter(|&&c| c).count();
            assert_eq!(ph, &[Phase::Exploit, Phase::Deviate]);
        };
        run(&env, &mut players, &mut env_rng(0), &mut [&mut count]).unwrap();
        assert_eq!(rounds, 50);
        assert_eq!(collisions, 100);
    }
}

use mmab_core::env::{EnvModel, RoundTrace, Sensing};
use mmab_core::rng::env_rng;
use proptest::collection::vec;
use proptest::prelude::*;

proptest! {
    #[test]
    fn collisions_only_destroy_reward(
        means in vec(0.0f64..=1.0, 2..8),
        picks in vec(any::<usize>(), 1..8),
        seed in any::<u64>(),
    ) {
        let k = means.len();
        let m = picks.len().min(k);
        let actions: Vec<usize> = picks[..m].iter().map(|a| a % k).collect();
        let env = EnvModel::homogeneous(means, m, 10, Sensing::Full).unwrap();
        let mut trace = RoundTrace::new(&env);
        let mut obs = Vec::new();
        let mut rng = env_rng(seed);
        for t in 0..10 {
            env.step(t, &actions, &mut rng, &mut trace, &mut obs).unwrap();
            let mut arms = actions.clone();
            arms.sort_unstable();
            arms.dedup();
            let available: f64 = arms.iter().map(|&a| trace.draws[a]).sum();
            let got: f64 = trace.rewards.iter().sum();
            prop_assert!(got <= available + 1e-12);
            for i in 0..m {
                for j in i + 1..m {
                    if actions[i] == actions[j] {
                        prop_assert!(trace.collided[i] && trace.collided[j]);
                        prop_assert_eq!(obs[i].value, obs[j].value);
                        prop_assert_eq!(trace.rewards[i], 0.0);
                    }
                }
            }
        }
    }
}

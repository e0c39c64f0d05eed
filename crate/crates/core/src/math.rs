//! Numerical kernels shared by the algorithms.
//!
//! Everything here is pure except the functions taking an `rng`, which only
//! consume the caller's stream.

use rand::Rng;

use crate::error::{Error, Result};

/// Floor applied to estimated means before they enter a power in
/// [`punishment_probs`].
pub const MIN_ESTIMATE: f64 = 1e-12;

fn check_probability(name: &str, x: f64) -> Result<()> {
    if (0.0..=1.0).contains(&x) {
        Ok(())
    } else {
        Err(Error::domain(format!("{name} = {x} is not in [0, 1]")))
    }
}

/// `x ln(x / y)` with the `0 ln 0 = 0` convention.
fn xlogx_over(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else if y == 0.0 {
        f64::INFINITY
    } else {
        x * (x / y).ln()
    }
}

fn kl_unchecked(p: f64, q: f64) -> f64 {
    xlogx_over(p, q) + xlogx_over(1.0 - p, 1.0 - q)
}

/// Bernoulli Kullback-Leibler divergence `kl(p, q)`.
pub fn bernoulli_kl(p: f64, q: f64) -> Result<f64> {
    check_probability("p", p)?;
    check_probability("q", q)?;
    Ok(kl_unchecked(p, q))
}

/// kl-UCB index: `sup { q in [mean, 1] : pulls * kl(mean, q) <= budget }`.
///
/// An arm never pulled gets index 1. The supremum is found by bisection down
/// to the resolution of `f64`, and the returned point is always feasible.
pub fn klucb_index(mean: f64, pulls: u64, budget: f64) -> f64 {
    let mean = mean.clamp(0.0, 1.0);
    if pulls == 0 {
        return 1.0;
    }
    let budget = budget.max(0.0);
    if budget == 0.0 || mean >= 1.0 {
        return mean;
    }
    let n = pulls as f64;
    let mut lo = mean;
    let mut hi = 1.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if n * kl_unchecked(mean, mid) <= budget {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if hi == 1.0 {
        // every probe was feasible: the supremum is within one ulp of 1
        return 1.0;
    }
    lo
}

/// Exploration budget `f(t) = log t + 4 log log t`, clamped to its value at
/// `t = 3` for earlier rounds.
pub fn explo_budget(t: u64) -> f64 {
    let t = t.max(3) as f64;
    t.ln() + 4.0 * t.ln().ln()
}

/// Randomized rounding of `mean` to the grid `2^-p N`, unbiased.
pub fn quantize<R: Rng + ?Sized>(mean: f64, p: u32, rng: &mut R) -> f64 {
    let mean = mean.clamp(0.0, 1.0);
    let scale = (p as f64).exp2();
    let scaled = mean * scale;
    let floor = scaled.floor();
    let frac = scaled - floor;
    if frac > 0.0 && rng.gen::<f64>() < frac {
        (floor + 1.0) / scale
    } else {
        floor / scale
    }
}

/// Mean after discarding one maximal and one minimal value.
///
/// Ties go to the lowest index; when every value is equal, two distinct
/// entries are still removed.
pub fn trimmed_mean(values: &[f64]) -> Result<f64> {
    if values.len() < 3 {
        return Err(Error::domain(format!(
            "trimmed mean needs at least 3 values, got {}",
            values.len()
        )));
    }
    let mut i_max = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[i_max] {
            i_max = i;
        }
    }
    let mut i_min = usize::MAX;
    for (i, &v) in values.iter().enumerate() {
        if i != i_max && (i_min == usize::MAX || v < values[i_min]) {
            i_min = i;
        }
    }
    let total: f64 = values
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != i_max && i != i_min)
        .map(|(_, v)| v)
        .sum();
    Ok(total / (values.len() - 2) as f64)
}

/// `gamma = (1 - 1/K)^(M-1)`: the chance that M-1 uniform players all miss a
/// given arm.
pub fn homogeneous_gamma(arms: usize, players: usize) -> f64 {
    (1.0 - 1.0 / arms as f64).powi(players as i32 - 1)
}

/// Punishment factor for the delta-heterogeneous setting:
/// `((1 + delta) / (1 - delta))^2 * gamma`.
pub fn semi_heterogeneous_alpha(arms: usize, players: usize, delta: f64) -> f64 {
    let ratio = (1.0 + delta) / (1.0 - delta);
    ratio * ratio * homogeneous_gamma(arms, players)
}

/// Multiplicative precision used by the punishment estimators,
/// `(1 - g) / (1 + 3g)`.
pub fn punishment_precision(factor: f64) -> f64 {
    (1.0 - factor) / (1.0 + 3.0 * factor)
}

/// Output of [`punishment_probs`].
#[derive(Debug, Clone, PartialEq)]
pub struct PunishmentProbs {
    /// Lower bounds `p_k` before renormalization; they sum to at most 1.
    pub raw: Vec<f64>,
    /// Sampling distribution actually used.
    pub probs: Vec<f64>,
}

/// Arm sampling probabilities for the collective punishment.
///
/// `p_k = max(1 - (gamma * mean_top_m / est_k)^(1/(M-1)), 0)`, then
/// renormalized to a distribution. Falls back to uniform if every `p_k` is 0.
pub fn punishment_probs(est_means: &[f64], players: usize, gamma: f64) -> Result<PunishmentProbs> {
    if players < 2 {
        return Err(Error::domain("punishment needs at least 2 players"));
    }
    if est_means.is_empty() {
        return Err(Error::domain("punishment needs at least one arm"));
    }
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::domain(format!("gamma = {gamma} is not in (0, 1]")));
    }
    let est: Vec<f64> = est_means.iter().map(|&x| x.max(MIN_ESTIMATE)).collect();
    let mut sorted = est.clone();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let top = players.min(sorted.len());
    let mean_top: f64 = sorted[..top].iter().sum::<f64>() / top as f64;
    let exponent = 1.0 / (players as f64 - 1.0);
    let raw: Vec<f64> = est
        .iter()
        .map(|&x| (1.0 - (gamma * mean_top / x).powf(exponent)).max(0.0))
        .collect();
    let total: f64 = raw.iter().sum();
    let probs = if total > 0.0 {
        raw.iter().map(|p| p / total).collect()
    } else {
        vec![1.0 / est.len() as f64; est.len()]
    };
    Ok(PunishmentProbs { raw, probs })
}

/// Draws an index from a discrete distribution.
pub fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // rounding left u >= acc: return the last arm with positive mass
    probs
        .iter()
        .rposition(|&p| p > 0.0)
        .unwrap_or(probs.len() - 1)
}

/// Running estimator with a data-driven stopping rule that guarantees a
/// multiplicative precision `delta` on the mean with high probability.
#[derive(Debug, Clone, PartialEq)]
pub struct MultPrecisionState {
    pub n: u64,
    pub mean: f64,
    pub sumsq: f64,
    pub std: f64,
    pub delta: f64,
    pub log_t: f64,
}

impl MultPrecisionState {
    pub fn new(delta: f64, log_t: f64) -> Self {
        Self {
            n: 0,
            mean: 0.0,
            sumsq: 0.0,
            std: 0.0,
            delta,
            log_t,
        }
    }

    /// Adds one sample and reports whether the stopping rule now holds.
    pub fn push(&mut self, x: f64) -> bool {
        self.n += 1;
        let n = self.n as f64;
        self.mean += (x - self.mean) / n;
        self.sumsq += x * x;
        self.std = Self::empirical_std(self.n, self.mean, self.sumsq);
        self.stopped()
    }

    pub fn empirical_std(n: u64, mean: f64, sumsq: f64) -> f64 {
        if n < 2 {
            return 0.0;
        }
        let n = n as f64;
        ((sumsq - n * mean * mean) / (n - 1.0)).max(0.0).sqrt()
    }

    /// `delta * mean >= 2 S sqrt(log T / n) + 14 log T / (3 (n - 1))`, n >= 2.
    pub fn stopped(&self) -> bool {
        if self.n < 2 {
            return false;
        }
        let n = self.n as f64;
        let rhs = 2.0 * self.std * (self.log_t / n).sqrt() + 14.0 * self.log_t / (3.0 * (n - 1.0));
        self.delta * self.mean >= rhs
    }
}

/// Functional form of [`MultPrecisionState::push`].
pub fn mult_precision_step(mut state: MultPrecisionState, x: f64) -> (MultPrecisionState, bool) {
    let stopped = state.push(x);
    (state, stopped)
}

/// Sample size after which the stopping rule has fired with high
/// probability, for a stream of mean `mu`.
pub fn mult_precision_n0(delta: f64, mu: f64, log_t: f64) -> u64 {
    let inner = (9.0 / (delta * delta) + 96.0 / delta + 85.0).sqrt() + 3.0 / delta + 1.0;
    (2.0 / (3.0 * delta * mu) * log_t * inner).ceil() as u64 + 2
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn kl_examples() {
        assert_eq!(bernoulli_kl(0.5, 0.5).unwrap(), 0.0);
        // mpmath, 30 digits
        assert_abs_diff_eq!(
            bernoulli_kl(0.2, 0.5).unwrap(),
            0.192_744_757_021_757_43,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            bernoulli_kl(1.0, 0.5).unwrap(),
            std::f64::consts::LN_2,
            epsilon = 1e-15
        );
        assert_eq!(bernoulli_kl(0.3, 0.0).unwrap(), f64::INFINITY);
        assert_eq!(bernoulli_kl(0.3, 1.0).unwrap(), f64::INFINITY);
        assert_eq!(bernoulli_kl(0.0, 0.0).unwrap(), 0.0);
        assert!(bernoulli_kl(1.2, 0.5).is_err());
        assert!(bernoulli_kl(0.5, -0.1).is_err());
    }

    #[test]
    fn klucb_examples() {
        assert_eq!(klucb_index(0.3, 17, 0.0), 0.3);
        assert_eq!(klucb_index(0.42, 0, 3.0), 1.0);
        // root of 10 kl(0.5, q) = 1 from mpmath.findroot
        assert_abs_diff_eq!(
            klucb_index(0.5, 10, 1.0),
            0.712_878_631_455_824,
            epsilon = 1e-6
        );
        assert_eq!(klucb_index(1.0, 5, 2.0), 1.0);
    }

    #[test]
    fn explo_budget_examples() {
        let e = std::f64::consts::E;
        // t = e^e lies between 15 and 16, so check the formula at the real point
        let ee = e.powf(e);
        assert_abs_diff_eq!(ee.ln() + 4.0 * ee.ln().ln(), e + 4.0, epsilon = 1e-12);
        assert_abs_diff_eq!(explo_budget(1), 1.474_803_599_134_905_8, epsilon = 1e-12);
        assert_eq!(explo_budget(1), explo_budget(3));
        assert_abs_diff_eq!(explo_budget(100), 10.713_888_689_219_696, epsilon = 1e-12);
    }

    #[test]
    fn quantize_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 20_000;
        let mut up = 0;
        for _ in 0..n {
            let q = quantize(0.625, 2, &mut rng);
            assert!(q == 0.5 || q == 0.75);
            if q == 0.75 {
                up += 1;
            }
        }
        let frac = up as f64 / n as f64;
        assert!((frac - 0.5).abs() < 4.0 * (0.25 / n as f64).sqrt());
        for _ in 0..100 {
            assert_eq!(quantize(0.25, 2, &mut rng), 0.25);
            assert_eq!(quantize(1.0, 3, &mut rng), 1.0);
        }
    }

    #[test]
    fn quantize_is_unbiased() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mean: f64 = 0.3141;
        let p = 3;
        let n = 100_000;
        let step: f64 = 0.125;
        let lo = (mean / step).floor() * step;
        let frac = (mean - lo) / step;
        let sum: f64 = (0..n).map(|_| quantize(mean, p, &mut rng)).sum();
        let sigma = step * (frac * (1.0 - frac) / n as f64).sqrt();
        assert!((sum / n as f64 - mean).abs() <= 3.0 * sigma);
    }

    #[test]
    fn trimmed_mean_examples() {
        assert_abs_diff_eq!(
            trimmed_mean(&[0.1, 0.2, 0.3, 0.9]).unwrap(),
            0.25,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            trimmed_mean(&[0.4, 0.4, 0.4]).unwrap(),
            0.4,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            trimmed_mean(&[0.0, 0.5, 0.5, 1.0, 0.5]).unwrap(),
            0.5,
            epsilon = 1e-15
        );
        assert!(trimmed_mean(&[0.1, 0.2]).is_err());
    }

    #[test]
    fn punishment_examples() {
        let equal = punishment_probs(&[0.6; 4], 2, homogeneous_gamma(4, 2)).unwrap();
        for (&raw, &p) in equal.raw.iter().zip(&equal.probs) {
            assert_abs_diff_eq!(raw, 0.25, epsilon = 1e-15);
            assert_abs_diff_eq!(p, 0.25, epsilon = 1e-15);
        }
        assert_abs_diff_eq!(equal.raw.iter().sum::<f64>(), 1.0, epsilon = 1e-15);

        let gamma = homogeneous_gamma(3, 2);
        assert_abs_diff_eq!(gamma, 2.0 / 3.0, epsilon = 1e-15);
        let out = punishment_probs(&[0.9, 0.5, 0.1], 2, gamma).unwrap();
        // direct evaluation: 1 - (2/3)(0.7)/mu_k
        assert_abs_diff_eq!(out.raw[0], 1.0 - (2.0 / 3.0) * 0.7 / 0.9, epsilon = 1e-12);
        assert_abs_diff_eq!(out.raw[0], 0.481_481_481_481, epsilon = 1e-9);
        assert_abs_diff_eq!(out.raw[1], 0.066_666_666_667, epsilon = 1e-9);
        assert_eq!(out.raw[2], 0.0);
        assert!(out.raw.iter().sum::<f64>() <= 1.0);
        assert_abs_diff_eq!(out.probs.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        assert!(out.probs.iter().zip(&out.raw).all(|(p, r)| p >= r));

        assert!(punishment_probs(&[0.5, 0.5], 1, 0.5).is_err());
    }

    #[test]
    fn punishment_zero_estimates_are_clamped() {
        let out = punishment_probs(&[0.0, 0.0, 0.0], 3, homogeneous_gamma(3, 3)).unwrap();
        assert!(out.probs.iter().all(|p| p.is_finite()));
        assert_abs_diff_eq!(out.probs.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn mult_precision_constant_stream_stops_at_44() {
        let mut state = MultPrecisionState::new(0.5, 100f64.ln());
        let mut stop = None;
        for t in 1..=100u64 {
            let (next, stopped) = mult_precision_step(state, 1.0);
            state = next;
            if t == 1 {
                assert!(!stopped);
            }
            if stopped {
                stop = Some(t);
                break;
            }
        }
        assert_eq!(stop, Some(44));
        assert_eq!(state.std, 0.0);
    }

    #[test]
    fn mult_precision_bracket_bernoulli_half() {
        let log_t = 1e4f64.ln();
        let delta = 0.5;
        let n0 = mult_precision_n0(delta, 0.5, log_t);
        let mut good = 0;
        for seed in 0..1000u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut state = MultPrecisionState::new(delta, log_t);
            let mut tau = 0;
            for t in 1..=n0 {
                let x = if rng.gen::<f64>() < 0.5 { 1.0 } else { 0.0 };
                if state.push(x) {
                    tau = t;
                    break;
                }
            }
            if tau > 0 && (1.0 - delta) * state.mean < 0.5 && 0.5 < (1.0 + delta) * state.mean {
                good += 1;
            }
        }
        assert!(good >= 990, "{good}");
    }

    #[test]
    fn sample_index_respects_support() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let probs = [0.0, 0.3, 0.0, 0.7];
        for _ in 0..1000 {
            let i = sample_index(&probs, &mut rng);
            assert!(i == 1 || i == 3);
        }
    }

    proptest! {
        #[test]
        fn klucb_monotone_and_tight(
            mean in 0.0f64..1.0,
            pulls in 1u64..100_000,
            extra in 1u64..100,
            budget in 0.0f64..30.0,
            more in 0.0f64..5.0,
        ) {
            let b = klucb_index(mean, pulls, budget);
            prop_assert!(b >= mean);
            prop_assert!(klucb_index(mean, pulls, budget + more) >= b);
            prop_assert!(klucb_index(mean, pulls + extra, budget) <= b);
            if b < 1.0 {
                let residual = pulls as f64 * kl_unchecked(mean, b) - budget;
                prop_assert!(residual.abs() <= 1e-6, "residual {}", residual);
            }
        }

        #[test]
        fn quantize_hits_neighbors(mean in 0.0f64..=1.0, p in 0u32..16, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let q = quantize(mean, p, &mut rng);
            let scale = (p as f64).exp2();
            let lo = (mean * scale).floor() / scale;
            prop_assert!(q == lo || q == lo + 1.0 / scale);
            prop_assert!((0.0..=1.0).contains(&q));
        }

        #[test]
        fn trimmed_mean_sandwich(
            honest in prop::collection::vec(0.0f64..=1.0, 2..10),
            adversarial in 0.0f64..=1.0,
            slot in any::<prop::sample::Index>(),
        ) {
            let mut all = honest.clone();
            all.insert(slot.index(honest.len() + 1), adversarial);
            let tm = trimmed_mean(&all).unwrap();
            let total: f64 = honest.iter().sum();
            let loo: Vec<f64> = honest.iter().map(|h| (total - h) / (honest.len() - 1) as f64).collect();
            let lo = loo.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = loo.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(tm >= lo - 1e-12 && tm <= hi + 1e-12);
        }

        #[test]
        fn punishment_raw_mass_at_most_one(
            means in prop::collection::vec(0.0f64..=1.0, 2..50),
            m_frac in 0.0f64..1.0,
        ) {
            let k = means.len();
            let m = 2 + ((k - 2) as f64 * m_frac) as usize;
            let out = punishment_probs(&means, m, homogeneous_gamma(k, m)).unwrap();
            prop_assert!(out.raw.iter().sum::<f64>() <= 1.0 + 1e-12);
            prop_assert!((out.probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
}

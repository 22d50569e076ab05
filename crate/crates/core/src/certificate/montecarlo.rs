use crate::scalar::Scalar;
use crate::sensor::DetectionModel;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use statrs::distribution::{Beta, ContinuousCDF};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonteCarloResult {
    pub trials: u64,
    pub unsafe_count: u64,
    pub unsafe_rate: f64,
    /// Clopper-Pearson 95% interval.
    pub ci_low: f64,
    pub ci_high: f64,
}

impl MonteCarloResult {
    /// Binomial standard error at rate `p`.
    pub fn sigma(&self, p: f64) -> f64 {
        (p * (1.0 - p) / self.trials as f64).sqrt()
    }
}

const CHUNK: u64 = 10_000;

/// Two-sided exact binomial interval at level `1 - alpha`.
pub fn clopper_pearson(successes: u64, trials: u64, alpha: f64) -> (f64, f64) {
    let (x, n) = (successes as f64, trials as f64);
    let lo = if successes == 0 {
        0.0
    } else {
        Beta::new(x, n - x + 1.0).expect("valid shape").inverse_cdf(alpha / 2.0)
    };
    let hi = if successes >= trials {
        1.0
    } else {
        Beta::new(x + 1.0, n - x).expect("valid shape").inverse_cdf(1.0 - alpha / 2.0)
    };
    (lo, hi)
}

/// Beeline trials: `kappa` measurements at `r = D (kappa - j) / kappa`,
/// each an independent Bernoulli draw. A trial is safe iff some detection
/// happens at `r > stopping_margin`. Trials are split into fixed chunks with
/// per-chunk streams derived from `seed`, so the result does not depend on
/// the worker count.
pub fn monte_carlo_validate<T: Scalar>(
    kappa: usize,
    model: &DetectionModel<T>,
    trials: u64,
    seed: u64,
    stopping_margin: T,
) -> MonteCarloResult {
    let d = model.sensing_radius.as_f64();
    let margin = stopping_margin.as_f64();
    let probs: Vec<f64> = (0..kappa)
        .map(|j| d * (kappa - j) as f64 / kappa as f64)
        .filter(|r| *r > margin)
        .map(|r| model.probability(T::lit(r)).as_f64())
        .collect();
    let chunks = trials.div_ceil(CHUNK);
    let unsafe_count: u64 = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ c.wrapping_mul(0x9E37_79B9_7F4A_7C15));
            let n = CHUNK.min(trials - c * CHUNK);
            (0..n)
                .filter(|_| {
                    // every draw is taken so streams stay aligned
                    let mut detected = false;
                    for &p in &probs {
                        detected |= rng.gen::<f64>() < p;
                    }
                    !detected
                })
                .count() as u64
        })
        .sum();
    let (ci_low, ci_high) = if trials == 0 {
        (0.0, 1.0)
    } else {
        clopper_pearson(unsafe_count, trials, 0.05)
    };
    MonteCarloResult {
        trials,
        unsafe_count,
        unsafe_rate: if trials == 0 { f64::NAN } else { unsafe_count as f64 / trials as f64 },
        ci_low,
        ci_high,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kappa_one_is_always_unsafe() {
        let m = DetectionModel::<f64>::linear(0.75, 1e-3, 4.0);
        let r = monte_carlo_validate(1, &m, 1000, 7, 0.0);
        assert_eq!(r.unsafe_count, 1000);
        assert_eq!(r.ci_high, 1.0);
    }

    #[test]
    fn perfect_detection_is_safe() {
        let m = DetectionModel::<f64>::linear(1.0, 0.0, 4.0);
        for k in 2..6 {
            assert_eq!(monte_carlo_validate(k, &m, 5000, 1, 0.0).unsafe_count, 0);
        }
    }

    #[test]
    fn clopper_pearson_known_values() {
        // 0 of 10: upper = 1 - 0.025^(1/10)
        let (lo, hi) = clopper_pearson(0, 10, 0.05);
        assert_eq!(lo, 0.0);
        assert!((hi - (1.0 - 0.025f64.powf(0.1))).abs() < 1e-9);
        // 10 of 10: lower = 0.025^(1/10)
        let (lo, hi) = clopper_pearson(10, 10, 0.05);
        assert!((lo - 0.025f64.powf(0.1)).abs() < 1e-9);
        assert_eq!(hi, 1.0);
    }

    #[test]
    fn deterministic_for_seed() {
        let m = DetectionModel::<f64>::linear(0.75, 1e-3, 4.0);
        let a = monte_carlo_validate(3, &m, 25_000, 99, 0.0);
        let b = monte_carlo_validate(3, &m, 25_000, 99, 0.0);
        assert_eq!(a, b);
    }
}

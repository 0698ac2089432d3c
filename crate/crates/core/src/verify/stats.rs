//! Intervals, factorization tests and the seeded Monte Carlo driver.

use rayon::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF};
use statrs::function::factorial::ln_binomial;

use crate::bits::BitTape;
use crate::error::{invalid, Result};

pub const DEFAULT_Z: f64 = 4.0;
pub const DEFAULT_ALPHA: f64 = 1e-3;
pub const MIN_SAMPLES: u64 = 1000;

/// Wilson score interval for `hits / n` at `z` standard deviations.
pub fn wilson(hits: u64, n: u64, z: f64) -> (f64, f64) {
    assert!(n > 0 && hits <= n);
    let n_f = n as f64;
    let p = hits as f64 / n_f;
    let z2 = z * z;
    let denom = 1.0 + z2 / n_f;
    let center = (p + z2 / (2.0 * n_f)) / denom;
    let half = z / denom * (p * (1.0 - p) / n_f + z2 / (4.0 * n_f * n_f)).sqrt();
    ((center - half).max(0.0), (center + half).min(1.0))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct McEstimate {
    pub hits: u64,
    pub samples: u64,
    pub estimate: f64,
    pub lo: f64,
    pub hi: f64,
}

impl McEstimate {
    pub fn from_counts(hits: u64, samples: u64, z: f64) -> McEstimate {
        let (lo, hi) = wilson(hits, samples, z);
        McEstimate { hits, samples, estimate: hits as f64 / samples as f64, lo, hi }
    }

    /// Largest distance from the estimate to an interval end.
    pub fn half_width(&self) -> f64 {
        (self.estimate - self.lo).max(self.hi - self.estimate)
    }

    pub fn contains(&self, p: f64) -> bool {
        self.lo <= p && p <= self.hi
    }
}

/// Folds `step` over samples `0..samples` in parallel; sample `i` sees the
/// tape `BitTape::for_sample(seed, i)`. `merge` must be associative and
/// commutative (integer counters, min/max) so the result does not depend on
/// how the work was split.
pub fn parallel_tally<T, I, F, M>(samples: u64, seed: u64, init: I, step: F, merge: M) -> T
where
    T: Send,
    I: Fn() -> T + Sync + Send,
    F: Fn(&mut T, u64, &BitTape) + Sync + Send,
    M: Fn(T, T) -> T + Sync + Send,
{
    (0..samples)
        .into_par_iter()
        .fold(&init, |mut acc, i| {
            step(&mut acc, i, &BitTape::for_sample(seed, i));
            acc
        })
        .reduce(&init, &merge)
}

/// Frequency of `event` over `samples` derived tapes, with a Wilson interval.
pub fn mc_estimate<F>(event: F, samples: u64, seed: u64) -> Result<McEstimate>
where
    F: Fn(&BitTape) -> bool + Sync + Send,
{
    mc_estimate_z(event, samples, seed, DEFAULT_Z)
}

pub fn mc_estimate_z<F>(event: F, samples: u64, seed: u64, z: f64) -> Result<McEstimate>
where
    F: Fn(&BitTape) -> bool + Sync + Send,
{
    if samples < MIN_SAMPLES {
        return Err(invalid("samples", format!("statistical claims need at least {MIN_SAMPLES} samples, got {samples}")));
    }
    if !(z > 0.0 && z.is_finite()) {
        return Err(invalid("tolerance", "must be positive"));
    }
    let hits = parallel_tally(samples, seed, || 0u64, |c, _, t| *c += event(t) as u64, |a, b| a + b);
    Ok(McEstimate::from_counts(hits, samples, z))
}

/// Test of independence on a 2x2 table: Pearson chi-square (1 df) when every
/// expected count is at least 5, Fisher's exact test otherwise.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairTest {
    pub samples: u64,
    pub a: u64,
    pub b: u64,
    pub both: u64,
    pub p_value: f64,
    pub exact: bool,
}

impl PairTest {
    pub fn expected_both(&self) -> f64 {
        self.a as f64 * self.b as f64 / self.samples as f64
    }
}

pub fn pair_test(samples: u64, a: u64, b: u64, both: u64) -> PairTest {
    assert!(both <= a.min(b) && a.max(b) <= samples && samples > 0);
    let n = samples as f64;
    let cells = [both, a - both, b - both, samples - a - b + both];
    let (ra, rb) = (a as f64, b as f64);
    let expected = [ra * rb / n, ra * (n - rb) / n, (n - ra) * rb / n, (n - ra) * (n - rb) / n];
    let exact = expected.iter().any(|&e| e < 5.0);
    let p_value = if !exact {
        let stat: f64 = cells.iter().zip(&expected).map(|(&o, &e)| (o as f64 - e).powi(2) / e).sum();
        ChiSquared::new(1.0).expect("1 df").sf(stat)
    } else {
        fisher_two_sided(samples, a, b, both)
    };
    PairTest { samples, a, b, both, p_value, exact }
}

/// Sum of hypergeometric probabilities no larger than that of the observed cell.
fn fisher_two_sided(n: u64, a: u64, b: u64, both: u64) -> f64 {
    if a == 0 || b == 0 || a == n || b == n {
        return 1.0;
    }
    // Log-space pmf; the library pmf underflows to zero for large tables.
    let ln_pmf = |x: u64| ln_binomial(b, x) + ln_binomial(n - b, a - x) - ln_binomial(n, a);
    let lo = (a + b).saturating_sub(n);
    let hi = a.min(b);
    let obs = ln_pmf(both);
    let p: f64 = (lo..=hi).map(ln_pmf).filter(|&q| q <= obs + 1e-7).map(f64::exp).sum();
    p.min(1.0)
}

//! Exact Fourier analysis of spikes and blocks.
//!
//! For `P = 2^d` and `p = 2^-d` the normalized spike has
//! `|phi^(r)|^2 = sin^2(pi r / P) / (pi^2 r^2 p (1 - p))`, so its tail beyond
//! `R` is `T(d, R) = 2 sum_{r > R} sin^2(pi r / P) / r^2 / (pi^2 p (1 - p))`.
//! Phases are always reduced exactly through `r mod P`, so coefficients at
//! multiples of `2^d` vanish identically.
//!
//! `T(d, R)` is evaluated in tiers:
//! * `d <= 8`: split by residue class mod `P`; each class is a trigamma value.
//! * `R <= 2^16`: direct compensated partial sum.
//! * `log2 R < d + 40`: Euler-Maclaurin on `(1 - cos wt) / t^2` with the
//!   integral written through the sine integral.
//! * otherwise: `2^d / (pi^2 R (1 - p))`, relative error below `2^-40`.

mod band;
pub mod special;
mod tail;

pub use band::{band_support_check, block_coeff, step_coefficients, BandReport};
pub use tail::{
    block_tail, block_tail_bound, f_tail, fitted_c1, fitted_c2, layer_tail, spike_tail, tail_profile, c2_grid, EnvelopeFit,
    TailProfile, TailRow,
};

use num_complex::Complex64;
use std::f64::consts::PI;
use std::fmt;

use crate::error::{invalid, Result};
use crate::spike::{pow2, SpikeParams};

/// Neumaier-compensated summation.
#[derive(Clone, Copy, Debug, Default)]
pub struct Kahan {
    sum: f64,
    comp: f64,
}

impl Kahan {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn sum(&self) -> f64 {
        self.sum + self.comp
    }

    /// Merging keeps the reduction order-independent up to rounding of the
    /// compensations; exact reproducibility comes from a fixed merge order.
    pub fn merge(&mut self, other: &Kahan) {
        self.add(other.sum);
        self.add(other.comp);
    }
}

impl FromIterator<f64> for Kahan {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut k = Kahan::default();
        for x in iter {
            k.add(x);
        }
        k
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Coefficient {
    pub r: i128,
    pub value: Complex64,
}

/// A nonnegative frequency cutoff, either an exact integer or `2^e` with an
/// arbitrary exponent.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Cutoff {
    Exact(u128),
    Pow2(u64),
}

impl Cutoff {
    /// `floor(self / 2^v)`.
    pub fn shr(self, v: u64) -> Cutoff {
        match self {
            Cutoff::Exact(n) => Cutoff::Exact(if v >= 128 { 0 } else { n >> v }),
            Cutoff::Pow2(e) if v <= e => Cutoff::Pow2(e - v).normalized(),
            Cutoff::Pow2(_) => Cutoff::Exact(0),
        }
    }

    fn normalized(self) -> Cutoff {
        match self {
            Cutoff::Pow2(e) if e < 127 => Cutoff::Exact(1u128 << e),
            c => c,
        }
    }

    pub fn is_zero(self) -> bool {
        self == Cutoff::Exact(0)
    }

    /// `log2` as a float; `-inf` for zero.
    pub fn log2(self) -> f64 {
        match self {
            Cutoff::Exact(n) => (n as f64).log2(),
            Cutoff::Pow2(e) => e as f64,
        }
    }

    pub fn floor_log2(self) -> Option<u64> {
        match self {
            Cutoff::Exact(0) => None,
            Cutoff::Exact(n) => Some(127 - n.leading_zeros() as u64),
            Cutoff::Pow2(e) => Some(e),
        }
    }

    pub fn as_exact(self) -> Option<u128> {
        match self.normalized() {
            Cutoff::Exact(n) => Some(n),
            Cutoff::Pow2(_) => None,
        }
    }
}

impl fmt::Display for Cutoff {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cutoff::Exact(n) => write!(f, "{n}"),
            Cutoff::Pow2(e) => write!(f, "2^{e}"),
        }
    }
}

/// `(r mod 2^d) / 2^d` for `r >= 0`.
pub(crate) fn phase_frac(d: u32, r: u128) -> f64 {
    if d >= 128 {
        r as f64 / pow2(d)
    } else {
        (r & ((1u128 << d) - 1)) as f64 / pow2(d)
    }
}

/// `r`-th Fourier coefficient of the normalized spike of depth `d`.
pub fn spike_coeff(d: u32, r: i128) -> Result<Coefficient> {
    let sp = SpikeParams::new(d)?;
    if r == 0 {
        return Ok(Coefficient { r, value: Complex64::new(0.0, 0.0) });
    }
    // rem_euclid keeps the phase in [0, 1) for negative r.
    let frac = if d >= 127 {
        let f = r as f64 / pow2(d);
        f - f.floor()
    } else {
        phase_frac(d, r.rem_euclid(1i128 << d) as u128)
    };
    let theta = 2.0 * PI * frac;
    let half = (PI * frac).sin();
    // (1 - e^{-i theta}) / (2 pi i r) = (sin theta - 2 i sin^2(theta/2)) / (2 pi r)
    let sigma = (sp.p() * (1.0 - sp.p())).sqrt();
    let denom = 2.0 * PI * r as f64 * sigma;
    let value = if frac == 0.0 {
        Complex64::new(0.0, 0.0)
    } else {
        Complex64::new(theta.sin() / denom, -2.0 * half * half / denom)
    };
    Ok(Coefficient { r, value })
}

pub(crate) fn require_positive(n: Cutoff, field: &'static str) -> Result<()> {
    if n.is_zero() {
        return Err(invalid(field, "cutoff must be at least 1"));
    }
    Ok(())
}

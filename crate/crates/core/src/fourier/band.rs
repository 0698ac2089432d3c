//! Valuation-band support of block coefficients, checked against an
//! independent step-function evaluation.

use num_complex::Complex64;
use std::f64::consts::PI;

use super::{spike_coeff, Coefficient};
use crate::bits::valuation;
use crate::error::{invalid, Error, Result};
use crate::spike::BlockParams;

/// Largest digit count for which the step-function DFT is attempted.
pub const MAX_STEP_DIGITS: u64 = 16;

/// Block coefficient from the layer decomposition: layer `q` contributes
/// `sqrt(lambda/L) phi_d^(r / 2^v)` when `2^v | r`, `v = U + qD`.
pub fn block_coeff(bp: &BlockParams, r: i128) -> Result<Coefficient> {
    let mut value = Complex64::new(0.0, 0.0);
    if r != 0 {
        let nu = valuation(r)? as u64;
        for q in 1..=bp.layers {
            let v = bp.layer_exponent(0, q)?;
            if v > nu {
                break;
            }
            value += spike_coeff(bp.depth, r >> v)?.value * bp.scale();
        }
    }
    Ok(Coefficient { r, value })
}

/// Coefficients of a block seen as a step function on `M = 2^E'` cells,
/// `E' = U + LD + d`: `F^(r) = S^(r mod M) (1 - e^{-2 pi i r / M}) / (2 pi i r)`.
pub struct StepDft {
    digits: u64,
    dft: Vec<Complex64>,
}

impl StepDft {
    pub fn cells(&self) -> u64 {
        1 << self.digits
    }

    pub fn coeff(&self, r: i128) -> Complex64 {
        if r == 0 {
            return self.dft[0] / self.cells() as f64;
        }
        let m = self.cells() as i128;
        let frac = r.rem_euclid(m) as f64 / m as f64;
        let one_minus = Complex64::new(1.0, 0.0) - Complex64::from_polar(1.0, -2.0 * PI * frac);
        self.dft[r.rem_euclid(m) as usize] * one_minus / Complex64::new(0.0, 2.0 * PI * r as f64)
    }
}

/// Naive DFT of the cell values of `bp`, with an integer-indexed twiddle table.
pub fn step_coefficients(bp: &BlockParams) -> Result<StepDft> {
    let digits = bp
        .layer_exponent(0, bp.layers)?
        .checked_add(bp.depth as u64)
        .ok_or(Error::Overflow("digit count"))?;
    if digits > MAX_STEP_DIGITS {
        return Err(Error::CapExceeded {
            cap: "step digits",
            requested: digits as u128,
            limit: MAX_STEP_DIGITS as u128,
        });
    }
    let m = 1usize << digits;
    let sp = bp.spike();
    let mask = (1usize << bp.depth) - 1;
    let mut cells = vec![0.0f64; m];
    for (c, cell) in cells.iter_mut().enumerate() {
        let mut s = 0.0;
        for q in 1..=bp.layers {
            let v = bp.layer_exponent(0, q)?;
            // Digits v+1 ..= v+d of x are bits E'-v-1 ..= E'-v-d of c.
            let shift = (digits - v - bp.depth as u64) as usize;
            s += if (c >> shift) & mask == 0 { sp.h } else { -sp.g };
        }
        *cell = bp.scale() * s;
    }
    let twiddle: Vec<Complex64> = (0..m).map(|j| Complex64::from_polar(1.0, -2.0 * PI * j as f64 / m as f64)).collect();
    let dft = (0..m)
        .map(|k| {
            let mut acc = Complex64::new(0.0, 0.0);
            let mut idx = 0usize;
            for &s in &cells {
                acc += twiddle[idx] * s;
                idx = (idx + k) & (m - 1);
            }
            acc
        })
        .collect();
    Ok(StepDft { digits, dft })
}

#[derive(Clone, Debug, PartialEq)]
pub struct BandReport {
    pub r_limit: u64,
    pub threshold: f64,
    pub bands: Vec<(u64, u64)>,
    pub scanned: u64,
    pub violations: Vec<(i128, f64)>,
    pub violation_count: u64,
    pub max_off_band: f64,
    pub max_in_band: f64,
}

impl BandReport {
    pub fn passed(&self) -> bool {
        self.violation_count == 0 && self.max_in_band > 1e-6
    }
}

/// Scans `0 < |r| <= r_limit` and flags every coefficient of size at least
/// `threshold` whose valuation lies outside the block's bands.
pub fn band_support_check(bp: &BlockParams, r_limit: u64, threshold: f64) -> Result<BandReport> {
    if r_limit == 0 || r_limit > 1 << 24 {
        return Err(invalid("r_limit", "must lie in 1..=2^24"));
    }
    let step = step_coefficients(bp)?;
    let bands: Vec<(u64, u64)> = (1..=bp.layers)
        .map(|q| {
            let v = bp.layer_exponent(0, q).expect("validated block");
            (v, v + bp.depth as u64 - 1)
        })
        .collect();
    let in_band = |nu: u64| bands.iter().any(|&(a, b)| a <= nu && nu <= b);
    let mut report = BandReport {
        r_limit,
        threshold,
        bands: bands.clone(),
        scanned: 0,
        violations: Vec::new(),
        violation_count: 0,
        max_off_band: 0.0,
        max_in_band: 0.0,
    };
    for r in 1..=r_limit as i128 {
        let nu = valuation(r)? as u64;
        let inside = in_band(nu);
        for rr in [r, -r] {
            let mag = step.coeff(rr).norm();
            report.scanned += 1;
            if inside {
                report.max_in_band = report.max_in_band.max(mag);
            } else {
                report.max_off_band = report.max_off_band.max(mag);
                if mag >= threshold {
                    report.violation_count += 1;
                    if report.violations.len() < 100 {
                        report.violations.push((rr, mag));
                    }
                }
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> BlockParams {
        BlockParams::geometric(1.0, 2, 3, 5, 0).unwrap()
    }

    #[test]
    fn step_and_layer_coefficients_agree() {
        let bp = tiny();
        let step = step_coefficients(&bp).unwrap();
        assert_eq!(step.cells(), 1 << 13);
        assert!(step.coeff(0).norm() < 1e-12);
        for r in (-3000i128..3000).step_by(7) {
            let a = step.coeff(r);
            let b = block_coeff(&bp, r).unwrap().value;
            assert!((a - b).norm() < 1e-12, "r={r}");
        }
    }

    #[test]
    fn tiny_block_support() {
        let rep = band_support_check(&tiny(), 1 << 14, 1e-10).unwrap();
        assert_eq!(rep.violation_count, 0, "{:?}", rep.violations);
        assert!(rep.max_in_band > 1e-6);
        assert!(rep.max_off_band < 1e-10);
        assert!(rep.passed());
        // Valuation 13 is past every band end (last band is [10, 12]).
        let step = step_coefficients(&tiny()).unwrap();
        assert!(step.coeff(3 << 13).norm() < 1e-10);
    }

    #[test]
    fn oversized_blocks_rejected() {
        let bp = BlockParams::geometric(1.0, 8, 6, 8, 0).unwrap();
        assert!(matches!(step_coefficients(&bp), Err(Error::CapExceeded { .. })));
        assert!(band_support_check(&tiny(), 0, 1e-10).is_err());
    }
}

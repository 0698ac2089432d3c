//! One trial against one block: reorganizing `sum_r F(2^(M + rD) x)` as a
//! weighted sum of spikes, the good event, and its probability.

use serde::{Deserialize, Serialize};

use crate::bits::{count_zero_windows, BitIndex, BitSource};
use crate::error::{invalid, Error, Result};
use crate::spike::{block_eval, spike_eval, BlockParams};

/// Success probability constant: every trial is good with probability at
/// least `C0 * lambda / B^2`.
pub const C0: f64 = 7.0 / 2048.0;

/// A trial uses exponents `M + D, M + 2D, ..., M + ell D`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialSpec {
    #[serde(rename = "M", with = "crate::serde_dec")]
    pub start: i64,
    #[serde(rename = "ell", with = "crate::serde_dec")]
    pub len: u64,
}

impl TrialSpec {
    pub fn new(start: i64, len: u64) -> Self {
        TrialSpec { start, len }
    }

    pub fn validate(&self, bp: &BlockParams) -> Result<()> {
        if self.len == 0 || self.len > bp.layers / 8 {
            return Err(invalid(
                "ell",
                format!("needs 1 <= ell <= L/8 = {}, got {}", bp.layers / 8, self.len),
            ));
        }
        if self.start as i128 + (bp.spacing as i128) < 0 {
            return Err(invalid("M", "needs M + D >= 0"));
        }
        Ok(())
    }

    /// The `r`-th exponent `M + rD`.
    pub fn exponent(&self, bp: &BlockParams, r: u64) -> i64 {
        self.start + (r * bp.spacing) as i64
    }

    /// Index range `ell + 1 ..= L + 1` of the central variables.
    pub fn central_range(&self, bp: &BlockParams) -> std::ops::RangeInclusive<u64> {
        self.len + 1..=bp.layers + 1
    }

    /// First digit of the window deciding `Z_h`, i.e. `U + M + hD + 1`.
    pub fn window_start(&self, bp: &BlockParams, h: u64) -> Result<BitIndex> {
        let v = bp.base_shift as i128 + self.start as i128 + (h * bp.spacing) as i128;
        if v < 0 {
            return Err(Error::NegativeExponent { exponent: v });
        }
        BitIndex::after_shift(u64::try_from(v).map_err(|_| Error::Overflow("window start"))?)
    }
}

/// Convolution weights `w_h = #{(q, r): 1<=q<=L, 1<=r<=ell, q + r = h}` for
/// `2 <= h <= L + ell`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WeightProfile {
    layers: u64,
    len: u64,
    weights: Vec<u64>,
}

impl WeightProfile {
    pub fn get(&self, h: u64) -> u64 {
        if h < 2 || h > self.layers + self.len {
            0
        } else {
            self.weights[(h - 2) as usize]
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (u64, u64)> + '_ {
        self.weights.iter().enumerate().map(|(i, &w)| (i as u64 + 2, w))
    }

    pub fn total(&self) -> u64 {
        self.weights.iter().sum()
    }
}

pub fn weights(layers: u64, len: u64) -> Result<WeightProfile> {
    if len == 0 || len > layers {
        return Err(invalid("ell", format!("needs 1 <= ell <= L = {layers}")));
    }
    let weights = (2..=layers + len)
        .map(|h| {
            // q ranges over max(1, h - ell) ..= min(L, h - 1)
            let lo = 1.max(h.saturating_sub(len));
            let hi = layers.min(h - 1);
            hi + 1 - lo
        })
        .collect();
    Ok(WeightProfile { layers, len, weights })
}

/// Left side of the convolution identity, summed directly over the trial.
pub fn trial_sum<S: BitSource + ?Sized>(bp: &BlockParams, tr: &TrialSpec, src: &S) -> Result<f64> {
    tr.validate(bp)?;
    let mut sum = 0.0;
    for r in 1..=tr.len {
        sum += block_eval(bp, src, tr.exponent(bp, r))?;
    }
    Ok(sum)
}

/// Right side: `sqrt(lambda/L) sum_h w_h Z_h`, with every `Z_h` read afresh.
pub fn trial_sum_weighted<S: BitSource + ?Sized>(bp: &BlockParams, tr: &TrialSpec, src: &S) -> Result<f64> {
    tr.validate(bp)?;
    let sp = bp.spike();
    let profile = weights(bp.layers, tr.len)?;
    let mut sum = 0.0;
    for (h, w) in profile.iter() {
        let v = tr.window_start(bp, h)?.get() - 1;
        sum += w as f64 * spike_eval(&sp, src, v)?;
    }
    Ok(bp.scale() * sum)
}

/// At least one central window is all zero.
pub fn good_event<S: BitSource + ?Sized>(bp: &BlockParams, tr: &TrialSpec, src: &S) -> Result<bool> {
    tr.validate(bp)?;
    for h in tr.central_range(bp) {
        if src.window_all_zero(tr.window_start(bp, h)?, bp.depth as u64) {
            return Ok(true);
        }
    }
    Ok(false)
}

/// Number of all-zero central windows, from one scan of the central range.
pub fn central_hits<S: BitSource + ?Sized>(bp: &BlockParams, tr: &TrialSpec, src: &S) -> Result<u64> {
    tr.validate(bp)?;
    let range = tr.central_range(bp);
    let n = range.end() - range.start() + 1;
    count_zero_windows(src, tr.window_start(bp, *range.start())?, bp.spacing, n, bp.depth as u64)
}

/// Exact good-event probability with its guaranteed floor.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GoodProbability {
    pub exact: f64,
    pub floor: f64,
}

impl GoodProbability {
    pub fn holds(&self) -> bool {
        self.exact >= self.floor
    }
}

/// `1 - (1 - 2^-d)^(L - ell + 1)` and the floor `C0 lambda / B^2`.
pub fn good_prob_exact(bp: &BlockParams, tr: &TrialSpec) -> Result<GoodProbability> {
    tr.validate(bp)?;
    Ok(GoodProbability {
        exact: hit_probability(bp.depth, bp.layers - tr.len + 1),
        floor: C0 * bp.lambda / (bp.height * bp.height),
    })
}

/// `1 - (1 - 2^-d)^n`.
pub fn hit_probability(depth: u32, n: u64) -> f64 {
    let p = crate::spike::pow2(depth).recip();
    -(n as f64 * (-p).ln_1p()).exp_m1()
}

/// On the good event, checks `trial_sum >= 2 B ell`.
pub fn amplification_check<S: BitSource + ?Sized>(bp: &BlockParams, tr: &TrialSpec, src: &S) -> Result<bool> {
    if !good_event(bp, tr, src)? {
        return Err(Error::Precondition("amplification is only claimed on the good event".into()));
    }
    Ok(trial_sum(bp, tr, src)? >= 2.0 * bp.height * tr.len as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bits::{BitTape, Overlay};

    fn enumerate_weights(layers: u64, len: u64) -> Vec<u64> {
        let mut w = vec![0u64; (layers + len + 1) as usize];
        for q in 1..=layers {
            for r in 1..=len {
                w[(q + r) as usize] += 1;
            }
        }
        w
    }

    #[test]
    fn weights_against_pair_enumeration() {
        let p = weights(8, 1).unwrap();
        assert!((2..=9).all(|h| p.get(h) == 1));
        let p = weights(16, 2).unwrap();
        assert_eq!((p.get(2), p.get(18)), (1, 1));
        assert!((3..=17).all(|h| p.get(h) == 2));
        for (l, e) in [(16u64, 2u64), (40, 5), (9, 9), (100, 12), (7, 1)] {
            let brute = enumerate_weights(l, e);
            let prof = weights(l, e).unwrap();
            for h in 2..=l + e {
                assert_eq!(prof.get(h), brute[h as usize]);
            }
            assert_eq!(prof.total(), l * e);
            assert!((e + 1..=l + 1).all(|h| prof.get(h) == e));
        }
    }

    #[test]
    fn good_probability_example() {
        let bp = BlockParams::geometric(1.0, 16, 23, 25, 0).unwrap();
        let tr = TrialSpec::new(0, 2);
        let gp = good_prob_exact(&bp, &tr).unwrap();
        let closed = 1.0 - (1.0 - 2f64.powi(-23)).powi(15);
        assert!((gp.exact - closed).abs() < 1e-15);
        assert!((gp.exact - 1.7881e-6).abs() < 1e-10);
    }

    #[test]
    fn probability_decreases_with_length() {
        let bp = BlockParams::from_height(1.0, 1.0, 64, None, 0, 1.0).unwrap();
        let mut last = 1.0;
        for len in 1..=8 {
            let p = good_prob_exact(&bp, &TrialSpec::new(0, len)).unwrap();
            assert!(p.exact < last);
            assert!(p.holds());
            last = p.exact;
        }
    }

    #[test]
    fn trial_validation() {
        let bp = BlockParams::from_height(1.0, 1.0, 16, None, 0, 1.0).unwrap();
        assert!(TrialSpec::new(0, 3).validate(&bp).is_err());
        assert!(TrialSpec::new(0, 0).validate(&bp).is_err());
        assert!(TrialSpec::new(-(bp.spacing as i64) - 1, 1).validate(&bp).is_err());
        assert!(TrialSpec::new(-(bp.spacing as i64), 2).validate(&bp).is_ok());
    }

    #[test]
    fn single_central_hit_amplifies() {
        let bp = BlockParams::from_height(1.0, 1.0, 16, None, 0, 1.0).unwrap();
        let tr = TrialSpec::new(5, 2);
        let sp = bp.spike();
        // Every window nonzero except one central one.
        let mut src = Overlay::new(BitTape::new(9));
        for h in 2..=bp.layers + tr.len {
            src = src.force_one(tr.window_start(&bp, h).unwrap());
        }
        assert!(!good_event(&bp, &tr, &src).unwrap());
        let all_low = trial_sum(&bp, &tr, &src).unwrap();
        let expect = -bp.scale() * sp.g * (bp.layers * tr.len) as f64;
        assert!((all_low - expect).abs() < 1e-12);
        assert!(amplification_check(&bp, &tr, &src).is_err());

        let hit = |hs: &[u64]| {
            let mut s2 = Overlay::new(BitTape::new(9));
            for hh in (2..=bp.layers + tr.len).filter(|x| !hs.contains(x)) {
                s2 = s2.force_one(tr.window_start(&bp, hh).unwrap());
            }
            for &h in hs {
                s2 = s2.force_zero(tr.window_start(&bp, h).unwrap(), bp.depth as u64);
            }
            s2
        };
        let one = hit(&[7]);
        assert!(good_event(&bp, &tr, &one).unwrap());
        let value = trial_sum(&bp, &tr, &one).unwrap();
        // One h-value spike on weight ell, every other pair at -g.
        let closed = tr.len as f64 * bp.scale() * (sp.h - (bp.layers - 1) as f64 * sp.g);
        assert!((value - closed).abs() < 1e-9);
        assert!(value >= tr.len as f64 * (bp.scale() * sp.h - (bp.lambda * bp.layers as f64).sqrt() * sp.g));
        assert!(value >= 2.0 * bp.height * tr.len as f64);
        assert!(amplification_check(&bp, &tr, &one).unwrap());

        let two = hit(&[7, 9]);
        assert!(trial_sum(&bp, &tr, &two).unwrap() > value);
    }

    #[test]
    fn single_step_trial_is_block_eval() {
        let bp = BlockParams::from_height(0.5, 2.0, 8, None, 3, 1.0).unwrap();
        let tr = TrialSpec::new(4, 1);
        for seed in 0..50 {
            let t = BitTape::new(seed);
            let a = trial_sum(&bp, &tr, &t).unwrap();
            let b = block_eval(&bp, &t, 4 + bp.spacing as i64).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn central_hit_scan_matches_window_reads() {
        let bp = BlockParams::from_height(1.0, 1.0, 64, None, 2, 1.0).unwrap();
        let tr = TrialSpec::new(3, 8);
        let mut seen = 0;
        for seed in 0..1000 {
            let t = BitTape::new(seed);
            let direct = tr.central_range(&bp).filter(|&h| t.window_all_zero(tr.window_start(&bp, h).unwrap(), bp.depth as u64)).count();
            let hits = central_hits(&bp, &tr, &t).unwrap();
            assert_eq!(hits as usize, direct);
            assert_eq!(hits > 0, good_event(&bp, &tr, &t).unwrap());
            seen += (hits > 0) as u32;
        }
        assert!(seen > 0);
    }
}

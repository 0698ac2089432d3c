//! Dyadic spikes and spike blocks.
//!
//! The spike of depth `d` is the renormalized indicator of `[0, 2^-d)`:
//! it equals `h = sqrt(2^d - 1)` on that interval and `-g = -1/sqrt(2^d - 1)`
//! elsewhere, so it has mean zero and unit `L^2` norm. A block is
//! `F(x) = sqrt(lambda / L) * sum_{q=1..L} spike(2^(U + qD) x)`.

use num_bigint::BigUint;
use num_rational::BigRational;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::bits::{count_zero_windows, BitIndex, BitSource};
use crate::error::{invalid, Error, Result};

/// Default lower bound on block heights.
pub const B_FLOOR_DEFAULT: f64 = 100.0;

/// Floor constant: every block satisfies `F >= -C3 * lambda / B`.
pub const C3: f64 = std::f64::consts::SQRT_2 / 8.0;

/// Largest spike depth the evaluators accept.
pub const MAX_DEPTH: u32 = 1000;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpikeParams {
    pub d: u32,
    pub h: f64,
    pub g: f64,
}

impl SpikeParams {
    pub fn new(d: u32) -> Result<Self> {
        if d == 0 || d > MAX_DEPTH {
            return Err(invalid("d", format!("depth must be in 1..={MAX_DEPTH}, got {d}")));
        }
        let h = (pow2(d) - 1.0).sqrt();
        Ok(SpikeParams { d, h, g: 1.0 / h })
    }

    /// Probability `2^-d` of the high value.
    pub fn p(&self) -> f64 {
        pow2(self.d).recip()
    }

    pub fn mean(&self) -> f64 {
        let p = self.p();
        p * self.h - (1.0 - p) * self.g
    }

    pub fn second_moment(&self) -> f64 {
        let p = self.p();
        p * self.h * self.h + (1.0 - p) * self.g * self.g
    }
}

pub(crate) fn pow2(e: u32) -> f64 {
    2f64.powi(e as i32)
}

/// `h` if the digits of `{2^v x}` start with `d` zeros, else `-g`.
pub fn spike_eval<S: BitSource + ?Sized>(sp: &SpikeParams, src: &S, v: u64) -> Result<f64> {
    let start = BitIndex::after_shift(v)?;
    start.checked_add(sp.d as u64)?;
    Ok(if src.window_all_zero(start, sp.d as u64) {
        sp.h
    } else {
        -sp.g
    })
}

/// The unique `d` with `64 B^2 L / lambda <= 2^d < 128 B^2 L / lambda`.
pub fn choose_depth(lambda: f64, height: f64, layers: u64) -> Result<u32> {
    if !(lambda > 0.0 && lambda <= 1.0) {
        return Err(invalid("lambda", format!("must lie in (0, 1], got {lambda}")));
    }
    if !(height >= 1.0 && height.is_finite()) {
        return Err(invalid("B", format!("must be at least 1, got {height}")));
    }
    if layers == 0 {
        return Err(invalid("L", "must be positive"));
    }
    let target = 64.0 * height * height * layers as f64 / lambda;
    if !target.is_finite() {
        return Err(Error::Overflow("depth target"));
    }
    let mut d = target.log2().ceil().max(1.0) as i64;
    // log2 can be off by one ulp at exact powers of two; settle on exact comparisons.
    while d > 1 && pow2((d - 1) as u32) >= target {
        d -= 1;
    }
    while pow2(d as u32) < target {
        d += 1;
    }
    let d = d as u32;
    if d > MAX_DEPTH {
        return Err(Error::CapExceeded {
            cap: "depth",
            requested: d as u128,
            limit: MAX_DEPTH as u128,
        });
    }
    debug_assert!(pow2(d) < 2.0 * target);
    Ok(d)
}

/// One spike block. Field names are the stable manifest keys.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockParams {
    pub lambda: f64,
    #[serde(rename = "B")]
    pub height: f64,
    #[serde(rename = "L", with = "crate::serde_dec")]
    pub layers: u64,
    #[serde(rename = "d")]
    pub depth: u32,
    #[serde(rename = "D", with = "crate::serde_dec")]
    pub spacing: u64,
    #[serde(rename = "U", with = "crate::serde_dec")]
    pub base_shift: u64,
}

impl BlockParams {
    /// A block whose depth is chosen from `(lambda, B, L)`, with `D = d + 2`
    /// unless `spacing` is given.
    pub fn from_height(
        lambda: f64,
        height: f64,
        layers: u64,
        spacing: Option<u64>,
        base_shift: u64,
        b_floor: f64,
    ) -> Result<Self> {
        let depth = choose_depth(lambda, height, layers)?;
        let bp = BlockParams {
            lambda,
            height,
            layers,
            depth,
            spacing: spacing.unwrap_or(depth as u64 + 2),
            base_shift,
        };
        bp.validate(b_floor)?;
        Ok(bp)
    }

    /// A block that only has to satisfy the geometric constraints
    /// (`D >= d + 2`, positive sizes). Heights are ignored by the Fourier code,
    /// so tiny test blocks can bypass the depth window.
    pub fn geometric(lambda: f64, layers: u64, depth: u32, spacing: u64, base_shift: u64) -> Result<Self> {
        let bp = BlockParams {
            lambda,
            height: 1.0,
            layers,
            depth,
            spacing,
            base_shift,
        };
        bp.validate_geometry()?;
        Ok(bp)
    }

    pub fn validate_geometry(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda <= 1.0) {
            return Err(invalid("lambda", format!("must lie in (0, 1], got {}", self.lambda)));
        }
        if self.layers == 0 {
            return Err(invalid("L", "must be positive"));
        }
        if self.depth == 0 || self.depth > MAX_DEPTH {
            return Err(invalid("d", format!("must be in 1..={MAX_DEPTH}")));
        }
        if self.spacing < self.depth as u64 + 2 {
            return Err(invalid("D", format!("needs D >= d + 2, got D = {} with d = {}", self.spacing, self.depth)));
        }
        self.last_exponent_from(0)?;
        Ok(())
    }

    /// Full validity: geometry, `B >= b_floor`, and the depth window.
    pub fn validate(&self, b_floor: f64) -> Result<()> {
        self.validate_geometry()?;
        if !(self.height >= b_floor && self.height >= 1.0) {
            return Err(invalid("B", format!("must be at least {b_floor}, got {}", self.height)));
        }
        let target = 64.0 * self.height * self.height * self.layers as f64 / self.lambda;
        let two_d = pow2(self.depth);
        if !(target <= two_d && two_d < 2.0 * target) {
            return Err(invalid("d", format!("2^{} outside the depth window [{target}, {})", self.depth, 2.0 * target)));
        }
        Ok(())
    }

    pub fn spike(&self) -> SpikeParams {
        SpikeParams::new(self.depth).expect("validated depth")
    }

    /// Normalization `sqrt(lambda / L)`.
    pub fn scale(&self) -> f64 {
        (self.lambda / self.layers as f64).sqrt()
    }

    /// Dilation exponent `U + shift + qD` of layer `q`.
    pub fn layer_exponent(&self, shift: i64, q: u64) -> Result<u64> {
        let e = self.base_shift as i128 + shift as i128 + (q as i128) * self.spacing as i128;
        if e < 0 {
            return Err(Error::NegativeExponent { exponent: e });
        }
        u64::try_from(e).map_err(|_| Error::Overflow("layer exponent"))
    }

    fn last_exponent_from(&self, shift: i64) -> Result<u64> {
        let e = self.layer_exponent(shift, self.layers)?;
        e.checked_add(self.depth as u64).ok_or(Error::Overflow("layer exponent"))
    }

    pub fn law(&self) -> BlockLaw {
        BlockLaw::new(self)
    }
}

/// `sqrt(lambda / L) * sum_q spike(2^(U + shift + qD) x)`.
pub fn block_eval<S: BitSource + ?Sized>(bp: &BlockParams, src: &S, shift: i64) -> Result<f64> {
    let sp = bp.spike();
    bp.layer_exponent(shift, 1)?;
    bp.last_exponent_from(shift)?;
    let mut sum = 0.0;
    for q in 1..=bp.layers {
        sum += spike_eval(&sp, src, bp.layer_exponent(shift, q)?)?;
    }
    Ok(bp.scale() * sum)
}

/// Number of layers of the block at `shift` whose spike is high.
pub fn spiking_layers<S: BitSource + ?Sized>(bp: &BlockParams, src: &S, shift: i64) -> Result<u64> {
    let mut k = 0;
    for q in 1..=bp.layers {
        let start = BitIndex::after_shift(bp.layer_exponent(shift, q)?)?;
        if src.window_all_zero(start, bp.depth as u64) {
            k += 1;
        }
    }
    Ok(k)
}

/// [`block_eval`] from one scan of the digit range instead of `L` window reads.
pub fn block_eval_sparse<S: BitSource + ?Sized>(bp: &BlockParams, src: &S, shift: i64) -> Result<f64> {
    let first = BitIndex::after_shift(bp.layer_exponent(shift, 1)?)?;
    let k = count_zero_windows(src, first, bp.spacing, bp.layers, bp.depth as u64)?;
    Ok(bp.law().value_map(k))
}

/// The exact minimum `-sqrt(lambda L) g` of a block.
pub fn block_floor(bp: &BlockParams) -> f64 {
    -(bp.lambda * bp.layers as f64).sqrt() * bp.spike().g
}

/// `-C3 lambda / B`, the height-dependent lower bound the floor must respect.
pub fn floor_bound(bp: &BlockParams) -> f64 {
    -C3 * bp.lambda / bp.height
}

/// Exact law of a block: the number `K` of high layers is Binomial(L, 2^-d)
/// and the block value is affine in `K`.
#[derive(Clone, Copy, Debug)]
pub struct BlockLaw {
    layers: u64,
    depth: u32,
    scale: f64,
    h: f64,
    g: f64,
}

impl BlockLaw {
    pub fn new(bp: &BlockParams) -> Self {
        let sp = bp.spike();
        BlockLaw {
            layers: bp.layers,
            depth: bp.depth,
            scale: bp.scale(),
            h: sp.h,
            g: sp.g,
        }
    }

    /// `sqrt(lambda/L) ((h + g) K - L g)`.
    pub fn value_map(&self, k: u64) -> f64 {
        self.scale * ((self.h + self.g) * k as f64 - self.layers as f64 * self.g)
    }

    /// `(K, P(K))` pairs in increasing `K`, stopping once the remaining mass is
    /// below double precision relevance.
    pub fn pmf(&self) -> Vec<(u64, f64)> {
        let n = self.layers;
        let p = pow2(self.depth).recip();
        let log_odds = p.ln() - (-p).ln_1p();
        let mut log_pk = n as f64 * (-p).ln_1p();
        let mean = n as f64 * p;
        let mut out = Vec::new();
        for k in 0..=n {
            let pk = log_pk.exp();
            out.push((k, pk));
            if k as f64 > mean && log_pk < -745.0 {
                break;
            }
            if k < n {
                log_pk += ((n - k) as f64).ln() - ((k + 1) as f64).ln() + log_odds;
            }
        }
        out
    }

    /// `P(K = k)` as an exact rational: `C(L, k) (2^d - 1)^(L - k) / 2^(dL)`.
    pub fn pmf_exact(&self, k: u64) -> BigRational {
        let n = self.layers;
        let mut binom = BigUint::one();
        for i in 0..k {
            binom = binom * BigUint::from(n - i) / BigUint::from(i + 1);
        }
        let odd = (BigUint::one() << self.depth) - BigUint::one();
        let num = binom * num_traits::pow(odd, (n - k) as usize);
        let den = BigUint::one() << (self.depth as u64 * n);
        BigRational::new(num.into(), den.into())
    }

    /// Exact total mass; equals one.
    pub fn total_mass_exact(&self) -> BigRational {
        (0..=self.layers).fold(BigRational::zero(), |acc, k| acc + self.pmf_exact(k))
    }

    /// `E|F|^p` from the exact law.
    pub fn abs_moment(&self, p: f64) -> f64 {
        let mut acc = crate::fourier::Kahan::default();
        for (k, pk) in self.pmf() {
            acc.add(pk * self.value_map(k).abs().powf(p));
        }
        acc.sum()
    }
}

/// `||F||_p^p` computed from the exact binomial law.
pub fn block_moments(bp: &BlockParams, p: f64) -> Result<f64> {
    if !(p >= 2.0 && p.is_finite()) {
        return Err(invalid("p", format!("moment order must be finite and at least 2, got {p}")));
    }
    if bp.layers > 1_000_000 {
        return Err(Error::CapExceeded {
            cap: "moment layers",
            requested: bp.layers as u128,
            limit: 1_000_000,
        });
    }
    Ok(bp.law().abs_moment(p))
}

/// The grid used to fit moment constants: every combination of
/// `lambda in {1, 1/4}`, `B in {100, 200}`, `L in {8, 64}`.
pub fn moment_grid() -> Vec<BlockParams> {
    let mut out = Vec::new();
    for &lambda in &[1.0, 0.25] {
        for &height in &[100.0, 200.0] {
            for &layers in &[8u64, 64] {
                out.push(BlockParams::from_height(lambda, height, layers, None, 0, B_FLOOR_DEFAULT).expect("grid block"));
            }
        }
    }
    out
}

/// Largest observed `||F||_p^p / (lambda B^(p-2))` over [`moment_grid`].
pub fn fitted_moment_constant(p: f64) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for bp in moment_grid() {
        let ratio = block_moments(&bp, p)? / (bp.lambda * bp.height.powf(p - 2.0));
        worst = worst.max(ratio);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bits::{BitTape, Overlay};

    #[test]
    fn depth_examples() {
        assert_eq!(choose_depth(1.0, 100.0, 8).unwrap(), 23);
        assert_eq!(choose_depth(1.0, 1.0, 1).unwrap(), 6);
        // Exhaustive scan oracle.
        for &(lambda, b, l) in &[(1.0, 100.0, 8u64), (0.25, 150.0, 33), (0.5, 3.0, 1000)] {
            let target = 64.0 * b * b * l as f64 / lambda;
            let scan = (1..200u32).find(|&d| pow2(d) >= target && pow2(d) < 2.0 * target).unwrap();
            assert_eq!(choose_depth(lambda, b, l).unwrap(), scan);
        }
        // Halving lambda doubles the target: depth moves by exactly one.
        assert_eq!(choose_depth(0.5, 100.0, 8).unwrap(), 24);
        assert!(choose_depth(0.0, 100.0, 8).is_err());
        assert!(choose_depth(1.0, 0.5, 8).is_err());
    }

    #[test]
    fn spike_values() {
        let s1 = SpikeParams::new(1).unwrap();
        assert_eq!((s1.h, s1.g), (1.0, 1.0));
        let s2 = SpikeParams::new(2).unwrap();
        assert!((s2.h - 3f64.sqrt()).abs() < 1e-15);
        assert!((s2.g - 1.0 / 3f64.sqrt()).abs() < 1e-15);
        assert!(SpikeParams::new(0).is_err());

        let zero = Overlay::new(BitTape::new(1)).force_zero(BitIndex::new(1).unwrap(), 1);
        let one = Overlay::new(BitTape::new(1)).force_one(BitIndex::new(1).unwrap());
        assert_eq!(spike_eval(&s1, &zero, 0).unwrap(), 1.0);
        assert_eq!(spike_eval(&s1, &one, 0).unwrap(), -1.0);
    }

    #[test]
    fn spike_identities_hold() {
        for d in 1..=40 {
            let sp = SpikeParams::new(d).unwrap();
            let tol = if d > 30 { 1e-9 } else { 1e-12 };
            assert!(sp.mean().abs() < tol, "d={d}");
            assert!((sp.second_moment() - 1.0).abs() < tol, "d={d}");
            assert!((sp.h * sp.g - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn block_floor_example() {
        let bp = BlockParams::from_height(1.0, 100.0, 8, None, 0, B_FLOOR_DEFAULT).unwrap();
        assert_eq!(bp.depth, 23);
        let floor = block_floor(&bp);
        assert!((floor - (-9.766e-4)).abs() < 1e-6, "{floor}");
        assert!(floor >= floor_bound(&bp));
        assert!((floor_bound(&bp) + 1.7678e-3).abs() < 1e-6);
    }

    #[test]
    fn block_eval_small_cases() {
        let bp = BlockParams::from_height(1.0, 1.0, 8, None, 0, 1.0).unwrap();
        let sp = bp.spike();
        // Pin every layer window to nonzero: K = 0.
        let mut all_one = Overlay::new(BitTape::new(5));
        for q in 1..=8 {
            let v = bp.layer_exponent(0, q).unwrap();
            all_one = all_one.force_one(BitIndex::after_shift(v).unwrap());
        }
        let f0 = block_eval(&bp, &all_one, 0).unwrap();
        assert!((f0 - block_floor(&bp)).abs() < 1e-15);
        // Release layer three.
        let v3 = bp.layer_exponent(0, 3).unwrap();
        let mut one_hit = Overlay::new(BitTape::new(5));
        for q in (1..=8).filter(|&q| q != 3) {
            let v = bp.layer_exponent(0, q).unwrap();
            one_hit = one_hit.force_one(BitIndex::after_shift(v).unwrap());
        }
        let one_hit = one_hit.force_zero(BitIndex::after_shift(v3).unwrap(), bp.depth as u64);
        let f1 = block_eval(&bp, &one_hit, 0).unwrap();
        assert!((f1 - bp.scale() * (sp.h - 7.0 * sp.g)).abs() < 1e-12);
    }

    #[test]
    fn negative_exponents_rejected() {
        let bp = BlockParams::from_height(1.0, 1.0, 8, None, 0, 1.0).unwrap();
        let tape = BitTape::new(0);
        assert!(block_eval(&bp, &tape, -(bp.spacing as i64)).is_ok());
        assert!(matches!(
            block_eval(&bp, &tape, -(bp.spacing as i64) - 1),
            Err(Error::NegativeExponent { .. })
        ));
    }

    #[test]
    fn block_eval_is_value_map_of_spiking_count() {
        let bp = BlockParams::geometric(0.5, 6, 2, 4, 3).unwrap();
        let law = bp.law();
        for seed in 0..2000 {
            let tape = BitTape::new(seed);
            let k = spiking_layers(&bp, &tape, 1).unwrap();
            let direct = block_eval(&bp, &tape, 1).unwrap();
            assert!((direct - law.value_map(k)).abs() < 1e-12);
        }
    }

    #[test]
    fn exact_law_mass_is_one() {
        let bp = BlockParams::geometric(1.0, 7, 5, 7, 0).unwrap();
        assert_eq!(bp.law().total_mass_exact(), BigRational::one());
        let float_mass: f64 = bp.law().pmf().iter().map(|x| x.1).sum();
        assert!((float_mass - 1.0).abs() < 1e-14);
    }

    #[test]
    fn moments_match_closed_forms() {
        for bp in moment_grid() {
            assert!((block_moments(&bp, 2.0).unwrap() - bp.lambda).abs() < 1e-10);
        }
        // Single layer.
        let bp = BlockParams::from_height(0.25, 100.0, 1, None, 0, B_FLOOR_DEFAULT).unwrap();
        let sp = bp.spike();
        for p in [2.0, 3.0, 4.0, 6.5] {
            let expect = bp.lambda.powf(p / 2.0) * (sp.p() * sp.h.powf(p) + (1.0 - sp.p()) * sp.g.powf(p));
            let got = block_moments(&bp, p).unwrap();
            assert!((got / expect - 1.0).abs() < 1e-10, "p={p}");
        }
        assert!(block_moments(&bp, 1.5).is_err());
    }

    #[test]
    fn fourth_moment_ratio_is_bounded_on_grid() {
        let ratios: Vec<f64> = moment_grid()
            .iter()
            .map(|bp| block_moments(bp, 4.0).unwrap() / (bp.lambda * bp.height * bp.height))
            .collect();
        let lo = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = fitted_moment_constant(4.0).unwrap();
        // Dominated by the rare spike: roughly 2^d lambda / L, i.e. 64..128.
        assert!(lo > 32.0 && hi < 256.0, "{lo} {hi}");
    }

    #[test]
    fn sparse_block_eval_matches_direct() {
        let bp = BlockParams::from_height(1.0, 1.0, 40, None, 5, 1.0).unwrap();
        let long = BlockParams::geometric(1.0, 6, 70, 72, 0).unwrap();
        for seed in 0..300u64 {
            let t = BitTape::new(seed);
            let shift = (seed % 17) as i64;
            let a = block_eval(&bp, &t, shift).unwrap();
            let b = block_eval_sparse(&bp, &t, shift).unwrap();
            assert!((a - b).abs() < 1e-12, "{a} {b}");
        }
        // Windows longer than one word.
        let at = BitIndex::after_shift(long.layer_exponent(0, 3).unwrap()).unwrap();
        let t = Overlay::new(BitTape::new(1)).force_zero(at, 70);
        assert!((block_eval(&long, &t, 0).unwrap() - block_eval_sparse(&long, &t, 0).unwrap()).abs() < 1e-12);
        assert_eq!(spiking_layers(&long, &t, 0).unwrap(), 1);
    }
}

//! Evaluating a manifest on a tape: `f`, its lacunary averages, and the
//! signal check at successful trial endpoints.
//!
//! [`f_eval`] and [`average_at`] evaluate every layer directly. [`HitProfile`]
//! computes the same sums sparsely: block `i` at exponent `m` equals
//! `sqrt(lambda/L) ((h + g) K - L g)` where `K` counts all-zero windows at
//! digit `U_i + m + q D_i + 1`, so a sum over exponents only needs the zero
//! windows of the tape and, per window, the number of `(j, q)` pairs that land
//! on it.

use super::{ExponentRun, Manifest};
use crate::bits::{zero_window_starts, BitIndex, BitSource};
use crate::error::{invalid, Error, Result};
use crate::spike::{block_eval, block_eval_sparse};

/// `sum_k F_k(2^shift x)` over the built stages.
pub fn f_eval<S: BitSource + ?Sized>(m: &Manifest, src: &S, shift: u64) -> Result<f64> {
    let shift = i64::try_from(shift).map_err(|_| Error::Overflow("shift"))?;
    let mut total = 0.0;
    for s in &m.stages {
        total += block_eval(&s.block, src, shift)?;
    }
    Ok(total)
}

/// [`f_eval`] with one digit scan per block.
pub fn f_eval_sparse<S: BitSource + ?Sized>(m: &Manifest, src: &S, shift: u64) -> Result<f64> {
    let shift = i64::try_from(shift).map_err(|_| Error::Overflow("shift"))?;
    let mut total = 0.0;
    for s in &m.stages {
        total += block_eval_sparse(&s.block, src, shift)?;
    }
    Ok(total)
}

/// `N^-1 sum_{j <= N} f(2^(m_j) x)`, evaluated layer by layer.
pub fn average_at<S: BitSource + ?Sized>(m: &Manifest, src: &S, n: u64) -> Result<f64> {
    if n == 0 {
        return Err(invalid("N", "must be positive"));
    }
    let exps = m.exponent_prefix(n)?;
    let mut total = 0.0;
    for e in exps {
        total += f_eval(m, src, e)?;
    }
    Ok(total / n as f64)
}

/// Zero-window starts of one tape for every stage block of a manifest.
pub struct HitProfile<'m> {
    manifest: &'m Manifest,
    runs: Vec<(usize, usize, u64, ExponentRun)>,
    starts: Vec<Vec<u64>>,
}

fn zero_starts<S: BitSource + ?Sized>(src: &S, lo: u64, hi: u64, len: u64) -> Result<Vec<u64>> {
    let (lo, hi) = (BitIndex::new(lo)?, BitIndex::new(hi)?);
    if len <= 64 {
        return Ok(zero_window_starts(&src, lo, hi, len));
    }
    let mut out = zero_window_starts(&src, lo, hi, 64);
    out.retain(|&s| src.window_all_zero(BitIndex::new(s).expect("positive"), len));
    Ok(out)
}

/// Solutions `r` in `[lo, hi]` of `r a = b (mod n)`.
fn count_congruent(a: i128, b: i128, n: i128, lo: i128, hi: i128) -> u64 {
    if lo > hi {
        return 0;
    }
    let (g, x, _) = ext_gcd(a.rem_euclid(n), n);
    if b.rem_euclid(g) != 0 {
        return 0;
    }
    let step = n / g;
    let r0 = ((b / g).rem_euclid(step) * x.rem_euclid(step)).rem_euclid(step);
    let upto = |v: i128| (v - r0).div_euclid(step);
    (upto(hi) - upto(lo - 1)) as u64
}

fn ext_gcd(a: i128, b: i128) -> (i128, i128, i128) {
    if b == 0 {
        (a, 1, 0)
    } else {
        let (g, x, y) = ext_gcd(b, a % b);
        (g, y, x - (a / b) * y)
    }
}

impl<'m> HitProfile<'m> {
    pub fn new<S: BitSource + ?Sized>(manifest: &'m Manifest, src: &S) -> Result<Self> {
        let runs = manifest.runs();
        let m_min = runs.first().map(|r| r.3.first).ok_or_else(|| invalid("manifest", "no exponents"))?;
        let m_max = runs.iter().map(|r| r.3.last()).max().expect("nonempty");
        let mut starts = Vec::with_capacity(manifest.stages.len());
        for s in &manifest.stages {
            let bp = &s.block;
            let lo = bp.base_shift + m_min + bp.spacing + 1;
            let hi = bp.base_shift + m_max + bp.layers * bp.spacing + 1;
            starts.push(zero_starts(src, lo, hi, bp.depth as u64)?);
        }
        Ok(HitProfile { manifest, runs, starts })
    }

    pub fn manifest(&self) -> &Manifest {
        self.manifest
    }

    /// Pairs `(j, q)` with `j0 <= j < j1` and layer `q` of block `i` at exponent
    /// `m_j` sitting on an all-zero window.
    pub fn hit_pairs(&self, i: usize, j0: u64, j1: u64) -> u64 {
        let bp = &self.manifest.stages[i].block;
        let (di, li) = (bp.spacing as i128, bp.layers as i128);
        let mut total = 0;
        for &s in &self.starts[i] {
            let c = s as i128 - 1 - bp.base_shift as i128;
            for &(_, _, offset, run) in &self.runs {
                let (ra, rb) = (j0.max(offset), j1.min(offset + run.count));
                if ra >= rb {
                    continue;
                }
                let (ra, rb) = ((ra - offset) as i128, (rb - offset - 1) as i128);
                let (first, step) = (run.first as i128, run.step as i128);
                // first + r step in [c - L D, c - D] and congruent to c mod D.
                let lo = (c - li * di - first).div_euclid(step) + ((c - li * di - first).rem_euclid(step) != 0) as i128;
                let hi = (c - di - first).div_euclid(step);
                total += count_congruent(step, c - first, di, lo.max(ra), hi.min(rb));
            }
        }
        total
    }

    /// `sum_{j0 <= j < j1} F_i(2^(m_j) x)`.
    pub fn block_sum(&self, i: usize, j0: u64, j1: u64) -> f64 {
        if j1 <= j0 {
            return 0.0;
        }
        let bp = &self.manifest.stages[i].block;
        let sp = bp.spike();
        let k = self.hit_pairs(i, j0, j1) as f64;
        let n = (j1 - j0) as f64;
        bp.scale() * ((sp.h + sp.g) * k - n * bp.layers as f64 * sp.g)
    }

    /// `sum_{j < n} f(2^(m_j) x)`.
    pub fn partial_sum(&self, n: u64) -> f64 {
        (0..self.manifest.stages.len()).map(|i| self.block_sum(i, 0, n)).sum()
    }

    pub fn average(&self, n: u64) -> Result<f64> {
        if n == 0 || n > self.manifest.total_exponents() {
            return Err(invalid("N", format!("must lie in 1..={}", self.manifest.total_exponents())));
        }
        Ok(self.partial_sum(n) / n as f64)
    }

    /// Good event of trial `t` of stage index `i`: a central window
    /// `U + M + hD + 1`, `ell + 1 <= h <= L + 1`, is all zero.
    pub fn good_event(&self, i: usize, t: usize) -> bool {
        let s = &self.manifest.stages[i];
        let bp = &s.block;
        let base = bp.base_shift as i128 + s.starts[t] as i128 + 1;
        let (lo, hi) = (s.lengths[t] as i128 + 1, bp.layers as i128 + 1);
        self.starts[i].iter().any(|&st| {
            let off = st as i128 - base;
            off.rem_euclid(bp.spacing as i128) == 0 && (lo..=hi).contains(&(off / bp.spacing as i128))
        })
    }

    /// Stage index `i` succeeds when one of its trials is good.
    pub fn stage_success(&self, i: usize) -> bool {
        (0..self.manifest.stages[i].trials()).any(|t| self.good_event(i, t))
    }

    pub fn good_trials(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (i, s) in self.manifest.stages.iter().enumerate() {
            for t in 0..s.trials() {
                if self.good_event(i, t) {
                    out.push((i, t));
                }
            }
        }
        out
    }

    /// The signal / past / off-block split at the endpoint of trial `(i, t)`.
    pub fn signal_report(&self, i: usize, t: usize) -> Result<SignalReport> {
        if !self.good_event(i, t) {
            return Err(Error::Precondition(format!("trial ({}, {}) is not good on this tape", i + 1, t + 1)));
        }
        let s = &self.manifest.stages[i];
        let (j0, j1) = (s.prior[t], s.endpoints[t]);
        let signal = self.block_sum(i, j0, j1);
        let past: f64 = (0..self.manifest.stages.len()).map(|x| self.block_sum(x, 0, j0)).sum();
        let off_block: f64 = (0..self.manifest.stages.len()).filter(|&x| x != i).map(|x| self.block_sum(x, j0, j1)).sum();
        let n = j1 as f64;
        let average = (signal + past + off_block) / n;
        Ok(SignalReport {
            stage: i + 1,
            trial: t + 1,
            n: j1,
            ell: s.lengths[t],
            height: s.block.height,
            mu: self.manifest.mu,
            signal,
            past,
            off_block,
            average,
        })
    }
}

/// Decomposition of `sum_{j <= N} f(n_j x)` at a good trial endpoint.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SignalReport {
    pub stage: usize,
    pub trial: usize,
    pub n: u64,
    pub ell: u64,
    pub height: f64,
    pub mu: f64,
    pub signal: f64,
    pub past: f64,
    pub off_block: f64,
    pub average: f64,
}

impl SignalReport {
    pub fn signal_ok(&self) -> bool {
        self.signal >= 2.0 * self.height * self.ell as f64
    }

    pub fn floor_ok(&self) -> bool {
        self.past + self.off_block >= -self.mu * self.n as f64
    }

    pub fn average_ok(&self) -> bool {
        self.average >= self.height - self.mu
    }

    pub fn passed(&self) -> bool {
        self.signal_ok() && self.floor_ok() && self.average_ok()
    }
}

/// Checks `average_at(N_{k,t}) >= B_k - mu` (stage `k`, trial `t`, both 1-based).
pub fn master_signal_check<S: BitSource + ?Sized>(m: &Manifest, src: &S, k: usize, t: usize) -> Result<SignalReport> {
    if k == 0 || k > m.stages.len() || t == 0 || t > m.stages[k - 1].trials() {
        return Err(invalid("trial", format!("no trial ({k}, {t}) in this manifest")));
    }
    HitProfile::new(m, src)?.signal_report(k - 1, t - 1)
}

#[cfg(test)]
mod tests {
    use super::super::{build_manifest, BuildOptions, StageConfig};
    use super::*;
    use crate::bits::{BitTape, Overlay};
    use crate::trial::{good_event, trial_sum};

    fn desk() -> Manifest {
        let opts = BuildOptions { b_floor: 1.0, ..BuildOptions::default() };
        let cfgs = vec![StageConfig::new(1.0, 1.0, 2, "test"), StageConfig::new(0.5, 1.0, 1, "test")];
        build_manifest(&cfgs, &opts, "test", 1).unwrap()
    }

    fn brute_congruent(a: i128, b: i128, n: i128, lo: i128, hi: i128) -> u64 {
        (lo..=hi).filter(|r| (r * a - b).rem_euclid(n) == 0).count() as u64
    }

    #[test]
    fn congruence_counts() {
        for a in 1..12i128 {
            for n in 1..10i128 {
                for b in -7..7i128 {
                    assert_eq!(count_congruent(a, b, n, -5, 17), brute_congruent(a, b, n, -5, 17), "{a} {b} {n}");
                }
            }
        }
    }

    /// A tape with a central window of trial `(i, t)` forced to zero.
    fn forced(m: &Manifest, seed: u64, i: usize, t: usize, h_off: u64) -> Overlay<BitTape> {
        let s = &m.stages[i];
        let tr = s.trial_spec(t);
        let h = s.lengths[t] + 1 + h_off;
        Overlay::new(BitTape::new(seed)).force_zero(tr.window_start(&s.block, h).unwrap(), s.block.depth as u64)
    }

    #[test]
    fn sparse_sums_match_direct() {
        let m = desk();
        for seed in 0..4u64 {
            let tape = forced(&m, seed, 0, 1, 7);
            let prof = HitProfile::new(&m, &tape).unwrap();
            for n in [1u64, 2, 20, 21, 300, 440] {
                let direct = average_at(&m, &tape, n).unwrap();
                let sparse = prof.average(n).unwrap();
                assert!((direct - sparse).abs() < 1e-9 * direct.abs().max(1.0), "seed {seed} n {n}: {direct} {sparse}");
            }
            for shift in [0u64, 3, 1000] {
                let (a, b) = (f_eval(&m, &tape, shift).unwrap(), f_eval_sparse(&m, &tape, shift).unwrap());
                assert!((a - b).abs() < 1e-9, "{a} {b}");
            }
        }
    }

    #[test]
    fn sparse_good_events_match_trial_module() {
        let m = desk();
        for seed in 0..30u64 {
            let tape = if seed % 3 == 0 { forced(&m, seed, 1, 0, seed) } else { Overlay::new(BitTape::new(seed)) };
            let prof = HitProfile::new(&m, &tape).unwrap();
            for (i, s) in m.stages.iter().enumerate() {
                for t in 0..s.trials() {
                    assert_eq!(prof.good_event(i, t), good_event(&s.block, &s.trial_spec(t), &tape).unwrap());
                }
            }
        }
    }

    #[test]
    fn forced_good_trial_carries_the_signal() {
        let m = desk();
        for (i, s) in m.stages.iter().enumerate() {
            for t in 0..s.trials() {
                let tape = forced(&m, 99, i, t, 3);
                let rep = master_signal_check(&m, &tape, i + 1, t + 1).unwrap();
                assert!(rep.passed(), "{rep:?}");
                let direct_signal = trial_sum(&s.block, &s.trial_spec(t), &tape).unwrap();
                assert!((rep.signal - direct_signal).abs() < 1e-9 * direct_signal.abs());
                let direct_avg = average_at(&m, &tape, rep.n).unwrap();
                assert!((rep.average - direct_avg).abs() < 1e-9 * direct_avg.abs().max(1.0));
            }
        }
    }

    #[test]
    fn signal_check_requires_good_event() {
        let m = desk();
        let mut tape = Overlay::new(BitTape::new(5));
        let s = &m.stages[0];
        let tr = s.trial_spec(0);
        for h in tr.central_range(&s.block) {
            tape = tape.force_one(tr.window_start(&s.block, h).unwrap());
        }
        assert!(matches!(master_signal_check(&m, &tape, 1, 1), Err(Error::Precondition(_))));
        assert!(master_signal_check(&m, &tape, 3, 1).is_err());
    }

    #[test]
    fn f_eval_floor_and_single_stage() {
        let m = desk();
        for seed in 0..200u64 {
            let tape = BitTape::new(seed);
            let shift = seed * 37;
            let v = f_eval(&m, &tape, shift).unwrap();
            assert!(v >= -m.mu);
            let first = block_eval(&m.stages[0].block, &tape, shift as i64).unwrap();
            assert!(v - first >= -m.mu);
        }
        let opts = BuildOptions { b_floor: 1.0, ..BuildOptions::default() };
        let single = build_manifest(&[StageConfig::new(1.0, 1.0, 1, "test")], &opts, "test", 0).unwrap();
        let tape = BitTape::new(4);
        assert_eq!(f_eval(&single, &tape, 9).unwrap(), block_eval(&single.stages[0].block, &tape, 9).unwrap());
        let e0 = single.exponents[0].first;
        assert_eq!(average_at(&single, &tape, 1).unwrap(), f_eval(&single, &tape, e0).unwrap());
        assert!(average_at(&single, &tape, 21).is_err());
    }
}

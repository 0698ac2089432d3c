//! Binary digits of a point of the circle as a seeded, random-access bit tape.
//!
//! A point `x` in `[0, 1)` is modelled by its digit sequence `x = 0.b1 b2 b3 ...`.
//! Digit `i` (1-based) is bit `(i - 1) % 64` (most significant first) of word
//! `(i - 1) / 64`, and word `w` of a tape with seed `s` is
//!
//! ```text
//! key      = splitmix_mix(s)
//! word(w)  = splitmix_mix(key + (w + 1) * 0x9E3779B97F4A7C15)   (wrapping)
//! ```
//!
//! where `splitmix_mix` is the SplitMix64 output finalizer. Per-sample tapes in
//! Monte Carlo runs use [`derive_seed`]. Both formulas are part of the public
//! contract so other implementations can replay a run bit for bit.

use crate::error::{invalid, Error, Result};

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;
const SAMPLE_STRIDE: u64 = 0xD1B5_4A32_D192_ED03;

/// SplitMix64 finalizer.
#[inline]
pub fn splitmix_mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of the `counter`-th sample tape of a run with master seed `master`:
/// `splitmix_mix(splitmix_mix(master) ^ counter * 0xD1B54A32D192ED03)`.
#[inline]
pub fn derive_seed(master: u64, counter: u64) -> u64 {
    splitmix_mix(splitmix_mix(master) ^ counter.wrapping_mul(SAMPLE_STRIDE))
}

/// 1-based digit position.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BitIndex(u64);

impl BitIndex {
    pub fn new(value: u64) -> Result<Self> {
        if value == 0 {
            return Err(invalid("bit index", "digit positions start at 1"));
        }
        Ok(BitIndex(value))
    }

    /// Index of the first digit of `{2^v x}`, i.e. `v + 1`.
    pub fn after_shift(v: u64) -> Result<Self> {
        v.checked_add(1)
            .map(BitIndex)
            .ok_or(Error::Overflow("bit index"))
    }

    pub fn get(self) -> u64 {
        self.0
    }

    pub fn checked_add(self, by: u64) -> Result<Self> {
        self.0
            .checked_add(by)
            .map(BitIndex)
            .ok_or(Error::Overflow("bit index"))
    }
}

/// Anything that can serve the digits of a point.
pub trait BitSource {
    /// Word `w` holds digits `64w + 1 ..= 64w + 64`, most significant bit first.
    fn word(&self, w: u64) -> u64;

    fn bit(&self, i: BitIndex) -> bool {
        let p = i.get() - 1;
        (self.word(p / 64) >> (63 - p % 64)) & 1 == 1
    }

    fn read_window(&self, start: BitIndex, len: u64) -> Result<Vec<bool>> {
        if len == 0 {
            return Err(invalid("len", "window length must be positive"));
        }
        start.checked_add(len - 1)?;
        Ok((0..len)
            .map(|o| self.bit(BitIndex(start.get() + o)))
            .collect())
    }

    /// True iff digits `start ..= start + len - 1` are all zero. With
    /// `start = v + 1` this is the event `{2^v x} < 2^-len`.
    fn window_all_zero(&self, start: BitIndex, len: u64) -> bool {
        debug_assert!(len >= 1);
        let p0 = start.get() - 1;
        let p1 = p0 + len - 1;
        let (w0, w1) = (p0 / 64, p1 / 64);
        for w in w0..=w1 {
            let a = if w == w0 { p0 % 64 } else { 0 };
            let b = if w == w1 { p1 % 64 } else { 63 };
            let mask = (u64::MAX >> a) & (u64::MAX << (63 - b));
            if self.word(w) & mask != 0 {
                return false;
            }
        }
        true
    }
}

impl<S: BitSource + ?Sized> BitSource for &S {
    fn word(&self, w: u64) -> u64 {
        (**self).word(w)
    }
}

/// Deterministic digit tape keyed by a 64-bit seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BitTape {
    seed: u64,
    key: u64,
}

impl BitTape {
    pub fn new(seed: u64) -> Self {
        BitTape {
            seed,
            key: splitmix_mix(seed),
        }
    }

    /// The tape of sample `counter` in a run seeded with `master`.
    pub fn for_sample(master: u64, counter: u64) -> Self {
        BitTape::new(derive_seed(master, counter))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

impl BitSource for BitTape {
    #[inline]
    fn word(&self, w: u64) -> u64 {
        splitmix_mix(self.key.wrapping_add(w.wrapping_add(1).wrapping_mul(GOLDEN)))
    }
}

/// A tape with some digits pinned: windows forced to zero and single digits
/// forced to one. Used to build forced good trials and negative controls.
#[derive(Clone, Debug)]
pub struct Overlay<S> {
    base: S,
    zeros: Vec<(u64, u64)>,
    ones: Vec<u64>,
}

impl<S: BitSource> Overlay<S> {
    pub fn new(base: S) -> Self {
        Overlay {
            base,
            zeros: Vec::new(),
            ones: Vec::new(),
        }
    }

    /// Pins digits `start ..= start + len - 1` to zero.
    pub fn force_zero(mut self, start: BitIndex, len: u64) -> Self {
        self.zeros.push((start.get() - 1, len));
        self
    }

    /// Pins one digit to one; later `force_one` calls win over `force_zero`.
    pub fn force_one(mut self, at: BitIndex) -> Self {
        self.ones.push(at.get() - 1);
        self
    }
}

impl<S: BitSource> BitSource for Overlay<S> {
    fn word(&self, w: u64) -> u64 {
        let mut word = self.base.word(w);
        let lo = w * 64;
        let hi = lo + 63;
        for &(p0, len) in &self.zeros {
            let p1 = p0 + len - 1;
            if p1 < lo || p0 > hi {
                continue;
            }
            let a = p0.max(lo) - lo;
            let b = p1.min(hi) - lo;
            word &= !((u64::MAX >> a) & (u64::MAX << (63 - b)));
        }
        for &p in &self.ones {
            if (lo..=hi).contains(&p) {
                word |= 1u64 << (63 - (p - lo));
            }
        }
        word
    }
}

/// Every start `s` in `[lo, hi]` whose window `s ..= s + len - 1` is all zero,
/// in increasing order. Windows may run past `hi`. Requires `1 <= len <= 64`.
pub fn zero_window_starts<S: BitSource + ?Sized>(src: &S, lo: BitIndex, hi: BitIndex, len: u64) -> Vec<u64> {
    assert!((1..=64).contains(&len), "window length must be in 1..=64");
    let mut out = Vec::new();
    if hi < lo {
        return out;
    }
    let p_lo = lo.get() - 1;
    let p_hi = hi.get() - 1;
    let w_lo = p_lo / 64;
    let w_hi = p_hi / 64;
    let mut cur = src.word(w_lo);
    for w in w_lo..=w_hi {
        let next = src.word(w + 1);
        let mut mask = run_start_mask(cur, next, len as u32);
        if mask != 0 {
            let base = w * 64;
            if base < p_lo {
                mask &= u64::MAX >> (p_lo - base);
            }
            if base + 63 > p_hi {
                mask &= u64::MAX << (63 - (p_hi - base));
            }
            while mask != 0 {
                let off = mask.leading_zeros() as u64;
                out.push(base + off + 1);
                mask &= !(1u64 << (63 - off));
            }
        }
        cur = next;
    }
    out
}

/// How many of the windows starting at `first + i step`, `0 <= i < count`,
/// are all zero, using one scan for the whole range.
pub fn count_zero_windows<S: BitSource + ?Sized>(src: &S, first: BitIndex, step: u64, count: u64, len: u64) -> Result<u64> {
    if count == 0 {
        return Ok(0);
    }
    if step == 0 {
        return Err(invalid("step", "must be positive"));
    }
    let last = first.checked_add(step.checked_mul(count - 1).ok_or(Error::Overflow("window range"))?)?;
    let base = first.get();
    let mut hits = zero_window_starts(src, first, last, len.min(64));
    hits.retain(|&z| (z - base).is_multiple_of(step));
    if len > 64 {
        hits.retain(|&z| src.window_all_zero(BitIndex(z), len));
    }
    Ok(hits.len() as u64)
}

/// Bit `63 - o` is set iff the `len` digits starting at offset `o` of `cur`
/// (continuing into `next`) are all zero.
#[inline]
fn run_start_mask(cur: u64, next: u64, len: u32) -> u64 {
    let mut t = !(((cur as u128) << 64) | next as u128);
    let mut have = 1u32;
    while have * 2 <= len {
        t &= t << have;
        have *= 2;
    }
    if have < len {
        t &= t << (len - have);
    }
    (t >> 64) as u64
}

/// Largest `e` with `2^e | r`.
pub fn valuation(r: i128) -> Result<u32> {
    if r == 0 {
        return Err(Error::ZeroValuation);
    }
    Ok(r.trailing_zeros())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn idx(i: u64) -> BitIndex {
        BitIndex::new(i).unwrap()
    }

    #[test]
    fn valuation_examples() {
        assert_eq!(valuation(12).unwrap(), 2);
        assert_eq!(valuation(1).unwrap(), 0);
        assert_eq!(valuation(-2048).unwrap(), 11);
        assert!(matches!(valuation(0), Err(Error::ZeroValuation)));
    }

    #[test]
    fn index_zero_rejected() {
        assert!(BitIndex::new(0).is_err());
        assert!(BitIndex::new(u64::MAX).unwrap().checked_add(1).is_err());
    }

    #[test]
    fn reads_are_replayable() {
        let tape = BitTape::new(7);
        let a = tape.read_window(idx(1), 3).unwrap();
        let b = tape.read_window(idx(1), 3).unwrap();
        assert_eq!(a, b);
        let long = tape.read_window(idx(50), 100).unwrap();
        let short = tape.read_window(idx(90), 40).unwrap();
        assert_eq!(&long[40..80], &short[..]);
        assert!(tape.read_window(idx(1), 0).is_err());
    }

    #[test]
    fn window_all_zero_matches_bitwise_reading() {
        for seed in 0..200u64 {
            let tape = BitTape::new(seed);
            for start in [1u64, 60, 63, 64, 65, 127, 1000] {
                for len in [1u64, 3, 9, 64, 70] {
                    let bits = tape.read_window(idx(start), len).unwrap();
                    let expect = bits.iter().all(|b| !b);
                    assert_eq!(tape.window_all_zero(idx(start), len), expect);
                }
            }
        }
    }

    #[test]
    fn overlay_pins_digits() {
        let tape = Overlay::new(BitTape::new(3))
            .force_zero(idx(60), 20)
            .force_one(idx(70));
        assert!(tape.window_all_zero(idx(60), 10));
        assert!(tape.bit(idx(70)));
        assert!(!tape.window_all_zero(idx(60), 20));
        assert!(tape.window_all_zero(idx(71), 9));
    }

    #[test]
    fn zero_window_scan_agrees_with_direct_checks() {
        for seed in 0..40u64 {
            let tape = BitTape::new(seed);
            for len in [1u64, 2, 5, 8, 13, 64] {
                let (lo, hi) = (37u64, 2000u64);
                let fast = zero_window_starts(&tape, idx(lo), idx(hi), len);
                let slow: Vec<u64> = (lo..=hi)
                    .filter(|&s| tape.window_all_zero(idx(s), len))
                    .collect();
                assert_eq!(fast, slow, "seed {seed} len {len}");
            }
        }
    }

    #[test]
    fn zero_window_scan_sees_forced_runs() {
        let tape = Overlay::new(BitTape::new(11)).force_zero(idx(100), 30);
        let starts = zero_window_starts(&tape, idx(1), idx(400), 20);
        for s in 100..=110 {
            assert!(starts.contains(&s));
        }
    }

    #[test]
    fn distinct_seeds_give_distinct_tapes() {
        assert_ne!(BitTape::new(1).word(0), BitTape::new(2).word(0));
        assert_ne!(derive_seed(5, 0), derive_seed(5, 1));
        assert_eq!(BitTape::for_sample(5, 9), BitTape::new(derive_seed(5, 9)));
    }
}

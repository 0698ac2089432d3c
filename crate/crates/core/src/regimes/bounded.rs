//! The bounded construction: small dyadic sets `E_k` that a central hit
//! forces every point of a trial into.
//!
//! `E_k = union_q {y : {2^(q D_k) y} < 2^-d_k}`, so `2^m x` lies in `E_k` iff the
//! digits `qD + m + 1 ..= qD + m + d` of `x` vanish for some `1 <= q <= L_k`.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use super::Schedule;
use crate::bits::{zero_window_starts, BitIndex, BitSource};
use crate::error::{invalid, Error, Result};
use crate::master::{Caps, ExponentRun};
use crate::trial::hit_probability;

pub const REGIME: &str = "bounded";
pub const HITSET_FORMAT: &str = "spikeblock-hitset/1";
pub const C1: f64 = 7.0 / 32.0;

#[derive(Clone, Debug, PartialEq)]
pub struct BoundedConfig {
    pub epsilon: f64,
    /// Integers `A_k >= 4` with `sum 1/A_k < epsilon`.
    pub a_schedule: Schedule,
    pub c: f64,
    /// Clamp `T_k` to the trials cap, flagging the stage.
    pub surrogate: bool,
}

impl Default for BoundedConfig {
    fn default() -> Self {
        BoundedConfig { epsilon: 0.5, a_schedule: Schedule::Pow2 { offset: 2 }, c: 8.0 / C1, surrogate: false }
    }
}

impl BoundedConfig {
    /// `sum_k 1/A_k` exactly, for schedules where it is known in closed form.
    pub fn inverse_sum(&self) -> Result<BigRational> {
        match &self.a_schedule {
            // sum_{k>=1} 2^-(k+o) = 2^-o
            Schedule::Pow2 { offset } => Ok(pow2_rational(-(*offset as i64))),
            Schedule::List(v) => v.iter().try_fold(BigRational::zero(), |acc, &a| {
                Ok(acc + BigRational::new(BigInt::one(), BigInt::from(integer_a(a)?)))
            }),
            other => Err(invalid("a_schedule", format!("{other}: need pow2(..) or list(..) for an exact sum"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(invalid("epsilon", "must lie in (0, 1)"));
        }
        if self.c < 8.0 / C1 {
            return Err(invalid("c", format!("must be at least 8 / c1 = {}", 8.0 / C1)));
        }
        if self.inverse_sum()? >= BigRational::from_float(self.epsilon).expect("finite") {
            return Err(invalid("a_schedule", "sum 1/A_k must be below epsilon"));
        }
        Ok(())
    }
}

fn integer_a(a: f64) -> Result<u64> {
    if a.fract() != 0.0 || a < 4.0 || a > 2f64.powi(40) {
        return Err(invalid("a_schedule", format!("A_k must be an integer in [4, 2^40], got {a}")));
    }
    Ok(a as u64)
}

fn pow2_rational(e: i64) -> BigRational {
    let p = BigInt::one() << e.unsigned_abs() as usize;
    if e >= 0 {
        BigRational::from_integer(p)
    } else {
        BigRational::new(BigInt::one(), p)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundedStage {
    pub k: u64,
    #[serde(rename = "A_k", with = "crate::serde_dec")]
    pub a: u64,
    /// `1 / theta_k = k + 1`.
    #[serde(with = "crate::serde_dec")]
    pub theta_inv: u64,
    #[serde(rename = "T_k", with = "crate::serde_dec")]
    pub trials: u64,
    #[serde(with = "crate::serde_dec")]
    pub requested_trials: u64,
    #[serde(with = "crate::serde_dec::vec")]
    pub lengths: Vec<u64>,
    #[serde(with = "crate::serde_dec::vec")]
    pub prior: Vec<u64>,
    #[serde(rename = "M", with = "crate::serde_dec::vec")]
    pub starts: Vec<u64>,
    #[serde(rename = "L", with = "crate::serde_dec")]
    pub layers: u64,
    #[serde(rename = "d")]
    pub depth: u32,
    #[serde(rename = "D", with = "crate::serde_dec")]
    pub spacing: u64,
    #[serde(with = "crate::serde_dec::vec")]
    pub endpoints: Vec<u64>,
    #[serde(with = "crate::serde_dec")]
    pub m_last: u64,
    #[serde(default)]
    pub relaxed: Vec<String>,
}

impl BoundedStage {
    pub fn trial_run(&self, t: usize) -> ExponentRun {
        ExponentRun { first: self.starts[t] + self.spacing, step: self.spacing, count: self.lengths[t] }
    }

    /// `L_k 2^-d_k`.
    pub fn measure_bound(&self) -> BigRational {
        BigRational::from_integer(BigInt::from(self.layers)) * pow2_rational(-(self.depth as i64))
    }

    /// `1 - (1 - 2^-d)^(L - ell + 1)` and the floor `c1 / A_k`.
    pub fn hit_probability(&self, t: usize) -> (f64, f64) {
        (hit_probability(self.depth, self.layers - self.lengths[t] + 1), C1 / self.a as f64)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HitSetManifest {
    pub format: String,
    pub regime: String,
    pub epsilon: f64,
    #[serde(with = "crate::serde_dec")]
    pub seed: u64,
    pub stages: Vec<BoundedStage>,
    pub exponents: Vec<ExponentRun>,
}

impl HitSetManifest {
    pub fn measure_bound(&self) -> BigRational {
        self.stages.iter().map(BoundedStage::measure_bound).fold(BigRational::zero(), |a, b| a + b)
    }

    pub fn measure_bound_ok(&self) -> bool {
        self.measure_bound() < BigRational::from_float(self.epsilon).expect("finite")
    }

    /// `L_k 2^-d_k <= 1/A_k` exactly for every stage.
    pub fn stage_bounds_ok(&self) -> bool {
        self.stages.iter().all(|s| s.measure_bound() <= BigRational::new(BigInt::one(), BigInt::from(s.a)))
    }

    pub fn total_exponents(&self) -> u64 {
        self.stages.last().map_or(0, |s| s.prior[s.lengths.len() - 1] + s.lengths[s.lengths.len() - 1])
    }

    pub fn exponent_list(&self) -> Vec<u64> {
        self.exponents.iter().flat_map(|r| r.iter().collect::<Vec<_>>()).collect()
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("hit-set manifest serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<HitSetManifest> {
        let m: HitSetManifest = serde_json::from_str(text).map_err(|e| Error::Malformed(format!("hit-set manifest: {e}")))?;
        if m.format != HITSET_FORMAT {
            return Err(Error::Malformed(format!("hit-set manifest: unsupported format {:?}", m.format)));
        }
        if m.stages.is_empty() {
            return Err(Error::Malformed("hit-set manifest: no stages".into()));
        }
        let derived: Vec<ExponentRun> = m.stages.iter().flat_map(|s| (0..s.lengths.len()).map(move |t| s.trial_run(t))).collect();
        if derived != m.exponents {
            return Err(Error::Malformed("hit-set manifest: exponent runs disagree with trial starts".into()));
        }
        Ok(m)
    }
}

/// Builds `stages` stages of the hitting-set construction.
pub fn bounded_build(cfg: &BoundedConfig, stages: usize, caps: &Caps, seed: u64) -> Result<HitSetManifest> {
    cfg.validate()?;
    if stages == 0 || stages > caps.max_stages {
        return Err(Error::CapExceeded { cap: "stages", requested: stages as u128, limit: caps.max_stages as u128 });
    }
    let overflow = |what| Error::Overflow(what);
    let mut p = 0u64;
    let mut m_last = 0u64;
    let mut out = Vec::with_capacity(stages);
    for k in 1..=stages as u64 {
        let a = integer_a(cfg.a_schedule.at(k)?)?;
        let requested_f = (cfg.c * a as f64 * ((k + 1) as f64).ln()).ceil();
        let requested = if requested_f >= u64::MAX as f64 { u64::MAX } else { requested_f as u64 };
        let mut relaxed = Vec::new();
        let trials = if requested > caps.max_trials {
            if !cfg.surrogate {
                return Err(Error::CapExceeded { cap: "trials", requested: requested as u128, limit: caps.max_trials as u128 });
            }
            relaxed.push("trials".to_string());
            caps.max_trials
        } else {
            requested
        };
        let theta_inv = k + 1;
        let mut lengths = Vec::with_capacity(trials as usize);
        let mut prior = Vec::with_capacity(trials as usize);
        for _ in 0..trials {
            let ell = theta_inv.checked_mul(p + 1).ok_or(overflow("trial length"))?;
            prior.push(p);
            lengths.push(ell);
            p = p.checked_add(ell).ok_or(overflow("selected count"))?;
        }
        let layers = 8u64.checked_mul(*lengths.iter().max().expect("trials >= 1")).ok_or(overflow("layers"))?;
        if layers > caps.max_layers {
            return Err(Error::CapExceeded { cap: "layers", requested: layers as u128, limit: caps.max_layers as u128 });
        }
        // Smallest d with A L <= 2^d; then 2^d < 2 A L.
        let al = (a as u128) * (layers as u128);
        let depth = 128 - (al - 1).leading_zeros();
        let spacing = depth as u64 + 2;
        let mut starts = Vec::with_capacity(lengths.len());
        let mut m = m_last.checked_add(spacing + 1).ok_or(overflow("trial start"))?;
        for t in 0..lengths.len() {
            starts.push(m);
            if t + 1 < lengths.len() {
                m = (layers + 2)
                    .checked_mul(spacing)
                    .and_then(|x| x.checked_add(m + depth as u64 + 2))
                    .ok_or(overflow("trial start"))?;
            }
        }
        let last = lengths.len() - 1;
        m_last = starts[last] + lengths[last] * spacing;
        let reach = m_last + layers * spacing + depth as u64;
        if reach > caps.max_digits {
            return Err(Error::CapExceeded { cap: "digits", requested: reach as u128, limit: caps.max_digits as u128 });
        }
        let endpoints = prior.iter().zip(&lengths).map(|(a, b)| a + b).collect();
        out.push(BoundedStage {
            k,
            a,
            theta_inv,
            trials,
            requested_trials: requested,
            lengths,
            prior,
            starts,
            layers,
            depth,
            spacing,
            endpoints,
            m_last,
            relaxed,
        });
    }
    let exponents = out.iter().flat_map(|s| (0..s.lengths.len()).map(move |t| s.trial_run(t))).collect();
    Ok(HitSetManifest {
        format: HITSET_FORMAT.to_string(),
        regime: REGIME.to_string(),
        epsilon: cfg.epsilon,
        seed,
        stages: out,
        exponents,
    })
}

/// Whether `2^shift x` lies in `E`, window by window.
pub fn bounded_membership<S: BitSource + ?Sized>(hm: &HitSetManifest, src: &S, shift: u64) -> Result<bool> {
    for s in &hm.stages {
        for q in 1..=s.layers {
            let at = BitIndex::new(q * s.spacing + shift + 1)?;
            if src.window_all_zero(at, s.depth as u64) {
                return Ok(true);
            }
        }
    }
    Ok(false)
}

/// Whether some central window `M + hD + 1`, `ell < h <= L + 1`, is all zero.
pub fn hit_event_direct<S: BitSource + ?Sized>(hm: &HitSetManifest, src: &S, i: usize, t: usize) -> Result<bool> {
    let s = &hm.stages[i];
    for h in s.lengths[t] + 1..=s.layers + 1 {
        if src.window_all_zero(BitIndex::new(s.starts[t] + h * s.spacing + 1)?, s.depth as u64) {
            return Ok(true);
        }
    }
    Ok(false)
}

/// Membership of every selected exponent, from one scan of zero windows.
pub struct MembershipProfile<'m> {
    manifest: &'m HitSetManifest,
    exponents: Vec<u64>,
    starts: Vec<Vec<u64>>,
    members: Vec<bool>,
}

impl<'m> MembershipProfile<'m> {
    pub fn new<S: BitSource + ?Sized>(manifest: &'m HitSetManifest, src: &S) -> Result<Self> {
        let exponents = manifest.exponent_list();
        let (lo_m, hi_m) = (exponents[0], *exponents.last().expect("nonempty"));
        let mut members = vec![false; exponents.len()];
        let mut starts = Vec::with_capacity(manifest.stages.len());
        for s in &manifest.stages {
            let (lo, hi) = (BitIndex::new(lo_m + s.spacing + 1)?, BitIndex::new(hi_m + s.layers * s.spacing + 1)?);
            let len = s.depth as u64;
            let mut zs = zero_window_starts(&src, lo, hi, len.min(64));
            if len > 64 {
                zs.retain(|&z| src.window_all_zero(BitIndex::new(z).expect("positive"), len));
            }
            for &z in &zs {
                // Exponents m with z - 1 - m = qD, 1 <= q <= L.
                let c = z - 1;
                let lo_e = c.saturating_sub(s.layers * s.spacing);
                let hi_e = match c.checked_sub(s.spacing) {
                    Some(v) => v,
                    None => continue,
                };
                let from = exponents.partition_point(|&e| e < lo_e);
                for (j, &e) in exponents.iter().enumerate().skip(from) {
                    if e > hi_e {
                        break;
                    }
                    if (c - e) % s.spacing == 0 {
                        members[j] = true;
                    }
                }
            }
            starts.push(zs);
        }
        Ok(MembershipProfile { manifest, exponents, starts, members })
    }

    pub fn is_member(&self, j: usize) -> bool {
        self.members[j]
    }

    pub fn exponent(&self, j: usize) -> u64 {
        self.exponents[j]
    }

    pub fn hit_event(&self, i: usize, t: usize) -> bool {
        let s = &self.manifest.stages[i];
        let base = s.starts[t] + 1;
        let (lo, hi) = (s.lengths[t] + 1, s.layers + 1);
        self.starts[i].iter().any(|&z| z >= base && (z - base).is_multiple_of(s.spacing) && (lo..=hi).contains(&((z - base) / s.spacing)))
    }

    /// Global indices of the trial's exponents.
    pub fn trial_indices(&self, i: usize, t: usize) -> std::ops::Range<usize> {
        let s = &self.manifest.stages[i];
        s.prior[t] as usize..s.endpoints[t] as usize
    }

    pub fn trial_all_members(&self, i: usize, t: usize) -> bool {
        self.trial_indices(i, t).all(|j| self.members[j])
    }

    /// `N^-1 sum_{j <= N} 1_E(2^(m_j) x)` at `N = N_{k,t}`.
    pub fn endpoint_average(&self, i: usize, t: usize) -> f64 {
        let n = self.manifest.stages[i].endpoints[t] as usize;
        self.members[..n].iter().filter(|&&b| b).count() as f64 / n as f64
    }
}

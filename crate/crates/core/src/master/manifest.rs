//! The complete finite construction and its JSON form.
//!
//! Integers are written as decimal strings. Exponents are stored as runs
//! `{first, step, count}`, one per trial, and re-expanded on demand.

use serde::{Deserialize, Serialize};

use super::{check, stage_invariants, BuildOptions, Eta, InvariantCheck, StageRecord};
use crate::error::{Error, Result};
use crate::spike::{BlockParams, C3};

pub const MANIFEST_FORMAT: &str = "spikeblock-manifest/1";

/// `first, first + step, ..., first + (count - 1) step`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExponentRun {
    #[serde(with = "crate::serde_dec")]
    pub first: u64,
    #[serde(with = "crate::serde_dec")]
    pub step: u64,
    #[serde(with = "crate::serde_dec")]
    pub count: u64,
}

impl ExponentRun {
    pub fn get(&self, r: u64) -> u64 {
        self.first + r * self.step
    }

    pub fn last(&self) -> u64 {
        self.get(self.count - 1)
    }

    pub fn iter(&self) -> impl Iterator<Item = u64> + '_ {
        (0..self.count).map(move |r| self.get(r))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub regime: String,
    #[serde(with = "crate::serde_dec")]
    pub eta: Eta,
    #[serde(rename = "B_floor")]
    pub b_floor: f64,
    #[serde(with = "crate::serde_dec")]
    pub seed: u64,
    pub mu: f64,
    /// Declared bound for stages beyond the built ones, when a regime uses one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu_future: Option<f64>,
    /// Norm exponent of an `L^p` manifest.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    pub stages: Vec<StageRecord>,
    pub exponents: Vec<ExponentRun>,
}

/// `C3 * sum lambda_k / B_k` in stage order.
pub fn mu_of(stages: &[StageRecord]) -> f64 {
    C3 * stages.iter().map(|s| s.block.lambda / s.block.height).sum::<f64>()
}

impl Manifest {
    pub(crate) fn assemble(stages: Vec<StageRecord>, opts: &BuildOptions, regime: &str, seed: u64) -> Manifest {
        let exponents = stages.iter().flat_map(|s| (0..s.trials()).map(move |t| s.trial_run(t))).collect();
        Manifest {
            format: MANIFEST_FORMAT.to_string(),
            regime: regime.to_string(),
            eta: opts.eta,
            b_floor: opts.b_floor,
            seed,
            mu: mu_of(&stages),
            mu_future: None,
            p: None,
            stages,
            exponents,
        }
    }

    pub fn blocks(&self) -> Vec<BlockParams> {
        self.stages.iter().map(|s| s.block).collect()
    }

    pub fn total_exponents(&self) -> u64 {
        self.stages.last().map_or(0, |s| s.n_star)
    }

    /// `(stage index, trial index, global index of the first exponent, run)`.
    pub fn runs(&self) -> Vec<(usize, usize, u64, ExponentRun)> {
        let mut out = Vec::new();
        for (i, s) in self.stages.iter().enumerate() {
            for t in 0..s.trials() {
                out.push((i, t, s.prior[t], s.trial_run(t)));
            }
        }
        out
    }

    /// The first `n` exponents.
    pub fn exponent_prefix(&self, n: u64) -> Result<Vec<u64>> {
        if n > self.total_exponents() {
            return Err(crate::error::invalid("N", format!("manifest has only {} exponents", self.total_exponents())));
        }
        Ok(self.exponents.iter().flat_map(|r| r.iter()).take(n as usize).collect())
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    /// Parses and checks that the stored exponent runs and `mu` agree with the stages.
    pub fn from_json(text: &str) -> Result<Manifest> {
        let m: Manifest = serde_json::from_str(text).map_err(|e| Error::Malformed(format!("manifest: {e}")))?;
        if m.format != MANIFEST_FORMAT {
            return Err(Error::Malformed(format!("manifest: unsupported format {:?}", m.format)));
        }
        if m.stages.is_empty() {
            return Err(Error::Malformed("manifest: no stages".into()));
        }
        for s in &m.stages {
            let t = s.lengths.len();
            if t == 0 || s.prior.len() != t || s.starts.len() != t || s.endpoints.len() != t {
                return Err(Error::Malformed(format!("manifest: stage {} has inconsistent trial lists", s.k)));
            }
            s.block.validate_geometry()?;
        }
        let derived: Vec<ExponentRun> = m.runs().into_iter().map(|r| r.3).collect();
        if derived != m.exponents {
            return Err(Error::Malformed("manifest: exponent runs disagree with trial starts".into()));
        }
        if m.mu != mu_of(&m.stages) {
            return Err(Error::Malformed("manifest: mu disagrees with the stage blocks".into()));
        }
        Ok(m)
    }

    /// Structural suite over the whole manifest.
    pub fn structural_suite(&self) -> Vec<InvariantCheck> {
        let mut out = Vec::new();
        for s in &self.stages {
            for mut c in stage_invariants(s, self.eta, self.b_floor) {
                c.detail = format!("stage {}: {}", s.k, c.detail);
                out.push(c);
            }
        }
        let chained = self.stages.windows(2).all(|w| w[1].entry == w[0].exit) && self.stages[0].entry == Default::default();
        out.push(check("state.chain", chained, "each stage starts from the previous exit"));
        let mut disjoint = true;
        for (i, a) in self.stages.iter().enumerate() {
            for b in &self.stages[i + 1..] {
                disjoint &= !a.bands.overlaps(&b.bands);
            }
        }
        out.push(check("bands.disjoint", disjoint, format!("{} stages", self.stages.len())));
        let mono = enumerate_exponents(self);
        out.push(check(
            "exponents.lacunary",
            mono.is_ok(),
            match &mono {
                Ok(v) => format!("{} exponents, m_(j+1) >= m_j + 1", v.len()),
                Err(e) => e.to_string(),
            },
        ));
        out.push(check(
            "exponents.count",
            matches!(&mono, Ok(v) if v.len() as u64 == self.total_exponents()),
            format!("total {}", self.total_exponents()),
        ));
        let (num, den) = (*self.eta.numer() as u128, *self.eta.denom() as u128);
        // ell / N >= 1 / (1 + eta)  <=>  ell (den + num) >= N den
        let ratio_ok = self.stages.iter().all(|s| {
            s.lengths.iter().zip(&s.endpoints).all(|(&l, &n)| l as u128 * (den + num) >= n as u128 * den)
        });
        out.push(check("endpoints.ratio", ratio_ok, "ell_t / N_t >= 1 / (1 + eta)"));
        out.push(check("mu.consistent", self.mu == mu_of(&self.stages), format!("mu = {}", self.mu)));
        out
    }
}

/// All selected exponents in order; fails on any non-increasing step.
pub fn enumerate_exponents(m: &Manifest) -> Result<Vec<u64>> {
    let mut out: Vec<u64> = Vec::with_capacity(m.total_exponents() as usize);
    for run in &m.exponents {
        for e in run.iter() {
            if let Some(&prev) = out.last() {
                if e <= prev {
                    return Err(Error::Invariant(format!("exponent {e} follows {prev}")));
                }
            }
            out.push(e);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::super::{build_manifest, BuildOptions, StageConfig};
    use super::*;

    fn small() -> Manifest {
        let opts = BuildOptions { b_floor: 1.0, ..BuildOptions::default() };
        let cfgs = vec![StageConfig::new(1.0, 1.0, 1, "test"), StageConfig::new(0.5, 2.0, 2, "test")];
        build_manifest(&cfgs, &opts, "test", 7).unwrap()
    }

    #[test]
    fn structural_suite_passes() {
        let m = small();
        for c in m.structural_suite() {
            assert!(c.ok, "{c:?}");
        }
        let e = enumerate_exponents(&m).unwrap();
        assert_eq!(e.len() as u64, m.total_exponents());
        assert_eq!(m.total_exponents(), 20 + 420 + 8820);
        // Gaps: exactly D inside a trial, at least D across trials.
        for s in &m.stages {
            for t in 0..s.trials() {
                let run = s.trial_run(t);
                assert_eq!(run.step, s.block.spacing);
            }
        }
        for s in &m.stages {
            let ex: Vec<u64> = (0..s.trials()).flat_map(|t| s.trial_run(t).iter().collect::<Vec<_>>()).collect();
            assert!(ex.windows(2).all(|w| w[1] - w[0] >= s.block.spacing));
        }
    }

    #[test]
    fn json_round_trip_is_byte_identical() {
        let m = small();
        let a = m.to_json();
        let back = Manifest::from_json(&a).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.to_json(), a);
        assert!(a.contains("\"eta\": \"1/20\""));
        assert!(a.contains("\"L\": \"160\""));
    }

    #[test]
    fn tampered_manifest_rejected() {
        let m = small();
        let text = m.to_json().replacen("\"count\": \"20\"", "\"count\": \"21\"", 1);
        assert!(matches!(Manifest::from_json(&text), Err(Error::Malformed(_))));
        assert!(Manifest::from_json("{").is_err());
        let mut bad = m.clone();
        bad.exponents.swap(0, 1);
        assert!(enumerate_exponents(&bad).is_err());
    }

    #[test]
    fn prefix_bounds() {
        let m = small();
        assert_eq!(m.exponent_prefix(3).unwrap().len(), 3);
        assert!(m.exponent_prefix(m.total_exponents() + 1).is_err());
    }
}

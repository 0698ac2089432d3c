//! Per-tape CSV outputs: growth ratios and the `simulate` tables.

use rayon::prelude::*;
use std::fmt::Write as _;

use super::sweep::log_power;
use crate::bits::BitTape;
use crate::error::{invalid, Result};
use crate::master::{HitProfile, Manifest};
use crate::regimes::{HitSetManifest, MembershipProfile};
use crate::trial::central_hits;

#[derive(Clone, Debug, PartialEq)]
pub struct GrowthRow {
    pub tape: u64,
    pub stage: u64,
    pub trial: usize,
    pub n: u64,
    pub good: bool,
    pub sum: f64,
    /// `S_N / (N (ln N)^(1/p - eps_k))`
    pub ratio: f64,
    /// `S_N / (N (ln N)^(1/p + eps_k))`
    pub upper: f64,
    /// `|S_N| / (N (ln N)^(1/p + 1/2))`
    pub upper_half: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GrowthScan {
    pub p: f64,
    pub rows: Vec<GrowthRow>,
}

impl GrowthScan {
    pub const SCHEMA: &'static str = "# spikeblock growth-scan v1";

    /// Good rows whose ratio fell below the stage index.
    pub fn violations(&self) -> Vec<&GrowthRow> {
        self.rows.iter().filter(|r| r.good && r.ratio < r.stage as f64).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{}\n# p = {}\ntape,stage,trial,N,good,sum,ratio,upper,upper_half\n", Self::SCHEMA, self.p);
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{:e},{:e},{:e},{:e}",
                r.tape,
                r.stage,
                r.trial + 1,
                r.n,
                r.good as u8,
                r.sum,
                r.ratio,
                r.upper,
                r.upper_half
            );
        }
        out
    }
}

/// Normalized partial sums at every trial endpoint for each tape, at
/// exponent `1/p - eps_k` with `eps_k = 1 / (2 p (k + 2))`.
pub fn growth_scan<S: crate::bits::BitSource + Sync>(m: &Manifest, tapes: &[(u64, S)], p: f64) -> Result<GrowthScan> {
    if !(p >= 2.0 && p.is_finite()) {
        return Err(invalid("p", "must lie in [2, inf)"));
    }
    let per_tape = tapes
        .par_iter()
        .map(|(id, tape)| {
            let prof = HitProfile::new(m, tape)?;
            let mut rows = Vec::new();
            for (i, s) in m.stages.iter().enumerate() {
                let eps = 1.0 / (2.0 * p * (s.k + 2) as f64);
                for t in 0..s.trials() {
                    let n = s.endpoints[t];
                    let sum = prof.partial_sum(n);
                    let nf = n as f64;
                    rows.push(GrowthRow {
                        tape: *id,
                        stage: s.k,
                        trial: t,
                        n,
                        good: prof.good_event(i, t),
                        sum,
                        ratio: sum / (nf * log_power(n, 1.0 / p - eps)),
                        upper: sum / (nf * log_power(n, 1.0 / p + eps)),
                        upper_half: sum.abs() / (nf * log_power(n, 1.0 / p + 0.5)),
                    });
                }
            }
            Ok(rows)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GrowthScan { p, rows: per_tape.into_iter().flatten().collect() })
}

/// `simulate` output for a master manifest: good events and endpoint averages.
pub fn simulate_master(m: &Manifest, samples: u64, seed: u64) -> Result<(String, String)> {
    let per = (0..samples)
        .into_par_iter()
        .map(|i| {
            let tape = BitTape::for_sample(seed, i);
            let prof = HitProfile::new(m, &tape)?;
            let (mut good, mut avg) = (String::new(), String::new());
            for (k, s) in m.stages.iter().enumerate() {
                let target = s.block.height - m.mu;
                for t in 0..s.trials() {
                    let hits = central_hits(&s.block, &s.trial_spec(t), &tape)?;
                    let _ = writeln!(good, "{i},{},{},{hits},{}", s.k, t + 1, (hits > 0) as u8);
                    let n = s.endpoints[t];
                    let _ = writeln!(avg, "{i},{},{},{n},{:e},{:e},{}", s.k, t + 1, prof.average(n)?, target, prof.good_event(k, t) as u8);
                }
            }
            Ok((good, avg))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut good = String::from("# spikeblock good-events v1\nsample,stage,trial,central_hits,good\n");
    let mut avg = String::from("# spikeblock averages v1\nsample,stage,trial,N,average,target,good\n");
    for (g, a) in per {
        good.push_str(&g);
        avg.push_str(&a);
    }
    Ok((good, avg))
}

/// `simulate` output for a hitting-set manifest: hit events and membership.
pub fn simulate_bounded(hm: &HitSetManifest, samples: u64, seed: u64) -> Result<String> {
    let per = (0..samples)
        .into_par_iter()
        .map(|i| {
            let tape = BitTape::for_sample(seed, i);
            let prof = MembershipProfile::new(hm, &tape)?;
            let mut out = String::new();
            for (k, s) in hm.stages.iter().enumerate() {
                let target = s.theta_inv as f64 / (s.theta_inv as f64 + 1.0);
                for t in 0..s.lengths.len() {
                    let _ = writeln!(
                        out,
                        "{i},{},{},{},{},{:e},{:e}",
                        s.k,
                        t + 1,
                        prof.hit_event(k, t) as u8,
                        prof.trial_all_members(k, t) as u8,
                        prof.endpoint_average(k, t),
                        target
                    );
                }
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = String::from("# spikeblock hit-events v1\nsample,stage,trial,hit,all_members,endpoint_average,target\n");
    for s in per {
        out.push_str(&s);
    }
    Ok(out)
}

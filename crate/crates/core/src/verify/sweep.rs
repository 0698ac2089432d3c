//! One parallel pass over sampled tapes per manifest, tallying every event
//! the Monte Carlo suites need. Only integer counters and min/max are merged,
//! so serial and parallel runs agree exactly.

use super::stats::parallel_tally;
use crate::bits::BitTape;
use crate::error::Result;
use crate::master::{f_eval_sparse, HitProfile, Manifest};
use crate::regimes::{HitSetManifest, MembershipProfile};
use crate::trial::central_hits;

/// Events whose joint frequencies are tracked for the factorization tests.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Event {
    /// Good event of a trial (0-based stage and trial).
    Trial { stage: usize, trial: usize },
    /// Some trial of the stage is good.
    Stage(usize),
}

impl Event {
    pub fn stage(self) -> usize {
        match self {
            Event::Trial { stage, .. } | Event::Stage(stage) => stage,
        }
    }

    pub fn label(self) -> String {
        match self {
            Event::Trial { stage, trial } => format!("G({},{})", stage + 1, trial + 1),
            Event::Stage(k) => format!("S{}", k + 1),
        }
    }
}

/// A stage event is a function of its own trials, so it is never tested
/// against them.
pub fn compatible(events: &[Event]) -> bool {
    for (i, a) in events.iter().enumerate() {
        for b in &events[i + 1..] {
            if a == b {
                return false;
            }
            match (a, b) {
                (Event::Stage(k), Event::Trial { stage, .. }) | (Event::Trial { stage, .. }, Event::Stage(k)) if k == stage => {
                    return false
                }
                _ => {}
            }
        }
    }
    true
}

pub const MAX_EVENTS: usize = 24;

/// Stage events for every stage, plus the first `per_stage` trials of
/// stages with at least two trials.
pub fn tracked_events(m: &Manifest, per_stage: usize) -> Vec<Event> {
    let mut out = Vec::new();
    for (i, s) in m.stages.iter().enumerate() {
        if s.trials() >= 2 {
            out.extend((0..s.trials().min(per_stage)).map(|t| Event::Trial { stage: i, trial: t }));
        }
        out.push(Event::Stage(i));
    }
    out.truncate(MAX_EVENTS);
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct SignalTally {
    pub checked: u64,
    /// Signal below `2 B ell`.
    pub signal_fail: u64,
    /// Past plus off-block terms below `-mu N`.
    pub split_fail: u64,
    /// Average below `B - mu`.
    pub average_fail: u64,
    pub average_margin: f64,
    pub amplification_min: f64,
    /// Good trials on which the normalized growth ratio fell below `k`.
    pub growth_fail: u64,
    pub growth_min: f64,
}

impl Default for SignalTally {
    fn default() -> Self {
        SignalTally {
            checked: 0,
            signal_fail: 0,
            split_fail: 0,
            average_fail: 0,
            average_margin: f64::INFINITY,
            amplification_min: f64::INFINITY,
            growth_fail: 0,
            growth_min: f64::INFINITY,
        }
    }
}

impl SignalTally {
    fn merge(mut self, o: SignalTally) -> SignalTally {
        self.checked += o.checked;
        self.signal_fail += o.signal_fail;
        self.split_fail += o.split_fail;
        self.average_fail += o.average_fail;
        self.average_margin = self.average_margin.min(o.average_margin);
        self.amplification_min = self.amplification_min.min(o.amplification_min);
        self.growth_fail += o.growth_fail;
        self.growth_min = self.growth_min.min(o.growth_min);
        self
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MasterTally {
    pub samples: u64,
    pub floor_violations: u64,
    /// `min (f(x) + mu)` over samples.
    pub floor_margin: f64,
    /// Good counts per stage and trial.
    pub good: Vec<Vec<u64>>,
    pub stage_fail: Vec<u64>,
    pub events: Vec<Event>,
    pub event_hits: Vec<u64>,
    /// Dense `n x n` joint counts.
    pub joint: Vec<u64>,
    /// Dense `n x n x n` joint counts.
    pub triple: Vec<u64>,
    pub signal: Vec<SignalTally>,
    /// Profiled tapes where the sparse profile and the trial module disagree.
    pub profile_mismatch: u64,
    /// `max |S_N| / (N (ln N)^(1/p + 1/2))` over profiled endpoints.
    pub upper_max: f64,
    pub upper_points: u64,
    /// First evaluation error, by sample index.
    pub error: Option<(u64, String)>,
}

/// What one master sweep samples.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepPlan {
    pub samples: u64,
    pub seed: u64,
    /// Tapes `0..profiled` get a full hit profile even without a good trial.
    pub profiled: u64,
    /// Norm exponent for the growth ratio, when the manifest has one.
    pub p: Option<f64>,
    pub per_stage: usize,
}

impl MasterTally {
    fn empty(m: &Manifest, events: &[Event]) -> MasterTally {
        let n = events.len();
        let k = m.stages.len();
        MasterTally {
            samples: 0,
            floor_violations: 0,
            floor_margin: f64::INFINITY,
            good: m.stages.iter().map(|s| vec![0; s.trials()]).collect(),
            stage_fail: vec![0; k],
            events: events.to_vec(),
            event_hits: vec![0; n],
            joint: vec![0; n * n],
            triple: vec![0; n * n * n],
            signal: vec![SignalTally::default(); k],
            profile_mismatch: 0,
            upper_max: 0.0,
            upper_points: 0,
            error: None,
        }
    }

    fn merge(mut self, o: MasterTally) -> MasterTally {
        let add = |a: &mut Vec<u64>, b: &[u64]| a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        self.samples += o.samples;
        self.floor_violations += o.floor_violations;
        self.floor_margin = self.floor_margin.min(o.floor_margin);
        for (a, b) in self.good.iter_mut().zip(&o.good) {
            add(a, b);
        }
        add(&mut self.stage_fail, &o.stage_fail);
        add(&mut self.event_hits, &o.event_hits);
        add(&mut self.joint, &o.joint);
        add(&mut self.triple, &o.triple);
        self.signal = self.signal.into_iter().zip(o.signal).map(|(a, b)| a.merge(b)).collect();
        self.profile_mismatch += o.profile_mismatch;
        self.upper_max = self.upper_max.max(o.upper_max);
        self.upper_points += o.upper_points;
        self.error = match (self.error, o.error) {
            (Some(a), Some(b)) => Some(if a.0 <= b.0 { a } else { b }),
            (a, b) => a.or(b),
        };
        self
    }

    pub fn pair(&self, a: usize, b: usize) -> u64 {
        self.joint[a * self.events.len() + b]
    }

    pub fn triple_count(&self, a: usize, b: usize, c: usize) -> u64 {
        let n = self.events.len();
        self.triple[(a * n + b) * n + c]
    }

    pub fn into_result(self) -> Result<MasterTally> {
        match &self.error {
            Some((i, e)) => Err(crate::error::Error::Invariant(format!("sample {i}: {e}"))),
            None => Ok(self),
        }
    }
}

/// `ln(N)^e`, the normalization used by the growth ratios.
pub fn log_power(n: u64, e: f64) -> f64 {
    (n as f64).ln().powf(e)
}

fn master_step(m: &Manifest, plan: &SweepPlan, acc: &mut MasterTally, i: u64, tape: &BitTape) -> Result<()> {
    acc.samples += 1;
    let f0 = f_eval_sparse(m, tape, 0)?;
    acc.floor_margin = acc.floor_margin.min(f0 + m.mu);
    if f0 < -m.mu {
        acc.floor_violations += 1;
    }
    let mut good: Vec<Vec<bool>> = Vec::with_capacity(m.stages.len());
    for (k, s) in m.stages.iter().enumerate() {
        let mut row = Vec::with_capacity(s.trials());
        for t in 0..s.trials() {
            let g = central_hits(&s.block, &s.trial_spec(t), tape)? > 0;
            acc.good[k][t] += g as u64;
            row.push(g);
        }
        if !row.iter().any(|&g| g) {
            acc.stage_fail[k] += 1;
        }
        good.push(row);
    }
    let on: Vec<usize> = acc
        .events
        .iter()
        .enumerate()
        .filter(|(_, e)| match **e {
            Event::Trial { stage, trial } => good[stage][trial],
            Event::Stage(k) => good[k].iter().any(|&g| g),
        })
        .map(|(j, _)| j)
        .collect();
    let n = acc.events.len();
    for &a in &on {
        acc.event_hits[a] += 1;
        for &b in &on {
            acc.joint[a * n + b] += 1;
            for &c in &on {
                acc.triple[(a * n + b) * n + c] += 1;
            }
        }
    }
    let any_good = good.iter().flatten().any(|&g| g);
    if !(any_good || i < plan.profiled) {
        return Ok(());
    }
    let prof = HitProfile::new(m, tape)?;
    for (k, row) in good.iter().enumerate() {
        for (t, &g) in row.iter().enumerate() {
            if prof.good_event(k, t) != g {
                acc.profile_mismatch += 1;
            }
            if i < plan.profiled {
                let nn = m.stages[k].endpoints[t];
                if let Some(p) = plan.p {
                    let v = prof.partial_sum(nn).abs() / (nn as f64 * log_power(nn, 1.0 / p + 0.5));
                    acc.upper_max = acc.upper_max.max(v);
                    acc.upper_points += 1;
                }
            }
            if !g {
                continue;
            }
            let r = prof.signal_report(k, t)?;
            let st = &mut acc.signal[k];
            st.checked += 1;
            st.signal_fail += !r.signal_ok() as u64;
            st.split_fail += !r.floor_ok() as u64;
            st.average_fail += !r.average_ok() as u64;
            st.average_margin = st.average_margin.min(r.average - (r.height - r.mu));
            st.amplification_min = st.amplification_min.min(r.signal / (2.0 * r.height * r.ell as f64));
            if let Some(p) = plan.p {
                let kk = m.stages[k].k;
                let eps = 1.0 / (2.0 * p * (kk + 2) as f64);
                let ratio = prof.partial_sum(r.n) / (r.n as f64 * log_power(r.n, 1.0 / p - eps));
                st.growth_fail += (ratio < kk as f64) as u64;
                st.growth_min = st.growth_min.min(ratio);
            }
        }
    }
    Ok(())
}

/// Samples `plan.samples` tapes of a master manifest.
pub fn master_sweep(m: &Manifest, plan: &SweepPlan) -> Result<MasterTally> {
    let events = tracked_events(m, plan.per_stage);
    let tally = parallel_tally(
        plan.samples,
        plan.seed,
        || MasterTally::empty(m, &events),
        |acc, i, tape| {
            if let Err(e) = master_step(m, plan, acc, i, tape) {
                if acc.error.as_ref().is_none_or(|(j, _)| i < *j) {
                    acc.error = Some((i, e.to_string()));
                }
            }
        },
        MasterTally::merge,
    );
    tally.into_result()
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoundedTally {
    pub samples: u64,
    pub hits: Vec<Vec<u64>>,
    /// Hit events with some trial point outside `E`.
    pub member_fail: Vec<u64>,
    /// Hit events whose endpoint average is below `1 / (1 + theta)`.
    pub average_fail: Vec<u64>,
    pub average_min: Vec<f64>,
    pub error: Option<(u64, String)>,
}

impl BoundedTally {
    fn empty(hm: &HitSetManifest) -> BoundedTally {
        let k = hm.stages.len();
        BoundedTally {
            samples: 0,
            hits: hm.stages.iter().map(|s| vec![0; s.lengths.len()]).collect(),
            member_fail: vec![0; k],
            average_fail: vec![0; k],
            average_min: vec![f64::INFINITY; k],
            error: None,
        }
    }

    fn merge(mut self, o: BoundedTally) -> BoundedTally {
        self.samples += o.samples;
        for (a, b) in self.hits.iter_mut().zip(&o.hits) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        for k in 0..self.member_fail.len() {
            self.member_fail[k] += o.member_fail[k];
            self.average_fail[k] += o.average_fail[k];
            self.average_min[k] = self.average_min[k].min(o.average_min[k]);
        }
        self.error = match (self.error, o.error) {
            (Some(a), Some(b)) => Some(if a.0 <= b.0 { a } else { b }),
            (a, b) => a.or(b),
        };
        self
    }
}

fn bounded_step(hm: &HitSetManifest, acc: &mut BoundedTally, tape: &BitTape) -> Result<()> {
    acc.samples += 1;
    let prof = MembershipProfile::new(hm, tape)?;
    for (k, s) in hm.stages.iter().enumerate() {
        let target = s.theta_inv as f64 / (s.theta_inv as f64 + 1.0);
        for t in 0..s.lengths.len() {
            if !prof.hit_event(k, t) {
                continue;
            }
            acc.hits[k][t] += 1;
            acc.member_fail[k] += !prof.trial_all_members(k, t) as u64;
            let avg = prof.endpoint_average(k, t);
            acc.average_min[k] = acc.average_min[k].min(avg);
            acc.average_fail[k] += (avg < target) as u64;
        }
    }
    Ok(())
}

pub fn bounded_sweep(hm: &HitSetManifest, samples: u64, seed: u64) -> Result<BoundedTally> {
    let tally = parallel_tally(
        samples,
        seed,
        || BoundedTally::empty(hm),
        |acc, i, tape| {
            if let Err(e) = bounded_step(hm, acc, tape) {
                if acc.error.as_ref().is_none_or(|(j, _)| i < *j) {
                    acc.error = Some((i, e.to_string()));
                }
            }
        },
        BoundedTally::merge,
    );
    match &tally.error {
        Some((i, e)) => Err(crate::error::Error::Invariant(format!("sample {i}: {e}"))),
        None => Ok(tally),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::master::{build_manifest, BuildOptions, StageConfig};

    fn desk() -> Manifest {
        let opts = BuildOptions { b_floor: 1.0, ..BuildOptions::default() };
        let cfgs = vec![StageConfig::new(1.0, 1.0, 3, "test"), StageConfig::new(1.0, 1.0, 1, "test")];
        build_manifest(&cfgs, &opts, "test", 1).unwrap()
    }

    #[test]
    fn event_compatibility() {
        let (t, s) = (Event::Trial { stage: 0, trial: 1 }, Event::Stage(0));
        assert!(!compatible(&[t, s]));
        assert!(compatible(&[t, Event::Stage(1)]));
        assert!(!compatible(&[s, s]));
        let ev = tracked_events(&desk(), 2);
        assert_eq!(ev.len(), 4);
        assert_eq!(ev[3], Event::Stage(1));
    }

    #[test]
    fn sweep_counts_match_serial_recount() {
        let m = desk();
        let plan = SweepPlan { samples: 3000, seed: 11, profiled: 4, p: None, per_stage: 3 };
        let tally = master_sweep(&m, &plan).unwrap();
        assert_eq!(tally.samples, 3000);
        assert_eq!(tally.floor_violations, 0);
        assert_eq!(tally.profile_mismatch, 0);
        // Recount with the direct good-event reader.
        let mut good = vec![0u64; 3];
        let mut fail = 0u64;
        for i in 0..3000 {
            let tape = BitTape::for_sample(11, i);
            let s = &m.stages[0];
            let g: Vec<bool> = (0..3).map(|t| crate::trial::good_event(&s.block, &s.trial_spec(t), &tape).unwrap()).collect();
            for t in 0..3 {
                good[t] += g[t] as u64;
            }
            fail += !g.iter().any(|&x| x) as u64;
        }
        assert_eq!(tally.good[0], good);
        assert_eq!(tally.stage_fail[0], fail);
        // Diagonal of the joint table is the marginal count.
        for j in 0..tally.events.len() {
            assert_eq!(tally.pair(j, j), tally.event_hits[j]);
        }
        assert_eq!(tally, master_sweep(&m, &plan).unwrap());
    }
}

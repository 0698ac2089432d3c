//! The stage-and-trial scheduler.
//!
//! Stage `k` receives `(lambda_k, B_k, T_k)` and the running bookkeeping
//! `(P, m_last, V_max, Omega)`. It picks trial lengths
//! `ell_t = ceil((P_t + 1) / eta)`, a block with `L = 8 max ell`, `D = d + 2`,
//! `U = V_max + 1`, the smallest admissible first start, and then
//! `M_{t+1} = M_t + (L + ell_t) D + d + 2`.

mod eval;
mod manifest;

pub use eval::{average_at, f_eval, f_eval_sparse, master_signal_check, HitProfile, SignalReport};
pub use manifest::{enumerate_exponents, ExponentRun, Manifest, MANIFEST_FORMAT};

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::spike::{choose_depth, BlockParams, B_FLOOR_DEFAULT};

/// Ratio of the already selected count to a new trial length.
pub type Eta = Ratio<u64>;

pub fn default_eta() -> Eta {
    Ratio::new(1, 20)
}

/// Free parameters of one stage and where they came from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageConfig {
    #[serde(rename = "lambda_k")]
    pub lambda: f64,
    #[serde(rename = "B_k")]
    pub height: f64,
    #[serde(rename = "T_k", with = "crate::serde_dec")]
    pub trials: u64,
    pub regime: String,
    /// Regime conditions this stage does not meet; empty for faithful stages.
    #[serde(default)]
    pub relaxed: Vec<String>,
}

impl StageConfig {
    pub fn new(lambda: f64, height: f64, trials: u64, regime: &str) -> Self {
        StageConfig { lambda, height, trials, regime: regime.to_string(), relaxed: Vec::new() }
    }

    pub fn is_faithful(&self) -> bool {
        self.relaxed.is_empty()
    }

    pub fn validate(&self, b_floor: f64) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda <= 1.0) {
            return Err(invalid("lambda_k", format!("must lie in (0, 1], got {}", self.lambda)));
        }
        if !(self.height >= b_floor && self.height.is_finite()) {
            return Err(invalid("B_k", format!("must be at least B_floor = {b_floor}, got {}", self.height)));
        }
        if self.trials == 0 {
            return Err(invalid("T_k", "must be at least 1"));
        }
        Ok(())
    }
}

/// Running bookkeeping between stages; all start at zero.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageState {
    #[serde(rename = "P", with = "crate::serde_dec")]
    pub selected: u64,
    #[serde(with = "crate::serde_dec")]
    pub m_last: u64,
    #[serde(rename = "V_max", with = "crate::serde_dec")]
    pub v_max: u64,
    #[serde(rename = "Omega", with = "crate::serde_dec")]
    pub omega: u64,
}

/// Desk limits; the builder fails loudly past any of them.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Caps {
    pub max_stages: usize,
    pub max_trials: u64,
    pub max_layers: u64,
    pub max_digits: u64,
}

impl Default for Caps {
    fn default() -> Self {
        Caps { max_stages: 8, max_trials: 4096, max_layers: 1 << 22, max_digits: 1 << 40 }
    }
}

impl Caps {
    /// Parses `stages=3,trials=64,layers=4194304,digits=...`; missing keys keep defaults.
    pub fn parse(spec: &str) -> Result<Caps> {
        let mut caps = Caps::default();
        for part in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let (key, value) = part
                .split_once('=')
                .ok_or_else(|| invalid("caps", format!("expected key=value, got {part:?}")))?;
            let n: u64 = value
                .trim()
                .parse()
                .map_err(|_| invalid("caps", format!("{key}: not a nonnegative integer: {value:?}")))?;
            match key.trim() {
                "stages" => caps.max_stages = n as usize,
                "trials" => caps.max_trials = n,
                "layers" => caps.max_layers = n,
                "digits" => caps.max_digits = n,
                other => return Err(invalid("caps", format!("unknown cap {other:?}"))),
            }
        }
        Ok(caps)
    }

    fn check(&self, cap: &'static str, requested: u64, limit: u64) -> Result<()> {
        if requested > limit {
            return Err(Error::CapExceeded { cap, requested: requested as u128, limit: limit as u128 });
        }
        Ok(())
    }
}

/// Everything the builder needs besides per-stage configs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BuildOptions {
    pub eta: Eta,
    pub b_floor: f64,
    pub caps: Caps,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions { eta: default_eta(), b_floor: B_FLOOR_DEFAULT, caps: Caps::default() }
    }
}

/// The progression of valuation intervals `[first + i step, first + i step + width - 1]`,
/// `0 <= i < count`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bands {
    #[serde(with = "crate::serde_dec")]
    pub first: u64,
    #[serde(with = "crate::serde_dec")]
    pub step: u64,
    #[serde(with = "crate::serde_dec")]
    pub width: u64,
    #[serde(with = "crate::serde_dec")]
    pub count: u64,
}

impl Bands {
    pub fn interval(&self, i: u64) -> (u64, u64) {
        let a = self.first + i * self.step;
        (a, a + self.width - 1)
    }

    pub fn hull(&self) -> (u64, u64) {
        (self.first, self.interval(self.count - 1).1)
    }

    pub fn contains(&self, nu: u64) -> bool {
        if nu < self.first || nu > self.hull().1 {
            return false;
        }
        (nu - self.first) % self.step < self.width
    }

    /// Exact overlap test between two progressions.
    pub fn overlaps(&self, other: &Bands) -> bool {
        let (a0, a1) = self.hull();
        let (b0, b1) = other.hull();
        if a1 < b0 || b1 < a0 {
            return false;
        }
        let (small, big) = if self.count <= other.count { (self, other) } else { (other, self) };
        (0..small.count).any(|i| {
            let (lo, hi) = small.interval(i);
            big.meets(lo, hi)
        })
    }

    /// Some interval of the progression meets `[lo, hi]`.
    fn meets(&self, lo: u64, hi: u64) -> bool {
        let (h0, h1) = self.hull();
        if hi < h0 || lo > h1 {
            return false;
        }
        let mut j = if lo <= self.first { 0 } else { (lo - self.first) / self.step };
        // Earlier intervals end before `lo` when step >= width; start one back otherwise.
        j = j.saturating_sub(self.width.div_ceil(self.step.max(1)));
        while j < self.count {
            let (a, b) = self.interval(j);
            if a > hi {
                break;
            }
            if b >= lo {
                return true;
            }
            j += 1;
        }
        false
    }

    /// Intervals within one progression are disjoint.
    pub fn self_disjoint(&self) -> bool {
        self.count <= 1 || self.step >= self.width
    }
}

/// Frozen output of one stage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub k: u64,
    pub config: StageConfig,
    #[serde(with = "crate::serde_dec::vec")]
    pub lengths: Vec<u64>,
    /// `P_{k,t}`, the count selected before trial `t`.
    #[serde(with = "crate::serde_dec::vec")]
    pub prior: Vec<u64>,
    #[serde(with = "crate::serde_dec::vec")]
    pub starts: Vec<i64>,
    pub block: BlockParams,
    pub bands: Bands,
    #[serde(rename = "E_k", with = "crate::serde_dec")]
    pub threshold_log2: u64,
    #[serde(rename = "N_star", with = "crate::serde_dec")]
    pub n_star: u64,
    #[serde(with = "crate::serde_dec::vec")]
    pub endpoints: Vec<u64>,
    pub entry: StageState,
    pub exit: StageState,
}

impl StageRecord {
    pub fn trials(&self) -> usize {
        self.lengths.len()
    }

    /// Exponents `M_t + r D`, `r = 1..=ell_t`, as a run.
    pub fn trial_run(&self, t: usize) -> ExponentRun {
        let d = self.block.spacing;
        ExponentRun { first: (self.starts[t] + d as i64) as u64, step: d, count: self.lengths[t] }
    }

    pub fn trial_spec(&self, t: usize) -> crate::trial::TrialSpec {
        crate::trial::TrialSpec::new(self.starts[t], self.lengths[t])
    }
}

/// `ell_t = ceil((P_t + 1) / eta)`, `P_{t+1} = P_t + ell_t`. Returns the
/// lengths and `P_1, ..., P_{T+1}`.
pub fn plan_lengths(p_start: u64, trials: u64, eta: Eta) -> Result<(Vec<u64>, Vec<u64>)> {
    if trials == 0 {
        return Err(invalid("T", "must be at least 1"));
    }
    if *eta.numer() == 0 {
        return Err(invalid("eta", "must be positive"));
    }
    let (num, den) = (*eta.numer() as u128, *eta.denom() as u128);
    let mut lengths = Vec::with_capacity(trials as usize);
    let mut prior = vec![p_start];
    let mut p = p_start as u128;
    for _ in 0..trials {
        let ell = ((p + 1) * den).div_ceil(num);
        if p * den > num * ell {
            return Err(Error::Invariant(format!("P = {p} exceeds eta * ell = {}", ell)));
        }
        let ell = u64::try_from(ell).map_err(|_| Error::Overflow("trial length"))?;
        lengths.push(ell);
        p = p.checked_add(ell as u128).ok_or(Error::Overflow("selected count"))?;
        prior.push(u64::try_from(p).map_err(|_| Error::Overflow("selected count"))?);
    }
    Ok((lengths, prior))
}

fn add(a: u64, b: u64, what: &'static str) -> Result<u64> {
    a.checked_add(b).ok_or(Error::Overflow(what))
}

fn mul(a: u64, b: u64, what: &'static str) -> Result<u64> {
    a.checked_mul(b).ok_or(Error::Overflow(what))
}

/// Builds stage `k` on top of `state`.
pub fn build_stage(k: u64, state: &StageState, cfg: &StageConfig, opts: &BuildOptions) -> Result<(StageRecord, StageState)> {
    cfg.validate(opts.b_floor)?;
    opts.caps.check("trials", cfg.trials, opts.caps.max_trials)?;
    let (lengths, prior_all) = plan_lengths(state.selected, cfg.trials, opts.eta)?;
    let max_len = *lengths.iter().max().expect("at least one trial");
    let layers = mul(8, max_len, "layers")?;
    opts.caps.check("layers", layers, opts.caps.max_layers)?;
    let depth = choose_depth(cfg.lambda, cfg.height, layers)?;
    let spacing = depth as u64 + 2;
    let base_shift = add(state.v_max, 1, "base shift")?;
    let block = BlockParams {
        lambda: cfg.lambda,
        height: cfg.height,
        layers,
        depth,
        spacing,
        base_shift,
    };
    block.validate(opts.b_floor)?;

    let ld = mul(layers, spacing, "block span")?;
    let v_max = add(add(base_shift, ld, "V_max")?, depth as u64 - 1, "V_max")?;
    let threshold_log2 = add(v_max, 3, "E_k")?;

    // Smallest M with M + D > m_last and U + M + D + 1 > Omega.
    let m1 = (state.m_last as i128 - spacing as i128 + 1).max(state.omega as i128 - base_shift as i128 - spacing as i128);
    let mut starts = Vec::with_capacity(lengths.len());
    let mut m = m1;
    for (t, &ell) in lengths.iter().enumerate() {
        starts.push(i64::try_from(m).map_err(|_| Error::Overflow("trial start"))?);
        if t + 1 < lengths.len() {
            m += ((layers + ell) as i128) * spacing as i128 + depth as i128 + 2;
        }
    }
    let last = lengths.len() - 1;
    let m_t = starts[last] as i128;
    let m_last = m_t + (lengths[last] * spacing) as i128;
    let omega = base_shift as i128 + m_t + ((layers + lengths[last]) as i128) * spacing as i128 + depth as i128;
    let to_u64 = |x: i128, what: &'static str| u64::try_from(x).map_err(|_| Error::Overflow(what));
    let omega = to_u64(omega, "Omega")?;
    opts.caps.check("digits", omega, opts.caps.max_digits)?;

    let prior = prior_all[..lengths.len()].to_vec();
    let n_star = prior_all[lengths.len()];
    let endpoints = prior.iter().zip(&lengths).map(|(p, l)| p + l).collect();
    let exit = StageState { selected: n_star, m_last: to_u64(m_last, "m_last")?, v_max, omega };
    let record = StageRecord {
        k,
        config: cfg.clone(),
        lengths,
        prior,
        starts,
        block,
        bands: Bands { first: base_shift + spacing, step: spacing, width: depth as u64, count: layers },
        threshold_log2,
        n_star,
        endpoints,
        entry: *state,
        exit,
    };
    Ok((record, exit))
}

/// Builds every stage in order from the zero state.
pub fn build_manifest(configs: &[StageConfig], opts: &BuildOptions, regime: &str, seed: u64) -> Result<Manifest> {
    if configs.is_empty() {
        return Err(invalid("stages", "need at least one stage"));
    }
    if configs.len() > opts.caps.max_stages {
        return Err(Error::CapExceeded {
            cap: "stages",
            requested: configs.len() as u128,
            limit: opts.caps.max_stages as u128,
        });
    }
    let mut state = StageState::default();
    let mut stages = Vec::with_capacity(configs.len());
    for (i, cfg) in configs.iter().enumerate() {
        let (rec, next) = build_stage(i as u64 + 1, &state, cfg, opts)?;
        stages.push(rec);
        state = next;
    }
    Ok(Manifest::assemble(stages, opts, regime, seed))
}

/// One named structural check.
#[derive(Clone, Debug, PartialEq)]
pub struct InvariantCheck {
    pub name: &'static str,
    pub ok: bool,
    pub detail: String,
}

fn check(name: &'static str, ok: bool, detail: impl Into<String>) -> InvariantCheck {
    InvariantCheck { name, ok, detail: detail.into() }
}

/// Structural invariants of one stage record, recomputed from its entry state.
pub fn stage_invariants(rec: &StageRecord, eta: Eta, b_floor: f64) -> Vec<InvariantCheck> {
    let bp = &rec.block;
    let st = &rec.entry;
    let mut out = Vec::new();
    let plan = plan_lengths(st.selected, rec.config.trials, eta);
    let lengths_ok = matches!(&plan, Ok((l, p)) if *l == rec.lengths && p[..l.len()] == rec.prior[..] && p[l.len()] == rec.n_star);
    out.push(check("lengths.recursion", lengths_ok, format!("{} trials", rec.lengths.len())));
    let ratio_ok = rec
        .prior
        .iter()
        .zip(&rec.lengths)
        .all(|(&p, &l)| (p as u128) * (*eta.denom() as u128) <= (*eta.numer() as u128) * l as u128);
    out.push(check("lengths.dominate-prior", ratio_ok, "P_t <= eta ell_t"));
    let max_len = rec.lengths.iter().copied().max().unwrap_or(0);
    out.push(check("block.layers", bp.layers == 8 * max_len, format!("L = {}", bp.layers)));
    out.push(check(
        "block.depth-window",
        bp.validate(b_floor).is_ok() && choose_depth(bp.lambda, bp.height, bp.layers).ok() == Some(bp.depth),
        format!("d = {}", bp.depth),
    ));
    out.push(check("block.spacing", bp.spacing == bp.depth as u64 + 2, format!("D = {}", bp.spacing)));
    out.push(check("block.base-shift", bp.base_shift == st.v_max + 1, format!("U = {}", bp.base_shift)));
    let m1 = rec.starts.first().copied().unwrap_or(0) as i128;
    let (d_, u_) = (bp.spacing as i128, bp.base_shift as i128);
    let first_ok = m1 + d_ > st.m_last as i128
        && u_ + m1 + d_ + 1 > st.omega as i128
        && !(m1 - 1 + d_ > st.m_last as i128 && u_ + m1 - 1 + d_ + 1 > st.omega as i128);
    out.push(check("starts.first-minimal", first_ok, format!("M_1 = {m1}")));
    let rec_ok = rec.starts.windows(2).zip(&rec.lengths).all(|(w, &l)| {
        w[1] as i128 == w[0] as i128 + ((bp.layers + l) as i128) * d_ + bp.depth as i128 + 2
    });
    out.push(check("starts.recursion", rec_ok && rec.starts.len() == rec.lengths.len(), "strictly increasing starts"));
    let bands_ok = rec.bands.self_disjoint()
        && rec.bands.first == bp.base_shift + bp.spacing
        && rec.bands.step == bp.spacing
        && rec.bands.width == bp.depth as u64
        && rec.bands.count == bp.layers
        && rec.bands.first > st.v_max;
    out.push(check("bands.layout", bands_ok, "bands follow the block and start past V_max"));
    let e_ok = rec.threshold_log2 == bp.base_shift + bp.layers * bp.spacing + bp.depth as u64 + 2
        && rec.exit.v_max == bp.base_shift + bp.layers * bp.spacing + bp.depth as u64 - 1;
    out.push(check("threshold.exponent", e_ok, format!("E_k = {}", rec.threshold_log2)));
    let ends_ok = rec.endpoints.len() == rec.lengths.len()
        && rec.endpoints.iter().zip(rec.prior.iter().zip(&rec.lengths)).all(|(&n, (&p, &l))| n == p + l)
        && rec.exit.selected == rec.n_star;
    out.push(check("endpoints.counts", ends_ok, format!("N* = {}", rec.n_star)));
    let last = rec.lengths.len().saturating_sub(1);
    let exit_ok = !rec.starts.is_empty()
        && rec.exit.m_last as i128 == rec.starts[last] as i128 + (rec.lengths[last] * bp.spacing) as i128
        && rec.exit.omega as i128
            == u_ + rec.starts[last] as i128 + ((bp.layers + rec.lengths[last]) as i128) * d_ + bp.depth as i128;
    out.push(check("state.update", exit_ok, "m_last and Omega"));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn length_recursion_example() {
        let (l, p) = plan_lengths(0, 3, default_eta()).unwrap();
        assert_eq!(l, vec![20, 420, 8820]);
        assert_eq!(p, vec![0, 20, 440, 9260]);
        assert!(plan_lengths(0, 0, default_eta()).is_err());
    }

    #[test]
    fn length_growth_bound() {
        for p0 in [0u64, 1, 7, 1000] {
            for t in 1..=5u64 {
                let (l, p) = plan_lengths(p0, t, default_eta()).unwrap();
                assert!(l.iter().all(|&x| x >= 20));
                let bound = (1 + p0) as f64 * 22f64.powi(t as i32);
                assert!((1 + p[t as usize]) as f64 <= bound);
            }
        }
    }

    fn desk() -> BuildOptions {
        BuildOptions { b_floor: 10.0, ..BuildOptions::default() }
    }

    #[test]
    fn stage_invariants_hold() {
        let cfg = StageConfig::new(0.25, 10.0, 2, "test");
        let (rec, state) = build_stage(1, &StageState::default(), &cfg, &desk()).unwrap();
        let checks = stage_invariants(&rec, default_eta(), 10.0);
        assert!(checks.len() >= 11);
        for c in &checks {
            assert!(c.ok, "{c:?}");
        }
        assert_eq!(state.selected, 440);
        // Second stage starts past the first.
        let (rec2, _) = build_stage(2, &state, &cfg, &desk()).unwrap();
        assert!(rec2.starts[0] + rec2.block.spacing as i64 > state.m_last as i64);
        assert!(!rec.bands.overlaps(&rec2.bands));
        assert!(rec2.bands.first > rec.bands.hull().1);
        assert!(stage_invariants(&rec2, default_eta(), 10.0).iter().all(|c| c.ok));
    }

    #[test]
    fn invariant_suite_catches_tampering() {
        let cfg = StageConfig::new(0.25, 10.0, 2, "test");
        let (mut rec, _) = build_stage(1, &StageState::default(), &cfg, &desk()).unwrap();
        rec.starts[1] += 1;
        let bad: Vec<_> = stage_invariants(&rec, default_eta(), 10.0).into_iter().filter(|c| !c.ok).collect();
        let names: Vec<_> = bad.iter().map(|c| c.name).collect();
        assert!(names.contains(&"starts.recursion"), "{names:?}");
        // The last start also feeds the exit state.
        assert!(names.iter().all(|n| ["starts.recursion", "state.update"].contains(n)), "{names:?}");
    }

    #[test]
    fn band_overlap_is_exact() {
        let a = Bands { first: 10, step: 5, width: 3, count: 4 };
        assert!(a.contains(10) && a.contains(12) && !a.contains(13) && a.contains(25) && !a.contains(28));
        let b = Bands { first: 13, step: 5, width: 2, count: 3 };
        assert!(!a.overlaps(&b));
        let c = Bands { first: 12, step: 5, width: 2, count: 3 };
        assert!(a.overlaps(&c));
    }

    #[test]
    fn config_and_caps_errors() {
        let opts = desk();
        let bad = StageConfig::new(1.5, 10.0, 1, "test");
        assert!(matches!(build_stage(1, &StageState::default(), &bad, &opts), Err(Error::InvalidParameter { field: "lambda_k", .. })));
        let low = StageConfig::new(1.0, 5.0, 1, "test");
        assert!(build_stage(1, &StageState::default(), &low, &opts).is_err());
        let tight = BuildOptions { caps: Caps { max_trials: 1, ..Caps::default() }, ..opts };
        let two = StageConfig::new(1.0, 10.0, 2, "test");
        assert!(matches!(build_stage(1, &StageState::default(), &two, &tight), Err(Error::CapExceeded { cap: "trials", .. })));
        let caps = Caps::parse("stages=3, trials=64").unwrap();
        assert_eq!((caps.max_stages, caps.max_trials), (3, 64));
        assert!(Caps::parse("speed=3").is_err());
        assert!(Caps::parse("trials").is_err());
    }
}

//! The finite `L^p` regime: `lambda_k = a_k B_k^-(p-2)`,
//! `T_k = ceil(Gamma B_k^2 / lambda_k log(k + 1))`, with `B_k` doubled until the
//! normalized signal beats `k`.

use super::Schedule;
use crate::error::{invalid, Error, Result};
use crate::master::{build_stage, BuildOptions, Manifest, StageConfig, StageRecord, StageState};
use crate::spike::C3;
use crate::trial::C0;

pub const REGIME: &str = "lp";

#[derive(Clone, Debug, PartialEq)]
pub struct LpConfig {
    pub p: f64,
    pub a_schedule: Schedule,
    pub gamma: f64,
    /// First height tried; defaults to `B_floor`.
    pub b_start: Option<f64>,
    pub max_doublings: u32,
    /// Clamp `T_k` to the trials cap and allow `Gamma < 8 / c0`, flagging both.
    pub surrogate: bool,
}

impl Default for LpConfig {
    fn default() -> Self {
        LpConfig {
            p: 2.0,
            a_schedule: Schedule::Geometric { ratio: 0.5, scale: 0.25 },
            gamma: 8.0 / C0,
            b_start: None,
            max_doublings: 60,
            surrogate: false,
        }
    }
}

impl LpConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.p >= 2.0 && self.p.is_finite()) {
            return Err(invalid("p", "must lie in [2, inf)"));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(invalid("gamma", "must be positive"));
        }
        if self.gamma * C0 < 8.0 && !self.surrogate {
            return Err(invalid("gamma", format!("needs gamma * c0 >= 8, got {}", self.gamma * C0)));
        }
        self.a_schedule.tail_sum(0)?;
        Ok(())
    }

    pub fn epsilon(&self, k: u64) -> f64 {
        1.0 / (2.0 * self.p * (k + 2) as f64)
    }
}

/// Numbers behind one frozen stage.
#[derive(Clone, Debug, PartialEq)]
pub struct LpReport {
    pub k: u64,
    pub a: f64,
    pub height: f64,
    pub lambda: f64,
    pub requested_trials: f64,
    pub trials: u64,
    pub epsilon: f64,
    pub mu_bar: f64,
    pub n_star: u64,
    /// `(B - mu_bar) / (ln N*)^(1/p - eps)`
    pub ratio: f64,
    pub doublings: u32,
    /// `exp(-c0 T lambda / B^2)` at the requested `T`.
    pub failure_bound: f64,
    pub failure_target: f64,
    pub relaxed: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct LpChoice {
    pub report: LpReport,
    pub record: StageRecord,
    pub next: StageState,
}

/// `C3 (sum_{i<k} lambda_i / B_i + a_k / B^(p-1) + sum_{i>k} a_i / B_floor^(p-1))`.
pub fn mu_bar(history: &[StageRecord], k: u64, height: f64, cfg: &LpConfig, b_floor: f64) -> Result<f64> {
    let past: f64 = history.iter().map(|s| s.block.lambda / s.block.height).sum();
    let current = cfg.a_schedule.at(k)? / height.powf(cfg.p - 1.0);
    let future = cfg.a_schedule.tail_sum(k)? / b_floor.powf(cfg.p - 1.0);
    Ok(C3 * (past + current + future))
}

/// Doubles `B_k` from the starting height until the normalized signal at
/// `N_k*` is at least `k`.
pub fn lp_stage_params(
    state: &StageState,
    k: u64,
    cfg: &LpConfig,
    history: &[StageRecord],
    opts: &BuildOptions,
) -> Result<LpChoice> {
    cfg.validate()?;
    let a = cfg.a_schedule.at(k)?;
    if !(a > 0.0 && a <= 1.0) {
        return Err(invalid("a_schedule", format!("a_{k} = {a} must lie in (0, 1]")));
    }
    let eps = cfg.epsilon(k);
    let b0 = cfg.b_start.unwrap_or(opts.b_floor);
    let log_k1 = ((k + 1) as f64).ln();
    let mut last = String::from("no candidate");
    for j in 0..=cfg.max_doublings {
        let height = b0 * 2f64.powi(j as i32);
        let lambda = a / height.powf(cfg.p - 2.0);
        let requested = (cfg.gamma * height * height / lambda * log_k1).ceil();
        let mut relaxed = Vec::new();
        if cfg.gamma * C0 < 8.0 {
            relaxed.push("gamma".to_string());
        }
        let trials = if requested > opts.caps.max_trials as f64 {
            if !cfg.surrogate {
                return Err(Error::CapExceeded {
                    cap: "trials",
                    requested: requested.min(u128::MAX as f64) as u128,
                    limit: opts.caps.max_trials as u128,
                });
            }
            relaxed.push("trials".to_string());
            opts.caps.max_trials
        } else {
            requested as u64
        };
        let mut stage = StageConfig::new(lambda, height, trials, REGIME);
        stage.relaxed = relaxed.clone();
        let (record, next) = match build_stage(k, state, &stage, opts) {
            Ok(v) => v,
            Err(e @ (Error::CapExceeded { .. } | Error::Overflow(_))) => {
                return Err(Error::SearchExhausted(format!("stage {k}: B = {height}: {e}; last candidate: {last}")));
            }
            Err(e) => return Err(e),
        };
        let mu = mu_bar(history, k, height, cfg, opts.b_floor)?;
        let n_star = record.n_star;
        let ratio = (height - mu) / (n_star as f64).ln().powf(1.0 / cfg.p - eps);
        last = format!("B = {height}, mu_bar = {mu}, N* = {n_star}, ratio = {ratio}");
        if ratio >= k as f64 {
            let report = LpReport {
                k,
                a,
                height,
                lambda,
                requested_trials: requested,
                trials,
                epsilon: eps,
                mu_bar: mu,
                n_star,
                ratio,
                doublings: j,
                failure_bound: (-C0 * requested * lambda / (height * height)).exp(),
                failure_target: ((k + 1) as f64).powi(-8),
                relaxed,
            };
            return Ok(LpChoice { report, record, next });
        }
    }
    Err(Error::SearchExhausted(format!("stage {k}: no height within {} doublings; last candidate: {last}", cfg.max_doublings)))
}

/// Builds `stages` stages; the manifest records the declared future bound
/// `C3 sum_{i>K} a_i / B_floor^(p-1)`.
pub fn lp_build(cfg: &LpConfig, stages: usize, opts: &BuildOptions, seed: u64) -> Result<(Manifest, Vec<LpReport>)> {
    if stages == 0 || stages > opts.caps.max_stages {
        return Err(Error::CapExceeded { cap: "stages", requested: stages as u128, limit: opts.caps.max_stages as u128 });
    }
    let mut state = StageState::default();
    let mut records = Vec::new();
    let mut reports = Vec::new();
    for k in 1..=stages as u64 {
        let choice = lp_stage_params(&state, k, cfg, &records, opts)?;
        state = choice.next;
        records.push(choice.record);
        reports.push(choice.report);
    }
    let mut m = Manifest::assemble(records, opts, REGIME, seed);
    m.p = Some(cfg.p);
    m.mu_future = Some(C3 * cfg.a_schedule.tail_sum(stages as u64)? / opts.b_floor.powf(cfg.p - 1.0));
    Ok((m, reports))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::master::Caps;

    fn desk(p: f64) -> (LpConfig, BuildOptions) {
        let cfg = LpConfig { p, gamma: 1.0, surrogate: true, ..LpConfig::default() };
        let opts = BuildOptions { b_floor: 1.0, caps: Caps { max_trials: 1, ..Caps::default() }, ..BuildOptions::default() };
        (cfg, opts)
    }

    // The normalized signal recomputed from the built stage alone.
    fn ratio_at(rec: &StageRecord, history: &[StageRecord], cfg: &LpConfig, b_floor: f64) -> f64 {
        let k = rec.k;
        let b = rec.block.height;
        let past: f64 = history.iter().map(|s| s.block.lambda / s.block.height).sum();
        let a = cfg.a_schedule.at(k).unwrap();
        let future: f64 = (k + 1..k + 200).map(|i| cfg.a_schedule.at(i).unwrap()).sum::<f64>() / b_floor.powf(cfg.p - 1.0);
        let mu = C3 * (past + a / b.powf(cfg.p - 1.0) + future);
        (b - mu) / (rec.n_star as f64).ln().powf(1.0 / cfg.p - 1.0 / (2.0 * cfg.p * (k + 2) as f64))
    }

    #[test]
    fn frozen_heights_are_minimal_doublings() {
        for p in [2.0, 4.0] {
            let (cfg, opts) = desk(p);
            let (m, reports) = lp_build(&cfg, 3, &opts, 5).unwrap();
            for (i, (r, s)) in reports.iter().zip(&m.stages).enumerate() {
                // lambda B^(p-2) = a exactly (powers of two throughout).
                assert_eq!(s.block.lambda * s.block.height.powf(p - 2.0), r.a);
                let oracle = ratio_at(s, &m.stages[..i], &cfg, 1.0);
                assert!((oracle - r.ratio).abs() < 1e-9 * r.ratio.abs(), "{oracle} {}", r.ratio);
                assert!(r.ratio >= r.k as f64);
                if r.doublings > 0 {
                    // Half the height falls short (same stage geometry up to B).
                    let half = StageConfig::new(r.a / (r.height / 2.0).powf(p - 2.0), r.height / 2.0, 1, REGIME);
                    let (rec, _) = build_stage(r.k, &s.entry, &half, &opts).unwrap();
                    assert!(ratio_at(&rec, &m.stages[..i], &cfg, 1.0) < r.k as f64);
                }
                assert!(r.relaxed.contains(&"gamma".to_string()));
            }
            assert!(m.mu <= reports.last().unwrap().mu_bar);
            for c in m.structural_suite() {
                assert!(c.ok, "{c:?}");
            }
        }
    }

    #[test]
    fn p2_lambda_ignores_height() {
        let (cfg, opts) = desk(2.0);
        let (m, _) = lp_build(&cfg, 2, &opts, 0).unwrap();
        assert_eq!(m.stages[0].block.lambda, 0.125);
        assert_eq!(m.stages[1].block.lambda, 0.0625);
    }

    #[test]
    fn failure_target_met_when_gamma_is_faithful() {
        let cfg = LpConfig { p: 2.0, surrogate: true, ..LpConfig::default() };
        assert!(cfg.gamma * C0 >= 8.0);
        let opts = BuildOptions { b_floor: 1.0, caps: Caps { max_trials: 1, ..Caps::default() }, ..BuildOptions::default() };
        let c = lp_stage_params(&StageState::default(), 1, &cfg, &[], &opts).unwrap();
        assert!(c.report.failure_bound <= c.report.failure_target);
        assert_eq!(c.report.relaxed, vec!["trials".to_string()]);
    }

    #[test]
    fn strict_mode_reports_caps() {
        let cfg = LpConfig { p: 2.0, ..LpConfig::default() };
        let opts = BuildOptions { b_floor: 1.0, ..BuildOptions::default() };
        assert!(matches!(
            lp_stage_params(&StageState::default(), 1, &cfg, &[], &opts),
            Err(Error::CapExceeded { cap: "trials", .. })
        ));
        let bad = LpConfig { p: 1.5, ..LpConfig::default() };
        assert!(bad.validate().is_err());
        let not_summable = LpConfig { a_schedule: Schedule::Const(0.1), ..LpConfig::default() };
        assert!(not_summable.validate().is_err());
    }
}

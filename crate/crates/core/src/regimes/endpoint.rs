//! The endpoint regime: `T_k = ceil(Gamma / lambda_k)` with `lambda_k` found by
//! shrinking a candidate until five stage conditions hold.

use num_rational::Ratio;

use super::{LogNum, Schedule};
use crate::error::{invalid, Error, Result};
use crate::master::{build_stage, BuildOptions, Manifest, StageConfig, StageRecord, StageState};
use crate::spike::fitted_moment_constant;

pub const REGIME: &str = "endpoint";

#[derive(Clone, Debug, PartialEq)]
pub struct EndpointConfig {
    pub gamma: f64,
    pub b_schedule: Schedule,
    /// Factor applied to the candidate `lambda` after each failed round.
    pub shrink: Ratio<u64>,
    pub max_rounds: u32,
    /// Accept the best cap-respecting candidate when no faithful one exists.
    pub surrogate: bool,
}

impl Default for EndpointConfig {
    fn default() -> Self {
        EndpointConfig {
            gamma: 1.0,
            b_schedule: Schedule::SqrtLog { offset: crate::spike::B_FLOOR_DEFAULT },
            shrink: Ratio::new(1, 2),
            max_rounds: 64,
            surrogate: false,
        }
    }
}

impl EndpointConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma >= 1.0 && self.gamma.is_finite()) {
            return Err(invalid("gamma", "must be at least 1"));
        }
        if *self.shrink.numer() == 0 || self.shrink >= Ratio::from_integer(1) {
            return Err(invalid("lambda_shrink", "must lie in (0, 1)"));
        }
        if self.max_rounds == 0 {
            return Err(invalid("max_rounds", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Condition {
    pub id: &'static str,
    pub holds: bool,
    pub detail: String,
}

/// Outcome of the search at one stage.
#[derive(Clone, Debug, PartialEq)]
pub struct Feasibility {
    pub k: u64,
    pub height: f64,
    pub lambda: f64,
    pub trials: u64,
    pub conditions: Vec<Condition>,
    pub rounds: u32,
    /// Why the search stopped before finding a faithful candidate.
    pub stopped_by: Option<String>,
    /// Fitted moment constants `C_r`, `r = 2..=k`.
    pub moment_constants: Vec<(u32, f64)>,
}

impl Feasibility {
    pub fn faithful(&self) -> bool {
        self.conditions.iter().all(|c| c.holds)
    }

    pub fn unmet(&self) -> Vec<String> {
        self.conditions.iter().filter(|c| !c.holds).map(|c| c.id.to_string()).collect()
    }

    pub fn render(&self) -> String {
        let mut s = format!(
            "stage {}: lambda = {}, T = {}, B = {}, rounds = {}, {}\n",
            self.k,
            self.lambda,
            self.trials,
            self.height,
            self.rounds,
            if self.faithful() { "faithful" } else { "surrogate" }
        );
        for c in &self.conditions {
            s.push_str(&format!("  [{}] {}: {}\n", if c.holds { "ok" } else { "unmet" }, c.id, c.detail));
        }
        if let Some(why) = &self.stopped_by {
            s.push_str(&format!("  stopped: {why}\n"));
        }
        s
    }
}

/// `sum_{i<k} lambda_i 2^(E_i)` over built stages.
fn past_weight(history: &[StageRecord]) -> LogNum {
    history
        .iter()
        .fold(LogNum::ZERO, |acc, s| acc.add(LogNum::new(s.block.lambda, s.threshold_log2 as i64)))
}

fn conditions(
    k: u64,
    rec: &StageRecord,
    state: &StageState,
    history: &[StageRecord],
    moments: &[(u32, f64)],
) -> Vec<Condition> {
    let lambda = rec.block.lambda;
    let height = rec.block.height;
    let trials = rec.config.trials;
    let mut out = Vec::with_capacity(5);
    let cap = 2f64.powi(-(k as i32));
    out.push(Condition { id: "lambda.sum", holds: lambda <= cap, detail: format!("lambda = {lambda} vs 2^-{k}") });
    let tail = match history.last() {
        Some(prev) => {
            let bound = 2f64.powi(-(k as i32) - 2) * prev.block.lambda;
            Condition { id: "lambda.tail", holds: lambda <= bound, detail: format!("lambda = {lambda} vs {bound}") }
        }
        None => Condition { id: "lambda.tail", holds: true, detail: "first stage".into() },
    };
    out.push(tail);
    let worst = moments
        .iter()
        .map(|&(r, c)| (r, c * lambda * height.powi(r as i32 - 2)))
        .fold((0, 0.0f64), |a, b| if b.1 > a.1 { b } else { a });
    out.push(Condition {
        id: "lp.diagonal",
        holds: worst.1 <= cap,
        detail: if moments.is_empty() {
            "no r in 2..=k".into()
        } else {
            format!("max_r C_r lambda B^(r-2) = {} at r = {} vs 2^-{k}", worst.1, worst.0)
        },
    });
    let need = (2.0 + state.selected as f64 + state.v_max as f64 + height).ln();
    out.push(Condition {
        id: "trials.dominate",
        holds: trials as f64 >= need,
        detail: format!("T = {trials} vs ln(2 + P + V_max + B) = {need:.4}"),
    });
    let lhs = LogNum::new(lambda, rec.threshold_log2 as i64);
    let rhs = LogNum::ONE.add(past_weight(history)).mul(LogNum::pow2(k as i64));
    out.push(Condition {
        id: "weighted.separation",
        holds: lhs >= rhs,
        detail: format!("log2(lambda Q) = {:.4} vs log2(2^k (1 + sum)) = {:.4}", lhs.log2(), rhs.log2()),
    });
    out
}

/// The chosen stage and its report.
#[derive(Clone, Debug)]
pub struct EndpointChoice {
    pub feasibility: Feasibility,
    pub record: StageRecord,
    pub next: StageState,
}

/// Shrinks `lambda` from 1 until stage `k` meets every condition, or until the
/// desk caps stop the search.
pub fn endpoint_choose_lambda(
    state: &StageState,
    k: u64,
    cfg: &EndpointConfig,
    history: &[StageRecord],
    opts: &BuildOptions,
) -> Result<EndpointChoice> {
    cfg.validate()?;
    let height = cfg.b_schedule.at(k)?;
    let moments: Vec<(u32, f64)> = (2..=k as u32).map(|r| Ok((r, fitted_moment_constant(r as f64)?))).collect::<Result<_>>()?;
    let shrink = *cfg.shrink.numer() as f64 / *cfg.shrink.denom() as f64;
    let mut lambda = 1.0f64;
    let mut best: Option<(usize, Feasibility, StageRecord, StageState)> = None;
    let mut stopped_by = None;
    let mut rounds = 0;
    for _ in 0..cfg.max_rounds {
        rounds += 1;
        let trials_f = (cfg.gamma / lambda).ceil();
        if trials_f > opts.caps.max_trials as f64 {
            stopped_by = Some(format!("T = {trials_f} exceeds the trials cap {}", opts.caps.max_trials));
            break;
        }
        let stage = StageConfig::new(lambda, height, trials_f as u64, REGIME);
        let (rec, next) = match build_stage(k, state, &stage, opts) {
            Ok(v) => v,
            Err(e @ (Error::CapExceeded { .. } | Error::Overflow(_))) => {
                stopped_by = Some(format!("lambda = {lambda}: {e}"));
                break;
            }
            Err(e) => return Err(e),
        };
        let conds = conditions(k, &rec, state, history, &moments);
        let met = conds.iter().filter(|c| c.holds).count();
        let feas = Feasibility {
            k,
            height,
            lambda,
            trials: stage.trials,
            conditions: conds,
            rounds,
            stopped_by: None,
            moment_constants: moments.clone(),
        };
        if feas.faithful() {
            return Ok(EndpointChoice { feasibility: feas, record: rec, next });
        }
        // Strict improvement only, so ties keep the larger lambda.
        if best.as_ref().is_none_or(|b| met > b.0) {
            best = Some((met, feas, rec, next));
        }
        lambda *= shrink;
    }
    let stopped_by = stopped_by.unwrap_or_else(|| format!("no faithful lambda in {} rounds", cfg.max_rounds));
    match best {
        Some((_, mut feas, mut rec, next)) => {
            feas.rounds = rounds;
            feas.stopped_by = Some(stopped_by);
            if !cfg.surrogate {
                return Err(Error::SearchExhausted(feas.render()));
            }
            rec.config.relaxed = feas.unmet();
            Ok(EndpointChoice { feasibility: feas, record: rec, next })
        }
        None => Err(Error::SearchExhausted(format!("stage {k}: no candidate fits the caps ({stopped_by})"))),
    }
}

/// Builds `stages` endpoint stages in order.
pub fn endpoint_build(cfg: &EndpointConfig, stages: usize, opts: &BuildOptions, seed: u64) -> Result<(Manifest, Vec<Feasibility>)> {
    if stages == 0 || stages > opts.caps.max_stages {
        return Err(Error::CapExceeded { cap: "stages", requested: stages as u128, limit: opts.caps.max_stages as u128 });
    }
    let mut state = StageState::default();
    let mut records = Vec::new();
    let mut reports = Vec::new();
    for k in 1..=stages as u64 {
        let choice = endpoint_choose_lambda(&state, k, cfg, &records, opts)?;
        state = choice.next;
        records.push(choice.record);
        reports.push(choice.feasibility);
    }
    Ok((Manifest::assemble(records, opts, REGIME, seed), reports))
}

/// `lambda_k log(log Q_k) = lambda_k ln(E_k ln 2)`.
pub fn endpoint_scale_check(rec: &StageRecord) -> f64 {
    rec.block.lambda * (rec.threshold_log2 as f64 * std::f64::consts::LN_2).ln()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScaleRow {
    pub lambda: f64,
    pub trials: u64,
    pub layers: u64,
    pub threshold_log2: u64,
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScaleBand {
    pub rows: Vec<ScaleRow>,
    pub min: f64,
    pub max: f64,
}

impl ScaleBand {
    pub fn width(&self) -> f64 {
        self.max / self.min
    }
}

/// Builds a fresh first stage with `T = ceil(Gamma / lambda)` for each
/// `lambda` and records the scale ratio.
pub fn endpoint_scale_band(gamma: f64, height: f64, lambdas: &[f64], opts: &BuildOptions) -> Result<ScaleBand> {
    if lambdas.is_empty() {
        return Err(invalid("lambdas", "need at least one value"));
    }
    let mut rows = Vec::new();
    for &lambda in lambdas {
        let trials = (gamma / lambda).ceil() as u64;
        let (rec, _) = build_stage(1, &StageState::default(), &StageConfig::new(lambda, height, trials, REGIME), opts)?;
        if rec.threshold_log2 < rec.block.layers {
            return Err(Error::Invariant(format!("E = {} below L = {}", rec.threshold_log2, rec.block.layers)));
        }
        rows.push(ScaleRow {
            lambda,
            trials,
            layers: rec.block.layers,
            threshold_log2: rec.threshold_log2,
            ratio: endpoint_scale_check(&rec),
        });
    }
    let min = rows.iter().map(|r| r.ratio).fold(f64::INFINITY, f64::min);
    let max = rows.iter().map(|r| r.ratio).fold(0.0, f64::max);
    Ok(ScaleBand { rows, min, max })
}

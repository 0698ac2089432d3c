//! Regime configuration files (TOML).
//!
//! ```toml
//! regime = "endpoint"          # endpoint | lp | bounded | fixed
//! stages = 3
//! seed = 1
//! b_floor = 1.0                # default 100
//! eta = "1/20"
//! caps = "stages=3,trials=64,layers=2097152"
//! surrogate = true
//!
//! [endpoint]
//! gamma = 1.0
//! b_schedule = "sqrtlog(1)"
//! lambda_shrink = "1/2"
//!
//! [lp]
//! p = 4.0
//! gamma = 1.0
//! a_schedule = "geometric(0.5, 0.25)"
//!
//! [bounded]
//! epsilon = 0.5
//! a_schedule = "pow2(2)"
//!
//! [[stage]]                    # regime = "fixed"
//! lambda = 1.0
//! B = 1.0
//! T = 1
//! ```

use num_rational::Ratio;
use serde::Deserialize;

use super::bounded::{bounded_build, BoundedConfig, HitSetManifest, HITSET_FORMAT};
use super::endpoint::{endpoint_build, EndpointConfig, Feasibility};
use super::lp::{lp_build, LpConfig, LpReport};
use super::Schedule;
use crate::error::{invalid, Error, Result};
use crate::master::{build_manifest, BuildOptions, Caps, Eta, Manifest, StageConfig, MANIFEST_FORMAT};
use crate::spike::B_FLOOR_DEFAULT;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    regime: String,
    stages: Option<usize>,
    seed: Option<u64>,
    b_floor: Option<f64>,
    eta: Option<String>,
    caps: Option<String>,
    #[serde(default)]
    surrogate: bool,
    endpoint: Option<RawEndpoint>,
    lp: Option<RawLp>,
    bounded: Option<RawBounded>,
    #[serde(default)]
    stage: Vec<RawStage>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEndpoint {
    gamma: Option<f64>,
    b_schedule: Option<String>,
    lambda_shrink: Option<String>,
    max_rounds: Option<u32>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLp {
    p: f64,
    gamma: Option<f64>,
    a_schedule: Option<String>,
    b_start: Option<f64>,
    max_doublings: Option<u32>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBounded {
    epsilon: Option<f64>,
    a_schedule: Option<String>,
    c: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawStage {
    lambda: f64,
    #[serde(rename = "B")]
    height: f64,
    #[serde(rename = "T")]
    trials: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum RegimeKind {
    Endpoint(EndpointConfig),
    Lp(LpConfig),
    Bounded(BoundedConfig),
    Fixed(Vec<StageConfig>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegimeConfig {
    pub kind: RegimeKind,
    pub stages: usize,
    pub seed: u64,
    pub opts: BuildOptions,
}

fn parse_ratio(field: &'static str, s: &str) -> Result<Ratio<u64>> {
    let (n, d) = s.split_once('/').unwrap_or((s, "1"));
    let n: u64 = n.trim().parse().map_err(|_| invalid(field, format!("expected a/b, got {s:?}")))?;
    let d: u64 = d.trim().parse().map_err(|_| invalid(field, format!("expected a/b, got {s:?}")))?;
    if d == 0 {
        return Err(invalid(field, "zero denominator"));
    }
    Ok(Ratio::new(n, d))
}

fn schedule(field: &'static str, s: &str) -> Result<Schedule> {
    s.parse::<Schedule>().map_err(|e| invalid(field, e.to_string()))
}

impl RegimeConfig {
    pub fn from_toml(text: &str) -> Result<RegimeConfig> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Malformed(format!("config: {e}")))?;
        let b_floor = raw.b_floor.unwrap_or(B_FLOOR_DEFAULT);
        if !(b_floor >= 1.0 && b_floor.is_finite()) {
            return Err(invalid("b_floor", "must be at least 1"));
        }
        let eta: Eta = match &raw.eta {
            Some(s) => parse_ratio("eta", s)?,
            None => crate::master::default_eta(),
        };
        if *eta.numer() == 0 {
            return Err(invalid("eta", "must be positive"));
        }
        let caps = match &raw.caps {
            Some(s) => Caps::parse(s)?,
            None => Caps::default(),
        };
        let opts = BuildOptions { eta, b_floor, caps };
        let seed = raw.seed.unwrap_or(0);
        let stages = if raw.regime == "fixed" { raw.stage.len() } else { raw.stages.ok_or_else(|| invalid("stages", "missing"))? };
        if stages == 0 {
            return Err(invalid("stages", "need at least one stage"));
        }
        let kind = match raw.regime.as_str() {
            "endpoint" => {
                let e = raw.endpoint.ok_or_else(|| invalid("endpoint", "missing [endpoint] table"))?;
                let mut cfg = EndpointConfig { surrogate: raw.surrogate, ..EndpointConfig::default() };
                if let Some(g) = e.gamma {
                    cfg.gamma = g;
                }
                cfg.b_schedule = match &e.b_schedule {
                    Some(s) => schedule("endpoint.b_schedule", s)?,
                    None => Schedule::SqrtLog { offset: b_floor },
                };
                if let Some(s) = &e.lambda_shrink {
                    cfg.shrink = parse_ratio("endpoint.lambda_shrink", s)?;
                }
                if let Some(r) = e.max_rounds {
                    cfg.max_rounds = r;
                }
                cfg.validate()?;
                RegimeKind::Endpoint(cfg)
            }
            "lp" => {
                let l = raw.lp.ok_or_else(|| invalid("lp", "missing [lp] table"))?;
                let mut cfg = LpConfig { p: l.p, surrogate: raw.surrogate, b_start: l.b_start, ..LpConfig::default() };
                if let Some(g) = l.gamma {
                    cfg.gamma = g;
                }
                if let Some(s) = &l.a_schedule {
                    cfg.a_schedule = schedule("lp.a_schedule", s)?;
                }
                if let Some(d) = l.max_doublings {
                    cfg.max_doublings = d;
                }
                cfg.validate()?;
                RegimeKind::Lp(cfg)
            }
            "bounded" => {
                let b = raw.bounded.unwrap_or(RawBounded { epsilon: None, a_schedule: None, c: None });
                let mut cfg = BoundedConfig { surrogate: raw.surrogate, ..BoundedConfig::default() };
                if let Some(e) = b.epsilon {
                    cfg.epsilon = e;
                }
                if let Some(s) = &b.a_schedule {
                    cfg.a_schedule = schedule("bounded.a_schedule", s)?;
                }
                if let Some(c) = b.c {
                    cfg.c = c;
                }
                cfg.validate()?;
                RegimeKind::Bounded(cfg)
            }
            "fixed" => {
                let cfgs: Vec<StageConfig> =
                    raw.stage.iter().map(|s| StageConfig::new(s.lambda, s.height, s.trials, "fixed")).collect();
                for c in &cfgs {
                    c.validate(b_floor)?;
                }
                RegimeKind::Fixed(cfgs)
            }
            other => return Err(invalid("regime", format!("unknown regime {other:?}; expected endpoint, lp, bounded or fixed"))),
        };
        Ok(RegimeConfig { kind, stages, seed, opts })
    }

    pub fn build(&self) -> Result<Built> {
        Ok(match &self.kind {
            RegimeKind::Endpoint(c) => {
                let (manifest, reports) = endpoint_build(c, self.stages, &self.opts, self.seed)?;
                Built::Master { manifest, notes: reports.iter().map(Feasibility::render).collect() }
            }
            RegimeKind::Lp(c) => {
                let (manifest, reports) = lp_build(c, self.stages, &self.opts, self.seed)?;
                Built::Master { manifest, notes: reports.iter().map(render_lp).collect() }
            }
            RegimeKind::Bounded(c) => Built::Bounded(bounded_build(c, self.stages, &self.opts.caps, self.seed)?),
            RegimeKind::Fixed(cfgs) => Built::Master { manifest: build_manifest(cfgs, &self.opts, "fixed", self.seed)?, notes: Vec::new() },
        })
    }
}

fn render_lp(r: &LpReport) -> String {
    format!(
        "stage {}: B = {}, lambda = {}, T = {} (requested {}), mu_bar = {}, N* = {}, ratio = {:.4} >= {}{}\n",
        r.k,
        r.height,
        r.lambda,
        r.trials,
        r.requested_trials,
        r.mu_bar,
        r.n_star,
        r.ratio,
        r.k,
        if r.relaxed.is_empty() { String::new() } else { format!(", relaxed: {}", r.relaxed.join(", ")) }
    )
}

/// A built construction of either kind.
#[derive(Clone, Debug)]
pub enum Built {
    Master { manifest: Manifest, notes: Vec<String> },
    Bounded(HitSetManifest),
}

impl Built {
    pub fn to_json(&self) -> String {
        match self {
            Built::Master { manifest, .. } => manifest.to_json(),
            Built::Bounded(hm) => hm.to_json(),
        }
    }

    /// Reads either manifest kind, dispatching on its `format` field.
    pub fn from_json(text: &str) -> Result<Built> {
        #[derive(Deserialize)]
        struct Probe {
            format: String,
        }
        let probe: Probe = serde_json::from_str(text).map_err(|e| Error::Malformed(format!("manifest: {e}")))?;
        match probe.format.as_str() {
            MANIFEST_FORMAT => Ok(Built::Master { manifest: Manifest::from_json(text)?, notes: Vec::new() }),
            HITSET_FORMAT => Ok(Built::Bounded(HitSetManifest::from_json(text)?)),
            other => Err(Error::Malformed(format!("manifest: unsupported format {other:?}"))),
        }
    }
}

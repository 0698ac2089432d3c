//! Seeded Monte Carlo harness, statistics, property suites and reports.
//!
//! Sample `i` of a run seeded with `s` reads the tape
//! `BitTape::for_sample(derive_seed(s, tag), i)`, where `tag` is a fixed
//! per-suite constant. Counts are merged as integers, so results do not
//! depend on the thread schedule.

mod report;
mod scan;
mod stats;
mod suites;
mod sweep;

pub use report::{digest, Kind, Relation, Report, ReportRow, Subject, Verdict};
pub use scan::{growth_scan, simulate_bounded, simulate_master, GrowthRow, GrowthScan};
pub use stats::{mc_estimate, mc_estimate_z, pair_test, parallel_tally, wilson, McEstimate, PairTest, DEFAULT_ALPHA, DEFAULT_Z, MIN_SAMPLES};
pub use suites::{
    amplification_sweep, bounded_rows, convolution_grid, core_suite, factorization_rows, factorization_tests, fourth_moment_bound,
    independence_suite, lp_rows, master_mc_rows, negative_control, stage_exact_rows, structural_rows, surrogate_block, verify_bounded,
    verify_built, verify_manifest, window_factorization,
};
pub use sweep::{bounded_sweep, master_sweep, tracked_events, BoundedTally, Event, MasterTally, SignalTally, SweepPlan};

use crate::error::{invalid, Result};

/// Settings of one verification run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    /// Tapes per Monte Carlo claim.
    pub samples: u64,
    /// Tapes for the amplification sweep, which only evaluates good tapes.
    pub amplification_samples: u64,
    pub convolution_tapes: u64,
    /// Interval width in standard deviations.
    pub z: f64,
    /// Family-wise significance of the factorization tests.
    pub alpha: f64,
    /// Tapes that always get a full hit profile.
    pub profiled: u64,
    /// Trials per stage tracked by the factorization tests.
    pub per_stage: usize,
    /// Include the manifest-independent suite.
    pub core: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            samples: 4000,
            amplification_samples: 100_000,
            convolution_tapes: 50,
            z: DEFAULT_Z,
            alpha: DEFAULT_ALPHA,
            profiled: 16,
            per_stage: 3,
            core: true,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.samples < MIN_SAMPLES {
            return Err(invalid("samples", format!("statistical claims need at least {MIN_SAMPLES} samples, got {}", self.samples)));
        }
        if !(self.z > 0.0 && self.z.is_finite()) {
            return Err(invalid("tolerance", "must be positive"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(invalid("alpha", "must lie in (0, 1)"));
        }
        if self.convolution_tapes == 0 {
            return Err(invalid("convolution_tapes", "must be positive"));
        }
        Ok(())
    }
}

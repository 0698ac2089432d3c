//! Dyadic spike blocks, lacunary stage constructions, and finite checks of
//! their quantitative properties.
//!
//! The crate is organized bottom-up:
//!
//! * [`bits`]: seeded random-access digit tapes standing in for a point of the circle.
//! * [`spike`]: spikes, blocks and their exact binomial law.
//! * [`trial`]: trials, convolution weights and the good event.
//! * [`master`]: the stage scheduler and manifests.
//! * [`regimes`]: parameter engines (endpoint, finite `L^p`, bounded) and the
//!   admissible-modulus checker.
//! * [`fourier`]: exact coefficients, tails and band support.
//! * [`verify`]: Monte Carlo harness, statistics and report rows.

pub mod bits;
pub mod error;
pub mod fourier;
pub mod master;
pub mod regimes;
mod serde_dec;
pub mod spike;
pub mod trial;
pub mod verify;

pub use bits::{derive_seed, valuation, BitIndex, BitSource, BitTape, Overlay};
pub use error::{Error, Result};
pub use fourier::{block_tail, spike_coeff, spike_tail, Coefficient, Cutoff, TailProfile};
pub use master::{build_manifest, build_stage, plan_lengths, Caps, Manifest, StageConfig, StageRecord, StageState};
pub use spike::{block_eval, block_floor, block_moments, choose_depth, spike_eval, BlockLaw, BlockParams, SpikeParams};
pub use trial::{good_event, good_prob_exact, trial_sum, weights, TrialSpec, WeightProfile};
pub use verify::{mc_estimate, Report, ReportRow, RunConfig, Verdict};

/// Environment variable consulted for the master seed when `--seed` is absent.
pub const SEED_ENV: &str = "SPIKEBLOCK_SEED";

//! Property suites. Each returns report rows; [`verify_built`] strings them
//! together for a manifest.

use super::report::{Kind, Relation, Report, ReportRow, Subject};
use super::stats::{mc_estimate_z, pair_test, parallel_tally, McEstimate, PairTest};
use super::sweep::{bounded_sweep, compatible, log_power, master_sweep, MasterTally, SweepPlan};
use super::RunConfig;
use crate::bits::{derive_seed, BitIndex, BitSource};
use crate::error::Result;
use crate::fourier::{band_support_check, block_tail, block_tail_bound, c2_grid, fitted_c1, fitted_c2, spike_coeff, tail_profile, Cutoff};
use crate::master::{BuildOptions, Caps, Manifest};
use crate::regimes::{admissible_check, endpoint_scale_band, endpoint_scale_check, Built, HitSetManifest};
use crate::spike::{block_floor, block_moments, fitted_moment_constant, floor_bound, moment_grid, spike_eval, BlockParams, SpikeParams, C3};
use crate::trial::{amplification_check, central_hits, good_prob_exact, trial_sum, trial_sum_weighted, TrialSpec, C0};

// Sub-seeds, one per suite, so suites do not share tapes.
const SEED_SPIKE: u64 = 0x5350_494b;
const SEED_AMPLIFY: u64 = 0x414d_504c;
const SEED_GOOD: u64 = 0x474f_4f44;
const SEED_CONV: u64 = 0x434f_4e56;
const SEED_MASTER: u64 = 0x4d41_5354;
const SEED_CONTROL: u64 = 0x4354_524c;
const SEED_BOUNDED: u64 = 0x424e_4444;

fn mc_row(claim: &str, subject: Subject, est: &McEstimate, relation: Relation, bound: f64, params: &str) -> ReportRow {
    ReportRow::claim(
        claim,
        subject,
        Kind::MonteCarlo,
        est.estimate,
        relation,
        bound,
        est.half_width(),
        params,
        format!("{} / {} samples, interval [{:.4e}, {:.4e}]", est.hits, est.samples, est.lo, est.hi),
    )
}

fn zero_violations(claim: &str, subject: Subject, violations: u64, checked: u64, params: &str, detail: String) -> ReportRow {
    ReportRow::claim(claim, subject, Kind::MonteCarlo, violations as f64, Relation::AtMost, 0.0, 0.0, params, format!("{checked} checked; {detail}"))
}

/// Analytic bound on `||F||_4^4 / (lambda B^2)` from the exact law:
/// `E F^4 = (lambda/L)^2 (L E s^4 + 3 L (L - 1))` with `E s^4 < 2^d + 1` and
/// `2^d < 128 B^2 L / lambda`.
pub fn fourth_moment_bound(bp: &BlockParams) -> f64 {
    128.0 + (bp.lambda / bp.layers as f64 + 3.0 * bp.lambda) / (bp.height * bp.height)
}

/// Blocks and trials small enough to evaluate the convolution identity by
/// brute force.
pub fn convolution_grid() -> Vec<(BlockParams, TrialSpec)> {
    let mut out = Vec::new();
    for (i, &(layers, depth, extra)) in [(8u64, 3u32, 0u64), (16, 4, 1), (24, 5, 0), (32, 3, 2), (40, 6, 0)].iter().enumerate() {
        let bp = BlockParams::geometric(1.0 / (i + 1) as f64, layers, depth, depth as u64 + 2 + extra, 3 * i as u64).expect("grid block");
        for &(len, start) in &[(1u64, 0i64), (layers / 8, 0), (1, 7), (layers / 8, -(bp.spacing as i64) + 1)] {
            out.push((bp, TrialSpec::new(start, len)));
        }
    }
    out
}

/// Block used for the amplification and good-event sweeps: `lambda = B = 1`,
/// `L = 16`, so `d = 10` and the good event has probability about `1.4%`.
pub fn surrogate_block() -> (BlockParams, TrialSpec) {
    (BlockParams::from_height(1.0, 1.0, 16, None, 0, 1.0).expect("surrogate block"), TrialSpec::new(0, 2))
}

/// Manifest-independent checks of spikes, blocks, trials, tails and moduli.
pub fn core_suite(cfg: &RunConfig) -> Result<Vec<ReportRow>> {
    let mut rows = Vec::new();
    let z = cfg.z;

    // Spike identities.
    let (mut lo_err, mut hi_err) = (0.0f64, 0.0f64);
    for d in 1..=40u32 {
        let sp = SpikeParams::new(d)?;
        let e = sp.mean().abs().max((sp.second_moment() - 1.0).abs());
        if d <= 30 {
            lo_err = lo_err.max(e);
        } else {
            hi_err = hi_err.max(e);
        }
    }
    rows.push(ReportRow::claim("spike.identities", Subject::SpikeBasic, Kind::Exact, lo_err, Relation::AtMost, 1e-12, 0.0, "d=1..30", "max |mean|, |E s^2 - 1|"));
    rows.push(ReportRow::claim("spike.identities-deep", Subject::SpikeBasic, Kind::Exact, hi_err, Relation::AtMost, 1e-9, 0.0, "d=31..40", "max |mean|, |E s^2 - 1|"));

    // Spike law at a few depths.
    for d in [1u32, 3, 6, 9, 12] {
        let sp = SpikeParams::new(d)?;
        let est = mc_estimate_z(|t| spike_eval(&sp, t, 7).map(|v| v == sp.h).unwrap_or(false), cfg.samples, derive_seed(cfg.seed, SEED_SPIKE + d as u64), z)?;
        let params = format!("d={d};v=7;samples={};seed={}", cfg.samples, cfg.seed);
        rows.push(mc_row("spike.law", Subject::SpikeBasic, &est, Relation::Near, sp.p(), &params));
    }

    // Fourier support at multiples of the period.
    let mut worst = 0.0f64;
    for d in 1..=20u32 {
        for k in 1..=16i128 {
            worst = worst.max(spike_coeff(d, k << d)?.value.norm());
        }
    }
    rows.push(ReportRow::claim("spike.fourier-support", Subject::SpikeBasic, Kind::Exact, worst, Relation::AtMost, 1e-12, 0.0, "d<=20;k<=16", "max |phi^(k 2^d)|"));
    let tiny = BlockParams::geometric(1.0, 2, 3, 5, 0)?;
    let band = band_support_check(&tiny, 1 << 12, 1e-10)?;
    rows.push(ReportRow::claim(
        "block.band-support",
        Subject::SpikeBasic,
        Kind::Exact,
        band.violation_count as f64,
        Relation::AtMost,
        0.0,
        0.0,
        "L=2;d=3;D=5;U=0;r<=4096",
        format!("{} coefficients scanned, max off-band {:.2e}", band.scanned, band.max_off_band),
    ));

    // Tail envelopes.
    let c1 = fitted_c1()?;
    rows.push(ReportRow::claim("spike.tail-envelope", Subject::SpikeTail, Kind::Exact, c1.constant, Relation::Below, 100.0, 0.0, "d=1..10", format!("fitted C1 at {}", c1.argmax)));
    let c2 = fitted_c2(&c2_grid())?;
    rows.push(ReportRow::claim("block.tail-envelope", Subject::BlockBasic, Kind::Exact, c2.constant, Relation::Below, 100.0, 0.0, "c2 grid", format!("fitted C2 at {}", c2.argmax)));

    // Block law and moments on the moment grid.
    let (mut var_err, mut m4, mut m4_bound, mut floor_gap) = (0.0f64, 0.0f64, 0.0f64, f64::NEG_INFINITY);
    for bp in moment_grid() {
        var_err = var_err.max((block_moments(&bp, 2.0)? - bp.lambda).abs());
        m4 = m4.max(block_moments(&bp, 4.0)? / (bp.lambda * bp.height * bp.height));
        m4_bound = m4_bound.max(fourth_moment_bound(&bp));
        floor_gap = floor_gap.max(floor_bound(&bp) - block_floor(&bp));
    }
    rows.push(ReportRow::claim("block.variance", Subject::BlockBasic, Kind::Exact, var_err, Relation::AtMost, 1e-10, 0.0, "moment grid", "max |E F^2 - lambda|"));
    rows.push(ReportRow::claim("block.floor", Subject::BlockBasic, Kind::Exact, floor_gap, Relation::AtMost, 0.0, 0.0, "moment grid", "max (-C3 lambda/B) - min F"));
    rows.push(ReportRow::claim("block.moment-4", Subject::BlockLp, Kind::Exact, m4, Relation::AtMost, m4_bound, 0.0, "moment grid;p=4", "max ||F||_4^4 / (lambda B^2) against 128 + (lambda/L + 3 lambda)/B^2"));
    for p in [3.0, 4.0, 6.0] {
        rows.push(ReportRow::note("block.moment-constant", Subject::BlockLp, Kind::Exact, fitted_moment_constant(p)?, &format!("p={p}"), format!("fitted C_p, p = {p}")));
    }

    // Convolution identity.
    let grid = convolution_grid();
    let conv_tapes = cfg.convolution_tapes;
    let seed = derive_seed(cfg.seed, SEED_CONV);
    let worst = parallel_tally(
        conv_tapes,
        seed,
        || Ok(0.0f64),
        |acc: &mut Result<f64>, _, tape| {
            if let Ok(w) = acc {
                for (bp, tr) in &grid {
                    match (trial_sum(bp, tr, tape), trial_sum_weighted(bp, tr, tape)) {
                        (Ok(a), Ok(b)) => *w = w.max((a - b).abs()),
                        (Err(e), _) | (_, Err(e)) => {
                            *acc = Err(e);
                            return;
                        }
                    }
                }
            }
        },
        |a, b| match (a, b) {
            (Ok(x), Ok(y)) => Ok(x.max(y)),
            (Err(e), _) | (_, Err(e)) => Err(e),
        },
    )?;
    rows.push(ReportRow::claim(
        "trial.convolution",
        Subject::LocalAmplification,
        Kind::Exact,
        worst,
        Relation::AtMost,
        1e-9,
        0.0,
        &format!("sets={};tapes={conv_tapes};seed={}", grid.len(), cfg.seed),
        format!("{} parameter sets x {conv_tapes} tapes, max |direct - weighted|", grid.len()),
    ));

    // Amplification and good-event probability on the surrogate block.
    let (bp, tr) = surrogate_block();
    let (good, bad) = amplification_sweep(&bp, &tr, cfg.amplification_samples, derive_seed(cfg.seed, SEED_AMPLIFY))?;
    let params = format!("L=16;d=10;ell=2;samples={};seed={}", cfg.amplification_samples, cfg.seed);
    rows.push(zero_violations("trial.amplification", Subject::LocalAmplification, bad, good, &params, "trial_sum >= 2 B ell on the good event".into()));
    let exact = good_prob_exact(&bp, &tr)?;
    let est = mc_estimate_z(|t| central_hits(&bp, &tr, t).map(|n| n > 0).unwrap_or(false), cfg.samples, derive_seed(cfg.seed, SEED_GOOD), z)?;
    rows.push(mc_row("trial.good-probability", Subject::LocalAmplification, &est, Relation::Near, exact.exact, &params));
    let mut margin = f64::INFINITY;
    for bp in moment_grid().into_iter().chain([bp]) {
        let tr = TrialSpec::new(0, bp.layers / 8);
        let g = good_prob_exact(&bp, &tr)?;
        margin = margin.min(g.exact / g.floor);
    }
    rows.push(ReportRow::claim("trial.good-floor", Subject::LocalAmplification, Kind::Exact, margin, Relation::AtLeast, 1.0, 0.0, "moment grid + surrogate", "min exact / (c0 lambda / B^2)"));

    // Admissible moduli.
    let a = admissible_check(&|u: f64| u.ln().powi(-2), 200)?;
    rows.push(ReportRow::check("admissible.logloglog", Subject::Admissible, a.admissible, "A<=2^200", format!("(log log log N)^-2 admissible, growth {:.3e}", a.growth())));
    let b = admissible_check(&|u: f64| u.powf(-0.5), 200)?;
    rows.push(ReportRow::check("admissible.loglog-half", Subject::Admissible, !b.admissible, "A<=2^200", format!("(log log N)^-1/2 not admissible, growth {:.3e}", b.growth())));
    rows.push(ReportRow::note("admissible.c-omega", Subject::Admissible, Kind::Exact, a.c_omega, "A<=2^200", "largest domination ratio for (log log log N)^-2"));

    // Endpoint scale band on a fixed lambda grid.
    let opts = BuildOptions { caps: Caps { max_layers: u64::MAX, max_digits: u64::MAX, ..Caps::default() }, ..BuildOptions::default() };
    let lambdas = [1.0, 0.5, 0.25, 0.125];
    let band = endpoint_scale_band(1.0, 100.0, &lambdas, &opts)?;
    rows.push(ReportRow::claim(
        "endpoint.scale-band",
        Subject::EndpointScale,
        Kind::Exact,
        band.width(),
        Relation::AtMost,
        50.0,
        0.0,
        "gamma=1;B=100;lambda=1,1/2,1/4,1/8",
        format!("lambda ln(E ln 2) in [{:.4}, {:.4}]", band.min, band.max),
    ));
    Ok(rows)
}

/// Good tapes and amplification violations over `samples` tapes. Good tapes
/// are found with one sparse scan; the trial sum is only evaluated on them.
pub fn amplification_sweep(bp: &BlockParams, tr: &TrialSpec, samples: u64, seed: u64) -> Result<(u64, u64)> {
    tr.validate(bp)?;
    let r = parallel_tally(
        samples,
        seed,
        || (0u64, 0u64),
        |acc, _, tape| {
            if central_hits(bp, tr, tape).expect("validated trial") > 0 {
                acc.0 += 1;
                acc.1 += !amplification_check(bp, tr, tape).expect("good tape") as u64;
            }
        },
        |a, b| (a.0 + b.0, a.1 + b.1),
    );
    Ok(r)
}

fn structural_subject(name: &str) -> Subject {
    if name.starts_with("lengths.") || name.starts_with("endpoints.") {
        Subject::LengthRecursion
    } else {
        Subject::MasterPrinciple
    }
}

/// One row per structural invariant of the manifest.
pub fn structural_rows(m: &Manifest) -> Vec<ReportRow> {
    m.structural_suite()
        .into_iter()
        .map(|c| ReportRow::check(&format!("structure.{}", c.name), structural_subject(c.name), c.ok, &c.detail, c.detail.clone()))
        .collect()
}

fn stage_params(m: &Manifest, i: usize) -> String {
    let s = &m.stages[i];
    let b = &s.block;
    format!("k={};lambda={};B={};T={};L={};d={};D={};U={}", s.k, b.lambda, b.height, s.trials(), b.layers, b.depth, b.spacing, b.base_shift)
}

/// Exact per-stage claims: block law, floor, tail, good-event floor and the
/// exact stage-failure probability.
pub fn stage_exact_rows(m: &Manifest) -> Result<Vec<ReportRow>> {
    let mut rows = Vec::new();
    for (i, s) in m.stages.iter().enumerate() {
        let bp = &s.block;
        let params = stage_params(m, i);
        let k = s.k;
        if bp.layers <= 1_000_000 {
            let var = block_moments(bp, 2.0)?;
            rows.push(ReportRow::claim("block.variance", Subject::BlockBasic, Kind::Exact, var, Relation::Near, bp.lambda, 1e-10, &params, format!("stage {k}: E F^2")));
            let m4 = block_moments(bp, 4.0)? / (bp.lambda * bp.height * bp.height);
            rows.push(ReportRow::claim("block.moment-4", Subject::BlockLp, Kind::Exact, m4, Relation::AtMost, fourth_moment_bound(bp), 0.0, &params, format!("stage {k}: ||F||_4^4 / (lambda B^2)")));
        }
        rows.push(ReportRow::claim("block.floor", Subject::BlockBasic, Kind::Exact, block_floor(bp), Relation::AtLeast, floor_bound(bp), 0.0, &params, format!("stage {k}: min F >= -C3 lambda / B")));
        let cut = Cutoff::Pow2(s.threshold_log2);
        rows.push(ReportRow::claim(
            "block.tail-at-threshold",
            Subject::BlockBasic,
            Kind::Exact,
            block_tail(bp, cut)?,
            Relation::AtMost,
            block_tail_bound(bp, cut)?,
            0.0,
            &params,
            format!("stage {k}: rho^2 at N = 2^E_k"),
        ));
        let mut worst = f64::INFINITY;
        let mut fail = 1.0;
        for t in 0..s.trials() {
            let g = good_prob_exact(bp, &s.trial_spec(t))?;
            worst = worst.min(g.exact / g.floor);
            fail *= 1.0 - g.exact;
        }
        rows.push(ReportRow::claim("trial.good-floor", Subject::LocalAmplification, Kind::Exact, worst, Relation::AtLeast, 1.0, 0.0, &params, format!("stage {k}: min exact / (c0 lambda / B^2)")));
        let bound = (-C0 * s.trials() as f64 * bp.lambda / (bp.height * bp.height)).exp();
        rows.push(ReportRow::claim("stage.failure-exact", Subject::Independence, Kind::Exact, fail, Relation::AtMost, bound, 0.0, &params, format!("stage {k}: prod (1 - P(G_t)) <= exp(-c0 T lambda / B^2)")));
        if !s.config.relaxed.is_empty() {
            rows.push(ReportRow::note("stage.surrogate", Subject::Plumbing, Kind::Structural, s.config.relaxed.len() as f64, &params, format!("stage {k} relaxed: {}", s.config.relaxed.join(", "))));
        }
    }
    Ok(rows)
}

/// Factorization tests with a Bonferroni split of `alpha` across the tests.
pub fn factorization_rows(tests: &[(String, PairTest)], alpha: f64, params: &str) -> Vec<ReportRow> {
    let level = alpha / tests.len().max(1) as f64;
    tests
        .iter()
        .map(|(label, t)| {
            ReportRow::claim(
                "independence.factorization",
                Subject::Independence,
                Kind::MonteCarlo,
                t.p_value,
                Relation::AtLeast,
                level,
                0.0,
                &format!("{label};{params}"),
                format!(
                    "{label}: joint {} vs expected {:.2} ({})",
                    t.both,
                    t.expected_both(),
                    if t.exact { "exact test" } else { "chi-square" }
                ),
            )
        })
        .collect()
}

/// Pairwise and triple tests over the tracked events of a sweep.
pub fn factorization_tests(tally: &MasterTally) -> Vec<(String, PairTest)> {
    let ev = &tally.events;
    let n = ev.len();
    let mut tests = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            if compatible(&[ev[a], ev[b]]) {
                let t = pair_test(tally.samples, tally.event_hits[a], tally.event_hits[b], tally.pair(a, b));
                tests.push((format!("{} x {}", ev[a].label(), ev[b].label()), t));
            }
        }
    }
    for a in 0..n {
        for b in a + 1..n {
            for c in b + 1..n {
                if compatible(&[ev[a], ev[b], ev[c]]) {
                    let t = pair_test(tally.samples, tally.pair(a, b), tally.event_hits[c], tally.triple_count(a, b, c));
                    tests.push((format!("({} & {}) x {}", ev[a].label(), ev[b].label(), ev[c].label()), t));
                }
            }
        }
    }
    tests
}

/// Factorization of all-zero window events at the given `(start, len)`
/// windows. Overlapping windows are dependent and must be rejected.
pub fn window_factorization(windows: &[(u64, u64)], samples: u64, seed: u64, alpha: f64) -> Result<Vec<ReportRow>> {
    let idx = windows.iter().map(|&(s, l)| Ok((BitIndex::new(s)?, l))).collect::<Result<Vec<_>>>()?;
    let n = idx.len();
    let counts = parallel_tally(
        samples,
        seed,
        || vec![0u64; n * n],
        |acc, _, tape| {
            let on: Vec<usize> = (0..n).filter(|&j| tape.window_all_zero(idx[j].0, idx[j].1)).collect();
            for &a in &on {
                for &b in &on {
                    acc[a * n + b] += 1;
                }
            }
        },
        |mut a, b| {
            a.iter_mut().zip(&b).for_each(|(x, y)| *x += y);
            a
        },
    );
    let mut tests = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            let label = format!("W{} x W{}", a + 1, b + 1);
            tests.push((label, pair_test(samples, counts[a * n + a], counts[b * n + b], counts[a * n + b])));
        }
    }
    Ok(factorization_rows(&tests, alpha, &format!("windows={windows:?};samples={samples};seed={seed}")))
}

/// The negative control: two overlapping windows. Passes when the
/// factorization test rejects them.
pub fn negative_control(cfg: &RunConfig) -> Result<ReportRow> {
    let rows = window_factorization(&[(101, 3), (102, 3)], cfg.samples, derive_seed(cfg.seed, SEED_CONTROL), cfg.alpha)?;
    let r = &rows[0];
    Ok(ReportRow::claim(
        "independence.negative-control",
        Subject::Independence,
        Kind::MonteCarlo,
        r.observed,
        Relation::Below,
        r.bound,
        0.0,
        &format!("windows=(101,3),(102,3);samples={};seed={}", cfg.samples, cfg.seed),
        format!("overlapping windows must be rejected; {}", r.detail),
    ))
}

fn sweep_plan(m: &Manifest, cfg: &RunConfig) -> SweepPlan {
    SweepPlan { samples: cfg.samples, seed: derive_seed(cfg.seed, SEED_MASTER), profiled: cfg.profiled, p: m.p, per_stage: cfg.per_stage }
}

/// Factorization of good events across trials and stages, plus the
/// negative control.
pub fn independence_suite(m: &Manifest, cfg: &RunConfig) -> Result<Vec<ReportRow>> {
    let tally = master_sweep(m, &sweep_plan(m, cfg))?;
    let mut rows = factorization_rows(&factorization_tests(&tally), cfg.alpha, &format!("samples={};seed={}", cfg.samples, cfg.seed));
    rows.push(negative_control(cfg)?);
    Ok(rows)
}

/// Monte Carlo rows of a master manifest from one sweep.
pub fn master_mc_rows(m: &Manifest, tally: &MasterTally, cfg: &RunConfig) -> Vec<ReportRow> {
    let mut rows = Vec::new();
    let run = format!("samples={};seed={}", cfg.samples, cfg.seed);
    rows.push(zero_violations(
        "master.floor",
        Subject::MasterPrinciple,
        tally.floor_violations,
        tally.samples,
        &run,
        format!("f(x) >= -mu, min f + mu = {:.4e}", tally.floor_margin),
    ));
    for (i, s) in m.stages.iter().enumerate() {
        let k = s.k;
        let params = format!("{};{run}", stage_params(m, i));
        let st = &tally.signal[i];
        rows.push(zero_violations(
            "master.signal",
            Subject::MasterPrinciple,
            st.average_fail,
            st.checked,
            &params,
            format!("stage {k}: average at N_(k,t) >= B - mu on good trials, min margin {:.4e}", st.average_margin),
        ));
        rows.push(zero_violations(
            "master.split",
            Subject::MasterPrinciple,
            st.split_fail,
            st.checked,
            &params,
            format!("stage {k}: past + off-block >= -mu N"),
        ));
        rows.push(zero_violations(
            "trial.amplification",
            Subject::LocalAmplification,
            st.signal_fail,
            st.checked,
            &params,
            format!("stage {k}: trial signal >= 2 B ell, min ratio {:.4}", st.amplification_min),
        ));
        let tr = s.trial_spec(0);
        if let Ok(g) = good_prob_exact(&s.block, &tr) {
            let est = McEstimate::from_counts(tally.good[i][0], tally.samples, cfg.z);
            rows.push(mc_row("trial.good-probability", Subject::LocalAmplification, &est, Relation::Near, g.exact, &params));
        }
        let bound = (-C0 * s.trials() as f64 * s.block.lambda / (s.block.height * s.block.height)).exp();
        let est = McEstimate::from_counts(tally.stage_fail[i], tally.samples, cfg.z);
        rows.push(mc_row("stage.failure", Subject::Independence, &est, Relation::AtMost, bound, &params));
        if m.p.is_some() {
            rows.push(zero_violations(
                "lp.growth",
                Subject::LargeSums,
                st.growth_fail,
                st.checked,
                &params,
                format!("stage {k}: S_N / (N (ln N)^(1/p - eps_k)) >= k on good trials, min {:.4}", st.growth_min),
            ));
        }
    }
    if m.p.is_some() {
        rows.push(ReportRow::note(
            "lp.upper-normalization",
            Subject::LargeSums,
            Kind::MonteCarlo,
            tally.upper_max,
            &run,
            format!("max |S_N| / (N (ln N)^(1/p + 1/2)) over {} endpoints", tally.upper_points),
        ));
    }
    rows.push(ReportRow::claim(
        "plumbing.sparse-profile",
        Subject::Plumbing,
        Kind::MonteCarlo,
        tally.profile_mismatch as f64,
        Relation::AtMost,
        0.0,
        0.0,
        &run,
        "hit profile agrees with the trial module on profiled tapes",
    ));
    rows
}

/// Frozen `L^p` ratios recomputed from the manifest alone, using its declared
/// future bound.
pub fn lp_rows(m: &Manifest) -> Vec<ReportRow> {
    let (Some(p), Some(future)) = (m.p, m.mu_future) else {
        return vec![ReportRow::check("lp.manifest", Subject::LargeSums, false, "", "manifest lacks p or mu_future")];
    };
    let mut rows = Vec::new();
    let a: Vec<f64> = m.stages.iter().map(|s| s.block.lambda * s.block.height.powf(p - 2.0)).collect();
    for (i, s) in m.stages.iter().enumerate() {
        let past: f64 = m.stages[..i].iter().map(|r| r.block.lambda / r.block.height).sum();
        let later: f64 = a[i + 1..].iter().sum::<f64>() / m.b_floor.powf(p - 1.0);
        let mu_bar = C3 * (past + a[i] / s.block.height.powf(p - 1.0) + later) + future;
        let eps = 1.0 / (2.0 * p * (s.k + 2) as f64);
        let ratio = (s.block.height - mu_bar) / log_power(s.n_star, 1.0 / p - eps);
        rows.push(ReportRow::claim(
            "lp.frozen-ratio",
            Subject::LargeSums,
            Kind::Exact,
            ratio,
            Relation::AtLeast,
            s.k as f64,
            0.0,
            &stage_params(m, i),
            format!("stage {}: (B - mu_bar) / (ln N*)^(1/p - eps), a_k = {}", s.k, a[i]),
        ));
    }
    rows
}

/// Endpoint-regime rows: per-stage scale values and the tail profile at the
/// stage thresholds.
pub fn endpoint_rows(m: &Manifest) -> Result<Vec<ReportRow>> {
    let mut rows = Vec::new();
    for (i, s) in m.stages.iter().enumerate() {
        rows.push(ReportRow::note(
            "endpoint.scale",
            Subject::EndpointScale,
            Kind::Exact,
            endpoint_scale_check(s),
            &stage_params(m, i),
            format!("stage {}: lambda ln(E ln 2)", s.k),
        ));
        let faithful = s.config.relaxed.is_empty();
        rows.push(ReportRow::note(
            "endpoint.feasibility",
            Subject::EndpointTail,
            Kind::Structural,
            s.config.relaxed.len() as f64,
            &stage_params(m, i),
            if faithful { format!("stage {}: all conditions met", s.k) } else { format!("stage {}: surrogate, unmet {}", s.k, s.config.relaxed.join(", ")) },
        ));
    }
    let grid: Vec<Cutoff> = m.stages.iter().flat_map(|s| [Cutoff::Pow2(s.threshold_log2), Cutoff::Pow2(s.threshold_log2 + 8)]).collect();
    let prof = tail_profile(&m.blocks(), &grid)?;
    rows.push(ReportRow::check("endpoint.tail-monotone", Subject::EndpointTail, prof.is_nonincreasing(), "thresholds", "||f - S_N f||^2 nonincreasing on the threshold grid"));
    let worst = prof.rows.iter().map(|r| r.total / r.bound).fold(0.0, f64::max);
    rows.push(ReportRow::claim("endpoint.tail-bound", Subject::EndpointTail, Kind::Exact, worst, Relation::AtMost, 1.0, 0.0, "thresholds", "max tail / summed block bounds"));
    Ok(rows)
}

/// Everything checked for a master manifest.
pub fn verify_manifest(m: &Manifest, cfg: &RunConfig) -> Result<Report> {
    cfg.validate()?;
    let mut report = Report::new(format!("spikeblock verify: regime {}, {} stages, seed {}, {} samples", m.regime, m.stages.len(), cfg.seed, cfg.samples));
    report.extend(structural_rows(m));
    report.extend(stage_exact_rows(m)?);
    let tally = master_sweep(m, &sweep_plan(m, cfg))?;
    report.extend(master_mc_rows(m, &tally, cfg));
    report.extend(factorization_rows(&factorization_tests(&tally), cfg.alpha, &format!("samples={};seed={}", cfg.samples, cfg.seed)));
    report.rows.push(negative_control(cfg)?);
    match m.regime.as_str() {
        "lp" => report.extend(lp_rows(m)),
        "endpoint" => report.extend(endpoint_rows(m)?),
        _ => {}
    }
    if cfg.core {
        report.extend(core_suite(cfg)?);
    }
    Ok(report)
}

/// Exact and Monte Carlo rows of a bounded hitting-set manifest.
pub fn bounded_rows(hm: &HitSetManifest, cfg: &RunConfig) -> Result<Vec<ReportRow>> {
    let mut rows = Vec::new();
    let measure = hm.measure_bound();
    let as_f64 = |r: &num_rational::BigRational| {
        use num_traits::ToPrimitive;
        r.to_f64().unwrap_or(f64::NAN)
    };
    let mut row = ReportRow::claim(
        "bounded.measure",
        Subject::Bounded,
        Kind::Exact,
        as_f64(&measure),
        Relation::Below,
        hm.epsilon,
        0.0,
        &format!("epsilon={}", hm.epsilon),
        format!("sum L_k 2^-d_k = {measure} exactly"),
    );
    if !hm.measure_bound_ok() {
        row.verdict = super::report::Verdict::Fail;
    }
    rows.push(row);
    rows.push(ReportRow::check("bounded.stage-measure", Subject::Bounded, hm.stage_bounds_ok(), "", "L_k 2^-d_k <= 1 / A_k per stage"));
    let tally = bounded_sweep(hm, cfg.samples, derive_seed(cfg.seed, SEED_BOUNDED))?;
    for (i, s) in hm.stages.iter().enumerate() {
        let params = format!("k={};A={};T={};L={};d={};D={};samples={};seed={}", s.k, s.a, s.trials, s.layers, s.depth, s.spacing, cfg.samples, cfg.seed);
        let (p, floor) = s.hit_probability(0);
        let est = McEstimate::from_counts(tally.hits[i][0], tally.samples, cfg.z);
        rows.push(mc_row("bounded.hit-probability", Subject::Bounded, &est, Relation::Near, p, &params));
        rows.push(ReportRow::claim("bounded.hit-floor", Subject::Bounded, Kind::Exact, p, Relation::AtLeast, floor, 0.0, &params, format!("stage {}: exact >= c1 / A", s.k)));
        let hits: u64 = tally.hits[i].iter().sum();
        rows.push(zero_violations("bounded.membership", Subject::Bounded, tally.member_fail[i], hits, &params, format!("stage {}: every trial point in E on hit events", s.k)));
        rows.push(zero_violations(
            "bounded.endpoint-average",
            Subject::Bounded,
            tally.average_fail[i],
            hits,
            &params,
            format!("stage {}: endpoint average >= 1/(1 + theta), min {:.4}", s.k, tally.average_min[i]),
        ));
        if !s.relaxed.is_empty() {
            rows.push(ReportRow::note("stage.surrogate", Subject::Plumbing, Kind::Structural, s.relaxed.len() as f64, &params, format!("stage {} relaxed: {}", s.k, s.relaxed.join(", "))));
        }
    }
    Ok(rows)
}

pub fn verify_bounded(hm: &HitSetManifest, cfg: &RunConfig) -> Result<Report> {
    cfg.validate()?;
    let mut report = Report::new(format!("spikeblock verify: regime bounded, {} stages, seed {}, {} samples", hm.stages.len(), cfg.seed, cfg.samples));
    report.extend(bounded_rows(hm, cfg)?);
    if cfg.core {
        report.extend(core_suite(cfg)?);
    }
    Ok(report)
}

/// The full property suite for either manifest kind.
pub fn verify_built(built: &Built, cfg: &RunConfig) -> Result<Report> {
    match built {
        Built::Master { manifest, .. } => verify_manifest(manifest, cfg),
        Built::Bounded(hm) => verify_bounded(hm, cfg),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fourth_moment_bound_dominates_exact_moments() {
        for bp in moment_grid().into_iter().chain([surrogate_block().0]) {
            let r = block_moments(&bp, 4.0).unwrap() / (bp.lambda * bp.height * bp.height);
            assert!(r <= fourth_moment_bound(&bp), "{r}");
        }
    }

    #[test]
    fn convolution_grid_is_valid() {
        let g = convolution_grid();
        assert_eq!(g.len(), 20);
        for (bp, tr) in &g {
            tr.validate(bp).unwrap();
        }
    }

    #[test]
    fn window_control_detects_overlap() {
        let dep = window_factorization(&[(101, 3), (102, 3)], 20_000, 1, 1e-3).unwrap();
        assert!(!dep[0].passed());
        let ind = window_factorization(&[(101, 3), (110, 3), (200, 2)], 20_000, 1, 1e-3).unwrap();
        assert!(ind.iter().all(|r| r.passed()), "{ind:?}");
    }
}

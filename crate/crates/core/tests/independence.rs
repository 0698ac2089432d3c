//! Factorization tests on good events and their negative control.

use spikeblock::bits::{derive_seed, BitIndex, BitSource, BitTape};
use spikeblock::master::{build_manifest, BuildOptions, StageConfig};
use spikeblock::verify::{independence_suite, master_sweep, pair_test, tracked_events, window_factorization, RunConfig, SweepPlan};
use spikeblock::{good_event, Manifest};

fn two_stage() -> Manifest {
    let opts = BuildOptions { b_floor: 1.0, ..BuildOptions::default() };
    let cfgs = [StageConfig::new(1.0, 1.0, 2, "fixed"), StageConfig::new(1.0, 1.0, 1, "fixed")];
    build_manifest(&cfgs, &opts, "fixed", 31).unwrap()
}

#[test]
fn good_events_factorize_and_the_control_is_rejected() {
    let m = two_stage();
    let cfg = RunConfig { seed: 4, samples: 20_000, ..RunConfig::default() };
    let rows = independence_suite(&m, &cfg).unwrap();
    let (control, tests): (Vec<_>, Vec<_>) = rows.iter().partition(|r| r.claim == "independence.negative-control");
    assert_eq!(control.len(), 1);
    assert!(control[0].passed(), "{:?}", control[0]);
    // Two trial events and two stage events: four compatible pairs, one triple.
    assert_eq!(tests.len(), 5);
    assert!(tests.iter().all(|r| r.passed()), "{tests:?}");
}

#[test]
fn sweep_counts_match_direct_evaluation() {
    let m = two_stage();
    let plan = SweepPlan { samples: 5000, seed: derive_seed(8, 0), profiled: 0, p: None, per_stage: 3 };
    let tally = master_sweep(&m, &plan).unwrap();
    let events = tracked_events(&m, 3);
    assert_eq!(tally.events, events);
    let mut good = vec![vec![0u64; 2], vec![0u64; 1]];
    let mut both = 0u64;
    for i in 0..plan.samples {
        let tape = BitTape::for_sample(plan.seed, i);
        let g: Vec<Vec<bool>> = m.stages.iter().map(|s| (0..s.trials()).map(|t| good_event(&s.block, &s.trial_spec(t), &tape).unwrap()).collect()).collect();
        for (k, row) in g.iter().enumerate() {
            for (t, &b) in row.iter().enumerate() {
                good[k][t] += b as u64;
            }
        }
        both += (g[0][0] && g[0][1]) as u64;
    }
    assert_eq!(tally.good, good);
    let a = events.iter().position(|e| e.label() == "G(1,1)").unwrap();
    let b = events.iter().position(|e| e.label() == "G(1,2)").unwrap();
    assert_eq!(tally.pair(a, b), both);
}

#[test]
fn window_tests_separate_dependent_from_disjoint() {
    // Disjoint windows on one tape are independent by construction.
    let rows = window_factorization(&[(10, 4), (20, 4), (64, 3), (65, 3)], 50_000, 11, 1e-3).unwrap();
    let rejected: Vec<_> = rows.iter().filter(|r| !r.passed()).map(|r| r.detail.clone()).collect();
    // Only (64,3) x (65,3) overlaps.
    assert_eq!(rejected.len(), 1);
    assert!(rejected[0].starts_with("W3 x W4"), "{rejected:?}");

    // Hand count of the overlap against the test's inputs.
    let (x, y) = (BitIndex::new(64).unwrap(), BitIndex::new(65).unwrap());
    let (mut a, mut b, mut ab) = (0, 0, 0);
    for i in 0..50_000u64 {
        let t = BitTape::for_sample(11, i);
        let (p, q) = (t.window_all_zero(x, 3), t.window_all_zero(y, 3));
        a += p as u64;
        b += q as u64;
        ab += (p && q) as u64;
    }
    assert!(pair_test(50_000, a, b, ab).p_value < 1e-6);
}

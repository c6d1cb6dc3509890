use oqec_core::channel;
use oqec_core::harness::{self, SuiteConfig, Tolerances};
use oqec_core::linalg::{self, identity};
use oqec_core::rng::Stream;
use oqec_core::space::{self, SpaceDecomposition};

fn dims(da: usize, db: usize, dk: usize) -> SpaceDecomposition {
    SpaceDecomposition::new(da, db, dk).unwrap()
}

#[test]
fn zero_leak_channels_keep_fidelity() {
    let cfg = SuiteConfig {
        leak_strength: 0.0,
        ..SuiteConfig::new(dims(2, 2, 2), 500, 1)
    };
    let run = harness::run_theorem3(&cfg).unwrap();
    assert!(run.summary.passed());
    for r in &run.reports {
        assert!(r.slack.unwrap().abs() < 1e-10);
    }
}

#[test]
fn perfect_pair_stays_at_one() {
    let d = dims(2, 2, 2);
    let mut rng = Stream::new(2);
    for _ in 0..50 {
        let spec = channel::random_structured(d, 3, 1.0, &mut rng).unwrap();
        let rho = space::random_perfect_state(d, &mut rng);
        let o = harness::theorem3_trial(&spec, &rho, &rho).unwrap();
        assert!((o.fa_before - 1.0).abs() < 1e-10);
        assert!((o.fa_after - 1.0).abs() < 1e-10);
    }
}

#[test]
fn structured_channels_never_lower_fidelity_and_often_raise_it() {
    let cfg = SuiteConfig::new(dims(2, 2, 2), 10_000, 3);
    let run = harness::run_theorem3(&cfg).unwrap();
    let s = &run.summary;
    assert_eq!(s.failures, 0);
    assert!(s.min_slack.unwrap() >= -1e-9);
    assert_eq!(s.counters["chain_disagreements"], 0);
    assert!(s.counters["strict_increases"] * 10 >= s.trials, "{:?}", s.counters);
}

#[test]
fn suites_needing_k_reject_dk_zero() {
    let cfg = SuiteConfig::new(dims(2, 2, 0), 10, 0);
    assert!(harness::run_theorem3(&cfg).is_err());
    assert!(harness::run_theorem4(&cfg).is_err());
    let swap = SuiteConfig::new(dims(2, 3, 1), 10, 0);
    assert!(harness::swap_counterexample_search(&swap).is_err());
    assert!(harness::run_suite("nonsense", &cfg).is_err());
}

#[test]
fn computation_with_identity_on_a_is_structured() {
    let d = dims(2, 2, 2);
    for seed in 0..20 {
        let mut r1 = Stream::new(seed);
        let mut r2 = Stream::new(seed);
        let comp = channel::random_computation(d, vec![identity(2)], 3, 1.0, &mut r1).unwrap();
        let spec = channel::random_structured(d, 3, 1.0, &mut r2).unwrap();
        let rho = space::random_perfect_state(d, &mut r1);
        let rho_t = space::random_imperfect_state(d, &mut r1);
        let via_comp = channel::assemble_computation(&comp).apply(&rho_t).unwrap();
        let via_spec = channel::assemble(&spec).apply(&rho_t).unwrap();
        let a = oqec_core::fidelity::subsystem_fidelity(&rho, &via_comp).unwrap();
        let b = harness::theorem3_trial(&spec, &rho, &rho_t).unwrap().fa_after;
        assert!((a - b).abs() < 1e-10);
        assert!(linalg::approx_eq(via_comp.matrix(), via_spec.matrix(), 1e-10));
    }
}

#[test]
fn computation_suite_passes() {
    let run = harness::run_theorem4(&SuiteConfig::new(dims(2, 2, 2), 2000, 4)).unwrap();
    assert!(run.summary.passed(), "{}", run.summary.to_json());
    assert_eq!(run.summary.checks["error_term_psd"].failures, 0);
}

#[test]
fn identities_hold_with_and_without_leak() {
    for t in [0.0, 1.0] {
        let cfg = SuiteConfig {
            leak_strength: t,
            ..SuiteConfig::new(dims(2, 2, 3), 1000, 5)
        };
        let run = harness::run_evolution_identities(&cfg).unwrap();
        assert!(run.summary.passed(), "{}", run.summary.to_json());
    }
    // without K there is nothing to leak; the imperfect-state identity is skipped
    let run = harness::run_evolution_identities(&SuiteConfig::new(dims(2, 3, 0), 100, 6)).unwrap();
    assert!(run.summary.passed());
    assert!(!run.summary.checks.contains_key("leak_update"));
}

#[test]
fn property_suite_examples() {
    let empty = harness::run_property_suite(&SuiteConfig::new(dims(2, 2, 2), 0, 7)).unwrap();
    assert_eq!(empty.summary.trials, 0);
    assert_eq!(empty.summary.failures, 0);
    assert!(empty.summary.checks.is_empty());

    let run = harness::run_property_suite(&SuiteConfig::new(dims(2, 2, 2), 300, 8)).unwrap();
    assert!(run.summary.passed(), "{}", run.summary.to_json());
    let degenerate = &run.summary.checks["triangle_degenerate"];
    assert_eq!(degenerate.evaluated, 300);
    assert!(degenerate.worst_margin.unwrap() >= -1e-12);
}

#[test]
fn swap_leaves_symmetric_product_pairs_unchanged() {
    let d = dims(2, 2, 1);
    let swap = channel::KrausChannel::unitary(d, channel::swap_ab_unitary(d).unwrap()).unwrap();
    let mut rng = Stream::new(9);
    for _ in 0..50 {
        let a = linalg::random_density(2, 2, &mut rng).unwrap();
        let b = linalg::random_density(2, 1, &mut rng).unwrap();
        let tau = space::make_perfect_state(d, &a, &a).unwrap();
        let ups = space::make_perfect_state(d, &b, &b).unwrap();
        let before = oqec_core::fidelity::subsystem_fidelity(&tau, &ups).unwrap();
        let after =
            oqec_core::fidelity::subsystem_fidelity(&swap.apply(&tau).unwrap(), &swap.apply(&ups).unwrap()).unwrap();
        assert!((before - after).abs() < 1e-10);
    }
}

#[test]
fn swap_search_finds_both_directions() {
    let run = harness::swap_counterexample_search(&SuiteConfig::new(dims(2, 2, 1), 1000, 10)).unwrap();
    let s = &run.summary;
    assert!(s.passed(), "{}", s.to_json());
    assert!(s.counters["increases"] > 0 && s.counters["decreases"] > 0);
    assert_eq!(s.checks["handcrafted_increase"].failures, 0);
    assert_eq!(s.checks["handcrafted_decrease"].failures, 0);
}

#[test]
fn sweep_examples() {
    let eps = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5];
    let leaks = [0.0, 0.5, 1.0];
    let cfg = SuiteConfig::new(dims(2, 2, 2), 200, 11);
    let run = harness::sweep_init_error(&cfg, &eps, &leaks).unwrap();
    assert_eq!(run.rows.len(), eps.len() * leaks.len() * 200);
    assert!(run.summary.passed());
    assert!(run.cells.iter().all(|c| c.pass && c.min_slack >= -1e-9));
    for r in &run.rows {
        if r.epsilon == 0.0 {
            assert!((r.fa_before - 1.0).abs() < 1e-10 && (r.fa_after - 1.0).abs() < 1e-10);
        }
        if r.leak_strength == 0.0 {
            assert!((r.fa_after - r.fa_before).abs() < 1e-10);
        }
    }
    let csv = harness::sweep_csv(&run.rows);
    assert_eq!(csv.lines().next().unwrap(), "epsilon,leak_strength,trial,fa_before,fa_after,slack");
    assert_eq!(csv.lines().count(), run.rows.len() + 1);
    let cells = harness::sweep_cells_csv(&run.cells);
    assert_eq!(cells.lines().count(), eps.len() * leaks.len() + 1);

    assert!(harness::sweep_init_error(&cfg, &[1.5], &leaks).is_err());
    assert!(harness::sweep_init_error(&SuiteConfig::new(dims(2, 2, 0), 5, 0), &[0.1], &[0.0]).is_err());
}

#[test]
fn identical_configs_give_identical_json() {
    for suite in harness::SUITES {
        let d = if suite == "swap" { dims(2, 2, 1) } else { dims(2, 2, 2) };
        let cfg = SuiteConfig {
            samples: 3,
            ..SuiteConfig::new(d, 50, 12)
        };
        let a = harness::run_suite(suite, &cfg).unwrap().summary.to_json();
        let b = harness::run_suite(suite, &cfg).unwrap().summary.to_json();
        assert_eq!(a, b, "{suite}");
    }
}

#[test]
fn failures_carry_reproduction_bundles() {
    // an impossible requirement: every slack must be at least 1
    let cfg = SuiteConfig {
        tolerances: Tolerances {
            slack: -1.0,
            ..Tolerances::default()
        },
        ..SuiteConfig::new(dims(2, 2, 2), 5, 13)
    };
    let run = harness::run_theorem3(&cfg).unwrap();
    assert_eq!(run.summary.failures, 5);
    assert_eq!(run.summary.failed_trials.len(), 5);
    let bundle = run.summary.failed_trials[0].bundle.as_ref().unwrap();
    for key in ["rho", "rho_tilde", "kraus0"] {
        assert!(bundle.contains_key(key), "{key}");
    }
    let json = run.summary.to_json();
    assert!(json.contains("\"tolerances\""));
    assert!(json.contains("\"bundle\""));
}

#[test]
fn tolerance_overrides() {
    let mut t = Tolerances::default();
    t.set("slack", 1e-8).unwrap();
    assert_eq!(t.slack, 1e-8);
    assert!(t.set("slak", 1e-8).is_err());
    assert!(t.set("slack", -1.0).is_err());
    assert!(t.set("slack", f64::NAN).is_err());
}

#[test]
fn pairwise_mean() {
    assert_eq!(harness::pairwise_sum(&[]), 0.0);
    assert_eq!(harness::mean(&[1.0, 2.0, 3.0, 4.0]), 2.5);
    let xs = vec![0.1; 1000];
    assert!((harness::pairwise_sum(&xs) - 100.0).abs() < 1e-12);
}

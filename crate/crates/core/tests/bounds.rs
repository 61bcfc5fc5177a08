use anonrep::infotheory::{binary_entropy, BetaGrid, LOWER_BOUND_CHECK_SLACK};
use anonrep::validation::{g_check, gradient_suite, hamming_check, lower_bound_suite, upper_bound_suite};

#[test]
fn lower_bound_holds_on_a_hundred_random_models() {
    let cases = lower_bound_suite(100, 0, 6, &BetaGrid::default()).unwrap();
    assert_eq!(cases.len(), 100);
    for c in &cases {
        assert!(c.n_z <= 6 && c.n_u <= 6);
        assert!(
            c.check.error >= c.check.bound - LOWER_BOUND_CHECK_SLACK,
            "seed {}: error {} below bound {}",
            c.seed,
            c.check.error,
            c.check.bound
        );
        assert!(c.check.bound <= c.check.tabulated_bound + 1e-9, "{c:?}");
    }
}

#[test]
fn hamming_rate_at_eleven_percent() {
    let h = hamming_check(0.11).unwrap();
    let oracle = 2f64.ln() + 0.11 * 0.11f64.ln() + 0.89 * 0.89f64.ln();
    assert!((oracle - (2f64.ln() - binary_entropy(0.11))).abs() < 1e-15);
    assert!((h.rate - oracle).abs() < 1e-4, "{h:?}");
}

#[test]
fn risk_bound_holds_on_a_thousand_prediction_sets() {
    let cases = upper_bound_suite(1000, 0).unwrap();
    for c in &cases {
        assert!(c.misclassification <= c.bound + 1e-9, "{c:?}");
    }
    // the argmax error is not covered by the bound on every set
    assert!(cases.iter().any(|c| c.argmax_error > c.bound));
}

#[test]
fn g_endpoints_and_roundtrips() {
    for k in [2, 10, 30] {
        let c = g_check(k, 1000).unwrap();
        assert!(c.at_zero <= 1e-12 && c.at_ceiling <= 1e-12, "{c:?}");
        assert!(c.max_roundtrip_error < 1e-8, "{c:?}");
        assert_eq!(c.negative_input, 0.0);
    }
}

#[test]
fn twenty_random_networks_pass_the_gradient_check() {
    let cases = gradient_suite(20, 100).unwrap();
    for c in &cases {
        assert!(c.params <= 10_000);
        assert!(c.passed(), "seed {}: max rel error {}", c.seed, c.max_rel_error());
        assert!(c.reports.iter().all(|r| r.checked > 0), "seed {}", c.seed);
    }
}

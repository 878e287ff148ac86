mod support;

#[test]
fn analytic_gradients_match_central_differences() {
    let report = support::check_gradients(20, 1e-5, 1e-6).unwrap();
    assert!(report.checked > 20 * 400, "{report:?}");
    assert!(report.skipped * 20 < report.checked, "too many boundary crossings: {report:?}");
    assert!(report.max_rel_error < 1e-4, "{report:?}");
}

#[test]
fn masked_actions_stay_on_the_simplex() {
    support::check_action_simplex(10_000).unwrap();
}

mod support;

use hiquant::macro_agent::{classify_regime, Regime};
use hiquant::risk::{ewma_variance, scale_factor, RiskController, RiskParams};
use proptest::prelude::*;

#[test]
fn indicators_match_closed_forms() {
    let n = support::check_indicators(50, 1e-9).unwrap();
    assert_eq!(n, 50 * 14);
}

#[test]
fn metrics_match_direct_definitions() {
    support::check_metrics(50, 1e-9).unwrap();
}

#[test]
fn metrics_on_a_hand_path() {
    let nav = [1.0, 1.1, 0.99, 1.089];
    let m = hiquant::backtest::metrics_from_nav(&nav).unwrap();
    assert!((m.cr - 0.089).abs() < 1e-12);
    assert!((m.mdd - (0.99 / 1.1 - 1.0)).abs() < 1e-12);
    // A single negative return has no dispersion.
    assert_eq!(m.dd, 0.0);
    assert_eq!(m.sortino, None);
}

#[test]
fn degenerate_paths_give_empty_ratios() {
    let steady: Vec<f64> = (0..50).map(|t| 1.001f64.powi(t)).collect();
    let m = hiquant::backtest::metrics_from_nav(&steady).unwrap();
    assert_eq!((m.std, m.dd, m.mdd), (0.0, 0.0, 0.0));
    assert_eq!((m.sharpe, m.sortino, m.calmar), (None, None, None));
    let flat = hiquant::backtest::metrics_from_nav(&[1.0; 10]).unwrap();
    assert_eq!((flat.cr, flat.ar, flat.sharpe, flat.calmar), (0.0, 0.0, None, None));
}

#[test]
fn regime_truth_table() {
    let rising = (0.03, 0.02);
    let falling = (0.01, 0.02);
    let flat = (0.02, 0.02);
    let cases = [
        (rising, 51.0, Regime::Overheating),
        (rising, 49.0, Regime::Stagflation),
        (falling, 51.0, Regime::Recovery),
        (falling, 49.0, Regime::Recession),
        (flat, 51.0, Regime::Recovery),
        (flat, 49.0, Regime::Recession),
        (rising, 50.0, Regime::Stagflation),
        (falling, 50.0, Regime::Recession),
        (rising, 50.000001, Regime::Overheating),
    ];
    for ((now, prev), pmi, want) in cases {
        assert_eq!(classify_regime(now, prev, pmi), want, "yoy {now} vs {prev}, pmi {pmi}");
    }
}

#[test]
fn constant_returns_give_truncated_geometric_variance() {
    for &c in &[0.0, 0.001, -0.02, 0.05] {
        for &lambda in &[0.5, 0.9, 0.94, 0.99] {
            for &n in &[1usize, 5, 20, 60] {
                let r = vec![c; n + 7];
                let want = c * c * (1.0 - f64::powi(lambda, n as i32));
                assert!((ewma_variance(&r, lambda, n).unwrap() - want).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn calm_history_keeps_full_exposure() {
    let params = RiskParams::default();
    let mut rc = RiskController::new(params.clone()).unwrap();
    assert_eq!(rc.beta(), params.cap);
    for k in 0..100 {
        rc.record(if k % 2 == 0 { 0.001 } else { -0.001 });
        assert_eq!(rc.beta(), params.cap);
    }
}

proptest! {
    #[test]
    fn exposure_is_capped_and_monotone(target in 0.01f64..0.5, sigma in 0.0f64..2.0, cap in 0.1f64..=1.0) {
        let beta = scale_factor(target, sigma, cap);
        prop_assert!(beta > 0.0 && beta <= cap);
        if sigma <= target {
            prop_assert_eq!(beta, cap);
        }
        prop_assert!(scale_factor(target, sigma * 1.5 + 1e-3, cap) <= beta);
    }

    #[test]
    fn ewma_variance_is_nonnegative_and_bounded(
        r in proptest::collection::vec(-0.2f64..0.2, 0..80),
        lambda in 0.01f64..0.999,
        n in 1usize..100,
    ) {
        let v = ewma_variance(&r, lambda, n).unwrap();
        let peak = r.iter().map(|x| x * x).fold(0.0, f64::max);
        prop_assert!(v >= 0.0);
        prop_assert!(v <= peak * (1.0 + 1e-12));
    }
}

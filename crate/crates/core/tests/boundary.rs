use proptest::prelude::*;
use wfefc::boundary::*;
use wfefc::measures::{CoalescenceMeasure, SelectionFunction, SplittingMeasure};

fn power_tail_sel(sigma: f64, alpha: f64) -> SelectionFunction {
    let b = alpha * sigma / statrs::function::gamma::gamma(1.0 - alpha);
    SelectionFunction::new(SplittingMeasure::power_tail(b, alpha).unwrap())
}

#[test]
fn rv_and_bd_agree_on_sweep() {
    let mut n = 0;
    for &alpha in &[0.2, 0.35, 0.5, 0.65, 0.8] {
        let (lo, hi) = rv_thresholds(alpha);
        for &ratio in &[0.5 * lo, 0.5 * (lo + hi), 1.5 * hi, 2.0 * hi] {
            let beta = 1.0 - alpha;
            let x = classify_rv(alpha, beta, ratio, 1.0).unwrap();
            let (b, d) = rv_to_bd(alpha, beta, ratio, 1.0).unwrap();
            let nside = classify_bd(alpha, beta, b, d).unwrap();
            assert_eq!(nside.verdict, x.verdict.dual(), "alpha {alpha} ratio {ratio}");
            n += 1;
        }
    }
    assert_eq!(n, 20);
}

#[test]
fn classify_from_measures() {
    let lam = CoalescenceMeasure::power(0.5, 1.0).unwrap();
    let b = 0.5 * 0.85 / std::f64::consts::PI.sqrt();
    let mu = SplittingMeasure::power_tail(b, 0.5).unwrap();
    let v = classify(&lam, &mu).unwrap();
    assert_eq!(v.verdict, Verdict::RegularReflecting);
    assert_eq!(v.dual().verdict, Verdict::RegularForItself);
    assert_eq!(v.dual().target, Target::NAtInfinity);
    let geo = SplittingMeasure::geometric(0.5, 1.0).unwrap();
    let w = classify(&lam, &geo).unwrap();
    assert_eq!(w.verdict, Verdict::Inconclusive);
    assert!(w.evidence.is_empty());
}

#[test]
fn condition_a_power_drift_with_uniform_lambda() {
    // x - f(x) ~ c(1-x)^α and Φ(n) ~ n log n, so (1-x)^{2-α}Φ(1/(1-x)) → 0
    let lam = CoalescenceMeasure::uniform(1.0).unwrap();
    let sel = power_tail_sel(1.0, 0.5);
    let c = 0.5 * sel.gap(wfefc::measures::Pt::from_xy(1.0 - 1e-12, 1e-12)) / sel.total_mass() / 1e-6;
    let rep = check_condition_a(&lam, &sel, |_, y| c * y.sqrt()).unwrap();
    assert!(rep.satisfied(), "{rep:#?}");
    assert_eq!(rep.implies.len(), 2);
    assert!(rep.implies.iter().any(|v| v.target == Target::XAt1 && v.verdict == Verdict::Entrance));
}

#[test]
fn condition_a_lipschitz_minorant_fails_integrability() {
    let lam = CoalescenceMeasure::uniform(1.0).unwrap();
    let sel = SelectionFunction::new(SplittingMeasure::point_mass(2, 1.0).unwrap());
    let rep = check_condition_a(&lam, &sel, |x, y| 0.5 * x * y).unwrap();
    let c = rep.clauses.iter().find(|c| c.clause == "inverse_minorant_integrable").unwrap();
    assert_eq!(c.outcome, Outcome::Fails);
    assert!(!rep.satisfied());
}

#[test]
fn condition_a_rejects_too_large_minorant() {
    let lam = CoalescenceMeasure::uniform(1.0).unwrap();
    let sel = power_tail_sel(1.0, 0.5);
    let rep = check_condition_a(&lam, &sel, |_, y| 100.0 * y.sqrt()).unwrap();
    let c = &rep.clauses[0];
    assert_eq!(c.outcome, Outcome::Fails);
    assert!(c.failing_point.is_some());
}

#[test]
fn condition_a_log_cubic_minorant_literal() {
    // the minorant log(1/(1-x))^{1+α}(1-x)³ has a divergent reciprocal integral
    let lam = CoalescenceMeasure::uniform(1.0).unwrap();
    let sel = power_tail_sel(1.0, 0.5);
    let rep = check_condition_a(&lam, &sel, |_, y| (-y.ln()).powf(1.5) * y * y * y).unwrap();
    let c = rep.clauses.iter().find(|c| c.clause == "inverse_minorant_integrable").unwrap();
    assert_eq!(c.outcome, Outcome::Fails);
}

#[test]
fn exit_integral_finite_for_exit_regime() {
    let lam = CoalescenceMeasure::power(0.5, 1.0).unwrap();
    let sel = power_tail_sel(1.0, 0.7);
    let rep = check_exit_integral(&lam, &sel, None, 100_000).unwrap();
    assert_eq!(rep.finite, Some(true), "{rep:#?}");
    assert!((rep.tail_exponent - (0.7 + 0.5 - 2.0)).abs() < 0.05);
    assert_eq!(rep.verdict.verdict, Verdict::Exit);
    assert_eq!(classify(&lam, sel.measure()).unwrap().verdict, Verdict::Exit);
}

#[test]
fn exit_integral_diverges_in_entrance_regime() {
    let lam = CoalescenceMeasure::power(0.2, 1.0).unwrap();
    let sel = power_tail_sel(1.0, 0.3);
    let rep = check_exit_integral(&lam, &sel, None, 100_000).unwrap();
    assert_eq!(rep.finite, Some(false));
    assert_eq!(rep.verdict.verdict, Verdict::Inconclusive);
}

#[test]
fn exit_integral_uniform_lambda_literal() {
    // integrand (1-x)^{α-2}/log(1/(1-x)): divergent for α < 1, so no conclusion
    let lam = CoalescenceMeasure::uniform(1.0).unwrap();
    let sel = power_tail_sel(1.0, 0.5);
    let rep = check_exit_integral(&lam, &sel, None, 100_000).unwrap();
    assert_eq!(rep.finite, Some(false), "{rep:#?}");
}

#[test]
fn exit_integral_needs_index() {
    let lam = CoalescenceMeasure::power(0.5, 1.0).unwrap();
    let sel = SelectionFunction::new(SplittingMeasure::geometric(0.5, 1.0).unwrap());
    let rep = check_exit_integral(&lam, &sel, None, 1000).unwrap();
    assert_eq!(rep.finite, None);
    assert_eq!(rep.verdict.verdict, Verdict::Inconclusive);
}

#[test]
fn condition_h_entrance_regime() {
    let lam = CoalescenceMeasure::power(0.2, 1.0).unwrap();
    let mu = SplittingMeasure::power_tail(0.5, 0.3).unwrap();
    let rep = check_condition_h(&lam, &mu, |x| x, 1 << 40).unwrap();
    assert!(rep.satisfied(), "{rep:#?}");
    assert!(rep.implies.iter().any(|v| v.target == Target::NAtInfinity && v.verdict == Verdict::Exit));
    assert!(rep.implies.iter().any(|v| v.target == Target::XAt1 && v.verdict == Verdict::Entrance));
}

#[test]
fn condition_h_finite_mean_fails_lower_bound() {
    let lam = CoalescenceMeasure::power(0.2, 1.0).unwrap();
    let mu = SplittingMeasure::geometric(0.5, 1.0).unwrap();
    let rep = check_condition_h(&lam, &mu, |x| x, 1 << 40).unwrap();
    assert_eq!(rep.clauses[0].outcome, Outcome::Fails);
    assert!(!rep.satisfied());
}

#[test]
fn condition_h_exit_regime_ratio_does_not_vanish() {
    let lam = CoalescenceMeasure::power(0.5, 1.0).unwrap();
    let mu = SplittingMeasure::power_tail(0.5, 0.7).unwrap();
    let rep = check_condition_h(&lam, &mu, |x| x, 1 << 40).unwrap();
    let c = rep.clauses.iter().find(|c| c.clause == "phi_over_n_ell_vanishes").unwrap();
    assert_eq!(c.outcome, Outcome::Fails);
}

proptest! {
    #[test]
    fn verdicts_are_dual_across_sides(alpha in 0.05f64..0.95, beta in 0.05f64..0.95, sigma in 0.1f64..10.0, rho in 0.1f64..10.0) {
        let x = classify_rv(alpha, beta, sigma, rho).unwrap();
        let (b, d) = rv_to_bd(alpha, beta, sigma, rho).unwrap();
        let n = classify_bd(alpha, beta, b, d).unwrap();
        prop_assert_eq!(n.verdict, x.verdict.dual());
        prop_assert_eq!(x.dual().verdict.dual(), x.verdict);
        if x.verdict != Verdict::Inconclusive {
            prop_assert!(!x.evidence.is_empty());
        }
    }

    #[test]
    fn critical_line_matches_thresholds(alpha in 0.05f64..0.95, ratio in 0.1f64..20.0) {
        let v = classify_rv(alpha, 1.0 - alpha, ratio, 1.0).unwrap().verdict;
        let (lo, hi) = rv_thresholds(alpha);
        let want = if ratio > hi { Verdict::Entrance } else if ratio > lo { Verdict::RegularReflecting } else { Verdict::Exit };
        prop_assert_eq!(v, want);
    }
}

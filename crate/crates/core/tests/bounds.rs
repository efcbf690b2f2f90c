mod common;

use common::rel_err;
use proptest::prelude::*;
use sibvp::bounds::{
    bound_report, check_hypotheses, compute_mu, compute_s_star, default_mu_end, inverse_bound_formula,
    s_star_integral, u_istar, DEFAULT_EPSILON,
};
use sibvp::ivp::default_budget;
use sibvp::{
    si_march, BoundConstants, BoundsError, ConstantN, InverseSolution, MStarRule, ProblemDef, StopRule,
    TroeschProblem, ZeroN,
};

/// Initial slope used in the worked example for `lambda = 2`.
const SLOPE: f64 = 0.518621219269;

fn troesch2() -> TroeschProblem {
    ProblemDef::troesch(2.0)
}

fn constants() -> BoundConstants {
    BoundConstants::compute(&troesch2(), DEFAULT_EPSILON, SLOPE, MStarRule::Sharp).unwrap()
}

#[test]
fn worked_example_constants() {
    let c = constants();
    let want = [1.0, 0.5654221730, 5.289849576, 4.218574488, 8.48000570];
    let got = [c.s_star, c.m_star, c.l0, c.l1, c.l2];
    for (g, w) in got.iter().zip(want) {
        assert!(rel_err(*g, w) < 1e-6, "{got:?}");
    }
}

#[test]
fn m_star_matches_its_closed_form() {
    let want = 0.5 * (0.5 * (1.3f64.powi(2) - SLOPE * SLOPE) + 1.0).acosh();
    assert!((constants().m_star - want).abs() < 1e-12);
}

#[test]
fn pole_distance_integral() {
    // High-precision value of the integral for lambda = 2 at the worked-example slope.
    let s = s_star_integral(&troesch2(), SLOPE).unwrap();
    assert!((s - 1.383125639776913).abs() < 1e-11, "{s}");
    // The asymptotic pole estimate ln(8 / u'(0)) / lambda is close to it.
    assert!(rel_err(s, 0.5 * (8.0 / SLOPE).ln()) < 0.02);
}

#[test]
fn divergent_pole_integral_falls_back_to_the_interval() {
    let p = ProblemDef::new(ConstantN(1.0), 0.0, 1.0, 0.0, 1.0);
    assert_eq!(s_star_integral(&p, 0.5), Err(BoundsError::DivergentIntegral));
    assert_eq!(compute_s_star(&p, 0.5).unwrap(), 1.0);
}

#[test]
fn p_star_worked_values() {
    let c = constants();
    assert!(rel_err(c.p_star(1e-4), 1675.2) < 5e-3, "{}", c.p_star(1e-4));
    assert!(rel_err(c.p_star(1e-5), 1673.5) < 5e-3, "{}", c.p_star(1e-5));
}

#[test]
fn straight_bound_is_second_order_in_h() {
    let c = constants();
    let mut prev = 0.0;
    // The ratio reaches its asymptotic value 4 once h P* terms are small.
    for k in 2..8 {
        let h = 10f64.powi(-k);
        let b = c.straight_bound(h);
        assert!(b > 0.0);
        let ratio = c.straight_bound(2.0 * h) / b;
        assert!((3.5..=4.5).contains(&ratio), "h = {h}: ratio {ratio}");
        if k > 2 {
            assert!(b < prev);
        }
        prev = b;
    }
}

#[test]
fn mu_for_constant_n_is_attained_at_the_stationary_point() {
    // For N = c the ratio c u / (1 + c (u^2 - u*^2) / 2) peaks at u = sqrt(2 / c - u*^2) with value 1 / u.
    let (c, us) = (2.0, 0.2);
    let p = ProblemDef::new(ConstantN(c), 0.0, 1.0, 0.0, 1.0);
    let mu = compute_mu(&p, us, default_mu_end(&p, us)).unwrap();
    let at = (2.0 / c - us * us).sqrt();
    assert!(rel_err(mu.value, 1.0 / at) < 1e-6, "{mu:?}");
    assert!((mu.at - at).abs() < 1e-2);
}

#[test]
fn hypotheses_hold_for_troesch_and_fail_for_negative_n() {
    let h = check_hypotheses(&troesch2(), 0.0, 1.0);
    assert!(h.n_positive && h.n_derivatives_nonnegative);
    let neg = ProblemDef::new(ConstantN(-1.0), 0.0, 1.0, 0.0, 1.0);
    assert!(!check_hypotheses(&neg, 0.0, 1.0).n_positive);
}

#[test]
fn trace_without_inverse_phase_is_reported() {
    let p = ProblemDef::new(ZeroN, 0.0, 1.0, 0.0, 1.0);
    let t = si_march(&p, 0.0, 0.5, 1e-2, &StopRule::for_problem(&p, 1e-2)).unwrap();
    assert_eq!(u_istar(&t), Err(BoundsError::NoInversePhase));
}

#[test]
fn invalid_inputs_are_rejected() {
    let p = troesch2();
    assert!(matches!(
        BoundConstants::compute(&p, 0.2, SLOPE, MStarRule::Sharp),
        Err(BoundsError::InvalidEpsilon(_))
    ));
    assert!(matches!(s_star_integral(&p, -1.0), Err(BoundsError::InvalidSlope(_))));
}

#[test]
fn report_includes_knot_bounds_when_restrictions_hold() {
    let p = troesch2();
    let h = 1e-4;
    let t = si_march(&p, 0.0, SLOPE, h, &StopRule::for_problem(&p, h)).unwrap();
    let r = bound_report(&p, DEFAULT_EPSILON, SLOPE, MStarRule::Sharp, h, Some(&t)).unwrap();
    assert!(r.h_restrictions_satisfied);
    assert_eq!(r.per_knot_bounds.unwrap().len(), t.inverse_suffix().len());
    let coarse = bound_report(&p, DEFAULT_EPSILON, SLOPE, MStarRule::Sharp, 1e-3, Some(&t)).unwrap();
    assert!(!coarse.h_restrictions_satisfied && coarse.per_knot_bounds.is_none());
}

/// Largest ratio of observed error to bound over the straight and inverse phases.
fn worst_ratio(h: f64) -> (f64, f64) {
    let p = troesch2();
    let c = constants();
    let slope = sibvp::exact_slope(&p).unwrap();
    let sol = InverseSolution::new(&p, 0.0, slope).unwrap();
    let t = si_march(&p, 0.0, slope, h, &StopRule::new(1.0, Some(11.0), default_budget(h))).unwrap();
    let (mut straight, mut x_ref, mut u_ref) = (0.0f64, 0.0, 0.0);
    for k in t.straight_prefix() {
        let u = sol.u_of_x_near(k.x, k.u, u_ref, x_ref).unwrap();
        let e = (u - k.u).abs().max((sol.slope(u).unwrap() - k.u_prime).abs());
        straight = straight.max(e / c.straight_bound(h));
        (u_ref, x_ref) = (u, k.x);
    }
    let u0 = u_istar(&t).unwrap();
    let us: Vec<f64> = t.inverse_suffix().iter().map(|k| k.u).collect();
    let bounds = inverse_bound_formula(&p, &c, u0, &us, h).unwrap();
    let xs = sol.x_of_sorted(&us).unwrap();
    let mut inverse = 0.0f64;
    for ((k, b), x) in t.inverse_suffix().iter().zip(&bounds).zip(&xs) {
        let xp = 1.0 / sol.slope(k.u).unwrap();
        inverse = inverse.max((k.x - x).abs() / b.x_err).max((k.x_prime - xp).abs() / b.xp_err);
    }
    (straight, inverse)
}

#[test]
fn bounds_dominate_observed_errors() {
    let (s, i) = worst_ratio(1e-3);
    assert!(s <= 1.0 && i <= 1.0, "straight {s}, inverse {i}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn knot_bounds_are_positive_and_grow_with_u(h in 1e-4..1e-3f64, n in 2..40usize) {
        let c = constants();
        let u0 = 0.4;
        let us: Vec<f64> = (1..=n).map(|j| u0 + 0.6 * j as f64 / n as f64).collect();
        let b = inverse_bound_formula(&troesch2(), &c, u0, &us, h).unwrap();
        prop_assert!(b.iter().all(|k| k.x_err > 0.0 && k.xp_err > 0.0));
        prop_assert!(b.windows(2).all(|w| w[1].x_err >= w[0].x_err && w[1].xp_err >= w[0].xp_err));
    }
}

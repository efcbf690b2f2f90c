mod common;

use common::{central_diff, rel_err, rk_u};
use proptest::prelude::*;
use sibvp::quad;
use sibvp::step_fn::{
    default_tol, u_increment_bound, u_iterates, u_step_grad, v_increment_bound, v_iterates, v_step_grad, StepGradient,
};
use sibvp::{u_step, v_step, Dual, StepArgs, StepError};

fn args(a: f64, b: f64, c: f64, d: f64, s: f64) -> StepArgs<f64> {
    StepArgs::new(a, b, c, d, s)
}

fn u(a: &StepArgs<f64>) -> (f64, f64) {
    let r = u_step(a, default_tol(a)).unwrap();
    (r.value, r.deriv_s)
}

fn v(a: &StepArgs<f64>) -> (f64, f64) {
    let r = v_step(a, default_tol(a)).unwrap();
    (r.value, r.deriv_s)
}

/// `(V(s), V'(s))` from the closed form `V' = C exp(A s^2 / 2 + B s)`.
fn v_closed(a: f64, b: f64, c: f64, d: f64, s: f64) -> (f64, f64) {
    let g = |t: f64| (a * t * t / 2.0 + b * t).exp();
    (d + c * quad::composite(32, 0.0, s, 16, g), c * g(s))
}

/// Error relative to the data scale `|D| + |C s|` or the reference, whichever is larger.
fn scaled_err(got: f64, want: f64, scale: f64) -> f64 {
    if got == want {
        return 0.0;
    }
    (got - want).abs() / want.abs().max(scale)
}

#[test]
fn u_vanishing_coefficients_give_a_line() {
    for s in [-0.7, -0.1, 0.0, 0.25, 1.0] {
        assert_eq!(u(&args(0.0, 0.0, 1.5, -2.0, s)), (1.5 * s - 2.0, 1.5));
    }
}

#[test]
fn u_at_zero_step_returns_initial_data() {
    let r = u_step(&args(0.0, 1.0, 0.0, 1.0, 0.0), 1e-15).unwrap();
    assert_eq!((r.value, r.deriv_s, r.terms_used), (1.0, 0.0, 0));
}

#[test]
fn u_matches_runge_kutta_example() {
    let (val, der) = u(&args(0.5, 1.2, 0.3, 0.7, 0.1));
    let (rv, rd) = rk_u(0.5, 1.2, 0.3, 0.7, 0.1);
    assert!(rel_err(val, rv) < 1e-10, "{val} vs {rv}");
    assert!(rel_err(der, rd) < 1e-10, "{der} vs {rd}");
}

#[test]
fn v_vanishing_coefficients_give_a_line() {
    assert_eq!(v(&args(0.0, 0.0, -0.5, 3.0, 0.4)), (-0.5 * 0.4 + 3.0, -0.5));
}

#[test]
fn v_derivative_matches_closed_form_example() {
    let (_, der) = v(&args(-2.0, 0.5, 1.0, 0.0, 0.2));
    assert!(rel_err(der, (-2.0f64 * 0.04 / 2.0 + 0.5 * 0.2).exp()) < 1e-10);
}

#[test]
fn v_value_matches_quadrature_example() {
    let (val, _) = v(&args(-1.0, 0.0, 1.0, 0.0, 0.3));
    let want = quad::adaptive(|t| (-t * t / 2.0).exp(), 0.0, 0.3, 1e-15, 1e-15).unwrap();
    assert!((val - want).abs() < 1e-10);
}

#[test]
fn steps_beyond_one_are_rejected() {
    assert!(matches!(
        u_step(&args(0.0, 0.0, 1.0, 0.0, 1.5), 1e-15),
        Err(StepError::InvalidStep { .. })
    ));
    assert!(matches!(
        v_step(&args(0.0, 0.0, 1.0, 0.0, -1.01), 1e-15),
        Err(StepError::InvalidStep { .. })
    ));
}

#[test]
fn u_gradient_in_the_linear_case() {
    let g = u_step_grad(&args(0.0, 0.0, 0.4, 0.9, 0.3), 1e-15).unwrap();
    assert_eq!(g.d_c, 0.3);
    assert_eq!(g.d_d, 1.0);
}

#[test]
fn v_gradient_in_the_linear_case() {
    let g = v_step_grad(&args(0.0, 0.0, 0.4, 0.9, 0.3), 1e-15).unwrap();
    assert_eq!(g.d_c, 0.3);
    assert_eq!(g.d_d, 1.0);
    let g = v_step_grad(&args(1.3, -0.7, 2.0, 0.9, -0.4), 1e-15).unwrap();
    assert_eq!(g.d_d, 1.0);
}

/// Central differences of `value` in each of the four parameters.
fn fd_partials(f: impl Fn(&StepArgs<f64>) -> f64, p: &StepArgs<f64>, step: f64) -> [f64; 4] {
    let mut out = [0.0; 4];
    for (k, o) in out.iter_mut().enumerate() {
        let at = |t: f64| {
            let mut q = *p;
            *[&mut q.a, &mut q.b, &mut q.c, &mut q.d][k] = t;
            f(&q)
        };
        let x0 = [p.a, p.b, p.c, p.d][k];
        *o = central_diff(at, x0, step);
    }
    out
}

fn check_partials(g: &StepGradient<f64>, fd: [f64; 4], tol: f64) {
    for (k, (got, want)) in [g.d_a, g.d_b, g.d_c, g.d_d].into_iter().zip(fd).enumerate() {
        let err = (got - want).abs() / want.abs().max(1e-3);
        assert!(err < tol, "partial {k}: {got} vs {want}");
    }
}

#[test]
fn u_partials_match_finite_differences() {
    let p = args(0.5, 1.2, 0.3, 0.7, 0.1);
    let g = u_step_grad(&p, 1e-16).unwrap();
    check_partials(&g, fd_partials(|q| u(q).0, &p, 1e-6), 1e-6);
}

#[test]
fn v_partials_match_finite_differences() {
    let p = args(-2.0, 0.5, 1.0, 0.0, 0.2);
    let g = v_step_grad(&p, 1e-16).unwrap();
    check_partials(&g, fd_partials(|q| v(q).0, &p, 1e-6), 1e-6);
}

#[test]
fn tail_bound_never_grows_with_depth() {
    let p = args(2.5, -1.0, 0.8, 1.1, 0.6);
    let bounds: Vec<f64> = (1..20)
        .map(|n| sibvp::step_fn::u_step_terms(&p, n).unwrap().tail_bound)
        .collect();
    assert!(bounds.windows(2).all(|w| w[1] <= w[0]), "{bounds:?}");
}

/// Rounding error of a difference of two accumulated iterates near `v`.
fn rounding(v: f64) -> f64 {
    8.0 * f64::EPSILON * v.abs()
}

fn coeff() -> impl Strategy<Value = f64> {
    -3.0..3.0f64
}

fn step() -> impl Strategy<Value = f64> {
    -0.5..0.5f64
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn u_agrees_with_runge_kutta(a in coeff(), b in coeff(), c in coeff(), d in coeff(), s in step()) {
        let p = args(a, b, c, d, s);
        let (val, der) = u(&p);
        let (rv, rd) = rk_u(a, b, c, d, s);
        let scale = d.abs() + (c * s).abs();
        prop_assert!(scaled_err(val, rv, scale) < 1e-9, "{val} vs {rv}");
        prop_assert!(scaled_err(der, rd, c.abs().max(scale)) < 1e-9, "{der} vs {rd}");
    }

    #[test]
    fn v_agrees_with_closed_form(a in coeff(), b in coeff(), c in coeff(), d in coeff(), s in step()) {
        let (val, der) = v(&args(a, b, c, d, s));
        let (cv, cd) = v_closed(a, b, c, d, s);
        prop_assert!(scaled_err(der, cd, 0.0) < 1e-9, "{der} vs {cd}");
        prop_assert!(scaled_err(val, cv, d.abs() + (c * s).abs()) < 1e-9, "{val} vs {cv}");
    }

    #[test]
    fn u_increments_respect_the_bound(a in coeff(), b in coeff(), c in coeff(), d in coeff(), s in step()) {
        let p = args(a, b, c, d, s);
        let it = u_iterates(&p, 12);
        for n in 0..12 {
            let inc = (it[n + 1] - it[n]).abs();
            prop_assert!(inc <= u_increment_bound(&p, n) + rounding(it[n + 1]), "n={n}");
        }
    }

    #[test]
    fn v_increments_respect_the_bound(a in coeff(), b in coeff(), c in coeff(), d in coeff(), s in step()) {
        let p = args(a, b, c, d, s);
        let it = v_iterates(&p, 20);
        for n in 0..20 {
            let inc = (it[n + 1] - it[n]).abs();
            prop_assert!(inc <= v_increment_bound(&p, n) + rounding(it[n + 1]), "n={n}");
        }
    }

    #[test]
    fn u_is_linear_in_initial_data(
        a in coeff(), b in coeff(), c1 in coeff(), d1 in coeff(), c2 in coeff(), d2 in coeff(),
        al in -2.0..2.0f64, be in -2.0..2.0f64, s in step(),
    ) {
        let tol = 1e-18;
        let one = |c, d| u_step(&args(a, b, c, d, s), tol).unwrap().value;
        let lhs = one(al * c1 + be * c2, al * d1 + be * d2);
        let rhs = al * one(c1, d1) + be * one(c2, d2);
        let scale = (al * one(c1, d1)).abs() + (be * one(c2, d2)).abs();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * scale.max(1e-3));
    }

    #[test]
    fn u_satisfies_its_equation(a in coeff(), b in coeff(), c in coeff(), d in coeff(), s in -0.45..0.45f64) {
        let delta = 1e-4;
        let at = |t| u_step(&args(a, b, c, d, t), 1e-18).unwrap().value;
        let second = (at(s + delta) - 2.0 * at(s) + at(s - delta)) / (delta * delta);
        prop_assert!((second - (a * s + b) * at(s)).abs() < 1e-4);
    }

    #[test]
    fn dual_partials_match_finite_differences(
        a in coeff(), b in coeff(), c in coeff(), d in coeff(), s in step(),
    ) {
        let p = args(a, b, c, d, s);
        let gu = u_step_grad(&p, 1e-16).unwrap();
        check_partials(&gu, fd_partials(|q| u(q).0, &p, 1e-6), 1e-6);
        let gv = v_step_grad(&p, 1e-16).unwrap();
        check_partials(&gv, fd_partials(|q| v(q).0, &p, 1e-6), 1e-6);
    }

    #[test]
    fn dual_values_reproduce_real_runs(a in coeff(), b in coeff(), c in coeff(), d in coeff(), s in step()) {
        let p = args(a, b, c, d, s);
        let lifted = StepArgs::new(Dual::constant(a), Dual::constant(b), Dual::constant(c), Dual::constant(d), s);
        for n in [1, 4, 9] {
            let r = sibvp::step_fn::u_step_terms(&p, n).unwrap();
            let l = sibvp::step_fn::u_step_terms(&lifted, n).unwrap();
            prop_assert_eq!(r.value.to_bits(), l.value.val.to_bits());
            prop_assert_eq!(r.deriv_s.to_bits(), l.deriv_s.val.to_bits());
        }
    }
}

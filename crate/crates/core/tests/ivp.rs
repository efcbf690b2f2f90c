mod common;

use common::central_diff;
use proptest::prelude::*;
use sibvp::ivp::{default_budget, si_march_dual, si_march_end};
use sibvp::{
    exact_slope, si_march, si_march_trace, ConstantN, Dual, IvpError, ProblemDef, Regime, StepRule, StopReason,
    StopRule, ZeroN,
};

fn line() -> ProblemDef<ZeroN> {
    ProblemDef::new(ZeroN, 0.0, 1.0, 0.0, 1.0)
}

fn troesch_end(lambda: f64, slope: f64, h: f64) -> f64 {
    let p = ProblemDef::troesch(lambda);
    si_march_end(&p, 0.0, slope, h, &StopRule::for_problem(&p, h)).unwrap().last.u
}

#[test]
fn zero_nonlinearity_gives_the_line() {
    let p = line();
    let t = si_march(&p, 0.25f64, 0.5, 1e-2, &StopRule::for_problem(&p, 1e-2)).unwrap();
    assert_eq!(t.stop_reason, StopReason::ReachedXEnd);
    assert_eq!(t.i_star, None);
    for k in &t.knots {
        assert!((k.u - (0.25 + 0.5 * k.x)).abs() < 1e-14, "{k:?}");
        assert_eq!(k.u_prime, 0.5);
    }
    assert_eq!(t.last().x, 1.0);
}

#[test]
fn troesch_two_with_exact_slope_hits_the_boundary_value() {
    let p = ProblemDef::troesch(2.0);
    let h = 1e-4;
    let slope = exact_slope(&p).unwrap();
    let t = si_march(&p, 0.0, slope, h, &StopRule::for_problem(&p, h)).unwrap();
    assert!((t.last().u - 1.0).abs() < 2e-6, "u(1) = {}", t.last().u);
    for (j, k) in t.straight_prefix().iter().enumerate() {
        assert_eq!(k.x, j as f64 * h, "knot {j}");
    }
}

#[test]
fn uniform_inverse_steps_are_equal_in_u() {
    let p = ProblemDef::troesch(5.0);
    let h = 1e-3;
    let slope = exact_slope(&p).unwrap();
    let t = si_march(&p, 0.0, slope, h, &StopRule::for_problem(&p, h)).unwrap();
    let inv = t.inverse_suffix();
    assert!(inv.len() > 2);
    let du: Vec<f64> = inv.windows(2).map(|w| w[1].u - w[0].u).collect();
    // The final step is shortened to land on x_end.
    for d in &du[..du.len() - 1] {
        assert!((d - du[0]).abs() < 1e-12, "{d} vs {}", du[0]);
    }
}

#[test]
fn dual_march_matches_finite_differences() {
    let p = ProblemDef::troesch(2.0);
    let h = 1e-3;
    let slope = 0.5186;
    let stop = StopRule::for_problem(&p, h);
    let t = si_march_dual(&p, Dual::constant(0.0), Dual::variable(slope), h, &stop).unwrap();
    let fd = central_diff(|s| troesch_end(2.0, s, h), slope, 1e-7);
    let der = t.last().u.der;
    assert!((der - fd).abs() < 1e-5 * fd.abs(), "{der} vs {fd}");
}

#[test]
fn zero_seeded_dual_march_reproduces_the_real_march_bitwise() {
    let p = ProblemDef::troesch(5.0);
    let h = 1e-3;
    let stop = StopRule::for_problem(&p, h);
    let slope = 0.0457;
    let real = si_march_trace(&p, 0.0, slope, h, &stop).unwrap();
    let dual = si_march_trace(&p, Dual::constant(0.0), Dual::constant(slope), h, &stop).unwrap();
    assert_eq!(real.len(), dual.len());
    for (r, d) in real.knots.iter().zip(&dual.knots) {
        assert_eq!(r.u.to_bits(), d.u.val.to_bits());
        assert_eq!(r.x.to_bits(), d.x.val.to_bits());
        assert_eq!(r.u_prime.to_bits(), d.u_prime.val.to_bits());
        assert_eq!(r.x_prime.to_bits(), d.x_prime.val.to_bits());
        assert_eq!(d.u.der, 0.0);
    }
}

#[test]
fn regime_switches_once_when_the_slope_passes_one() {
    for lambda in [2.0, 5.0, 10.0] {
        let p = ProblemDef::troesch(lambda);
        let h = 1e-3;
        let slope = exact_slope(&p).unwrap();
        let t = si_march(&p, 0.0, slope, h, &StopRule::for_problem(&p, h)).unwrap();
        let i = t.i_star.expect("inverse phase");
        assert!(t.knots[..i].iter().all(|k| k.regime == Regime::Straight));
        assert!(t.knots[i..].iter().all(|k| k.regime == Regime::Inverse));
        assert!(t.knots[i - 1].u_prime >= 1.0 && t.knots[i - 2].u_prime < 1.0, "lambda {lambda}");
        let inv = t.inverse_suffix();
        assert!(inv.windows(2).all(|w| w[1].u > w[0].u && w[1].x >= w[0].x), "lambda {lambda}");
        assert!(inv.iter().all(|k| k.x_prime > 0.0 && k.x_prime <= 1.0));
    }
}

#[test]
fn marching_backwards_reproduces_the_start() {
    // u'' = u is reversible: marching the end state back over [0, 1] returns to (u0, u'0).
    let k = 1.0;
    let fwd = ProblemDef::new(ConstantN(k), 0.0, 1.0, 0.0, 1.0);
    let h = 1e-3;
    let t = si_march(&fwd, 0.3f64, -0.2, h, &StopRule::new(1.0, None, default_budget(h))).unwrap();
    let end = t.last();
    assert_eq!(end.regime, Regime::Straight);
    // x -> 1 - x maps the backward march onto a forward one with the slope negated.
    let back = si_march(&fwd, end.u, -end.u_prime, h, &StopRule::new(1.0, None, default_budget(h))).unwrap();
    assert!((back.last().u - 0.3).abs() < 1e-10, "{}", back.last().u);
    assert!((back.last().u_prime - 0.2).abs() < 1e-10, "{}", back.last().u_prime);
}

#[test]
fn endpoint_error_is_second_order() {
    let p = ProblemDef::troesch(2.0);
    let slope = exact_slope(&p).unwrap();
    let errs: Vec<f64> = [4e-3, 2e-3, 1e-3]
        .iter()
        .map(|&h| troesch_end(2.0, slope, h) - 1.0)
        .collect();
    for w in errs.windows(2) {
        let ratio = w[0] / w[1];
        assert!((ratio - 4.0).abs() < 0.5, "ratio {ratio}, errors {errs:?}");
    }
}

#[test]
fn knot_count_scales_inversely_with_h() {
    let p = ProblemDef::troesch(10.0);
    let slope = exact_slope(&p).unwrap();
    let counts: Vec<f64> = [1e-2, 1e-3, 1e-4]
        .iter()
        .map(|&h| {
            let stop = StopRule::for_problem(&p, h);
            si_march_end(&p, 0.0, slope, h, &stop).unwrap().knots as f64 * h
        })
        .collect();
    for w in counts.windows(2) {
        assert!((w[0] / w[1] - 1.0).abs() < 0.1, "{counts:?}");
    }
}

#[test]
fn arc_length_steps_are_about_h_long() {
    let p = ProblemDef::troesch(10.0);
    let h = 1e-3;
    let slope = exact_slope(&p).unwrap();
    let stop = StopRule::for_problem(&p, h).with_step_rule(StepRule::ArcLength);
    let t = si_march(&p, 0.0, slope, h, &stop).unwrap();
    let lens: Vec<f64> = t.knots.windows(2).map(|w| (w[1].x - w[0].x).hypot(w[1].u - w[0].u)).collect();
    for l in &lens[..lens.len() - 1] {
        assert!((l / h - 1.0).abs() < 0.05, "step length {l}");
    }
}

#[test]
fn overshooting_slope_blows_up() {
    let p = ProblemDef::troesch(10.0);
    let h = 1e-3;
    let err = si_march(&p, 0.0, 1.0, h, &StopRule::for_problem(&p, h)).unwrap_err();
    assert!(matches!(err, IvpError::BlowUp { .. }), "{err}");
}

#[test]
fn knot_budget_is_enforced() {
    let p = line();
    let err = si_march(&p, 0.0, 0.5, 1e-3, &StopRule::new(1.0, None, 10)).unwrap_err();
    assert!(matches!(err, IvpError::BudgetExhausted { knots: 10, .. }), "{err}");
}

#[test]
fn csv_has_one_row_per_knot() {
    let p = ProblemDef::troesch(2.0);
    let t = si_march(&p, 0.0, 0.5186, 0.1, &StopRule::for_problem(&p, 0.1)).unwrap();
    let mut buf = Vec::new();
    t.write_csv(&mut buf).unwrap();
    let mut r = csv::Reader::from_reader(buf.as_slice());
    assert_eq!(r.headers().unwrap(), vec!["i", "regime", "x", "u", "u_prime", "x_prime"]);
    assert_eq!(r.records().count(), t.len());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn linear_problem_matches_hyperbolic_solution(k in 0.1..4.0f64, c in -1.0..1.0f64, d in -1.0..1.0f64) {
        let p = ProblemDef::new(ConstantN(k), 0.0, 1.0, 0.0, 1.0);
        let h = 1e-3;
        let t = si_march_trace(&p, d, c, h, &StopRule::new(1.0, None, default_budget(h))).unwrap();
        let r = k.sqrt();
        for kn in t.knots.iter().step_by(97) {
            if kn.regime == Regime::Straight {
                let exact = d * (r * kn.x).cosh() + c / r * (r * kn.x).sinh();
                prop_assert!((kn.u - exact).abs() < 1e-6 * (1.0 + exact.abs()), "{kn:?} vs {exact}");
            }
        }
    }

    #[test]
    fn straight_knots_interpolate_monotonically(lambda in 1.0..8.0f64) {
        let p = ProblemDef::troesch(lambda);
        let h = 1e-3;
        let slope = exact_slope(&p).unwrap();
        let t = si_march(&p, 0.0, slope, h, &StopRule::for_problem(&p, h)).unwrap();
        prop_assert!(t.knots.windows(2).all(|w| w[1].u >= w[0].u && w[1].x >= w[0].x));
        let mut prev = 0.0;
        for j in 1..50 {
            let u = t.u_at(j as f64 / 50.0).unwrap();
            prop_assert!(u >= prev);
            prev = u;
        }
    }
}

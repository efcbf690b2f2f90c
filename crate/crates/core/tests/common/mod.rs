#![allow(dead_code)]

use ode_solvers::{Dopri5, OutputType, System, Vector2};

/// `u'' = (A t + B) u`.
struct Linear {
    a: f64,
    b: f64,
}

impl System<f64, Vector2<f64>> for Linear {
    fn system(&self, t: f64, y: &Vector2<f64>, dy: &mut Vector2<f64>) {
        dy[0] = y[1];
        dy[1] = (self.a * t + self.b) * y[0];
    }
}

/// `(u(s), u'(s))` for `u'' = (A t + B) u`, `u(0) = D`, `u'(0) = C`, by the adaptive
/// Dormand-Prince 5(4) method at tolerance 1e-13, reading the last accepted step.
pub fn rk_u(a: f64, b: f64, c: f64, d: f64, s: f64) -> (f64, f64) {
    if s == 0.0 {
        return (d, c);
    }
    // t -> -t maps the problem onto positive time.
    let (a, c, sign) = if s < 0.0 { (-a, -c, -1.0) } else { (a, c, 1.0) };
    let span = s.abs();
    let y0 = Vector2::new(d, c);
    let mut solver = Dopri5::from_param(
        Linear { a, b },
        0.0,
        span,
        span,
        y0,
        1e-13,
        1e-15,
        0.9,
        0.04,
        0.2,
        10.0,
        span / 10.0,
        0.0,
        100_000,
        u32::MAX,
        OutputType::Sparse,
    );
    if let Err(e) = solver.integrate() {
        panic!("reference integration failed: {e:?}");
    }
    assert_eq!(solver.x_out().last(), Some(&span), "reference output ends at the step");
    let y = solver.y_out().last().expect("at least one output");
    (y[0], sign * y[1])
}

/// `(f(x + d) - f(x - d)) / 2d`.
pub fn central_diff(f: impl Fn(f64) -> f64, x: f64, d: f64) -> f64 {
    (f(x + d) - f(x - d)) / (2.0 * d)
}

pub fn rel_err(got: f64, want: f64) -> f64 {
    (got - want).abs() / want.abs().max(f64::MIN_POSITIVE)
}

/// Relative error, switching to absolute when `|want| < floor`.
pub fn mixed_err(got: f64, want: f64, floor: f64) -> f64 {
    (got - want).abs() / want.abs().max(floor)
}

/// Published `u'(0)` at `h = 1e-4` and `h = 1e-5`.
pub const SLOPES0: [(f64, f64, f64); 9] = [
    (2.0, 0.518621219577035, 0.518621219272419),
    (3.0, 0.255604216455332, 0.255604215571849),
    (5.0, 4.575046196263e-02, 4.575046141188e-02),
    (8.0, 2.587169500425e-03, 2.587169419777e-03),
    (20.0, 1.648773647e-08, 1.648773188e-08),
    (30.0, 7.486098431e-13, 7.486093844e-13),
    (50.0, 1.543002448e-21, 1.542999906e-21),
    (61.0, 2.577078525e-26, 2.577072299e-26),
    (100.0, 2.976075557e-43, 2.976060927e-43),
];

/// Published `u'(1)` at `h = 1e-4` and `h = 1e-5`.
pub const SLOPES1: [(f64, f64, f64); 8] = [
    (2.0, 2.40693982969129, 2.4069398312315),
    (3.0, 4.26622285457896, 4.2662228617306),
    (5.0, 12.1004954359128, 12.1004954506293),
    (8.0, 54.5798344412402, 54.5798344554302),
    (10.0, 148.406421145524, 148.406421155906),
    (20.0, 22026.4657494062, 22026.4657494068),
    (30.0, 3269017.37247181, 3269017.3724718),
    (50.0, 72004899337.3858, 72004899337.386),
];

/// Published `u(x)` for `lambda = 10` at `h = 1e-4` and `h = 1e-5`.
pub const TROESCH10: [(f64, f64, f64); 5] = [
    (0.1, 4.21119023173e-05, 4.21118993037e-05),
    (0.2, 1.29964125220e-04, 1.29964115920e-04),
    (0.3, 3.58978427345e-04, 3.58978401657e-04),
    (0.4, 9.77902842508e-04, 9.77902772532e-04),
    (0.5, 2.659020682593e-03, 2.65902049234e-03),
];

/// Published `lambda = 100` multiple-shooting runs: `(h, u'(0), knots)`.
pub const TROESCH100: [(f64, f64, usize); 3] = [
    (1e-2, 3.141990565e-43, 240),
    (1e-3, 2.977378936e-43, 2208),
    (1e-4, 2.976075557e-43, 21753),
];

/// Reference `u'(0)` for `lambda = 100`.
pub const TROESCH100_REFERENCE: f64 = 2.976060781e-43;

//! Closed-form inverse solution of autonomous problems, evaluated by quadrature.
//!
//! For `u'' = N(u) u` with `u(a) = u0`, `u'(a) = du0` the first integral gives
//! `u'(u)^2 = du0^2 + 2 int_{u0}^{u} N(xi) xi d xi`, hence
//! `x(u) = a + int_{u0}^{u} d eta / u'(eta)` while the solution stays monotone.

use thiserror::Error;

use crate::problem::{Nonlinearity, ProblemDef};
use crate::quad::{self, QuadError};

const REL_TOL: f64 = 1e-14;
const ABS_TOL: f64 = 1e-18;
/// Smallest slope magnitude tried by [`exact_slope`]; its square is still a normal float.
pub const MIN_SLOPE: f64 = 1e-150;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum OracleError {
    #[error("the nonlinearity depends on x")]
    NotAutonomous,
    #[error("initial slope must be finite and nonzero")]
    ZeroSlope,
    #[error("the solution turns back before u = {u}")]
    TurningPoint { u: f64 },
    #[error(transparent)]
    Quadrature(#[from] QuadError),
    #[error("no slope brackets the boundary condition")]
    NoBracket,
}

/// The inverse solution `x(u)` through `(a, u0)` with slope `du0`.
#[derive(Debug, Clone, Copy)]
pub struct InverseSolution<'p, N> {
    problem: &'p ProblemDef<N>,
    pub u0: f64,
    pub du0: f64,
}

impl<'p, N: Nonlinearity> InverseSolution<'p, N> {
    pub fn new(problem: &'p ProblemDef<N>, u0: f64, du0: f64) -> Result<Self, OracleError> {
        if !problem.nonlinearity.x_independent() {
            return Err(OracleError::NotAutonomous);
        }
        if !(du0.is_finite() && du0 != 0.0) {
            return Err(OracleError::ZeroSlope);
        }
        Ok(InverseSolution { problem, u0, du0 })
    }

    /// `int_{u0}^{u} N(xi) xi d xi`.
    pub fn energy(&self, u: f64) -> Result<f64, OracleError> {
        if let Some(e) = self.problem.nonlinearity.energy_integral(self.u0, u) {
            return Ok(e);
        }
        let a = self.problem.a;
        let f = |xi: f64| self.problem.n(xi, a) * xi;
        Ok(quad::adaptive(f, self.u0, u, ABS_TOL, REL_TOL)?)
    }

    /// `u'` as a function of `u`, carrying the sign of `du0`.
    pub fn slope(&self, u: f64) -> Result<f64, OracleError> {
        let r = self.du0 * self.du0 + 2.0 * self.energy(u)?;
        if r.is_nan() || r < 0.0 {
            return Err(OracleError::TurningPoint { u });
        }
        Ok(self.du0.signum() * r.sqrt())
    }

    /// `u''` as a function of `u`.
    pub fn second_derivative(&self, u: f64) -> f64 {
        self.problem.n(u, self.problem.a) * u
    }

    /// `int_{u_from}^{u_to} d eta / u'(eta)`.
    pub fn x_between(&self, u_from: f64, u_to: f64) -> Result<f64, OracleError> {
        if u_from == u_to {
            return Ok(0.0);
        }
        let dir = (u_to - u_from).signum();
        if dir != self.du0.signum() {
            return Err(OracleError::TurningPoint { u: u_to });
        }
        let points = self.breakpoints(u_from, u_to);
        let mut bad = None;
        let f = |eta: f64| match self.slope(eta) {
            Ok(s) if s != 0.0 => 1.0 / s,
            _ => {
                bad = Some(eta);
                f64::NAN
            }
        };
        let v = quad::adaptive_pieces(f, &points, ABS_TOL, REL_TOL);
        if let Some(u) = bad {
            return Err(OracleError::TurningPoint { u });
        }
        Ok(v?)
    }

    /// `x(u)`.
    pub fn x_of_u(&self, u: f64) -> Result<f64, OracleError> {
        Ok(self.problem.a + self.x_between(self.u0, u)?)
    }

    /// `x` at each of the monotonically ordered `us`, accumulated piece by piece.
    pub fn x_of_sorted(&self, us: &[f64]) -> Result<Vec<f64>, OracleError> {
        let mut out = Vec::with_capacity(us.len());
        let (mut u_prev, mut x_prev) = (self.u0, self.problem.a);
        for &u in us {
            x_prev += self.x_between(u_prev, u)?;
            u_prev = u;
            out.push(x_prev);
        }
        Ok(out)
    }

    /// Solves `x(u) = x` by Newton's method from `guess`, given one exact pair `(u_ref, x_ref)`.
    pub fn u_of_x_near(&self, x: f64, guess: f64, u_ref: f64, x_ref: f64) -> Result<f64, OracleError> {
        let mut u = guess;
        for _ in 0..50 {
            let xu = x_ref + self.x_between(u_ref, u)?;
            let du = (x - xu) * self.slope(u)?;
            let next = u + du;
            // Keep the iterate on the admissible side of u_ref.
            let next = if (next - u_ref) * self.du0 < 0.0 {
                0.5 * (u + u_ref)
            } else {
                next
            };
            if (next - u).abs() <= 4.0 * f64::EPSILON * next.abs().max(f64::MIN_POSITIVE) {
                return Ok(next);
            }
            u = next;
        }
        Ok(u)
    }

    /// `u(x)`; starts Newton from the linear guess `u0 + du0 (x - a)` clipped to be monotone.
    pub fn u_of_x(&self, x: f64) -> Result<f64, OracleError> {
        if x == self.problem.a {
            return Ok(self.u0);
        }
        let guess = self.u0 + self.du0 * (x - self.problem.a);
        self.u_of_x_near(x, guess, self.u0, self.problem.a)
    }

    /// Interior breakpoints on a geometric ladder from the scale `|du0| / sqrt(N(u0))`.
    fn breakpoints(&self, u_from: f64, u_to: f64) -> Vec<f64> {
        let n0 = self.problem.n(self.u0, self.problem.a).abs();
        let scale = if n0 > 0.0 {
            self.du0.abs() / n0.sqrt()
        } else {
            (u_to - u_from).abs()
        };
        let dir = (u_to - u_from).signum();
        let mut pts = vec![u_from];
        let mut step = scale;
        while step.is_finite() && step > 0.0 {
            let p = self.u0 + dir * step;
            if (p - u_to) * dir >= 0.0 {
                break;
            }
            if (p - u_from) * dir > 0.0 {
                pts.push(p);
            }
            step *= 10.0;
        }
        pts.push(u_to);
        pts
    }
}

/// Initial slope satisfying both boundary conditions, by bisection of the
/// oracle's `x(u_right) = b` in log-slope space.
pub fn exact_slope<N: Nonlinearity>(problem: &ProblemDef<N>) -> Result<f64, OracleError> {
    let span = problem.u_right - problem.u_left;
    if span == 0.0 {
        return Err(OracleError::NoBracket);
    }
    let sign = span.signum();
    let len = problem.b - problem.a;
    // Positive when the slope is too small to reach u_right by b.
    let undershoot = |m: f64| -> Result<bool, OracleError> {
        let sol = InverseSolution::new(problem, problem.u_left, sign * m)?;
        match sol.x_between(problem.u_left, problem.u_right) {
            Ok(x) => Ok(x > len),
            Err(OracleError::TurningPoint { .. }) => Ok(true),
            Err(e) => Err(e),
        }
    };
    let (mut lo, mut hi) = (MIN_SLOPE.ln(), (span.abs() / len).max(1.0).ln());
    while undershoot(hi.exp())? {
        hi += 2.0;
        if hi > 700.0 {
            return Err(OracleError::NoBracket);
        }
    }
    if undershoot(lo.exp())? == undershoot(hi.exp())? {
        return Err(OracleError::NoBracket);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if undershoot(mid.exp())? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(sign * (0.5 * (lo + hi)).exp())
}

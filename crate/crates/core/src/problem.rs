//! Problem definitions for `u'' = N(u, x) u` on `[a, b]`.

use num_traits::Float;

use crate::scalar::{Dual2, Real, Scalar};

/// The nonlinearity `N(u, x)` together with its first partials.
///
/// All three functions are analytic formulas supplied by the implementor.
/// They are generic over [`Scalar`], so evaluating them on dual numbers
/// yields exact second derivatives for Jacobians and error constants.
pub trait Nonlinearity: Sync {
    fn n<S: Scalar>(&self, u: S, x: S) -> S;

    /// `dN/du`
    fn n_u<S: Scalar>(&self, u: S, x: S) -> S;

    /// `dN/dx`
    fn n_x<S: Scalar>(&self, u: S, x: S) -> S;

    /// Whether `dN/dx` vanishes identically.
    fn x_independent(&self) -> bool {
        false
    }

    /// Closed form of `int_{u0}^{u1} N(xi) xi d xi` for x-independent `N`, if known.
    fn energy_integral(&self, _u0: f64, _u1: f64) -> Option<f64> {
        None
    }

    /// `d^2 N / du^2`, obtained by differentiating [`Nonlinearity::n_u`].
    fn n_uu(&self, u: f64, x: f64) -> f64 {
        self.n_u(Dual2::variable(u), Dual2::constant(x)).der
    }
}

impl<N: Nonlinearity> Nonlinearity for &N {
    fn n<S: Scalar>(&self, u: S, x: S) -> S {
        (**self).n(u, x)
    }
    fn n_u<S: Scalar>(&self, u: S, x: S) -> S {
        (**self).n_u(u, x)
    }
    fn n_x<S: Scalar>(&self, u: S, x: S) -> S {
        (**self).n_x(u, x)
    }
    fn x_independent(&self) -> bool {
        (**self).x_independent()
    }
    fn energy_integral(&self, u0: f64, u1: f64) -> Option<f64> {
        (**self).energy_integral(u0, u1)
    }
}

/// A two-point boundary value problem `u'' = N(u,x) u`, `u(a) = u_left`, `u(b) = u_right`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct ProblemDef<N> {
    pub nonlinearity: N,
    pub a: f64,
    pub b: f64,
    pub u_left: f64,
    pub u_right: f64,
}

impl<N: Nonlinearity> ProblemDef<N> {
    pub fn new(nonlinearity: N, a: f64, b: f64, u_left: f64, u_right: f64) -> Self {
        ProblemDef {
            nonlinearity,
            a,
            b,
            u_left,
            u_right,
        }
    }

    #[inline]
    pub fn n<S: Scalar>(&self, u: S, x: S) -> S {
        self.nonlinearity.n(u, x)
    }

    #[inline]
    pub fn n_u<S: Scalar>(&self, u: S, x: S) -> S {
        self.nonlinearity.n_u(u, x)
    }

    #[inline]
    pub fn n_x<S: Scalar>(&self, u: S, x: S) -> S {
        self.nonlinearity.n_x(u, x)
    }
}

impl ProblemDef<Troesch> {
    /// `u'' = lambda sinh(lambda u)` on `[0, 1]`, `u(0) = 0`, `u(1) = 1`.
    pub fn troesch(lambda: f64) -> Self {
        ProblemDef::new(Troesch::new(lambda), 0.0, 1.0, 0.0, 1.0)
    }
}

/// Below this `|lambda u|` the Troesch nonlinearity is evaluated by its Taylor series.
pub const TROESCH_SERIES_THRESHOLD: f64 = 1e-3;

/// Below this `|lambda u|` the derivative of the Troesch nonlinearity uses its
/// Taylor series. The direct formula loses about `1/z^2` in relative accuracy
/// through cancellation, so the switch happens well above the threshold of `N`.
pub const TROESCH_DERIV_SERIES_THRESHOLD: f64 = 1.0;

/// `N(u) = lambda sinh(lambda u) / u`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Troesch {
    pub lambda: f64,
}

impl Troesch {
    pub fn new(lambda: f64) -> Self {
        assert!(lambda > 0.0, "lambda must be positive");
        Troesch { lambda }
    }
}

impl Nonlinearity for Troesch {
    fn n<S: Scalar>(&self, u: S, _x: S) -> S {
        troesch_n_generic(self.lambda, u)
    }

    fn n_u<S: Scalar>(&self, u: S, _x: S) -> S {
        troesch_n_u_generic(self.lambda, u)
    }

    fn n_x<S: Scalar>(&self, _u: S, _x: S) -> S {
        S::zero()
    }

    fn x_independent(&self) -> bool {
        true
    }

    fn energy_integral(&self, u0: f64, u1: f64) -> Option<f64> {
        let l = self.lambda;
        // cosh(l u1) - cosh(l u0) = 2 sinh(l (u1 + u0) / 2) sinh(l (u1 - u0) / 2)
        Some(2.0 * (0.5 * l * (u1 + u0)).sinh() * (0.5 * l * (u1 - u0)).sinh())
    }
}

fn troesch_n_generic<S: Scalar>(lambda: f64, u: S) -> S {
    let l = S::Real::lit(lambda);
    let z = u.scale(l);
    if z.re().abs() < S::Real::lit(TROESCH_SERIES_THRESHOLD) {
        let z2 = z * z;
        let poly = S::one()
            + z2.scale(S::Real::lit(1.0 / 6.0))
            + (z2 * z2).scale(S::Real::lit(1.0 / 120.0))
            + (z2 * z2 * z2).scale(S::Real::lit(1.0 / 5040.0));
        poly.scale(l * l)
    } else {
        z.sinh().scale(l) / u
    }
}

fn troesch_n_u_generic<S: Scalar>(lambda: f64, u: S) -> S {
    let l = S::Real::lit(lambda);
    let z = u.scale(l);
    if z.re().abs() < S::Real::lit(TROESCH_DERIV_SERIES_THRESHOLD) {
        // lambda^3 sum_{k>=1} 2k z^{2k-1} / (2k+1)!
        let z2 = z * z;
        let mut term = z;
        let mut acc = S::zero();
        let mut fact = 6.0; // (2k+1)! for k = 1
        for k in 1..=12 {
            let kf = k as f64;
            acc = acc + term.scale(S::Real::lit(2.0 * kf / fact));
            term = term * z2;
            fact *= (2.0 * kf + 2.0) * (2.0 * kf + 3.0);
        }
        acc.scale(l * l * l)
    } else {
        (z * z.cosh() - z.sinh()).scale(l) / (u * u)
    }
}

/// `lambda sinh(lambda u) / u`, with the removable singularity at `u = 0` filled by `lambda^2`.
pub fn troesch_n(lambda: f64, u: f64) -> f64 {
    troesch_n_generic(lambda, u)
}

/// `d/du [lambda sinh(lambda u) / u]`.
pub fn troesch_n_u(lambda: f64, u: f64) -> f64 {
    troesch_n_u_generic(lambda, u)
}

/// `N == 0`, i.e. `u'' = 0`.
#[derive(Debug, Clone, Copy, Default, PartialEq, serde::Serialize)]
pub struct ZeroN;

impl Nonlinearity for ZeroN {
    fn n<S: Scalar>(&self, _u: S, _x: S) -> S {
        S::zero()
    }
    fn n_u<S: Scalar>(&self, _u: S, _x: S) -> S {
        S::zero()
    }
    fn n_x<S: Scalar>(&self, _u: S, _x: S) -> S {
        S::zero()
    }
    fn x_independent(&self) -> bool {
        true
    }
    fn energy_integral(&self, _u0: f64, _u1: f64) -> Option<f64> {
        Some(0.0)
    }
}

/// `N == c`, i.e. the linear equation `u'' = c u`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct ConstantN(pub f64);

impl Nonlinearity for ConstantN {
    fn n<S: Scalar>(&self, _u: S, _x: S) -> S {
        S::from_real(S::Real::lit(self.0))
    }
    fn n_u<S: Scalar>(&self, _u: S, _x: S) -> S {
        S::zero()
    }
    fn n_x<S: Scalar>(&self, _u: S, _x: S) -> S {
        S::zero()
    }
    fn x_independent(&self) -> bool {
        true
    }
    fn energy_integral(&self, u0: f64, u1: f64) -> Option<f64> {
        Some(0.5 * self.0 * (u1 * u1 - u0 * u0))
    }
}

/// Checks `N_u` and `N_x` against central differences of `N` at a point.
/// Returns the larger of the two relative mismatches.
pub fn derivative_mismatch<N: Nonlinearity>(n: &N, u: f64, x: f64, step: f64) -> f64 {
    let fd_u = (n.n(u + step, x) - n.n(u - step, x)) / (2.0 * step);
    let fd_x = (n.n(u, x + step) - n.n(u, x - step)) / (2.0 * step);
    let rel = |a: f64, b: f64| (a - b).abs() / (1.0 + a.abs().max(b.abs()));
    rel(n.n_u(u, x), fd_u).max(rel(n.n_x(u, x), fd_x))
}

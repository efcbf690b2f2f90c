//! The straight-inverse (SI) initial-value marcher.
//!
//! While `|u'| <= 1` the marcher advances `u(x)` by `U` steps of length `h`
//! in `x`; otherwise it advances the inverse function `x(u)` by `V` steps of
//! length `h` in `u`. The marched function therefore never has a slope larger
//! than one in magnitude.

use std::io::Write;

use num_traits::{Float, One, Zero};
use serde::Serialize;
use thiserror::Error;

use crate::interp;
use crate::problem::{Nonlinearity, ProblemDef};
use crate::scalar::{Dual2, Real, Scalar};
use crate::step_fn::{marching_tol, marching_tol_v, u_step, v_step, StepArgs, StepError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, serde::Deserialize)]
pub enum Regime {
    Straight,
    Inverse,
}

impl Regime {
    /// Regime selected by a slope `u'`: straight iff `|u'| <= 1`.
    pub fn of_slope(u_prime: f64) -> Regime {
        if u_prime.abs() <= 1.0 {
            Regime::Straight
        } else {
            Regime::Inverse
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Regime::Straight => "straight",
            Regime::Inverse => "inverse",
        }
    }
}

/// One mesh quadruple `(u', x', u, x)` and the formula that produced it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Knot<S> {
    pub u_prime: S,
    pub x_prime: S,
    pub u: S,
    pub x: S,
    pub regime: Regime,
}

impl<S: Scalar> Knot<S> {
    /// Real parts of all four coordinates.
    pub fn re(&self) -> Knot<f64> {
        Knot {
            u_prime: to_f64(self.u_prime.re()),
            x_prime: to_f64(self.x_prime.re()),
            u: to_f64(self.u.re()),
            x: to_f64(self.x.re()),
            regime: self.regime,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum StopReason {
    ReachedXEnd,
    ReachedUCap,
    KnotBudget,
}

/// Length of one marching step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, serde::Deserialize)]
pub enum StepRule {
    /// `x_i = x_anchor + j h` in a straight run and `u_i = u_anchor + j h*` in an inverse run.
    #[default]
    Uniform,
    /// Steps `h / sqrt(1 + u'^2)` in `x` and `h / sqrt(1 + x'^2)` in `u`, with the
    /// slope taken at the start of the step, so that consecutive knots are about
    /// `h` apart along the curve.
    ArcLength,
}

/// Termination and step-length rule of a march.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StopRule {
    /// March until `x >= x_end`, landing on it exactly.
    pub x_end: f64,
    /// Declare blow-up once `u >= u_cap`.
    pub u_cap: Option<f64>,
    /// Maximum number of knots including the initial one.
    pub max_knots: usize,
    pub step_rule: StepRule,
}

/// `u_right + 10 max(1, |u_right|)`.
pub fn default_u_cap(u_right: f64) -> f64 {
    u_right + 10.0 * u_right.abs().max(1.0)
}

/// `1e8 / h`, saturated.
pub fn default_budget(h: f64) -> usize {
    let b = 1e8 / h;
    if b >= usize::MAX as f64 {
        usize::MAX
    } else {
        b as usize
    }
}

impl StopRule {
    pub fn new(x_end: f64, u_cap: Option<f64>, max_knots: usize) -> Self {
        StopRule {
            x_end,
            u_cap,
            max_knots,
            step_rule: StepRule::Uniform,
        }
    }

    pub fn with_step_rule(mut self, step_rule: StepRule) -> Self {
        self.step_rule = step_rule;
        self
    }

    /// March to `b` with the default blow-up cap and budget.
    pub fn for_problem<N: Nonlinearity>(problem: &ProblemDef<N>, h: f64) -> Self {
        StopRule {
            x_end: problem.b,
            u_cap: Some(default_u_cap(problem.u_right)),
            max_knots: default_budget(h),
            step_rule: StepRule::Uniform,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IvpError {
    #[error("step function failed at knot {knot}: {source}")]
    StepFunctionFailure {
        knot: usize,
        #[source]
        source: StepError,
    },
    #[error("solution blew up at x = {}, u = {}", last.x, last.u)]
    BlowUp { last: Knot<f64>, knots: usize },
    #[error("knot budget of {knots} exhausted at x = {}", last.x)]
    BudgetExhausted { last: Knot<f64>, knots: usize },
    #[error("invalid march configuration: {0}")]
    InvalidConfig(String),
}

/// Summary of a march that did not store its knots.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarchEnd<S> {
    pub last: Knot<S>,
    pub reason: StopReason,
    pub knots: usize,
    /// Index of the first knot produced by an inverse step.
    pub i_star: Option<usize>,
}

/// The full SI mesh of a march.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IvpTrace<S> {
    pub knots: Vec<Knot<S>>,
    pub h: f64,
    pub stop_reason: StopReason,
    pub i_star: Option<usize>,
}

fn to_f64<T: Real>(v: T) -> f64 {
    num_traits::ToPrimitive::to_f64(&v).unwrap_or(f64::NAN)
}

fn recip<S: Scalar>(v: S) -> S {
    S::one() / v
}

/// Straight-step coefficients `(A, B) = (N_u u' + N_x, N)` at `(u, x)`.
pub fn straight_coeffs<S: Scalar, N: Nonlinearity>(p: &ProblemDef<N>, u: S, x: S, u_prime: S) -> (S, S) {
    let a = p.n_u(u, x) * u_prime + p.n_x(u, x);
    (a, p.n(u, x))
}

/// Inverse-step coefficients at `(u, x)` with inverse slope `x'`:
/// `A = -((N_u + N_x x') u + N) x'^2 + 2 (N u)^2 x'^4`, `B = -N u x'^2`.
pub fn inverse_coeffs<S: Scalar, N: Nonlinearity>(p: &ProblemDef<N>, u: S, x: S, xp: S) -> (S, S) {
    let n = p.n(u, x);
    let n_u = p.n_u(u, x);
    let n_x = p.n_x(u, x);
    let xp2 = xp * xp;
    let nu = n * u;
    let a = -(((n_u + n_x * xp) * u + n) * xp2) + (nu * nu * xp2 * xp2).scale(S::Real::lit(2.0));
    let b = -(nu * xp2);
    (a, b)
}

fn real_args<S: Scalar>(args: &StepArgs<S>) -> StepArgs<S::Real> {
    StepArgs::new(args.a.re(), args.b.re(), args.c.re(), args.d.re(), args.s)
}

/// Solves `V(s).re = target` for `s` between `0` and `s_max` by bisection to `1e-14`.
fn land_inverse<T: Real>(args: &StepArgs<T>, s_max: T, target: T) -> Result<T, StepError> {
    let tol = T::lit(1e-14);
    let (mut lo, mut hi) = (T::zero(), s_max);
    let two = T::lit(2.0);
    let mut iters = 0;
    while (hi - lo).abs() > tol && iters < 200 {
        let mid = (lo + hi) / two;
        if mid == lo || mid == hi {
            break;
        }
        let v = v_step(&args.with_step(mid), marching_tol_v(args))?.value;
        if v < target {
            lo = mid;
        } else {
            hi = mid;
        }
        iters += 1;
    }
    Ok((lo + hi) / two)
}

/// Runs the SI recurrence, handing every knot (including the initial one) to `sink`.
///
/// Regime decisions, landing searches and stopping tests use real parts only,
/// so a dual-valued run follows exactly the same mesh as the real run.
pub fn march_with<S, N, F>(
    problem: &ProblemDef<N>,
    u0: S,
    du0: S,
    h: f64,
    stop: &StopRule,
    mut sink: F,
) -> Result<MarchEnd<S>, IvpError>
where
    S: Scalar,
    N: Nonlinearity,
    F: FnMut(&Knot<S>),
{
    if !(h > 0.0 && h < 1.0) {
        return Err(IvpError::InvalidConfig(format!("h = {h} outside (0, 1)")));
    }
    if !(u0.is_finite() && du0.is_finite()) || !stop.x_end.is_finite() {
        return Err(IvpError::InvalidConfig("non-finite initial data".into()));
    }
    let lit = S::Real::lit;
    let hr = lit(h);
    let x_end = lit(stop.x_end);
    let one = S::Real::one();

    let mut k = Knot {
        u_prime: du0,
        x_prime: recip(du0),
        u: u0,
        x: S::from_real(lit(problem.a)),
        regime: if du0.re().abs() <= one {
            Regime::Straight
        } else {
            Regime::Inverse
        },
    };
    sink(&k);
    let mut count = 1usize;
    let mut i_star = None;
    if problem.a >= stop.x_end {
        return Ok(MarchEnd {
            last: k,
            reason: StopReason::ReachedXEnd,
            knots: count,
            i_star,
        });
    }

    let mut run: Option<Regime> = None;
    let mut anchor = S::zero();
    let mut j: usize = 0;
    let mut inv_step = hr;

    loop {
        if count >= stop.max_knots {
            return Ok(MarchEnd {
                last: k,
                reason: StopReason::KnotBudget,
                knots: count,
                i_star,
            });
        }
        let fail = |source| IvpError::StepFunctionFailure {
            knot: count,
            source,
        };
        let straight = k.u_prime.re().abs() <= one;
        let landed;
        let next = if straight {
            if run != Some(Regime::Straight) {
                run = Some(Regime::Straight);
                anchor = k.x;
                j = 0;
            }
            j += 1;
            let x_next = match stop.step_rule {
                StepRule::Uniform => anchor + S::from_real(lit(j as f64) * hr),
                StepRule::ArcLength => {
                    let up = k.u_prime.re();
                    k.x + S::from_real(hr / (one + up * up).sqrt())
                }
            };
            let (a, b) = straight_coeffs(problem, k.u, k.x, k.u_prime);
            let mut args = StepArgs::new(a, b, k.u_prime, k.u, x_next.re() - k.x.re());
            landed = x_next.re() >= x_end - lit(1e-9) * hr;
            if landed {
                args.s = x_end - k.x.re();
                let r = u_step(&args, marching_tol(&args)).map_err(fail)?;
                // Exact landing when x carries an infinitesimal part.
                let ds = -k.x.infinitesimal();
                let sr = S::from_real(args.s);
                Knot {
                    u: r.value + r.deriv_s * ds,
                    u_prime: r.deriv_s + (a * sr + b) * r.value * ds,
                    x: S::from_real(x_end),
                    x_prime: S::zero(),
                    regime: Regime::Straight,
                }
            } else {
                let r = u_step(&args, marching_tol(&args)).map_err(fail)?;
                Knot {
                    u: r.value,
                    u_prime: r.deriv_s,
                    x: x_next,
                    x_prime: S::zero(),
                    regime: Regime::Straight,
                }
            }
        } else {
            let xp = if k.regime == Regime::Inverse {
                k.x_prime
            } else {
                recip(k.u_prime)
            };
            if run != Some(Regime::Inverse) {
                run = Some(Regime::Inverse);
                anchor = k.u;
                j = 0;
                inv_step = if xp.re() < S::Real::zero() { -hr } else { hr };
            }
            j += 1;
            let u_next = match stop.step_rule {
                StepRule::Uniform => anchor + S::from_real(lit(j as f64) * inv_step),
                StepRule::ArcLength => {
                    let q = xp.re();
                    k.u + S::from_real(inv_step / (one + q * q).sqrt())
                }
            };
            let (a, b) = inverse_coeffs(problem, k.u, k.x, xp);
            let args = StepArgs::new(a, b, xp, k.x, u_next.re() - k.u.re());
            let r = v_step(&args, marching_tol_v(&args)).map_err(fail)?;
            landed = r.value.re() >= x_end - lit(1e-9) * hr * xp.re().abs();
            if landed {
                let s0 = land_inverse(&real_args(&args), args.s, x_end).map_err(fail)?;
                let rr = v_step(&args.with_step(s0), marching_tol_v(&args)).map_err(fail)?;
                let ds = (-rr.value.infinitesimal()).scale(one / rr.deriv_s.re());
                let sr = S::from_real(s0);
                Knot {
                    u: k.u + sr + ds,
                    u_prime: S::zero(),
                    x: S::from_real(x_end),
                    x_prime: rr.deriv_s + (a * sr + b) * rr.deriv_s * ds,
                    regime: Regime::Inverse,
                }
            } else {
                Knot {
                    u: u_next,
                    u_prime: S::zero(),
                    x: r.value,
                    x_prime: r.deriv_s,
                    regime: Regime::Inverse,
                }
            }
        };
        let mut next = next;
        match next.regime {
            Regime::Straight => next.x_prime = recip(next.u_prime),
            Regime::Inverse => {
                next.u_prime = recip(next.x_prime);
                if i_star.is_none() {
                    i_star = Some(count);
                }
            }
        }
        let blown = !(next.u.is_finite() && next.x.is_finite())
            || !(next.u_prime.is_finite() || next.x_prime.is_finite());
        if blown {
            return Err(IvpError::BlowUp {
                last: k.re(),
                knots: count,
            });
        }
        k = next;
        sink(&k);
        count += 1;
        if let Some(cap) = stop.u_cap {
            if k.u.re() >= lit(cap) {
                return Ok(MarchEnd {
                    last: k,
                    reason: StopReason::ReachedUCap,
                    knots: count,
                    i_star,
                });
            }
        }
        if landed {
            return Ok(MarchEnd {
                last: k,
                reason: StopReason::ReachedXEnd,
                knots: count,
                i_star,
            });
        }
    }
}

/// Marches without storing knots and reports how the march ended.
pub fn si_march_end<S: Scalar, N: Nonlinearity>(
    problem: &ProblemDef<N>,
    u0: S,
    du0: S,
    h: f64,
    stop: &StopRule,
) -> Result<MarchEnd<S>, IvpError> {
    march_with(problem, u0, du0, h, stop, |_| {})
}

/// Marches and keeps every knot, whatever the stop reason.
pub fn si_march_trace<S: Scalar, N: Nonlinearity>(
    problem: &ProblemDef<N>,
    u0: S,
    du0: S,
    h: f64,
    stop: &StopRule,
) -> Result<IvpTrace<S>, IvpError> {
    let mut knots = Vec::new();
    let end = march_with(problem, u0, du0, h, stop, |k| knots.push(*k))?;
    Ok(IvpTrace {
        knots,
        h,
        stop_reason: end.reason,
        i_star: end.i_star,
    })
}

/// Marches from `(u0, du0)` at `x = a` until `stop.x_end`.
///
/// Hitting the blow-up cap or the knot budget is reported as an error.
pub fn si_march<S: Scalar, N: Nonlinearity>(
    problem: &ProblemDef<N>,
    u0: S,
    du0: S,
    h: f64,
    stop: &StopRule,
) -> Result<IvpTrace<S>, IvpError> {
    let trace = si_march_trace(problem, u0, du0, h, stop)?;
    let last = trace.knots.last().expect("trace is never empty").re();
    let knots = trace.knots.len();
    match trace.stop_reason {
        StopReason::ReachedXEnd => Ok(trace),
        StopReason::ReachedUCap => Err(IvpError::BlowUp { last, knots }),
        StopReason::KnotBudget => Err(IvpError::BudgetExhausted { last, knots }),
    }
}

/// [`si_march`] over dual numbers: derivative parts carry sensitivities to the seeded inputs.
pub fn si_march_dual<N: Nonlinearity>(
    problem: &ProblemDef<N>,
    u0: Dual2<f64>,
    du0: Dual2<f64>,
    h: f64,
    stop: &StopRule,
) -> Result<IvpTrace<Dual2<f64>>, IvpError> {
    si_march(problem, u0, du0, h, stop)
}

impl<S: Scalar> IvpTrace<S> {
    pub fn last(&self) -> &Knot<S> {
        self.knots.last().expect("trace is never empty")
    }

    pub fn len(&self) -> usize {
        self.knots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.knots.is_empty()
    }

    /// Real parts of the trace.
    pub fn re(&self) -> IvpTrace<f64> {
        IvpTrace {
            knots: self.knots.iter().map(Knot::re).collect(),
            h: self.h,
            stop_reason: self.stop_reason,
            i_star: self.i_star,
        }
    }
}

impl IvpTrace<f64> {
    /// Knots before the first inverse step.
    pub fn straight_prefix(&self) -> &[Knot<f64>] {
        &self.knots[..self.i_star.unwrap_or(self.knots.len())]
    }

    /// Knots from the first inverse step on.
    pub fn inverse_suffix(&self) -> &[Knot<f64>] {
        &self.knots[self.i_star.unwrap_or(self.knots.len())..]
    }

    /// Slope `u'` at the last knot; inside the inverse phase this is `1 / x'`.
    pub fn end_slope(&self) -> f64 {
        let k = self.last();
        match k.regime {
            Regime::Straight => k.u_prime,
            Regime::Inverse => 1.0 / k.x_prime,
        }
    }

    /// `u` at `x` by monotone cubic Hermite interpolation on the `(x, u)` knots.
    ///
    /// Knots that do not advance `x` (a boundary layer inside one ulp) are skipped.
    pub fn u_at(&self, x: f64) -> Option<f64> {
        interp::monotone_hermite_samples(self.knots.iter().map(|k| (k.x, k.u, k.u_prime)), x)
    }

    /// The knot whose `x` is closest to the requested position.
    pub fn nearest_knot(&self, x: f64) -> &Knot<f64> {
        self.knots
            .iter()
            .min_by(|a, b| (a.x - x).abs().total_cmp(&(b.x - x).abs()))
            .expect("trace is never empty")
    }

    /// CSV with columns `i, regime, x, u, u_prime, x_prime`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["i", "regime", "x", "u", "u_prime", "x_prime"])?;
        for (i, k) in self.knots.iter().enumerate() {
            w.write_record([
                i.to_string(),
                k.regime.as_str().to_string(),
                fmt_num(k.x),
                fmt_num(k.u),
                fmt_num(k.u_prime),
                fmt_num(k.x_prime),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Fixed output format: 15 significant digits, lowercase scientific.
pub fn fmt_num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.14e}")
    } else {
        format!("{v}")
    }
}

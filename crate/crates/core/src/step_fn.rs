//! Step functions `U` and `V` by truncated successive approximations.
//!
//! `U(A,B,C,D,s)` solves `U'' = (As+B) U`, `U(0)=D`, `U'(0)=C`;
//! `V(A,B,C,D,s)` solves `V'' = (As+B) V'`, `V(0)=D`, `V'(0)=C`.
//!
//! Every Picard iterate is a polynomial in `s`, so the nested integrals of
//! the recurrence are exact coefficient shifts. Iterates are kept in the
//! scaled variable `t = eta/s` on `[0, 1]`; evaluating at `s` is then a plain
//! coefficient sum.

use num_traits::{Float, One, Zero};
use thiserror::Error;

use crate::scalar::{Dual2, Real, Scalar};

/// Largest admissible |s|.
pub const S_MAX: f64 = 1.0;

/// Iteration cap for the successive approximations.
pub const N_MAX: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct StepArgs<S: Scalar> {
    pub a: S,
    pub b: S,
    pub c: S,
    pub d: S,
    pub s: S::Real,
}

impl<S: Scalar> StepArgs<S> {
    pub fn new(a: S, b: S, c: S, d: S, s: S::Real) -> Self {
        StepArgs { a, b, c, d, s }
    }

    pub fn with_step(self, s: S::Real) -> Self {
        StepArgs { s, ..self }
    }

    fn validate(&self) -> Result<(), StepError> {
        let s = self.s;
        if !Float::is_finite(s) || s.abs() > S::Real::lit(S_MAX) {
            return Err(StepError::InvalidStep {
                s: num_traits::ToPrimitive::to_f64(&s).unwrap_or(f64::NAN),
            });
        }
        if !(self.a.is_finite() && self.b.is_finite() && self.c.is_finite() && self.d.is_finite())
        {
            return Err(StepError::NonFinite);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepResult<S: Scalar> {
    pub value: S,
    pub deriv_s: S,
    pub terms_used: usize,
    /// Analytic bound on the truncation remainder of `value` and `deriv_s`.
    pub tail_bound: S::Real,
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum StepError {
    #[error("successive approximations did not reach tolerance {tol:e} within {n_max} terms (bound {bound:e})")]
    NonConvergence { bound: f64, tol: f64, n_max: usize },
    #[error("step argument {s} outside [-1, 1]")]
    InvalidStep { s: f64 },
    #[error("non-finite step-function coefficient")]
    NonFinite,
}

/// Default truncation tolerance `1e-15 * (1 + |D| + |C s|)`.
pub fn default_tol<S: Scalar>(args: &StepArgs<S>) -> S::Real {
    let one = S::Real::one();
    S::Real::lit(1e-15) * (one + args.d.norm() + args.c.norm() * args.s.abs())
}

/// Relative tolerance `1e-15 (|D| + |Cs|) |s|`, floored at the smallest positive normal.
///
/// Marching `L / h` steps accumulates at most `L * 1e-15` of relative truncation
/// error this way, independently of `h` and of the size of the solution.
pub fn marching_tol<S: Scalar>(args: &StepArgs<S>) -> S::Real {
    let scale = args.d.norm() + args.c.norm() * args.s.abs();
    (S::Real::lit(1e-15) * scale * args.s.abs()).max(S::Real::min_positive_value())
}

/// Tolerance for `V`: `1e-15 |C| |s|`, floored at the smallest positive normal.
///
/// Relative to the increment `V - D` rather than to `D`, so the slope `V'`
/// keeps full relative accuracy when it is many orders smaller than `D`.
pub fn marching_tol_v<S: Scalar>(args: &StepArgs<S>) -> S::Real {
    (S::Real::lit(1e-15) * args.c.norm() * args.s.abs()).max(S::Real::min_positive_value())
}

/// Bound on `|U_{n+1}(s) - U_n(s)|`:
/// `(|As| + |B|)^n (|Cs| + |D|) |s|^{2n} / (2n)!`.
pub fn u_increment_bound<S: Scalar>(args: &StepArgs<S>, n: usize) -> S::Real {
    let s = args.s.abs();
    let q = args.a.norm() * s + args.b.norm();
    let mut b = args.c.norm() * s + args.d.norm();
    for m in 1..=n {
        let k = S::Real::lit((2 * m - 1) as f64) * S::Real::lit((2 * m) as f64);
        b = b * q * s * s / k;
    }
    b
}

/// Bound on `|V_{n+1}(s) - V_n(s)|`: `(|As| + |B|)^n |C| |s|^{n+1} / n!`.
pub fn v_increment_bound<S: Scalar>(args: &StepArgs<S>, n: usize) -> S::Real {
    let s = args.s.abs();
    let q = args.a.norm() * s + args.b.norm();
    let mut b = args.c.norm() * s;
    for m in 1..=n {
        b = b * q * s / S::Real::lit(m as f64);
    }
    b
}

fn geometric_tail<S: Scalar>(first: S, ratio: S) -> S {
    if first.is_zero() {
        S::zero()
    } else if ratio.re() < S::Real::one() {
        first / (S::one() - ratio)
    } else {
        S::from_real(S::Real::infinity())
    }
}

fn max_norm<S: Scalar>(a: S, b: S) -> S::Real {
    a.norm().max(b.norm())
}

/// Majorants of `|A s| + |B|` and `|C s| + |D|`.
///
/// The recursions below run in the algebra itself on componentwise absolute
/// values, so an infinitesimal part contributes linearly rather than geometrically.
fn majorants<S: Scalar>(args: &StepArgs<S>) -> (S, S, S) {
    let s = args.s.abs();
    let q = args.a.majorant().scale(s) + args.b.majorant();
    let w = args.c.majorant().scale(s) + args.d.majorant();
    (q, w, args.c.majorant())
}

/// Tail bounds for `U_n` (value) and `U'_{n+1}` (s-derivative).
fn u_tails<S: Scalar>(q: S, w: S, s: S::Real) -> impl Iterator<Item = (usize, S::Real)> {
    // b_n bounds |U_{n+1} - U_n|, d_n bounds |U'_{n+1} - U'_n|.
    let mut b = w;
    let s2 = s * s;
    (1..=N_MAX).map(move |n| {
        let nn = S::Real::lit(n as f64);
        let two = S::Real::lit(2.0);
        let one = S::Real::one();
        let d_next = (b * q * q).scale(s / (two * nn - one) * s2 / ((two * nn) * (two * nn + one)));
        b = (b * q).scale(s2 / ((two * nn - one) * (two * nn)));
        let rb = q.scale(s2 / ((two * nn + one) * (two * nn + two)));
        let rd = q.scale(s2 / ((two * nn + two) * (two * nn + S::Real::lit(3.0))));
        (n, max_norm(geometric_tail(b, rb), geometric_tail(d_next, rd)))
    })
}

fn v_tails<S: Scalar>(q: S, c: S, s: S::Real) -> impl Iterator<Item = (usize, S::Real)> {
    // b_n bounds |V_{n+1} - V_n|, e_n = b_n / |s| bounds |V'_{n+1} - V'_n|.
    let mut b = c.scale(s);
    (1..=N_MAX).map(move |n| {
        b = (b * q).scale(s / S::Real::lit(n as f64));
        let r = q.scale(s / S::Real::lit((n + 1) as f64));
        let tb = geometric_tail(b, r);
        let te = if s.is_zero() { S::zero() } else { tb.scale(S::Real::one() / s) };
        (n, max_norm(tb, te))
    })
}

fn pick_depth<R: Real>(
    mut tails: impl Iterator<Item = (usize, R)>,
    tol: R,
) -> Result<(usize, R), StepError> {
    let mut last = R::infinity();
    for (n, t) in tails.by_ref() {
        last = t;
        if t <= tol {
            return Ok((n, t));
        }
    }
    Err(StepError::NonConvergence {
        bound: last.to_f64().unwrap_or(f64::INFINITY),
        tol: tol.to_f64().unwrap_or(f64::NAN),
        n_max: N_MAX,
    })
}

fn check_tol<R: Real>(tol: R) -> Result<(), StepError> {
    if tol > R::zero() {
        Ok(())
    } else {
        Err(StepError::NonConvergence {
            bound: f64::NAN,
            tol: tol.to_f64().unwrap_or(f64::NAN),
            n_max: N_MAX,
        })
    }
}

/// Picard increments of `U` in the scaled variable. Calls `visit(j, p_j)` for
/// `j = 1..=count`, where `p_j(t) = U_j(s t) - U_{j-1}(s t)`.
fn u_increments<S: Scalar>(args: &StepArgs<S>, count: usize, mut visit: impl FnMut(usize, &[S])) {
    let s = args.s;
    let a_s = args.a.scale(s);
    let s2 = s * s;
    let mut cur: Vec<S> = vec![args.d, args.c.scale(s)];
    let mut next: Vec<S> = Vec::with_capacity(3 * count + 2);
    for j in 1..=count {
        visit(j, &cur);
        if j == count {
            break;
        }
        // next = s^2 * double integral of (a_s t + b) cur(t)
        next.clear();
        next.resize(cur.len() + 3, S::zero());
        for (k, &ck) in cur.iter().enumerate() {
            let kk = S::Real::lit(k as f64);
            let b_term = (args.b * ck).scale(s2 / ((kk + S::Real::one()) * (kk + S::Real::lit(2.0))));
            let a_term =
                (a_s * ck).scale(s2 / ((kk + S::Real::lit(2.0)) * (kk + S::Real::lit(3.0))));
            next[k + 2] = next[k + 2] + b_term;
            next[k + 3] = next[k + 3] + a_term;
        }
        std::mem::swap(&mut cur, &mut next);
    }
}

/// `int_0^s (A eta + B) p(eta/s) d eta` for a scaled polynomial `p`.
fn weighted_integral<S: Scalar>(args: &StepArgs<S>, p: &[S]) -> S {
    let s = args.s;
    let a_s = args.a.scale(s);
    let mut acc = S::zero();
    for (k, &pk) in p.iter().enumerate() {
        let kk = S::Real::lit(k as f64);
        acc = acc
            + (args.b * pk).scale(S::Real::one() / (kk + S::Real::one()))
            + (a_s * pk).scale(S::Real::one() / (kk + S::Real::lit(2.0)));
    }
    acc.scale(s)
}

fn coef_sum<S: Scalar>(p: &[S]) -> S {
    p.iter().fold(S::zero(), |acc, &c| acc + c)
}

/// Evaluates `U_n(s)` and `U'(s) = C + int_0^s (A eta + B) U_n d eta`.
pub fn u_step_terms<S: Scalar>(args: &StepArgs<S>, n: usize) -> Result<StepResult<S>, StepError> {
    args.validate()?;
    if args.s.is_zero() || n == 0 {
        let value = if n == 0 && !args.s.is_zero() { S::zero() } else { args.d };
        return Ok(StepResult {
            value,
            deriv_s: args.c,
            terms_used: 0,
            tail_bound: S::Real::zero(),
        });
    }
    let mut value = S::zero();
    let mut integral = S::zero();
    u_increments(args, n, |j, p| {
        debug_assert!(
            coef_sum(p).norm()
                <= u_increment_bound(args, j - 1) * S::Real::lit(1.0 + 1e-9)
                    + S::Real::lit(1e-300),
            "U increment bound violated at n={}",
            j - 1
        );
        value = value + coef_sum(p);
        integral = integral + weighted_integral(args, p);
    });
    let (q, w, _) = majorants(args);
    let tail = u_tails(q, w, args.s.abs()).nth(n - 1).map(|(_, t)| t).unwrap_or(S::Real::zero());
    Ok(StepResult {
        value,
        deriv_s: args.c + integral,
        terms_used: n,
        tail_bound: tail,
    })
}

/// `U(A,B,C,D,s)` truncated at the first depth whose analytic tail is `<= tol`.
pub fn u_step<S: Scalar>(args: &StepArgs<S>, tol: S::Real) -> Result<StepResult<S>, StepError> {
    args.validate()?;
    check_tol(tol)?;
    if args.s.is_zero() {
        return u_step_terms(args, 0);
    }
    let (q, w, _) = majorants(args);
    let (n, _) = pick_depth(u_tails(q, w, args.s.abs()), tol)?;
    u_step_terms(args, n)
}

/// Picard increments of `V'` in the scaled variable.
fn v_increments<S: Scalar>(args: &StepArgs<S>, count: usize, mut visit: impl FnMut(usize, &[S])) {
    let s = args.s;
    let a_s = args.a.scale(s);
    let mut cur: Vec<S> = vec![args.c];
    let mut next: Vec<S> = Vec::with_capacity(2 * count + 2);
    for j in 1..=count {
        visit(j, &cur);
        if j == count {
            break;
        }
        // next = s * integral of (a_s t + b) cur(t)
        next.clear();
        next.resize(cur.len() + 2, S::zero());
        for (k, &ck) in cur.iter().enumerate() {
            let kk = S::Real::lit(k as f64);
            next[k + 1] = next[k + 1] + (args.b * ck).scale(s / (kk + S::Real::one()));
            next[k + 2] = next[k + 2] + (a_s * ck).scale(s / (kk + S::Real::lit(2.0)));
        }
        std::mem::swap(&mut cur, &mut next);
    }
}

/// Evaluates `V_n(s)` and `V'_n(s)` at a forced depth `n`.
pub fn v_step_terms<S: Scalar>(args: &StepArgs<S>, n: usize) -> Result<StepResult<S>, StepError> {
    args.validate()?;
    if args.s.is_zero() || n == 0 {
        return Ok(StepResult {
            value: args.d,
            deriv_s: if n == 0 && !args.s.is_zero() { S::zero() } else { args.c },
            terms_used: 0,
            tail_bound: S::Real::zero(),
        });
    }
    let s = args.s;
    let mut deriv = S::zero();
    let mut integral = S::zero();
    v_increments(args, n, |j, e| {
        let inc = e
            .iter()
            .enumerate()
            .fold(S::zero(), |acc, (k, &c)| acc + c.scale(S::Real::one() / S::Real::lit((k + 1) as f64)))
            .scale(s);
        debug_assert!(
            inc.norm() <= v_increment_bound(args, j - 1) * S::Real::lit(1.0 + 1e-9) + S::Real::lit(1e-300),
            "V increment bound violated at n={}",
            j - 1
        );
        deriv = deriv + coef_sum(e);
        integral = integral + inc;
    });
    let (q, _, c) = majorants(args);
    let tail = v_tails(q, c, s.abs()).nth(n - 1).map(|(_, t)| t).unwrap_or(S::Real::zero());
    Ok(StepResult {
        value: args.d + integral,
        deriv_s: deriv,
        terms_used: n,
        tail_bound: tail,
    })
}

/// `V(A,B,C,D,s)` truncated at the first depth whose analytic tail is `<= tol`.
pub fn v_step<S: Scalar>(args: &StepArgs<S>, tol: S::Real) -> Result<StepResult<S>, StepError> {
    args.validate()?;
    check_tol(tol)?;
    if args.s.is_zero() {
        return v_step_terms(args, 0);
    }
    let (q, _, c) = majorants(args);
    let (n, _) = pick_depth(v_tails(q, c, args.s.abs()), tol)?;
    v_step_terms(args, n)
}

/// Values `U_0(s), ..., U_n(s)` of the successive approximations.
pub fn u_iterates<S: Scalar>(args: &StepArgs<S>, n: usize) -> Vec<S> {
    let mut out = vec![S::zero()];
    let mut acc = S::zero();
    u_increments(args, n, |_, p| {
        acc = acc + coef_sum(p);
        out.push(acc);
    });
    out.truncate(n + 1);
    out
}

/// Values `V_0(s), ..., V_n(s)` of the successive approximations.
pub fn v_iterates<S: Scalar>(args: &StepArgs<S>, n: usize) -> Vec<S> {
    let s = args.s;
    let mut out = vec![args.d];
    let mut acc = args.d;
    v_increments(args, n, |_, e| {
        let inc = e
            .iter()
            .enumerate()
            .fold(S::zero(), |a, (k, &c)| a + c.scale(S::Real::one() / S::Real::lit((k + 1) as f64)))
            .scale(s);
        acc = acc + inc;
        out.push(acc);
    });
    out.truncate(n + 1);
    out
}

/// Value, s-derivative and the four parameter partials of a step function.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct StepGradient<T> {
    pub value: T,
    pub deriv_s: T,
    pub d_a: T,
    pub d_b: T,
    pub d_c: T,
    pub d_d: T,
}

/// Seeds parameter `k` (0..4 for A, B, C, D) with a unit infinitesimal.
pub fn seed<T: Real>(args: &StepArgs<T>, k: usize) -> StepArgs<Dual2<T>> {
    let lift = |v: T, i: usize| {
        if i == k {
            Dual2::variable(v)
        } else {
            Dual2::constant(v)
        }
    };
    StepArgs {
        a: lift(args.a, 0),
        b: lift(args.b, 1),
        c: lift(args.c, 2),
        d: lift(args.d, 3),
        s: args.s,
    }
}

fn grad_with<T: Real>(
    args: &StepArgs<T>,
    tol: T,
    eval_real: fn(&StepArgs<T>, T) -> Result<StepResult<T>, StepError>,
    eval_dual: fn(&StepArgs<Dual2<T>>, T) -> Result<StepResult<Dual2<T>>, StepError>,
) -> Result<StepGradient<T>, StepError> {
    let base = eval_real(args, tol)?;
    let mut partials = [T::zero(); 4];
    for (k, p) in partials.iter_mut().enumerate() {
        *p = eval_dual(&seed(args, k), tol)?.value.der;
    }
    Ok(StepGradient {
        value: base.value,
        deriv_s: base.deriv_s,
        d_a: partials[0],
        d_b: partials[1],
        d_c: partials[2],
        d_d: partials[3],
    })
}

/// Partials of `U` with respect to `A, B, C, D`, one dual-seeded run each.
pub fn u_step_grad<T: Real>(args: &StepArgs<T>, tol: T) -> Result<StepGradient<T>, StepError> {
    grad_with(args, tol, u_step::<T>, u_step::<Dual2<T>>)
}

/// Partials of `V` with respect to `A, B, C, D`, one dual-seeded run each.
pub fn v_step_grad<T: Real>(args: &StepArgs<T>, tol: T) -> Result<StepGradient<T>, StepError> {
    grad_with(args, tol, v_step::<T>, v_step::<Dual2<T>>)
}

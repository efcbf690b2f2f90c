//! A-priori error bounds of the SI method for autonomous problems with positive `N`.
//!
//! The straight phase `[a, x_{i*}]` is bounded by `h^2 P*(h)`; the inverse
//! phase by the knot-wise expressions built from `E_i` and `T(zeta)`, evaluated
//! by composite Gauss quadrature.

use serde::Serialize;
use thiserror::Error;

use crate::ivp::IvpTrace;
use crate::oracle::{InverseSolution, OracleError};
use crate::problem::{Nonlinearity, ProblemDef};
use crate::quad::{self, QuadError, COMPOSITE_NODES};

/// Points of the grid scans for `L_i*` and `mu`.
pub const GRID_POINTS: usize = 4096;
/// Default `epsilon`.
pub const DEFAULT_EPSILON: f64 = 0.1;

const GOLDEN_ITERS: usize = 200;
const TAIL_REL_TOL: f64 = 1e-14;
const MAX_DOUBLINGS: usize = 200;
const MIN_DOUBLINGS: usize = 4;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BoundsError {
    #[error("the nonlinearity depends on x")]
    NotAutonomous,
    #[error("epsilon = {0} outside (0, 1/6)")]
    InvalidEpsilon(f64),
    #[error("initial slope {0} must be positive and finite")]
    InvalidSlope(f64),
    #[error("the integral defining S* diverges")]
    DivergentIntegral,
    #[error("Phi(u) = {target} has no root above u_l")]
    NoRoot { target: f64 },
    #[error("empty interval [{lo}, {hi}]")]
    EmptyInterval { lo: f64, hi: f64 },
    #[error("trace has no inverse phase")]
    NoInversePhase,
    #[error("precondition failed: {0}")]
    PreconditionFailed(String),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Quadrature(#[from] QuadError),
}

/// Which definition of `M*` to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum MStarRule {
    /// `Phi^{-1}(((1 + 3 eps)^2 - u_l'^2) / 2)`.
    #[default]
    Sharp,
    /// `S* (1 + 3 eps - u_l') / 2`.
    Original,
}

/// `Phi(u1) - Phi(u0) = int_{u0}^{u1} N(xi) xi d xi`.
pub fn phi<N: Nonlinearity>(problem: &ProblemDef<N>, u0: f64, u1: f64) -> Result<f64, QuadError> {
    if let Some(e) = problem.nonlinearity.energy_integral(u0, u1) {
        return Ok(e);
    }
    let a = problem.a;
    quad::adaptive(|xi| problem.n(xi, a) * xi, u0, u1, 1e-300, 1e-14)
}

fn check_autonomous<N: Nonlinearity>(problem: &ProblemDef<N>) -> Result<(), BoundsError> {
    if problem.nonlinearity.x_independent() {
        Ok(())
    } else {
        Err(BoundsError::NotAutonomous)
    }
}

fn check_epsilon(epsilon: f64) -> Result<(), BoundsError> {
    if epsilon > 0.0 && epsilon < 1.0 / 6.0 {
        Ok(())
    } else {
        Err(BoundsError::InvalidEpsilon(epsilon))
    }
}

/// `int_{u_l}^{inf} d eta / sqrt(u_l'^2 + 2 Phi(eta))`, the distance to the pole of the solution.
///
/// Integrated over pieces of doubling length; the tail beyond the last piece
/// is estimated from the local power-law decay of the integrand.
pub fn s_star_integral<N: Nonlinearity>(problem: &ProblemDef<N>, du_l: f64) -> Result<f64, BoundsError> {
    check_autonomous(problem)?;
    if !(du_l > 0.0 && du_l.is_finite()) {
        return Err(BoundsError::InvalidSlope(du_l));
    }
    let sol = InverseSolution::new(problem, problem.u_left, du_l)?;
    let integrand = |u: f64| -> Result<f64, BoundsError> { Ok(1.0 / sol.slope(u)?) };
    let u_l = problem.u_left;
    let mut total = 0.0;
    let (mut t, mut f_prev) = (1.0, integrand(u_l + 1.0)?);
    total += sol.x_between(u_l, u_l + t)?;
    for k in 0..MAX_DOUBLINGS {
        let t_next = 2.0 * t;
        total += sol.x_between(u_l + t, u_l + t_next)?;
        let f_next = integrand(u_l + t_next)?;
        if f_next == 0.0 {
            return Ok(total);
        }
        let p = (f_prev / f_next).ln() / 2f64.ln();
        if k + 1 >= MIN_DOUBLINGS && p > 1.0 {
            let tail = f_next * t_next / (p - 1.0);
            if tail <= TAIL_REL_TOL * total {
                return Ok(total + tail);
            }
        }
        t = t_next;
        f_prev = f_next;
    }
    Err(BoundsError::DivergentIntegral)
}

/// `S* = min(b - a, s_star_integral)`.
pub fn compute_s_star<N: Nonlinearity>(problem: &ProblemDef<N>, du_l: f64) -> Result<f64, BoundsError> {
    let len = problem.b - problem.a;
    match s_star_integral(problem, du_l) {
        Ok(v) => Ok(v.min(len)),
        // A divergent integral leaves only the interval length.
        Err(BoundsError::DivergentIntegral) if len.is_finite() => Ok(len),
        Err(e) => Err(e),
    }
}

/// `M* = Phi^{-1}(((1 + 3 eps)^2 - u_l'^2) / 2)`, by bisection with bracket growth.
pub fn compute_m_star<N: Nonlinearity>(problem: &ProblemDef<N>, epsilon: f64, du_l: f64) -> Result<f64, BoundsError> {
    check_autonomous(problem)?;
    check_epsilon(epsilon)?;
    let target = 0.5 * ((1.0 + 3.0 * epsilon).powi(2) - du_l * du_l);
    let u_l = problem.u_left;
    if target < 0.0 || target.is_nan() {
        return Err(BoundsError::NoRoot { target });
    }
    if target == 0.0 {
        return Ok(u_l);
    }
    let f = |u: f64| -> Result<f64, BoundsError> { Ok(phi(problem, u_l, u)? - target) };
    let (mut lo, mut width) = (u_l, 1.0);
    let mut hi = u_l + width;
    let mut grown = 0;
    while f(hi)? < 0.0 {
        lo = hi;
        width *= 2.0;
        hi = u_l + width;
        grown += 1;
        if grown > MAX_DOUBLINGS || !hi.is_finite() {
            return Err(BoundsError::NoRoot { target });
        }
    }
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid)? < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// The theorem's original `M* = S* (1 + 3 eps - u_l') / 2`.
pub fn m_star_original(s_star: f64, epsilon: f64, du_l: f64) -> f64 {
    0.5 * s_star * (1.0 + 3.0 * epsilon - du_l)
}

/// `|N^(order)(u)|` for `order` in `0..=2`.
fn n_deriv_abs<N: Nonlinearity>(problem: &ProblemDef<N>, order: usize, u: f64) -> f64 {
    let a = problem.a;
    match order {
        0 => problem.n(u, a).abs(),
        1 => problem.n_u(u, a).abs(),
        _ => problem.nonlinearity.n_uu(u, a).abs(),
    }
}

fn golden_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = hi - g * (hi - lo);
    let mut d = lo + g * (hi - lo);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..GOLDEN_ITERS {
        if hi - lo <= 1e-15 * (1.0 + lo.abs().max(hi.abs())) {
            break;
        }
        if fc >= fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - g * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + g * (hi - lo);
            fd = f(d);
        }
    }
    fc.max(fd)
}

/// `L_i* = max_{|u| <= M* + eps} |N^(i)(u)|` for `i = 0, 1, 2`: grid scan, then golden-section polish.
pub fn compute_l<N: Nonlinearity>(problem: &ProblemDef<N>, m_star: f64, epsilon: f64) -> [f64; 3] {
    let r = m_star + epsilon;
    let step = 2.0 * r / (GRID_POINTS - 1) as f64;
    let node = |j: usize| if j + 1 == GRID_POINTS { r } else { -r + step * j as f64 };
    let mut out = [0.0; 3];
    for (order, slot) in out.iter_mut().enumerate() {
        let f = |u: f64| n_deriv_abs(problem, order, u);
        let (best_j, best) = (0..GRID_POINTS)
            .map(|j| (j, f(node(j))))
            .fold((0, f64::NEG_INFINITY), |acc, p| if p.1 > acc.1 { p } else { acc });
        let lo = node(best_j.saturating_sub(1));
        let hi = node((best_j + 1).min(GRID_POINTS - 1));
        *slot = best.max(golden_max(f, lo, hi));
    }
    out
}

/// Direction of the ratio defining `mu` at the right end of the scanned grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Trend {
    Increasing,
    Decreasing,
    Flat,
}

/// `sup N(u) u / (1 + int_{u*}^{u} N(xi) xi d xi)` over a truncated grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MuEstimate {
    pub value: f64,
    /// Where the supremum was attained on the grid.
    pub at: f64,
    /// The ratio at the right end of the grid.
    pub tail_value: f64,
    pub tail_trend: Trend,
    /// Always true: the supremum over `[u*, inf)` is estimated on `[u*, u_max]`.
    pub truncated: bool,
}

/// Estimates `mu` on `[u_istar, u_max]` from a grid of [`GRID_POINTS`] points.
pub fn compute_mu<N: Nonlinearity>(problem: &ProblemDef<N>, u_istar: f64, u_max: f64) -> Result<MuEstimate, BoundsError> {
    check_autonomous(problem)?;
    if !(u_max >= u_istar) {
        return Err(BoundsError::EmptyInterval { lo: u_istar, hi: u_max });
    }
    let a = problem.a;
    let ratio = |u: f64| -> Result<f64, BoundsError> { Ok(problem.n(u, a) * u / (1.0 + phi(problem, u_istar, u)?)) };
    let step = (u_max - u_istar) / (GRID_POINTS - 1) as f64;
    let mut best = (f64::NEG_INFINITY, u_istar);
    let mut last = [f64::NAN; 2];
    for j in 0..GRID_POINTS {
        let u = if j + 1 == GRID_POINTS { u_max } else { u_istar + step * j as f64 };
        let r = ratio(u)?;
        if r > best.0 {
            best = (r, u);
        }
        last = [last[1], r];
    }
    let tail_trend = if step == 0.0 || last[1] == last[0] {
        Trend::Flat
    } else if last[1] > last[0] {
        Trend::Increasing
    } else {
        Trend::Decreasing
    };
    Ok(MuEstimate {
        value: best.0,
        at: best.1,
        tail_value: last[1],
        tail_trend,
        truncated: true,
    })
}

/// Default right end for [`compute_mu`]: `u* + 20 / sqrt(N(u*))`.
pub fn default_mu_end<N: Nonlinearity>(problem: &ProblemDef<N>, u_istar: f64) -> f64 {
    let n = problem.n(u_istar, problem.a).abs();
    u_istar + if n > 0.0 { 20.0 / n.sqrt() } else { 20.0 }
}

/// The constants `eps, S*, M*, L0*, L1*, L2*`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundConstants {
    pub epsilon: f64,
    #[serde(rename = "S_star")]
    pub s_star: f64,
    #[serde(rename = "M_star")]
    pub m_star: f64,
    #[serde(rename = "L0")]
    pub l0: f64,
    #[serde(rename = "L1")]
    pub l1: f64,
    #[serde(rename = "L2")]
    pub l2: f64,
}

impl BoundConstants {
    pub fn compute<N: Nonlinearity>(
        problem: &ProblemDef<N>,
        epsilon: f64,
        du_l: f64,
        rule: MStarRule,
    ) -> Result<Self, BoundsError> {
        check_epsilon(epsilon)?;
        let s_star = compute_s_star(problem, du_l)?;
        let m_star = match rule {
            MStarRule::Sharp => compute_m_star(problem, epsilon, du_l)?,
            MStarRule::Original => m_star_original(s_star, epsilon, du_l),
        };
        let [l0, l1, l2] = compute_l(problem, m_star, epsilon);
        Ok(BoundConstants {
            epsilon,
            s_star,
            m_star,
            l0,
            l1,
            l2,
        })
    }

    /// `P*(h)` with `E* = max(1, L0 + L1 h)`.
    pub fn p_star(&self, h: f64) -> f64 {
        let BoundConstants { s_star, m_star: m, l0, l1, l2, .. } = *self;
        let e = 1f64.max(l0 + l1 * h);
        let k = m * (l1 + h * (l1 + l2));
        let growth = (s_star * (e + k)).exp_m1();
        // (1 + h K) e^{hE} - 1, kept accurate for small h.
        let denom = (h * e).exp_m1() + h * k * (h * e).exp();
        0.5 * h * m * (l2 + l1 * l0 * m) * (h * e).exp() * growth / denom
    }

    /// The theorem's `h`-independent `P*`.
    pub fn p_star_original(&self) -> f64 {
        let BoundConstants { s_star, m_star: m, l0, l1, l2, .. } = *self;
        let expo = (s_star + 1.0) * 1f64.max(l0 + l1) + s_star * m * (2.0 * l1 + l2);
        0.5 * m * (l2 + l1 * l0 * m) * expo.exp() / (l1 * m + 1f64.max(l0))
    }

    /// `h^2 P*(h)`, the bound on straight-phase errors in `u` and `u'`.
    pub fn straight_bound(&self, h: f64) -> f64 {
        h * h * self.p_star(h)
    }

    /// `h < min(1, sqrt(eps / P*), eps / (L0* M*))`.
    pub fn first_restriction_holds(&self, h: f64) -> bool {
        let p = self.p_star(h);
        h > 0.0 && h < 1.0 && h < (self.epsilon / p).sqrt() && h < self.epsilon / (self.l0 * self.m_star)
    }

    /// `h < min((1 - 2 eps) / P*, 1 / (3 mu))`.
    pub fn second_restriction_holds(&self, h: f64, mu: f64) -> bool {
        h < (1.0 - 2.0 * self.epsilon) / self.p_star(h) && h < 1.0 / (3.0 * mu)
    }
}

/// Bounds on `|x_i - x(u_i)|` and `|x'_i - x'(u_i)|` at one inverse-phase knot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KnotBound {
    pub u: f64,
    pub x_err: f64,
    pub xp_err: f64,
}

/// `N(u) u` and its first two derivatives.
fn script_n<N: Nonlinearity>(problem: &ProblemDef<N>, u: f64) -> [f64; 3] {
    let a = problem.a;
    let (n, n1, n2) = (problem.n(u, a), problem.n_u(u, a), problem.nonlinearity.n_uu(u, a));
    [n * u, n1 * u + n, n2 * u + 2.0 * n1]
}

/// Evaluates the inverse-phase bounds at increasing `us`, starting from `u_istar`,
/// without checking the restrictions on `h`.
pub fn inverse_bound_formula<N: Nonlinearity>(
    problem: &ProblemDef<N>,
    c: &BoundConstants,
    u_istar: f64,
    us: &[f64],
    h: f64,
) -> Result<Vec<KnotBound>, BoundsError> {
    check_autonomous(problem)?;
    let eps = c.epsilon;
    let q = 1.0 - 2.0 * eps;
    let p = c.p_star(h);
    let lm = c.l0 * c.m_star;
    let lead = (lm / (q * q) + 1.0) * p / q;
    let x_first = {
        let d = 1.0 - p * h * h - lm * h;
        if d > 0.0 {
            p * h * h / d
        } else {
            f64::INFINITY
        }
    };
    // Both integrands share the factor ((1 - 2 eps)^2 + 2 int_{u*}^{zeta} N xi d xi)^{-1/2}.
    let weight = |z: f64| -> Result<f64, QuadError> { Ok((q * q + 2.0 * phi(problem, u_istar, z)?).powf(-0.5)) };
    let e_integrand = |z: f64| -> Result<f64, QuadError> {
        let [n0, n1, _] = script_n(problem, z);
        let d = 1.0 - 6.0 * eps + phi(problem, u_istar - 2.0 * h, z - 2.0 * h)?;
        Ok(((n0 + h * n1) / d.sqrt() + 2.0 * h * n0 * n0 / d.powf(1.5)) * weight(z)?)
    };
    let t_integrand = |z: f64| -> Result<f64, QuadError> {
        let [n0, n1, n2] = script_n(problem, z);
        let d = 1.0 - 6.0 * eps + 2.0 * phi(problem, u_istar - h, z - h)?;
        Ok((n2 / d + 6.0 * n1 * n0 / (d * d) + 8.0 * n0.powi(3) / d.powi(3)) * weight(z)?)
    };
    let gauss = |f: &dyn Fn(f64) -> Result<f64, QuadError>, lo: f64, hi: f64| -> Result<f64, BoundsError> {
        let mut err = None;
        let v = quad::gauss(COMPOSITE_NODES, lo, hi, |z| match f(z) {
            Ok(v) => v,
            Err(e) => {
                err = Some(e);
                f64::NAN
            }
        });
        match err {
            Some(e) => Err(e.into()),
            None if v.is_finite() => Ok(v),
            None => Err(QuadError::NonFinite { at: 0.5 * (lo + hi) }.into()),
        }
    };
    // e_int = int E-integrand, t1 = int T, t2 = int_{u*}^{u} (u - zeta) T(zeta) d zeta.
    let (mut e_int, mut t1, mut t2) = (0.0, 0.0, 0.0);
    let mut prev = u_istar;
    let mut out = Vec::with_capacity(us.len());
    for &u in us {
        if u < prev {
            return Err(BoundsError::PreconditionFailed("inverse-phase knots must increase in u".into()));
        }
        if u > prev {
            let du = u - prev;
            e_int += gauss(&e_integrand, prev, u)?;
            let t_piece = gauss(&t_integrand, prev, u)?;
            let t_moment = gauss(&|z| Ok((u - z) * t_integrand(z)?), prev, u)?;
            t2 += du * t1 + t_moment;
            t1 += t_piece;
        }
        let e_factor = (2.0 * e_int).exp();
        out.push(KnotBound {
            u,
            x_err: x_first + e_factor * (lead * (u - u_istar) + 0.5 * t2) * h * h,
            xp_err: e_factor * (lead + 0.5 * t1) * h * h,
        });
        prev = u;
    }
    Ok(out)
}

/// `u_{i*}`: the last knot produced by the straight formula, the first with `u' >= 1`.
pub fn u_istar(trace: &IvpTrace<f64>) -> Result<f64, BoundsError> {
    match trace.i_star {
        Some(i) if i > 0 => Ok(trace.knots[i - 1].u),
        _ => Err(BoundsError::NoInversePhase),
    }
}

/// Inverse-phase bounds at every inverse knot of `trace`.
///
/// Fails with [`BoundsError::PreconditionFailed`] unless `h` satisfies both restrictions,
/// with `mu` estimated by [`compute_mu`] up to [`default_mu_end`].
pub fn inverse_phase_bound<N: Nonlinearity>(
    problem: &ProblemDef<N>,
    c: &BoundConstants,
    trace: &IvpTrace<f64>,
    h: f64,
) -> Result<Vec<KnotBound>, BoundsError> {
    let u0 = u_istar(trace)?;
    let mu = compute_mu(problem, u0, default_mu_end(problem, u0))?;
    if !c.first_restriction_holds(h) {
        return Err(BoundsError::PreconditionFailed(format!("h = {h} violates the straight-phase restriction")));
    }
    if !c.second_restriction_holds(h, mu.value) {
        return Err(BoundsError::PreconditionFailed(format!(
            "h = {h} violates the inverse-phase restriction (P* = {}, mu = {})",
            c.p_star(h),
            mu.value
        )));
    }
    let us: Vec<f64> = trace.inverse_suffix().iter().map(|k| k.u).collect();
    inverse_bound_formula(problem, c, u0, &us, h)
}

/// Grid check of the theorem's sign hypotheses on `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Hypotheses {
    pub n_positive: bool,
    pub n_derivatives_nonnegative: bool,
}

/// Checks `N > 0` and `N', N'', N''' >= 0` on a grid of `[lo, hi]`; `N'''` by central differences.
pub fn check_hypotheses<N: Nonlinearity>(problem: &ProblemDef<N>, lo: f64, hi: f64) -> Hypotheses {
    let a = problem.a;
    let step = (hi - lo) / (GRID_POINTS - 1) as f64;
    let d = 1e-4 * (1.0 + lo.abs().max(hi.abs()));
    let mut n_positive = true;
    let mut derivs = true;
    for j in 0..GRID_POINTS {
        let u = lo + step * j as f64;
        n_positive &= problem.n(u, a) > 0.0;
        let n2 = |v: f64| problem.nonlinearity.n_uu(v, a);
        let n3 = (n2(u + d) - n2(u - d)) / (2.0 * d);
        let tol = 1e-9 * (1.0 + problem.n(u, a).abs());
        derivs &= problem.n_u(u, a) >= -tol && n2(u) >= -tol && n3 >= -tol;
    }
    Hypotheses {
        n_positive,
        n_derivatives_nonnegative: derivs,
    }
}

/// JSON report of the bound constants at one step size.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    #[serde(flatten)]
    pub constants: BoundConstants,
    pub m_star_rule: MStarRule,
    pub h: f64,
    #[serde(rename = "P_star_at_h")]
    pub p_star_at_h: f64,
    pub straight_bound: f64,
    pub mu_estimate: Option<MuEstimate>,
    pub h_restrictions_satisfied: bool,
    pub hypotheses: Hypotheses,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_knot_bounds: Option<Vec<KnotBound>>,
}

/// Computes the constants for `problem` with initial slope `du_l` and, given a trace at step `h`,
/// `mu` and the per-knot inverse bounds when the restrictions on `h` hold.
pub fn bound_report<N: Nonlinearity>(
    problem: &ProblemDef<N>,
    epsilon: f64,
    du_l: f64,
    rule: MStarRule,
    h: f64,
    trace: Option<&IvpTrace<f64>>,
) -> Result<BoundReport, BoundsError> {
    let constants = BoundConstants::compute(problem, epsilon, du_l, rule)?;
    let mut mu_estimate = None;
    let mut per_knot_bounds = None;
    let mut ok = constants.first_restriction_holds(h);
    let mut hyp_hi = constants.m_star + epsilon;
    if let Some(t) = trace {
        if let Ok(u0) = u_istar(t) {
            let mu = compute_mu(problem, u0, default_mu_end(problem, u0))?;
            ok &= constants.second_restriction_holds(h, mu.value);
            mu_estimate = Some(mu);
            hyp_hi = hyp_hi.max(problem.u_right);
            if ok {
                per_knot_bounds = Some(inverse_phase_bound(problem, &constants, t, h)?);
            }
        }
    }
    Ok(BoundReport {
        constants,
        m_star_rule: rule,
        h,
        p_star_at_h: constants.p_star(h),
        straight_bound: constants.straight_bound(h),
        mu_estimate,
        h_restrictions_satisfied: ok,
        hypotheses: check_hypotheses(problem, problem.u_left, hyp_hi),
        per_knot_bounds,
    })
}

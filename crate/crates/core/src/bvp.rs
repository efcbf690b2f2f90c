//! Boundary value drivers: simple shooting by bisection on the initial slope,
//! and SI multiple shooting by generalized Newton sweeps over a knot mesh.

use std::io::Write;

use serde::Serialize;
use thiserror::Error;

use crate::banded::{BandedError, BandedMatrix};
use crate::interp;
use crate::ivp::{
    fmt_num, inverse_coeffs, si_march_end, si_march_trace, straight_coeffs, IvpError, IvpTrace, Regime, StepRule,
    StopReason, StopRule,
};
use crate::problem::{Nonlinearity, ProblemDef};
use crate::scalar::{Dual2, Scalar};
use crate::step_fn::{marching_tol, marching_tol_v, u_step, v_step, StepArgs, StepError};

/// Maximum number of step halvings applied to one Newton update.
pub const MAX_HALVINGS: u32 = 4;
/// A Newton step norm must exceed this before growth counts as divergence.
pub const DIVERGENCE_FLOOR: f64 = 1e-8;
/// Largest factor by which the tail extension of an initial mesh may shrink its step.
const TAIL_MAX_SHRINK: f64 = 1024.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BvpError {
    #[error("slopes {lo} and {hi} both {side} the right boundary value")]
    BadBracket { lo: f64, hi: f64, side: &'static str },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Ivp(#[from] IvpError),
    #[error("step function failed on interval {interval}: {source}")]
    StepFunctionFailure {
        interval: usize,
        #[source]
        source: StepError,
    },
    #[error("Jacobian is singular at column {col}")]
    SingularJacobian { col: usize },
    #[error("Newton step norm grew from {previous:e} to {current:e}")]
    DivergenceDetected { previous: f64, current: f64 },
    #[error("no admissible Newton step after {MAX_HALVINGS} halvings")]
    StepRejected,
    #[error("no convergence after {sweeps} sweeps (last change {change:e})")]
    MaxSweepsExceeded {
        mesh: Box<MsMesh>,
        sweeps: usize,
        change: f64,
        residual_norm: f64,
    },
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),
}

/// Settings of [`simple_shoot`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ShootingConfig {
    /// SI step size.
    pub h: f64,
    pub slope_lo: f64,
    pub slope_hi: f64,
    /// Stop once `|u(b) - u_right|` is at most this.
    pub residual_tol: f64,
    pub max_bisections: usize,
    pub step_rule: StepRule,
}

impl ShootingConfig {
    pub fn new(h: f64, slope_lo: f64, slope_hi: f64) -> Self {
        ShootingConfig {
            h,
            slope_lo,
            slope_hi,
            residual_tol: 1e-14,
            max_bisections: 400,
            step_rule: StepRule::ArcLength,
        }
    }

    /// Bracket between zero and the secant slope `(u_right - u_left) / (b - a)`.
    ///
    /// Valid whenever `N >= 0`, where solutions are convex while positive.
    pub fn for_problem<N: Nonlinearity>(problem: &ProblemDef<N>, h: f64) -> Self {
        let secant = (problem.u_right - problem.u_left) / (problem.b - problem.a);
        ShootingConfig::new(h, secant.min(0.0), secant.max(0.0))
    }

    pub fn with_step_rule(mut self, step_rule: StepRule) -> Self {
        self.step_rule = step_rule;
        self
    }
}

/// Outcome of [`simple_shoot`].
#[derive(Debug, Clone, PartialEq)]
pub struct ShootResult {
    pub slope0: f64,
    /// `u(b) - u_right` of the returned trace.
    pub residual: f64,
    pub bisections: usize,
    pub trace: IvpTrace<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Side {
    Under,
    Over,
}

fn classify<N: Nonlinearity>(
    problem: &ProblemDef<N>,
    slope: f64,
    cfg: &ShootingConfig,
    stop: &StopRule,
) -> Result<(Side, Option<f64>), BvpError> {
    match si_march_end(problem, problem.u_left, slope, cfg.h, stop) {
        Ok(end) => match end.reason {
            StopReason::ReachedXEnd => {
                let r = end.last.u - problem.u_right;
                Ok((if r < 0.0 { Side::Under } else { Side::Over }, Some(r)))
            }
            StopReason::ReachedUCap => Ok((Side::Over, None)),
            StopReason::KnotBudget => Err(BvpError::Ivp(IvpError::BudgetExhausted {
                last: end.last.re(),
                knots: end.knots,
            })),
        },
        // Blow-up and step failures both come from the solution running away.
        Err(IvpError::BlowUp { .. }) | Err(IvpError::StepFunctionFailure { .. }) => Ok((Side::Over, None)),
        Err(e) => Err(e.into()),
    }
}

/// Bisection on the initial slope `u'(a)`.
///
/// A trial overshoots when the march blows up before `b` or ends above
/// `u_right`, and undershoots when it ends below.
pub fn simple_shoot<N: Nonlinearity>(problem: &ProblemDef<N>, cfg: &ShootingConfig) -> Result<ShootResult, BvpError> {
    if !(cfg.slope_lo < cfg.slope_hi) || !(cfg.residual_tol > 0.0) {
        return Err(BvpError::InvalidConfig(format!(
            "need slope_lo < slope_hi and residual_tol > 0, got [{}, {}], {}",
            cfg.slope_lo, cfg.slope_hi, cfg.residual_tol
        )));
    }
    let stop = StopRule::for_problem(problem, cfg.h).with_step_rule(cfg.step_rule);
    let (mut lo, mut hi) = (cfg.slope_lo, cfg.slope_hi);
    let (side_lo, mut res_lo) = classify(problem, lo, cfg, &stop)?;
    let (side_hi, mut res_hi) = classify(problem, hi, cfg, &stop)?;
    let hit = |r: Option<f64>| r.is_some_and(|r| r.abs() <= cfg.residual_tol);
    let mut bisections = 0;
    if !hit(res_lo) && !hit(res_hi) {
        if side_lo == side_hi {
            let side = if side_lo == Side::Under { "undershoot" } else { "overshoot" };
            return Err(BvpError::BadBracket { lo, hi, side });
        }
        while bisections < cfg.max_bisections {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi || hi - lo <= 4.0 * f64::EPSILON * lo.abs().max(hi.abs()) {
                break;
            }
            bisections += 1;
            let (side, res) = classify(problem, mid, cfg, &stop)?;
            if side == side_lo {
                lo = mid;
                res_lo = res;
            } else {
                hi = mid;
                res_hi = res;
            }
            if hit(res) {
                break;
            }
        }
    }
    let slope0 = match (res_lo, res_hi) {
        (Some(a), Some(b)) if b.abs() < a.abs() => hi,
        (Some(_), _) => lo,
        (None, Some(_)) => hi,
        (None, None) => 0.5 * (lo + hi),
    };
    let trace = si_march_trace(problem, problem.u_left, slope0, cfg.h, &stop)?;
    if trace.stop_reason != StopReason::ReachedXEnd {
        let last = *trace.last();
        let knots = trace.len();
        return Err(IvpError::BlowUp { last, knots }.into());
    }
    let residual = trace.last().u - problem.u_right;
    Ok(ShootResult {
        slope0,
        residual,
        bisections,
        trace,
    })
}

/// One knot `(u', u, x)` of a multiple-shooting mesh.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MsPoint {
    pub u_prime: f64,
    pub u: f64,
    pub x: f64,
}

impl MsPoint {
    pub fn new(u_prime: f64, u: f64, x: f64) -> Self {
        MsPoint { u_prime, u, x }
    }

    pub fn regime(&self) -> Regime {
        Regime::of_slope(self.u_prime)
    }
}

/// The mesh `Omega_k` with its step bound and sweep counter.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MsMesh {
    pub points: Vec<MsPoint>,
    /// Bound on `max(|x_{i+1} - x_i|, |u_{i+1} - u_i|)`.
    pub h_bold: f64,
    pub iteration: usize,
    /// Scaled norm of the Newton step that produced this mesh.
    pub step_norm: Option<f64>,
}

impl MsMesh {
    /// Validates the points and refines them to the step bound.
    pub fn new(points: Vec<MsPoint>, h_bold: f64) -> Result<Self, BvpError> {
        if !(h_bold > 0.0 && h_bold < 1.0) {
            return Err(BvpError::InvalidConfig(format!("h_bold = {h_bold} outside (0, 1)")));
        }
        if points.len() < 2 {
            return Err(BvpError::InvalidMesh("need at least two points".into()));
        }
        if points.iter().any(|p| !(p.u.is_finite() && p.x.is_finite() && p.u_prime.is_finite())) {
            return Err(BvpError::InvalidMesh("non-finite coordinate".into()));
        }
        if points.windows(2).any(|w| !advances(&w[0], &w[1])) {
            return Err(BvpError::InvalidMesh("points must advance in x, and in u after inverse points".into()));
        }
        Ok(MsMesh {
            points: refine(&points, h_bold),
            h_bold,
            iteration: 0,
            step_norm: None,
        })
    }

    /// Mesh through the knots of an SI trace, with the end points pinned to the boundary values.
    pub fn from_trace<N: Nonlinearity>(
        problem: &ProblemDef<N>,
        trace: &IvpTrace<f64>,
        h_bold: f64,
    ) -> Result<Self, BvpError> {
        let mut pts: Vec<MsPoint> = trace.knots.iter().map(|k| MsPoint::new(k.u_prime, k.u, k.x)).collect();
        extend_inverse_tail(problem, &mut pts, h_bold)?;
        if let Some(first) = pts.first_mut() {
            first.u = problem.u_left;
            first.x = problem.a;
        }
        if let Some(last) = pts.last_mut() {
            last.u = problem.u_right;
            last.x = problem.b;
        }
        MsMesh::new(sanitize(pts, problem.a, problem.b), h_bold)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn slope0(&self) -> f64 {
        self.points[0].u_prime
    }

    /// `u'(b)`.
    pub fn slope1(&self) -> f64 {
        self.points[self.points.len() - 1].u_prime
    }

    /// `u` at `x` by monotone cubic Hermite interpolation.
    pub fn u_at(&self, x: f64) -> Option<f64> {
        interp::monotone_hermite_samples(self.points.iter().map(|p| (p.x, p.u, p.u_prime)), x)
    }

    /// The point whose `x` is closest to the requested position.
    pub fn nearest(&self, x: f64) -> &MsPoint {
        self.points
            .iter()
            .min_by(|a, b| (a.x - x).abs().total_cmp(&(b.x - x).abs()))
            .expect("mesh is never empty")
    }

    /// CSV with columns `i, x, u, u_prime, regime`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["i", "x", "u", "u_prime", "regime"])?;
        for (i, p) in self.points.iter().enumerate() {
            w.write_record([
                i.to_string(),
                fmt_num(p.x),
                fmt_num(p.u),
                fmt_num(p.u_prime),
                p.regime().as_str().to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Keeps points in index order while they advance inside `[a, b]`; the end points are kept as given.
///
/// A point after a straight point must increase `x` strictly. A point after an
/// inverse point must advance `u` in the direction of the slope and may repeat `x`,
/// since inside a boundary layer many knots can share one floating-point abscissa.
pub fn sanitize(points: Vec<MsPoint>, a: f64, b: f64) -> Vec<MsPoint> {
    let n = points.len();
    if n < 2 {
        return points;
    }
    let last = points[n - 1];
    let mut out: Vec<MsPoint> = Vec::with_capacity(n);
    out.push(points[0]);
    for p in &points[1..n - 1] {
        let prev = out[out.len() - 1];
        if p.x > a && p.x <= b && advances(&prev, p) {
            out.push(*p);
        }
    }
    while out.len() > 1 && !advances(&out[out.len() - 1], &last) {
        out.pop();
    }
    out.push(last);
    out
}

fn u_advances(prev: &MsPoint, p: &MsPoint) -> bool {
    (p.u - prev.u) * prev.u_prime.signum() > 0.0
}

/// Whether the interval from `prev` to `p` is a valid shooting interval.
fn advances(prev: &MsPoint, p: &MsPoint) -> bool {
    match prev.regime() {
        Regime::Straight => p.x > prev.x && (p.regime() == Regime::Straight || u_advances(prev, p)),
        Regime::Inverse => p.x >= prev.x && u_advances(prev, p),
    }
}

/// Inserts linearly interpolated points until every interval satisfies
/// `max(|dx|, |du|) <= h_bold`.
///
/// An interval is split into `max(ceil(max(|dx|, |du|) / h_bold), round(chord / h_bold))`
/// equal pieces, so a coarse trace is resampled to roughly arc-length spacing.
///
/// Slopes are interpolated as `u'` between straight points and as `x'` otherwise.
pub fn refine(points: &[MsPoint], h_bold: f64) -> Vec<MsPoint> {
    let mut out = Vec::with_capacity(points.len());
    for w in points.windows(2) {
        let (p, q) = (w[0], w[1]);
        out.push(p);
        let (dx, du) = ((q.x - p.x).abs(), (q.u - p.u).abs());
        // The slack keeps intervals that exceed h_bold only by rounding intact.
        let m = (dx.max(du) / h_bold * (1.0 - 1e-9)).ceil().max((dx.hypot(du) / h_bold).round());
        if m <= 1.0 || !m.is_finite() {
            continue;
        }
        let pieces = m as usize;
        let both_straight = p.regime() == Regime::Straight && q.regime() == Regime::Straight;
        for j in 1..pieces {
            let t = j as f64 / pieces as f64;
            let lerp = |a: f64, b: f64| a + t * (b - a);
            let u_prime = if both_straight {
                lerp(p.u_prime, q.u_prime)
            } else {
                1.0 / lerp(1.0 / p.u_prime, 1.0 / q.u_prime)
            };
            out.push(MsPoint::new(u_prime, lerp(p.u, q.u), lerp(p.x, q.x)));
        }
    }
    if let Some(last) = points.last() {
        out.push(*last);
    }
    out
}

/// Distance between two meshes, measured at the points of the coarser one.
///
/// Straight points compare `u` at equal `x` and the relative change of `u'`;
/// inverse points compare `x` at equal `u` and the relative change of `x'`.
pub fn mesh_distance(a: &MsMesh, b: &MsMesh) -> f64 {
    let (coarse, fine) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    let xs: Vec<f64> = fine.points.iter().map(|p| p.x).collect();
    let us: Vec<f64> = fine.points.iter().map(|p| p.u).collect();
    let ups: Vec<f64> = fine.points.iter().map(|p| p.u_prime).collect();
    let xps: Vec<f64> = ups.iter().map(|v| 1.0 / v).collect();
    let u_increasing = us.windows(2).all(|w| w[1] > w[0]);
    let rel = |p: f64, q: f64| {
        let s = p.abs().max(q.abs());
        if s == 0.0 {
            0.0
        } else {
            (p - q).abs() / s
        }
    };
    let mut dist: f64 = 0.0;
    for p in &coarse.points {
        if p.regime() == Regime::Inverse && u_increasing {
            let (Some(x), Some(xp)) = (
                interp::monotone_hermite(&us, &xs, &xps, p.u),
                interp::linear(&us, &xps, p.u),
            ) else {
                continue;
            };
            dist = dist.max((x - p.x).abs()).max(rel(xp, 1.0 / p.u_prime));
        } else {
            let (Some(u), Some(up)) = (interp::monotone_hermite(&xs, &us, &ups, p.x), interp::linear(&xs, &ups, p.x))
            else {
                continue;
            };
            dist = dist.max((u - p.u).abs()).max(rel(up, p.u_prime));
        }
    }
    dist
}

/// Which unknowns each knot contributes to the system `Sigma_k`.
///
/// Knot `i` carries its slope in the representation of its own regime
/// (`u'` if straight, `x'` if inverse). Interior knots also carry a position:
/// `u_i` if the step arriving at them is straight, `x_i` otherwise.
#[derive(Debug, Clone, PartialEq)]
struct Layout {
    regimes: Vec<Regime>,
}

impl Layout {
    fn intervals(&self) -> usize {
        self.regimes.len() - 1
    }

    fn unknowns(&self) -> usize {
        2 * self.intervals()
    }

    fn value_col(&self, i: usize) -> Option<usize> {
        (i >= 1 && i < self.intervals()).then(|| 2 * i - 1)
    }

    fn slope_col(&self, i: usize) -> usize {
        let n = self.intervals();
        if i == n {
            2 * n - 1
        } else {
            2 * i
        }
    }

    fn value_is_u(&self, i: usize) -> bool {
        self.regimes[i - 1] == Regime::Straight
    }
}

/// The residual system `Sigma_k` of a mesh and its Jacobian.
#[derive(Debug, Clone)]
pub struct MsSystem {
    points: Vec<MsPoint>,
    layout: Layout,
    /// Unknown vector at the mesh.
    pub unknowns: Vec<f64>,
    /// Residuals `sigma_{k,i,0}`, `sigma_{k,i,1}` interleaved by interval.
    pub residuals: Vec<f64>,
    /// Banded Jacobian with two sub- and two super-diagonals.
    pub jacobian: BandedMatrix,
}

impl MsSystem {
    pub fn len(&self) -> usize {
        self.unknowns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.unknowns.is_empty()
    }

    /// Regime of each knot, which fixes the branch of every equation.
    pub fn regimes(&self) -> &[Regime] {
        &self.layout.regimes
    }

    pub fn residual_norm(&self) -> f64 {
        max_abs(&self.residuals)
    }

    /// Residuals of this system at another unknown vector.
    pub fn residual_at<N: Nonlinearity>(&self, problem: &ProblemDef<N>, z: &[f64]) -> Result<Vec<f64>, BvpError> {
        let mut out = Vec::with_capacity(self.len());
        for i in 0..self.layout.intervals() {
            let r = interval_residual(problem, &self.layout, &self.points, z, i, &|_, v| v)?;
            out.extend(r);
        }
        Ok(out)
    }

    /// Mesh points with the unknowns replaced by `z`.
    pub fn points_at(&self, z: &[f64]) -> Vec<MsPoint> {
        (0..self.points.len())
            .map(|i| {
                let (x, u, p) = knot_state(&self.layout, &self.points, z, i, &|_, v| v);
                let u_prime = match self.layout.regimes[i] {
                    Regime::Straight => p,
                    Regime::Inverse => 1.0 / p,
                };
                MsPoint::new(u_prime, u, x)
            })
            .collect()
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| if x.is_nan() { f64::NAN } else { m.max(x.abs()) })
}

fn initial_unknowns(layout: &Layout, points: &[MsPoint]) -> Vec<f64> {
    let mut z = vec![0.0; layout.unknowns()];
    for (i, p) in points.iter().enumerate() {
        if let Some(c) = layout.value_col(i) {
            z[c] = if layout.value_is_u(i) { p.u } else { p.x };
        }
        z[layout.slope_col(i)] = match layout.regimes[i] {
            Regime::Straight => p.u_prime,
            Regime::Inverse => 1.0 / p.u_prime,
        };
    }
    z
}

/// `(x_i, u_i, slope_i)` with unknowns lifted through `var(column, value)`.
fn knot_state<S: Scalar<Real = f64>>(
    layout: &Layout,
    points: &[MsPoint],
    z: &[f64],
    i: usize,
    var: &dyn Fn(usize, f64) -> S,
) -> (S, S, S) {
    let p = points[i];
    let (mut x, mut u) = (S::from_real(p.x), S::from_real(p.u));
    if let Some(c) = layout.value_col(i) {
        if layout.value_is_u(i) {
            u = var(c, z[c]);
        } else {
            x = var(c, z[c]);
        }
    }
    let c = layout.slope_col(i);
    (x, u, var(c, z[c]))
}

/// Runs a step whose length `s` may carry an infinitesimal part, returning `(W(s), W'(s))`.
fn step_scalar_s<S: Scalar<Real = f64>>(
    a: S,
    b: S,
    c: S,
    d: S,
    s: S,
    straight: bool,
) -> Result<(S, S), StepError> {
    let sr = s.re();
    let ds = s.infinitesimal();
    let args = StepArgs::new(a, b, c, d, sr);
    let r = if straight {
        u_step(&args, marching_tol(&args))?
    } else {
        v_step(&args, marching_tol_v(&args))?
    };
    let coef = a * S::from_real(sr) + b;
    // U'' = (As + B) U and V'' = (As + B) V'.
    let second = if straight { coef * r.value } else { coef * r.deriv_s };
    Ok((r.value + r.deriv_s * ds, r.deriv_s + second * ds))
}

fn interval_residual<S: Scalar<Real = f64>, N: Nonlinearity>(
    problem: &ProblemDef<N>,
    layout: &Layout,
    points: &[MsPoint],
    z: &[f64],
    i: usize,
    var: &dyn Fn(usize, f64) -> S,
) -> Result<[S; 2], BvpError> {
    let (x0, u0, p0) = knot_state(layout, points, z, i, var);
    let (x1, u1, p1) = knot_state(layout, points, z, i + 1, var);
    let fail = |source| BvpError::StepFunctionFailure { interval: i, source };
    let next = layout.regimes[i + 1];
    match layout.regimes[i] {
        Regime::Straight => {
            let (a, b) = straight_coeffs(problem, u0, x0, p0);
            let (v, d) = step_scalar_s(a, b, p0, u0, x1 - x0, true).map_err(fail)?;
            let target = if next == Regime::Straight { p1 } else { S::one() / p1 };
            Ok([v - u1, d - target])
        }
        Regime::Inverse => {
            let (a, b) = inverse_coeffs(problem, u0, x0, p0);
            let (v, d) = step_scalar_s(a, b, p0, x0, u1 - u0, false).map_err(fail)?;
            let target = if next == Regime::Inverse { p1 } else { S::one() / p1 };
            Ok([v - x1, d - target])
        }
    }
}

/// Builds `Sigma_k` and its Jacobian by dual-number seeding of each unknown
/// in the two-knot stencil of every interval.
pub fn ms_build_system<N: Nonlinearity>(problem: &ProblemDef<N>, mesh: &MsMesh) -> Result<MsSystem, BvpError> {
    let points = mesh.points.clone();
    if points.len() < 2 {
        return Err(BvpError::InvalidMesh("need at least two points".into()));
    }
    let layout = Layout {
        regimes: points.iter().map(MsPoint::regime).collect(),
    };
    let z = initial_unknowns(&layout, &points);
    let n = layout.unknowns();
    let mut jacobian = BandedMatrix::zeros(n, 2, 2);
    let mut residuals = Vec::with_capacity(n);
    for i in 0..layout.intervals() {
        let r = interval_residual(problem, &layout, &points, &z, i, &|_, v| v)?;
        residuals.extend(r);
        let cols = [
            layout.value_col(i),
            Some(layout.slope_col(i)),
            layout.value_col(i + 1),
            Some(layout.slope_col(i + 1)),
        ];
        for col in cols.into_iter().flatten() {
            let seeded = |c: usize, v: f64| {
                if c == col {
                    Dual2::variable(v)
                } else {
                    Dual2::constant(v)
                }
            };
            let d = interval_residual(problem, &layout, &points, &z, i, &seeded)?;
            jacobian.set(2 * i, col, d[0].der);
            jacobian.set(2 * i + 1, col, d[1].der);
        }
    }
    Ok(MsSystem {
        points,
        layout,
        unknowns: z,
        residuals,
        jacobian,
    })
}

fn slopes_keep_sign(sys: &MsSystem, z: &[f64]) -> bool {
    (0..sys.points.len()).all(|i| {
        let c = sys.layout.slope_col(i);
        let old = sys.unknowns[c];
        sys.layout.regimes[i] == Regime::Straight || (z[c] != 0.0 && z[c].signum() == old.signum())
    })
}

/// One generalized Newton iteration on `Sigma_k`, followed by sorting,
/// dropping of inverted points and refinement to the step bound.
///
/// The update is halved (up to [`MAX_HALVINGS`] times) while it increases the
/// residual norm or flips the sign of an inverse slope.
pub fn ms_newton_sweep<N: Nonlinearity>(problem: &ProblemDef<N>, mesh: &MsMesh) -> Result<MsMesh, BvpError> {
    let sys = ms_build_system(problem, mesh)?;
    let f0 = sys.residual_norm();
    let rhs: Vec<f64> = sys.residuals.iter().map(|r| -r).collect();
    let delta = sys.jacobian.clone().solve(&rhs).map_err(|e| match e {
        BandedError::Singular { col } => BvpError::SingularJacobian { col },
        BandedError::DimensionMismatch { .. } => BvpError::InvalidMesh(e.to_string()),
    })?;
    let mut t = 1.0;
    let mut accepted = None;
    for halving in 0..=MAX_HALVINGS {
        let z: Vec<f64> = sys.unknowns.iter().zip(&delta).map(|(z, d)| z + t * d).collect();
        if slopes_keep_sign(&sys, &z) {
            let ok = match sys.residual_at(problem, &z) {
                Ok(r) => {
                    let f = max_abs(&r);
                    f.is_finite() && (f <= f0 || halving == MAX_HALVINGS)
                }
                Err(_) => false,
            };
            if ok {
                accepted = Some(z);
                break;
            }
        }
        t *= 0.5;
    }
    let z = accepted.ok_or(BvpError::StepRejected)?;
    let step_norm = t * delta
        .iter()
        .zip(&sys.unknowns)
        .fold(0.0f64, |m, (d, z)| m.max(d.abs() / (1.0 + z.abs())));
    if let Some(previous) = mesh.step_norm {
        if step_norm > 10.0 * previous && step_norm > DIVERGENCE_FLOOR {
            return Err(BvpError::DivergenceDetected {
                previous,
                current: step_norm,
            });
        }
    }
    let points = sanitize(sys.points_at(&z), problem.a, problem.b);
    Ok(MsMesh {
        points: refine(&points, mesh.h_bold),
        h_bold: mesh.h_bold,
        iteration: mesh.iteration + 1,
        step_norm: Some(step_norm),
    })
}

/// Converged multiple-shooting solution.
#[derive(Debug, Clone, PartialEq)]
pub struct MsSolution {
    pub mesh: MsMesh,
    pub sweeps: usize,
    /// [`mesh_distance`] between the last two meshes.
    pub change: f64,
    /// Max-norm of the residuals of the final mesh.
    pub residual_norm: f64,
}

/// JSON summary of a multiple-shooting run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MsSummary {
    pub lambda: Option<f64>,
    pub h_bold: f64,
    pub sweeps: usize,
    pub knots: usize,
    pub slope0: f64,
    pub slope1: f64,
    pub residual_norm: f64,
}

impl MsSolution {
    pub fn summary(&self, lambda: Option<f64>) -> MsSummary {
        MsSummary {
            lambda,
            h_bold: self.mesh.h_bold,
            sweeps: self.sweeps,
            knots: self.mesh.len(),
            slope0: self.mesh.slope0(),
            slope1: self.mesh.slope1(),
            residual_norm: self.residual_norm,
        }
    }
}

/// Repeats [`ms_newton_sweep`] until consecutive meshes are within `stop_tol`.
pub fn ms_solve<N: Nonlinearity>(
    problem: &ProblemDef<N>,
    h_bold: f64,
    init: MsMesh,
    stop_tol: f64,
    max_sweeps: usize,
) -> Result<MsSolution, BvpError> {
    let mut mesh = if init.h_bold == h_bold {
        init
    } else {
        MsMesh::new(init.points, h_bold)?
    };
    let mut change = f64::INFINITY;
    for sweeps in 1..=max_sweeps {
        let next = ms_newton_sweep(problem, &mesh)?;
        change = mesh_distance(&mesh, &next);
        mesh = next;
        if change <= stop_tol {
            let residual_norm = ms_build_system(problem, &mesh)?.residual_norm();
            return Ok(MsSolution {
                mesh,
                sweeps,
                change,
                residual_norm,
            });
        }
    }
    let residual_norm = ms_build_system(problem, &mesh).map_or(f64::NAN, |s| s.residual_norm());
    Err(BvpError::MaxSweepsExceeded {
        mesh: Box::new(mesh),
        sweeps: max_sweeps,
        change,
        residual_norm,
    })
}

/// Initial mesh from simple shooting at step `coarse_h`, refined to `h_bold`.
///
/// Retries with the step divided by ten, down to `h_bold`, while the trace is too coarse to build on.
pub fn ms_initial_mesh<N: Nonlinearity>(
    problem: &ProblemDef<N>,
    h_bold: f64,
    coarse_h: f64,
) -> Result<MsMesh, BvpError> {
    let mut h = coarse_h.max(h_bold);
    loop {
        let built = simple_shoot(problem, &ShootingConfig::for_problem(problem, h))
            .and_then(|shot| MsMesh::from_trace(problem, &shot.trace, h_bold));
        match built {
            Err(_) if h > h_bold => h = (0.1 * h).max(h_bold),
            other => return other,
        }
    }
}

/// Continues an inverse run from the last point up to `u_right` in steps of at
/// most `h`, holding `x` at `b` once it gets there.
///
/// A steep boundary layer can pack a finite range of `u` into the last ulp of
/// `x`, so a march stopped by `x >= b` may end well short of `u_right`.
fn extend_inverse_tail<N: Nonlinearity>(
    problem: &ProblemDef<N>,
    pts: &mut Vec<MsPoint>,
    h: f64,
) -> Result<(), BvpError> {
    let Some(&last) = pts.last() else {
        return Ok(());
    };
    let dir = (problem.u_right - last.u).signum();
    if last.regime() != Regime::Inverse || problem.u_right == last.u || dir != last.u_prime.signum() {
        return Ok(());
    }
    let (mut u, mut x, mut xp) = (last.u, last.x, 1.0 / last.u_prime);
    let mut step = h;
    while (problem.u_right - u) * dir > 0.0 {
        let s = dir * step.min((problem.u_right - u).abs());
        let (a, b) = inverse_coeffs(problem, u, x, xp);
        let args = StepArgs::new(a, b, xp, x, s);
        let r = match v_step(&args, marching_tol_v(&args)) {
            Ok(r) => r,
            Err(_) if step > h / TAIL_MAX_SHRINK => {
                step *= 0.5;
                continue;
            }
            Err(source) => {
                return Err(BvpError::StepFunctionFailure {
                    interval: pts.len() - 1,
                    source,
                })
            }
        };
        u = if (problem.u_right - u - s) * dir <= 0.0 { problem.u_right } else { u + s };
        x = r.value.min(problem.b);
        xp = r.deriv_s;
        pts.push(MsPoint::new(1.0 / xp, u, x));
        step = (2.0 * step).min(h);
    }
    Ok(())
}

/// Default coarse step of [`ms_initial_mesh`]: `10 h_bold`, at most `0.1`.
pub fn default_coarse_h(h_bold: f64) -> f64 {
    (10.0 * h_bold).min(0.1)
}

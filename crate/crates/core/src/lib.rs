//! Straight-inverse (SI) step-function solvers for `u'' = N(u, x) u`.
//!
//! The solution is marched with the step functions `U` and `V`, which solve
//! linearized equations with coefficients frozen at the previous knot. While
//! `|u'| <= 1` the marcher advances in `x` ("straight"); once the solution gets
//! steep it advances in `u` and approximates the inverse function `x(u)`.
//!
//! - [`step_fn`]: `U`, `V` by successive approximations with analytic tail bounds.
//! - [`ivp`]: the SI recurrence for initial value problems.
//! - [`bvp`]: simple shooting and SI multiple shooting with a banded Newton solve.
//! - [`bounds`]: a-priori error constants and per-knot bounds.
//! - [`oracle`]: the exact inverse solution of autonomous problems by quadrature.
//!
//! All step arithmetic is generic over [`Scalar`]: `f32`, `f64` and the dual
//! numbers [`Dual2`], which carry exact first derivatives through a march.
//!
//! ```
//! use sibvp::{simple_shoot, ProblemDef, ShootingConfig};
//!
//! let p = ProblemDef::troesch(2.0);
//! let shot = simple_shoot(&p, &ShootingConfig::for_problem(&p, 1e-3)).unwrap();
//! assert!((shot.slope0 - 0.5186212).abs() < 1e-6);
//! ```

pub mod banded;
pub mod bounds;
pub mod bvp;
pub mod interp;
pub mod ivp;
pub mod oracle;
pub mod problem;
pub mod quad;
pub mod scalar;
pub mod step_fn;

pub use banded::{BandedError, BandedMatrix};
pub use bounds::{BoundConstants, BoundReport, BoundsError, KnotBound, MStarRule};
pub use bvp::{
    ms_build_system, ms_initial_mesh, ms_newton_sweep, ms_solve, simple_shoot, BvpError, MsMesh, MsPoint,
    MsSolution, MsSummary, ShootResult, ShootingConfig,
};
pub use ivp::{si_march, si_march_trace, IvpError, IvpTrace, Knot, Regime, StepRule, StopReason, StopRule};
pub use oracle::{exact_slope, InverseSolution, OracleError};
pub use problem::{ConstantN, Nonlinearity, ProblemDef, Troesch, ZeroN};
pub use scalar::{Dual2, Real, Scalar};
pub use step_fn::{u_step, v_step, StepArgs, StepError, StepResult};

/// Dual numbers over `f64`.
pub type Dual = Dual2<f64>;
/// Step-function parameters over `f64`.
pub type StepArgs64 = StepArgs<f64>;
/// An SI trace over `f64`.
pub type Trace = IvpTrace<f64>;
/// An SI trace carrying derivatives with respect to one seeded input.
pub type DualTrace = IvpTrace<Dual>;
/// The benchmark problem `u'' = lambda sinh(lambda u)`, `u(0) = 0`, `u(1) = 1`.
pub type TroeschProblem = ProblemDef<Troesch>;

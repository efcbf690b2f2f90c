//! The four subcommands.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use sibvp::bounds::{bound_report, BoundReport, MStarRule};
use sibvp::bvp::default_coarse_h;
use sibvp::ivp::fmt_num;
use sibvp::{
    exact_slope, ms_initial_mesh, ms_solve, si_march, si_march_trace, simple_shoot, Knot, ProblemDef, Regime,
    ShootingConfig, StepRule, StopReason, StopRule,
};

use crate::args::{Format, Method, RunConfig, StepRuleArg};
use crate::error::CliError;
use crate::output::{emit, fmt_opt, to_json, CsvDoc, Meta};

/// Multiple shooting stops once consecutive meshes differ by at most this.
pub const MS_STOP_TOL: f64 = 1e-12;
pub const MS_MAX_SWEEPS: usize = 30;

pub const TABLE1_LAMBDAS: [f64; 9] = [2.0, 3.0, 5.0, 8.0, 20.0, 30.0, 50.0, 61.0, 100.0];
pub const TABLE2_LAMBDAS: [f64; 8] = [2.0, 3.0, 5.0, 8.0, 10.0, 20.0, 30.0, 50.0];
pub const TABLE3_LAMBDA: f64 = 10.0;
pub const TABLE3_STATIONS: [f64; 6] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.999];
pub const TABLE4_LAMBDA: f64 = 100.0;
/// Reference `u'(0)` for `lambda = 100`.
pub const TABLE4_REFERENCE: f64 = 2.976060781e-43;
/// Coarsest step of tables 1 to 3.
pub const TABLES_COARSEST_H: f64 = 1e-3;
/// Coarsest step of table 4.
pub const TABLE4_COARSEST_H: f64 = 1e-2;

/// One Troesch solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveSpec {
    pub lambda: f64,
    pub h: f64,
    /// Mesh spacing of multiple shooting; `h` when absent.
    pub h_bold: Option<f64>,
    pub method: Method,
    pub step_rule: StepRule,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Station {
    pub x: f64,
    pub u: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveReport {
    pub lambda: f64,
    pub h: f64,
    pub method: Method,
    pub slope0: f64,
    /// `x'(u_right)`.
    pub slope1_inverse: f64,
    /// `u'(b)`.
    pub slope1: f64,
    pub knots: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweeps: Option<usize>,
    pub stations: Vec<Station>,
}

/// Solves Troesch's problem and evaluates `u` at `stations`.
pub fn solve_troesch(spec: &SolveSpec, stations: &[f64]) -> Result<SolveReport, CliError> {
    let p = ProblemDef::troesch(spec.lambda);
    match spec.method {
        Method::Simple => {
            let cfg = ShootingConfig::for_problem(&p, spec.h).with_step_rule(spec.step_rule);
            let shot = simple_shoot(&p, &cfg)?;
            let last = shot.trace.last();
            let slope1_inverse = match last.regime {
                Regime::Inverse => last.x_prime,
                Regime::Straight => 1.0 / last.u_prime,
            };
            Ok(SolveReport {
                lambda: spec.lambda,
                h: spec.h,
                method: spec.method,
                slope0: shot.slope0,
                slope1_inverse,
                slope1: shot.trace.end_slope(),
                knots: shot.trace.len(),
                sweeps: None,
                stations: stations.iter().map(|&x| Station { x, u: shot.trace.u_at(x) }).collect(),
            })
        }
        Method::Multiple => {
            let h_bold = spec.h_bold.unwrap_or(spec.h);
            let coarse = if spec.h_bold.is_some() { spec.h } else { default_coarse_h(h_bold) };
            let init = ms_initial_mesh(&p, h_bold, coarse)?;
            let sol = ms_solve(&p, h_bold, init, MS_STOP_TOL, MS_MAX_SWEEPS)?;
            let mesh = &sol.mesh;
            Ok(SolveReport {
                lambda: spec.lambda,
                h: h_bold,
                method: spec.method,
                slope0: mesh.slope0(),
                slope1_inverse: 1.0 / mesh.slope1(),
                slope1: mesh.slope1(),
                knots: mesh.len(),
                sweeps: Some(sol.sweeps),
                stations: stations.iter().map(|&x| Station { x, u: mesh.u_at(x) }).collect(),
            })
        }
    }
}

fn meta(cfg: &RunConfig) -> Meta {
    Meta::new(cfg.hash())
}

fn lambda(cfg: &RunConfig) -> Result<f64, CliError> {
    cfg.problem
        .lambda
        .ok_or_else(|| CliError::Config("--lambda is required".into()))
}

pub fn cmd_solve(cfg: &RunConfig) -> Result<(), CliError> {
    let spec = SolveSpec {
        lambda: lambda(cfg)?,
        h: cfg.h,
        h_bold: cfg.h_bold,
        method: cfg.method,
        step_rule: cfg.step_rule.into(),
    };
    let report = solve_troesch(&spec, &cfg.stations)?;
    let meta = meta(cfg);
    let bytes = match cfg.format {
        Format::Json => to_json(&report, &meta)?,
        Format::Csv => solve_csv(&report, &meta)?,
    };
    emit(cfg.out.as_deref(), &bytes)
}

/// One row per station, with the scalar fields repeated; one row without a station when there are none.
fn solve_csv(r: &SolveReport, meta: &Meta) -> Result<Vec<u8>, CliError> {
    let mut doc = CsvDoc::new(
        meta,
        &["lambda", "h", "method", "slope0", "slope1_inverse", "slope1", "knots", "sweeps", "x", "u"],
    )?;
    let method = match r.method {
        Method::Simple => "simple",
        Method::Multiple => "multiple",
    };
    let head = [
        fmt_num(r.lambda),
        fmt_num(r.h),
        method.to_string(),
        fmt_num(r.slope0),
        fmt_num(r.slope1_inverse),
        fmt_num(r.slope1),
        r.knots.to_string(),
        r.sweeps.map(|s| s.to_string()).unwrap_or_default(),
    ];
    if r.stations.is_empty() {
        doc.row(head.iter().cloned().chain([String::new(), String::new()]))?;
    }
    for s in &r.stations {
        doc.row(head.iter().cloned().chain([fmt_num(s.x), fmt_opt(s.u)]))?;
    }
    doc.finish()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarchReport {
    pub lambda: f64,
    pub h: f64,
    pub step_rule: StepRuleArg,
    pub slope0: f64,
    pub stop_reason: StopReason,
    pub i_star: Option<usize>,
    pub knots: Vec<Knot<f64>>,
}

pub fn cmd_march(cfg: &RunConfig) -> Result<(), CliError> {
    let lambda = lambda(cfg)?;
    let p = cfg.problem()?;
    let slope0 = match cfg.slope {
        Some(s) => s,
        None => {
            let shoot = ShootingConfig::for_problem(&p, cfg.h).with_step_rule(cfg.step_rule.into());
            simple_shoot(&p, &shoot)?.slope0
        }
    };
    let stop = StopRule::for_problem(&p, cfg.h).with_step_rule(cfg.step_rule.into());
    let trace = si_march_trace(&p, p.u_left, slope0, cfg.h, &stop)?;
    let meta = meta(cfg);
    let bytes = match cfg.format {
        Format::Csv => {
            let mut buf = meta.comment_line().into_bytes();
            trace.write_csv(&mut buf)?;
            buf
        }
        Format::Json => to_json(
            &MarchReport {
                lambda,
                h: cfg.h,
                step_rule: cfg.step_rule,
                slope0,
                stop_reason: trace.stop_reason,
                i_star: trace.i_star,
                knots: trace.knots,
            },
            &meta,
        )?,
    };
    emit(cfg.out.as_deref(), &bytes)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundsOutput {
    pub lambda: f64,
    /// Initial slope the constants and the trace are computed from.
    pub slope0: f64,
    #[serde(flatten)]
    pub report: BoundReport,
}

/// Bound report for Troesch's problem on a uniform-step trace from `slope0`,
/// or from the exact slope when `slope0` is `None`.
pub fn troesch_bounds(lambda: f64, h: f64, epsilon: f64, slope0: Option<f64>) -> Result<BoundsOutput, CliError> {
    let p = ProblemDef::troesch(lambda);
    let du_l = match slope0 {
        Some(s) => s,
        None => exact_slope(&p)?,
    };
    let trace = si_march(&p, p.u_left, du_l, h, &StopRule::for_problem(&p, h))?;
    let report = bound_report(&p, epsilon, du_l, MStarRule::Sharp, h, Some(&trace))?;
    Ok(BoundsOutput {
        lambda,
        slope0: du_l,
        report,
    })
}

pub fn cmd_bounds(cfg: &RunConfig) -> Result<(), CliError> {
    let out = troesch_bounds(lambda(cfg)?, cfg.h, cfg.epsilon, cfg.slope)?;
    let meta = meta(cfg);
    let bytes = match cfg.format {
        Format::Json => to_json(&out, &meta)?,
        Format::Csv => {
            let r = &out.report;
            let c = &r.constants;
            let mut doc = CsvDoc::new(
                &meta,
                &[
                    "lambda",
                    "slope0",
                    "epsilon",
                    "S_star",
                    "M_star",
                    "L0",
                    "L1",
                    "L2",
                    "h",
                    "P_star_at_h",
                    "straight_bound",
                    "mu",
                    "h_restrictions_satisfied",
                ],
            )?;
            doc.row([
                fmt_num(out.lambda),
                fmt_num(out.slope0),
                fmt_num(c.epsilon),
                fmt_num(c.s_star),
                fmt_num(c.m_star),
                fmt_num(c.l0),
                fmt_num(c.l1),
                fmt_num(c.l2),
                fmt_num(r.h),
                fmt_num(r.p_star_at_h),
                fmt_num(r.straight_bound),
                fmt_opt(r.mu_estimate.map(|m| m.value)),
                r.h_restrictions_satisfied.to_string(),
            ])?;
            doc.finish()?
        }
    };
    emit(cfg.out.as_deref(), &bytes)
}

/// Steps `10^-k` from `coarsest` down to `finest`; just `[finest]` when it is coarser.
pub fn decades(coarsest: f64, finest: f64) -> Vec<f64> {
    let first = (-coarsest.log10()).round() as i32;
    let last = (-finest.log10()).round() as i32;
    if last < first {
        return vec![finest];
    }
    (first..=last).map(|k| format!("1e-{k}").parse().expect("valid float")).collect()
}

type Cell = Result<SolveReport, String>;

fn run_cell(spec: &SolveSpec, stations: &[f64]) -> Cell {
    solve_troesch(spec, stations).map_err(|e| e.to_string())
}

fn column(prefix: &str, h: f64) -> String {
    format!("{prefix}[h={h:e}]")
}

fn cell_value(cell: &Cell, f: impl Fn(&SolveReport) -> Option<f64>) -> String {
    match cell {
        Ok(r) => f(r).map_or_else(|| "NA".into(), fmt_num),
        Err(_) => "NA".into(),
    }
}

fn notes<'a>(cells: impl Iterator<Item = (f64, &'a Cell)>) -> String {
    cells
        .filter_map(|(h, c)| c.as_ref().err().map(|e| format!("h={h:e}: {e}")))
        .collect::<Vec<_>>()
        .join("; ")
}

/// Paths written by [`cmd_tables`].
pub fn cmd_tables(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let dir = cfg.out.clone().unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir).map_err(|source| CliError::Io {
        path: dir.clone(),
        source,
    })?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Config(format!("cannot start worker pool: {e}")))?;
    let meta = meta(cfg);
    let hs = decades(TABLES_COARSEST_H, cfg.h);

    let mut lambdas: Vec<f64> = TABLE1_LAMBDAS.iter().chain(&TABLE2_LAMBDAS).copied().collect();
    lambdas.sort_by(f64::total_cmp);
    lambdas.dedup();
    let jobs: Vec<SolveSpec> = lambdas
        .iter()
        .flat_map(|&lambda| {
            hs.iter().map(move |&h| SolveSpec {
                lambda,
                h,
                h_bold: None,
                method: cfg.method,
                step_rule: cfg.step_rule.into(),
            })
        })
        .collect();
    let cells: Vec<Cell> = pool.install(|| {
        jobs.par_iter()
            .map(|s| {
                let stations: &[f64] = if s.lambda == TABLE3_LAMBDA { &TABLE3_STATIONS } else { &[] };
                run_cell(s, stations)
            })
            .collect()
    });
    let row = |lambda: f64| -> Vec<(f64, &Cell)> {
        jobs.iter()
            .zip(&cells)
            .filter(|(s, _)| s.lambda == lambda)
            .map(|(s, c)| (s.h, c))
            .collect()
    };

    let mut written = Vec::new();
    let slope_table = |name: &str, prefix: &str, rows: &[f64], f: &dyn Fn(&SolveReport) -> Option<f64>| {
        let mut header = vec!["lambda".to_string()];
        header.extend(hs.iter().map(|&h| column(prefix, h)));
        header.push("note".into());
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        let mut doc = CsvDoc::new(&meta, &header)?;
        for &lambda in rows {
            let cells = row(lambda);
            let mut fields = vec![fmt_num(lambda)];
            fields.extend(cells.iter().map(|(_, c)| cell_value(c, f)));
            fields.push(notes(cells.into_iter()));
            doc.row(fields)?;
        }
        write_file(&dir, name, &doc.finish()?)
    };
    written.push(slope_table("table1.csv", "u_prime_0", &TABLE1_LAMBDAS, &|r| Some(r.slope0))?);
    written.push(slope_table("table2.csv", "u_prime_1", &TABLE2_LAMBDAS, &|r| Some(r.slope1))?);

    let cells10 = row(TABLE3_LAMBDA);
    let mut header = vec!["x".to_string()];
    header.extend(hs.iter().map(|&h| column("u", h)));
    header.push("note".into());
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut doc = CsvDoc::new(&meta, &header)?;
    for (i, &x) in TABLE3_STATIONS.iter().enumerate() {
        let mut fields = vec![fmt_num(x)];
        fields.extend(cells10.iter().map(|(_, c)| cell_value(c, |r| r.stations[i].u)));
        fields.push(notes(cells10.iter().copied()));
        doc.row(fields)?;
    }
    written.push(write_file(&dir, "table3.csv", &doc.finish()?)?);

    // Sequential, so that the wall-clock column is not skewed by other cells.
    let mut doc = CsvDoc::new(&meta, &["h", "knots", "wall_clock_s", "slope0", "rel_diff", "note"])?;
    for h in decades(TABLE4_COARSEST_H, cfg.h) {
        let spec = SolveSpec {
            lambda: TABLE4_LAMBDA,
            h,
            h_bold: None,
            method: Method::Multiple,
            step_rule: cfg.step_rule.into(),
        };
        let start = Instant::now();
        let cell = run_cell(&spec, &[]);
        let secs = start.elapsed().as_secs_f64();
        let fields = match &cell {
            Ok(r) => [
                fmt_num(h),
                r.knots.to_string(),
                fmt_num(secs),
                fmt_num(r.slope0),
                fmt_num(((r.slope0 - TABLE4_REFERENCE) / TABLE4_REFERENCE).abs()),
                String::new(),
            ],
            Err(e) => [
                fmt_num(h),
                "NA".into(),
                "NA".into(),
                "NA".into(),
                "NA".into(),
                e.clone(),
            ],
        };
        doc.row(fields)?;
    }
    written.push(write_file(&dir, "table4.csv", &doc.finish()?)?);
    Ok(written)
}

fn write_file(dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
    let path = dir.join(name);
    emit(Some(&path), bytes)?;
    Ok(path)
}

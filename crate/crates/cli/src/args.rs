//! Command-line arguments and the validated run configuration.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};
use sibvp::bounds::DEFAULT_EPSILON;
use sibvp::{ProblemDef, StepRule, TroeschProblem};

use crate::error::CliError;

/// Default step of `solve`, `march` and `bounds`.
pub const DEFAULT_H: f64 = 1e-4;
/// Default finest step of `tables`.
pub const DEFAULT_TABLES_H: f64 = 1e-5;

#[derive(Debug, Parser)]
#[command(name = "sibvp", version, about = "Straight-inverse solver for u'' = N(u, x) u")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub opts: Options,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    /// Solve the boundary value problem and report slopes and station values.
    Solve,
    /// March the initial value problem and write every knot.
    March,
    /// Error-bound constants and per-knot inverse-phase bounds.
    Bounds,
    /// Regenerate the benchmark tables as CSV files in the --out directory.
    Tables,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ProblemName {
    /// `u'' = lambda sinh(lambda u)` on [0, 1], `u(0) = 0`, `u(1) = 1`.
    Troesch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Simple,
    Multiple,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepRuleArg {
    ArcLength,
    Uniform,
}

impl From<StepRuleArg> for StepRule {
    fn from(r: StepRuleArg) -> StepRule {
        match r {
            StepRuleArg::ArcLength => StepRule::ArcLength,
            StepRuleArg::Uniform => StepRule::Uniform,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Args)]
pub struct Options {
    #[arg(long, global = true, value_enum, default_value_t = ProblemName::Troesch)]
    pub problem: ProblemName,
    /// Problem parameter; required by solve, march and bounds.
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub lambda: Option<f64>,
    /// SI step size; the finest step for tables.
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub h: Option<f64>,
    /// Multiple-shooting mesh spacing; --h is then the step of the initial simple shooting.
    #[arg(long = "h-bold", global = true, allow_hyphen_values = true)]
    pub h_bold: Option<f64>,
    #[arg(long, global = true, value_enum, default_value_t = Method::Simple)]
    pub method: Method,
    /// Comma-separated x positions at which to report u.
    #[arg(long, global = true, value_delimiter = ',', allow_hyphen_values = true)]
    pub stations: Vec<f64>,
    #[arg(long, global = true, default_value_t = DEFAULT_EPSILON, allow_hyphen_values = true)]
    pub epsilon: f64,
    /// Initial slope u'(a) for march and bounds; solved for when omitted.
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub slope: Option<f64>,
    #[arg(long = "step-rule", global = true, value_enum, default_value_t = StepRuleArg::ArcLength)]
    pub step_rule: StepRuleArg,
    /// Output file, or output directory for tables; stdout when omitted.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Worker threads for tables.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProblemSpec {
    pub name: ProblemName,
    pub lambda: Option<f64>,
}

/// A validated configuration. Everything except the output path and the
/// worker count enters the config hash.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub command: Command,
    pub problem: ProblemSpec,
    pub h: f64,
    pub h_bold: Option<f64>,
    pub method: Method,
    pub stations: Vec<f64>,
    pub epsilon: f64,
    pub slope: Option<f64>,
    pub step_rule: StepRuleArg,
    pub format: Format,
    #[serde(skip)]
    pub out: Option<PathBuf>,
    #[serde(skip)]
    pub jobs: Option<usize>,
}

fn config_err<T>(msg: impl Into<String>) -> Result<T, CliError> {
    Err(CliError::Config(msg.into()))
}

fn in_unit_interval(name: &str, v: f64) -> Result<(), CliError> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        config_err(format!("{name} must lie in (0, 1), got {v}"))
    }
}

impl RunConfig {
    pub fn from_cli(cli: &Cli) -> Result<Self, CliError> {
        let o = &cli.opts;
        let command = cli.command;
        let tables = command == Command::Tables;

        let lambda = match (o.lambda, tables) {
            (_, true) => None,
            (Some(l), false) if l > 0.0 && l.is_finite() => Some(l),
            (Some(l), false) => return config_err(format!("lambda must be positive, got {l}")),
            (None, false) => return config_err("--lambda is required"),
        };
        let h = o.h.unwrap_or(if tables { DEFAULT_TABLES_H } else { DEFAULT_H });
        in_unit_interval("h", h)?;
        if let Some(hb) = o.h_bold {
            if command != Command::Solve || o.method != Method::Multiple {
                return config_err("--h-bold applies to solve --method multiple only");
            }
            in_unit_interval("h-bold", hb)?;
            if hb > h {
                return config_err(format!("h-bold {hb} exceeds the initial shooting step h {h}"));
            }
        }
        if !(o.epsilon > 0.0 && o.epsilon < 1.0 / 6.0) {
            return config_err(format!("epsilon must lie in (0, 1/6), got {}", o.epsilon));
        }
        if let Some(s) = o.slope {
            if !s.is_finite() {
                return config_err("slope must be finite");
            }
        }
        let domain = troesch(1.0);
        if let Some(x) = o.stations.iter().find(|&&x| !(x >= domain.a && x <= domain.b)) {
            return config_err(format!("station {x} lies outside [{}, {}]", domain.a, domain.b));
        }
        let format = match (o.format, command) {
            (Some(Format::Json), Command::Tables) => return config_err("tables are written as CSV only"),
            (Some(f), _) => f,
            (None, Command::Solve | Command::Bounds) => Format::Json,
            (None, Command::March | Command::Tables) => Format::Csv,
        };
        if o.jobs == Some(0) {
            return config_err("jobs must be at least 1");
        }
        Ok(RunConfig {
            command,
            problem: ProblemSpec {
                name: o.problem,
                lambda,
            },
            h,
            h_bold: o.h_bold,
            method: o.method,
            stations: o.stations.clone(),
            epsilon: o.epsilon,
            slope: o.slope,
            step_rule: o.step_rule,
            format,
            out: o.out.clone(),
            jobs: o.jobs,
        })
    }

    /// The configured problem; `lambda` must be set.
    pub fn problem(&self) -> Result<TroeschProblem, CliError> {
        match self.problem.lambda {
            Some(l) => Ok(troesch(l)),
            None => config_err("--lambda is required"),
        }
    }

    /// First 16 hex digits of the SHA-256 of the canonical JSON configuration.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("configuration serializes");
        let digest = Sha256::digest(bytes);
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

fn troesch(lambda: f64) -> TroeschProblem {
    ProblemDef::troesch(lambda)
}

//! Batch runner for the padiclab verification suites.
//!
//! Every suite turns an [`ExperimentConfig`] into a [`Report`].  Cases run in
//! parallel but draw from counter-indexed random streams and are collected in
//! index order, so the JSON output does not depend on the thread count.

use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use padiclab::heights::{is_prime, parse_matrix_csv, parse_rational, IntMatrix};
use serde::Serialize;
use serde_json::{json, Value};

pub mod report;
pub mod suites;

pub use report::{write_atomic, Case, Report, Section, SCHEMA_VERSION};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

fn bad(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

#[derive(Debug, Parser)]
#[command(name = "padiclab", version, about = "Run p-adic verification suites and write JSON reports")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Contraction of ‖a_n u_r w‖^-α over direction classes
    Contraction(ContractionArgs),
    /// Step size m_α per α, with a brute-force cross-check
    #[command(name = "m-alpha")]
    MAlpha(CommonArgs),
    /// Sublevel measures of quadratics over Z_p
    Interpolation(InterpolationArgs),
    /// Norm of BCH products against ‖w1 − w2‖
    Bch(CommonArgs),
    /// Gauss decomposition and the Q^H subgroup
    Gauss(CommonArgs),
    /// Regularization of random finite sets
    Bourgain(CommonArgs),
    /// Restricted projection scan on structured and random sets
    Projection(CommonArgs),
    /// Shear selection
    Shear(CommonArgs),
    /// Sobolev norm on SL2(Z/p^n)
    Sobolev(SobolevArgs),
    /// Margulis function recursion and the energy model identity
    Margulis(CommonArgs),
    /// Integer kernel bases and nearest kernel points
    Siegel(SiegelArgs),
    /// Product formula and S-adic inverse norms
    Heights(HeightsArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// enforce every precondition
    Verify,
    /// waive preconditions where possible and add diagnostic sections
    Diagnose,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SetKind {
    All,
    Structured,
    Random,
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    #[arg(long, default_value_t = 5)]
    pub p: u64,
    #[arg(long)]
    pub depth: Option<u32>,
    #[arg(long)]
    pub precision: Option<u32>,
    /// comma-separated grid
    #[arg(long, value_delimiter = ',')]
    pub alpha: Option<Vec<f64>>,
    /// comma-separated grid
    #[arg(long, value_delimiter = ',')]
    pub epsilon: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, env = "PADICLAB_THREADS")]
    pub threads: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    #[arg(long, value_enum, default_value_t = Mode::Verify)]
    pub mode: Mode,
    /// number of random cases (or random sets)
    #[arg(long)]
    pub trials: Option<usize>,
    /// which families of point sets to generate
    #[arg(long, value_enum, default_value_t = SetKind::All)]
    pub sets: SetKind,
    /// size of each random point set
    #[arg(long)]
    pub size: Option<usize>,
    /// rerun only the random case with this index
    #[arg(long)]
    pub case: Option<usize>,
    /// keep passing cases in the report even for large runs
    #[arg(long)]
    pub keep_cases: bool,
}

#[derive(Debug, Clone, Args)]
pub struct ContractionArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// check a_n with |λ| = p^n against the C2 bound instead of using n = m_α
    #[arg(long, allow_hyphen_values = true)]
    pub lambda_exp: Option<i64>,
    /// a single vector (three integers)
    #[arg(long, num_args = 3, allow_hyphen_values = true)]
    pub w: Option<Vec<i64>>,
}

#[derive(Debug, Clone, Args)]
pub struct InterpolationArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, allow_hyphen_values = true)]
    pub n: Option<i64>,
    #[arg(long, allow_hyphen_values = true)]
    pub a: Option<i64>,
    #[arg(long, allow_hyphen_values = true)]
    pub b: Option<i64>,
    #[arg(long, allow_hyphen_values = true)]
    pub c: Option<i64>,
}

#[derive(Debug, Clone, Args)]
pub struct SobolevArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// smoothness exponent
    #[arg(long, default_value_t = 5.0)]
    pub d: f64,
}

#[derive(Debug, Clone, Args)]
pub struct SiegelArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// CSV file with one matrix row per line
    #[arg(long)]
    pub matrix: Option<PathBuf>,
    /// entry bound T for the supplied matrix (default: largest |entry|)
    #[arg(long)]
    pub bound: Option<i64>,
}

#[derive(Debug, Clone, Args)]
pub struct HeightsArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// a single rational "num/den"
    #[arg(long, allow_hyphen_values = true)]
    pub x: Option<String>,
    /// finite places of S, comma-separated
    #[arg(long, value_delimiter = ',', default_value = "2,3,5,7")]
    pub primes: Vec<u64>,
}

#[derive(Debug, Clone)]
pub enum SuiteArgs {
    Contraction { lambda_exp: Option<i64>, w: Option<[i64; 3]> },
    MAlpha,
    Interpolation { single: Option<(i64, i64, i64, i64)> },
    Bch,
    Gauss,
    Bourgain,
    Projection,
    Shear,
    Sobolev { d: f64 },
    Margulis,
    Siegel { matrix: Option<(IntMatrix, i64)> },
    Heights { x: Option<String>, primes: Vec<u64> },
}

impl SuiteArgs {
    pub fn name(&self) -> &'static str {
        match self {
            SuiteArgs::Contraction { .. } => "contraction",
            SuiteArgs::MAlpha => "m-alpha",
            SuiteArgs::Interpolation { .. } => "interpolation",
            SuiteArgs::Bch => "bch",
            SuiteArgs::Gauss => "gauss",
            SuiteArgs::Bourgain => "bourgain",
            SuiteArgs::Projection => "projection",
            SuiteArgs::Shear => "shear",
            SuiteArgs::Sobolev { .. } => "sobolev",
            SuiteArgs::Margulis => "margulis",
            SuiteArgs::Siegel { .. } => "siegel",
            SuiteArgs::Heights { .. } => "heights",
        }
    }
}

/// Validated run configuration.  `threads`, `out` and `format` are not part
/// of the report.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub suite: SuiteArgs,
    pub p: u64,
    pub depth: Option<u32>,
    pub precision: Option<u32>,
    pub alpha: Option<Vec<f64>>,
    pub epsilon: Option<Vec<f64>>,
    pub seed: u64,
    pub trials: Option<usize>,
    pub sets: SetKind,
    pub size: Option<usize>,
    pub case: Option<usize>,
    pub keep_cases: bool,
    pub mode: Mode,
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
    pub format: Format,
}

impl ExperimentConfig {
    pub fn from_cli(cli: Cli) -> Result<Self, CliError> {
        let (common, suite) = match cli.command {
            Command::Contraction(a) => {
                let w = a.w.map(|v| [v[0], v[1], v[2]]);
                (a.common, SuiteArgs::Contraction { lambda_exp: a.lambda_exp, w })
            }
            Command::MAlpha(c) => (c, SuiteArgs::MAlpha),
            Command::Interpolation(a) => {
                let single = match (a.n, a.a, a.b, a.c) {
                    (Some(n), Some(x), Some(y), Some(z)) => Some((n, x, y, z)),
                    (None, None, None, None) => None,
                    _ => return Err(bad("interpolation needs all of --n, --a, --b, --c or none")),
                };
                (a.common, SuiteArgs::Interpolation { single })
            }
            Command::Bch(c) => (c, SuiteArgs::Bch),
            Command::Gauss(c) => (c, SuiteArgs::Gauss),
            Command::Bourgain(c) => (c, SuiteArgs::Bourgain),
            Command::Projection(c) => (c, SuiteArgs::Projection),
            Command::Shear(c) => (c, SuiteArgs::Shear),
            Command::Sobolev(a) => (a.common, SuiteArgs::Sobolev { d: a.d }),
            Command::Margulis(c) => (c, SuiteArgs::Margulis),
            Command::Siegel(a) => {
                let matrix = match a.matrix {
                    Some(path) => {
                        let text = std::fs::read_to_string(&path)
                            .map_err(|e| bad(format!("cannot read {}: {e}", path.display())))?;
                        let m = parse_matrix_csv(&text).map_err(|e| bad(e.to_string()))?;
                        let t = match a.bound {
                            Some(t) => t,
                            None => m
                                .iter()
                                .flatten()
                                .map(|x| i64::try_from(x.magnitude().clone()).unwrap_or(i64::MAX))
                                .max()
                                .unwrap_or(0),
                        };
                        Some((m, t))
                    }
                    None if a.bound.is_some() => return Err(bad("--bound needs --matrix")),
                    None => None,
                };
                (a.common, SuiteArgs::Siegel { matrix })
            }
            Command::Heights(a) => (a.common, SuiteArgs::Heights { x: a.x, primes: a.primes }),
        };
        let cfg = ExperimentConfig {
            suite,
            p: common.p,
            depth: common.depth,
            precision: common.precision,
            alpha: common.alpha,
            epsilon: common.epsilon,
            seed: common.seed,
            trials: common.trials,
            sets: common.sets,
            size: common.size,
            case: common.case,
            keep_cases: common.keep_cases,
            mode: common.mode,
            threads: common.threads,
            out: common.out,
            format: common.format,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), CliError> {
        if self.p <= 3 || !is_prime(self.p) {
            return Err(bad(format!("p = {} must be a prime greater than 3", self.p)));
        }
        for (name, grid) in [("alpha", &self.alpha), ("epsilon", &self.epsilon)] {
            if let Some(g) = grid {
                if g.is_empty() {
                    return Err(bad(format!("--{name} grid is empty")));
                }
                if g.iter().any(|x| !x.is_finite() || *x <= 0.0) {
                    return Err(bad(format!("--{name} values must be positive and finite")));
                }
            }
        }
        if let Some(a) = &self.alpha {
            if a.iter().any(|&x| x >= 1.0) {
                return Err(bad("--alpha values must lie in (0, 1)"));
            }
        }
        if self.threads == Some(0) {
            return Err(bad("--threads must be at least 1"));
        }
        match &self.suite {
            SuiteArgs::Contraction { lambda_exp: Some(n), .. } if *n < 1 => {
                return Err(bad("--lambda-exp must be at least 1 (|λ| > 1)"));
            }
            SuiteArgs::Contraction { w: Some(w), .. } if w.iter().all(|&x| x == 0) => {
                return Err(bad("--w must be nonzero"));
            }
            SuiteArgs::Interpolation { single: Some((n, ..)) } if *n > 0 => {
                return Err(bad("--n must be ≤ 0"));
            }
            SuiteArgs::Sobolev { d } if !d.is_finite() || *d < 0.0 => {
                return Err(bad("--d must be nonnegative"));
            }
            SuiteArgs::Heights { x, primes } => {
                if primes.is_empty() || primes.iter().any(|&q| !is_prime(q)) {
                    return Err(bad("--primes must be a nonempty list of primes"));
                }
                if let Some(x) = x {
                    parse_rational(x).map_err(|e| bad(e.to_string()))?;
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Indices of the random cases to evaluate.
    pub fn indices(&self, n: usize) -> Vec<usize> {
        match self.case {
            Some(i) if i < n => vec![i],
            Some(_) => Vec::new(),
            None => (0..n).collect(),
        }
    }

    pub fn diagnose(&self) -> bool {
        self.mode == Mode::Diagnose
    }

    fn echo(&self, params: Value) -> Value {
        json!({
            "suite": self.suite.name(),
            "p": self.p,
            "seed": self.seed,
            "mode": self.mode,
            "case": self.case,
            "params": params,
        })
    }
}

pub fn config_from_args<I, T>(args: I) -> Result<ExperimentConfig, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| bad(e.to_string()))?;
    ExperimentConfig::from_cli(cli)
}

/// Execute the suite inside a pool of the configured size.
pub fn run(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads.unwrap_or(0))
        .build()
        .map_err(|e| bad(e.to_string()))?;
    let (params, sections) = pool.install(|| suites::dispatch(cfg))?;
    Ok(Report::new(cfg.suite.name(), cfg.echo(params), sections))
}

/// Write the report where the config asks; with CSV output a JSON sibling is
/// written next to the table.
pub fn emit(cfg: &ExperimentConfig, report: &Report) -> Result<(), CliError> {
    let body = match cfg.format {
        Format::Json => report.to_json(),
        Format::Csv => report.to_csv(),
    };
    match &cfg.out {
        None => print!("{body}"),
        Some(path) => {
            write_atomic(path, &body)?;
            if cfg.format == Format::Csv {
                let mut sibling = path.with_extension("json");
                if &sibling == path {
                    sibling = PathBuf::from(format!("{}.json", path.display()));
                }
                write_atomic(&sibling, &report.to_json())?;
            }
        }
    }
    Ok(())
}

/// Exit status: 0 pass, 1 enforced failure, 2 invalid configuration.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let cfg = match ExperimentConfig::from_cli(cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("padiclab: {e}");
            return 2;
        }
    };
    let start = Instant::now();
    let report = match run(&cfg) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("padiclab: {e}");
            return 2;
        }
    };
    if let Err(e) = emit(&cfg, &report) {
        eprintln!("padiclab: {e}");
        return 2;
    }
    let failures: usize = report.sections.iter().filter(|s| s.enforced).map(|s| s.failures).sum();
    eprintln!(
        "{}: {} ({} enforced failures, wall time {:.3} s)",
        report.suite,
        if report.pass { "PASS" } else { "FAIL" },
        failures,
        start.elapsed().as_secs_f64()
    );
    if report.pass {
        0
    } else {
        1
    }
}

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::report::{Case, Section};
use crate::{CliError, ExperimentConfig, SuiteArgs};

mod arith;
mod groups;
mod sets;
mod walk;

pub type SuiteOutput = (Value, Vec<Section>);

/// Relative tolerance for every real-valued inequality.
pub const REL_TOL: f64 = 1e-9;
/// Sections with more cases than this keep only failures unless asked.
pub const KEEP_LIMIT: usize = 2000;

pub fn dispatch(cfg: &ExperimentConfig) -> Result<SuiteOutput, CliError> {
    match &cfg.suite {
        SuiteArgs::Contraction { lambda_exp, w } => walk::contraction(cfg, *lambda_exp, *w),
        SuiteArgs::MAlpha => walk::m_alpha(cfg),
        SuiteArgs::Margulis => walk::margulis(cfg),
        SuiteArgs::Interpolation { single } => sets::interpolation(cfg, *single),
        SuiteArgs::Bourgain => sets::bourgain(cfg),
        SuiteArgs::Projection => sets::projection(cfg),
        SuiteArgs::Shear => sets::shear(cfg),
        SuiteArgs::Bch => groups::bch(cfg),
        SuiteArgs::Gauss => groups::gauss(cfg),
        SuiteArgs::Sobolev { d } => groups::sobolev(cfg, *d),
        SuiteArgs::Siegel { matrix } => arith::siegel(cfg, matrix.as_ref()),
        SuiteArgs::Heights { x, primes } => arith::heights(cfg, x.as_deref(), primes),
    }
}

/// Stream `i` of section `tag` under the run seed.  Streams are disjoint, so a
/// case draws the same numbers whichever worker runs it.
pub fn case_rng(seed: u64, tag: u64, i: usize) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream((tag << 40) | i as u64);
    r
}

/// Evaluate cases in parallel, returned in index order.
pub fn par_cases<F>(idx: &[usize], f: F) -> Vec<Case>
where
    F: Fn(usize) -> Case + Sync + Send,
{
    idx.par_iter().map(|&i| f(i)).collect()
}

pub fn le_rel(lhs: f64, rhs: f64) -> bool {
    lhs <= rhs * (1.0 + REL_TOL)
}

pub fn error_case(id: impl Into<String>, err: impl std::fmt::Display, mut data: Value) -> Case {
    if let Value::Object(m) = &mut data {
        m.insert("error".into(), Value::String(err.to_string()));
    }
    Case::new(id, false, data)
}

pub fn keep(cfg: &ExperimentConfig, n: usize) -> bool {
    cfg.keep_cases || cfg.case.is_some() || n <= KEEP_LIMIT
}

pub fn section(cfg: &ExperimentConfig, name: &str, enforced: bool, cases: Vec<Case>, summary: Value) -> Section {
    let k = keep(cfg, cases.len());
    Section::from_cases(name, enforced, cases, k, summary)
}

pub fn config_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

pub fn alphas(cfg: &ExperimentConfig, default: &[f64]) -> Vec<f64> {
    cfg.alpha.clone().unwrap_or_else(|| default.to_vec())
}

pub fn epsilons(cfg: &ExperimentConfig, default: &[f64]) -> Vec<f64> {
    cfg.epsilon.clone().unwrap_or_else(|| default.to_vec())
}

/// Largest lhs/rhs over the cases that carry both.
pub fn worst_ratio(cases: &[Case]) -> Value {
    let mut best: Option<(f64, &str)> = None;
    for c in cases {
        if let (Some(l), Some(r)) = (c.lhs, c.rhs) {
            let q = if r == 0.0 { if l == 0.0 { 0.0 } else { f64::INFINITY } } else { l / r };
            if best.is_none_or(|(b, _)| q > b) {
                best = Some((q, &c.id));
            }
        }
    }
    match best {
        Some((q, id)) => json!({ "ratio": q, "case": id }),
        None => Value::Null,
    }
}

use padiclab::lie::{RVec, SL2Elem};
use padiclab::margulis::{
    atom_average, compute_m_alpha, contraction_bound, contraction_histogram, default_c2, direction_classes,
    energy_vs_margulis, margulis_function, margulis_recursion_check, norm_power, walk_convolve, WalkMeasure,
    C2_ALPHAS, C2_DEFAULT, C2_PRIMES,
};
use padiclab::padic::{max_precision, valuation_u64, Context};
use padiclab::tree::PointSet;
use rand::Rng;
use rayon::prelude::*;
use serde_json::{json, Value};

use super::*;

fn context(p: u64) -> Result<Context, CliError> {
    Context::new(p, max_precision(p)).map_err(config_err)
}

fn int_valuation(p: u64, w: &[i64; 3]) -> i64 {
    w.iter()
        .filter(|&&x| x != 0)
        .map(|&x| valuation_u64(x.unsigned_abs(), p).unwrap_or(0) as i64)
        .min()
        .unwrap_or(0)
}

pub fn contraction(cfg: &ExperimentConfig, lambda_exp: Option<i64>, w: Option<[i64; 3]>) -> Result<SuiteOutput, CliError> {
    let p = cfg.p;
    let ctx = context(p)?;
    let alphas = alphas(cfg, &C2_ALPHAS);
    let depth = cfg.depth.unwrap_or(2);
    let c2 = C2_DEFAULT;
    let vectors: Vec<[i64; 3]> = match w {
        Some(w) => vec![w],
        None => {
            if depth > 4 {
                return Err(config_err("contraction sweeps need --depth ≤ 4"));
            }
            direction_classes(p, depth).into_iter().map(|c| [c[0] as i64, c[1] as i64, c[2] as i64]).collect()
        }
    };
    let mut sections = Vec::new();
    for &alpha in &alphas {
        let (n, m_alpha) = match lambda_exp {
            Some(n) => (n, None),
            None => {
                let m = compute_m_alpha(p, alpha, c2).map_err(config_err)?;
                (m as i64, Some(m))
            }
        };
        let cases: Vec<Case> = vectors
            .par_iter()
            .map(|v| {
                let id = format!("alpha={alpha} w=[{},{},{}]", v[0], v[1], v[2]);
                let val = int_valuation(p, v);
                let mut data = json!({ "alpha": alpha, "n": n, "w": v, "valuation": val });
                let rw = RVec::from_ints(&ctx, v[0], v[1], v[2]);
                match contraction_histogram(&rw, n) {
                    Ok(h) => {
                        let lhs = h.integral(alpha);
                        let rhs = match lambda_exp {
                            Some(_) => contraction_bound(p, alpha, c2, n, val),
                            None => norm_power(p, val, alpha) / p as f64,
                        };
                        data["histogram"] = serde_json::to_value(&h).unwrap_or(Value::Null);
                        Case::bound(id, lhs, rhs, le_rel(lhs, rhs), data)
                    }
                    Err(e) => error_case(id, e, data),
                }
            })
            .collect();
        let worst = worst_ratio(&cases);
        let summary = json!({
            "alpha": alpha,
            "n": n,
            "m_alpha": m_alpha,
            "rhs": if lambda_exp.is_some() { "C2 p^(-alpha_hat n) / (p - p^alpha) |w|^-alpha" } else { "p^-1 |w|^-alpha" },
            "vectors": vectors.len(),
            "worst": worst,
        });
        // the sweep is the table itself, so every case is kept
        sections.push(Section::from_cases(&format!("alpha={alpha}"), true, cases, true, summary));
    }
    let params = json!({
        "alpha": alphas,
        "depth": if w.is_some() { Value::Null } else { json!(depth) },
        "lambda_exp": lambda_exp,
        "w": w,
        "c2": c2,
    });
    Ok((params, sections))
}

fn brute_force_m(p: u64, alpha: f64, c2: f64) -> Option<u32> {
    (1..100_000u32).find(|&m| contraction_bound(p, alpha, c2, m as i64, 0) <= 1.0 / p as f64)
}

pub fn m_alpha(cfg: &ExperimentConfig) -> Result<SuiteOutput, CliError> {
    let p = cfg.p;
    let alphas = alphas(cfg, &C2_ALPHAS);
    let depth = cfg.depth.unwrap_or(1);
    if depth > 3 {
        return Err(config_err("m-alpha sweeps need --depth ≤ 3"));
    }
    let ctx = context(p)?;
    let c2 = C2_DEFAULT;
    let mut cases = Vec::new();
    let mut ms = Vec::new();
    for &alpha in &alphas {
        let id = format!("alpha={alpha}");
        match compute_m_alpha(p, alpha, c2) {
            Ok(m) => {
                let brute = brute_force_m(p, alpha, c2);
                let at_m = contraction_bound(p, alpha, c2, m as i64, 0);
                let data = json!({ "alpha": alpha, "c2": c2, "m": m, "brute_force": brute });
                ms.push((alpha, m));
                cases.push(Case::bound(id, at_m, 1.0 / p as f64, brute == Some(m), data));
            }
            Err(e) => cases.push(error_case(id, e, json!({ "alpha": alpha }))),
        }
    }
    let mut sections = vec![section(cfg, "m_alpha", true, cases, json!({ "c2": c2, "values": ms.iter().map(|(a, m)| json!({ "alpha": a, "m": m })).collect::<Vec<_>>() }))];

    let classes = direction_classes(p, depth);
    let mut sweep = Vec::new();
    for &(alpha, m) in &ms {
        let part: Vec<Case> = classes
            .par_iter()
            .map(|c| {
                let id = format!("alpha={alpha} w=[{},{},{}]", c[0], c[1], c[2]);
                let data = json!({ "alpha": alpha, "n": m, "w": c });
                let w = RVec::from_ints(&ctx, c[0] as i64, c[1] as i64, c[2] as i64);
                match contraction_histogram(&w, m as i64) {
                    Ok(h) => {
                        let lhs = h.integral(alpha);
                        let rhs = 1.0 / p as f64;
                        Case::bound(id, lhs, rhs, le_rel(lhs, rhs), data)
                    }
                    Err(e) => error_case(id, e, data),
                }
            })
            .collect();
        sweep.extend(part);
    }
    let worst = worst_ratio(&sweep);
    sections.push(section(cfg, "sweep", true, sweep, json!({ "depth": depth, "classes": classes.len(), "worst": worst })));

    if cfg.diagnose() {
        let measured = default_c2(&C2_PRIMES, &C2_ALPHAS).map_err(config_err)?;
        let case = Case::bound(
            "c2",
            measured,
            C2_DEFAULT,
            measured == C2_DEFAULT,
            json!({ "primes": C2_PRIMES, "alphas": C2_ALPHAS, "depth": 3, "n_max": 4 }),
        );
        sections.push(Section::from_cases("c2_measurement", false, vec![case], true, json!({ "frozen": C2_DEFAULT, "measured": measured })));
    }
    Ok((json!({ "alpha": alphas, "depth": depth, "c2": c2 }), sections))
}

const MARGULIS_LEVELS: u32 = 3;

fn random_family<R: Rng>(rng: &mut R, p: u64, size: usize) -> Vec<[i64; 3]> {
    let q = p.pow(6) as i64;
    let mut out = Vec::with_capacity(size);
    while out.len() < size {
        let v = rng.gen_range(0..=2u32);
        let s = p.pow(v) as i64;
        let w = [rng.gen_range(0..q) * s, rng.gen_range(0..q) * s, rng.gen_range(0..q) * s];
        if w != [0, 0, 0] {
            out.push(w);
        }
    }
    out
}

fn random_points<R: Rng>(rng: &mut R, p: u64, depth: u32, size: usize, step: u64) -> Vec<Vec<u64>> {
    let q = p.pow(depth) / step;
    let mut seen = std::collections::BTreeSet::new();
    while seen.len() < size {
        seen.insert(vec![rng.gen_range(0..q) * step, rng.gen_range(0..q) * step, rng.gen_range(0..q) * step]);
    }
    seen.into_iter().collect()
}

pub fn margulis(cfg: &ExperimentConfig) -> Result<SuiteOutput, CliError> {
    let p = cfg.p;
    let ctx = context(p)?;
    let alpha = *alphas(cfg, &[0.5]).first().expect("nonempty grid");
    let trials = cfg.trials.unwrap_or(20);
    let size = cfg.size.unwrap_or(50);
    if size == 0 {
        return Err(config_err("--size must be positive"));
    }
    let m = compute_m_alpha(p, alpha, C2_DEFAULT).map_err(config_err)?;
    let nu = WalkMeasure { p, m_step: m, r_depth: 1 };
    let idx = cfg.indices(trials);

    let cases: Vec<Case> = idx
        .par_iter()
        .flat_map_iter(|&i| {
            let mut rng = case_rng(cfg.seed, 10, i);
            let fam = random_family(&mut rng, p, size);
            let f: Vec<RVec> = fam.iter().map(|w| RVec::from_ints(&ctx, w[0], w[1], w[2])).collect();
            let mut prev: Option<f64> = None;
            let mut out = Vec::new();
            for l in 1..=MARGULIS_LEVELS {
                let id = format!("config={i} l={l}");
                let data = json!({ "config": i, "l": l, "m_step": m, "alpha": alpha, "f": fam });
                match margulis_recursion_check(&f, alpha, &nu, l, m, false) {
                    Ok(rep) => {
                        let before = prev.unwrap_or(rep.f_identity);
                        let step_ok = le_rel(rep.lhs, before / p as f64);
                        prev = Some(rep.lhs);
                        let mut data = data;
                        data["f_identity"] = json!(rep.f_identity);
                        data["previous"] = json!(before);
                        out.push(Case::bound(id, rep.lhs, rep.bound, rep.holds && step_ok, data));
                    }
                    Err(e) => out.push(error_case(id, e, data)),
                }
            }
            out
        })
        .collect();
    let worst = worst_ratio(&cases);
    let mut sections = vec![section(cfg, "recursion", true, cases, json!({ "m_alpha": m, "levels": MARGULIS_LEVELS, "worst": worst }))];

    let model: Vec<Case> = par_cases(&idx, |i| {
        let mut rng = case_rng(cfg.seed, 11, i);
        let pts = random_points(&mut rng, p, 6, 300, 25);
        let k = rng.gen_range(0..pts.len());
        let id = format!("set={i}");
        let data = json!({ "set": i, "w0": pts[k], "depth": 6, "step": 25, "points": pts.len() });
        let res = PointSet::new(p, 3, 6, &pts).map_err(|e| e.to_string()).and_then(|f| {
            energy_vs_margulis(&f, &pts[k], alpha).map_err(|e| e.to_string())
        });
        match res {
            Ok(c) => {
                let gap = (c.energy - c.f_model).abs();
                let tol = 1e-12 * c.energy.abs().max(1.0);
                let mut data = data;
                data["energy"] = json!(c.energy);
                data["f_model"] = json!(c.f_model);
                Case::bound(id, gap, tol, gap <= tol, data)
            }
            Err(e) => error_case(id, e, data),
        }
    });
    sections.push(section(cfg, "model_identity", true, model, json!({ "relative_tolerance": 1e-12 })));

    if cfg.diagnose() && !idx.is_empty() {
        let i = idx[0];
        let mut rng = case_rng(cfg.seed, 10, i);
        let fam = random_family(&mut rng, p, size);
        let f: Vec<RVec> = fam.iter().map(|w| RVec::from_ints(&ctx, w[0], w[1], w[2])).collect();
        let fine = WalkMeasure { p, m_step: m, r_depth: 3 };
        let mut cases = Vec::new();
        for l in 1..=2u32 {
            let id = format!("config={i} l={l}");
            let r = walk_convolve(&fine, l, 1 << 16, None)
                .and_then(|atoms| Ok((atom_average(&f, alpha, &fine, &atoms)?, atoms.len())))
                .and_then(|(avg, n)| Ok((avg, n, margulis_recursion_check(&f, alpha, &fine, l, m, true)?.lhs)));
            match r {
                Ok((avg, atoms, exact)) => cases.push(Case::bound(
                    id,
                    avg,
                    exact,
                    true,
                    json!({ "atoms": atoms, "r_depth": 3, "relative_gap": (avg - exact).abs() / exact }),
                )),
                Err(e) => cases.push(error_case(id, e, json!({}))),
            }
        }
        let fe = margulis_function(&f, &SL2Elem::identity(&ctx), alpha).unwrap_or(f64::NAN);
        sections.push(Section::from_cases("atom_average", false, cases, true, json!({ "f_identity": fe })));
    }
    let params = json!({ "alpha": alpha, "trials": trials, "size": size, "m_step": m, "c2": C2_DEFAULT, "r_depth": 1 });
    Ok((params, sections))
}

use std::collections::{BTreeSet, HashMap};

use padiclab::lie::{ad_u, RVec};
use padiclab::padic::{Context, Valuation};
use padiclab::projection::{
    projection_theorem_scan, quad_sublevel_residues, shear_select, ScanParams, ZpBall,
};
use padiclab::tree::{admissible_l1, bourgain_regularize, size_condition, BourgainParams, PointSet, TreeError};
use rand::Rng;
use rayon::prelude::*;
use serde_json::{json, Value};

use super::*;
use crate::SetKind;

fn random_set<R: Rng>(rng: &mut R, p: u64, depth: u32, size: usize) -> Result<PointSet, CliError> {
    let q = p.pow(depth);
    if (size as u128) > (q as u128).pow(3) {
        return Err(config_err(format!("--size {size} exceeds the {} points of (Z/p^{depth})^3", (q as u128).pow(3))));
    }
    let mut seen = BTreeSet::new();
    while seen.len() < size {
        seen.insert(vec![rng.gen_range(0..q), rng.gen_range(0..q), rng.gen_range(0..q)]);
    }
    PointSet::new(p, 3, depth, &seen.into_iter().collect::<Vec<_>>()).map_err(config_err)
}

pub fn interpolation(cfg: &ExperimentConfig, single: Option<(i64, i64, i64, i64)>) -> Result<SuiteOutput, CliError> {
    let p = cfg.p;
    if let Some((n, a, b, c)) = single {
        let depth = cfg.depth.unwrap_or(0).max((-n) as u32);
        let q = p.checked_pow(depth.max(1)).ok_or_else(|| config_err("--depth too large"))? as i64;
        let (ra, rb, rc) = (a.rem_euclid(q) as u64, b.rem_euclid(q) as u64, c.rem_euclid(q) as u64);
        let s = quad_sublevel_residues(p, ra, rb, rc, n, depth).map_err(config_err)?;
        let measure = format!("{}/{}", s.measure.numer(), s.measure.denom());
        let lhs = num_traits::ToPrimitive::to_f64(&s.measure).unwrap_or(f64::NAN);
        let case = Case::bound(
            format!("n={n} a={a} b={b} c={c}"),
            lhs,
            s.bound,
            !s.applicable || s.holds,
            json!({ "n": n, "a": a, "b": b, "c": c, "measure": measure, "bound": s.bound, "applicable": s.applicable, "holds": s.holds }),
        );
        let params = json!({ "n": n, "a": a, "b": b, "c": c, "depth": depth });
        return Ok((params, vec![Section::from_cases("single", true, vec![case], true, json!({ "measure": measure }))]));
    }
    let coeff_depth = cfg.depth.unwrap_or(2);
    let q = p.checked_pow(coeff_depth).filter(|&q| q <= 64).ok_or_else(|| config_err("coefficient grid too large"))?;
    let ns: Vec<i64> = (-4..=0).collect();
    let depth = 4u32;
    let mut triples = Vec::new();
    for a in 0..q {
        for b in 0..q {
            for c in 0..q {
                // max norm 1: some coefficient is a unit
                if a % p != 0 || b % p != 0 || c % p != 0 {
                    triples.push((a, b, c));
                }
            }
        }
    }
    let mut sections = Vec::new();
    for &n in &ns {
        let cases: Vec<Case> = triples
            .par_iter()
            .map(|&(a, b, c)| {
                let id = format!("n={n} a={a} b={b} c={c}");
                let data = json!({ "n": n, "a": a, "b": b, "c": c });
                match quad_sublevel_residues(p, a, b, c, n, depth) {
                    Ok(s) => {
                        let lhs = num_traits::ToPrimitive::to_f64(&s.measure).unwrap_or(f64::NAN);
                        let mut data = data;
                        data["measure"] = json!(format!("{}/{}", s.measure.numer(), s.measure.denom()));
                        Case::bound(id, lhs, s.bound, s.holds, data)
                    }
                    Err(e) => error_case(id, e, data),
                }
            })
            .collect();
        let worst = worst_ratio(&cases);
        sections.push(section(cfg, &format!("n={n}"), true, cases, json!({ "bound": (p as f64).powf(2.0 + n as f64 / 2.0), "worst": worst })));
    }
    let params = json!({ "coefficient_modulus": q, "n": ns, "depth": depth, "triples": triples.len() });
    Ok((params, sections))
}

/// Largest count of a depth-k ball met by F, from residues mod p^k.
fn max_ball_count(f: &PointSet, k: u32) -> usize {
    let pk = f.p().pow(k.min(f.depth()));
    let mut counts: HashMap<Vec<u64>, usize> = HashMap::new();
    for x in f.points() {
        *counts.entry(x.iter().map(|c| c % pk).collect()).or_default() += 1;
    }
    counts.into_values().max().unwrap_or(0)
}

pub fn bourgain(cfg: &ExperimentConfig) -> Result<SuiteOutput, CliError> {
    let p = cfg.p;
    let alpha = *alphas(cfg, &[0.5]).first().expect("nonempty grid");
    let eps = *epsilons(cfg, &[0.01]).first().expect("nonempty grid");
    let depth = cfg.depth.unwrap_or(5);
    let trials = cfg.trials.unwrap_or(100);
    let waive = cfg.diagnose();
    if p.checked_pow(depth).is_none() || depth > 12 {
        return Err(config_err("--depth too large"));
    }
    let gamma = alpha - 20.0 * eps;
    let idx = cfg.indices(trials);
    let cases: Vec<Case> = par_cases(&idx, |i| {
        let mut rng = case_rng(cfg.seed, 20, i);
        let n = cfg.size.unwrap_or_else(|| rng.gen_range(1000..=10_000));
        let id = format!("set={i}");
        let data = json!({ "set": i, "size": n, "depth": depth });
        let f = match random_set(&mut rng, p, depth, n) {
            Ok(f) => f,
            Err(e) => return error_case(id, e, data),
        };
        // the energy hypothesis is existential in D; take twice the measured value
        let tree = match padiclab::tree::build_tree(&f) {
            Ok(t) => t,
            Err(e) => return error_case(id, e, data),
        };
        let max_e = f
            .points()
            .map(|w| padiclab::tree::energy_in_tree(&tree, alpha, w).unwrap_or(f64::INFINITY))
            .fold(0.0, f64::max);
        let d = 2.0 * max_e / (n as f64).powf(1.0 + eps);
        let params = BourgainParams { alpha, epsilon: eps, d, waive_size_condition: waive };
        let mut data = data;
        data["d"] = json!(d);
        match bourgain_regularize(&f, &params) {
            Ok(out) => {
                let fp = &out.fprime;
                let inside = fp.points().all(|x| f.contains(x) && f.distance_valuation(x, &out.w0) >= out.l1);
                let mut worst = 0.0f64;
                let mut scan_ok = true;
                for k in 0..=out.k_max {
                    let count = if k > f.depth() { 1 } else { max_ball_count(fp, k) };
                    let ratio = count as f64 / fp.len() as f64;
                    let bound = out.c_prime * (p as f64).powf(-out.gamma * (k as f64 - out.l1 as f64));
                    worst = worst.max(ratio / bound);
                    scan_ok &= le_rel(ratio, bound);
                }
                let (lo, hi) = out.l1_range;
                let l1_ok = out.l1 as f64 >= lo - 1e-12 && out.l1 as f64 <= hi + 1e-12;
                data["w0"] = json!(out.w0);
                data["l1"] = json!(out.l1);
                data["l1_range"] = json!([lo, hi]);
                data["c_prime"] = json!(out.c_prime);
                data["fprime_size"] = json!(fp.len());
                data["k_max"] = json!(out.k_max);
                data["inside_ball"] = json!(inside);
                data["l1_in_range"] = json!(l1_ok);
                Case::bound(id, worst, 1.0, inside && scan_ok && l1_ok && out.c_prime.is_finite(), data)
            }
            Err(TreeError::SizeCondition { lhs, rhs }) => {
                data["size_condition"] = json!({ "lhs": lhs, "rhs": rhs, "epsilon": eps });
                let mut c = error_case(id, format!("size condition fails: {lhs} <= {rhs}"), data);
                c.lhs = Some(rhs);
                c.rhs = Some(lhs);
                c
            }
            Err(e) => error_case(id, e, data),
        }
    });
    let mut sections = vec![section(
        cfg,
        "regularization",
        true,
        cases,
        json!({ "alpha": alpha, "epsilon": eps, "gamma": gamma, "size_condition_waived": waive }),
    )];

    // smallest ε with (#F)^{ε/2} > 4 log_p #F, and what it leaves of γ
    let analysis: Vec<Case> = [1000usize, 10_000]
        .iter()
        .map(|&n| {
            let (ok, lhs, rhs) = size_condition(p, n, eps);
            let eps_min = 2.0 * rhs.ln() / (n as f64).ln();
            let (lo, hi) = admissible_l1(p, n, alpha, eps);
            Case::bound(
                format!("size={n}"),
                rhs,
                lhs,
                ok,
                json!({ "size": n, "epsilon": eps, "epsilon_needed": eps_min, "gamma_at_epsilon_needed": alpha - 20.0 * eps_min, "l1_range": [lo, hi] }),
            )
        })
        .collect();
    sections.push(Section::from_cases("size_condition", false, analysis, true, json!({ "condition": "(#F)^(eps/2) > 4 log_p #F" })));
    let params = json!({ "alpha": alpha, "epsilon": eps, "depth": depth, "trials": trials, "size": cfg.size, "d": "2 * max energy / n^(1+eps)" });
    Ok((params, sections))
}

const R_DEPTH: u32 = 2;

fn axis_set(p: u64, depth: u32, axis: usize) -> PointSet {
    let coords = (0..p.pow(depth))
        .flat_map(|t| {
            let mut v = [0u64; 3];
            v[axis] = t;
            v
        })
        .collect();
    PointSet::from_flat(p, 3, depth, coords).expect("distinct axis points")
}

pub fn projection(cfg: &ExperimentConfig) -> Result<SuiteOutput, CliError> {
    let p = cfg.p;
    let alpha = *alphas(cfg, &[0.8]).first().expect("nonempty grid");
    let eps = *epsilons(cfg, &[0.05]).first().expect("nonempty grid");
    let depth = cfg.depth.unwrap_or(3);
    let trials = cfg.trials.unwrap_or(10);
    let size = cfg.size.unwrap_or(1000);
    if depth == 0 || depth > 6 || p.pow(depth) > 1 << 20 {
        return Err(config_err("--depth must lie in 1..=6"));
    }
    let sp = ScanParams {
        l0: depth,
        l1: 0,
        alpha,
        epsilon: eps,
        j: ZpBall::whole(),
        r_depth: R_DEPTH,
        d_prime: None,
        threshold: None,
    };
    let diag = cfg.diagnose();
    let mut sections = Vec::new();
    let total_r = p.pow(R_DEPTH);
    if cfg.sets != SetKind::Random {
        for (name, axis) in [("w12_axis", 1usize), ("w21_axis", 2)] {
            let e = axis_set(p, depth, axis);
            let case = match projection_theorem_scan(&e, &sp, diag) {
                Ok(rep) => {
                    let bad: Vec<u64> = rep.rs.iter().filter(|r| !r.good).map(|r| r.r).collect();
                    let pass = if axis == 1 {
                        bad.is_empty() && rep.rs.iter().all(|r| r.c_r == rep.hypothesis_d && r.er_size == e.len())
                    } else {
                        bad.len() as u64 * p == total_r
                    };
                    let want = if axis == 1 { 0.0 } else { 1.0 / p as f64 };
                    Case::bound(
                        name,
                        rep.exceptional_mass,
                        want,
                        pass,
                        json!({ "points": e.len(), "hypothesis_d": rep.hypothesis_d, "exceptional_r": bad, "max_good_constant": rep.max_good_constant }),
                    )
                }
                Err(e2) => error_case(name, e2, json!({ "points": e.len() })),
            };
            sections.push(Section::from_cases(name, true, vec![case], true, json!({ "axis": axis })));
        }
    }
    if cfg.sets != SetKind::Structured {
        let idx = cfg.indices(trials);
        let cases = par_cases(&idx, |i| {
            let mut rng = case_rng(cfg.seed, 30, i);
            let id = format!("set={i}");
            let data = json!({ "set": i, "size": size });
            let e = match random_set(&mut rng, p, depth, size) {
                Ok(e) => e,
                Err(err) => return error_case(id, err, data),
            };
            match projection_theorem_scan(&e, &sp, diag) {
                Ok(rep) => {
                    let bad: Vec<u64> = rep.rs.iter().filter(|r| !r.good).map(|r| r.r).collect();
                    let bound = 1.0 / p as f64;
                    let mut data = data;
                    data["exceptional_r"] = json!(bad);
                    data["hypothesis_d"] = json!(rep.hypothesis_d);
                    data["max_good_constant"] = json!(rep.max_good_constant);
                    Case::bound(id, rep.exceptional_mass, bound, bad.len() as u64 * p <= total_r, data)
                }
                Err(err) => error_case(id, err, data),
            }
        });
        sections.push(section(cfg, "random_sets", true, cases, json!({ "size": size, "trials": trials })));
    }
    let params = json!({ "alpha": alpha, "epsilon": eps, "l0": depth, "l1": 0, "r_depth": R_DEPTH, "sets": cfg.sets, "trials": trials, "size": size });
    Ok((params, sections))
}

fn adversarial_sets(p: u64, depth: u32) -> Vec<(&'static str, PointSet)> {
    let q = p.pow(depth);
    let units: Vec<u64> = (1..q).filter(|t| t % p != 0).collect();
    let mk = |f: &dyn Fn(u64) -> [u64; 3]| {
        PointSet::from_flat(p, 3, depth, units.iter().flat_map(|&t| f(t)).collect()).expect("distinct points")
    };
    vec![
        ("w21_line", mk(&|t| [0, 0, t])),
        ("w11_line", mk(&|t| [t, 0, 0])),
        ("skew_line", mk(&|t| [t, 0, p * t % q])),
    ]
}

/// Check the selection with p-adic arithmetic instead of residue valuations.
fn check_shear(e: &PointSet, ctx: &Context) -> (bool, Value) {
    let (p, m) = (e.p(), e.depth());
    let s = match shear_select(e) {
        Ok(s) => s,
        Err(err) => return (false, json!({ "error": err.to_string() })),
    };
    let r0 = ctx.from_residue(s.r0, m);
    let r0 = if s.r0 == 0 { ctx.zero() } else { r0 };
    let modulus = p.pow(m);
    let images: BTreeSet<Vec<u64>> = e
        .points()
        .filter_map(|w| {
            let v = RVec::new(ctx.from_residue(w[0], m), ctx.from_residue(w[1], m), ctx.from_residue(w[2], m));
            let im = ad_u(&r0, &v).ok()?;
            im.coords().iter().map(|x| if x.valuation().lower_bound() >= m as i64 { Some(0) } else { x.residue(m).ok() }).collect()
        })
        .collect();
    let mut pointwise = true;
    let mut from_e = true;
    for w in s.ehat.points() {
        from_e &= images.contains(w);
        let val = |x: u64| match ctx.from_residue(x % modulus, m).valuation() {
            Valuation::Exact(v) => v,
            _ => m as i64,
        };
        let v12 = val(w[1]);
        let vmin = w.iter().map(|&x| val(x)).min().unwrap_or(m as i64);
        // |w12| ≥ p^-4 ‖w‖ with w12 ≠ 0 mod p^m
        pointwise &= v12 < m as i64 && v12 <= vmin + 4;
    }
    let size_ok = 4 * s.ehat.len() >= e.len();
    let data = json!({ "r0": s.r0, "tried": s.tried, "ehat": s.ehat.len(), "e": e.len(), "pointwise": pointwise, "images_of_e": from_e, "quarter": size_ok });
    (pointwise && from_e && size_ok, data)
}

pub fn shear(cfg: &ExperimentConfig) -> Result<SuiteOutput, CliError> {
    let p = cfg.p;
    let depth = cfg.depth.unwrap_or(4);
    let trials = cfg.trials.unwrap_or(100);
    let size = cfg.size.unwrap_or(400);
    if depth == 0 || depth > 8 {
        return Err(config_err("--depth must lie in 1..=8"));
    }
    let ctx = Context::new(p, depth.max(4)).map_err(config_err)?;
    let mut sections = Vec::new();
    if cfg.sets != SetKind::Random {
        let cases: Vec<Case> = adversarial_sets(p, depth)
            .into_iter()
            .map(|(name, e)| {
                let (pass, data) = check_shear(&e, &ctx);
                Case::new(name, pass, data)
            })
            .collect();
        sections.push(Section::from_cases("adversarial", true, cases, true, json!({})));
    }
    if cfg.sets != SetKind::Structured {
        let idx = cfg.indices(trials);
        let cases = par_cases(&idx, |i| {
            let mut rng = case_rng(cfg.seed, 40, i);
            let id = format!("set={i}");
            match random_set(&mut rng, p, depth, size) {
                Ok(e) => {
                    let (pass, mut data) = check_shear(&e, &ctx);
                    data["set"] = json!(i);
                    Case::new(id, pass, data)
                }
                Err(err) => error_case(id, err, json!({ "set": i })),
            }
        });
        sections.push(section(cfg, "random_sets", true, cases, json!({ "size": size })));
    }
    Ok((json!({ "depth": depth, "trials": trials, "size": size, "sets": cfg.sets }), sections))
}

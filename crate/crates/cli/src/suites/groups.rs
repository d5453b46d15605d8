use padiclab::lie::{bch_product, conjugation_solve, gauss_decompose, qh_membership, SL2Elem};
use padiclab::padic::Context;
use padiclab::sample;
use padiclab::sobolev::{FiniteQuotient, D0};
use rand::Rng;
use serde_json::json;

use super::*;

fn sl2_json(g: &SL2Elem) -> Value {
    json!([g.a().to_string(), g.b().to_string(), g.c().to_string(), g.d().to_string()])
}

fn context(cfg: &ExperimentConfig, default: u32) -> Result<Context, CliError> {
    Context::new(cfg.p, cfg.precision.unwrap_or(default)).map_err(config_err)
}

pub fn bch(cfg: &ExperimentConfig) -> Result<SuiteOutput, CliError> {
    let ctx = context(cfg, 12)?;
    let trials = cfg.trials.unwrap_or(10_000);
    let min_val = 2;
    let idx = cfg.indices(trials);
    let cases = par_cases(&idx, |i| {
        let mut rng = case_rng(cfg.seed, 1, i);
        let w1 = sample::rvec(&mut rng, &ctx, min_val);
        let w2 = sample::rvec(&mut rng, &ctx, min_val);
        let id = format!("pair={i}");
        let coords = |w: &padiclab::lie::RVec| w.coords().iter().map(|x| x.to_string()).collect::<Vec<_>>();
        let data = json!({ "pair": i, "w1": coords(&w1), "w2": coords(&w2) });
        let diff = match w1.checked_sub(&w2) {
            Ok(d) => d,
            Err(e) => return error_case(id, e, data),
        };
        match bch_product(&w1, &w2) {
            Ok(w) => {
                let mut data = data;
                data["valuation"] = serde_json::to_value(w.valuation()).unwrap_or(Value::Null);
                data["expected"] = serde_json::to_value(diff.valuation()).unwrap_or(Value::Null);
                Case::new(id, w.valuation() == diff.valuation(), data)
            }
            Err(e) => error_case(id, e, data),
        }
    });
    let n = cases.len();
    let sections = vec![section(cfg, "bch_norm", true, cases, json!({ "pairs": n, "min_valuation": min_val }))];
    Ok((json!({ "precision": ctx.precision(), "trials": trials, "min_valuation": min_val }), sections))
}

/// (η, β, m) as exponents for the closure check.
const CLOSURE: (u32, u32, u32) = (1, 2, 2);
/// (η, β, m) for the conjugation triples.
const CONJ: (u32, u32, u32) = (0, 1, 1);

pub fn gauss(cfg: &ExperimentConfig) -> Result<SuiteOutput, CliError> {
    let ctx = context(cfg, 12)?;
    let trials = cfg.trials.unwrap_or(10_000);
    let pairs = trials / 10;
    let idx = cfg.indices(trials);
    let cases = par_cases(&idx, |i| {
        let mut rng = case_rng(cfg.seed, 2, i);
        let k = sample::level_element(&mut rng, &ctx, 1);
        let id = format!("k={i}");
        let data = json!({ "k": sl2_json(&k) });
        match gauss_decompose(&k, 1) {
            Ok((l, d, u)) => {
                let shapes = l.b().is_exact_zero()
                    && u.c().is_exact_zero()
                    && d.b().is_exact_zero()
                    && d.c().is_exact_zero()
                    && l.a() == ctx.one()
                    && l.d() == ctx.one()
                    && u.a() == ctx.one()
                    && u.d() == ctx.one();
                let levels = l.in_level(1) && d.in_level(1) && u.in_level(1);
                let round_trip = l.mul(&d).and_then(|x| x.mul(&u)).map(|x| x == k).unwrap_or(false);
                let mut data = data;
                data["shapes"] = json!(shapes);
                data["levels"] = json!(levels);
                data["round_trip"] = json!(round_trip);
                Case::new(id, shapes && levels && round_trip, data)
            }
            Err(e) => error_case(id, e, data),
        }
    });
    let mut sections = vec![section(cfg, "gauss", true, cases, json!({ "level": 1 }))];

    let (eta, beta, m) = CLOSURE;
    let pidx = cfg.indices(pairs);
    let cases = par_cases(&pidx, |i| {
        let mut rng = case_rng(cfg.seed, 3, i);
        let x = sample::qh_element(&mut rng, &ctx, eta, beta, m);
        let y = sample::qh_element(&mut rng, &ctx, eta, beta, m);
        let mem = |g: &SL2Elem| qh_membership(g, eta, beta, m);
        let product = x.mul(&y).map(|g| mem(&g)).unwrap_or(false);
        let checks = json!({ "x": mem(&x), "y": mem(&y), "product": product, "inverse_x": mem(&x.inv()), "inverse_y": mem(&y.inv()) });
        let pass = mem(&x) && mem(&y) && product && mem(&x.inv()) && mem(&y.inv());
        Case::new(format!("pair={i}"), pass, json!({ "x": sl2_json(&x), "y": sl2_json(&y), "checks": checks }))
    });
    sections.push(section(cfg, "qh_closure", true, cases, json!({ "eta_exp": eta, "beta_exp": beta, "m": m })));

    // q ∈ Q^H_{β,m} exactly as sampled; the lower-left entry is only β·p^-m small
    let (eta, beta, m) = CONJ;
    let conj = |tag: u64, c_depth: u32| {
        par_cases(&pidx, |i| {
            let mut rng = case_rng(cfg.seed, tag, i);
            let q = sample::qh_element(&mut rng, &ctx, eta, beta, c_depth);
            let k = sample::level_element(&mut rng, &ctx, beta as i64);
            let r = sample::scalar(&mut rng, &ctx, 0);
            let id = format!("triple={i}");
            let data = json!({ "q": sl2_json(&q), "r": r.to_string(), "k": sl2_json(&k), "m": m, "beta_exp": beta });
            match conjugation_solve(&q, &r, &k, m as i64, beta) {
                Ok(s) => {
                    let shift_ok = s.shift_valuation.lower_bound() >= eta as i64 - 2 * m as i64;
                    let mut data = data;
                    data["k_prime"] = sl2_json(&s.k_prime);
                    data["r_prime"] = json!(s.r_prime.to_string());
                    data["contained"] = json!(s.contained);
                    data["shift_valuation"] = serde_json::to_value(s.shift_valuation).unwrap_or(Value::Null);
                    Case::new(id, s.contained && shift_ok, data)
                }
                Err(e) => error_case(id, e, data),
            }
        })
    };
    let literal = conj(4, m);
    let lit_fail = literal.iter().filter(|c| !c.pass).count();
    sections.push(section(
        cfg,
        "qh_conjugation",
        true,
        literal,
        json!({ "eta_exp": eta, "beta_exp": beta, "m": m, "c_valuation_at_least": beta + m, "failures": lit_fail }),
    ));
    let deep = conj(5, 2 * m);
    sections.push(
        section(cfg, "qh_conjugation_deep", false, deep, json!({ "eta_exp": eta, "beta_exp": beta, "m": m, "c_valuation_at_least": beta + 2 * m }))
            .diagnostic(),
    );
    let params = json!({
        "precision": ctx.precision(),
        "trials": trials,
        "pairs": pairs,
        "closure": { "eta_exp": CLOSURE.0, "beta_exp": CLOSURE.1, "m": CLOSURE.2 },
        "conjugation": { "eta_exp": CONJ.0, "beta_exp": CONJ.1, "m": CONJ.2 },
    });
    Ok((params, sections))
}

pub fn sobolev(cfg: &ExperimentConfig, d: f64) -> Result<SuiteOutput, CliError> {
    let n = cfg.depth.unwrap_or(2);
    let g = FiniteQuotient::new(cfg.p, n).map_err(config_err)?;
    let trials = cfg.trials.unwrap_or(1000);
    let n_proj = trials.div_ceil(10);
    let tol = 1e-12;

    let pidx = cfg.indices(n_proj);
    let cases = par_cases(&pidx, |i| {
        let mut rng = case_rng(cfg.seed, 50, i);
        let f = g.random_function(&mut rng);
        let id = format!("f={i}");
        let res = (|| -> Result<(f64, f64, f64), padiclab::sobolev::SobolevError> {
            let pieces = g.decompose(&f)?;
            let sum = pieces.iter().skip(1).fold(pieces[0].clone(), |acc, x| acc.add(x));
            let recon = sum.sub(&f).sup_norm();
            let mut orth = 0.0f64;
            for a in 0..pieces.len() {
                for b in a + 1..pieces.len() {
                    orth = orth.max(pieces[a].inner(&pieces[b]).abs());
                }
            }
            let mut idem = 0.0f64;
            for m in 0..=n {
                let a = g.avg_project(&f, m)?;
                idem = idem.max(g.avg_project(&a, m)?.sub(&a).sup_norm());
            }
            Ok((recon, orth, idem))
        })();
        match res {
            Ok((recon, orth, idem)) => {
                let scale = f.norm2_sq().max(1.0);
                let worst = recon.max(orth / scale).max(idem);
                Case::bound(id, worst, tol, worst <= tol, json!({ "reconstruction": recon, "orthogonality": orth, "idempotence": idem }))
            }
            Err(e) => error_case(id, e, json!({})),
        }
    });
    let mut sections = vec![section(cfg, "projections", true, cases, json!({ "functions": n_proj, "tolerance": tol }))];

    let idx = cfg.indices(trials);
    let cases = par_cases(&idx, |i| {
        let mut rng = case_rng(cfg.seed, 51, i);
        let f = g.random_function(&mut rng);
        let h = rng.gen_range(0..g.len());
        let id = format!("pair={i}");
        let r = g.sobolev_norm(&f, d).and_then(|s| Ok((s, g.sobolev_norm(&g.act(h, &f)?, d)?)));
        match r {
            Ok((s, t)) => {
                let gap = (s - t).abs();
                Case::bound(id, gap, tol * s, gap <= tol * s, json!({ "g": g.element(h), "s": s, "s_translate": t }))
            }
            Err(e) => error_case(id, e, json!({ "g": g.element(h) })),
        }
    });
    sections.push(section(cfg, "invariance", true, cases, json!({ "relative_tolerance": tol })));

    let enforced = d >= D0;
    let kernels: Vec<Vec<usize>> = (0..=n).map(|r| g.kernel_elements(r)).collect();
    let cases = par_cases(&idx, |i| {
        let mut rng = case_rng(cfg.seed, 52, i);
        let f = g.random_function(&mut rng);
        let f2 = g.random_function(&mut rng);
        let r = (i as u32) % (n + 1);
        let k = &kernels[r as usize];
        let h = k[rng.gen_range(0..k.len())];
        let id = format!("f={i} r={r}");
        match g.verify_properties(&f, &f2, h, d, r) {
            Ok(rep) => {
                let pass = rep.s1.holds && rep.s3.holds && rep.s4.holds && rep.g_in_level;
                let data = json!({ "r": r, "g": g.element(h), "s1": rep.s1, "s3": rep.s3, "s4": rep.s4 });
                let q = [rep.s1, rep.s3, rep.s4]
                    .iter()
                    .map(|c| if c.rhs > 0.0 { c.lhs / c.rhs } else { 0.0 })
                    .fold(0.0, f64::max);
                Case::bound(id, q, 1.0, pass, data)
            }
            Err(e) => error_case(id, e, json!({ "r": r })),
        }
    });
    let consts: Vec<Value> = (0..=n).map(|r| serde_json::to_value(g.constants(d, r)).unwrap_or(Value::Null)).collect();
    sections.push(section(cfg, "properties", enforced, cases, json!({ "d": d, "d0": D0, "enforced": enforced, "constants": consts })));
    Ok((json!({ "n": n, "d": d, "trials": trials, "group_order": g.len() }), sections))
}

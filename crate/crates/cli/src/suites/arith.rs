use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use padiclab::heights::{
    format_rational, inverse_norm_check, integer_kernel_basis, mat_vec, minor_gcd, nearest_kernel_point,
    parse_rational, place_norms, rank, IntMatrix, SAdicScalar,
};
use rand::Rng;
use serde_json::json;

use super::*;

fn matrix_json(a: &IntMatrix) -> Value {
    json!(a.iter().map(|r| r.iter().map(|x| x.to_string()).collect::<Vec<_>>()).collect::<Vec<_>>())
}

fn check_matrix<R: Rng>(rng: &mut R, id: String, a: &IntMatrix, t: i64) -> Case {
    let cols = a.first().map_or(0, |r| r.len());
    let data = json!({ "matrix": matrix_json(a), "t": t });
    let kb = match integer_kernel_basis(a, &BigInt::from(t)) {
        Ok(kb) => kb,
        Err(e) => return error_case(id, e, data),
    };
    let in_kernel = kb.vectors.iter().all(|v| mat_vec(a, v).iter().all(|x| x.is_zero()));
    let rk = rank(a);
    let dimension = kb.vectors.len() + rk == cols;
    let saturated = kb.vectors.is_empty() || minor_gcd(&kb.vectors).is_one();
    // a point near the kernel: integer combination of the basis plus a small perturbation
    let mut w = vec![0.0f64; cols];
    for v in &kb.vectors {
        let c = rng.gen_range(-2i64..=2) as f64;
        for (wj, x) in w.iter_mut().zip(v) {
            *wj += c * num_traits::ToPrimitive::to_f64(x).unwrap_or(f64::NAN);
        }
    }
    for wj in w.iter_mut() {
        *wj += 1e-3 * rng.gen_range(-1.0..1.0);
    }
    let mut data = data;
    data["basis"] = json!(kb.vectors.iter().map(|v| v.iter().map(|x| x.to_string()).collect::<Vec<_>>()).collect::<Vec<_>>());
    data["rank"] = json!(rk);
    data["bound"] = json!(kb.bound);
    data["max_norm"] = json!(kb.max_norm);
    data["in_kernel"] = json!(in_kernel);
    data["dimension"] = json!(dimension);
    data["saturated"] = json!(saturated);
    data["within_bound"] = json!(kb.within_bound);
    data["w"] = json!(w);
    match nearest_kernel_point(a, &w, 1.0) {
        Ok(nk) => {
            data["nearest"] = json!({ "distance": nk.distance, "residual": nk.residual, "c_a": nk.c_a, "hypothesis": nk.hypothesis });
            let pass = in_kernel && dimension && saturated && kb.within_bound && nk.hypothesis && nk.holds;
            Case::bound(id, nk.distance, nk.c_a * nk.residual, pass, data)
        }
        Err(e) => error_case(id, e, data),
    }
}

pub fn siegel(cfg: &ExperimentConfig, matrix: Option<&(IntMatrix, i64)>) -> Result<SuiteOutput, CliError> {
    if let Some((a, t)) = matrix {
        let mut rng = case_rng(cfg.seed, 60, 0);
        let case = check_matrix(&mut rng, "matrix".into(), a, *t);
        let params = json!({ "matrix": matrix_json(a), "t": t });
        return Ok((params, vec![Section::from_cases("kernel", true, vec![case], true, json!({}))]));
    }
    let trials = cfg.trials.unwrap_or(100);
    let idx = cfg.indices(trials);
    let cases = par_cases(&idx, |i| {
        let mut rng = case_rng(cfg.seed, 60, i);
        let rows = rng.gen_range(1..=3usize);
        let cols = rng.gen_range(rows..=6usize);
        // the clean T^{3n} bound is stated for T ≥ 2
        let t = rng.gen_range(2..=6i64);
        let a: IntMatrix = (0..rows).map(|_| (0..cols).map(|_| BigInt::from(rng.gen_range(-t..=t))).collect()).collect();
        check_matrix(&mut rng, format!("matrix={i}"), &a, t)
    });
    let worst = worst_ratio(&cases);
    let sections = vec![section(cfg, "kernel", true, cases, json!({ "rows": "1..=3", "cols": "rows..=6", "t": "2..=6", "worst_nearest": worst }))];
    Ok((json!({ "trials": trials }), sections))
}

fn q_of(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

fn product_case(id: String, x: &BigRational, primes: &[u64]) -> Case {
    let data = json!({ "x": format_rational(x), "primes": primes });
    match SAdicScalar::new(x.clone(), primes).map_err(|e| e.to_string()).and_then(|s| place_norms(&s).map_err(|e| e.to_string())) {
        Ok(rec) => {
            let mut data = data;
            data["s_height"] = json!(format_rational(&rec.s_height));
            data["all_places_product"] = json!(format_rational(&rec.all_places_product));
            data["s_integer"] = json!(rec.s_integer);
            Case::new(id, rec.product_formula_holds(), data)
        }
        Err(e) => error_case(id, e, data),
    }
}

fn inverse_case(id: String, x: &BigRational, primes: &[u64]) -> Case {
    let data = json!({ "x": format_rational(x), "primes": primes });
    match SAdicScalar::new(x.clone(), primes).map_err(|e| e.to_string()).and_then(|s| inverse_norm_check(&s).map_err(|e| e.to_string())) {
        Ok(c) => {
            let f = |q: &BigRational| num_traits::ToPrimitive::to_f64(q).unwrap_or(f64::NAN);
            let mut data = data;
            data["c"] = json!(format_rational(&c.c));
            data["inverse_norm"] = json!(format_rational(&c.inverse_norm));
            data["bound"] = json!(format_rational(&c.bound));
            Case::bound(id, f(&c.inverse_norm), f(&c.bound), c.holds, data)
        }
        Err(e) => error_case(id, e, data),
    }
}

pub fn heights(cfg: &ExperimentConfig, x: Option<&str>, primes: &[u64]) -> Result<SuiteOutput, CliError> {
    if let Some(text) = x {
        let v = parse_rational(text).map_err(config_err)?;
        let mut sections = vec![Section::from_cases("product_formula", true, vec![product_case(text.into(), &v, primes)], true, json!({}))];
        let s = SAdicScalar::new(v.clone(), primes).map_err(config_err)?;
        if s.is_s_integer() && !v.is_zero() {
            sections.push(Section::from_cases("inverse_norm", true, vec![inverse_case(text.into(), &v, primes)], true, json!({})));
        }
        return Ok((json!({ "x": text, "primes": primes }), sections));
    }
    let trials = cfg.trials.unwrap_or(10_000);
    let idx = cfg.indices(trials);
    let cases = par_cases(&idx, |i| {
        let mut rng = case_rng(cfg.seed, 70, i);
        let n = rng.gen_range(1..=1_000_000i64) * if rng.gen() { 1 } else { -1 };
        let d = rng.gen_range(1..=1_000_000i64);
        product_case(format!("x={i}"), &q_of(n, d), primes)
    });
    let mut sections = vec![section(cfg, "product_formula", true, cases, json!({ "numerators": "±1..=10^6", "denominators": "1..=10^6" }))];
    let cases = par_cases(&idx, |i| {
        let mut rng = case_rng(cfg.seed, 71, i);
        let mut v = BigRational::from_integer(BigInt::from(rng.gen_range(1..=10_000i64)));
        if rng.gen() {
            v = -v;
        }
        for &q in primes {
            let e: i32 = rng.gen_range(-6..=6);
            let qq = BigRational::from_integer(BigInt::from(q));
            let pw = num_traits::pow(qq, e.unsigned_abs() as usize);
            v = if e >= 0 { v * pw } else { v / pw };
        }
        debug_assert!(!v.abs().is_zero());
        inverse_case(format!("x={i}"), &v, primes)
    });
    let worst = worst_ratio(&cases);
    sections.push(section(cfg, "inverse_norm", true, cases, json!({ "form": "k * prod q^e, |k| <= 10^4, |e| <= 6", "worst": worst })));
    Ok((json!({ "trials": trials, "primes": primes }), sections))
}

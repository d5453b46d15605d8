//! The restricted projections ξ_r(w) = (Ad_{u_r} w)_{12} and the statistics
//! built on them.

use std::collections::HashMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::lie::{bch_product, LieError, RVec};
use crate::padic::{valuation_u64, Context, PAdic, PAdicError};
use crate::tree::{non_concentration_profile, NonConcProfile, PointSet, TreeError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProjectionError {
    #[error(transparent)]
    PAdic(#[from] PAdicError),
    #[error(transparent)]
    Lie(#[from] LieError),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error("points must lie in Z_p^3, got dimension {0}")]
    NotThreeDimensional(usize),
    #[error("scales must satisfy l1 <= l0 <= depth (l1 = {l1}, l0 = {l0}, depth = {depth})")]
    BadScales { l0: u32, l1: u32, depth: u32 },
    #[error("hypothesis fails: measured D' = {measured} exceeds {claimed}")]
    Hypothesis { measured: f64, claimed: f64 },
    #[error("depth {depth} too small for n = {n}")]
    InsufficientDepth { depth: u32, n: i64 },
    #[error("n must be <= 0, got {0}")]
    PositiveN(i64),
    #[error("empty point set")]
    Empty,
    #[error("no shear among r0 = 0, p^2, 1 keeps a quarter of the set")]
    NoShear,
    #[error("point {0:?} is outside the BCH domain")]
    Domain(Vec<u64>),
}

pub type Result<T> = std::result::Result<T, ProjectionError>;

/// ξ_r(w) = w12 − 2·w11·r − w21·r².
pub fn xi(r: &PAdic, w: &RVec) -> std::result::Result<PAdic, PAdicError> {
    let two_r = r.checked_add(r)?;
    w.w12.checked_sub(&two_r.checked_mul(&w.w11)?)?.checked_sub(&r.checked_mul(r)?.checked_mul(&w.w21)?)
}

/// ξ_r(w) mod p^k for residues r, w.
pub fn xi_residue(r: u64, w: &[u64], modulus: u64) -> u64 {
    let m = modulus as u128;
    let r = r as u128 % m;
    let (w11, w12, w21) = (w[0] as u128 % m, w[1] as u128 % m, w[2] as u128 % m);
    let t1 = 2 * r % m * w11 % m;
    let t2 = r * r % m * w21 % m;
    ((w12 + 2 * m - t1 - t2) % m) as u64
}

/// Ball in Z_p: residues congruent to `center` mod p^radius_exp.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ZpBall {
    pub center: u64,
    pub radius_exp: u32,
}

impl ZpBall {
    pub fn whole() -> Self {
        ZpBall { center: 0, radius_exp: 0 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ScanParams {
    pub l0: u32,
    pub l1: u32,
    pub alpha: f64,
    pub epsilon: f64,
    pub j: ZpBall,
    pub r_depth: u32,
    /// D' in the hypothesis; the measured profile constant when absent
    pub d_prime: Option<f64>,
    /// classification threshold for C_r; D' when absent
    pub threshold: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RRecord {
    pub r: u64,
    pub good: bool,
    pub er_size: usize,
    /// per scale k = l1..=l0: max over E_r of N_r(w, k)/#E · p^{(k−l1)(α−ε)}
    pub constants: Vec<f64>,
    pub c_r: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ProjectionReport {
    pub p: u64,
    pub depth: u32,
    pub alpha: f64,
    pub epsilon: f64,
    pub l0: u32,
    pub l1: u32,
    pub j: ZpBall,
    pub r_depth: u32,
    pub hypothesis_d: f64,
    pub hypothesis_holds: bool,
    pub threshold: f64,
    pub rs: Vec<RRecord>,
    pub exceptional_mass: f64,
    pub max_good_constant: f64,
    pub profile: NonConcProfile,
}

/// For every r ∈ J at depth r_depth, the largest E_r of size ≥ ⌈(1 − 1/p)#E⌉
/// and the smallest constant C_r with
/// #{w' ∈ E : |ξ_r(w') − ξ_r(w)| ≤ b}/#E ≤ C_r (b/b1)^{α−ε} for w ∈ E_r, b0 ≤ b ≤ b1.
/// r is good when C_r does not exceed the threshold.
///
/// A failed hypothesis is an error unless `diagnostic` is set, in which case
/// the scan runs and the report carries the flag.
pub fn projection_theorem_scan(e: &PointSet, params: &ScanParams, diagnostic: bool) -> Result<ProjectionReport> {
    if e.dim() != 3 {
        return Err(ProjectionError::NotThreeDimensional(e.dim()));
    }
    if e.is_empty() {
        return Err(ProjectionError::Empty);
    }
    let (l0, l1) = (params.l0, params.l1);
    if l1 > l0 || l0 > e.depth() {
        return Err(ProjectionError::BadScales { l0, l1, depth: e.depth() });
    }
    let p = e.p();
    let profile = non_concentration_profile(e, l0, l1, params.alpha)?;
    let measured = profile.d_at_alpha;
    let hypothesis_d = params.d_prime.unwrap_or(measured);
    let hypothesis_holds = measured <= hypothesis_d * (1.0 + 1e-9);
    if !hypothesis_holds && !diagnostic {
        return Err(ProjectionError::Hypothesis { measured, claimed: hypothesis_d });
    }
    let threshold = params.threshold.unwrap_or(hypothesis_d);
    let n = e.len();
    let keep = ((1.0 - 1.0 / p as f64) * n as f64).ceil() as usize;
    let keep = keep.clamp(1, n);
    let exponent = params.alpha - params.epsilon;
    let modulus = p.pow(l0);
    let jm = p.pow(params.j.radius_exp.min(params.r_depth));
    let rs: Vec<u64> = (0..p.pow(params.r_depth)).filter(|r| r % jm == params.j.center % jm).collect();

    let records: Vec<RRecord> = rs
        .par_iter()
        .map(|&r| {
            let ys: Vec<u64> = e.points().map(|w| xi_residue(r, w, modulus)).collect();
            let mut per_scale: Vec<Vec<f64>> = Vec::with_capacity((l0 - l1 + 1) as usize);
            for k in l1..=l0 {
                let pk = p.pow(k);
                let mut counts: HashMap<u64, usize> = HashMap::new();
                for y in &ys {
                    *counts.entry(y % pk).or_default() += 1;
                }
                let weight = (p as f64).powf((k - l1) as f64 * exponent);
                per_scale.push(ys.iter().map(|y| counts[&(y % pk)] as f64 / n as f64 * weight).collect());
            }
            let c: Vec<f64> =
                (0..n).map(|i| per_scale.iter().map(|s| s[i]).fold(0.0, f64::max)).collect();
            let mut sorted = c.clone();
            sorted.sort_by(|a, b| a.total_cmp(b));
            let c_r = sorted[keep - 1];
            let members: Vec<usize> = (0..n).filter(|&i| c[i] <= c_r).collect();
            let constants = per_scale
                .iter()
                .map(|s| members.iter().map(|&i| s[i]).fold(0.0, f64::max))
                .collect();
            RRecord { r, good: c_r <= threshold * (1.0 + 1e-9), er_size: members.len(), constants, c_r }
        })
        .collect();
    let bad = records.iter().filter(|r| !r.good).count();
    let exceptional_mass = bad as f64 / p.pow(params.r_depth) as f64;
    let max_good_constant = records.iter().filter(|r| r.good).map(|r| r.c_r).fold(0.0, f64::max);
    Ok(ProjectionReport {
        p,
        depth: e.depth(),
        alpha: params.alpha,
        epsilon: params.epsilon,
        l0,
        l1,
        j: params.j,
        r_depth: params.r_depth,
        hypothesis_d,
        hypothesis_holds,
        threshold,
        rs: records,
        exceptional_mass,
        max_good_constant,
        profile,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuadSublevel {
    /// exact Haar measure of {t : |a t² + b t + c| ≤ p^n}
    #[serde(serialize_with = "ser_ratio")]
    pub measure: BigRational,
    /// p²·p^{n/2}
    pub bound: f64,
    /// some coefficient is a unit, so the bound is claimed
    pub applicable: bool,
    pub holds: bool,
}

fn ser_ratio<S: serde::Serializer>(q: &BigRational, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&format!("{}/{}", q.numer(), q.denom()))
}

/// Measure of the sublevel set, from integer coefficient representatives.
pub fn quad_sublevel_residues(p: u64, a: u64, b: u64, c: u64, n: i64, depth: u32) -> Result<QuadSublevel> {
    if n > 0 {
        return Err(ProjectionError::PositiveN(n));
    }
    let need = (-n) as u32;
    if depth < need {
        return Err(ProjectionError::InsufficientDepth { depth, n });
    }
    let count = sublevel_count(p, a, b, c, need, depth);
    let den = BigInt::from(p).pow(depth);
    let measure = BigRational::new(BigInt::from(count), den);
    let applicable = [a, b, c].iter().any(|x| x % p != 0);
    // measure ≤ p^{2 + n/2}  ⇔  measure² ≤ p^{4 + n}
    let lhs = &measure * &measure;
    let rhs = if 4 + n >= 0 {
        BigRational::from_integer(BigInt::from(p).pow((4 + n) as u32))
    } else {
        BigRational::new(BigInt::one(), BigInt::from(p).pow((-(4 + n)) as u32))
    };
    let bound = (p as f64).powf(2.0 + n as f64 / 2.0);
    Ok(QuadSublevel { measure, bound, applicable, holds: lhs <= rhs })
}

/// #{t mod p^depth : a t² + b t + c ≡ 0 mod p^need}.
fn sublevel_count(p: u64, a: u64, b: u64, c: u64, need: u32, depth: u32) -> u64 {
    if need == 0 {
        return p.pow(depth);
    }
    let m = p.pow(need) as u128;
    let (a, b, c) = (a as u128 % m, b as u128 % m, c as u128 % m);
    let hits = (0..m as u64)
        .filter(|&t| {
            let t = t as u128;
            (a * t % m * t + b * t + c).is_multiple_of(m)
        })
        .count() as u64;
    // the condition only sees t mod p^need
    hits * p.pow(depth - need)
}

/// Same measure for p-adic coefficients in Z_p known to at least |n| digits.
pub fn quad_sublevel_measure(a: &PAdic, b: &PAdic, c: &PAdic, n: i64, depth: u32) -> Result<QuadSublevel> {
    if n > 0 {
        return Err(ProjectionError::PositiveN(n));
    }
    let need = (-n) as u32;
    let p = a.p();
    quad_sublevel_residues(p, a.residue(need)?, b.residue(need)?, c.residue(need)?, n, depth)
}

fn val_mod(x: u64, m: u32, p: u64) -> u32 {
    valuation_u64(x, p).unwrap_or(m)
}

/// Ad_{u_r} w on residues mod p^m.
pub fn ad_u_residue(r: u64, w: &[u64], modulus: u64) -> [u64; 3] {
    let mm = modulus as u128;
    let w11 = ((w[0] as u128 + r as u128 % mm * w[2] as u128) % mm) as u64;
    [w11, xi_residue(r, w, modulus), w[2] % modulus]
}

/// |w12| ≥ p^-4 ‖w‖ with w12 nonzero mod p^m.
pub fn shear_target(w: &[u64; 3], m: u32, p: u64) -> bool {
    let v12 = val_mod(w[1], m, p);
    if v12 >= m {
        return false;
    }
    let v = w.iter().map(|&x| val_mod(x, m, p)).min().unwrap();
    v12 <= v + 4
}

#[derive(Debug, Clone, Serialize)]
pub struct ShearChoice {
    pub r0: u64,
    pub ehat: PointSet,
    /// r0 candidates tried, with the number of images meeting the bound
    pub tried: Vec<(u64, usize)>,
}

/// Pick r0 from 0, p², 1 (in that order) so that at least #E/4 points of
/// Ad_{u_{r0}}E satisfy |w12| ≥ p^-4 ‖w‖; those points form Ê.
pub fn shear_select(e: &PointSet) -> Result<ShearChoice> {
    if e.is_empty() {
        return Err(ProjectionError::Empty);
    }
    if e.dim() != 3 {
        return Err(ProjectionError::NotThreeDimensional(e.dim()));
    }
    let (p, m) = (e.p(), e.depth());
    let modulus = p.pow(m);
    let mut tried = Vec::new();
    for r0 in [0, (p * p) % modulus, 1] {
        let images: Vec<u64> = e
            .points()
            .map(|w| ad_u_residue(r0, w, modulus))
            .filter(|im| shear_target(im, m, p))
            .flatten()
            .collect();
        let count = images.len() / 3;
        tried.push((r0, count));
        if 4 * count >= e.len() {
            let ehat = PointSet::from_flat(p, 3, m, images)?;
            return Ok(ShearChoice { r0, ehat, tried });
        }
    }
    Err(ProjectionError::NoShear)
}

/// f(w') = w with exp(w) = exp(w')·exp(−w0), applied to every point.
/// Points are residues mod p^m and must lie in p²·Z_p³.
pub fn change_base_point(f: &PointSet, w0: &[u64]) -> Result<PointSet> {
    if f.dim() != 3 {
        return Err(ProjectionError::NotThreeDimensional(f.dim()));
    }
    let (p, m) = (f.p(), f.depth());
    let ctx = Context::new(p, m + 2)?;
    let in_domain = |w: &[u64]| w.iter().all(|&x| x % (p * p) == 0);
    if !in_domain(w0) {
        return Err(ProjectionError::Domain(w0.to_vec()));
    }
    let to_rvec = |w: &[u64]| {
        RVec::new(ctx.from_residue(w[0], m), ctx.from_residue(w[1], m), ctx.from_residue(w[2], m))
    };
    let base = to_rvec(w0);
    let out: Result<Vec<Vec<u64>>> = f
        .points()
        .collect::<Vec<_>>()
        .par_iter()
        .map(|w| {
            if !in_domain(w) {
                return Err(ProjectionError::Domain(w.to_vec()));
            }
            let z = bch_product(&to_rvec(w), &base)?;
            Ok(vec![z.w11.residue(m)?, z.w12.residue(m)?, z.w21.residue(m)?])
        })
        .collect();
    let out = out?;
    let flat: Vec<u64> = out.into_iter().flatten().collect();
    Ok(PointSet::from_flat(p, 3, m, flat)?)
}

/// Rational helper for reports: count / p^depth.
pub fn residue_mass(count: u64, p: u64, depth: u32) -> BigRational {
    if count == 0 {
        return BigRational::zero();
    }
    BigRational::new(BigInt::from(count), BigInt::from(p).pow(depth))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lie::ad_u;

    #[test]
    fn xi_examples() {
        let c = Context::new(5, 8).unwrap();
        let w = RVec::from_ints(&c, 3, 7, 11);
        assert_eq!(xi(&c.zero(), &w).unwrap(), w.w12);
        let w = RVec::from_ints(&c, 1, 0, 0);
        assert_eq!(xi(&c.one(), &w).unwrap(), c.from_i64(-2));
        assert_eq!(xi_residue(1, &[1, 0, 0], 125), 123);
        let r = c.from_i64(4);
        let w = RVec::from_ints(&c, 2, 9, 13);
        assert_eq!(xi(&r, &w).unwrap(), ad_u(&r, &w).unwrap().w12);
    }

    #[test]
    fn quad_examples() {
        let q = quad_sublevel_residues(5, 1, 0, 0, -2, 2).unwrap();
        assert_eq!(q.measure, BigRational::new(1.into(), 5.into()));
        assert_eq!(q.bound, 5.0);
        assert!(q.holds && q.applicable);
        for k in 1..4 {
            let q = quad_sublevel_residues(5, 0, 1, 0, -k, 4).unwrap();
            assert_eq!(q.measure, BigRational::new(1.into(), BigInt::from(5).pow(k as u32)));
        }
        let q = quad_sublevel_residues(5, 5, 10, 1, -1, 2).unwrap();
        assert!(q.measure.is_zero());
        assert!(quad_sublevel_residues(5, 1, 0, 0, -3, 2).is_err());
    }

    #[test]
    fn shear_keeps_good_sets() {
        let e = PointSet::new(5, 3, 3, &[vec![0, 1, 0], vec![3, 2, 7], vec![0, 4, 0]]).unwrap();
        let s = shear_select(&e).unwrap();
        assert_eq!(s.r0, 0);
        assert_eq!(s.ehat, e);
    }

    #[test]
    fn shear_on_w21_axis() {
        let pts: Vec<Vec<u64>> = (1..125).filter(|t| t % 5 != 0).map(|t| vec![0, 0, t]).collect();
        let e = PointSet::new(5, 3, 3, &pts).unwrap();
        let s = shear_select(&e).unwrap();
        assert!(s.r0 == 25 || s.r0 == 1);
        assert!(s.ehat.points().all(|w| shear_target(&[w[0], w[1], w[2]], 3, 5)));
    }

    #[test]
    fn base_point_zero_is_identity() {
        let e = PointSet::new(5, 3, 4, &[vec![25, 50, 0], vec![0, 125, 75]]).unwrap();
        assert_eq!(change_base_point(&e, &[0, 0, 0]).unwrap(), e);
        assert!(change_base_point(&e, &[1, 0, 0]).is_err());
    }
}

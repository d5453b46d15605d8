//! Contraction of ‖Ad(d_λ u_r) w‖^-α under averaging over r ∈ Z_p, the step
//! size m_α, the walk measure ν and the Margulis-function recursion.
//!
//! Integrals over Z_p are computed exactly.  The norm valuation of
//! Ad(d_λ u_r) w is N(r) = min(v(w11 + r·w21), v(ξ_r(w)) − 2n, v(w21) + 2n)
//! for |λ| = p^n.  On a ball every one of these valuations is either constant
//! or of the form a + e·v(r − τ) for a single point τ, and the integral of
//! p^{αN} over such a ball is a geometric series; anything else is split into
//! p smaller balls.  The output is an exact histogram of N.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::lie::{LieError, RVec, SL2Elem};
use crate::padic::{Context, PAdic, PAdicError, Valuation};
use crate::projection::change_base_point;
use crate::projection::ProjectionError;
use crate::tree::{energy_sum, shell_sum, PointSet, TreeError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MargulisError {
    #[error(transparent)]
    PAdic(#[from] PAdicError),
    #[error(transparent)]
    Lie(#[from] LieError),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Projection(#[from] ProjectionError),
    #[error("w must be nonzero")]
    ZeroVector,
    #[error("lambda must have |lambda|_p > 1 (valuation {0})")]
    NotExpanding(i64),
    #[error("integration did not resolve within {0} levels")]
    DepthExhausted(u32),
    #[error("{atoms} atoms exceed the enumeration budget {budget}")]
    BudgetExceeded { atoms: u128, budget: u128 },
    #[error("walk step {m_step} is below m_alpha = {m_alpha}")]
    StepTooSmall { m_step: u32, m_alpha: u32 },
    #[error("alpha must lie in (0, 1), got {0}")]
    BadAlpha(f64),
}

pub type Result<T> = std::result::Result<T, MargulisError>;

const MAX_LEVELS: u32 = 400;

fn vp(x: &BigInt, p: &BigInt) -> Option<i64> {
    if x.is_zero() {
        return None;
    }
    let mut v = 0;
    let mut q = x.clone();
    loop {
        let (d, r) = q.div_rem(p);
        if !r.is_zero() {
            return Some(v);
        }
        q = d;
        v += 1;
    }
}

/// Valuation with None = +∞, ordered so that ∞ is largest.
fn vmin(a: Option<i64>, b: Option<i64>) -> Option<i64> {
    match (a, b) {
        (None, x) | (x, None) => x,
        (Some(x), Some(y)) => Some(x.min(y)),
    }
}

/// Exact distribution of the norm valuation N(r) over r ∈ Z_p.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormHistogram {
    pub p: u64,
    #[serde(serialize_with = "ser_masses")]
    pub masses: BTreeMap<i64, BigRational>,
}

fn ser_masses<S: serde::Serializer>(m: &BTreeMap<i64, BigRational>, s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeMap;
    let mut map = s.serialize_map(Some(m.len()))?;
    for (k, v) in m {
        map.serialize_entry(&k.to_string(), &format!("{}/{}", v.numer(), v.denom()))?;
    }
    map.end()
}

impl NormHistogram {
    /// ∫ p^{αN(r)} dr, summed in increasing N.
    pub fn integral(&self, alpha: f64) -> f64 {
        let p = self.p as f64;
        self.masses
            .iter()
            .map(|(n, m)| m.to_f64().unwrap_or(0.0) * p.powf(alpha * *n as f64))
            .sum()
    }

    pub fn total_mass(&self) -> BigRational {
        self.masses.values().fold(BigRational::zero(), |a, b| a + b)
    }

    pub fn shifted(&self, s: i64) -> NormHistogram {
        NormHistogram { p: self.p, masses: self.masses.iter().map(|(k, v)| (k + s, v.clone())).collect() }
    }

    fn add(&mut self, n: i64, mass: BigRational) {
        let e = self.masses.entry(n).or_insert_with(BigRational::zero);
        *e += mass;
    }
}

#[derive(Debug, Clone)]
enum Center {
    /// τ = num/den
    Rational(BigInt, BigInt),
    /// the simple root of the local quadratic
    Implicit,
}

#[derive(Debug, Clone)]
enum Shape {
    Const(Option<i64>),
    /// v = a + slope·v(s − τ)
    Root { a: i64, slope: i64, center: Center },
    Unknown,
}

/// Polynomials in the local coordinate s on a ball r = r0 + p^k s:
/// g1(s) = a1 + b1 s, g2(s) = a2 + b2 s + c2 s².
#[derive(Debug, Clone)]
struct Local {
    a1: BigInt,
    b1: BigInt,
    a2: BigInt,
    b2: BigInt,
    c2: BigInt,
    k: u32,
}

impl Local {
    fn child(&self, d: &BigInt, p: &BigInt) -> Local {
        Local {
            a1: &self.a1 + &self.b1 * d,
            b1: &self.b1 * p,
            a2: &self.a2 + &self.b2 * d + &self.c2 * d * d,
            b2: p * (&self.b2 + BigInt::from(2) * &self.c2 * d),
            c2: &self.c2 * p * p,
            k: self.k + 1,
        }
    }

    fn shape1(&self, p: &BigInt) -> Shape {
        let va = vp(&self.a1, p);
        match vp(&self.b1, p) {
            None => Shape::Const(va),
            Some(vb) => match va {
                Some(x) if x < vb => Shape::Const(Some(x)),
                _ => Shape::Root { a: vb, slope: 1, center: Center::Rational(-self.a1.clone(), self.b1.clone()) },
            },
        }
    }

    fn shape2(&self, p: &BigInt) -> Shape {
        let (va, vb, vc) = (vp(&self.a2, p), vp(&self.b2, p), vp(&self.c2, p));
        let lead = vmin(vb, vc);
        match (va, lead) {
            (va, None) => return Shape::Const(va),
            (Some(x), Some(l)) if x < l => return Shape::Const(Some(x)),
            _ => {}
        }
        match vc {
            None => {
                // linear, and v(a2) ≥ v(b2)
                let vb = vb.unwrap();
                Shape::Root { a: vb, slope: 1, center: Center::Rational(-self.a2.clone(), self.b2.clone()) }
            }
            Some(vc) => {
                let disc = &self.b2 * &self.b2 - BigInt::from(4) * &self.a2 * &self.c2;
                if disc.is_zero() {
                    let den = BigInt::from(2) * &self.c2;
                    Shape::Root { a: vc, slope: 2, center: Center::Rational(-self.b2.clone(), den) }
                } else if matches!(vb, Some(b) if b < vc) {
                    Shape::Root { a: vb.unwrap(), slope: 1, center: Center::Implicit }
                } else {
                    Shape::Unknown
                }
            }
        }
    }

    /// v(τ1 − τ2) for the root of g1 and the root of g2, None when they coincide.
    fn separation(&self, c1: &Center, c2: &Center, a2: i64, p: &BigInt) -> Option<i64> {
        let (n1, d1) = match c1 {
            Center::Rational(n, d) => (n, d),
            Center::Implicit => unreachable!("g1 roots are rational"),
        };
        match c2 {
            Center::Rational(n2, d2) => {
                let num = n1 * d2 - n2 * d1;
                vp(&num, p).map(|v| v - vp(d1, p).unwrap() - vp(d2, p).unwrap())
            }
            Center::Implicit => {
                // v(g2(τ1)) = a2 + v(τ1 − τ2)
                let num = &self.a2 * d1 * d1 + &self.b2 * n1 * d1 + &self.c2 * n1 * n1;
                vp(&num, p).map(|v| v - 2 * vp(d1, p).unwrap() - a2)
            }
        }
    }
}

/// Histogram of N(r) = min(v(w11 + r w21), v(ξ_r(w)) − 2n, v(w21) + 2n) over r ∈ Z_p
/// for an integer vector w.
pub fn norm_histogram_int(p: u64, w: [&BigInt; 3], n: i64) -> Result<NormHistogram> {
    let (w11, w12, w21) = (w[0], w[1], w[2]);
    if w11.is_zero() && w12.is_zero() && w21.is_zero() {
        return Err(MargulisError::ZeroVector);
    }
    let pb = BigInt::from(p);
    let k3 = vp(w21, &pb).map(|v| v + 2 * n);
    let mut hist = NormHistogram { p, masses: BTreeMap::new() };
    let root = Local {
        a1: w11.clone(),
        b1: w21.clone(),
        a2: w12.clone(),
        b2: -BigInt::from(2) * w11,
        c2: -w21.clone(),
        k: 0,
    };
    let mut stack = vec![root];
    while let Some(node) = stack.pop() {
        if node.k > MAX_LEVELS {
            return Err(MargulisError::DepthExhausted(MAX_LEVELS));
        }
        let s1 = node.shape1(&pb);
        let s2 = node.shape2(&pb);
        let shift2 = |v: Option<i64>| v.map(|x| x - 2 * n);
        let mut pieces: Vec<(i64, i64)> = Vec::new();
        let mut konst = k3;
        let split = match (&s1, &s2) {
            (Shape::Unknown, _) | (_, Shape::Unknown) => true,
            (Shape::Root { center: c1, .. }, Shape::Root { a: a2, center: c2, .. }) => {
                node.separation(c1, c2, *a2, &pb).is_some()
            }
            _ => false,
        };
        if split {
            for d in 0..p {
                stack.push(node.child(&BigInt::from(d), &pb));
            }
            continue;
        }
        match s1 {
            Shape::Const(v) => konst = vmin(konst, v),
            Shape::Root { a, slope, .. } => pieces.push((a, slope)),
            Shape::Unknown => unreachable!(),
        }
        match s2 {
            Shape::Const(v) => konst = vmin(konst, shift2(v)),
            Shape::Root { a, slope, .. } => pieces.push((a - 2 * n, slope)),
            Shape::Unknown => unreachable!(),
        }
        let k_const = konst.ok_or(MargulisError::ZeroVector)?;
        let ball = BigRational::new(BigInt::one(), pb.pow(node.k));
        if pieces.is_empty() {
            hist.add(k_const, ball);
            continue;
        }
        // j = v(s − τ) has mass (1 − 1/p) p^-j; N(j) = min(K, a_i + e_i j)
        let big_j = pieces
            .iter()
            .map(|&(a, e)| if k_const <= a { 0 } else { (k_const - a + e - 1) / e })
            .max()
            .unwrap();
        let shell = BigRational::new(pb.clone() - 1, pb.clone());
        for j in 0..big_j {
            let nj = pieces.iter().map(|&(a, e)| a + e * j).min().unwrap().min(k_const);
            let m = &ball * &shell / BigRational::from_integer(pb.pow(j as u32));
            hist.add(nj, m);
        }
        hist.add(k_const, &ball / BigRational::from_integer(pb.pow(big_j as u32)));
    }
    Ok(hist)
}

/// Integer representative of p^{-s} w with s = v(w), and s.
fn primitive_integer_vector(w: &RVec) -> Result<([BigInt; 3], i64)> {
    let s = match w.valuation() {
        Valuation::Infinite => return Err(MargulisError::ZeroVector),
        Valuation::Exact(s) => s,
        Valuation::AtLeast(k) => return Err(PAdicError::IndeterminateValuation(k).into()),
    };
    let mut out: [BigInt; 3] = Default::default();
    for (slot, x) in out.iter_mut().zip(w.coords()) {
        *slot = match x.valuation() {
            Valuation::Infinite => BigInt::zero(),
            Valuation::Exact(_) => {
                let q = x.shift(-s).to_rational();
                debug_assert!(q.is_integer());
                q.to_integer()
            }
            Valuation::AtLeast(k) => return Err(PAdicError::IndeterminateValuation(k).into()),
        };
    }
    Ok((out, s))
}

/// Exact histogram of the norm valuation of Ad(d_λ u_r) w, |λ| = p^n.
pub fn contraction_histogram(w: &RVec, n: i64) -> Result<NormHistogram> {
    let (v, s) = primitive_integer_vector(w)?;
    let h = norm_histogram_int(w.context().p(), [&v[0], &v[1], &v[2]], n)?;
    Ok(h.shifted(s))
}

/// ∫_{Z_p} ‖Ad(d_λ u_r) w‖^-α dr.
pub fn contraction_integral(w: &RVec, lambda: &PAdic, alpha: f64) -> Result<f64> {
    let v = lambda.exact_valuation()?;
    if v >= 0 {
        return Err(MargulisError::NotExpanding(v));
    }
    Ok(contraction_histogram(w, -v)?.integral(alpha))
}

/// ‖w‖^-α from an exact valuation.
pub fn norm_power(p: u64, valuation: i64, alpha: f64) -> f64 {
    (p as f64).powf(alpha * valuation as f64)
}

pub fn alpha_hat(alpha: f64) -> f64 {
    (1.0 - alpha) / 4.0
}

/// Right-hand side C2 |λ|^{-α̂} / (p − p^α) ‖w‖^-α of the contraction bound.
pub fn contraction_bound(p: u64, alpha: f64, c2: f64, n: i64, w_valuation: i64) -> f64 {
    let pf = p as f64;
    c2 * pf.powf(-alpha_hat(alpha) * n as f64) / (pf - pf.powf(alpha)) * norm_power(p, w_valuation, alpha)
}

/// Smallest m ≥ 1 with C2 p^{-α̂ m} / (p − p^α) ≤ p^-1.
pub fn compute_m_alpha(p: u64, alpha: f64, c2: f64) -> Result<u32> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(MargulisError::BadAlpha(alpha));
    }
    let pf = p as f64;
    let ratio = c2 * pf / (pf - pf.powf(alpha));
    let m = if ratio <= 1.0 { 1.0 } else { (ratio.ln() / pf.ln() / alpha_hat(alpha)).ceil().max(1.0) };
    let mut m = m as u32;
    let holds = |m: u32| c2 * pf.powf(-alpha_hat(alpha) * m as f64) / (pf - pf.powf(alpha)) <= 1.0 / pf;
    // guard against rounding at the boundary
    while m > 1 && holds(m - 1) {
        m -= 1;
    }
    while !holds(m) {
        m += 1;
    }
    Ok(m)
}

/// Primitive vectors mod p^k up to unit scaling: the first unit coordinate is 1.
pub fn direction_classes(p: u64, k: u32) -> Vec<[u64; 3]> {
    let q = p.pow(k);
    let mut out = Vec::new();
    for x in 0..q {
        for y in 0..q {
            out.push([1, x, y]);
        }
    }
    for a in (0..q).step_by(p as usize) {
        for y in 0..q {
            out.push([a, 1, y]);
        }
    }
    for a in (0..q).step_by(p as usize) {
        for b in (0..q).step_by(p as usize) {
            out.push([a, b, 1]);
        }
    }
    out
}

fn class_vector(ctx: &Context, c: &[u64; 3]) -> RVec {
    RVec::from_ints(ctx, c[0] as i64, c[1] as i64, c[2] as i64)
}

/// Largest value of I·(p − p^α)·p^{α̂ n}·‖w‖^α over the direction classes at
/// `depth` and 1 ≤ n ≤ n_max, for every (p, α) given.
pub fn measure_c2(primes: &[u64], alphas: &[f64], depth: u32, n_max: i64) -> Result<f64> {
    let mut worst = 0.0f64;
    for &p in primes {
        let ctx = Context::new(p, 4).map_err(MargulisError::from)?;
        let classes = direction_classes(p, depth);
        let vals: Result<Vec<f64>> = classes
            .par_iter()
            .map(|c| {
                let w = class_vector(&ctx, c);
                let mut best = 0.0f64;
                for n in 1..=n_max {
                    let h = contraction_histogram(&w, n)?;
                    for &a in alphas {
                        let pf = p as f64;
                        let i = h.integral(a);
                        best = best.max(i * (pf - pf.powf(a)) * pf.powf(alpha_hat(a) * n as f64));
                    }
                }
                Ok(best)
            })
            .collect();
        worst = vals?.into_iter().fold(worst, f64::max);
    }
    Ok(worst)
}

/// Grid over which the default C2 is measured.
pub const C2_PRIMES: [u64; 2] = [5, 7];
pub const C2_ALPHAS: [f64; 4] = [0.3, 0.5, 0.7, 0.9];

/// Twice the maximum over depth-3 classes, 1 ≤ n ≤ 4 and the grid above,
/// i.e. `default_c2(&C2_PRIMES, &C2_ALPHAS)`.
pub const C2_DEFAULT: f64 = 6.656964839692739;

/// C2 used by default: twice the measured maximum over depth-3 classes.
pub fn default_c2(primes: &[u64], alphas: &[f64]) -> Result<f64> {
    Ok(2.0 * measure_c2(primes, alphas, 3, 4)?)
}

#[derive(Debug, Clone, Serialize)]
pub struct ContractionCase {
    pub w: [u64; 3],
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// Checks ∫ ‖a_m u_r w‖^-α dr ≤ p^-1 ‖w‖^-α over the direction classes.
pub fn contraction_sweep(p: u64, alpha: f64, m: u32, depth: u32) -> Result<Vec<ContractionCase>> {
    let ctx = Context::new(p, 4)?;
    direction_classes(p, depth)
        .par_iter()
        .map(|c| {
            let w = class_vector(&ctx, c);
            let lhs = contraction_histogram(&w, m as i64)?.integral(alpha);
            let rhs = norm_power(p, 0, alpha) / p as f64;
            Ok(ContractionCase { w: *c, lhs, rhs, holds: lhs <= rhs * (1.0 + 1e-9) })
        })
        .collect()
}

/// ν = law of a_m u_r with r Haar on Z_p, atoms enumerated at r_depth.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct WalkMeasure {
    pub p: u64,
    pub m_step: u32,
    pub r_depth: u32,
}

#[derive(Debug, Clone, Serialize)]
pub struct WalkAtom {
    /// r_1, ..., r_ℓ (applied right to left: a u_{r_ℓ} ··· a u_{r_1})
    pub rs: Vec<u64>,
    pub mass: f64,
}

impl WalkAtom {
    pub fn element(&self, ctx: &Context, m_step: u32) -> Result<SL2Elem> {
        let a = SL2Elem::diag(ctx.p_power(-(m_step as i64)))?;
        let mut g = SL2Elem::identity(ctx);
        for r in &self.rs {
            g = a.mul(&SL2Elem::upper(ctx.from_i64(*r as i64)))?.mul(&g)?;
        }
        Ok(g)
    }

    /// T = Σ p^{2m(i−1)} r_i, with a u_{r_ℓ}···a u_{r_1} = a_{ℓm} u_T.
    pub fn collapsed(&self, p: u64, m_step: u32) -> BigInt {
        let step = BigInt::from(p).pow(2 * m_step);
        let mut t = BigInt::zero();
        let mut scale = BigInt::one();
        for r in &self.rs {
            t += &scale * BigInt::from(*r);
            scale *= &step;
        }
        t
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct MonteCarlo {
    pub samples: usize,
    pub seed: u64,
}

/// The ℓ-fold convolution ν^(ℓ) as a list of atoms.
pub fn walk_convolve(nu: &WalkMeasure, l: u32, budget: u128, mc: Option<MonteCarlo>) -> Result<Vec<WalkAtom>> {
    let per = (nu.p as u128).pow(nu.r_depth);
    let atoms = per.checked_pow(l).unwrap_or(u128::MAX);
    if let Some(mc) = mc {
        if atoms > budget {
            let mut rng = ChaCha8Rng::seed_from_u64(mc.seed);
            let mass = 1.0 / mc.samples as f64;
            return Ok((0..mc.samples)
                .map(|_| WalkAtom { rs: (0..l).map(|_| rng.gen_range(0..per as u64)).collect(), mass })
                .collect());
        }
    }
    if atoms > budget {
        return Err(MargulisError::BudgetExceeded { atoms, budget });
    }
    let mass = 1.0 / atoms as f64;
    let mut out = Vec::with_capacity(atoms as usize);
    for idx in 0..atoms {
        let mut rs = Vec::with_capacity(l as usize);
        let mut x = idx;
        for _ in 0..l {
            rs.push((x % per) as u64);
            x /= per;
        }
        out.push(WalkAtom { rs, mass });
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct MargulisReport {
    pub p: u64,
    pub alpha: f64,
    pub m_step: u32,
    pub m_alpha: u32,
    pub l: u32,
    /// m_step ≥ m_α
    pub precondition: bool,
    pub f_identity: f64,
    pub lhs: f64,
    pub bound: f64,
    pub holds: bool,
}

/// f(h) = Σ_{w∈F} ‖Ad_h w‖^-α.
pub fn margulis_function(f: &[RVec], h: &SL2Elem, alpha: f64) -> Result<f64> {
    let mut terms = Vec::with_capacity(f.len());
    for w in f {
        let v = h.ad(w)?.valuation();
        match v {
            Valuation::Exact(v) => terms.push(norm_power(w.context().p(), v, alpha)),
            Valuation::Infinite => return Err(MargulisError::ZeroVector),
            Valuation::AtLeast(k) => return Err(PAdicError::IndeterminateValuation(k).into()),
        }
    }
    terms.sort_by(|a, b| a.total_cmp(b));
    Ok(terms.iter().sum())
}

/// ∫ f dν^(ℓ) ≤ p^-ℓ f(e), with the left side computed exactly: the word
/// a u_{r_ℓ}···a u_{r_1} equals a_{ℓm} u_T with T Haar-distributed, so each
/// summand is a single contraction integral at |λ| = p^{ℓm}.
pub fn margulis_recursion_check(
    f: &[RVec],
    alpha: f64,
    nu: &WalkMeasure,
    l: u32,
    m_alpha: u32,
    diagnostic: bool,
) -> Result<MargulisReport> {
    let p = nu.p;
    if nu.m_step < m_alpha && !diagnostic {
        return Err(MargulisError::StepTooSmall { m_step: nu.m_step, m_alpha });
    }
    let ctx = f.first().ok_or(MargulisError::ZeroVector)?.context();
    let f_identity = margulis_function(f, &SL2Elem::identity(&ctx), alpha)?;
    let lhs = if l == 0 {
        f_identity
    } else {
        let n = (l * nu.m_step) as i64;
        let mut terms: Vec<f64> =
            f.iter().map(|w| Ok(contraction_histogram(w, n)?.integral(alpha))).collect::<Result<_>>()?;
        terms.sort_by(|a, b| a.total_cmp(b));
        terms.iter().sum()
    };
    let bound = (p as f64).powi(-(l as i32)) * f_identity * (1.0 + 1e-9);
    Ok(MargulisReport {
        p,
        alpha,
        m_step: nu.m_step,
        m_alpha,
        l,
        precondition: nu.m_step >= m_alpha,
        f_identity,
        lhs,
        bound,
        holds: lhs <= bound,
    })
}

/// Σ_atoms mass·f(word), evaluated on the enumerated words (a Riemann sum
/// in the r_i, so only an approximation of the exact left side).
pub fn atom_average(f: &[RVec], alpha: f64, nu: &WalkMeasure, atoms: &[WalkAtom]) -> Result<f64> {
    let ctx = f.first().ok_or(MargulisError::ZeroVector)?.context();
    let mut terms: Vec<f64> = atoms
        .par_iter()
        .map(|a| Ok(a.mass * margulis_function(f, &a.element(&ctx, nu.m_step)?, alpha)?))
        .collect::<Result<_>>()?;
    terms.sort_by(|a, b| a.total_cmp(b));
    Ok(terms.iter().sum())
}

#[derive(Debug, Clone, Serialize)]
pub struct EnergyComparison {
    pub energy: f64,
    pub f_model: f64,
}

/// Energy of F at w0 against Σ_{w ∈ E, w ≠ 0} ‖w‖^-α where E is F moved to base point w0.
pub fn energy_vs_margulis(f: &PointSet, w0: &[u64], alpha: f64) -> Result<EnergyComparison> {
    let energy = energy_sum(f, alpha, w0)?;
    let e = change_base_point(f, w0)?;
    let m = e.depth();
    let zero = vec![0u64; e.dim()];
    let mut counts = vec![0usize; m as usize + 1];
    for w in e.points() {
        let v = e.distance_valuation(w, &zero);
        for c in counts.iter_mut().take(v as usize + 1) {
            *c += 1;
        }
    }
    let f_model = shell_sum(f.p(), alpha, &counts);
    Ok(EnergyComparison { energy, f_model })
}

/// Integer vector from RVec coordinates known exactly (for reports).
pub fn integer_coords(w: &RVec) -> Option<[BigInt; 3]> {
    let mut out: [BigInt; 3] = Default::default();
    for (slot, x) in out.iter_mut().zip(w.coords()) {
        let q = x.to_rational();
        if !q.is_integer() || matches!(x.valuation(), Valuation::AtLeast(_)) {
            return None;
        }
        *slot = q.to_integer();
    }
    if out.iter().all(|x| !x.is_negative()) {
        Some(out)
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx() -> Context {
        Context::new(5, 8).unwrap()
    }

    #[test]
    fn frozen_examples() {
        let c = ctx();
        let lam = c.p_power(-1);
        let i = contraction_integral(&RVec::from_ints(&c, 0, 1, 0), &lam, 0.5).unwrap();
        assert!((i - 0.2).abs() < 1e-15);
        let i = contraction_integral(&RVec::from_ints(&c, 0, 0, 1), &lam, 0.5).unwrap();
        assert!((i - 0.52).abs() < 1e-15);
        let h = contraction_histogram(&RVec::from_ints(&c, 0, 0, 1), 1).unwrap();
        assert_eq!(h.masses.len(), 3);
        assert_eq!(h.masses[&-2], BigRational::new(4.into(), 5.into()));
        assert_eq!(h.masses[&0], BigRational::new(4.into(), 25.into()));
        assert_eq!(h.masses[&2], BigRational::new(1.into(), 25.into()));
    }

    #[test]
    fn alpha_zero_gives_total_mass() {
        let c = ctx();
        for w in [(1, 2, 3), (0, 0, 5), (7, 0, 0), (5, 25, 1)] {
            let h = contraction_histogram(&RVec::from_ints(&c, w.0, w.1, w.2), 3).unwrap();
            assert!(h.total_mass().is_one());
            assert!((h.integral(0.0) - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn errors() {
        let c = ctx();
        assert!(matches!(contraction_integral(&RVec::zero(&c), &c.p_power(-1), 0.5), Err(MargulisError::ZeroVector)));
        assert!(matches!(
            contraction_integral(&RVec::from_ints(&c, 1, 0, 0), &c.from_i64(2), 0.5),
            Err(MargulisError::NotExpanding(0))
        ));
    }

    #[test]
    fn m_alpha_example() {
        assert_eq!(compute_m_alpha(5, 0.5, 4.0).unwrap(), 10);
        assert!(compute_m_alpha(5, 0.4, 4.0).unwrap() <= 10);
    }

    #[test]
    fn direction_class_counts() {
        assert_eq!(direction_classes(5, 2).len(), 775);
        assert_eq!(direction_classes(7, 2).len(), 2793);
        assert_eq!(direction_classes(5, 1).len(), 31);
    }

    #[test]
    fn walk_atoms() {
        let nu = WalkMeasure { p: 5, m_step: 1, r_depth: 1 };
        let a0 = walk_convolve(&nu, 0, 1000, None).unwrap();
        assert_eq!(a0.len(), 1);
        assert_eq!(a0[0].mass, 1.0);
        assert_eq!(walk_convolve(&nu, 1, 1000, None).unwrap().len(), 5);
        let a2 = walk_convolve(&nu, 2, 1000, None).unwrap();
        assert_eq!(a2.len(), 25);
        assert!((a2.iter().map(|a| a.mass).sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(walk_convolve(&nu, 8, 1000, None).is_err());
        let mc = walk_convolve(&nu, 8, 1000, Some(MonteCarlo { samples: 100, seed: 9 })).unwrap();
        assert_eq!(mc.len(), 100);
    }
}

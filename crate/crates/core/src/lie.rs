//! SL2(Q_p), G = SL2 x SL2, the transverse algebra r, and the maps between them.

use serde::Serialize;
use thiserror::Error;

use crate::padic::{Context, PAdic, PAdicError, Valuation};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LieError {
    #[error(transparent)]
    PAdic(#[from] PAdicError),
    #[error("determinant is not 1 at working precision")]
    NotUnimodular,
    #[error("outside the convergence domain: need valuation >= {needed}, have {have:?}")]
    Domain { needed: i64, have: Valuation },
    #[error("top-left entry is not a unit")]
    NotUnit,
    #[error("element is not in K_H[{0}]")]
    OutsideLevel(u32),
    #[error("precision exhausted: result valuation undetermined")]
    PrecisionExhausted,
    #[error("norm equality failed: |w| has valuation {got:?}, |w1 - w2| has {expected}")]
    NormMismatch { expected: i64, got: Valuation },
}

pub type Result<T> = std::result::Result<T, LieError>;

/// Trace-zero matrix (w11, w12; w21, -w11).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RVec {
    pub w11: PAdic,
    pub w12: PAdic,
    pub w21: PAdic,
}

/// Combined valuation of several coordinates (the norm is the max of |.|).
pub fn min_valuation(xs: &[PAdic]) -> Valuation {
    let mut exact: Option<i64> = None;
    let mut bound: Option<i64> = None;
    for x in xs {
        match x.valuation() {
            Valuation::Infinite => {}
            Valuation::Exact(v) => exact = Some(exact.map_or(v, |e| e.min(v))),
            Valuation::AtLeast(k) => bound = Some(bound.map_or(k, |b| b.min(k))),
        }
    }
    match (exact, bound) {
        (None, None) => Valuation::Infinite,
        (Some(v), None) => Valuation::Exact(v),
        (Some(v), Some(k)) if v < k => Valuation::Exact(v),
        (Some(v), Some(k)) => Valuation::AtLeast(v.min(k)),
        (None, Some(k)) => Valuation::AtLeast(k),
    }
}

impl RVec {
    pub fn new(w11: PAdic, w12: PAdic, w21: PAdic) -> Self {
        RVec { w11, w12, w21 }
    }

    pub fn from_ints(ctx: &Context, w11: i64, w12: i64, w21: i64) -> Self {
        RVec::new(ctx.from_i64(w11), ctx.from_i64(w12), ctx.from_i64(w21))
    }

    pub fn zero(ctx: &Context) -> Self {
        RVec::new(ctx.zero(), ctx.zero(), ctx.zero())
    }

    pub fn context(&self) -> Context {
        self.w11.context()
    }

    pub fn coords(&self) -> [PAdic; 3] {
        [self.w11, self.w12, self.w21]
    }

    pub fn valuation(&self) -> Valuation {
        min_valuation(&self.coords())
    }

    /// ‖w‖_p, failing when cancellation has hidden the leading coordinate.
    pub fn norm(&self) -> Result<f64> {
        match self.valuation() {
            Valuation::Infinite => Ok(0.0),
            Valuation::Exact(v) => Ok((self.context().p() as f64).powi(-(v as i32))),
            Valuation::AtLeast(k) => Err(PAdicError::IndeterminateValuation(k).into()),
        }
    }

    pub fn checked_add(&self, o: &RVec) -> Result<RVec> {
        Ok(RVec::new(
            self.w11.checked_add(&o.w11)?,
            self.w12.checked_add(&o.w12)?,
            self.w21.checked_add(&o.w21)?,
        ))
    }

    pub fn checked_sub(&self, o: &RVec) -> Result<RVec> {
        Ok(RVec::new(
            self.w11.checked_sub(&o.w11)?,
            self.w12.checked_sub(&o.w12)?,
            self.w21.checked_sub(&o.w21)?,
        ))
    }

    pub fn scale(&self, s: &PAdic) -> Result<RVec> {
        Ok(RVec::new(self.w11.checked_mul(s)?, self.w12.checked_mul(s)?, self.w21.checked_mul(s)?))
    }

    pub fn neg(&self) -> RVec {
        RVec::new(-self.w11, -self.w12, -self.w21)
    }

    /// δ = w11² + w12·w21, so that w² = δ·I.
    pub fn delta(&self) -> Result<PAdic> {
        Ok(self.w11.checked_mul(&self.w11)?.checked_add(&self.w12.checked_mul(&self.w21)?)?)
    }

    pub fn as_matrix(&self) -> Mat2 {
        Mat2 { a: self.w11, b: self.w12, c: self.w21, d: -self.w11 }
    }
}

/// Ad_{u_r} w.
pub fn ad_u(r: &PAdic, w: &RVec) -> Result<RVec> {
    let w11 = w.w11.checked_add(&r.checked_mul(&w.w21)?)?;
    let two_r = r.checked_add(r)?;
    let w12 = w
        .w12
        .checked_sub(&two_r.checked_mul(&w.w11)?)?
        .checked_sub(&r.checked_mul(r)?.checked_mul(&w.w21)?)?;
    Ok(RVec::new(w11, w12, w.w21))
}

/// Ad_{d_λ} w for d_λ = diag(λ, λ⁻¹).
pub fn ad_diag(lambda: &PAdic, w: &RVec) -> Result<RVec> {
    let l2 = lambda.checked_mul(lambda)?;
    let inv = l2.inverse()?;
    Ok(RVec::new(w.w11, w.w12.checked_mul(&l2)?, w.w21.checked_mul(&inv)?))
}

/// A 2x2 matrix over Q_p without any determinant constraint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Mat2 {
    pub a: PAdic,
    pub b: PAdic,
    pub c: PAdic,
    pub d: PAdic,
}

impl Mat2 {
    pub fn identity(ctx: &Context) -> Mat2 {
        Mat2 { a: ctx.one(), b: ctx.zero(), c: ctx.zero(), d: ctx.one() }
    }

    pub fn zero(ctx: &Context) -> Mat2 {
        Mat2 { a: ctx.zero(), b: ctx.zero(), c: ctx.zero(), d: ctx.zero() }
    }

    pub fn mul(&self, o: &Mat2) -> Result<Mat2> {
        let e = |x: &PAdic, y: &PAdic, z: &PAdic, w: &PAdic| -> Result<PAdic> {
            Ok(x.checked_mul(y)?.checked_add(&z.checked_mul(w)?)?)
        };
        Ok(Mat2 {
            a: e(&self.a, &o.a, &self.b, &o.c)?,
            b: e(&self.a, &o.b, &self.b, &o.d)?,
            c: e(&self.c, &o.a, &self.d, &o.c)?,
            d: e(&self.c, &o.b, &self.d, &o.d)?,
        })
    }

    pub fn add(&self, o: &Mat2) -> Result<Mat2> {
        Ok(Mat2 {
            a: self.a.checked_add(&o.a)?,
            b: self.b.checked_add(&o.b)?,
            c: self.c.checked_add(&o.c)?,
            d: self.d.checked_add(&o.d)?,
        })
    }

    pub fn sub(&self, o: &Mat2) -> Result<Mat2> {
        Ok(Mat2 {
            a: self.a.checked_sub(&o.a)?,
            b: self.b.checked_sub(&o.b)?,
            c: self.c.checked_sub(&o.c)?,
            d: self.d.checked_sub(&o.d)?,
        })
    }

    pub fn scale(&self, s: &PAdic) -> Result<Mat2> {
        Ok(Mat2 {
            a: self.a.checked_mul(s)?,
            b: self.b.checked_mul(s)?,
            c: self.c.checked_mul(s)?,
            d: self.d.checked_mul(s)?,
        })
    }

    pub fn det(&self) -> Result<PAdic> {
        Ok(self.a.checked_mul(&self.d)?.checked_sub(&self.b.checked_mul(&self.c)?)?)
    }

    pub fn entries(&self) -> [PAdic; 4] {
        [self.a, self.b, self.c, self.d]
    }

    pub fn valuation(&self) -> Valuation {
        min_valuation(&self.entries())
    }
}

/// Element of SL2(Q_p).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SL2Elem {
    m: Mat2,
}

impl SL2Elem {
    pub fn new(a: PAdic, b: PAdic, c: PAdic, d: PAdic) -> Result<Self> {
        let m = Mat2 { a, b, c, d };
        let one = a.context().one();
        if m.det()? != one {
            return Err(LieError::NotUnimodular);
        }
        Ok(SL2Elem { m })
    }

    pub fn identity(ctx: &Context) -> Self {
        SL2Elem { m: Mat2::identity(ctx) }
    }

    /// (1 x; 0 1)
    pub fn upper(x: PAdic) -> Self {
        let ctx = x.context();
        SL2Elem { m: Mat2 { a: ctx.one(), b: x, c: ctx.zero(), d: ctx.one() } }
    }

    /// (1 0; x 1)
    pub fn lower(x: PAdic) -> Self {
        let ctx = x.context();
        SL2Elem { m: Mat2 { a: ctx.one(), b: ctx.zero(), c: x, d: ctx.one() } }
    }

    /// diag(λ, λ⁻¹)
    pub fn diag(lambda: PAdic) -> Result<Self> {
        let ctx = lambda.context();
        Ok(SL2Elem { m: Mat2 { a: lambda, b: ctx.zero(), c: ctx.zero(), d: lambda.inverse()? } })
    }

    pub fn a(&self) -> PAdic {
        self.m.a
    }
    pub fn b(&self) -> PAdic {
        self.m.b
    }
    pub fn c(&self) -> PAdic {
        self.m.c
    }
    pub fn d(&self) -> PAdic {
        self.m.d
    }

    pub fn matrix(&self) -> &Mat2 {
        &self.m
    }

    pub fn context(&self) -> Context {
        self.m.a.context()
    }

    pub fn mul(&self, o: &SL2Elem) -> Result<SL2Elem> {
        Ok(SL2Elem { m: self.m.mul(&o.m)? })
    }

    pub fn inv(&self) -> SL2Elem {
        SL2Elem { m: Mat2 { a: self.m.d, b: -self.m.b, c: -self.m.c, d: self.m.a } }
    }

    /// Valuation of g − I; ‖g − I‖ ≤ p^-n iff this is at least n.
    pub fn distance_valuation(&self) -> Result<Valuation> {
        Ok(self.m.sub(&Mat2::identity(&self.context()))?.valuation())
    }

    /// g ∈ K[n]; an entry whose valuation is not resolved to n digits counts as outside.
    pub fn in_level(&self, n: u32) -> bool {
        match self.distance_valuation() {
            Ok(v) => v.lower_bound() >= n as i64,
            Err(_) => false,
        }
    }

    /// h w h⁻¹.
    pub fn ad(&self, w: &RVec) -> Result<RVec> {
        let x = self.m.mul(&w.as_matrix())?.mul(&self.inv().m)?;
        Ok(RVec::new(x.a, x.b, x.c))
    }
}

/// Element of G = SL2(Q_p) x SL2(Q_p).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GElem {
    pub left: SL2Elem,
    pub right: SL2Elem,
}

impl GElem {
    pub fn identity(ctx: &Context) -> Self {
        GElem { left: SL2Elem::identity(ctx), right: SL2Elem::identity(ctx) }
    }

    /// The diagonal copy (g, g) of H.
    pub fn diagonal(g: SL2Elem) -> Self {
        GElem { left: g, right: g }
    }

    /// n(r, s) = ((1 r+s; 0 1), (1 r; 0 1)).
    pub fn n(r: &PAdic, s: &PAdic) -> Result<Self> {
        Ok(GElem { left: SL2Elem::upper(r.checked_add(s)?), right: SL2Elem::upper(*r) })
    }

    pub fn u(r: &PAdic) -> Self {
        GElem::diagonal(SL2Elem::upper(*r))
    }

    pub fn v(s: &PAdic) -> Self {
        let ctx = s.context();
        GElem { left: SL2Elem::upper(*s), right: SL2Elem::identity(&ctx) }
    }

    pub fn d(lambda: &PAdic) -> Result<Self> {
        Ok(GElem::diagonal(SL2Elem::diag(*lambda)?))
    }

    /// a_n = d_{p^-n}.
    pub fn a(ctx: &Context, n: i64) -> Self {
        GElem::d(&ctx.p_power(-n)).expect("p-power is invertible")
    }

    pub fn mul(&self, o: &GElem) -> Result<GElem> {
        Ok(GElem { left: self.left.mul(&o.left)?, right: self.right.mul(&o.right)? })
    }

    pub fn inv(&self) -> GElem {
        GElem { left: self.left.inv(), right: self.right.inv() }
    }

    /// Ad_g on r = sl2 ⊕ 0 only sees the first factor.
    pub fn ad(&self, w: &RVec) -> Result<RVec> {
        self.left.ad(w)
    }
}

/// g ∈ K[n], i.e. ‖g − I‖ ≤ p^-n in both factors.
pub fn level_membership(g: &GElem, n: u32) -> bool {
    g.left.in_level(n) && g.right.in_level(n)
}

/// Factor k = (1 0; c/a 1)(a 0; 0 a⁻¹)(1 b/a; 0 1) for k ∈ K_H[n].
pub fn gauss_decompose(k: &SL2Elem, n: u32) -> Result<(SL2Elem, SL2Elem, SL2Elem)> {
    if k.a().exact_valuation().ok() != Some(0) {
        return Err(LieError::NotUnit);
    }
    if !k.in_level(n) {
        return Err(LieError::OutsideLevel(n));
    }
    let a = k.a();
    let lower = SL2Elem::lower(k.c().checked_div(&a)?);
    let diag = SL2Elem::diag(a)?;
    let upper = SL2Elem::upper(k.b().checked_div(&a)?);
    Ok((lower, diag, upper))
}

fn require_valuation(v: Valuation, needed: i64) -> Result<()> {
    if v.lower_bound() >= needed {
        Ok(())
    } else {
        Err(LieError::Domain { needed, have: v })
    }
}

/// exp(w) = C(δ)·I + S(δ)·w, with C = Σ δ^k/(2k)!, S = Σ δ^k/(2k+1)!.
pub fn exp_r(w: &RVec) -> Result<SL2Elem> {
    let ctx = w.context();
    let v = w.valuation();
    require_valuation(v, 1)?;
    let v = v.lower_bound().min(ctx.precision() as i64 + 1);
    let delta = w.delta()?;
    let p = ctx.p() as i64;
    let target = ctx.precision() as i64 + 1;
    let mut c_term = ctx.one();
    let mut s_term = ctx.one();
    let mut c = c_term;
    let mut s = s_term;
    let mut k = 1i64;
    loop {
        // every later term of C or S·w has valuation above this bound
        if 2 * k * v - (2 * k + 1) / (p - 1) >= target {
            break;
        }
        c_term = c_term.checked_mul(&delta)?.checked_div(&ctx.from_i64((2 * k - 1) * (2 * k)))?;
        s_term = s_term.checked_mul(&delta)?.checked_div(&ctx.from_i64((2 * k) * (2 * k + 1)))?;
        c = c.checked_add(&c_term)?;
        s = s.checked_add(&s_term)?;
        k += 1;
    }
    let m = Mat2::identity(&ctx).scale(&c)?.add(&w.as_matrix().scale(&s)?)?;
    Ok(SL2Elem { m })
}

/// log g = Σ (−1)^{k+1} (g − I)^k / k.
pub fn log_r(g: &SL2Elem) -> Result<RVec> {
    let ctx = g.context();
    let x = g.m.sub(&Mat2::identity(&ctx))?;
    let v = x.valuation();
    require_valuation(v, 1)?;
    let v = v.lower_bound().min(ctx.precision() as i64 + 1);
    let p = ctx.p() as i64;
    let target = ctx.precision() as i64 + 1;
    let mut acc = Mat2::zero(&ctx);
    let mut power = x;
    let mut k = 1i64;
    loop {
        let vp_bound = {
            let mut e = 0;
            let mut q = k;
            while q >= p {
                q /= p;
                e += 1;
            }
            e
        };
        if k * v - vp_bound >= target && k > 1 {
            break;
        }
        let term = power.scale(&ctx.from_i64(if k % 2 == 1 { 1 } else { -1 }))?;
        let term = term.scale(&ctx.from_i64(k).inverse()?)?;
        acc = acc.add(&term)?;
        power = power.mul(&x)?;
        k += 1;
    }
    Ok(RVec::new(acc.a, acc.b, acc.c))
}

/// Domain radius exponent for BCH products.
pub const BCH_M0: i64 = 2;

/// w with exp(w1)·exp(−w2) = exp(w), checked against ‖w‖ = ‖w1 − w2‖.
pub fn bch_product(w1: &RVec, w2: &RVec) -> Result<RVec> {
    require_valuation(w1.valuation(), BCH_M0)?;
    require_valuation(w2.valuation(), BCH_M0)?;
    let g = exp_r(w1)?.mul(&exp_r(&w2.neg())?)?;
    let w = log_r(&g)?;
    let diff = w1.checked_sub(w2)?;
    match diff.valuation() {
        Valuation::Exact(e) => match w.valuation() {
            Valuation::Exact(got) if got == e => Ok(w),
            Valuation::Exact(got) => {
                Err(LieError::NormMismatch { expected: e, got: Valuation::Exact(got) })
            }
            _ => Err(LieError::PrecisionExhausted),
        },
        _ => Ok(w),
    }
}

/// Q^H membership for η = p^-eta_exp, β = p^-beta_exp:
/// |a−1| ≤ β, |d−1| ≤ β, |b| ≤ η, |c| ≤ β·p^-m.
pub fn qh_membership(h: &SL2Elem, eta_exp: u32, beta_exp: u32, m: u32) -> bool {
    let one = h.context().one();
    let ok = |x: std::result::Result<PAdic, PAdicError>, bound: u32| match x {
        Ok(x) => x.valuation().lower_bound() >= bound as i64,
        Err(_) => false,
    };
    ok(h.a().checked_sub(&one), beta_exp)
        && ok(h.d().checked_sub(&one), beta_exp)
        && ok(Ok(h.b()), eta_exp)
        && ok(Ok(h.c()), beta_exp + m)
}

/// Outcome of rewriting q·a_m·u_r·k as a_m·u_{r'}·k'.
#[derive(Debug, Clone, Serialize)]
pub struct ConjugationSolve {
    pub r_prime: PAdic,
    pub k_prime: SL2Elem,
    /// k' ∈ K_{H,β}
    pub contained: bool,
    /// v(r' − r)
    pub shift_valuation: Valuation,
}

/// Solve q·a_m·u_r·k = a_m·u_{r'}·k' with r' chosen to clear the (1,2) entry of k'.
pub fn conjugation_solve(
    q: &SL2Elem,
    r: &PAdic,
    k: &SL2Elem,
    m: i64,
    beta_exp: u32,
) -> Result<ConjugationSolve> {
    let ctx = q.context();
    let am = SL2Elem::diag(ctx.p_power(-m))?;
    let g = q.mul(&am)?.mul(&SL2Elem::upper(*r))?.mul(k)?;
    let x = am.inv().mul(&g)?;
    let r_prime = x.b().checked_div(&x.d())?;
    let k_prime = SL2Elem::upper(-r_prime).mul(&x)?;
    let contained = k_prime.in_level(beta_exp);
    let shift_valuation = r_prime.checked_sub(r)?.valuation();
    Ok(ConjugationSolve { r_prime, k_prime, contained, shift_valuation })
}

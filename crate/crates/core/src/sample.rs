//! Random p-adic inputs for tests and experiment grids.

use rand::Rng;

use crate::lie::{RVec, SL2Elem};
use crate::padic::{Context, PAdic};

/// Uniform element of p^min_val·Z_p, known to absolute precision
/// min_val + context precision.
pub fn scalar<R: Rng + ?Sized>(rng: &mut R, ctx: &Context, min_val: i64) -> PAdic {
    let m = ctx.precision();
    ctx.from_residue(rng.gen_range(0..ctx.pow_p(m)), m).shift(min_val)
}

/// Uniform unit of Z_p.
pub fn unit<R: Rng + ?Sized>(rng: &mut R, ctx: &Context) -> PAdic {
    let m = ctx.precision();
    let p = ctx.p();
    loop {
        let x = rng.gen_range(0..ctx.pow_p(m));
        if x % p != 0 {
            return ctx.from_residue(x, m);
        }
    }
}

/// Uniform element of p^min_val·Z_p³ (coordinates independent).
pub fn rvec<R: Rng + ?Sized>(rng: &mut R, ctx: &Context, min_val: i64) -> RVec {
    RVec::new(scalar(rng, ctx, min_val), scalar(rng, ctx, min_val), scalar(rng, ctx, min_val))
}

/// Element of SL2(Z_p) with a ≡ 1 mod p^n, b, c ≡ 0 mod p^n, d = (1 + bc)/a.
pub fn level_element<R: Rng + ?Sized>(rng: &mut R, ctx: &Context, n: i64) -> SL2Elem {
    let a = ctx.one() + scalar(rng, ctx, n);
    let b = scalar(rng, ctx, n);
    let c = scalar(rng, ctx, n);
    let d = (ctx.one() + b * c) / a;
    SL2Elem::new(a, b, c, d).expect("determinant one by construction")
}

/// Element of Q^H with parameters (η, β, m) given as exponents.
pub fn qh_element<R: Rng + ?Sized>(rng: &mut R, ctx: &Context, eta_exp: u32, beta_exp: u32, m: u32) -> SL2Elem {
    let a = ctx.one() + scalar(rng, ctx, beta_exp as i64);
    let b = scalar(rng, ctx, eta_exp as i64);
    let c = scalar(rng, ctx, (beta_exp + m) as i64);
    let d = (ctx.one() + b * c) / a;
    SL2Elem::new(a, b, c, d).expect("determinant one by construction")
}

/// Element of SL2(Z_p) with a unit top-left entry.
pub fn integral_sl2<R: Rng + ?Sized>(rng: &mut R, ctx: &Context) -> SL2Elem {
    let a = unit(rng, ctx);
    let b = scalar(rng, ctx, 0);
    let c = scalar(rng, ctx, 0);
    let d = (ctx.one() + b * c) / a;
    SL2Elem::new(a, b, c, d).expect("determinant one by construction")
}

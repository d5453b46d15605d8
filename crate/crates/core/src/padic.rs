//! Arithmetic in Q_p at bounded relative precision, and Haar integration of
//! locally constant functions on Z_p.
//!
//! An element is either an exact zero, a quantity known only to vanish
//! modulo some power of p, or `p^val * u` with `u` a unit known modulo
//! `p^prec`.  Precision is tracked per element, so cancellation shows up as a
//! loss of relative precision rather than a silently wrong valuation.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use serde::Serialize;
use thiserror::Error;

pub const SUPPORTED_PRIMES: [u64; 4] = [5, 7, 11, 13];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PAdicError {
    #[error("unsupported prime {0}; expected one of 5, 7, 11, 13")]
    UnsupportedPrime(u64),
    #[error("precision {prec} out of range for p = {p} (max {max})")]
    PrecisionOutOfRange { p: u64, prec: u32, max: u32 },
    #[error("operands live in different contexts")]
    ContextMismatch,
    #[error("division by zero")]
    DivisionByZero,
    #[error("valuation is indeterminate (known only to be >= {0})")]
    IndeterminateValuation(i64),
    #[error("element is not in Z_p")]
    NotIntegral,
    #[error("need {needed} digits of absolute precision, have {have}")]
    InsufficientPrecision { needed: i64, have: i64 },
    #[error("empty table")]
    EmptyTable,
    #[error("table has {got} entries, expected p^{depth} = {expected}")]
    DepthMismatch { depth: u32, expected: usize, got: usize },
    #[error("non-finite value in table")]
    NonFinite,
    #[error("table is not constant on depth-{depth} balls")]
    NotLocallyConstant { depth: u32 },
}

pub type Result<T> = std::result::Result<T, PAdicError>;

/// Prime and relative precision cap shared by all elements of a computation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct Context {
    p: u64,
    prec: u32,
}

impl Context {
    pub fn new(p: u64, prec: u32) -> Result<Self> {
        if !SUPPORTED_PRIMES.contains(&p) {
            return Err(PAdicError::UnsupportedPrime(p));
        }
        let max = max_precision(p);
        if prec == 0 || prec > max {
            return Err(PAdicError::PrecisionOutOfRange { p, prec, max });
        }
        Ok(Context { p, prec })
    }

    pub fn p(&self) -> u64 {
        self.p
    }

    pub fn precision(&self) -> u32 {
        self.prec
    }

    /// p^k as an integer; k must not exceed the precision bound.
    pub fn pow_p(&self, k: u32) -> u64 {
        self.p.pow(k)
    }

    pub fn zero(&self) -> PAdic {
        PAdic { ctx: *self, repr: Repr::Zero }
    }

    pub fn one(&self) -> PAdic {
        self.from_i64(1)
    }

    pub fn from_i64(&self, n: i64) -> PAdic {
        if n == 0 {
            return self.zero();
        }
        let (v, rest) = split_valuation_i128(n as i128, self.p);
        let modulus = self.p.pow(self.prec) as i128;
        PAdic {
            ctx: *self,
            repr: Repr::Value { val: v, unit: rest.rem_euclid(modulus) as u64, prec: self.prec },
        }
    }

    /// Exact p^k for any integer k.
    pub fn p_power(&self, k: i64) -> PAdic {
        PAdic { ctx: *self, repr: Repr::Value { val: k, unit: 1, prec: self.prec } }
    }

    /// The class of `x` modulo p^abs_prec, as an element of Z_p known to
    /// absolute precision `abs_prec`.
    pub fn from_residue(&self, x: u64, abs_prec: u32) -> PAdic {
        let m = self.p.pow(abs_prec);
        let x = x % m;
        if x == 0 {
            return PAdic { ctx: *self, repr: Repr::Small { at_least: abs_prec as i64 } };
        }
        let (v, u) = split_valuation_u64(x, self.p);
        let prec = (abs_prec - v as u32).min(self.prec);
        PAdic {
            ctx: *self,
            repr: Repr::Value { val: v, unit: u % self.p.pow(prec), prec },
        }
    }

    pub fn from_bigint(&self, n: &BigInt) -> PAdic {
        if n.is_zero() {
            return self.zero();
        }
        let pb = BigInt::from(self.p);
        let mut v = 0i64;
        let mut q = n.clone();
        while (&q % &pb).is_zero() {
            q /= &pb;
            v += 1;
        }
        let modulus = BigInt::from(self.p.pow(self.prec));
        let mut r = q % &modulus;
        if r < BigInt::zero() {
            r += &modulus;
        }
        PAdic {
            ctx: *self,
            repr: Repr::Value { val: v, unit: r.to_u64().unwrap(), prec: self.prec },
        }
    }

    pub fn from_rational(&self, q: &BigRational) -> Result<PAdic> {
        let num = self.from_bigint(q.numer());
        let den = self.from_bigint(q.denom());
        num.checked_div(&den)
    }
}

/// Largest precision with p^prec < 2^63, so unit products fit in u128.
pub fn max_precision(p: u64) -> u32 {
    let mut k = 0u32;
    let mut acc: u128 = 1;
    while acc * (p as u128) < (1u128 << 63) {
        acc *= p as u128;
        k += 1;
    }
    k
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Repr {
    Zero,
    /// Congruent to 0 modulo p^at_least, nothing more known.
    Small { at_least: i64 },
    Value { val: i64, unit: u64, prec: u32 },
}

/// Valuation of an element, as far as it is known.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Valuation {
    Infinite,
    Exact(i64),
    AtLeast(i64),
}

impl Valuation {
    /// A lower bound that always holds (i64::MAX for exact zero).
    pub fn lower_bound(self) -> i64 {
        match self {
            Valuation::Infinite => i64::MAX,
            Valuation::Exact(v) | Valuation::AtLeast(v) => v,
        }
    }
}

#[derive(Clone, Copy, Serialize)]
pub struct PAdic {
    ctx: Context,
    repr: Repr,
}

impl PAdic {
    pub fn context(&self) -> Context {
        self.ctx
    }

    pub fn p(&self) -> u64 {
        self.ctx.p
    }

    pub fn is_exact_zero(&self) -> bool {
        matches!(self.repr, Repr::Zero)
    }

    /// True for exact zero and for values indistinguishable from zero.
    pub fn is_zero_at_precision(&self) -> bool {
        !matches!(self.repr, Repr::Value { .. })
    }

    pub fn valuation(&self) -> Valuation {
        match self.repr {
            Repr::Zero => Valuation::Infinite,
            Repr::Small { at_least } => Valuation::AtLeast(at_least),
            Repr::Value { val, .. } => Valuation::Exact(val),
        }
    }

    /// Exact valuation, failing for anything that is not a determined nonzero.
    pub fn exact_valuation(&self) -> Result<i64> {
        match self.repr {
            Repr::Value { val, .. } => Ok(val),
            Repr::Small { at_least } => Err(PAdicError::IndeterminateValuation(at_least)),
            Repr::Zero => Err(PAdicError::IndeterminateValuation(i64::MAX)),
        }
    }

    /// Unit part and its relative precision, for determined nonzero elements.
    pub fn unit(&self) -> Option<(u64, u32)> {
        match self.repr {
            Repr::Value { unit, prec, .. } => Some((unit, prec)),
            _ => None,
        }
    }

    /// Relative precision (0 for anything without a determined unit).
    pub fn relative_precision(&self) -> u32 {
        match self.repr {
            Repr::Value { prec, .. } => prec,
            _ => 0,
        }
    }

    /// The exponent e such that the element is known modulo p^e; None for exact zero.
    pub fn absolute_precision(&self) -> Option<i64> {
        match self.repr {
            Repr::Zero => None,
            Repr::Small { at_least } => Some(at_least),
            Repr::Value { val, prec, .. } => Some(val + prec as i64),
        }
    }

    /// |x|_p, or an error if the valuation is not determined.
    pub fn norm(&self) -> Result<f64> {
        match self.repr {
            Repr::Zero => Ok(0.0),
            Repr::Small { at_least } => Err(PAdicError::IndeterminateValuation(at_least)),
            Repr::Value { val, .. } => Ok((self.ctx.p as f64).powi(-(val as i32))),
        }
    }

    /// Residue modulo p^k of an element of Z_p known to at least k digits.
    pub fn residue(&self, k: u32) -> Result<u64> {
        let m = self.ctx.p.pow(k);
        match self.repr {
            Repr::Zero => Ok(0),
            Repr::Small { at_least } => {
                if at_least >= k as i64 {
                    Ok(0)
                } else {
                    Err(PAdicError::InsufficientPrecision { needed: k as i64, have: at_least })
                }
            }
            Repr::Value { val, unit, prec } => {
                if val < 0 {
                    return Err(PAdicError::NotIntegral);
                }
                if val >= k as i64 {
                    return Ok(0);
                }
                let have = val + prec as i64;
                if have < k as i64 {
                    return Err(PAdicError::InsufficientPrecision { needed: k as i64, have });
                }
                let digits = k - val as u32;
                Ok((unit % self.ctx.p.pow(digits)) * self.ctx.p.pow(val as u32) % m)
            }
        }
    }

    /// Exact integer p^val * unit (unit taken as its least nonnegative residue).
    pub fn representative(&self) -> Option<(i64, u64)> {
        match self.repr {
            Repr::Value { val, unit, .. } => Some((val, unit)),
            _ => None,
        }
    }

    /// Agreement modulo p^abs (both sides must be known that far).
    pub fn agrees_to(&self, other: &PAdic, abs: i64) -> bool {
        match self.checked_sub(other) {
            Ok(d) => match d.repr {
                Repr::Zero => true,
                Repr::Small { at_least } => at_least >= abs,
                Repr::Value { val, .. } => val >= abs,
            },
            Err(_) => false,
        }
    }

    fn check(&self, other: &PAdic) -> Result<()> {
        if self.ctx != other.ctx {
            Err(PAdicError::ContextMismatch)
        } else {
            Ok(())
        }
    }

    pub fn checked_add(&self, other: &PAdic) -> Result<PAdic> {
        self.check(other)?;
        let ctx = self.ctx;
        let (a, b) = match (self.repr, other.repr) {
            (Repr::Zero, _) => return Ok(*other),
            (_, Repr::Zero) => return Ok(*self),
            pair => pair,
        };
        let abs = |r: Repr| match r {
            Repr::Small { at_least } => at_least,
            Repr::Value { val, prec, .. } => val + prec as i64,
            Repr::Zero => unreachable!(),
        };
        let target = abs(a).min(abs(b));
        let base = [a, b]
            .iter()
            .filter_map(|r| match r {
                Repr::Value { val, .. } => Some(*val),
                _ => None,
            })
            .min();
        let base = match base {
            Some(v) if v < target => v,
            _ => return Ok(PAdic { ctx, repr: Repr::Small { at_least: target } }),
        };
        let e = (target - base) as u32;
        let modulus = ctx.p.pow(e);
        let mut s: u64 = 0;
        for r in [a, b] {
            if let Repr::Value { val, unit, .. } = r {
                let shift = (val - base) as u32;
                if shift < e {
                    let term = (unit % ctx.p.pow(e - shift)) * ctx.p.pow(shift);
                    s = ((s as u128 + term as u128) % modulus as u128) as u64;
                }
            }
        }
        if s == 0 {
            return Ok(PAdic { ctx, repr: Repr::Small { at_least: target } });
        }
        let (k, u) = split_valuation_u64(s, ctx.p);
        Ok(PAdic { ctx, repr: Repr::Value { val: base + k, unit: u, prec: e - k as u32 } })
    }

    pub fn checked_sub(&self, other: &PAdic) -> Result<PAdic> {
        self.checked_add(&other.negate())
    }

    pub fn negate(&self) -> PAdic {
        let repr = match self.repr {
            Repr::Value { val, unit, prec } => {
                let m = self.ctx.p.pow(prec);
                Repr::Value { val, unit: (m - unit) % m, prec }
            }
            r => r,
        };
        PAdic { ctx: self.ctx, repr }
    }

    pub fn checked_mul(&self, other: &PAdic) -> Result<PAdic> {
        self.check(other)?;
        let repr = match (self.repr, other.repr) {
            (Repr::Zero, _) | (_, Repr::Zero) => Repr::Zero,
            (Repr::Small { at_least: k1 }, Repr::Small { at_least: k2 }) => {
                Repr::Small { at_least: k1 + k2 }
            }
            (Repr::Small { at_least }, Repr::Value { val, .. })
            | (Repr::Value { val, .. }, Repr::Small { at_least }) => {
                Repr::Small { at_least: at_least + val }
            }
            (Repr::Value { val: v1, unit: u1, prec: p1 }, Repr::Value { val: v2, unit: u2, prec: p2 }) => {
                let prec = p1.min(p2);
                let m = self.ctx.p.pow(prec) as u128;
                let unit = ((u1 as u128 % m) * (u2 as u128 % m) % m) as u64;
                Repr::Value { val: v1 + v2, unit, prec }
            }
        };
        Ok(PAdic { ctx: self.ctx, repr })
    }

    pub fn inverse(&self) -> Result<PAdic> {
        match self.repr {
            Repr::Zero => Err(PAdicError::DivisionByZero),
            Repr::Small { at_least } => Err(PAdicError::IndeterminateValuation(at_least)),
            Repr::Value { val, unit, prec } => {
                let m = self.ctx.p.pow(prec);
                let inv = mod_inverse(unit, m).expect("unit is coprime to p");
                Ok(PAdic { ctx: self.ctx, repr: Repr::Value { val: -val, unit: inv, prec } })
            }
        }
    }

    pub fn checked_div(&self, other: &PAdic) -> Result<PAdic> {
        self.check(other)?;
        let inv = other.inverse()?;
        self.checked_mul(&inv)
    }

    pub fn pow(&self, e: i64) -> Result<PAdic> {
        if e < 0 {
            return self.inverse()?.pow(-e);
        }
        let mut result = self.ctx.one();
        let mut base = *self;
        let mut e = e as u64;
        while e > 0 {
            if e & 1 == 1 {
                result = result.checked_mul(&base)?;
            }
            base = base.checked_mul(&base)?;
            e >>= 1;
        }
        Ok(result)
    }

    /// Multiply by p^k exactly.
    pub fn shift(&self, k: i64) -> PAdic {
        let repr = match self.repr {
            Repr::Zero => Repr::Zero,
            Repr::Small { at_least } => Repr::Small { at_least: at_least + k },
            Repr::Value { val, unit, prec } => Repr::Value { val: val + k, unit, prec },
        };
        PAdic { ctx: self.ctx, repr }
    }

    /// Drop relative precision to at most `prec` digits.
    pub fn truncate(&self, prec: u32) -> PAdic {
        let repr = match self.repr {
            Repr::Value { val, unit, prec: q } if prec < q => {
                if prec == 0 {
                    Repr::Small { at_least: val }
                } else {
                    Repr::Value { val, unit: unit % self.ctx.p.pow(prec), prec }
                }
            }
            r => r,
        };
        PAdic { ctx: self.ctx, repr }
    }

    /// Exact rational value of the stored representative.
    pub fn to_rational(&self) -> BigRational {
        match self.repr {
            Repr::Value { val, unit, .. } => {
                let p = BigInt::from(self.ctx.p);
                let u = BigInt::from(unit);
                if val >= 0 {
                    BigRational::from_integer(u * num_traits::pow(p, val as usize))
                } else {
                    BigRational::new(u, num_traits::pow(p, (-val) as usize))
                }
            }
            _ => BigRational::zero(),
        }
    }
}

/// The four field operations, as a single checked entry point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
    Div,
}

pub fn arith(x: &PAdic, y: &PAdic, op: ArithOp) -> Result<PAdic> {
    match op {
        ArithOp::Add => x.checked_add(y),
        ArithOp::Sub => x.checked_sub(y),
        ArithOp::Mul => x.checked_mul(y),
        ArithOp::Div => x.checked_div(y),
    }
}

pub fn padic_norm(x: &PAdic) -> Result<f64> {
    x.norm()
}

/// Equality means agreement at the precision both sides carry.
impl PartialEq for PAdic {
    fn eq(&self, other: &Self) -> bool {
        if self.ctx != other.ctx {
            return false;
        }
        match (self.repr, other.repr) {
            (Repr::Zero, Repr::Zero) => true,
            _ => match self.checked_sub(other) {
                Ok(d) => d.is_zero_at_precision(),
                Err(_) => false,
            },
        }
    }
}

impl fmt::Debug for PAdic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl fmt::Display for PAdic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p = self.ctx.p;
        match self.repr {
            Repr::Zero => write!(f, "0"),
            Repr::Small { at_least } => write!(f, "O({p}^{at_least})"),
            Repr::Value { val, unit, prec } => {
                write!(f, "{p}^{val}*{unit} + O({p}^{})", val + prec as i64)
            }
        }
    }
}

macro_rules! binop {
    ($tr:ident, $method:ident, $checked:ident) => {
        impl $tr for PAdic {
            type Output = PAdic;
            fn $method(self, rhs: PAdic) -> PAdic {
                self.$checked(&rhs).unwrap_or_else(|e| panic!("p-adic {}: {e}", stringify!($method)))
            }
        }
        impl<'a> $tr<&'a PAdic> for &'a PAdic {
            type Output = PAdic;
            fn $method(self, rhs: &PAdic) -> PAdic {
                self.$checked(rhs).unwrap_or_else(|e| panic!("p-adic {}: {e}", stringify!($method)))
            }
        }
    };
}

binop!(Add, add, checked_add);
binop!(Sub, sub, checked_sub);
binop!(Mul, mul, checked_mul);
binop!(Div, div, checked_div);

impl Neg for PAdic {
    type Output = PAdic;
    fn neg(self) -> PAdic {
        self.negate()
    }
}

fn split_valuation_u64(mut x: u64, p: u64) -> (i64, u64) {
    let mut v = 0;
    while x.is_multiple_of(p) {
        x /= p;
        v += 1;
    }
    (v, x)
}

fn split_valuation_i128(mut x: i128, p: u64) -> (i64, i128) {
    let p = p as i128;
    let mut v = 0;
    while x % p == 0 {
        x /= p;
        v += 1;
    }
    (v, x)
}

/// p-adic valuation of a nonzero integer.
pub fn valuation_u64(x: u64, p: u64) -> Option<u32> {
    if x == 0 {
        None
    } else {
        Some(split_valuation_u64(x, p).0 as u32)
    }
}

/// Inverse of `a` modulo `m` by the extended Euclidean algorithm.
pub fn mod_inverse(a: u64, m: u64) -> Option<u64> {
    if m == 1 {
        return Some(0);
    }
    let (mut r0, mut r1) = (m as i128, (a % m) as i128);
    let (mut t0, mut t1) = (0i128, 1i128);
    while r1 != 0 {
        let q = r0 / r1;
        (r0, r1) = (r1, r0 - q * r1);
        (t0, t1) = (t1, t0 - q * t1);
    }
    if r0 != 1 {
        return None;
    }
    Some(t0.rem_euclid(m as i128) as u64)
}

/// A function on Z_p constant on balls of radius p^-depth, stored by residue.
#[derive(Debug, Clone, PartialEq)]
pub struct ZpTable {
    pub p: u64,
    pub depth: u32,
    pub values: Vec<f64>,
}

impl ZpTable {
    pub fn from_fn(p: u64, depth: u32, f: impl Fn(u64) -> f64) -> Self {
        let n = p.pow(depth);
        ZpTable { p, depth, values: (0..n).map(f).collect() }
    }

    /// Same function viewed at depth + 1.
    pub fn refine(&self) -> ZpTable {
        let n = self.p.pow(self.depth);
        let values = (0..n * self.p).map(|t| self.values[(t % n) as usize]).collect();
        ZpTable { p: self.p, depth: self.depth + 1, values }
    }

    /// Same function at depth - 1, if it is constant on the coarser balls.
    pub fn coarsen(&self) -> Result<ZpTable> {
        if self.depth == 0 {
            return Err(PAdicError::NotLocallyConstant { depth: 0 });
        }
        let n = self.p.pow(self.depth - 1) as usize;
        for (t, v) in self.values.iter().enumerate() {
            if v.to_bits() != self.values[t % n].to_bits() {
                return Err(PAdicError::NotLocallyConstant { depth: self.depth - 1 });
            }
        }
        Ok(ZpTable { p: self.p, depth: self.depth - 1, values: self.values[..n].to_vec() })
    }

    pub fn integrate(&self) -> Result<f64> {
        haar_integrate(self.p, self.depth, &self.values)
    }
}

/// Σ f(t)·p^-m over the residues t mod p^m.
///
/// Summation is exact (fixed point at 2^-1074), so the result is the correctly
/// rounded value of the true sum, independent of order, grouping or depth.
pub fn haar_integrate(p: u64, depth: u32, values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(PAdicError::EmptyTable);
    }
    let expected = (p as u128).checked_pow(depth).filter(|n| *n <= usize::MAX as u128);
    if expected != Some(values.len() as u128) {
        return Err(PAdicError::DepthMismatch {
            depth,
            expected: expected.map(|n| n as usize).unwrap_or(usize::MAX),
            got: values.len(),
        });
    }
    let mut acc = ExactSum::default();
    for v in values {
        acc.add(*v)?;
    }
    let den = BigInt::from(p).pow(depth);
    Ok(acc.ratio_over(&den))
}

/// Exact accumulator for finite doubles.
#[derive(Debug, Clone, Default)]
pub struct ExactSum {
    scaled: BigInt,
}

impl ExactSum {
    pub fn add(&mut self, x: f64) -> Result<()> {
        if !x.is_finite() {
            return Err(PAdicError::NonFinite);
        }
        self.scaled += scaled_bits(x);
        Ok(())
    }

    pub fn merge(&mut self, other: &ExactSum) {
        self.scaled += &other.scaled;
    }

    pub fn value(&self) -> f64 {
        self.ratio_over(&BigInt::one())
    }

    /// Correctly rounded sum / den.
    pub fn ratio_over(&self, den: &BigInt) -> f64 {
        let den = den * (BigInt::one() << 1074usize);
        BigRational::new(self.scaled.clone(), den).to_f64().unwrap_or(f64::NAN)
    }
}

/// x·2^1074 as an exact integer.
fn scaled_bits(x: f64) -> BigInt {
    let bits = x.to_bits();
    let neg = bits >> 63 == 1;
    let exp = ((bits >> 52) & 0x7ff) as i64;
    let frac = bits & ((1u64 << 52) - 1);
    let (mant, e) = if exp == 0 { (frac, -1074) } else { (frac | (1u64 << 52), exp - 1075) };
    let v = BigInt::from(mant) << ((e + 1074) as usize);
    if neg {
        -v
    } else {
        v
    }
}

impl PartialOrd for Valuation {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        match (self, other) {
            (Valuation::Infinite, Valuation::Infinite) => Some(Ordering::Equal),
            (Valuation::Infinite, _) => Some(Ordering::Greater),
            (_, Valuation::Infinite) => Some(Ordering::Less),
            (Valuation::Exact(a), Valuation::Exact(b)) => Some(a.cmp(b)),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx(p: u64, m: u32) -> Context {
        Context::new(p, m).unwrap()
    }

    #[test]
    fn division_uses_modular_inverse() {
        let c = ctx(5, 3);
        let q = arith(&c.one(), &c.from_i64(2), ArithOp::Div).unwrap();
        assert_eq!(q.unit(), Some((63, 3)));
        assert_eq!(q.exact_valuation().unwrap(), 0);
    }

    #[test]
    fn doubling_p() {
        let c = ctx(5, 4);
        let s = arith(&c.from_i64(5), &c.from_i64(5), ArithOp::Add).unwrap();
        assert_eq!(s.exact_valuation().unwrap(), 1);
        assert_eq!(s.unit().unwrap().0, 2);
    }

    #[test]
    fn self_difference_is_small() {
        let c = ctx(7, 5);
        let x = c.from_i64(1234);
        let d = arith(&x, &x, ArithOp::Sub).unwrap();
        assert_eq!(d.valuation(), Valuation::AtLeast(5));
        assert!(matches!(d.norm(), Err(PAdicError::IndeterminateValuation(5))));
    }

    #[test]
    fn norms() {
        let c = ctx(5, 6);
        assert_eq!(c.from_i64(5).norm().unwrap(), 0.2);
        assert_eq!(c.from_i64(6).norm().unwrap(), 1.0);
        assert_eq!(c.zero().norm().unwrap(), 0.0);
    }

    #[test]
    fn division_by_zero() {
        let c = ctx(5, 3);
        assert_eq!(c.one().checked_div(&c.zero()), Err(PAdicError::DivisionByZero));
    }

    #[test]
    fn cancellation_lowers_precision() {
        let c = ctx(5, 4);
        let a = c.from_i64(1 + 25);
        let b = c.from_i64(1);
        let d = a.checked_sub(&b).unwrap();
        assert_eq!(d.exact_valuation().unwrap(), 2);
        assert_eq!(d.relative_precision(), 2);
    }

    #[test]
    fn residue_round_trip() {
        let c = ctx(5, 6);
        for x in [0u64, 1, 5, 124, 3125, 15624] {
            assert_eq!(c.from_residue(x, 6).residue(6).unwrap(), x);
        }
        assert!(c.from_residue(3, 2).residue(3).is_err());
    }

    #[test]
    fn negative_valuation_inverse() {
        let c = ctx(7, 5);
        let x = c.p_power(-2).checked_mul(&c.from_i64(3)).unwrap();
        let y = x.inverse().unwrap();
        assert_eq!(y.exact_valuation().unwrap(), 2);
        assert_eq!(x.checked_mul(&y).unwrap(), c.one());
    }

    #[test]
    fn haar_examples() {
        assert_eq!(haar_integrate(5, 2, &[1.0; 25]).unwrap(), 1.0);
        let t = ZpTable::from_fn(5, 2, |t| if t % 5 == 0 { 1.0 } else { 0.0 });
        assert_eq!(t.integrate().unwrap(), 0.2);
        let abs = ZpTable::from_fn(5, 3, |t| match valuation_u64(t, 5) {
            Some(v) => 5f64.powi(-(v as i32)),
            None => 5f64.powi(-3),
        });
        let expected = 0.8 * (1.0 + 1.0 / 25.0 + 1.0 / 625.0) + 1.0 / 15625.0;
        assert!((abs.integrate().unwrap() - expected).abs() < 1e-15);
        assert!((expected - 0.833344).abs() < 1e-12);
    }

    #[test]
    fn haar_errors() {
        assert_eq!(haar_integrate(5, 1, &[]), Err(PAdicError::EmptyTable));
        assert!(matches!(haar_integrate(5, 2, &[1.0; 5]), Err(PAdicError::DepthMismatch { .. })));
    }

    #[test]
    fn coarsen_detects_fine_structure() {
        let t = ZpTable::from_fn(5, 2, |t| t as f64);
        assert!(t.coarsen().is_err());
        let r = ZpTable::from_fn(5, 1, |t| t as f64).refine();
        assert_eq!(r.coarsen().unwrap().values, vec![0.0, 1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn unsupported_contexts() {
        assert_eq!(Context::new(3, 4), Err(PAdicError::UnsupportedPrime(3)));
        assert!(Context::new(13, 18).is_err());
        assert!(Context::new(13, 17).is_ok());
        assert!(Context::new(5, 27).is_ok());
    }
}

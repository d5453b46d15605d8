//! Sobolev norms on the finite quotient SL2(Z/p^n) built from the congruence
//! averaging projections Av[m] and their differences pr[m].
//!
//! Elements are stored as (a, b, c, d) residues mod p^n in lexicographic
//! order; that order is the row index used by functions and by CSV files.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::padic::{mod_inverse, Context};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SobolevError {
    #[error("unsupported prime {0}")]
    UnsupportedPrime(u64),
    #[error("level {0} too large for an enumerated quotient")]
    LevelTooLarge(u32),
    #[error("level {m} outside 0..={n}")]
    LevelMismatch { m: u32, n: u32 },
    #[error("function has {got} values, group has {want}")]
    SizeMismatch { got: usize, want: usize },
    #[error("element index {0} out of range")]
    BadIndex(usize),
    #[error("negative smoothness d = {0}")]
    NegativeD(f64),
    #[error("CSV parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, SobolevError>;

/// Largest group handled: p^{4n} lookup entries.
const MAX_TABLE: u64 = 1 << 26;

/// SL2(Z/p^n) with its congruence filtration.
#[derive(Debug, Clone)]
pub struct FiniteQuotient {
    p: u64,
    n: u32,
    q: u64,
    elements: Vec<[u64; 4]>,
    lookup: Vec<u32>,
    /// coset[m][i]: index of the K[m]-coset of element i, cosets numbered in order of first appearance
    coset: Vec<Vec<u32>>,
    coset_count: Vec<usize>,
}

impl FiniteQuotient {
    pub fn new(p: u64, n: u32) -> Result<Self> {
        Context::new(p, 1).map_err(|_| SobolevError::UnsupportedPrime(p))?;
        let q = p.checked_pow(n).ok_or(SobolevError::LevelTooLarge(n))?;
        if q.checked_pow(4).is_none_or(|x| x > MAX_TABLE) {
            return Err(SobolevError::LevelTooLarge(n));
        }
        let mut elements = Vec::new();
        for a in 0..q {
            for b in 0..q {
                for c in 0..q {
                    let rhs = (1 + b * c) % q;
                    if a % p != 0 {
                        let d = (mod_inverse(a, q).expect("unit") as u128 * rhs as u128 % q as u128) as u64;
                        elements.push([a, b, c, d]);
                    } else {
                        for d in 0..q {
                            if (a * d) % q == rhs {
                                elements.push([a, b, c, d]);
                            }
                        }
                    }
                }
            }
        }
        elements.sort_unstable();
        let mut lookup = vec![u32::MAX; (q * q * q * q) as usize];
        for (i, e) in elements.iter().enumerate() {
            lookup[Self::key(q, e)] = i as u32;
        }
        let mut coset = Vec::with_capacity(n as usize + 1);
        let mut coset_count = Vec::with_capacity(n as usize + 1);
        for m in 0..=n {
            let qm = p.pow(m);
            let mut ids = std::collections::HashMap::new();
            let col: Vec<u32> = elements
                .iter()
                .map(|e| {
                    let r = [e[0] % qm, e[1] % qm, e[2] % qm, e[3] % qm];
                    let next = ids.len() as u32;
                    *ids.entry(r).or_insert(next)
                })
                .collect();
            coset_count.push(ids.len());
            coset.push(col);
        }
        Ok(FiniteQuotient { p, n, q, elements, lookup, coset, coset_count })
    }

    fn key(q: u64, e: &[u64; 4]) -> usize {
        (((e[0] * q + e[1]) * q + e[2]) * q + e[3]) as usize
    }

    pub fn p(&self) -> u64 {
        self.p
    }

    pub fn level(&self) -> u32 {
        self.n
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn element(&self, i: usize) -> [u64; 4] {
        self.elements[i]
    }

    pub fn index_of(&self, e: &[u64; 4]) -> Option<usize> {
        if e.iter().any(|&x| x >= self.q) {
            return None;
        }
        match self.lookup[Self::key(self.q, e)] {
            u32::MAX => None,
            i => Some(i as usize),
        }
    }

    pub fn identity(&self) -> usize {
        self.index_of(&[1 % self.q, 0, 0, 1 % self.q]).expect("identity")
    }

    /// Index of |G / K[m]| = |SL2(Z/p^m)|.
    pub fn coset_count(&self, m: u32) -> usize {
        self.coset_count[m as usize]
    }

    /// p^{3m}(1 − p^-2) for m ≥ 1, and 1 for m = 0.
    pub fn index_formula(p: u64, m: u32) -> f64 {
        if m == 0 {
            1.0
        } else {
            let pf = p as f64;
            pf.powi(3 * m as i32) * (1.0 - pf.powi(-2))
        }
    }

    pub fn mul(&self, i: usize, j: usize) -> usize {
        let (x, y, q) = (self.elements[i], self.elements[j], self.q);
        let e = [
            (x[0] * y[0] + x[1] * y[2]) % q,
            (x[0] * y[1] + x[1] * y[3]) % q,
            (x[2] * y[0] + x[3] * y[2]) % q,
            (x[2] * y[1] + x[3] * y[3]) % q,
        ];
        self.lookup[Self::key(q, &e)] as usize
    }

    pub fn inv(&self, i: usize) -> usize {
        let (x, q) = (self.elements[i], self.q);
        let e = [x[3], (q - x[1]) % q, (q - x[2]) % q, x[0]];
        self.lookup[Self::key(q, &e)] as usize
    }

    /// g ∈ K[m]: g ≡ I mod p^m.
    pub fn in_kernel(&self, g: usize, m: u32) -> bool {
        self.coset[m as usize][g] == self.coset[m as usize][self.identity()]
    }

    pub fn kernel_elements(&self, m: u32) -> Vec<usize> {
        (0..self.len()).filter(|&g| self.in_kernel(g, m)).collect()
    }

    fn check_level(&self, m: u32) -> Result<()> {
        if m > self.n {
            return Err(SobolevError::LevelMismatch { m, n: self.n });
        }
        Ok(())
    }

    fn check_fn(&self, f: &QuotientFunction) -> Result<()> {
        if f.values.len() != self.len() {
            return Err(SobolevError::SizeMismatch { got: f.values.len(), want: self.len() });
        }
        Ok(())
    }

    /// (Av[m] f)(x): mean of f over the K[m]-coset of x.
    pub fn avg_project(&self, f: &QuotientFunction, m: u32) -> Result<QuotientFunction> {
        self.check_level(m)?;
        self.check_fn(f)?;
        let ids = &self.coset[m as usize];
        let k = self.coset_count[m as usize];
        let mut sum = vec![0.0; k];
        let mut cnt = vec![0usize; k];
        for (i, v) in f.values.iter().enumerate() {
            sum[ids[i] as usize] += v;
            cnt[ids[i] as usize] += 1;
        }
        Ok(QuotientFunction { values: ids.iter().map(|&c| sum[c as usize] / cnt[c as usize] as f64).collect() })
    }

    /// pr[0] = Av[0], pr[m] = Av[m] − Av[m−1].
    pub fn pr_project(&self, f: &QuotientFunction, m: u32) -> Result<QuotientFunction> {
        let a = self.avg_project(f, m)?;
        if m == 0 {
            return Ok(a);
        }
        let b = self.avg_project(f, m - 1)?;
        Ok(a.sub(&b))
    }

    /// All pieces pr[0..=n] f.
    pub fn decompose(&self, f: &QuotientFunction) -> Result<Vec<QuotientFunction>> {
        self.check_fn(f)?;
        let avs: Vec<QuotientFunction> = (0..=self.n).map(|m| self.avg_project(f, m)).collect::<Result<_>>()?;
        Ok((0..avs.len()).map(|m| if m == 0 { avs[0].clone() } else { avs[m].sub(&avs[m - 1]) }).collect())
    }

    /// S_d(f) = (Σ_m p^{md} ‖pr[m] f‖²)^{1/2}.
    pub fn sobolev_norm(&self, f: &QuotientFunction, d: f64) -> Result<f64> {
        if d < 0.0 {
            return Err(SobolevError::NegativeD(d));
        }
        let pf = self.p as f64;
        let pieces = self.decompose(f)?;
        let s: f64 = pieces.iter().enumerate().map(|(m, h)| pf.powf(m as f64 * d) * h.norm2_sq()).sum();
        Ok(s.sqrt())
    }

    /// (g·f)(x) = f(g⁻¹x).
    pub fn act(&self, g: usize, f: &QuotientFunction) -> Result<QuotientFunction> {
        self.check_fn(f)?;
        if g >= self.len() {
            return Err(SobolevError::BadIndex(g));
        }
        let gi = self.inv(g);
        Ok(QuotientFunction { values: (0..self.len()).map(|x| f.values[self.mul(gi, x)]).collect() })
    }

    pub fn random_function<R: rand::Rng>(&self, rng: &mut R) -> QuotientFunction {
        QuotientFunction { values: (0..self.len()).map(|_| rng.gen_range(-1.0..1.0)).collect() }
    }

    pub fn constant(&self, c: f64) -> QuotientFunction {
        QuotientFunction { values: vec![c; self.len()] }
    }

    pub fn delta(&self, i: usize) -> QuotientFunction {
        let mut v = vec![0.0; self.len()];
        v[i] = 1.0;
        QuotientFunction { values: v }
    }

    /// Constants for S1, S3 (at level r) and S4.
    pub fn constants(&self, d: f64, r: u32) -> SobolevConstants {
        let (p, n) = (self.p, self.n);
        let pf = p as f64;
        let im = |m: u32| Self::index_formula(p, m);
        let c1 = (0..=n).map(|m| im(m) * pf.powf(-(m as f64) * d)).sum::<f64>().sqrt();
        let tail: f64 = (r + 1..=n).map(|m| im(m) * pf.powf(-(m as f64) * d)).sum();
        let c3 = 2.0 * pf.powi(r as i32) * tail.sqrt();
        let mut s4 = 0.0;
        for m in 0..=n {
            for l in 0..=n {
                for j in 0..=n {
                    if l.max(j) >= m {
                        s4 += im(l.min(j)) * pf.powf((m as f64 - l as f64 - j as f64) * d);
                    }
                }
            }
        }
        SobolevConstants { d, r, c1, c3, c4: s4.sqrt() }
    }

    /// Checks S1–S4 for f, f2 and g ∈ K[r].
    pub fn verify_properties(
        &self,
        f: &QuotientFunction,
        f2: &QuotientFunction,
        g: usize,
        d: f64,
        r: u32,
    ) -> Result<PropertyReport> {
        self.check_level(r)?;
        let consts = self.constants(d, r);
        let sf = self.sobolev_norm(f, d)?;
        let sf2 = self.sobolev_norm(f2, d)?;
        let gf = self.act(g, f)?;
        let sgf = self.sobolev_norm(&gf, d)?;
        let s1_lhs = f.sup_norm();
        let s1_rhs = consts.c1 * sf;
        let s2_gap = (sgf - sf).abs();
        let s3_lhs = gf.sub(f).sup_norm();
        let s3_rhs = consts.c3 * (self.p as f64).powi(-(r as i32)) * sf;
        let prod = f.mul(f2);
        let s4_lhs = self.sobolev_norm(&prod, d)?;
        let s4_rhs = consts.c4 * sf * sf2;
        let tol = 1.0 + 1e-9;
        let g_in_level = self.in_kernel(g, r);
        Ok(PropertyReport {
            enforced: d >= D0,
            g_in_level,
            s1: Check { lhs: s1_lhs, rhs: s1_rhs, holds: s1_lhs <= s1_rhs * tol },
            s2: Check { lhs: s2_gap, rhs: 1e-12 * sf.max(1.0), holds: s2_gap <= 1e-12 * sf.max(1.0) },
            s3: Check { lhs: s3_lhs, rhs: s3_rhs, holds: !g_in_level || s3_lhs <= s3_rhs * tol },
            s4: Check { lhs: s4_lhs, rhs: s4_rhs, holds: s4_lhs <= s4_rhs * tol },
            constants: consts,
        })
    }
}

/// Smallest smoothness at which S1–S4 are asserted: dim + 2 with dim = 3.
pub const D0: f64 = 5.0;

#[derive(Debug, Clone, Copy, Serialize)]
pub struct SobolevConstants {
    pub d: f64,
    pub r: u32,
    pub c1: f64,
    pub c3: f64,
    pub c4: f64,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Check {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct PropertyReport {
    /// d ≥ d0; below it the checks are reported only
    pub enforced: bool,
    pub g_in_level: bool,
    pub s1: Check,
    pub s2: Check,
    pub s3: Check,
    pub s4: Check,
    pub constants: SobolevConstants,
}

impl PropertyReport {
    pub fn all_hold(&self) -> bool {
        self.s1.holds && self.s2.holds && self.s3.holds && self.s4.holds
    }
}

/// Real function on the quotient, indexed by element order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuotientFunction {
    pub values: Vec<f64>,
}

impl QuotientFunction {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn add(&self, o: &Self) -> Self {
        QuotientFunction { values: self.values.iter().zip(&o.values).map(|(a, b)| a + b).collect() }
    }

    pub fn sub(&self, o: &Self) -> Self {
        QuotientFunction { values: self.values.iter().zip(&o.values).map(|(a, b)| a - b).collect() }
    }

    pub fn mul(&self, o: &Self) -> Self {
        QuotientFunction { values: self.values.iter().zip(&o.values).map(|(a, b)| a * b).collect() }
    }

    pub fn scale(&self, c: f64) -> Self {
        QuotientFunction { values: self.values.iter().map(|a| a * c).collect() }
    }

    /// ⟨f, g⟩ under the normalized counting measure.
    pub fn inner(&self, o: &Self) -> f64 {
        let mut terms: Vec<f64> = self.values.par_iter().zip(&o.values).map(|(a, b)| a * b).collect();
        terms.sort_by(|a, b| a.abs().total_cmp(&b.abs()));
        terms.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn norm2_sq(&self) -> f64 {
        self.inner(self)
    }

    pub fn norm2(&self) -> f64 {
        self.norm2_sq().sqrt()
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |a, b| a.max(b.abs()))
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("index,value\n");
        for (i, v) in self.values.iter().enumerate() {
            let _ = writeln!(s, "{i},{v:e}");
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut values = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || (ln == 0 && line.starts_with("index")) {
                continue;
            }
            let (i, v) = line.split_once(',').ok_or_else(|| SobolevError::Parse(format!("line {}", ln + 1)))?;
            let i: usize = i.trim().parse().map_err(|_| SobolevError::Parse(format!("index on line {}", ln + 1)))?;
            if i != values.len() {
                return Err(SobolevError::Parse(format!("expected index {} on line {}", values.len(), ln + 1)));
            }
            values.push(v.trim().parse().map_err(|_| SobolevError::Parse(format!("value on line {}", ln + 1)))?);
        }
        Ok(QuotientFunction { values })
    }
}

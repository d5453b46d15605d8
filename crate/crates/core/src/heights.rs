//! Absolute values and heights over Q at a finite set of places, integer
//! kernel bases with size bounds, and rounding onto the kernel of an integer
//! matrix.

use std::fmt;

use nalgebra::DMatrix;
use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HeightError {
    #[error("zero has no height")]
    Zero,
    #[error("{0} is not a prime")]
    NotPrime(u64),
    #[error("{value} is not an S-integer (|x|_{prime} > 1)")]
    NotSInteger { value: String, prime: u64 },
    #[error("ragged matrix: row {0} has a different length")]
    Ragged(usize),
    #[error("vector has length {got}, matrix has {want} columns")]
    Dimension { got: usize, want: usize },
    #[error("non-finite input")]
    NonFinite,
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, HeightError>;

pub type IntMatrix = Vec<Vec<BigInt>>;

fn ser_q<S: Serializer>(q: &BigRational, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&format_rational(q))
}

fn ser_qs<S: Serializer>(q: &[BigRational], s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_seq(q.iter().map(format_rational))
}

fn ser_ints<S: Serializer>(v: &[Vec<BigInt>], s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_seq(v.iter().map(|r| r.iter().map(|x| x.to_string()).collect::<Vec<_>>()))
}

pub fn format_rational(q: &BigRational) -> String {
    if q.is_integer() {
        q.numer().to_string()
    } else {
        format!("{}/{}", q.numer(), q.denom())
    }
}

pub fn parse_rational(s: &str) -> Result<BigRational> {
    let s = s.trim();
    let bad = || HeightError::Parse(format!("bad rational {s:?}"));
    match s.split_once('/') {
        Some((n, d)) => {
            let n: BigInt = n.trim().parse().map_err(|_| bad())?;
            let d: BigInt = d.trim().parse().map_err(|_| bad())?;
            if d.is_zero() {
                return Err(bad());
            }
            Ok(BigRational::new(n, d))
        }
        None => Ok(BigRational::from_integer(s.parse().map_err(|_| bad())?)),
    }
}

/// Rows of comma-separated integers; blank lines and '#' lines are skipped.
pub fn parse_matrix_csv(text: &str) -> Result<IntMatrix> {
    let mut rows: IntMatrix = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row = line
            .split(',')
            .map(|x| x.trim().parse::<BigInt>().map_err(|_| HeightError::Parse(format!("bad entry {x:?}"))))
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(HeightError::Ragged(rows.len()));
            }
        }
        rows.push(row);
    }
    Ok(rows)
}

pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    let mut d = 2;
    while d * d <= n {
        if n.is_multiple_of(d) {
            return false;
        }
        d += 1;
    }
    true
}

/// Prime factors of |n| by trial division, ascending, without multiplicity.
pub fn prime_support(n: &BigInt) -> Vec<u64> {
    let mut n = n.abs();
    let mut out = Vec::new();
    if n.is_zero() {
        return out;
    }
    let mut d: u64 = 2;
    while BigInt::from(d) * BigInt::from(d) <= n {
        let bd = BigInt::from(d);
        if (&n % &bd).is_zero() {
            out.push(d);
            while (&n % &bd).is_zero() {
                n /= &bd;
            }
        }
        d += if d == 2 { 1 } else { 2 };
    }
    if n > BigInt::one() {
        out.push(n.to_u64().expect("cofactor fits after trial division"));
    }
    out
}

fn vq(x: &BigInt, q: u64) -> i64 {
    let bq = BigInt::from(q);
    let mut v = 0;
    let mut x = x.clone();
    while !x.is_zero() && (&x % &bq).is_zero() {
        x /= &bq;
        v += 1;
    }
    v
}

/// |x|_q as an exact rational.
pub fn padic_abs(x: &BigRational, q: u64) -> BigRational {
    if x.is_zero() {
        return BigRational::zero();
    }
    let v = vq(x.numer(), q) - vq(x.denom(), q);
    let b = BigInt::from(q).pow(v.unsigned_abs() as u32);
    if v >= 0 {
        BigRational::new(BigInt::one(), b)
    } else {
        BigRational::from_integer(b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Place {
    Infinite,
    Prime(u64),
}

impl fmt::Display for Place {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Place::Infinite => write!(f, "inf"),
            Place::Prime(q) => write!(f, "{q}"),
        }
    }
}

impl Serialize for Place {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

/// An exact rational together with S = {∞} ∪ primes.
#[derive(Debug, Clone, PartialEq)]
pub struct SAdicScalar {
    pub value: BigRational,
    primes: Vec<u64>,
}

impl SAdicScalar {
    pub fn new(value: BigRational, primes: &[u64]) -> Result<Self> {
        let mut ps = primes.to_vec();
        ps.sort_unstable();
        ps.dedup();
        if let Some(&q) = ps.iter().find(|&&q| !is_prime(q)) {
            return Err(HeightError::NotPrime(q));
        }
        Ok(SAdicScalar { value, primes: ps })
    }

    pub fn places(&self) -> Vec<Place> {
        std::iter::once(Place::Infinite).chain(self.primes.iter().map(|&q| Place::Prime(q))).collect()
    }

    pub fn primes(&self) -> &[u64] {
        &self.primes
    }

    pub fn abs_at(&self, v: Place) -> BigRational {
        match v {
            Place::Infinite => self.value.abs(),
            Place::Prime(q) => padic_abs(&self.value, q),
        }
    }

    /// |x|_q ≤ 1 for every prime q outside S; the first offender otherwise.
    pub fn s_integer_witness(&self) -> Option<u64> {
        prime_support(self.value.denom()).into_iter().find(|q| !self.primes.contains(q))
    }

    pub fn is_s_integer(&self) -> bool {
        self.s_integer_witness().is_none()
    }

    /// ‖x‖_S = max over S.
    pub fn s_norm(&self) -> BigRational {
        self.places().into_iter().map(|v| self.abs_at(v)).max().expect("S contains the infinite place")
    }

    pub fn inverse(&self) -> Result<SAdicScalar> {
        if self.value.is_zero() {
            return Err(HeightError::Zero);
        }
        Ok(SAdicScalar { value: self.value.recip(), primes: self.primes.clone() })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PlaceNorm {
    pub place: Place,
    #[serde(serialize_with = "ser_q")]
    pub value: BigRational,
}

#[derive(Debug, Clone, Serialize)]
pub struct HeightRecord {
    pub norms: Vec<PlaceNorm>,
    #[serde(serialize_with = "ser_q")]
    pub s_norm: BigRational,
    #[serde(serialize_with = "ser_q")]
    pub s_height: BigRational,
    /// product over ∞ and every prime dividing the numerator or denominator
    #[serde(serialize_with = "ser_q")]
    pub all_places_product: BigRational,
    pub s_integer: bool,
}

impl HeightRecord {
    pub fn product_formula_holds(&self) -> bool {
        self.all_places_product.is_one()
    }
}

pub fn place_norms(x: &SAdicScalar) -> Result<HeightRecord> {
    if x.value.is_zero() {
        return Err(HeightError::Zero);
    }
    let norms: Vec<PlaceNorm> = x.places().into_iter().map(|v| PlaceNorm { place: v, value: x.abs_at(v) }).collect();
    let s_height = norms.iter().fold(BigRational::one(), |a, n| a * &n.value);
    let mut support = prime_support(x.value.numer());
    support.extend(prime_support(x.value.denom()));
    let all_places_product =
        support.into_iter().fold(x.value.abs(), |a, q| a * padic_abs(&x.value, q));
    Ok(HeightRecord {
        s_norm: x.s_norm(),
        s_height,
        all_places_product,
        s_integer: x.is_s_integer(),
        norms,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct InverseNormCheck {
    #[serde(serialize_with = "ser_q")]
    pub c: BigRational,
    #[serde(serialize_with = "ser_q")]
    pub inverse_norm: BigRational,
    #[serde(serialize_with = "ser_q")]
    pub bound: BigRational,
    pub holds: bool,
}

/// ‖1/x‖_S ≤ C^{#S−1} with C = ‖x‖_S, compared exactly.
pub fn inverse_norm_check(x: &SAdicScalar) -> Result<InverseNormCheck> {
    if x.value.is_zero() {
        return Err(HeightError::Zero);
    }
    if let Some(q) = x.s_integer_witness() {
        return Err(HeightError::NotSInteger { value: format_rational(&x.value), prime: q });
    }
    let c = x.s_norm();
    let inverse_norm = x.inverse()?.s_norm();
    let bound = num_traits::pow(c.clone(), x.primes.len());
    Ok(InverseNormCheck { holds: inverse_norm <= bound, c, inverse_norm, bound })
}

fn check_matrix(a: &IntMatrix) -> Result<usize> {
    let n = a.first().map_or(0, |r| r.len());
    for (i, r) in a.iter().enumerate() {
        if r.len() != n {
            return Err(HeightError::Ragged(i));
        }
    }
    Ok(n)
}

/// Determinant by fraction-free (Bareiss) elimination.
pub fn det(m: &[Vec<BigInt>]) -> BigInt {
    let n = m.len();
    if n == 0 {
        return BigInt::one();
    }
    let mut a: Vec<Vec<BigInt>> = m.to_vec();
    let mut sign = BigInt::one();
    let mut prev = BigInt::one();
    for k in 0..n {
        if a[k][k].is_zero() {
            match (k + 1..n).find(|&i| !a[i][k].is_zero()) {
                Some(i) => {
                    a.swap(i, k);
                    sign = -sign;
                }
                None => return BigInt::zero(),
            }
        }
        for i in k + 1..n {
            for j in k + 1..n {
                let v = &a[i][j] * &a[k][k] - &a[i][k] * &a[k][j];
                a[i][j] = v / &prev;
            }
        }
        prev = a[k][k].clone();
    }
    sign * &a[n - 1][n - 1]
}

/// Rank over Q.
pub fn rank(a: &IntMatrix) -> usize {
    let mut m: Vec<Vec<BigRational>> =
        a.iter().map(|r| r.iter().map(|x| BigRational::from_integer(x.clone())).collect()).collect();
    let cols = m.first().map_or(0, |r| r.len());
    let mut r = 0;
    for c in 0..cols {
        let Some(piv) = (r..m.len()).find(|&i| !m[i][c].is_zero()) else { continue };
        m.swap(r, piv);
        for i in 0..m.len() {
            if i != r && !m[i][c].is_zero() {
                let f = &m[i][c] / &m[r][c];
                for j in c..cols {
                    let t = &f * &m[r][j];
                    m[i][j] -= t;
                }
            }
        }
        r += 1;
        if r == m.len() {
            break;
        }
    }
    r
}

#[derive(Debug, Clone, Serialize)]
pub struct KernelBasis {
    #[serde(serialize_with = "ser_ints")]
    pub vectors: Vec<Vec<BigInt>>,
    /// max(T, 1)^{3n}
    pub bound: String,
    /// largest max-norm among the vectors
    pub max_norm: String,
    pub within_bound: bool,
}

fn max_abs(v: &[BigInt]) -> BigInt {
    v.iter().map(|x| x.abs()).max().unwrap_or_else(BigInt::zero)
}

fn dot(a: &[BigInt], b: &[BigInt]) -> BigInt {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Round-half-away division of integers.
fn round_div(a: &BigInt, b: &BigInt) -> BigInt {
    let two = BigInt::from(2);
    (a * &two + b).div_floor(&(b * &two))
}

/// Basis of ker(A) ∩ Z^n: column-style Hermite elimination on [A; I], then
/// pairwise size reduction.
pub fn integer_kernel_basis(a: &IntMatrix, t: &BigInt) -> Result<KernelBasis> {
    let n = check_matrix(a)?;
    let rows = a.len();
    // columns of the augmented matrix, each of length rows + n
    let mut cols: Vec<Vec<BigInt>> = (0..n)
        .map(|j| {
            let mut c: Vec<BigInt> = a.iter().map(|r| r[j].clone()).collect();
            c.extend((0..n).map(|i| if i == j { BigInt::one() } else { BigInt::zero() }));
            c
        })
        .collect();
    let mut pivot = 0;
    for i in 0..rows {
        // gcd-combine columns pivot.. in row i into column `pivot`
        for j in pivot + 1..n {
            if cols[j][i].is_zero() {
                continue;
            }
            let (x, y) = (cols[pivot][i].clone(), cols[j][i].clone());
            let e = x.extended_gcd(&y);
            let (g, s, tt) = (e.gcd, e.x, e.y);
            let (xg, yg) = (&x / &g, &y / &g);
            let cp: Vec<BigInt> = cols[pivot].iter().zip(&cols[j]).map(|(u, v)| &s * u + &tt * v).collect();
            let cj: Vec<BigInt> = cols[pivot].iter().zip(&cols[j]).map(|(u, v)| &xg * v - &yg * u).collect();
            cols[pivot] = cp;
            cols[j] = cj;
        }
        if !cols.get(pivot).is_none_or(|c| c[i].is_zero()) {
            pivot += 1;
            if pivot == n {
                break;
            }
        }
    }
    let mut basis: Vec<Vec<BigInt>> = cols[pivot..].iter().map(|c| c[rows..].to_vec()).collect();
    size_reduce(&mut basis);
    for v in basis.iter_mut() {
        if v.iter().find(|x| !x.is_zero()).is_some_and(|x| x.is_negative()) {
            for x in v.iter_mut() {
                *x = -x.clone();
            }
        }
    }
    basis.sort_by(|u, v| max_abs(u).cmp(&max_abs(v)).then_with(|| v.cmp(u)));
    let bound = num_traits::pow(t.abs().max(BigInt::one()), 3 * n);
    let max_norm = basis.iter().map(|v| max_abs(v)).max().unwrap_or_else(BigInt::zero);
    Ok(KernelBasis { within_bound: max_norm <= bound, bound: bound.to_string(), max_norm: max_norm.to_string(), vectors: basis })
}

/// Repeated pairwise reduction b_i ← b_i − round(⟨b_i,b_j⟩/⟨b_j,b_j⟩) b_j until nothing shrinks.
fn size_reduce(basis: &mut [Vec<BigInt>]) {
    loop {
        let mut changed = false;
        for i in 0..basis.len() {
            for j in 0..basis.len() {
                if i == j {
                    continue;
                }
                let nj = dot(&basis[j], &basis[j]);
                if nj.is_zero() {
                    continue;
                }
                let k = round_div(&dot(&basis[i], &basis[j]), &nj);
                if k.is_zero() {
                    continue;
                }
                let cand: Vec<BigInt> = basis[i].iter().zip(&basis[j]).map(|(x, y)| x - &k * y).collect();
                if dot(&cand, &cand) < dot(&basis[i], &basis[i]) {
                    basis[i] = cand;
                    changed = true;
                }
            }
        }
        if !changed {
            return;
        }
    }
}

/// gcd of all maximal minors of the n×s matrix with the given columns.
/// The lattice they span is saturated in Z^n iff this is 1.
pub fn minor_gcd(vectors: &[Vec<BigInt>]) -> BigInt {
    let s = vectors.len();
    if s == 0 {
        return BigInt::one();
    }
    let n = vectors[0].len();
    let mut g = BigInt::zero();
    let mut idx: Vec<usize> = (0..s).collect();
    loop {
        let m: Vec<Vec<BigInt>> = idx.iter().map(|&r| vectors.iter().map(|v| v[r].clone()).collect()).collect();
        g = g.gcd(&det(&m));
        if g.is_one() {
            return g;
        }
        // next combination
        let mut k = s;
        loop {
            if k == 0 {
                return g;
            }
            k -= 1;
            if idx[k] < n - s + k {
                idx[k] += 1;
                for l in k + 1..s {
                    idx[l] = idx[l - 1] + 1;
                }
                break;
            }
        }
    }
}

pub fn mat_vec(a: &IntMatrix, v: &[BigInt]) -> Vec<BigInt> {
    a.iter().map(|r| dot(r, v)).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct NearKernel {
    pub w0: Vec<f64>,
    #[serde(serialize_with = "ser_qs")]
    pub w0_exact: Vec<BigRational>,
    pub distance: f64,
    /// ‖A w‖ (Euclidean); the hypothesis is residual ≤ δ, and then distance ≤ C(A)·δ
    pub residual: f64,
    pub delta: f64,
    /// 1 / smallest nonzero singular value of A
    pub c_a: f64,
    pub hypothesis: bool,
    pub holds: bool,
}

fn to_q(x: f64) -> Result<BigRational> {
    BigRational::from_float(x).ok_or(HeightError::NonFinite)
}

/// Orthogonal projection of w onto ker(A), computed in exact rationals.
pub fn nearest_kernel_point(a: &IntMatrix, w: &[f64], delta: f64) -> Result<NearKernel> {
    let n = check_matrix(a)?;
    if w.len() != n && !a.is_empty() {
        return Err(HeightError::Dimension { got: w.len(), want: n });
    }
    let wq: Vec<BigRational> = w.iter().map(|&x| to_q(x)).collect::<Result<_>>()?;
    // independent rows of A
    let mut rowsel: IntMatrix = Vec::new();
    for r in a {
        let mut trial = rowsel.clone();
        trial.push(r.clone());
        if rank(&trial) > rowsel.len() {
            rowsel = trial;
        }
    }
    let k = rowsel.len();
    let rq: Vec<Vec<BigRational>> =
        rowsel.iter().map(|r| r.iter().map(|x| BigRational::from_integer(x.clone())).collect()).collect();
    let dq = |u: &[BigRational], v: &[BigRational]| u.iter().zip(v).fold(BigRational::zero(), |s, (x, y)| s + x * y);
    // solve (R Rᵀ) y = R w, then w0 = w − Rᵀ y
    let mut g: Vec<Vec<BigRational>> = (0..k).map(|i| (0..k).map(|j| dq(&rq[i], &rq[j])).collect()).collect();
    let mut rhs: Vec<BigRational> = (0..k).map(|i| dq(&rq[i], &wq)).collect();
    for c in 0..k {
        let piv = (c..k).find(|&i| !g[i][c].is_zero()).expect("Gram matrix of independent rows");
        g.swap(c, piv);
        rhs.swap(c, piv);
        for i in 0..k {
            if i != c && !g[i][c].is_zero() {
                let f = &g[i][c] / &g[c][c];
                for j in c..k {
                    let t = &f * &g[c][j];
                    g[i][j] -= t;
                }
                let t = &f * &rhs[c];
                rhs[i] -= t;
            }
        }
    }
    let y: Vec<BigRational> = (0..k).map(|i| &rhs[i] / &g[i][i]).collect();
    let mut w0q = wq.clone();
    for (i, yi) in y.iter().enumerate() {
        for j in 0..n {
            w0q[j] -= yi * &rq[i][j];
        }
    }
    let f = |q: &BigRational| q.to_f64().unwrap_or(f64::NAN);
    let w0: Vec<f64> = w0q.iter().map(f).collect();
    let distance = wq.iter().zip(&w0q).map(|(x, y)| f(&(x - y)).powi(2)).sum::<f64>().sqrt();
    let residual = a.iter().map(|r| f(&dq(&r.iter().map(|x| BigRational::from_integer(x.clone())).collect::<Vec<_>>(), &wq)).powi(2)).sum::<f64>().sqrt();
    let c_a = if k == 0 {
        0.0
    } else {
        let m = DMatrix::from_fn(a.len(), n, |i, j| a[i][j].to_f64().unwrap_or(f64::NAN));
        let sv = m.singular_values();
        let mut s: Vec<f64> = sv.iter().copied().collect();
        s.sort_by(|x, y| y.total_cmp(x));
        1.0 / s[k - 1]
    };
    let tol = 1.0 + 1e-9;
    Ok(NearKernel {
        w0,
        w0_exact: w0q,
        distance,
        residual,
        delta,
        c_a,
        hypothesis: residual <= delta * tol,
        holds: distance <= c_a * residual * tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    #[test]
    fn examples() {
        let x = SAdicScalar::new(q(6, 1), &[2, 3]).unwrap();
        let h = place_norms(&x).unwrap();
        assert!(h.s_height.is_one());
        assert!(h.product_formula_holds());
        let x = SAdicScalar::new(q(1, 2), &[5]).unwrap();
        assert!(!place_norms(&x).unwrap().s_integer);
        assert!(matches!(inverse_norm_check(&x), Err(HeightError::NotSInteger { prime: 2, .. })));
        let x = SAdicScalar::new(q(5, 1), &[5]).unwrap();
        let c = inverse_norm_check(&x).unwrap();
        assert!(c.holds && c.inverse_norm == c.bound);
        assert!(SAdicScalar::new(q(1, 1), &[4]).is_err());
    }

    #[test]
    fn rational_strings() {
        assert_eq!(parse_rational("-3/6").unwrap(), q(-1, 2));
        assert_eq!(format_rational(&q(4, 2)), "2");
        assert_eq!(format_rational(&q(-1, 2)), "-1/2");
        assert!(parse_rational("1/0").is_err());
        assert!(parse_rational("x").is_err());
    }

    #[test]
    fn determinants() {
        let m = |v: Vec<Vec<i64>>| v.into_iter().map(|r| r.into_iter().map(BigInt::from).collect()).collect::<Vec<_>>();
        assert_eq!(det(&m(vec![vec![2, 1], vec![1, 3]])), BigInt::from(5));
        assert_eq!(det(&m(vec![vec![0, 1, 0], vec![1, 0, 0], vec![0, 0, 1]])), BigInt::from(-1));
        assert_eq!(det(&m(vec![vec![1, 2], vec![2, 4]])), BigInt::zero());
    }

    #[test]
    fn factorization() {
        assert_eq!(prime_support(&BigInt::from(360)), vec![2, 3, 5]);
        assert_eq!(prime_support(&BigInt::from(-97)), vec![97]);
        assert!(prime_support(&BigInt::one()).is_empty());
    }
}

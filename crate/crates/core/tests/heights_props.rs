use nalgebra::{DMatrix, DVector};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use padiclab::heights::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn q(n: i64, d: i64) -> BigRational {
    BigRational::new(n.into(), d.into())
}

fn mat(v: &[&[i64]]) -> IntMatrix {
    v.iter().map(|r| r.iter().map(|&x| BigInt::from(x)).collect()).collect()
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, t: i64) -> IntMatrix {
    (0..rows).map(|_| (0..cols).map(|_| BigInt::from(rng.gen_range(-t..=t))).collect()).collect()
}

/// Rational coordinates of v in the basis, if v lies in its Q-span.
fn coordinates(basis: &[Vec<BigInt>], v: &[BigInt]) -> Option<Vec<BigRational>> {
    let s = basis.len();
    let n = v.len();
    // augmented n × (s+1) system B c = v
    let mut m: Vec<Vec<BigRational>> = (0..n)
        .map(|i| {
            let mut r: Vec<BigRational> = basis.iter().map(|b| BigRational::from_integer(b[i].clone())).collect();
            r.push(BigRational::from_integer(v[i].clone()));
            r
        })
        .collect();
    let mut row = 0;
    let mut piv_cols = Vec::new();
    for c in 0..s {
        let Some(p) = (row..n).find(|&i| !m[i][c].is_zero()) else { continue };
        m.swap(row, p);
        let lead = m[row][c].clone();
        for x in m[row].iter_mut() {
            *x = &*x / &lead;
        }
        for i in 0..n {
            if i != row && !m[i][c].is_zero() {
                let f = m[i][c].clone();
                for j in 0..=s {
                    let t = &f * &m[row][j];
                    m[i][j] -= t;
                }
            }
        }
        piv_cols.push(c);
        row += 1;
    }
    if (row..n).any(|i| !m[i][s].is_zero()) {
        return None;
    }
    let mut c = vec![BigRational::zero(); s];
    for (i, &pc) in piv_cols.iter().enumerate() {
        c[pc] = m[i][s].clone();
    }
    Some(c)
}

#[test]
fn place_norm_examples() {
    for p in [5u64, 7, 11] {
        let x = SAdicScalar::new(BigRational::from_integer(p.into()), &[p]).unwrap();
        let h = place_norms(&x).unwrap();
        assert_eq!(h.norms[0].value, BigRational::from_integer(p.into()));
        assert_eq!(h.norms[1].value, q(1, p as i64));
        assert!(h.s_height.is_one());
    }
    let x = SAdicScalar::new(q(6, 1), &[2, 3]).unwrap();
    assert!(place_norms(&x).unwrap().s_height.is_one());
    assert!(matches!(place_norms(&SAdicScalar::new(q(0, 1), &[5]).unwrap()), Err(HeightError::Zero)));
}

#[test]
fn inverse_norm_boundary_cases() {
    let x = SAdicScalar::new(q(5, 1), &[5]).unwrap();
    let c = inverse_norm_check(&x).unwrap();
    assert!(c.holds);
    assert_eq!(c.inverse_norm, c.bound);
    let x = SAdicScalar::new(q(25, 1), &[5]).unwrap();
    let c = inverse_norm_check(&x).unwrap();
    assert!(c.holds);
    assert_eq!(c.bound, q(25, 1));
}

#[test]
fn inverse_norm_on_random_s_integers() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for s in [vec![5u64], vec![2, 3], vec![7, 11, 13]] {
        for _ in 0..500 {
            let mut x = BigRational::from_integer(BigInt::from(rng.gen_range(1i64..10_000) * if rng.gen() { 1 } else { -1 }));
            for &p in &s {
                let e: i32 = rng.gen_range(-6..=6);
                x *= num_traits::pow(BigRational::from_integer(p.into()), e.unsigned_abs() as usize).pow(e.signum());
            }
            let c = inverse_norm_check(&SAdicScalar::new(x, &s).unwrap()).unwrap();
            assert!(c.holds);
        }
    }
}

#[test]
fn kernel_examples() {
    let kb = integer_kernel_basis(&mat(&[&[1, 1, -2]]), &BigInt::from(2)).unwrap();
    assert_eq!(kb.vectors.len(), 2);
    assert!(kb.within_bound);
    assert_eq!(kb.bound, "512");
    assert!(kb.vectors.iter().all(|v| mat_vec(&mat(&[&[1, 1, -2]]), v).iter().all(|x| x.is_zero())));
    assert!(minor_gcd(&kb.vectors).is_one());
    // the lattice equals span{(1,1,1), (1,-1,0)}
    for v in [vec![1, 1, 1], vec![1, -1, 0]] {
        let v: Vec<BigInt> = v.into_iter().map(BigInt::from).collect();
        let c = coordinates(&kb.vectors, &v).unwrap();
        assert!(c.iter().all(|x| x.is_integer()));
    }

    let id = mat(&[&[1, 0, 0], &[0, 1, 0], &[0, 0, 1]]);
    assert!(integer_kernel_basis(&id, &BigInt::one()).unwrap().vectors.is_empty());

    let z = mat(&[&[0, 0, 0, 0]]);
    let kb = integer_kernel_basis(&z, &BigInt::zero()).unwrap();
    assert_eq!(kb.vectors.len(), 4);
    assert!(kb.within_bound);
    assert!(kb.vectors.iter().all(|v| v.iter().filter(|x| !x.is_zero()).count() == 1));
    assert!(minor_gcd(&kb.vectors).is_one());
}

#[test]
fn clean_bound_needs_t_at_least_two() {
    // entries bounded by T = 1, but the saturated kernel is spanned by (1, -1, 3, 1)
    let a = mat(&[&[-1, -1, 0, 0], &[-1, 0, 0, 1], &[1, -1, -1, 1]]);
    let kb = integer_kernel_basis(&a, &BigInt::one()).unwrap();
    assert_eq!(kb.vectors, vec![vec![1, -1, 3, 1].into_iter().map(BigInt::from).collect::<Vec<_>>()]);
    assert!(!kb.within_bound);
    assert!(integer_kernel_basis(&a, &BigInt::from(2)).unwrap().within_bound);
}

#[test]
fn saturation_test_detects_index() {
    let v = vec![vec![BigInt::from(2), BigInt::zero()], vec![BigInt::zero(), BigInt::one()]];
    assert_eq!(minor_gcd(&v), BigInt::from(2));
}

#[test]
fn kernel_bases_on_random_matrices() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for case in 0..60 {
        let rows = rng.gen_range(1..=3);
        let cols = rng.gen_range(rows..=5);
        let t = rng.gen_range(2..=6);
        let mut a = random_matrix(&mut rng, rows, cols, t);
        if case % 7 == 0 {
            // repeated row
            let r = a[0].clone();
            a.push(r);
        }
        let kb = integer_kernel_basis(&a, &BigInt::from(t)).unwrap();
        assert!(kb.within_bound, "{a:?}");
        assert_eq!(kb.vectors.len() + rank(&a), cols);
        for v in &kb.vectors {
            assert!(mat_vec(&a, v).iter().all(|x| x.is_zero()));
        }
        if cols <= 4 {
            assert!(minor_gcd(&kb.vectors).is_one());
            // every small integer kernel vector has integral coordinates
            let r = 3i64;
            let total = (2 * r + 1).pow(cols as u32);
            for idx in 0..total {
                let mut x = idx;
                let v: Vec<BigInt> = (0..cols)
                    .map(|_| {
                        let d = x % (2 * r + 1) - r;
                        x /= 2 * r + 1;
                        BigInt::from(d)
                    })
                    .collect();
                if mat_vec(&a, &v).iter().all(|x| x.is_zero()) {
                    let c = coordinates(&kb.vectors, &v).expect("kernel vector outside span");
                    assert!(c.iter().all(|x| x.is_integer()), "{a:?} {v:?}");
                }
            }
        }
    }
}

#[test]
fn nearest_point_examples() {
    let a = mat(&[&[1, 0]]);
    let nk = nearest_kernel_point(&a, &[0.25, 1.0], 0.25).unwrap();
    assert_eq!(nk.w0, vec![0.0, 1.0]);
    assert_eq!(nk.distance, 0.25);
    assert!((nk.c_a - 1.0).abs() < 1e-12);
    assert!(nk.hypothesis && nk.holds);

    let a = mat(&[&[1, 1, -2]]);
    let nk = nearest_kernel_point(&a, &[1.0, 1.0, 1.0], 0.0).unwrap();
    assert_eq!(nk.distance, 0.0);
    assert_eq!(nk.w0, vec![1.0, 1.0, 1.0]);
}

#[test]
fn nearest_point_matches_least_squares() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for _ in 0..40 {
        let rows = rng.gen_range(1..=3);
        let cols = rng.gen_range(rows + 1..=5);
        let a = random_matrix(&mut rng, rows, cols, 5);
        let kb = integer_kernel_basis(&a, &BigInt::from(5)).unwrap();
        let mut w = vec![0.0; cols];
        for v in &kb.vectors {
            let c: f64 = rng.gen_range(-2.0..2.0);
            for (wi, x) in w.iter_mut().zip(v) {
                *wi += c * x.to_f64().unwrap();
            }
        }
        for wi in w.iter_mut() {
            *wi += rng.gen_range(-1e-3..1e-3);
        }
        let am = DMatrix::from_fn(rows, cols, |i, j| a[i][j].to_f64().unwrap());
        let wv = DVector::from_vec(w.clone());
        let delta = (&am * &wv).norm();
        let nk = nearest_kernel_point(&a, &w, delta).unwrap();
        let ar: Vec<Vec<BigRational>> =
            a.iter().map(|r| r.iter().map(|x| BigRational::from_integer(x.clone())).collect()).collect();
        for r in &ar {
            let s = r.iter().zip(&nk.w0_exact).fold(BigRational::zero(), |s, (x, y)| s + x * y);
            assert!(s.is_zero());
        }
        assert!(nk.hypothesis && nk.holds, "{nk:?}");
        // w − A⁺ A w via SVD pseudo-inverse
        let pinv = am.clone().pseudo_inverse(1e-10).unwrap();
        let oracle = &wv - &pinv * (&am * &wv);
        for (x, y) in nk.w0.iter().zip(oracle.iter()) {
            assert!((x - y).abs() < 1e-9, "{:?} {:?}", nk.w0, oracle);
        }
    }
}

#[test]
fn csv_parsing() {
    let a = parse_matrix_csv("# A\n1, 1, -2\n\n0,3,4\n").unwrap();
    assert_eq!(a, mat(&[&[1, 1, -2], &[0, 3, 4]]));
    assert!(matches!(parse_matrix_csv("1,2\n3\n"), Err(HeightError::Ragged(1))));
    assert!(parse_matrix_csv("1,x\n").is_err());
}

proptest! {
    #[test]
    fn product_formula(n in -1_000_000i64..1_000_000, d in 1i64..1_000_000) {
        prop_assume!(n != 0);
        let x = SAdicScalar::new(q(n, d), &[2, 5]).unwrap();
        let h = place_norms(&x).unwrap();
        prop_assert!(h.product_formula_holds());
        prop_assert!(h.s_height <= h.s_norm.clone() * h.s_norm.clone() * h.s_norm.clone());
    }

    #[test]
    fn s_height_multiplicative(a in 1i64..5000, b in 1i64..5000, c in 1i64..5000) {
        let s = [2u64, 3, 7];
        let x = SAdicScalar::new(q(a, b), &s).unwrap();
        let y = SAdicScalar::new(q(c, 1), &s).unwrap();
        let xy = SAdicScalar::new(q(a * c, b), &s).unwrap();
        let hx = place_norms(&x).unwrap().s_height;
        let hy = place_norms(&y).unwrap().s_height;
        prop_assert_eq!(place_norms(&xy).unwrap().s_height, hx * hy);
    }

    #[test]
    fn rational_text_round_trip(n in any::<i64>(), d in 1i64..i64::MAX) {
        let x = q(n, d);
        prop_assert_eq!(parse_rational(&format_rational(&x)).unwrap(), x);
    }
}

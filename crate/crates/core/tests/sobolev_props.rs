use std::sync::OnceLock;

use padiclab::sobolev::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn g52() -> &'static FiniteQuotient {
    static G: OnceLock<FiniteQuotient> = OnceLock::new();
    G.get_or_init(|| FiniteQuotient::new(5, 2).unwrap())
}

fn g51() -> &'static FiniteQuotient {
    static G: OnceLock<FiniteQuotient> = OnceLock::new();
    G.get_or_init(|| FiniteQuotient::new(5, 1).unwrap())
}

fn close(a: &QuotientFunction, b: &QuotientFunction, tol: f64) -> bool {
    a.sub(b).sup_norm() <= tol
}

#[test]
fn group_order_and_filtration() {
    let g = g52();
    assert_eq!(g.len(), 15000);
    for m in 0..=2 {
        assert_eq!(g.coset_count(m) as f64, FiniteQuotient::index_formula(5, m));
        assert_eq!(g.kernel_elements(m).len() * g.coset_count(m), g.len());
    }
    assert_eq!(g.kernel_elements(1).len(), 125);
    assert_eq!(g.kernel_elements(2), vec![g.identity()]);
    // lexicographic order
    for i in 1..g.len() {
        assert!(g.element(i - 1) < g.element(i));
    }
}

#[test]
fn group_law() {
    let g = g52();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let e = g.identity();
    for _ in 0..500 {
        let (x, y, z) = (rng.gen_range(0..g.len()), rng.gen_range(0..g.len()), rng.gen_range(0..g.len()));
        assert_eq!(g.mul(g.mul(x, y), z), g.mul(x, g.mul(y, z)));
        assert_eq!(g.mul(x, g.inv(x)), e);
        assert_eq!(g.mul(e, x), x);
    }
}

#[test]
fn kernels_are_normal() {
    let g = g52();
    let k1 = g.kernel_elements(1);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..200 {
        let x = rng.gen_range(0..g.len());
        let k = k1[rng.gen_range(0..k1.len())];
        assert!(g.in_kernel(g.mul(g.mul(x, k), g.inv(x)), 1));
    }
}

#[test]
fn delta_average() {
    let g = g52();
    let e = g.identity();
    let a = g.avg_project(&g.delta(e), 1).unwrap();
    for x in 0..g.len() {
        let want = if g.in_kernel(x, 1) { 1.0 / 125.0 } else { 0.0 };
        assert!((a.values[x] - want).abs() < 1e-15);
    }
    let a0 = g.avg_project(&g.delta(e), 0).unwrap();
    assert!(a0.values.iter().all(|v| (v - 1.0 / 15000.0).abs() < 1e-18));
}

#[test]
fn constant_functions() {
    let g = g52();
    let c = g.constant(-2.5);
    assert!(close(&g.pr_project(&c, 0).unwrap(), &c, 0.0));
    for m in 1..=2 {
        assert!(g.pr_project(&c, m).unwrap().sup_norm() < 1e-15);
    }
    assert!((g.sobolev_norm(&c, 5.0).unwrap() - 2.5).abs() < 1e-12);
    let rep = g.verify_properties(&c, &c, g.identity(), 5.0, 1).unwrap();
    assert!(rep.all_hold());
}

#[test]
fn projections_on_random_functions() {
    let g = g52();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..5 {
        let f = g.random_function(&mut rng);
        let h = g.random_function(&mut rng);
        for m in 0..=2 {
            let a = g.avg_project(&f, m).unwrap();
            assert!(close(&g.avg_project(&a, m).unwrap(), &a, 1e-12));
            let lhs = a.inner(&h);
            let rhs = f.inner(&g.avg_project(&h, m).unwrap());
            assert!((lhs - rhs).abs() < 1e-12);
        }
        let pieces = g.decompose(&f).unwrap();
        let sum = pieces.iter().skip(1).fold(pieces[0].clone(), |acc, x| acc.add(x));
        assert!(close(&sum, &f, 1e-12));
        for m in 0..pieces.len() {
            for l in 0..pieces.len() {
                if m != l {
                    assert!(pieces[m].inner(&pieces[l]).abs() < 1e-12);
                }
            }
        }
        assert!((g.sobolev_norm(&f, 0.0).unwrap() - f.norm2()).abs() < 1e-12);
    }
}

#[test]
fn level_one_invariant_has_no_top_piece() {
    let g = g52();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let f = g.avg_project(&g.random_function(&mut rng), 1).unwrap();
    assert!(g.pr_project(&f, 2).unwrap().sup_norm() < 1e-15);
}

#[test]
fn properties_on_random_functions() {
    let g = g52();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let k1 = g.kernel_elements(1);
    for i in 0..30 {
        let f = g.random_function(&mut rng);
        let f2 = g.random_function(&mut rng);
        let (gg, r) = if i % 2 == 0 { (k1[rng.gen_range(0..k1.len())], 1) } else { (rng.gen_range(0..g.len()), 0) };
        let rep = g.verify_properties(&f, &f2, gg, 5.0, r).unwrap();
        assert!(rep.enforced && rep.g_in_level);
        assert!(rep.all_hold(), "{rep:?}");
    }
}

#[test]
fn top_kernel_acts_trivially() {
    let g = g52();
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let f = g.random_function(&mut rng);
    let rep = g.verify_properties(&f, &f, g.identity(), 5.0, 2).unwrap();
    assert_eq!(rep.s3.lhs, 0.0);
    assert_eq!(rep.constants.c3, 0.0);
}

#[test]
fn low_smoothness_is_report_only() {
    let g = g51();
    let f = g.delta(0);
    let rep = g.verify_properties(&f, &f, 0, 1.0, 0).unwrap();
    assert!(!rep.enforced);
}

#[test]
fn errors() {
    let g = g51();
    assert!(matches!(g.avg_project(&g.constant(1.0), 2), Err(SobolevError::LevelMismatch { m: 2, n: 1 })));
    let short = QuotientFunction { values: vec![1.0; 3] };
    assert!(matches!(g.sobolev_norm(&short, 1.0), Err(SobolevError::SizeMismatch { .. })));
    assert!(g.sobolev_norm(&g.constant(1.0), -1.0).is_err());
}

fn small_fn() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-4.0f64..4.0, 120)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn invariance_under_group(v in small_fn(), gi in 0usize..120, d in 0.0f64..8.0) {
        let g = g51();
        let f = QuotientFunction { values: v };
        let s = g.sobolev_norm(&f, d).unwrap();
        let t = g.sobolev_norm(&g.act(gi, &f).unwrap(), d).unwrap();
        prop_assert!((s - t).abs() <= 1e-12 * s.max(1.0));
    }

    #[test]
    fn monotone_in_d(v in small_fn(), d in 0.0f64..6.0, e in 0.0f64..2.0) {
        let g = g51();
        let f = QuotientFunction { values: v };
        prop_assert!(g.sobolev_norm(&f, d).unwrap() <= g.sobolev_norm(&f, d + e).unwrap() * (1.0 + 1e-12));
    }

    #[test]
    fn homogeneous(v in small_fn(), c in -10.0f64..10.0) {
        let g = g51();
        let f = QuotientFunction { values: v };
        let s = g.sobolev_norm(&f, 5.0).unwrap();
        let t = g.sobolev_norm(&f.scale(c), 5.0).unwrap();
        prop_assert!((t - c.abs() * s).abs() <= 1e-12 * t.max(1.0));
    }

    #[test]
    fn s1_s4_level_one(v in small_fn(), w in small_fn(), d in 5.0f64..9.0) {
        let g = g51();
        let f = QuotientFunction { values: v };
        let f2 = QuotientFunction { values: w };
        let rep = g.verify_properties(&f, &f2, g.identity(), d, 1).unwrap();
        prop_assert!(rep.all_hold());
    }
}

use padiclab::tree::{
    bourgain_regularize, build_tree, energy_sum, non_concentration_profile, BourgainParams, PointSet,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_set(rng: &mut ChaCha8Rng, p: u64, dim: usize, m: u32, n: usize) -> PointSet {
    let q = p.pow(m);
    let mut seen = std::collections::BTreeSet::new();
    while seen.len() < n {
        let pt: Vec<u64> = (0..dim).map(|_| rng.gen_range(0..q)).collect();
        seen.insert(pt);
    }
    let pts: Vec<Vec<u64>> = seen.into_iter().collect();
    PointSet::new(p, dim, m, &pts).unwrap()
}

fn scan_count(e: &PointSet, c: &[u64], k: u32) -> usize {
    e.points().filter(|x| e.distance_valuation(x, c) >= k).count()
}

#[test]
fn ball_counts_match_linear_scan() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let e = random_set(&mut rng, 5, 3, 3, 1000);
    let t = build_tree(&e).unwrap();
    for _ in 0..1000 {
        let c: Vec<u64> = (0..3).map(|_| rng.gen_range(0..125)).collect();
        let k = rng.gen_range(0..=3);
        assert_eq!(t.ball_count(&c, k).unwrap(), scan_count(&e, &c, k));
    }
    for x in e.points() {
        assert_eq!(t.ball_count(x, 3).unwrap(), 1);
    }
    assert!(t.ball_count(e.point(0), 4).is_err());
}

#[test]
fn every_node_count_matches_scan() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let e = random_set(&mut rng, 7, 1, 3, 200);
    let t = build_tree(&e).unwrap();
    for k in 0..=3 {
        let mut from_scan: Vec<usize> = (0..7u64.pow(k))
            .map(|c| scan_count(&e, &[c], k))
            .filter(|&c| c > 0)
            .collect();
        let mut from_tree: Vec<usize> = t.counts_at(k).collect();
        from_scan.sort_unstable();
        from_tree.sort_unstable();
        assert_eq!(from_scan, from_tree);
    }
}

#[test]
fn energy_matches_pairwise_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let f = random_set(&mut rng, 5, 3, 4, 300);
    for i in [0, 17, 299] {
        let w = f.point(i);
        let mut terms: Vec<f64> = f
            .points()
            .filter(|x| *x != w)
            .map(|x| 5f64.powf(0.6 * f.distance_valuation(x, w) as f64))
            .collect();
        terms.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let direct: f64 = terms.iter().sum();
        let e = energy_sum(&f, 0.6, w).unwrap();
        assert!((e - direct).abs() <= 1e-12 * direct);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn profile_counts_monotone_under_subsets(seed in any::<u64>(), drop in 1usize..50) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let e = random_set(&mut rng, 5, 3, 2, 120);
        let keep: Vec<usize> = (drop..e.len()).collect();
        let sub = e.subset(&keep);
        let a = non_concentration_profile(&e, 2, 0, 0.5).unwrap();
        let b = non_concentration_profile(&sub, 2, 0, 0.5).unwrap();
        for (x, y) in a.max_counts.iter().zip(&b.max_counts) {
            prop_assert!(y.1 <= x.1);
        }
        for w in a.max_counts.windows(2) {
            prop_assert!(w[1].1 <= w[0].1);
        }
    }

    #[test]
    fn energy_monotone_in_set(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let e = random_set(&mut rng, 7, 3, 2, 60);
        let sub = e.subset(&(0..59).collect::<Vec<_>>());
        let w = e.point(0);
        prop_assert!(energy_sum(&sub, 0.4, w).unwrap() <= energy_sum(&e, 0.4, w).unwrap());
    }
}

fn check_regularized(f: &PointSet, params: &BourgainParams) -> padiclab::tree::Regularized {
    let out = bourgain_regularize(f, params).unwrap();
    let fp = &out.fprime;
    let p = f.p() as f64;
    for x in fp.points() {
        assert!(f.contains(x));
        assert!(f.distance_valuation(x, &out.w0) >= out.l1);
    }
    // exhaustive scan over centres in F' and every scale down to (#F)^-1
    for k in 0..=out.k_max {
        let kk = k.min(f.depth());
        let worst = fp.points().map(|c| scan_count(fp, c, kk)).max().unwrap();
        let worst = if k > f.depth() { 1 } else { worst };
        let ratio = worst as f64 / fp.len() as f64;
        let bound = out.c_prime * p.powf(-out.gamma * (k as f64 - out.l1 as f64));
        assert!(ratio <= bound * (1.0 + 1e-9), "k={k}: {ratio} > {bound}");
    }
    assert!(out.l1 as f64 >= out.l1_range.0 - 1e-12 && out.l1 as f64 <= out.l1_range.1 + 1e-12);
    out
}

#[test]
fn regularize_line_set() {
    let f = PointSet::from_flat(5, 3, 4, (0..625).flat_map(|t| [0, t, 0]).collect()).unwrap();
    let params = BourgainParams { alpha: 0.9, epsilon: 0.01, d: 10.0, waive_size_condition: true };
    let out = check_regularized(&f, &params);
    assert!(out.c_prime.is_finite());
}

#[test]
fn regularize_two_clusters_picks_larger() {
    let mut pts = Vec::new();
    for t in 0..125u64 {
        pts.push(vec![5 * t % 625, 0, 0]);
    }
    for t in 0..25u64 {
        pts.push(vec![1 + 25 * t, 1, 1]);
    }
    let f = PointSet::new(5, 3, 4, &pts).unwrap();
    let params = BourgainParams { alpha: 0.5, epsilon: 0.01, d: 50.0, waive_size_condition: true };
    let out = check_regularized(&f, &params);
    assert_eq!(out.w0[0] % 5, 0);
    assert_eq!(out.w0[1], 0);
}

#[test]
fn regularize_random_sets() {
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    for _ in 0..5 {
        let f = random_set(&mut rng, 5, 3, 5, 1000);
        let params = BourgainParams { alpha: 0.5, epsilon: 0.01, d: 100.0, waive_size_condition: true };
        check_regularized(&f, &params);
    }
}

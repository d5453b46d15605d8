use padiclab::lie::{ad_u, RVec};
use padiclab::padic::Context;
use padiclab::projection::{
    change_base_point, projection_theorem_scan, shear_select, shear_target, xi, xi_residue, ScanParams,
    ZpBall,
};
use padiclab::sample;
use padiclab::tree::{non_concentration_profile, PointSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_set(rng: &mut ChaCha8Rng, p: u64, m: u32, n: usize, step: u64) -> PointSet {
    let q = p.pow(m) / step;
    let mut seen = std::collections::BTreeSet::new();
    while seen.len() < n {
        seen.insert(vec![rng.gen_range(0..q) * step, rng.gen_range(0..q) * step, rng.gen_range(0..q) * step]);
    }
    PointSet::new(p, 3, m, &seen.into_iter().collect::<Vec<_>>()).unwrap()
}

fn params(l0: u32, alpha: f64, eps: f64) -> ScanParams {
    ScanParams { l0, l1: 0, alpha, epsilon: eps, j: ZpBall::whole(), r_depth: 2, d_prime: None, threshold: None }
}

#[test]
fn xi_agrees_with_adjoint() {
    let ctx = Context::new(7, 9).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..10_000 {
        let r = sample::scalar(&mut rng, &ctx, 0);
        let w = sample::rvec(&mut rng, &ctx, -1);
        assert_eq!(xi(&r, &w).unwrap(), ad_u(&r, &w).unwrap().w12);
    }
}

#[test]
fn projection_distances_depend_on_differences() {
    let ctx = Context::new(5, 10).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    for _ in 0..2000 {
        let r = sample::scalar(&mut rng, &ctx, 0);
        let w = sample::rvec(&mut rng, &ctx, 0);
        let v = sample::rvec(&mut rng, &ctx, 0);
        let lhs = xi(&r, &w).unwrap() - xi(&r, &v).unwrap();
        let rhs = xi(&r, &w.checked_sub(&v).unwrap()).unwrap();
        assert_eq!(lhs, rhs);
    }
}

#[test]
fn residue_form_matches_padic_form() {
    let ctx = Context::new(5, 6).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    for _ in 0..1000 {
        let (r, w) = (rng.gen_range(0..15625u64), [rng.gen_range(0..15625u64), rng.gen_range(0..15625), rng.gen_range(0..15625)]);
        let rv = RVec::new(ctx.from_residue(w[0], 6), ctx.from_residue(w[1], 6), ctx.from_residue(w[2], 6));
        let x = xi(&ctx.from_residue(r, 6), &rv).unwrap();
        assert_eq!(x.residue(6).unwrap(), xi_residue(r, &w, 15625));
    }
}

#[test]
fn w12_axis_has_no_exceptions() {
    for p in [5u64, 7] {
        let e = PointSet::from_flat(p, 3, 3, (0..p.pow(3)).flat_map(|t| [0, t, 0]).collect()).unwrap();
        let rep = projection_theorem_scan(&e, &params(3, 0.8, 0.05), false).unwrap();
        assert_eq!(rep.exceptional_mass, 0.0);
        for r in &rep.rs {
            assert_eq!(r.er_size, e.len());
            assert_eq!(r.c_r, rep.hypothesis_d);
        }
    }
}

#[test]
fn w21_axis_exceptions_are_p_zp() {
    let p = 5u64;
    let e = PointSet::from_flat(p, 3, 3, (0..125).flat_map(|t| [0, 0, t]).collect()).unwrap();
    let rep = projection_theorem_scan(&e, &params(3, 0.8, 0.05), false).unwrap();
    assert_eq!(rep.exceptional_mass, 1.0 / p as f64);
    for r in &rep.rs {
        assert_eq!(r.good, r.r % p != 0, "r = {}", r.r);
    }
}

#[test]
fn random_sets_have_small_exceptional_mass() {
    let mut rng = ChaCha8Rng::seed_from_u64(34);
    for _ in 0..3 {
        let e = random_set(&mut rng, 5, 3, 1000, 1);
        let rep = projection_theorem_scan(&e, &params(3, 0.8, 0.05), false).unwrap();
        assert!(rep.exceptional_mass <= 0.2);
    }
}

#[test]
fn shear_adversarial_and_random() {
    let mut rng = ChaCha8Rng::seed_from_u64(35);
    let mut sets = vec![
        PointSet::from_flat(5, 3, 4, (1..625).filter(|t| t % 5 != 0).flat_map(|t| [0, 0, t]).collect()).unwrap(),
        PointSet::from_flat(5, 3, 4, (1..625).filter(|t| t % 5 != 0).flat_map(|t| [t, 0, 0]).collect()).unwrap(),
        PointSet::from_flat(5, 3, 4, (1..625).filter(|t| t % 5 != 0).flat_map(|t| [t, 0, 5 * t % 625]).collect()).unwrap(),
    ];
    for _ in 0..20 {
        sets.push(random_set(&mut rng, 5, 4, 400, 1));
    }
    for e in sets {
        let s = shear_select(&e).unwrap();
        assert!(4 * s.ehat.len() >= e.len());
        assert!(s.ehat.points().all(|w| shear_target(&[w[0], w[1], w[2]], 4, 5)));
    }
}

#[test]
fn base_point_change_is_isometric() {
    let mut rng = ChaCha8Rng::seed_from_u64(36);
    let f = random_set(&mut rng, 5, 6, 300, 25);
    let w0 = f.point(7).to_vec();
    let g = change_base_point(&f, &w0).unwrap();
    assert_eq!(g.len(), f.len());
    assert!(g.contains(&[0, 0, 0]));
    for i in 0..40 {
        for j in 0..f.len() {
            assert_eq!(
                f.distance_valuation(f.point(i), f.point(j)),
                g.distance_valuation(g.point(i), g.point(j))
            );
        }
    }
    let a = non_concentration_profile(&f, 6, 0, 0.5).unwrap();
    let b = non_concentration_profile(&g, 6, 0, 0.5).unwrap();
    assert_eq!(a.max_counts, b.max_counts);
}

use padiclab::padic::{haar_integrate, Context, PAdic, Valuation, ZpTable};
use proptest::prelude::*;

fn element(ctx: Context) -> impl Strategy<Value = PAdic> {
    (1u64..ctx.pow_p(ctx.precision()), -3i64..4).prop_map(move |(x, k)| {
        ctx.from_residue(x, ctx.precision()).shift(k)
    })
}

fn any_ctx() -> impl Strategy<Value = Context> {
    (prop::sample::select(vec![5u64, 7, 11, 13]), 3u32..9).prop_map(|(p, m)| Context::new(p, m).unwrap())
}

proptest! {
    #[test]
    fn norm_is_multiplicative((c, xs) in any_ctx().prop_flat_map(|c| (Just(c), (element(c), element(c))))) {
        let (x, y) = xs;
        let v = x.exact_valuation().unwrap() + y.exact_valuation().unwrap();
        prop_assert_eq!((x * y).valuation(), Valuation::Exact(v));
        let _ = c;
    }

    #[test]
    fn ultrametric((_c, xs) in any_ctx().prop_flat_map(|c| (Just(c), (element(c), element(c))))) {
        let (x, y) = xs;
        let vx = x.exact_valuation().unwrap();
        let vy = y.exact_valuation().unwrap();
        let s = x + y;
        prop_assert!(s.valuation().lower_bound() >= vx.min(vy));
        if vx != vy {
            prop_assert_eq!(s.valuation(), Valuation::Exact(vx.min(vy)));
        }
    }

    #[test]
    fn division_inverts_multiplication((_c, xs) in any_ctx().prop_flat_map(|c| (Just(c), (element(c), element(c))))) {
        let (x, y) = xs;
        let q = (x * y) / y;
        prop_assert!(q == x);
    }

    #[test]
    fn haar_refinement_invariant(p in prop::sample::select(vec![5u64, 7]), depth in 1u32..4, seed in any::<u64>()) {
        let t = ZpTable::from_fn(p, depth, |r| ((r.wrapping_mul(seed | 1) >> 7) % 1000) as f64 / 7.0);
        let a = t.integrate().unwrap();
        let b = t.refine().integrate().unwrap();
        prop_assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn haar_order_independent(vals in prop::collection::vec(-1e6f64..1e6, 25), rot in 0usize..25) {
        let a = haar_integrate(5, 2, &vals).unwrap();
        let mut r = vals.clone();
        r.rotate_left(rot);
        r.reverse();
        prop_assert_eq!(a.to_bits(), haar_integrate(5, 2, &r).unwrap().to_bits());
    }
}

#[test]
fn ultrametric_random_pairs() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    let c = Context::new(5, 10).unwrap();
    for _ in 0..10_000 {
        let x = c.from_residue(rng.gen_range(1..c.pow_p(10)), 10).shift(rng.gen_range(-2..3));
        let y = c.from_residue(rng.gen_range(1..c.pow_p(10)), 10).shift(rng.gen_range(-2..3));
        let s = x + y;
        let (vx, vy) = (x.exact_valuation().unwrap(), y.exact_valuation().unwrap());
        assert!(s.valuation().lower_bound() >= vx.min(vy));
        if vx != vy {
            assert_eq!(s.valuation(), Valuation::Exact(vx.min(vy)));
        }
    }
}

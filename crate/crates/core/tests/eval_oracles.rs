mod support;

use std::collections::HashSet;

use cadkit_core::eval::{
    accuracy, assignment, cf1, chamfer, chamfer_with, match_primitives, pf1, AccuracyMode,
};
use cadkit_core::par::Exec;
use cadkit_core::quantize::quantize;
use cadkit_core::render::RasterImage;
use proptest::prelude::*;
use rand::Rng;

use support::suites::{oracle_cost, random_quantized_pair as random_pair};

#[test]
fn hungarian_matches_brute_force() {
    let mut r = support::rng(77);
    for case in 0..1000 {
        let (gt, pred) = random_pair(&mut r, 7);
        let m = match_primitives(&gt, &pred);
        let cost: Vec<Vec<i64>> =
            gt.primitives.iter().map(|a| pred.primitives.iter().map(|b| oracle_cost(a, b)).collect()).collect();
        let best = support::brute_force_assignment_cost(&cost);
        assert_eq!(m.total_cost, best as f64, "case {case}");
        assert_eq!(m.pairs.len(), gt.primitives.len().min(pred.primitives.len()));
        let g: HashSet<_> = m.pairs.iter().map(|p| p.0).collect();
        let p: HashSet<_> = m.pairs.iter().map(|p| p.1).collect();
        assert_eq!(g.len(), m.pairs.len());
        assert_eq!(p.len(), m.pairs.len());
        assert_eq!(m.unmatched_gt.len() + m.pairs.len(), gt.primitives.len());
        assert_eq!(m.unmatched_pred.len() + m.pairs.len(), pred.primitives.len());
    }
}

#[test]
fn assignment_on_raw_matrices() {
    let mut r = support::rng(78);
    for _ in 0..300 {
        let (n, m) = (r.gen_range(1..=7), r.gen_range(1..=7));
        let c: Vec<Vec<i64>> = (0..n).map(|_| (0..m).map(|_| r.gen_range(0..20)).collect()).collect();
        let a = assignment(&c);
        let total: i64 = a.iter().map(|&(i, j)| c[i][j]).sum();
        assert_eq!(total, support::brute_force_assignment_cost(&c));
    }
}

#[test]
fn chamfer_matches_pairwise_definition() {
    let mut r = support::rng(91);
    for case in 0..100 {
        let da = r.gen_range(0.002..0.3);
        let db = r.gen_range(0.002..0.3);
        let a = support::random_mask(&mut r, 64, 64, da);
        let b = support::random_mask(&mut r, 64, 64, db);
        let want = support::chamfer_brute_force(&a, &b);
        for exec in [Exec::Sequential, Exec::Parallel] {
            let got = chamfer_with(&a, &b, exec).unwrap();
            assert!((got - want).abs() <= 1e-9, "case {case}: {got} vs {want}");
        }
    }
}

#[test]
fn chamfer_single_pixels() {
    let mut a = RasterImage::new(64, 64);
    let mut b = RasterImage::new(64, 64);
    a.set(0, 0);
    b.set(3, 4);
    assert_eq!(chamfer(&a, &b).unwrap(), 25.0);
}

#[test]
fn hand_counted_pf1_cf1() {
    let (gt, pred, want_pf1, want_cf1) = support::suites::hand_counted_fixture();
    let m = match_primitives(&gt, &pred);
    assert!((pf1(&gt, &pred, &m) - want_pf1).abs() < 1e-12);
    assert!((cf1(&gt, &pred, &m) - want_cf1).abs() < 1e-12);
}

#[test]
fn gt_constraints_through_the_pipeline() {
    let out = support::suites::self_consistency(4, 30);
    assert_eq!(out.errors, 0);
    assert_eq!(out.mean_cf1, 1.0);
    assert!(out.mean_pf1 >= 0.99, "{}", out.mean_pf1);
}

fn mask_strategy() -> impl Strategy<Value = RasterImage> {
    prop::collection::vec(any::<bool>(), 16 * 16).prop_map(|bits| {
        let mut img = RasterImage::new(16, 16);
        for (i, on) in bits.into_iter().enumerate() {
            if on {
                img.set((i % 16) as u32, (i / 16) as u32);
            }
        }
        if img.count() == 0 {
            img.set(0, 0);
        }
        img
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn chamfer_is_symmetric_and_zero_only_on_equal(a in mask_strategy(), b in mask_strategy()) {
        let ab = chamfer(&a, &b).unwrap();
        prop_assert_eq!(ab, chamfer(&b, &a).unwrap());
        prop_assert_eq!(chamfer(&a, &a).unwrap(), 0.0);
        prop_assert_eq!(ab == 0.0, a == b);
    }

    #[test]
    fn pushing_a_token_past_tolerance_never_helps(seed in any::<u64>(), slot in 0usize..5, push in 6i32..20) {
        let mut r = support::rng(seed);
        let n = r.gen_range(3..8);
        let s = support::perturb(&support::satisfiable_sketch(&mut r, n), &mut r, 0.01);
        let gt = quantize(&s).unwrap();
        let mut pred = gt.clone();
        for p in &mut pred.primitives {
            for t in &mut p.tokens {
                *t = (i32::from(*t) + r.gen_range(-2..=2)).clamp(0, 63) as u8;
            }
        }
        let m0 = match_primitives(&gt, &pred);
        let (p0, c0) = (pf1(&gt, &pred, &m0), cf1(&gt, &pred, &m0));
        let k = r.gen_range(0..pred.primitives.len());
        let target = &mut pred.primitives[k];
        let slot = slot % target.tokens.len();
        let g = i32::from(gt.primitives[k].tokens[slot]);
        let up = g + push;
        let moved = if up <= 63 { up } else { g - push };
        prop_assume!((0..=63).contains(&moved));
        target.tokens[slot] = moved as u8;
        let m1 = match_primitives(&gt, &pred);
        prop_assert!(pf1(&gt, &pred, &m1) <= p0);
        prop_assert!(cf1(&gt, &pred, &m1) <= c0);
    }

    #[test]
    fn scores_stay_in_unit_interval(seed in any::<u64>()) {
        let mut r = support::rng(seed);
        let (gt, pred) = random_pair(&mut r, 6);
        let m = match_primitives(&gt, &pred);
        for v in [
            pf1(&gt, &pred, &m),
            cf1(&gt, &pred, &m),
            accuracy(&gt, &pred, &m, AccuracyMode::PerToken),
            accuracy(&gt, &pred, &m, AccuracyMode::PerPrimitive),
        ] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }
}

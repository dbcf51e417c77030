use apk_core::construction::{Membership, SaitoLayout};
use apk_core::geometry::{min_pairwise_gap, pow2, Orientation, Point};
use apk_core::patches::{
    find_ap_in_saito, find_patch_in_diamond, initial_point_of, patch_points, verify_eps_ap, ArithmeticPatch, DiamondSearch, TupleSearch,
    CONTAINMENT_TOLERANCE,
};
use proptest::prelude::*;

fn pt(c: &[f64]) -> Point {
    Point::new(c.to_vec()).unwrap()
}

fn unit(v: &[f64]) -> Option<Point> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    (n > 1e-3).then(|| pt(&v.iter().map(|x| x / n).collect::<Vec<_>>()))
}

/// Nearest-distance scan written out independently of the verifier.
fn worst_ratio(q: &[Point], p: &ArithmeticPatch) -> f64 {
    patch_points(p).iter().map(|x| q.iter().map(|y| x.dist(y)).fold(f64::INFINITY, f64::min) / p.scale).fold(0.0, f64::max)
}

#[test]
fn verifier_and_initial_point_examples() {
    let e = Orientation::from_coords(&[vec![1.0, 0.0]]).unwrap();
    let p = ArithmeticPatch::new(pt(&[0.0, 0.0]), 1.0, e, 3).unwrap();
    let q = vec![pt(&[0.05, 0.0]), pt(&[1.0, 0.0]), pt(&[1.95, 0.0])];
    let pass = verify_eps_ap(&q, &p, 0.1).unwrap();
    assert!(pass.pass);
    assert!((pass.worst_ratio - 0.05).abs() < 1e-15);
    let fail = verify_eps_ap(&q, &p, 0.01).unwrap();
    assert!(!fail.pass && fail.worst_ratio == pass.worst_ratio);
    assert_eq!(initial_point_of(&q, &p, 0.1).unwrap(), pt(&[0.05, 0.0]));
    // Wrong cardinality fails regardless of distances.
    assert!(!verify_eps_ap(&q[..2], &p, 0.5).unwrap().pass);
}

#[test]
fn m1_diamond_finder_reduces_to_segments() {
    for (e, k, eps) in [(vec![0.0, 1.0], 3, 0.5), (vec![0.6, 0.8], 5, 0.2), (vec![1f64.cos(), 1f64.sin()], 4, 0.1)] {
        let seg = find_ap_in_saito(2, &pt(&e), k, eps).unwrap();
        let o = Orientation::from_coords(std::slice::from_ref(&e)).unwrap();
        let dia = find_patch_in_diamond(2, 1, &o, k, eps, DiamondSearch::default()).unwrap();
        assert_eq!(seg.directions, dia.directions);
        assert_eq!(seg.level, dia.level);
        for (a, b) in seg.ap.points.iter().zip(&dia.ap.points) {
            assert!(a.dist(b) <= 1e-15);
        }
    }
}

#[test]
fn anisotropic_spacing_follows_the_norms() {
    let e = Orientation::from_coords(&[vec![2.0, 0.0], vec![0.0, 1.0]]).unwrap();
    let found = find_patch_in_diamond(2, 2, &e, 3, 0.4, DiamondSearch::default()).unwrap();
    let q = &found.ap.points;
    // Patch order has x_1 fastest: q[1] - q[0] steps along xi_1, q[3] - q[0] along xi_2.
    let along_1 = q[1].dist(&q[0]);
    let along_2 = q[3].dist(&q[0]);
    assert!((along_1 / along_2 - 2.0).abs() < 1e-12);
    assert!(verify_eps_ap(q, &found.ap.reference, 0.4).unwrap().pass);
}

#[test]
fn linear_scan_agrees_with_direct_search() {
    let e = Orientation::from_coords(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
    let direct = find_patch_in_diamond(2, 2, &e, 3, 0.8, DiamondSearch::default()).unwrap();
    let linear = find_patch_in_diamond(2, 2, &e, 3, 0.8, DiamondSearch { strategy: TupleSearch::Linear, budget: 1 << 20 }).unwrap();
    assert!(linear.level <= direct.level);
    assert!(verify_eps_ap(&linear.ap.points, &linear.ap.reference, 0.8).unwrap().pass);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn exact_patches_pass_at_zero(
        t in prop::collection::vec(-5.0f64..5.0, 2),
        scale in 0.01f64..10.0,
        k in 2usize..6,
        rows in prop::collection::vec(prop::collection::vec(-2.0f64..2.0, 2), 1..=2),
    ) {
        if let Ok(e) = Orientation::from_coords(&rows) {
            let p = ArithmeticPatch::new(pt(&t), scale, e, k).unwrap();
            let q = patch_points(&p);
            prop_assert_eq!(q.len(), k.pow(p.m() as u32));
            let v = verify_eps_ap(&q, &p, 0.0).unwrap();
            prop_assert!(v.pass);
            prop_assert_eq!(v.worst_ratio, 0.0);
            prop_assert_eq!(initial_point_of(&q, &p, 0.0).unwrap(), pt(&t));
        }
    }

    #[test]
    fn verdict_is_monotone_and_translation_invariant(
        noise in prop::collection::vec(prop::collection::vec(-0.2f64..0.2, 2), 9),
        shift in prop::collection::vec(-3.0f64..3.0, 2),
        eps in 0.0f64..0.9,
        more in 0.0f64..0.5,
    ) {
        let e = Orientation::from_coords(&[vec![1.0, 0.0], vec![0.3, 1.0]]).unwrap();
        let p = ArithmeticPatch::new(pt(&[0.0, 0.0]), 1.0, e.clone(), 3).unwrap();
        let q: Vec<Point> = patch_points(&p).iter().zip(&noise).map(|(x, n)| x.add(&pt(n))).collect();
        let v = verify_eps_ap(&q, &p, eps).unwrap();
        prop_assert_eq!(v.worst_ratio, worst_ratio(&q, &p));
        prop_assert_eq!(v.pass, v.worst_ratio <= eps);
        if v.pass {
            prop_assert!(verify_eps_ap(&q, &p, (eps + more).min(0.99)).unwrap().pass);
        }
        // Power-of-two shifts keep every coordinate difference exact.
        let s = pt(&shift.iter().map(|x| (x * 8.0).round() / 8.0).collect::<Vec<_>>());
        let q2: Vec<Point> = q.iter().map(|x| x.add(&s)).collect();
        let p2 = ArithmeticPatch::new(p.initial_point.add(&s), 1.0, e, 3).unwrap();
        let v2 = verify_eps_ap(&q2, &p2, eps).unwrap();
        prop_assert!((v2.worst_ratio - v.worst_ratio).abs() <= 1e-12);
    }

    #[test]
    fn saito_finder_is_certified(v in prop::collection::vec(-1.0f64..1.0, 2..=4), k in 3usize..10, eps in 0.01f64..0.99) {
        let Some(e) = unit(&v) else { return Ok(()); };
        let d = e.dim();
        let found = find_ap_in_saito(d, &e, k, eps).unwrap();
        let ap = &found.ap;
        let check = verify_eps_ap(&ap.points, &ap.reference, eps).unwrap();
        prop_assert!(check.pass);
        prop_assert_eq!(check.worst_ratio, worst_ratio(&ap.points, &ap.reference));
        let want = 1.0 / ((k - 1) as f64 * pow2(found.level as i64 + 1 - ap.frame_shift));
        prop_assert_eq!(ap.reference.scale, want);
        prop_assert!(min_pairwise_gap(&ap.points).unwrap() >= (1.0 - 2.0 * eps) * want);
        prop_assert!(ap.initial_point.dist(&ap.reference.initial_point) <= eps * want);
        let frame = found.level as i64;
        let layout = SaitoLayout::segments(d).unwrap();
        for q in ap.points_in_frame(frame) {
            prop_assert_eq!(
                layout.contains(&q, frame, CONTAINMENT_TOLERANCE, found.level).unwrap(),
                Some(Membership::Level(found.level))
            );
        }
    }

    #[test]
    fn diamond_finder_is_certified(
        a in prop::collection::vec(-1.0f64..1.0, 3),
        b in prop::collection::vec(-1.0f64..1.0, 3),
        scale in 0.5f64..2.0,
        k in 3usize..5,
        eps in 0.2f64..0.9,
    ) {
        let rows = vec![a.iter().map(|x| x * scale).collect::<Vec<_>>(), b];
        let Ok(e) = Orientation::from_coords(&rows) else { return Ok(()); };
        prop_assume!(e.ell() > 0.3);
        let found = find_patch_in_diamond(3, 2, &e, k, eps, DiamondSearch::default()).unwrap();
        let ap = &found.ap;
        prop_assert!(verify_eps_ap(&ap.points, &ap.reference, eps).unwrap().pass);
        let frame = found.level as i64;
        let layout = SaitoLayout::diamonds(3, 2).unwrap();
        for q in ap.points_in_frame(frame) {
            prop_assert_eq!(
                layout.contains(&q, frame, CONTAINMENT_TOLERANCE, found.level).unwrap(),
                Some(Membership::Level(found.level))
            );
        }
    }
}

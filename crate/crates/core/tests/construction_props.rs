use apk_core::construction::{build_diamond_set, build_saito_set, Membership, SaitoLayout};
use apk_core::geometry::{pow2, segment_distance, Point};
use apk_core::io::{from_json, to_json};
use proptest::prelude::*;

#[test]
fn pieces_are_disjoint_and_shrink() {
    for d in [2, 3] {
        let k = build_saito_set(d, 24).unwrap();
        let segs: Vec<_> = k.pieces.iter().map(|p| p.segment().unwrap()).collect();
        for (i, a) in segs.iter().enumerate() {
            // Endpoints along an irrational unit vector round, so allow a few ulps.
            let want = pow2(-(i as i64) - 1);
            assert!((a.length() - want).abs() <= 4.0 * f64::EPSILON * want);
            assert_eq!(a.midpoint().norm(), pow2(-(i as i64)));
            for b in &segs[..i] {
                assert!(segment_distance(a, b) > 1e-12);
            }
        }
        let total: f64 = segs.iter().map(|s| s.length()).sum();
        assert!(total < 1.0);
    }
}

#[test]
fn diamonds_with_one_direction_are_the_segments() {
    let seg = build_saito_set(3, 12).unwrap();
    let dia = build_diamond_set(3, 1, 12).unwrap();
    for (s, t) in seg.pieces.iter().zip(&dia.pieces) {
        assert_eq!(s.directions, t.directions);
        assert_eq!(s.center, t.center);
        assert_eq!(s.half_width, t.half_width);
        assert_eq!(s.vertices(), t.vertices());
    }
}

#[test]
fn diamond_side_lengths() {
    for m in 1..=3 {
        let set = build_diamond_set(3, m, 6).unwrap();
        for p in &set.pieces {
            let side = 2.0 * p.half_width;
            assert_eq!(side, 1.0 / (m as f64 * pow2(p.level as i64 + 1)));
            for v in p.vertices() {
                assert!(v.dist(&p.center) <= pow2(-(p.level as i64) - 2) * (1.0 + 1e-15));
            }
        }
    }
}

#[test]
fn whole_set_is_bounded() {
    for set in [build_saito_set(2, 30).unwrap(), build_diamond_set(3, 3, 20).unwrap()] {
        assert!(set.bounding_radius() <= 1.25);
        for p in set.sample_points(1.0 / 64.0, 1 << 22).unwrap() {
            assert!(p.norm() <= 1.25 + 1e-15);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn samples_lie_on_their_piece(d in 2usize..=3, m in 1usize..=2, depth in 0u64..8, spacing in 0.002f64..0.2) {
        let set = build_diamond_set(d, m, depth).unwrap();
        for p in &set.pieces {
            for q in p.sample(spacing, 1 << 22).unwrap() {
                prop_assert_eq!(set.contains(&q, 1e-15).unwrap(), Some(Membership::Level(p.level)));
            }
        }
        prop_assert_eq!(set.contains(&Point::origin(d), 0.0).unwrap(), Some(Membership::Origin));
    }

    #[test]
    fn samples_form_a_net(depth in 0u64..6, spacing in 0.005f64..0.1, s in -1.0f64..1.0, t in -1.0f64..1.0) {
        // Any point of a piece is within `spacing` of some sample.
        let set = build_diamond_set(2, 2, depth).unwrap();
        let samples = set.sample_points(spacing, 1 << 22).unwrap();
        for p in &set.pieces {
            let q = p.point_at(&[s * p.half_width, t * p.half_width]);
            let near = samples.iter().map(|x| x.dist(&q)).fold(f64::INFINITY, f64::min);
            prop_assert!(near <= spacing);
        }
    }

    #[test]
    fn on_demand_pieces_match_materialized(d in 2usize..=4, depth in 0u64..40) {
        let set = build_saito_set(d, depth).unwrap();
        let layout = SaitoLayout::segments(d).unwrap();
        for p in &set.pieces {
            prop_assert_eq!(&layout.piece(p.level, 0).unwrap(), p);
        }
    }

    #[test]
    fn json_roundtrip(d in 2usize..=3, m in 1usize..=2, depth in 0u64..12, diamonds in any::<bool>()) {
        let set = if diamonds { build_diamond_set(d, m, depth).unwrap() } else { build_saito_set(d, depth).unwrap() };
        let text = to_json(&set).unwrap();
        let back: apk_core::construction::SaitoSet = from_json(&text).unwrap();
        prop_assert_eq!(&back, &set);
        prop_assert_eq!(to_json(&back).unwrap(), text);
    }
}

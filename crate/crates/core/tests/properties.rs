use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use temp_core::sbmp::kdtree::KdIndex;
use temp_core::sbmp::{steer, InformedFrame};
use temp_core::world::{BoxObstacle, Workspace};

fn coord() -> impl Strategy<Value = f64> {
    -2.0..12.0f64
}

fn point(d: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(coord(), d)
}

fn obstacle(d: usize) -> impl Strategy<Value = BoxObstacle<f64>> {
    (prop::collection::vec(1.0..9.0f64, d), prop::collection::vec(0.1..3.0f64, d))
        .prop_map(|(c, h)| BoxObstacle::new(c, h).unwrap())
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

proptest! {
    #[test]
    fn segment_test_is_symmetric_in_2d(b in obstacle(2), p in point(2), q in point(2)) {
        prop_assert_eq!(b.intersects_segment(&p, &q), b.intersects_segment(&q, &p));
    }

    #[test]
    fn segment_test_is_symmetric_in_3d(b in obstacle(3), p in point(3), q in point(3)) {
        prop_assert_eq!(b.intersects_segment(&p, &q), b.intersects_segment(&q, &p));
    }

    #[test]
    fn degenerate_segment_matches_point_test(b in obstacle(2), p in point(2)) {
        prop_assert_eq!(b.intersects_segment(&p, &p), b.contains(&p));
    }

    #[test]
    fn segment_hits_box_when_an_endpoint_is_inside(b in obstacle(3), q in point(3), t in prop::collection::vec(-1.0..1.0f64, 3)) {
        let inside: Vec<f64> = (0..3).map(|i| b.center[i] + 0.99 * t[i] * b.half_extent[i]).collect();
        prop_assert!(b.intersects_segment(&inside, &q));
        prop_assert!(b.intersects_segment(&q, &inside));
    }

    #[test]
    fn segment_hits_box_when_a_midpoint_sample_is_inside(b in obstacle(2), p in point(2), q in point(2)) {
        let any_inside = (0..=200).any(|k| {
            let s = k as f64 / 200.0;
            let x: Vec<f64> = p.iter().zip(&q).map(|(a, c)| a + s * (c - a)).collect();
            b.contains(&x)
        });
        if any_inside {
            prop_assert!(b.intersects_segment(&p, &q));
        }
    }

    #[test]
    fn steer_moves_at_most_one_step_toward_the_target(p in point(3), q in point(3), step in 0.05..3.0f64) {
        let x = steer(&p, &q, step);
        let moved = dist(&p, &x);
        prop_assert!(moved <= step + 1e-12);
        prop_assert!(dist(&x, &q) <= dist(&p, &q) + 1e-12);
        if dist(&p, &q) <= step {
            prop_assert_eq!(x.0, q);
        }
    }

    #[test]
    fn normalization_round_trips(p in prop::collection::vec(0.0..10.0f64, 2)) {
        let ws = Workspace::empty_cube(2, 0.0, 10.0).unwrap();
        let u = ws.normalize(&p);
        prop_assert!(u.iter().all(|v| (-1.0..=1.0).contains(v)));
        let back = ws.denormalize(&u);
        prop_assert!(dist(&back, &p) < 1e-12);
    }

    #[test]
    fn kd_index_matches_brute_force(points in prop::collection::vec(point(2), 1..60), q in point(2)) {
        let mut idx = KdIndex::new(2);
        for p in &points {
            idx.insert(p);
        }
        let (_, d2) = idx.nearest(&q).unwrap();
        let best = points.iter().map(|p| dist(p, &q).powi(2)).fold(f64::INFINITY, f64::min);
        prop_assert!((d2 - best).abs() < 1e-9);
        let r2 = 4.0;
        let mut got = idx.within(&q, r2);
        got.sort();
        let want: Vec<usize> = (0..points.len()).filter(|&i| dist(&points[i], &q).powi(2) <= r2).collect();
        prop_assert_eq!(got, want);
    }

    #[test]
    fn informed_samples_lie_in_the_ellipsoid(a in point(3), b in point(3), slack in 0.01..5.0f64, seed in any::<u64>()) {
        let frame = InformedFrame::new(&a, &b);
        let c_best = frame.c_min() + slack;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..20 {
            let x = frame.sample_unbounded(c_best, &mut rng);
            prop_assert!(dist(&x, &a) + dist(&x, &b) <= c_best + 1e-9);
            prop_assert!(frame.contains(&x, c_best, 1e-9));
        }
    }
}

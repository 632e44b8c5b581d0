use std::path::Path;

use nap_core::dataio::{
    denormalize, format_trajectories, normalize, parse_trajectories, rotate_augment, rotate_point, snap, FrameRecord,
    Point, SequenceSample,
};
use nap_core::eval::{ade, best_of_k_points, fde, HeatmapGeometry, HeatmapGrid};
use nap_core::numeric::{graph_conv, ParamStore, Precision, Tensor};
use proptest::prelude::*;

fn coord() -> impl Strategy<Value = f64> {
    -50.0..50.0f64
}

fn point() -> impl Strategy<Value = Point> {
    (coord(), coord()).prop_map(|(x, y)| [x, y])
}

fn track(len: usize) -> impl Strategy<Value = Vec<Point>> {
    prop::collection::vec(point(), len)
}

fn sample() -> impl Strategy<Value = SequenceSample> {
    (track(8), track(12), prop::collection::vec(prop::collection::vec(point(), 0..4), 8)).prop_map(
        |(obs, fut, neighbors)| SequenceSample {
            scene_id: "s".into(),
            ped_id: 1,
            start_frame: 0,
            obs,
            fut,
            neighbors,
            norm_offset: [0.0, 0.0],
            norm_rotation: 0.0,
        },
    )
}

fn close(a: &[Point], b: &[Point], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(p, q)| (p[0] - q[0]).abs() <= tol && (p[1] - q[1]).abs() <= tol)
}

proptest! {
    #[test]
    fn graph_conv_ignores_neighbor_order_and_self(
        feats in prop::collection::vec(prop::collection::vec(-2.0..2.0f64, 3), 2..7),
        w in prop::collection::vec(-1.0..1.0f64, 12),
        b in prop::collection::vec(-1.0..1.0f64, 4),
        rot in 0usize..6,
        self_feat in prop::collection::vec(-9.0..9.0f64, 3),
    ) {
        let w = Tensor::matrix(4, 3, w).unwrap();
        let b = Tensor::vector(b).unwrap();
        let nodes: Vec<Tensor> = feats.iter().map(|f| Tensor::vector(f.clone()).unwrap()).collect();
        let base = graph_conv(0, &nodes, &w, &b).unwrap();

        // rotate the neighbours, keep node 0 as self
        let mut others = nodes[1..].to_vec();
        let r = rot % others.len();
        others.rotate_left(r);
        let mut permuted = vec![Tensor::vector(self_feat).unwrap()];
        permuted.extend(others);
        let moved = graph_conv(0, &permuted, &w, &b).unwrap();
        prop_assert!(base.max_abs_diff(&moved) < 1e-12);

        // self at the end
        let mut tail = nodes[1..].to_vec();
        tail.push(nodes[0].clone());
        let last = graph_conv(tail.len() - 1, &tail, &w, &b).unwrap();
        prop_assert!(base.max_abs_diff(&last) < 1e-12);
    }

    #[test]
    fn best_of_k_is_monotone_and_order_free(
        gt in track(6),
        samples in prop::collection::vec(track(6), 1..6),
        extra in track(6),
        shift in 0usize..6,
    ) {
        let (a, f) = best_of_k_points(&samples, &gt).unwrap();
        for s in &samples {
            prop_assert!(a <= ade(s, &gt).unwrap());
            prop_assert!(f <= fde(s, &gt).unwrap());
        }
        prop_assert!(samples.iter().any(|s| ade(s, &gt).unwrap() == a));
        prop_assert!(samples.iter().any(|s| fde(s, &gt).unwrap() == f));

        let mut rotated = samples.clone();
        let r = shift % rotated.len();
        rotated.rotate_left(r);
        prop_assert_eq!(best_of_k_points(&rotated, &gt).unwrap(), (a, f));

        let mut more = samples.clone();
        more.push(extra);
        let (a2, f2) = best_of_k_points(&more, &gt).unwrap();
        prop_assert!(a2 <= a && f2 <= f);
    }

    #[test]
    fn errors_are_invariant_under_rigid_motion(
        pred in track(10),
        gt in track(10),
        angle in -3.2..3.2f64,
        t in point(),
    ) {
        let (sin, cos) = angle.sin_cos();
        let mv = |p: &Point| {
            let q = rotate_point(*p, sin, cos);
            [q[0] + t[0], q[1] + t[1]]
        };
        let pm: Vec<Point> = pred.iter().map(mv).collect();
        let gm: Vec<Point> = gt.iter().map(mv).collect();
        prop_assert!((ade(&pred, &gt).unwrap() - ade(&pm, &gm).unwrap()).abs() < 1e-9);
        prop_assert!((fde(&pred, &gt).unwrap() - fde(&pm, &gm).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn normalization_round_trips(s in sample(), steps in -12i32..12) {
        let n = normalize(&s);
        prop_assert_eq!(*n.obs.last().unwrap(), [0.0, 0.0]);
        prop_assert!(close(&denormalize(&n).obs, &s.obs, 1e-9));

        let angle = steps as f64 * 15f64.to_radians();
        let crop = Tensor::zeros(&[1, 4, 4]);
        let (r, _) = rotate_augment(&n, &crop, angle).unwrap();
        let back = denormalize(&r);
        prop_assert!(close(&back.obs, &s.obs, 1e-9));
        prop_assert!(close(&back.fut, &s.fut, 1e-9));
        for (x, y) in back.neighbors.iter().zip(&s.neighbors) {
            prop_assert!(close(x, y, 1e-9));
        }
        // distances to the truth do not depend on the frame
        prop_assert!((ade(&r.obs, &r.fut[..8]).unwrap() - ade(&s.obs, &s.fut[..8]).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn clipping_bounds_the_norm_and_keeps_direction(
        g in prop::collection::vec(-100.0..100.0f64, 1..20),
        max in 0.01..50.0f64,
    ) {
        let mut store = ParamStore::new(Precision::F64);
        let id = store.insert_zeros("w", &[g.len()]).unwrap();
        let mut grads = store.zero_gradients();
        grads.get_mut(id).copy_from_slice(&g);
        let before = grads.global_norm();
        prop_assert_eq!(grads.clip_global_norm(max), before);
        let after = grads.global_norm();
        prop_assert!(after <= max * (1.0 + 1e-12));
        prop_assert!(after <= before * (1.0 + 1e-12));
        if before > 0.0 && after > 0.0 {
            let scale = after / before;
            for (x, y) in grads.get(id).iter().zip(&g) {
                prop_assert!((x - y * scale).abs() <= 1e-9 * (1.0 + y.abs()));
            }
        }
    }

    #[test]
    fn heatmaps_conserve_points(
        points in prop::collection::vec((-1e3..1e3f64, -1e3..1e3f64).prop_map(|(x, y)| [x, y]), 0..200),
        center in point(),
        size in 1usize..12,
        cell in 0.05..2.0f64,
    ) {
        let geo = HeatmapGeometry::centered(center, size, cell);
        let grid = HeatmapGrid::from_points(geo, points.iter()).unwrap();
        prop_assert_eq!(grid.total(), points.len() as u64);
        prop_assert_eq!(grid.counts.len(), size * size);
        if !points.is_empty() {
            let d: f64 = grid.density().iter().sum();
            prop_assert!((d - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn trajectory_text_round_trips(
        rows in prop::collection::btree_map((0i64..500, 0i64..50), (coord(), coord()), 0..40),
    ) {
        let records: Vec<FrameRecord> = rows
            .iter()
            .map(|(&(frame_id, ped_id), &(x, y))| FrameRecord { frame_id, ped_id, x: snap(x), y: snap(y) })
            .collect();
        let text = format_trajectories(&records, &["header".into()]);
        let back = parse_trajectories(&text, Path::new("mem"), None).unwrap();
        prop_assert_eq!(back, records);
    }
}

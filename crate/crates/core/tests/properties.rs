use nalgebra::{Matrix3, Rotation3, Unit};
use proptest::prelude::*;

use knotsaw_core::detection::{evaluate_map, iou, KnotDetection};
use knotsaw_core::heightmap::{build_heightmap, grid_io, HeightMap, HeightMapParams};
use knotsaw_core::registration::RigidTransform;
use knotsaw_core::sawopt::{corner_angles, optimize_angle, pattern_function, KnotFunction, SawingPattern};
use knotsaw_core::sawsim::{saw_report, SawParams};
use knotsaw_core::synthgen::{generate_log, render_point_cloud, GenParams};
use knotsaw_core::{circular_distance_deg, wrap_deg, PointCloud, Vec3};

fn det(cells: Vec<(usize, usize)>, score: f64) -> KnotDetection {
    KnotDetection::from_cells(cells, score, 16, 16, 150.0)
}

fn cells() -> impl Strategy<Value = Vec<(usize, usize)>> {
    prop::collection::vec((0usize..16, 0usize..16), 1..12)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn wrapped_angles_stay_in_range(t in -1e6f64..1e6) {
        let w = wrap_deg(t);
        prop_assert!((0.0..360.0).contains(&w));
        prop_assert!(circular_distance_deg(w, t) < 1e-6);
    }

    #[test]
    fn iou_is_symmetric_and_bounded(a in cells(), b in cells()) {
        let (da, db) = (det(a, 1.0), det(b, 1.0));
        let v = iou(&da.cells, &db.cells);
        prop_assert_eq!(v, iou(&db.cells, &da.cells));
        prop_assert!((0.0..=1.0).contains(&v));
        prop_assert_eq!(iou(&da.cells, &da.cells), 1.0);
    }

    #[test]
    fn map_ignores_score_scale(
        preds in prop::collection::vec((cells(), 0.01f64..1.0), 0..8),
        gts in prop::collection::vec(cells(), 0..6),
        k in 0.1f64..10.0,
    ) {
        let gt: Vec<_> = gts.into_iter().map(|c| det(c, 1.0)).collect();
        let p: Vec<_> = preds.iter().map(|(c, s)| det(c.clone(), *s)).collect();
        let q: Vec<_> = preds.iter().map(|(c, s)| det(c.clone(), s * k)).collect();
        let (a, b) = (evaluate_map(&p, &gt, 0.1), evaluate_map(&q, &gt, 0.1));
        prop_assert_eq!(a.map, b.map);
        prop_assert_eq!(a.matches, b.matches);
        prop_assert!((0.0..=1.0).contains(&a.map));
    }

    #[test]
    fn optimum_ignores_power_of_two_scale(
        samples in prop::collection::vec(0.0f64..1.0, 360),
        e in -20i32..20,
        sigma in 1.0f64..10.0,
    ) {
        let corners = corner_angles(&SawingPattern::two_board_square(160.0)).unwrap();
        let fp = pattern_function(&corners, sigma, 1.0).unwrap();
        let a = optimize_angle(&KnotFunction::from_samples(samples.clone()), &fp, 1.0).unwrap();
        let scaled = samples.iter().map(|v| v * 2f64.powi(e)).collect();
        let b = optimize_angle(&KnotFunction::from_samples(scaled), &fp, 1.0).unwrap();
        prop_assert_eq!(a.angle_deg, b.angle_deg);
        prop_assert!(a.angle_deg < a.symmetry_period);
    }

    #[test]
    fn transform_inverse_round_trips(
        axis in (-1.0f64..1.0, -1.0f64..1.0, 0.1f64..1.0),
        deg in -180.0f64..180.0,
        t in (-100.0f64..100.0, -100.0f64..100.0, -100.0f64..100.0),
        s in 0.01f64..100.0,
        p in (-50.0f64..50.0, -50.0f64..50.0, -50.0f64..50.0),
    ) {
        let r: Matrix3<f64> = *Rotation3::from_axis_angle(
            &Unit::new_normalize(Vec3::new(axis.0, axis.1, axis.2)),
            deg.to_radians(),
        )
        .matrix();
        let tr = RigidTransform::new(r, Vec3::new(t.0, t.1, t.2), s).unwrap();
        let p = Vec3::new(p.0, p.1, p.2);
        let back = tr.inverse().apply(&tr.apply(&p));
        prop_assert!((back - p).norm() <= 1e-9 * (1.0 + p.norm() + Vec3::new(t.0, t.1, t.2).norm() / s));
    }
}

#[test]
fn height_map_rotates_with_the_cloud() {
    let gen = GenParams {
        length: 1200.0,
        seed: 7,
        points_per_mm2: 0.05,
        ..GenParams::default()
    };
    let log = generate_log(&gen).unwrap();
    let cloud = render_point_cloud(&log, &gen).unwrap();
    let shift = 25;
    let rot = Rotation3::from_axis_angle(&Vec3::z_axis(), (shift as f64).to_radians());
    let rotated = PointCloud::new(cloud.points.iter().map(|p| rot * p).collect());
    let params = HeightMapParams::default();
    let (a, _) = build_heightmap(&cloud, &params).unwrap();
    let (b, _) = build_heightmap(&rotated, &params).unwrap();
    let tol = 1e-3 * a.mean();
    let diff = a
        .shift_columns(shift)
        .values
        .iter()
        .zip(&b.values)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    assert!(diff <= tol, "max difference {diff} above {tol}");
}

#[test]
fn half_turn_of_a_two_fold_pattern_keeps_the_report() {
    let log = generate_log(&GenParams { seed: 11, ..GenParams::default() }).unwrap();
    let pattern = SawingPattern::two_board_square(160.0);
    let params = SawParams::default();
    for angle in [0.0, 17.0, 64.0, 133.0] {
        let a = saw_report(&log, &pattern, angle, &params).unwrap();
        let b = saw_report(&log, &pattern, angle + 180.0, &params).unwrap();
        assert_eq!(a.arris_count, b.arris_count, "angle {angle}");
        assert_eq!(a.total_count, b.total_count, "angle {angle}");
        assert!((a.arris_area_dm2 - b.arris_area_dm2).abs() <= 0.02 * a.arris_area_dm2.max(0.01));
    }
}

#[test]
fn height_map_file_round_trip() {
    let mut m = HeightMap::constant(36, 5, 40.0, 0.0);
    for (i, v) in m.values.iter_mut().enumerate() {
        *v = 100.0 + (i as f64).sqrt() / 7.0;
    }
    let mut buf = Vec::new();
    m.write(&mut buf).unwrap();
    let back = HeightMap::read(buf.as_slice()).unwrap();
    assert_eq!(back.values, m.values);
    assert!(grid_io::read_grid("PMAP v1", buf.as_slice()).is_err());
}

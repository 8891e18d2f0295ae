//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.

use std::collections::BTreeMap;
use std::time::Instant;

use nalgebra::{Matrix3, Rotation3, Unit};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use knotsaw_core::detection::{
    evaluate_many, evaluate_map, extract_detections, log_detect, KnotDetection, LogParams, DEFAULT_IOU_THRESHOLD,
    DEFAULT_MIN_AREA_CELLS, LOG_BINARIZE_AT,
};
use knotsaw_core::heightmap::{
    build_heightmap, default_l_bins, fit_heightmap, Centerline, CylindricalSample, FitParams, HeightMap, HeightMapParams,
};
use knotsaw_core::registration::{register, IcpParams};
use knotsaw_core::sawopt::{
    corner_angles, knot_function, optimize_angle, pattern_function, Board, KnotFunction, SawingPattern,
};
use knotsaw_core::sawsim::{all_angle_baseline, improvement_report, saw_report, KnotClass, SawParams};
use knotsaw_core::synthgen::{
    generate_log, ground_truth_mask, ground_truth_pmap, render_point_cloud, GenParams, GroundTruthKnot, VirtualLog,
};
use knotsaw_core::{wrap_deg, Execution, PointCloud, Vec3};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(checks: &[(bool, String)]) -> Outcome {
    Outcome {
        pass: checks.iter().all(|c| c.0),
        detail: checks
            .iter()
            .map(|(ok, s)| format!("{s}{}", if *ok { "" } else { " [failed]" }))
            .collect::<Vec<_>>()
            .join("; "),
    }
}

// ---------------------------------------------------------------- sawing batch

fn sawing_batch() -> Outcome {
    let start = Instant::now();
    let pattern = SawingPattern::two_board_square(160.0);
    let corners = corner_angles(&pattern).unwrap();
    let params = SawParams::default();
    let (mut opt_count, mut base_count, mut opt_area, mut base_area) = (0.0, 0.0, 0.0, 0.0);
    let (mut count_changes, mut area_changes) = (Vec::new(), Vec::new());
    let mut not_worse = 0;
    let n = 50;
    for seed in 1..=n {
        let log = generate_log(&GenParams { seed, ..GenParams::default() }).unwrap();
        let pmap = ground_truth_pmap(&log, 360, default_l_bins(log.length));
        let fk = knot_function(&pmap);
        let sigma = log.mean_angular_halfwidth().unwrap_or(5.0);
        let fp = pattern_function(&corners, sigma, 1.0).unwrap();
        let best = optimize_angle(&fk, &fp, 1.0).unwrap();
        let report = saw_report(&log, &pattern, best.angle_deg, &params).unwrap();
        let base = all_angle_baseline(&log, &pattern, 1.0, &params, Execution::Parallel).unwrap();
        let imp = improvement_report(&report, &base);
        opt_count += report.arris_count as f64;
        base_count += base.mean_arris_count;
        opt_area += report.arris_area_dm2;
        base_area += base.mean_arris_area_dm2;
        count_changes.extend(imp.count_change);
        area_changes.extend(imp.area_change);
        if report.arris_count as f64 <= base.mean_arris_count {
            not_worse += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let pooled_count = 1.0 - opt_count / base_count;
    let pooled_area = 1.0 - opt_area / base_area;
    let mean_red = |v: &[f64]| -v.iter().sum::<f64>() / v.len() as f64;
    let (log_count, log_area) = (mean_red(&count_changes), mean_red(&area_changes));
    let frac = not_worse as f64 / n as f64;
    outcome(&[
        (
            pooled_count >= 0.15 && log_count >= 0.15,
            format!(
                "arris count -{:.1}% (per-log mean -{:.1}%)",
                100.0 * pooled_count,
                100.0 * log_count
            ),
        ),
        (
            pooled_area >= 0.15 && log_area >= 0.15,
            format!("arris area -{:.1}% (per-log mean -{:.1}%)", 100.0 * pooled_area, 100.0 * log_area),
        ),
        (frac >= 0.9, format!("{:.0}% of logs at or below their mean", 100.0 * frac)),
        (secs <= 120.0, format!("{secs:.1} s")),
    ])
}

// ---------------------------------------------------------- optimizer oracle

/// Corner angles with exact `k`-fold rotational symmetry.
fn symmetric_corners(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    let base: Vec<f64> = (0..rng.random_range(1..=4))
        .map(|_| rng.random_range(0.0..360.0 / k as f64))
        .collect();
    (0..k)
        .flat_map(|i| base.iter().map(move |a| wrap_deg(a + i as f64 * 360.0 / k as f64)))
        .collect()
}

fn random_knot_samples(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    match rng.random_range(0..4) {
        0 => (0..n).map(|_| rng.random_range(0.0..1.0)).collect(),
        1 => {
            let mut v = vec![0.0; n];
            for _ in 0..rng.random_range(1..8) {
                let c = rng.random_range(0..n);
                let w = rng.random_range(2..12) as isize;
                for d in -w..=w {
                    v[(c as isize + d).rem_euclid(n as isize) as usize] += 1.0 - (d.abs() as f64) / (w as f64 + 1.0);
                }
            }
            v
        }
        2 => vec![0.0; n],
        _ => vec![1.0; n],
    }
}

fn brute_force_argmin(fk: &[f64], fp: &[f64], stride: usize, delta: f64, period_deg: f64, step: f64) -> (f64, f64) {
    let n = fk.len();
    let mut best: Option<(usize, f64)> = None;
    let mut m = 0;
    while m < n {
        let angle = (m / stride) as f64 * step;
        if angle < period_deg - 1e-9 {
            let rotated: Vec<f64> = fk.iter().cycle().skip(m).take(n).copied().collect();
            let mut c = 0.0;
            for (a, b) in rotated.iter().zip(fp) {
                c += a * b;
            }
            let c = c * delta;
            if best.is_none_or(|(_, v)| c < v) {
                best = Some((m, c));
            }
        }
        m += stride;
    }
    let (m, c) = best.unwrap();
    ((m / stride) as f64 * step, c)
}

fn optimizer_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut mismatches = Vec::new();
    for case in 0..100 {
        let k = [1, 2, 4][case % 3];
        let corners = symmetric_corners(&mut rng, k);
        let sigma = rng.random_range(1.0..12.0);
        let step = [1.0, 2.0, 3.0, 5.0][rng.random_range(0..4)];
        let fp = pattern_function(&corners, sigma, 1.0).unwrap();
        let fk = KnotFunction::from_samples(random_knot_samples(&mut rng, 360));
        let got = optimize_angle(&fk, &fp, step).unwrap();
        let want = brute_force_argmin(&fk.samples, &fp.samples, step as usize, 1.0, 360.0 / k as f64, step);
        if got.angle_deg != want.0 || got.objective != want.1 || fp.symmetry_order != k {
            mismatches.push(case);
        }
    }
    outcome(&[(
        mismatches.is_empty(),
        if mismatches.is_empty() {
            "100 random pairs, 0 mismatches".to_string()
        } else {
            format!("100 random pairs, {} mismatches in cases {:?}", mismatches.len(), mismatches)
        },
    )])
}

// --------------------------------------------------------- height-map fidelity

fn uniform_samples(n: usize, seed: u64, rho: impl Fn(f64, f64) -> f64) -> Vec<CylindricalSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let theta = rng.random_range(0.0..360.0);
            let l = rng.random_range(0.0..1000.0);
            CylindricalSample {
                theta,
                rho: rho(theta, l),
                l,
            }
        })
        .collect()
}

fn fit(samples: &[CylindricalSample], lambda: f64) -> HeightMap {
    fit_heightmap(
        samples,
        &FitParams {
            theta_bins: 360,
            l_bins: 101,
            lambda,
            l_extent: Some(1000.0),
            ..FitParams::default()
        },
    )
    .unwrap()
}

fn heightmap_fidelity() -> Outcome {
    let r = 100.0;
    let cyl = fit(&uniform_samples(200_000, 3, |_, _| r), 0.1);
    let max_dev = cyl.values.iter().map(|v| (v - r).abs()).fold(0.0, f64::max);

    // Gaussian bump of 5 mm with a 15 mm standard deviation on the surface.
    let (h, sd) = (5.0, 15.0);
    let bump = fit(
        &uniform_samples(200_000, 4, |t, l| {
            let arc = knotsaw_core::circular_distance_deg(t, 180.0).to_radians() * r;
            r + h * (-(arc * arc + (l - 500.0) * (l - 500.0)) / (2.0 * sd * sd)).exp()
        }),
        0.01,
    );
    let (imax, vmax) = bump
        .values
        .iter()
        .enumerate()
        .fold((0, f64::MIN), |b, (i, &v)| if v > b.1 { (i, v) } else { b });
    let (row, col) = (imax / bump.theta_bins, imax % bump.theta_bins);
    let cell_off = (bump.l_of(row) - 500.0).abs() / bump.delta_l() + 0.0;
    let col_off = knotsaw_core::circular_distance_deg(bump.theta_of(col), 180.0) / bump.delta_theta();
    let peak = vmax - r;
    outcome(&[
        (max_dev <= 1e-4 * r, format!("cylinder max |f-R| = {max_dev:.2e}")),
        (
            cell_off <= 1.0 && col_off <= 1.0,
            format!("bump peak at ({:.0} deg, {:.0} mm)", bump.theta_of(col), bump.l_of(row)),
        ),
        (
            (0.8 * h..=1.1 * h).contains(&peak),
            format!("bump height {peak:.3} mm of {h}"),
        ),
    ])
}

// ---------------------------------------------------------------- registration

/// Knobbly anisotropic surface: no rotational symmetry for ICP to slide along.
fn test_surface(n: usize, seed: u64) -> PointCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pts = (0..n)
        .map(|_| {
            let z: f64 = rng.random_range(-1.0..1.0);
            let t: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            let s = (1.0 - z * z).sqrt();
            let bulge = 1.0 + 0.15 * (3.0 * t).sin() * s;
            Vec3::new(3.0 * s * t.cos() * bulge, 1.8 * s * t.sin(), 0.9 * z + 0.2 * (s * t.cos()).powi(2))
        })
        .collect();
    PointCloud::new(pts)
}

fn rotation(axis: Vec3, deg: f64) -> Matrix3<f64> {
    *Rotation3::from_axis_angle(&Unit::new_normalize(axis), deg.to_radians()).matrix()
}

/// Angle of `aᵀb`, from the Frobenius distance `‖a − b‖ = 2√2·sin(θ/2)`,
/// which stays accurate for tiny angles.
fn rotation_error(a: &Matrix3<f64>, b: &Matrix3<f64>) -> f64 {
    2.0 * ((a - b).norm() / 8f64.sqrt()).min(1.0).asin()
}

fn registration_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut histories_ok = true;
    let mut worst = 0.0f64;
    for case in 0..6 {
        let src = test_surface(4000, 10 + case);
        let axis = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let deg = 5.0 + 5.0 * case as f64;
        let rot = rotation(axis, deg);
        let shift = Vec3::new(12.0, -3.0, 7.5);
        let tgt = PointCloud::new(src.points.iter().map(|p| rot * p + shift).collect());
        let reg = register(&src, &tgt, &IcpParams::default()).unwrap();
        histories_ok &= reg.icp.mse_history.windows(2).all(|w| w[1] <= w[0]);
        worst = worst.max(rotation_error(&reg.transform.rotation, &rot));
    }

    // 50% subsample, 15 degrees, jitter sigma 0.002 in normalized units.
    let sigma = 0.002;
    let (src, _) = knotsaw_core::registration::normalize(&test_surface(20_000, 30)).unwrap();
    let keep = sample(&mut rng, src.len(), src.len() / 2).into_vec();
    let rot = rotation(Vec3::new(0.3, -0.5, 1.0), 15.0);
    let noise = Normal::new(0.0, sigma).unwrap();
    let tgt_pts: Vec<Vec3> = keep
        .iter()
        .map(|&i| rot * src.points[i] + Vec3::from_fn(|_, _| noise.sample(&mut rng)))
        .collect();
    let tgt = PointCloud::new(tgt_pts.clone());
    let reg = register(&src, &tgt, &IcpParams::default()).unwrap();
    histories_ok &= reg.icp.mse_history.windows(2).all(|w| w[1] <= w[0]);
    let mse = keep
        .iter()
        .zip(&tgt_pts)
        .map(|(&i, q)| (reg.transform.apply(&src.points[i]) - q).norm_squared())
        .sum::<f64>()
        / keep.len() as f64;
    let rms = mse.sqrt();
    outcome(&[
        (worst <= 1e-6, format!("noise-free rotations up to 30 deg, worst error {worst:.1e} rad")),
        (rms <= 2.5 * sigma, format!("noisy subsampled RMS {rms:.4} (sigma {sigma})")),
        (histories_ok, "MSE non-increasing on every run".to_string()),
    ])
}

// ------------------------------------------------------------------- mAP oracle

fn mask(cells: Vec<(usize, usize)>, score: f64) -> KnotDetection {
    KnotDetection::from_cells(cells, score, 12, 12, 110.0)
}

fn cell_iou(a: &[(usize, usize)], b: &[(usize, usize)]) -> f64 {
    let inter = a.iter().filter(|c| b.contains(c)).count();
    let union = a.len() + b.len() - inter;
    inter as f64 / union as f64
}

/// Greedy matching and all-point AP written out independently: AP is the mean
/// over ground truths of the best precision at or after the rank where each is
/// recalled.
fn brute_force_ap(preds: &[KnotDetection], gt: &[KnotDetection], thr: f64) -> f64 {
    if gt.is_empty() {
        return if preds.is_empty() { 1.0 } else { 0.0 };
    }
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| preds[b].score.partial_cmp(&preds[a].score).unwrap().then(a.cmp(&b)));
    let mut used = vec![false; gt.len()];
    let mut hits = Vec::new();
    for &p in &order {
        let cand = (0..gt.len())
            .filter(|&g| !used[g])
            .map(|g| (g, cell_iou(&preds[p].cells, &gt[g].cells)))
            .filter(|&(_, v)| v >= thr)
            .fold(None::<(usize, f64)>, |b, c| match b {
                Some(bb) if bb.1 >= c.1 => Some(bb),
                _ => Some(c),
            });
        if let Some((g, _)) = cand {
            used[g] = true;
        }
        hits.push(cand.is_some());
    }
    let precisions: Vec<f64> = (0..hits.len())
        .map(|k| hits[..=k].iter().filter(|&&h| h).count() as f64 / (k + 1) as f64)
        .collect();
    let mut ap = 0.0;
    for k in 0..hits.len() {
        if hits[k] {
            ap += precisions[k..].iter().cloned().fold(0.0, f64::max) / gt.len() as f64;
        }
    }
    ap
}

fn random_mask(rng: &mut ChaCha8Rng) -> Vec<(usize, usize)> {
    let (r0, c0) = (rng.random_range(0..9), rng.random_range(0..9));
    let (h, w) = (rng.random_range(1..4), rng.random_range(1..4));
    let mut cells = Vec::new();
    for r in r0..r0 + h {
        for c in c0..c0 + w {
            if rng.random_bool(0.85) {
                cells.push((r, c));
            }
        }
    }
    if cells.is_empty() {
        cells.push((r0, c0));
    }
    cells
}

fn map_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let gt: Vec<_> = (0..rng.random_range(0..=10)).map(|_| mask(random_mask(&mut rng), 1.0)).collect();
        let preds: Vec<_> = (0..rng.random_range(0..=20))
            .map(|_| {
                // coarse scores so ties occur
                let score = rng.random_range(1..=6) as f64 / 6.0;
                mask(random_mask(&mut rng), score)
            })
            .collect();
        let got = evaluate_map(&preds, &gt, DEFAULT_IOU_THRESHOLD).map;
        worst = worst.max((got - brute_force_ap(&preds, &gt, DEFAULT_IOU_THRESHOLD)).abs());
    }

    // GT1 is 10 cells, GT2 20 cells; IoUs 0.5, 0.05 and 0.3 by construction.
    let gt1: Vec<_> = (0..10).map(|c| (0, c)).collect();
    let gt2: Vec<_> = (0..10).flat_map(|c| [(4, c), (5, c)]).collect();
    let p1: Vec<_> = (0..10).flat_map(|c| [(0, c), (1, c)]).collect();
    let p2 = vec![(4, 0)];
    let p3: Vec<_> = (0..6).map(|c| (5, c)).collect();
    let ious = [cell_iou(&p1, &gt1), cell_iou(&p2, &gt2), cell_iou(&p3, &gt2)];
    let hand = evaluate_map(
        &[mask(p1, 0.9), mask(p2, 0.8), mask(p3, 0.7)],
        &[mask(gt1, 1.0), mask(gt2, 1.0)],
        DEFAULT_IOU_THRESHOLD,
    )
    .map;
    outcome(&[
        (worst <= 1e-12, format!("50 random instances, max |diff| {worst:.1e}")),
        (ious == [0.5, 0.05, 0.3], format!("hand IoUs {ious:?}")),
        ((hand - 5.0 / 6.0).abs() <= 1e-9, format!("hand case {hand:.6}")),
    ])
}

// ------------------------------------------------------- detection round trip

fn detection_batch(noise: f64) -> (Vec<(Vec<KnotDetection>, Vec<KnotDetection>)>, Vec<Vec<f64>>) {
    let mut logs = Vec::new();
    let mut heights = Vec::new();
    for seed in 1..=10 {
        let gen = GenParams {
            seed,
            surface_noise_sigma: noise,
            ..GenParams::default()
        };
        let log = generate_log(&gen).unwrap();
        let cloud = render_point_cloud(&log, &gen).unwrap();
        let (hmap, _) = build_heightmap(&cloud, &HeightMapParams::default()).unwrap();
        let pmap = log_detect(&hmap, &LogParams::default()).unwrap();
        let preds = extract_detections(&pmap, DEFAULT_MIN_AREA_CELLS, LOG_BINARIZE_AT);
        let gt = ground_truth_mask(&log, hmap.theta_bins, hmap.l_bins);
        heights.push(log.knots.iter().map(|k| k.bump_height).collect());
        logs.push((preds, gt));
    }
    (logs, heights)
}

fn detection_round_trip() -> Outcome {
    let (clean, heights) = detection_batch(0.0);
    let (mut found, mut total) = (0, 0);
    for ((preds, gt), h) in clean.iter().zip(&heights) {
        let rep = evaluate_map(preds, gt, DEFAULT_IOU_THRESHOLD);
        let eligible: Vec<bool> = h.iter().map(|&v| v >= 2.0).collect();
        total += eligible.iter().filter(|&&e| e).count();
        found += rep.matches.iter().filter(|m| eligible[m.ground_truth]).count();
    }
    let recall = found as f64 / total as f64;
    let (noisy, _) = detection_batch(0.5);
    let map = evaluate_many(&noisy, DEFAULT_IOU_THRESHOLD).1.map;
    outcome(&[
        (recall >= 0.9, format!("noise-free recall {found}/{total} = {:.1}%", 100.0 * recall)),
        (map >= 0.6, format!("noise 0.5 mm mAP {map:.3}")),
    ])
}

// ------------------------------------------------------------ voxel oracle

fn single_knot_log(theta: f64, l: f64, b: f64) -> VirtualLog {
    let (length, r) = (1000.0, 150.0);
    VirtualLog {
        pith: Centerline::new(vec![Vec3::zeros(), Vec3::new(0.0, 0.0, length)]).unwrap(),
        length,
        butt_radius: r,
        top_radius: r,
        knots: vec![GroundTruthKnot {
            id: 0,
            l_pos: l,
            theta_pos: theta,
            base_radius: b,
            apex_radius: 0.0,
            bump_height: 3.0,
            angular_halfwidth: (b / r).asin().to_degrees(),
        }],
        seed: 0,
    }
}

/// Classifies the knot on every board from 1 mm voxels in the outermost layer
/// of each long face. The board is rotated into the log frame instead of the
/// log into the board frame.
fn voxel_classes(log: &VirtualLog, pattern: &SawingPattern, angle: f64, band: f64) -> BTreeMap<usize, (KnotClass, f64)> {
    let k = &log.knots[0];
    let (ca, sa) = (angle.to_radians().cos(), angle.to_radians().sin());
    let (ct, st) = (k.theta_pos.to_radians().cos(), k.theta_pos.to_radians().sin());
    let surface = log.radius_at(k.l_pos);
    let inside = |x: f64, y: f64, z: f64| {
        let (lx, ly) = (ca * x - sa * y, sa * x + ca * y);
        if lx.hypot(ly) > log.radius_at(z) {
            return false;
        }
        let dz = z - k.l_pos;
        let s = lx * ct + ly * st;
        if s < 0.0 {
            return false;
        }
        let radial2 = lx * lx + ly * ly + dz * dz - s * s;
        let rad = k.apex_radius + (k.base_radius - k.apex_radius) * s / surface;
        radial2 <= rad * rad
    };
    let mut out = BTreeMap::new();
    for (id, b) in pattern.boards.iter().enumerate() {
        let Board { cx, cy, w, h } = *b;
        let (x0, y0) = (cx - w / 2.0, cy - h / 2.0);
        // (width, narrow?, point at offset u along the face)
        let faces: [(f64, bool, Box<dyn Fn(f64) -> (f64, f64)>); 4] = [
            (w, w < h, Box::new(move |u| (x0 + u, y0 + 0.5))),
            (w, w < h, Box::new(move |u| (x0 + u, y0 + h - 0.5))),
            (h, h < w, Box::new(move |u| (x0 + 0.5, y0 + u))),
            (h, h < w, Box::new(move |u| (x0 + w - 0.5, y0 + u))),
        ];
        let (mut cells, mut arris, mut narrow) = (0usize, false, false);
        for (width, is_narrow, at) in &faces {
            for i in 0..width.round() as usize {
                let u = i as f64 + 0.5;
                let (x, y) = at(u);
                for zi in (k.l_pos - 2.0 * k.base_radius).floor().max(0.0) as usize
                    ..((k.l_pos + 2.0 * k.base_radius).ceil() as usize).min(log.length as usize)
                {
                    if inside(x, y, zi as f64 + 0.5) {
                        cells += 1;
                        narrow |= *is_narrow;
                        arris |= u <= band || u >= width - band;
                    }
                }
            }
        }
        if cells > 0 {
            let class = if arris {
                KnotClass::Arris
            } else if narrow {
                KnotClass::Edge
            } else {
                KnotClass::Face
            };
            out.insert(id, (class, cells as f64));
        }
    }
    out
}

fn voxel_cross_check() -> Outcome {
    let pattern = SawingPattern::two_board_square(160.0);
    let params = SawParams::default();
    // (theta, l, base radius, sawing angle). Apex radius is zero as in
    // generated logs, and every knot axis stays at least 15 degrees from the
    // shared board face through the pith so no case is a grazing section.
    let cases = [
        (90.0, 500.0, 15.0, 0.0),
        (270.0, 400.0, 12.0, 0.0),
        (45.0, 500.0, 15.0, 0.0),
        (135.0, 600.0, 18.0, 0.0),
        (25.0, 500.0, 15.0, 0.0),
        (205.0, 300.0, 10.0, 0.0),
        (70.0, 500.0, 14.0, 0.0),
        (110.0, 700.0, 20.0, 0.0),
        (250.0, 500.0, 16.0, 0.0),
        (315.0, 550.0, 13.0, 0.0),
        (90.0, 500.0, 15.0, 30.0),
        (120.0, 450.0, 17.0, 75.0),
        (200.0, 500.0, 11.0, 160.0),
        (300.0, 350.0, 19.0, 10.0),
        (50.0, 650.0, 15.0, 20.0),
        (160.0, 500.0, 12.0, 117.0),
        (225.0, 800.0, 14.0, 0.0),
        (30.0, 250.0, 16.0, 0.0),
        (60.0, 500.0, 15.0, 213.0),
        (340.0, 600.0, 18.0, 301.0),
    ];
    let mut failures = Vec::new();
    let mut worst_area = 0.0f64;
    let mut classes = BTreeMap::new();
    for (i, &(theta, l, b, angle)) in cases.iter().enumerate() {
        let log = single_knot_log(theta, l, b);
        let report = saw_report(&log, &pattern, angle, &params).unwrap();
        let analytic: BTreeMap<usize, (KnotClass, f64)> = report
            .appearances
            .iter()
            .map(|a| (a.board_id, (a.classification, a.area_mm2)))
            .collect();
        let voxel = voxel_classes(&log, &pattern, angle, params.arris_band_mm);
        let same_boards = analytic.keys().eq(voxel.keys());
        let mut ok = same_boards;
        for (board, (class, area)) in &analytic {
            if let Some((vc, va)) = voxel.get(board) {
                let rel = (area - va).abs() / va;
                worst_area = worst_area.max(rel);
                ok &= class == vc && rel <= 0.10;
                *classes.entry(format!("{class}")).or_insert(0) += 1;
            }
        }
        if !ok {
            failures.push(format!("case {i}: analytic {analytic:?} voxel {voxel:?}"));
        }
    }
    outcome(&[
        (
            failures.is_empty(),
            if failures.is_empty() {
                format!("20 single-knot cases agree, appearances {classes:?}")
            } else {
                failures.join(", ")
            },
        ),
        (worst_area <= 0.10, format!("worst area difference {:.1}%", 100.0 * worst_area)),
    ])
}

// ------------------------------------------------------- symmetry, invariance

fn symmetry_and_invariance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);

    // Objective periodicity for 2- and 4-fold patterns.
    let square = SawingPattern {
        name: "square".into(),
        boards: vec![Board {
            cx: 0.0,
            cy: 0.0,
            w: 150.0,
            h: 150.0,
        }],
    };
    let mut worst_period = 0.0f64;
    for (pattern, k) in [(SawingPattern::two_board_square(160.0), 2), (square, 4)] {
        let fp = pattern_function(&corner_angles(&pattern).unwrap(), 6.0, 1.0).unwrap();
        let ok_order = fp.symmetry_order == k;
        for _ in 0..10 {
            let fk = KnotFunction::from_samples(random_knot_samples(&mut rng, 360));
            let curve = optimize_angle(&fk, &fp, 1.0).unwrap().objective_curve;
            let p = 360 / k;
            for i in 0..360 {
                worst_period = worst_period.max((curve[i] - curve[(i + p) % 360]).abs());
            }
        }
        if !ok_order {
            worst_period = f64::INFINITY;
        }
    }

    // Scale invariance of the argmin on ground-truth maps.
    let pattern = SawingPattern::two_board_square(160.0);
    let corners = corner_angles(&pattern).unwrap();
    let mut scale_ok = true;
    for seed in 1..=10 {
        let log = generate_log(&GenParams { seed, ..GenParams::default() }).unwrap();
        let pmap = ground_truth_pmap(&log, 360, default_l_bins(log.length));
        let fp = pattern_function(&corners, log.mean_angular_halfwidth().unwrap(), 1.0).unwrap();
        let base = optimize_angle(&knot_function(&pmap), &fp, 1.0).unwrap().angle_deg;
        for c in [0.37, 0.5, 0.93] {
            let mut scaled = pmap.clone();
            scaled.values.iter_mut().for_each(|v| *v *= c);
            scale_ok &= optimize_angle(&knot_function(&scaled), &fp, 1.0).unwrap().angle_deg == base;
            let raw = KnotFunction::from_samples(knot_function(&pmap).samples.iter().map(|v| v * c * 40.0).collect());
            scale_ok &= optimize_angle(&raw, &fp, 1.0).unwrap().angle_deg == base;
        }
    }

    // θ shifts by whole bins: sample angles are multiples of 1/64 degree so
    // the shifted samples are exact.
    let shift = 37usize;
    let samples: Vec<CylindricalSample> = uniform_samples(60_000, 9, |_, _| 0.0)
        .into_iter()
        .map(|s| {
            let theta = (s.theta * 64.0).floor() / 64.0;
            let arc = knotsaw_core::circular_distance_deg(theta, 100.0).to_radians() * 120.0;
            let rho = 120.0 + 4.0 * (-(arc * arc + (s.l - 300.0).powi(2)) / 450.0).exp() + 0.001 * s.l;
            CylindricalSample { theta, rho, l: s.l }
        })
        .collect();
    let moved: Vec<CylindricalSample> = samples
        .iter()
        .map(|s| CylindricalSample {
            theta: (s.theta + shift as f64) % 360.0,
            ..*s
        })
        .collect();
    let h0 = fit(&samples, 0.01);
    let h1 = fit(&moved, 0.01);
    let hmap_exact = h0.shift_columns(shift as isize).values == h1.values;

    let p0 = log_detect(&h0, &LogParams::default()).unwrap();
    let p1 = log_detect(&h1, &LogParams::default()).unwrap();
    let log_exact = p0.shift_columns(shift as isize).values == p1.values && p0.values.iter().any(|&v| v > 0.0);

    let fp = pattern_function(&corners, 6.0, 1.0).unwrap();
    let fk = knot_function(&p0);
    let c0 = optimize_angle(&fk, &fp, 1.0).unwrap().objective_curve;
    let c1 = optimize_angle(&fk.shifted(shift as isize), &fp, 1.0).unwrap().objective_curve;
    let obj_exact = (0..360).all(|m| c1[(m + shift) % 360] == c0[m]);

    outcome(&[
        (worst_period <= 1e-12, format!("k-fold periodicity max |diff| {worst_period:.1e}")),
        (scale_ok, "argmin invariant to knot-map scale".to_string()),
        (hmap_exact, "height map shift-equivariant (bit-exact)".to_string()),
        (log_exact, "LoG shift-equivariant (bit-exact)".to_string()),
        (obj_exact, "objective shift-equivariant (bit-exact)".to_string()),
    ])
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("1 arris reduction on the synthetic batch", sawing_batch),
        ("2 optimizer equals brute force", optimizer_oracle),
        ("3 height-map fidelity", heightmap_fidelity),
        ("4 registration", registration_suite),
        ("5 mAP oracle equivalence", map_oracle),
        ("6 detection round trip", detection_round_trip),
        ("7 simulator vs voxel oracle", voxel_cross_check),
        ("8 symmetry and invariance", symmetry_and_invariance),
    ];
    let only: Option<String> = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let mut failed = 0;
    for (name, f) in criteria {
        if only.as_ref().is_some_and(|o| !name.starts_with(o.as_str())) {
            continue;
        }
        let start = Instant::now();
        let o = f();
        println!(
            "{} criterion {name}: {} ({:.1} s)",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            start.elapsed().as_secs_f64()
        );
        failed += usize::from(!o.pass);
    }
    if failed > 0 {
        std::process::exit(1);
    }
}

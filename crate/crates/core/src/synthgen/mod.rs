//! Seeded synthetic logs with exact ground truth.
//!
//! A log is a linearly tapered solid around a pith curve. Knots are right
//! circular cones whose apex sits on the pith and whose axis is perpendicular
//! to it; they are arranged in whorls. On the surface every knot raises a
//! raised-cosine bump over its angular/longitudinal footprint.

mod params;

pub use params::GenParams;

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::detection::{KnotDetection, ProbabilityMap};
use crate::heightmap::{node_spacing, Centerline};
use crate::{circular_distance_deg, wrap_deg, PointCloud, Result, Vec3};

/// Pith polyline resolution for curved logs.
const PITH_SEGMENTS: usize = 64;

/// Longitudinal jitter of a knot around its whorl, mm.
const WHORL_L_JITTER: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthKnot {
    pub id: u32,
    pub l_pos: f64,
    pub theta_pos: f64,
    /// Knot radius where the cone meets the log surface.
    pub base_radius: f64,
    pub apex_radius: f64,
    pub bump_height: f64,
    /// `asin(base_radius / surface radius)` in degrees.
    pub angular_halfwidth: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VirtualLog {
    pub pith: Centerline,
    pub length: f64,
    pub butt_radius: f64,
    pub top_radius: f64,
    pub knots: Vec<GroundTruthKnot>,
    pub seed: u64,
}

impl VirtualLog {
    /// Surface radius at longitudinal position `l`, linear from butt to top.
    pub fn radius_at(&self, l: f64) -> f64 {
        let t = (l / self.length).clamp(0.0, 1.0);
        self.butt_radius + (self.top_radius - self.butt_radius) * t
    }

    pub fn min_radius(&self) -> f64 {
        self.butt_radius.min(self.top_radius)
    }

    /// Mean knot angular halfwidth in degrees, or `None` without knots. Used
    /// as the default width of the pattern-function Gaussians.
    pub fn mean_angular_halfwidth(&self) -> Option<f64> {
        if self.knots.is_empty() {
            None
        } else {
            Some(self.knots.iter().map(|k| k.angular_halfwidth).sum::<f64>() / self.knots.len() as f64)
        }
    }

    /// Pith position at `l` (the pith polyline is parametrized by z).
    pub fn pith_at(&self, l: f64) -> Vec3 {
        let v = &self.pith.vertices;
        let n = v.len() - 1;
        let t = (l / self.length).clamp(0.0, 1.0) * n as f64;
        let i = (t.floor() as usize).min(n - 1);
        let f = t - i as f64;
        v[i] * (1.0 - f) + v[i + 1] * f
    }

    /// Total bump height at a surface location and the knot contributing most
    /// when its contribution exceeds half of that knot's bump height.
    pub fn bump_at(&self, theta: f64, l: f64) -> (f64, Option<u32>) {
        let mut total = 0.0;
        let mut best: Option<(u32, f64)> = None;
        for k in &self.knots {
            let u = footprint_u(k, theta, l);
            if u < 1.0 {
                let c = k.bump_height * 0.5 * (1.0 + (PI * u).cos());
                total += c;
                if c > 0.5 * k.bump_height && best.is_none_or(|(_, b)| c > b) {
                    best = Some((k.id, c));
                }
            }
        }
        (total, best.map(|b| b.0))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(self.to_json()?.as_bytes())?;
        f.write_all(b"\n")?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Normalized footprint distance: 0 at the knot center, 1 on its boundary.
fn footprint_u(k: &GroundTruthKnot, theta: f64, l: f64) -> f64 {
    let dt = circular_distance_deg(theta, k.theta_pos) / k.angular_halfwidth;
    let dl = (l - k.l_pos) / k.base_radius;
    (dt * dt + dl * dl).sqrt()
}

fn pith_curve(params: &GenParams) -> Centerline {
    let vertices = (0..=PITH_SEGMENTS)
        .map(|i| {
            let t = i as f64 / PITH_SEGMENTS as f64;
            Vec3::new(4.0 * params.pith_sagitta * t * (1.0 - t), 0.0, t * params.length)
        })
        .collect();
    Centerline { vertices }
}

/// Places whorls and knots. Deterministic given `params.seed`.
pub fn generate_log(params: &GenParams) -> Result<VirtualLog> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let length = params.length;
    let radius = |l: f64| {
        params.butt_radius + (params.top_radius - params.butt_radius) * (l / length).clamp(0.0, 1.0)
    };
    let margin = params.knot_base_radius.1 + WHORL_L_JITTER;
    let spacing = params.whorl_spacing_mean;
    let jitter = params.whorl_spacing_jitter;

    let mut whorls = Vec::new();
    let mut pos = (spacing * rng.random_range(0.25..=0.75)).max(margin);
    while pos <= length - margin {
        whorls.push(pos);
        pos += spacing * rng.random_range((1.0 - jitter)..=(1.0 + jitter));
    }

    let mut knots = Vec::new();
    for &w in &whorls {
        let (kmin, kmax) = params.knots_per_whorl;
        let n = rng.random_range(kmin..=kmax);
        if n == 0 {
            continue;
        }
        let sector = 360.0 / n as f64;
        let base: f64 = rng.random_range(0.0..360.0);
        for i in 0..n {
            let theta = wrap_deg(base + i as f64 * sector + rng.random_range(-0.25..=0.25) * sector);
            let l = (w + rng.random_range(-WHORL_L_JITTER..=WHORL_L_JITTER)).clamp(margin, length - margin);
            let b = rng.random_range(params.knot_base_radius.0..=params.knot_base_radius.1);
            let h = rng.random_range(params.bump_height.0..=params.bump_height.1);
            knots.push(GroundTruthKnot {
                id: knots.len() as u32,
                l_pos: l,
                theta_pos: theta,
                base_radius: b,
                apex_radius: 0.0,
                bump_height: h,
                angular_halfwidth: (b / radius(l)).asin().to_degrees(),
            });
        }
    }

    Ok(VirtualLog {
        pith: pith_curve(params),
        length,
        butt_radius: params.butt_radius,
        top_radius: params.top_radius,
        knots,
        seed: params.seed,
    })
}

/// Samples the surface uniformly by area, adds knot bumps and radial noise,
/// and labels points lying in the upper half of a bump.
pub fn render_point_cloud(log: &VirtualLog, params: &GenParams) -> Result<PointCloud> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(log.seed);
    rng.set_stream(1);
    let area = PI * (log.butt_radius + log.top_radius) * log.length;
    let n = (params.points_per_mm2 * area).round() as usize;
    let r_max = log.butt_radius.max(log.top_radius);
    let noise = Normal::new(0.0, params.surface_noise_sigma)
        .map_err(|e| crate::Error::param("surface_noise_sigma", e.to_string()))?;

    let mut points = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    while points.len() < n {
        let l: f64 = rng.random_range(0.0..=log.length);
        let accept: f64 = rng.random_range(0.0..1.0);
        if accept * r_max > log.radius_at(l) {
            continue;
        }
        let theta: f64 = rng.random_range(0.0..360.0);
        let (bump, label) = log.bump_at(theta, l);
        let eps = if params.surface_noise_sigma > 0.0 {
            noise.sample(&mut rng)
        } else {
            0.0
        };
        let rho = log.radius_at(l) + bump + eps;
        let (s, c) = theta.to_radians().sin_cos();
        points.push(log.pith_at(l) + Vec3::new(rho * c, rho * s, 0.0));
        labels.push(label);
    }
    PointCloud::with_labels(points, labels)
}

/// Footprint masks on a `theta_bins × l_bins` grid spanning the log length.
/// A node belongs to a knot when it lies inside the knot's footprint ellipse;
/// a footprint smaller than a cell keeps its nearest node.
pub fn ground_truth_mask(log: &VirtualLog, theta_bins: usize, l_bins: usize) -> Vec<KnotDetection> {
    let dt = 360.0 / theta_bins as f64;
    let dl = node_spacing(log.length, l_bins);
    log.knots
        .iter()
        .map(|k| {
            let r_lo = ((k.l_pos - k.base_radius) / dl).floor().max(0.0) as usize;
            let r_hi = (((k.l_pos + k.base_radius) / dl).ceil() as usize).min(l_bins - 1);
            let half_cols = (k.angular_halfwidth / dt).ceil() as isize + 1;
            let c0 = (k.theta_pos / dt).round() as isize;
            let mut cells = Vec::new();
            let mut nearest = (f64::INFINITY, (0, 0));
            for r in r_lo..=r_hi {
                for dc in -half_cols..=half_cols {
                    let c = (c0 + dc).rem_euclid(theta_bins as isize) as usize;
                    let u = footprint_u(k, c as f64 * dt, r as f64 * dl);
                    if u <= 1.0 {
                        cells.push((r, c));
                    }
                    if u < nearest.0 {
                        nearest = (u, (r, c));
                    }
                }
            }
            if cells.is_empty() {
                cells.push(nearest.1);
            }
            KnotDetection::from_cells(cells, 1.0, theta_bins, l_bins, log.length)
        })
        .collect()
}

/// Union of the ground-truth masks as a 0/1 probability map.
pub fn ground_truth_pmap(log: &VirtualLog, theta_bins: usize, l_bins: usize) -> ProbabilityMap {
    let mut p = ProbabilityMap::zeros(theta_bins, l_bins, log.length);
    p.paint(&ground_truth_mask(log, theta_bins, l_bins));
    p
}

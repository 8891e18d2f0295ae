use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};

use crate::{Error, PointCloud, Result, Vec3};

/// Polyline approximating the log's pith, ordered from the butt end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Centerline {
    pub vertices: Vec<Vec3>,
}

impl Centerline {
    pub fn new(vertices: Vec<Vec3>) -> Result<Self> {
        if vertices.len() < 2 {
            return Err(Error::InvalidInput("centerline needs at least two vertices".into()));
        }
        if let Some(i) = vertices.windows(2).position(|w| (w[1] - w[0]).norm() <= 1e-12) {
            return Err(Error::InvalidInput(format!("centerline segment {i} has zero length")));
        }
        Ok(Self { vertices })
    }

    pub fn segment_count(&self) -> usize {
        self.vertices.len() - 1
    }

    pub fn segment(&self, i: usize) -> (Vec3, Vec3) {
        (self.vertices[i], self.vertices[i + 1])
    }

    pub fn direction(&self, i: usize) -> Vec3 {
        let (a, b) = self.segment(i);
        (b - a).normalize()
    }

    pub fn segment_lengths(&self) -> Vec<f64> {
        self.vertices.windows(2).map(|w| (w[1] - w[0]).norm()).collect()
    }

    pub fn total_length(&self) -> f64 {
        self.segment_lengths().iter().sum()
    }

    /// Euclidean distance from `p` to the polyline.
    pub fn distance_to(&self, p: &Vec3) -> f64 {
        self.vertices
            .windows(2)
            .map(|w| point_segment_distance(p, &w[0], &w[1]))
            .fold(f64::INFINITY, f64::min)
    }
}

pub(crate) fn point_segment_distance(p: &Vec3, a: &Vec3, b: &Vec3) -> f64 {
    let ab = b - a;
    let t = ((p - a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0);
    (p - (a + ab * t)).norm()
}

#[derive(Debug, Clone)]
pub struct CenterlineParams {
    /// Longitudinal bins along the principal axis before simplification.
    pub bins: usize,
}

impl Default for CenterlineParams {
    fn default() -> Self {
        Self { bins: 50 }
    }
}

/// Estimates the centerline as a polyline with exactly `n_segments` segments.
///
/// Points are binned along the principal axis of the cloud. Each bin's center
/// is the least-squares circle center of its points across the axis, placed at
/// the bin centroid's axial position; the raw centroid stands in when the fit
/// is degenerate. The polyline of bin centers is simplified by repeatedly
/// dropping the most collinear interior vertex. End vertices are then extended along their segments to
/// cover the first and last bins completely.
pub fn estimate_centerline(cloud: &PointCloud, n_segments: usize, params: &CenterlineParams) -> Result<Centerline> {
    cloud.validate_non_empty()?;
    if n_segments == 0 {
        return Err(Error::InvalidInput("n_segments must be at least 1".into()));
    }
    let bins = params.bins.max(n_segments + 1);
    let centroid = cloud.centroid();
    let axis = principal_axis(&cloud.points, &centroid);

    let proj: Vec<f64> = cloud.points.iter().map(|p| (p - centroid).dot(&axis)).collect();
    let (tmin, tmax) = proj
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &t| (lo.min(t), hi.max(t)));
    let span = tmax - tmin;

    let mut sums = vec![Vec3::zeros(); bins];
    let mut counts = vec![0usize; bins];
    let mut members: Vec<usize> = Vec::with_capacity(proj.len());
    for (p, &t) in cloud.points.iter().zip(&proj) {
        let b = if span > 0.0 {
            (((t - tmin) / span * bins as f64) as usize).min(bins - 1)
        } else {
            0
        };
        sums[b] += p;
        counts[b] += 1;
        members.push(b);
    }
    if let Some(index) = counts.iter().position(|&c| c == 0) {
        return Err(Error::DegenerateBin { index });
    }
    let centroids: Vec<Vec3> = sums.iter().zip(&counts).map(|(s, &c)| s / c as f64).collect();
    let centers = circle_centers(&cloud.points, &members, &centroids, &axis);

    let mut vertices = simplify(centers, n_segments + 1);

    // Extend the ends so the first and last bins project inside their segments.
    let first_dir = (vertices[1] - vertices[0]).normalize();
    let start = cloud
        .points
        .iter()
        .zip(&members)
        .filter(|(_, &b)| b == 0)
        .map(|(p, _)| (p - vertices[0]).dot(&first_dir))
        .fold(0.0f64, f64::min);
    vertices[0] += first_dir * start;

    let k = vertices.len() - 1;
    let last_dir = (vertices[k] - vertices[k - 1]).normalize();
    let end = cloud
        .points
        .iter()
        .zip(&members)
        .filter(|(_, &b)| b == bins - 1)
        .map(|(p, _)| (p - vertices[k]).dot(&last_dir))
        .fold(0.0f64, f64::max);
    vertices[k] += last_dir * end;

    Centerline::new(vertices)
}

/// Algebraic circle fit `x² + y² + Dx + Ey + F = 0` per bin in the plane
/// across `axis`, in coordinates relative to the bin centroid.
fn circle_centers(points: &[Vec3], members: &[usize], centroids: &[Vec3], axis: &Vec3) -> Vec<Vec3> {
    let helper = if axis.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    let u = axis.cross(&helper).normalize();
    let v = axis.cross(&u);
    let mut normal = vec![Matrix3::<f64>::zeros(); centroids.len()];
    let mut rhs = vec![Vector3::<f64>::zeros(); centroids.len()];
    for (p, &b) in points.iter().zip(members) {
        let d = p - centroids[b];
        let (x, y) = (d.dot(&u), d.dot(&v));
        let row = Vector3::new(x, y, 1.0);
        normal[b] += row * row.transpose();
        rhs[b] -= row * (x * x + y * y);
    }
    centroids
        .iter()
        .zip(normal.iter().zip(&rhs))
        .map(|(c, (a, r))| match a.cholesky().map(|ch| ch.solve(r)) {
            Some(sol) if sol.iter().all(|x| x.is_finite()) => c + u * (-0.5 * sol.x) + v * (-0.5 * sol.y),
            _ => *c,
        })
        .collect()
}

/// Dominant eigenvector of the covariance, signed so its largest component is positive.
fn principal_axis(points: &[Vec3], centroid: &Vec3) -> Vec3 {
    let mut cov = Matrix3::zeros();
    for p in points {
        let d = p - centroid;
        cov += d * d.transpose();
    }
    let eig = SymmetricEigen::new(cov);
    let imax = eig.eigenvalues.imax();
    let mut axis: Vec3 = eig.eigenvectors.column(imax).into();
    let dominant = axis.iamax();
    if axis[dominant] < 0.0 {
        axis = -axis;
    }
    axis.normalize()
}

/// Area of the triangle a joint spans with its neighbors: zero for a
/// collinear joint, small for a short noisy wiggle.
fn joint_area(a: &Vec3, b: &Vec3, c: &Vec3) -> f64 {
    0.5 * (b - a).cross(&(c - a)).norm()
}

/// Greedily removes the most collinear interior vertex, measured by
/// [`joint_area`].
fn simplify(mut vertices: Vec<Vec3>, keep: usize) -> Vec<Vec3> {
    while vertices.len() > keep {
        let (idx, _) = (1..vertices.len() - 1)
            .map(|i| (i, joint_area(&vertices[i - 1], &vertices[i], &vertices[i + 1])))
            .fold((0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best });
        vertices.remove(idx);
    }
    vertices
}

/// Assigns every point to one centerline segment using the planes that bisect
/// the angle between consecutive segments. Returns point indices per segment.
pub fn split_by_bisecting_planes(cloud: &PointCloud, centerline: &Centerline) -> Vec<Vec<usize>> {
    let n = centerline.segment_count();
    let mut subsets = vec![Vec::new(); n];
    if n == 1 {
        subsets[0] = (0..cloud.len()).collect();
        return subsets;
    }
    // Plane j sits at the joint between segment j and j + 1.
    let planes: Vec<(Vec3, Vec3)> = (0..n - 1)
        .map(|j| {
            let normal = (centerline.direction(j) + centerline.direction(j + 1)).normalize();
            (centerline.vertices[j + 1], normal)
        })
        .collect();
    for (i, p) in cloud.points.iter().enumerate() {
        let seg = planes
            .iter()
            .position(|(o, nrm)| (p - o).dot(nrm) < 0.0)
            .unwrap_or(n - 1);
        subsets[seg].push(i);
    }
    subsets
}

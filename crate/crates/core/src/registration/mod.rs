//! Rigid registration of two scans of the same log and label transfer.
//!
//! Both clouds are centered and scaled so their furthest point sits at unit
//! distance, aligned with point-to-point ICP, and labels are carried over by
//! nearest neighbor in the target's original coordinates.

mod nn;

pub use nn::NearestNeighbors;

use std::io::{BufRead, Write};
use std::path::Path;

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::{Error, Execution, PointCloud, Result, Vec3};

/// `p ↦ scale · rotation · p + translation`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vec3,
    pub scale: f64,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vec3::zeros(),
            scale: 1.0,
        }
    }

    pub fn new(rotation: Matrix3<f64>, translation: Vec3, scale: f64) -> Result<Self> {
        let t = Self {
            rotation,
            translation,
            scale,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(Error::InvalidInput(format!("transform scale must be positive, got {}", self.scale)));
        }
        if (self.rotation.determinant() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput("rotation determinant is not +1".into()));
        }
        if (self.rotation.transpose() * self.rotation - Matrix3::identity()).amax() > 1e-9 {
            return Err(Error::InvalidInput("rotation is not orthonormal".into()));
        }
        Ok(())
    }

    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.rotation * p * self.scale + self.translation
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &Self) -> Self {
        Self {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation * self.scale + self.translation,
            scale: self.scale * other.scale,
        }
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -(rt * self.translation) / self.scale,
            scale: 1.0 / self.scale,
        }
    }

    /// Rotation angle in radians.
    pub fn angle(&self) -> f64 {
        ((self.rotation.trace() - 1.0) / 2.0).clamp(-1.0, 1.0).acos()
    }

    pub fn transform_cloud(&self, cloud: &PointCloud) -> PointCloud {
        PointCloud {
            points: cloud.points.iter().map(|p| self.apply(p)).collect(),
            labels: cloud.labels.clone(),
        }
    }

    /// Twelve numbers on one line (row-major rotation, then translation),
    /// followed by a `scale` line.
    pub fn write<W: Write>(&self, w: &mut W) -> Result<()> {
        let r = &self.rotation;
        let mut nums: Vec<String> = Vec::with_capacity(12);
        for i in 0..3 {
            for j in 0..3 {
                nums.push(r[(i, j)].to_string());
            }
        }
        nums.extend(self.translation.iter().map(|v| v.to_string()));
        writeln!(w, "{}", nums.join(" "))?;
        writeln!(w, "scale {}", self.scale)?;
        Ok(())
    }

    pub fn read<R: BufRead>(r: R) -> Result<Self> {
        let lines: Vec<String> = r
            .lines()
            .collect::<std::io::Result<Vec<_>>>()?
            .into_iter()
            .filter(|l| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
            .collect();
        let first = lines.first().ok_or_else(|| Error::parse(1, "empty transform file"))?;
        let nums: Vec<f64> = first
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<f64>().map_err(|e| Error::parse(1, format!("`{s}`: {e}"))))
            .collect::<Result<_>>()?;
        if nums.len() != 12 {
            return Err(Error::parse(1, format!("expected 12 numbers, got {}", nums.len())));
        }
        let scale = match lines.get(1) {
            None => 1.0,
            Some(l) => {
                let v = l.trim().trim_start_matches("scale").trim();
                v.parse::<f64>().map_err(|e| Error::parse(2, format!("scale `{v}`: {e}")))?
            }
        };
        let rotation = Matrix3::from_row_slice(&nums[..9]);
        let translation = Vec3::new(nums[9], nums[10], nums[11]);
        Self::new(rotation, translation, scale).map_err(|e| Error::parse(1, e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write(&mut f)?;
        f.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

/// Centers the cloud at the origin and scales its furthest point to unit
/// distance. Returns the normalized cloud and the original → normalized map.
pub fn normalize(cloud: &PointCloud) -> Result<(PointCloud, RigidTransform)> {
    cloud.validate_non_empty()?;
    let c = cloud.centroid();
    let radius = cloud.points.iter().map(|p| (p - c).norm()).fold(0.0, f64::max);
    if radius <= 1e-12 * (1.0 + c.norm()) {
        return Err(Error::DegenerateCloud("all points coincide".into()));
    }
    let s = 1.0 / radius;
    let t = RigidTransform {
        rotation: Matrix3::identity(),
        translation: -c * s,
        scale: s,
    };
    Ok((t.transform_cloud(cloud), t))
}

fn check_normalized(cloud: &PointCloud, which: &str) -> Result<()> {
    cloud.validate_non_empty()?;
    let c = cloud.centroid();
    let r = cloud.points.iter().map(|p| p.norm()).fold(0.0, f64::max);
    if c.norm() > 1e-6 || (r - 1.0).abs() > 1e-6 {
        return Err(Error::PreconditionViolation(format!(
            "{which} cloud is not normalized (centroid norm {:.3e}, max radius {r})",
            c.norm()
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy)]
pub struct IcpParams {
    pub max_iter: usize,
    /// Stop once the MSE improves by less than this.
    pub convergence_eps: f64,
    /// Drop the worst 5% of correspondences in every iteration.
    pub trim: bool,
    pub execution: Execution,
}

impl Default for IcpParams {
    fn default() -> Self {
        Self {
            max_iter: 100,
            convergence_eps: 1e-12,
            trim: false,
            execution: Execution::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IcpResult {
    /// Source → target.
    pub transform: RigidTransform,
    pub converged: bool,
    /// Number of rigid updates applied.
    pub iterations: usize,
    /// Correspondence MSE before each update and after the last one
    /// (over the kept correspondences when trimming).
    pub mse_history: Vec<f64>,
}

/// Closed-form least-squares rotation and translation mapping `p` onto `q`.
fn kabsch(p: &[Vec3], q: &[Vec3]) -> RigidTransform {
    let n = p.len() as f64;
    let pc = p.iter().sum::<Vec3>() / n;
    let qc = q.iter().sum::<Vec3>() / n;
    let mut h = Matrix3::zeros();
    for (a, b) in p.iter().zip(q) {
        h += (a - pc) * (b - qc).transpose();
    }
    let svd = h.svd(true, true);
    let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
    let v = vt.transpose();
    let d = (v * u.transpose()).determinant().signum();
    let r = v * Matrix3::from_diagonal(&Vec3::new(1.0, 1.0, d)) * u.transpose();
    RigidTransform {
        rotation: r,
        translation: qc - r * pc,
        scale: 1.0,
    }
}

/// Nearest target point for every source point and the correspondence set
/// used for the rigid solve.
fn correspondences(moved: &[Vec3], nn: &NearestNeighbors, trim: bool, exec: Execution) -> (Vec<(usize, usize, f64)>, f64) {
    let mut pairs: Vec<(usize, usize, f64)> = exec.map_range(moved.len(), |i| {
        let (j, d) = nn.nearest(&moved[i]);
        (i, j, d)
    });
    if trim {
        let keep = ((pairs.len() as f64) * 0.95).ceil() as usize;
        pairs.sort_by(|a, b| a.2.total_cmp(&b.2).then(a.0.cmp(&b.0)));
        pairs.truncate(keep.max(3).min(pairs.len()));
        pairs.sort_by_key(|p| p.0);
    }
    let mse = pairs.iter().map(|p| p.2).sum::<f64>() / pairs.len() as f64;
    (pairs, mse)
}

/// Point-to-point ICP between normalized clouds.
///
/// Each iteration matches every transformed source point to its nearest
/// target point and solves the rigid update in closed form (SVD with
/// reflection correction). Iteration stops when the MSE improvement falls
/// below `convergence_eps` or after `max_iter` updates; in the latter case
/// `converged` is false and the final transform is still returned.
pub fn icp_align(source: &PointCloud, target: &PointCloud, params: &IcpParams) -> Result<IcpResult> {
    check_normalized(source, "source")?;
    check_normalized(target, "target")?;
    let nn = NearestNeighbors::new(&target.points);
    let mut current = RigidTransform::identity();
    let mut moved = source.points.clone();
    let (mut pairs, mut mse) = correspondences(&moved, &nn, params.trim, params.execution);
    let mut history = vec![mse];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < params.max_iter {
        let p: Vec<Vec3> = pairs.iter().map(|c| moved[c.0]).collect();
        let q: Vec<Vec3> = pairs.iter().map(|c| target.points[c.1]).collect();
        let step = kabsch(&p, &q);
        let next = step.compose(&current);
        let next_moved: Vec<Vec3> = source.points.iter().map(|x| next.apply(x)).collect();
        let (next_pairs, next_mse) = correspondences(&next_moved, &nn, params.trim, params.execution);
        iterations += 1;
        if next_mse > mse {
            // Round-off only; keep the better state.
            converged = true;
            break;
        }
        current = next;
        moved = next_moved;
        pairs = next_pairs;
        let improvement = mse - next_mse;
        mse = next_mse;
        history.push(mse);
        if improvement < params.convergence_eps {
            converged = true;
            break;
        }
    }
    Ok(IcpResult {
        transform: current,
        converged,
        iterations,
        mse_history: history,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelTransferResult {
    pub labels: Vec<Option<u32>>,
    /// Fraction of target points whose nearest source point is within the cutoff.
    pub matched_fraction: f64,
    pub max_match_distance: f64,
}

/// Gives every target point the label of its nearest transformed source
/// point when that point lies within `cutoff`; otherwise no label. `transform`
/// maps source coordinates into the target's original coordinates.
pub fn transfer_labels(
    source: &PointCloud,
    target: &PointCloud,
    transform: &RigidTransform,
    cutoff: f64,
) -> Result<LabelTransferResult> {
    source.validate_non_empty()?;
    let src_labels = source
        .labels
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("source cloud has no labels".into()))?;
    if !(cutoff > 0.0) {
        return Err(Error::param("cutoff", "must be positive"));
    }
    let moved: Vec<Vec3> = source.points.iter().map(|p| transform.apply(p)).collect();
    let nn = NearestNeighbors::new(&moved);
    let mut labels = Vec::with_capacity(target.len());
    let mut matched = 0usize;
    let mut max_d: f64 = 0.0;
    for q in &target.points {
        let (i, d2) = nn.nearest(q);
        let d = d2.sqrt();
        if d <= cutoff {
            matched += 1;
            max_d = max_d.max(d);
            labels.push(src_labels[i]);
        } else {
            labels.push(None);
        }
    }
    Ok(LabelTransferResult {
        labels,
        matched_fraction: if target.is_empty() { 0.0 } else { matched as f64 / target.len() as f64 },
        max_match_distance: max_d,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Registration {
    /// Source original → target original coordinates.
    pub transform: RigidTransform,
    pub icp: IcpResult,
}

/// Normalizes both clouds, aligns them with ICP and expresses the result
/// between the original coordinate systems.
pub fn register(source: &PointCloud, target: &PointCloud, params: &IcpParams) -> Result<Registration> {
    let (ns, ts) = normalize(source)?;
    let (nt, tt) = normalize(target)?;
    let icp = icp_align(&ns, &nt, params)?;
    let transform = tt.inverse().compose(&icp.transform).compose(&ts);
    Ok(Registration { transform, icp })
}

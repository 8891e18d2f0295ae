use nalgebra::Rotation3;
use serde::{Deserialize, Serialize};

use super::centerline::{split_by_bisecting_planes, Centerline};
use crate::{wrap_deg, PointCloud, Result, Vec3};

/// A point in log-centric cylindrical coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CylindricalSample {
    /// Degrees in `[0, 360)`.
    pub theta: f64,
    /// Distance from the segment axis, mm.
    pub rho: f64,
    /// Global longitudinal coordinate, mm.
    pub l: f64,
}

/// Local frame of one centerline segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentFrame {
    pub origin: Vec3,
    /// Unit direction of the segment.
    pub axis: Vec3,
    /// θ = 0 direction, orthogonal to `axis`.
    pub ref_x: Vec3,
    /// θ = 90° direction, `axis × ref_x`.
    pub ref_y: Vec3,
    pub length: f64,
    /// Sum of the lengths of all previous segments.
    pub l_offset: f64,
}

impl SegmentFrame {
    /// Frame for a segment starting at `origin` along `axis`, with θ = 0 along
    /// the projection of `reference` onto the normal plane.
    pub fn new(origin: Vec3, end: Vec3, reference: Vec3, l_offset: f64) -> Self {
        let d = end - origin;
        let length = d.norm();
        let axis = d / length;
        let mut ref_x = reference - axis * reference.dot(&axis);
        if ref_x.norm() < 1e-9 {
            let alt = if axis.y.abs() < 0.9 { Vec3::y() } else { Vec3::z() };
            ref_x = alt - axis * alt.dot(&axis);
        }
        let ref_x = ref_x.normalize();
        Self {
            origin,
            axis,
            ref_x,
            ref_y: axis.cross(&ref_x),
            length,
            l_offset,
        }
    }
}

impl Centerline {
    /// Frames for every segment. The first takes θ = 0 from world +x; each
    /// following frame parallel-transports the previous reference across the
    /// joint so θ stays continuous along the log.
    pub fn frames(&self) -> Vec<SegmentFrame> {
        let mut frames = Vec::with_capacity(self.segment_count());
        let mut offset = 0.0;
        let mut reference = Vec3::x();
        for i in 0..self.segment_count() {
            let (a, b) = self.segment(i);
            if let Some(prev) = frames.last() {
                let prev: &SegmentFrame = prev;
                let axis = (b - a).normalize();
                reference = Rotation3::rotation_between(&prev.axis, &axis)
                    .map(|r| r * prev.ref_x)
                    .unwrap_or(prev.ref_x);
            }
            let f = SegmentFrame::new(a, b, reference, offset);
            offset += f.length;
            frames.push(f);
        }
        frames
    }
}

/// Converts points to cylindrical coordinates about one segment frame.
/// A point exactly on the axis gets `ρ = 0, θ = 0`.
pub fn to_cylindrical<'a>(points: impl IntoIterator<Item = &'a Vec3>, frame: &SegmentFrame) -> Vec<CylindricalSample> {
    points
        .into_iter()
        .map(|p| {
            let q = p - frame.origin;
            let z = q.dot(&frame.axis);
            let radial = q - frame.axis * z;
            let rho = radial.norm();
            let theta = if rho == 0.0 {
                0.0
            } else {
                wrap_deg(radial.dot(&frame.ref_y).atan2(radial.dot(&frame.ref_x)).to_degrees())
            };
            CylindricalSample {
                theta,
                rho,
                l: z + frame.l_offset,
            }
        })
        .collect()
}

/// Splits the cloud along the centerline and unwraps every subset. Samples are
/// returned in segment order, and within a segment in point order.
pub fn cylindrical_samples(cloud: &PointCloud, centerline: &Centerline) -> Result<Vec<CylindricalSample>> {
    cloud.validate_non_empty()?;
    let frames = centerline.frames();
    let subsets = split_by_bisecting_planes(cloud, centerline);
    let mut out = Vec::with_capacity(cloud.len());
    for (frame, idx) in frames.iter().zip(&subsets) {
        out.extend(to_cylindrical(idx.iter().map(|&i| &cloud.points[i]), frame));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn z_frame(offset: f64) -> SegmentFrame {
        SegmentFrame::new(Vec3::zeros(), Vec3::new(0.0, 0.0, 1000.0), Vec3::x(), offset)
    }

    #[test]
    fn definition_examples() {
        let f = z_frame(7.0);
        let s = to_cylindrical(&[Vec3::new(100.0, 0.0, 50.0)], &f)[0];
        assert_eq!((s.theta, s.rho, s.l), (0.0, 100.0, 57.0));
        let s = to_cylindrical(&[Vec3::new(0.0, 100.0, 50.0)], &f)[0];
        assert!((s.theta - 90.0).abs() < 1e-12);
        assert!((s.rho - 100.0).abs() < 1e-12);
        assert_eq!(s.l, 57.0);
        let s = to_cylindrical(&[Vec3::new(0.0, 0.0, 20.0)], &f)[0];
        assert_eq!((s.theta, s.rho), (0.0, 0.0));
    }

    #[test]
    fn theta_is_in_range() {
        let f = z_frame(0.0);
        let pts: Vec<Vec3> = (0..720)
            .map(|k| {
                let a = (k as f64 * 0.5 - 180.0).to_radians();
                Vec3::new(a.cos(), a.sin(), 0.0) * 10.0
            })
            .collect();
        for s in to_cylindrical(&pts, &f) {
            assert!((0.0..360.0).contains(&s.theta));
        }
    }

    #[test]
    fn l_accumulates_previous_lengths() {
        let cl = Centerline::new(vec![
            Vec3::zeros(),
            Vec3::new(0.0, 0.0, 300.0),
            Vec3::new(10.0, 0.0, 800.0),
        ])
        .unwrap();
        let frames = cl.frames();
        assert_eq!(frames[0].l_offset, 0.0);
        assert!((frames[1].l_offset - 300.0).abs() < 1e-12);
        // Parallel transport keeps the reference close to +x on a gentle bend.
        assert!(frames[1].ref_x.dot(&Vec3::x()) > 0.99);
        assert!(frames[1].ref_x.dot(&frames[1].axis).abs() < 1e-12);
    }
}

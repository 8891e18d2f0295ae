//! Scanline rasterization of knot cones on board faces.
//!
//! Along one raster row a face is the line `X(u) = P0 + u·E` with `E`
//! horizontal. A knot cone with apex `A`, unit axis `d` and radius
//! `r(s) = r0 + k·s` at axial distance `s = (X − A)·d` contains `X` when
//! `|X − A|² − s² ≤ r(s)²` and `s ≥ 0`. With `s = s0 + s1·u` the first
//! condition is a quadratic in `u`; the log surface `x² + y² ≤ R(z)²` is
//! another. Cells are occupied when their center satisfies all of them.

use crate::Vec3;

/// Closed interval on the row parameter; bounds may be infinite.
pub(crate) type Interval = (f64, f64);

const LINEAR_EPS: f64 = 1e-12;

/// Solution set of `a·u² + b·u + c ≤ 0` as at most two disjoint intervals.
pub(crate) fn quadratic_le_zero(a: f64, b: f64, c: f64) -> Vec<Interval> {
    let inf = f64::INFINITY;
    if a.abs() < LINEAR_EPS {
        if b.abs() < LINEAR_EPS {
            return if c <= 0.0 { vec![(-inf, inf)] } else { Vec::new() };
        }
        let root = -c / b;
        return if b > 0.0 { vec![(-inf, root)] } else { vec![(root, inf)] };
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return if a > 0.0 { Vec::new() } else { vec![(-inf, inf)] };
    }
    let q = -0.5 * (b + b.signum() * disc.sqrt());
    let (mut u1, mut u2) = if q == 0.0 { (0.0, 0.0) } else { (q / a, c / q) };
    if u1 > u2 {
        std::mem::swap(&mut u1, &mut u2);
    }
    if a > 0.0 {
        vec![(u1, u2)]
    } else {
        vec![(-inf, u1), (u2, inf)]
    }
}

fn intersect(sets: &[Interval], lo: f64, hi: f64) -> Vec<Interval> {
    sets.iter()
        .map(|&(a, b)| (a.max(lo), b.min(hi)))
        .filter(|(a, b)| a <= b)
        .collect()
}

/// Knot cone in simulator coordinates (straight pith on the z axis).
#[derive(Debug, Clone, Copy)]
pub(crate) struct Cone {
    pub id: u32,
    pub apex: Vec3,
    pub axis: Vec3,
    pub r0: f64,
    pub slope: f64,
}

impl Cone {
    /// Point-membership test, ignoring the log surface.
    #[cfg(test)]
    pub fn contains(&self, p: &Vec3) -> bool {
        let rel = p - self.apex;
        let s = rel.dot(&self.axis);
        if s < 0.0 {
            return false;
        }
        let r = self.r0 + self.slope * s;
        rel.norm_squared() - s * s <= r * r
    }
}

/// Intervals of `u` on the row line `P0 + u·E` inside cone and log, clipped
/// to `[0, width]`. `log_radius` is the surface radius at the row's height.
pub(crate) fn row_intervals(cone: &Cone, p0: &Vec3, e: &Vec3, width: f64, log_radius: f64) -> Vec<Interval> {
    // Log cross-section disc.
    let px = Vec3::new(p0.x, p0.y, 0.0);
    let b_log = 2.0 * px.dot(e);
    let c_log = px.norm_squared() - log_radius * log_radius;
    let disc = quadratic_le_zero(1.0, b_log, c_log);
    let Some(&(lo_log, hi_log)) = disc.first() else {
        return Vec::new();
    };
    let mut lo = lo_log.max(0.0);
    let mut hi = hi_log.min(width);

    // Forward nappe.
    let d = p0 - cone.apex;
    let s0 = d.dot(&cone.axis);
    let s1 = e.dot(&cone.axis);
    if s1.abs() < LINEAR_EPS {
        if s0 < 0.0 {
            return Vec::new();
        }
    } else if s1 > 0.0 {
        lo = lo.max(-s0 / s1);
    } else {
        hi = hi.min(-s0 / s1);
    }
    if lo > hi {
        return Vec::new();
    }

    let k = cone.slope;
    let rs = cone.r0 + k * s0;
    let a = 1.0 - s1 * s1 - k * k * s1 * s1;
    let b = 2.0 * d.dot(e) - 2.0 * s0 * s1 - 2.0 * k * s1 * rs;
    let c = d.norm_squared() - s0 * s0 - rs * rs;
    intersect(&quadratic_le_zero(a, b, c), lo, hi)
}

/// Cell-index range `[first, last]` whose centers `(i + 0.5)·res` fall in the
/// interval, limited to `0..cells`.
pub(crate) fn covered_cells(iv: Interval, res: f64, cells: usize) -> Option<(usize, usize)> {
    if cells == 0 {
        return None;
    }
    let first = (iv.0 / res - 0.5).ceil().max(0.0);
    let last = (iv.1 / res - 0.5).floor().min(cells as f64 - 1.0);
    if first > last {
        None
    } else {
        Some((first as usize, last as usize))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_cases() {
        assert_eq!(quadratic_le_zero(1.0, 0.0, -4.0), vec![(-2.0, 2.0)]);
        assert!(quadratic_le_zero(1.0, 0.0, 4.0).is_empty());
        let inf = f64::INFINITY;
        assert_eq!(quadratic_le_zero(-1.0, 0.0, 4.0), vec![(-inf, -2.0), (2.0, inf)]);
        assert_eq!(quadratic_le_zero(-1.0, 0.0, -4.0), vec![(-inf, inf)]);
        assert_eq!(quadratic_le_zero(0.0, 2.0, -4.0), vec![(-inf, 2.0)]);
        assert_eq!(quadratic_le_zero(0.0, -2.0, -4.0), vec![(-2.0, inf)]);
        assert!(quadratic_le_zero(0.0, 0.0, 1.0).is_empty());
    }

    #[test]
    fn intervals_agree_with_point_test() {
        let cone = Cone {
            id: 0,
            apex: Vec3::new(0.0, 0.0, 100.0),
            axis: Vec3::new(0.6, 0.8, 0.0),
            r0: 1.0,
            slope: 0.12,
        };
        let e = Vec3::new(0.0, 1.0, 0.0);
        let radius = 140.0;
        for zi in 0..60 {
            let z = 70.0 + zi as f64;
            let p0 = Vec3::new(50.0, -80.0, z);
            let ivs = row_intervals(&cone, &p0, &e, 160.0, radius);
            for j in 0..1600 {
                let u = j as f64 * 0.1 + 0.05;
                let p = p0 + e * u;
                let inside = cone.contains(&p) && p.x.hypot(p.y) <= radius;
                let hit = ivs.iter().any(|&(a, b)| u >= a && u <= b);
                assert_eq!(inside, hit, "z {z} u {u}");
            }
        }
    }

    #[test]
    fn cell_cover() {
        assert_eq!(covered_cells((0.0, 10.0), 1.0, 100), Some((0, 9)));
        assert_eq!(covered_cells((0.6, 1.4), 1.0, 100), None);
        assert_eq!(covered_cells((-5.0, 500.0), 1.0, 100), Some((0, 99)));
        assert_eq!(covered_cells((1.5, 1.5), 1.0, 100), Some((1, 1)));
    }
}

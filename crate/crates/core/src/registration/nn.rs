use std::collections::HashMap;

use crate::Vec3;

/// Below this many points queries scan every point.
const EXHAUSTIVE_BELOW: usize = 5000;

/// Nearest-neighbor index over a fixed point set: a uniform 3-D grid hash with
/// cell size twice the estimated point spacing, searched in growing shells.
/// Equal distances resolve to the lower point index.
pub struct NearestNeighbors<'a> {
    points: &'a [Vec3],
    grid: Option<Grid>,
}

struct Grid {
    cell: f64,
    origin: Vec3,
    dims: [i64; 3],
    buckets: HashMap<[i64; 3], Vec<u32>>,
}

impl<'a> NearestNeighbors<'a> {
    pub fn new(points: &'a [Vec3]) -> Self {
        if points.len() < EXHAUSTIVE_BELOW {
            return Self { points, grid: None };
        }
        let mut lo = points[0];
        let mut hi = points[0];
        for p in points {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        let ext = hi - lo;
        // Surface-like clouds: spacing ≈ sqrt(area / n) with the box surface as area.
        let area = 2.0 * (ext.x * ext.y + ext.y * ext.z + ext.x * ext.z);
        let diag = ext.norm().max(1e-12);
        let spacing = (area / points.len() as f64).sqrt();
        let cell = (2.0 * spacing).max(diag * 1e-4).max(1e-12);
        let dims = [0, 1, 2].map(|a| (ext[a] / cell).floor() as i64 + 1);
        let mut buckets: HashMap<[i64; 3], Vec<u32>> = HashMap::new();
        let mut grid = Grid {
            cell,
            origin: lo,
            dims,
            buckets: HashMap::new(),
        };
        for (i, p) in points.iter().enumerate() {
            buckets.entry(grid.key(p)).or_default().push(i as u32);
        }
        grid.buckets = buckets;
        Self {
            points,
            grid: Some(grid),
        }
    }

    /// Index of the nearest point and its squared distance.
    pub fn nearest(&self, q: &Vec3) -> (usize, f64) {
        match &self.grid {
            None => self.scan(q),
            Some(g) => g.nearest(self.points, q).unwrap_or_else(|| self.scan(q)),
        }
    }

    fn scan(&self, q: &Vec3) -> (usize, f64) {
        let mut best = (0, f64::INFINITY);
        for (i, p) in self.points.iter().enumerate() {
            let d = (p - q).norm_squared();
            if d < best.1 {
                best = (i, d);
            }
        }
        best
    }
}

impl Grid {
    fn key(&self, p: &Vec3) -> [i64; 3] {
        [0, 1, 2].map(|a| ((p[a] - self.origin[a]) / self.cell).floor() as i64)
    }

    fn nearest(&self, points: &[Vec3], q: &Vec3) -> Option<(usize, f64)> {
        let center = self.key(q);
        if (0..3).any(|a| center[a] < 0 || center[a] >= self.dims[a]) {
            return None;
        }
        let max_shell = (0..3)
            .map(|a| center[a].max(self.dims[a] - 1 - center[a]))
            .max()
            .unwrap_or(0);
        let mut best: Option<(usize, f64)> = None;
        for r in 0..=max_shell {
            self.visit_shell(center, r, |idx| {
                for &i in idx {
                    let d = (points[i as usize] - q).norm_squared();
                    let better = match best {
                        None => true,
                        Some((bi, bd)) => d < bd || (d == bd && (i as usize) < bi),
                    };
                    if better {
                        best = Some((i as usize, d));
                    }
                }
            });
            if let Some((_, bd)) = best {
                // Unvisited points lie at least r cells from q.
                let reach = r as f64 * self.cell;
                if bd < reach * reach {
                    return best;
                }
            }
        }
        best
    }

    fn visit_shell(&self, c: [i64; 3], r: i64, mut f: impl FnMut(&[u32])) {
        let mut visit = |k: [i64; 3]| {
            if let Some(v) = self.buckets.get(&k) {
                f(v);
            }
        };
        for dx in -r..=r {
            for dy in -r..=r {
                if dx.abs() == r || dy.abs() == r {
                    for dz in -r..=r {
                        visit([c[0] + dx, c[1] + dy, c[2] + dz]);
                    }
                } else if r > 0 {
                    visit([c[0] + dx, c[1] + dy, c[2] - r]);
                    visit([c[0] + dx, c[1] + dy, c[2] + r]);
                }
            }
        }
    }
}

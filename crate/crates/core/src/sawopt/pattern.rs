use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{wrap_deg, Error, Result};

/// Axis-aligned board in the cross-section plane, millimeters, origin at the
/// log center.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Board {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

impl Board {
    /// Corners counter-clockwise from the lower left.
    pub fn corners(&self) -> [(f64, f64); 4] {
        let (x0, x1) = (self.cx - self.w / 2.0, self.cx + self.w / 2.0);
        let (y0, y1) = (self.cy - self.h / 2.0, self.cy + self.h / 2.0);
        [(x0, y0), (x1, y0), (x1, y1), (x0, y1)]
    }

    fn overlaps(&self, o: &Board) -> bool {
        let ox = (self.w + o.w) / 2.0 - (self.cx - o.cx).abs();
        let oy = (self.h + o.h) / 2.0 - (self.cy - o.cy).abs();
        ox > 1e-9 && oy > 1e-9
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SawingPattern {
    pub name: String,
    pub boards: Vec<Board>,
}

impl SawingPattern {
    /// Two `side × side/2` boards stacked into a centered square cant.
    pub fn two_board_square(side: f64) -> Self {
        let h = side / 2.0;
        Self {
            name: format!("two-board square {side} mm"),
            boards: vec![
                Board { cx: 0.0, cy: h / 2.0, w: side, h },
                Board { cx: 0.0, cy: -h / 2.0, w: side, h },
            ],
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (i, b) in self.boards.iter().enumerate() {
            if !(b.w > 0.0 && b.h > 0.0) || ![b.cx, b.cy, b.w, b.h].iter().all(|v| v.is_finite()) {
                return Err(Error::InvalidInput(format!("board {i} has non-positive or non-finite size")));
            }
            for (j, o) in self.boards.iter().enumerate().skip(i + 1) {
                if b.overlaps(o) {
                    return Err(Error::InvalidInput(format!("boards {i} and {j} overlap")));
                }
            }
        }
        Ok(())
    }

    /// Largest corner distance from the origin, which is the pattern's
    /// radius under any rotation.
    pub fn outer_radius(&self) -> f64 {
        self.boards
            .iter()
            .flat_map(|b| b.corners())
            .map(|(x, y)| x.hypot(y))
            .fold(0.0, f64::max)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let p: Self = serde_json::from_str(s)?;
        p.validate()?;
        Ok(p)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Polar angles of all board corners in `[0, 360)`, four per board; corners
/// shared between boards appear once per board.
pub fn corner_angles(pattern: &SawingPattern) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(4 * pattern.boards.len());
    for (i, b) in pattern.boards.iter().enumerate() {
        for (x, y) in b.corners() {
            if x.hypot(y) <= 1e-12 {
                return Err(Error::DegenerateCorner { board: i });
            }
            out.push(wrap_deg(y.atan2(x).to_degrees()));
        }
    }
    Ok(out)
}

/// Largest `k ∈ {4, 2, 1}` such that rotating the angle multiset by `360/k`
/// maps it onto itself (within 1e-9°).
pub fn symmetry_order(angles: &[f64]) -> usize {
    for k in [4usize, 2] {
        let rot = 360.0 / k as f64;
        let mut used = vec![false; angles.len()];
        let ok = angles.iter().all(|&a| {
            let target = wrap_deg(a + rot);
            match (0..angles.len()).find(|&j| !used[j] && crate::circular_distance_deg(angles[j], target) <= 1e-9) {
                Some(j) => {
                    used[j] = true;
                    true
                }
                None => false,
            }
        });
        if ok {
            return k;
        }
    }
    1
}

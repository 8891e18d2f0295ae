//! Surface knot detection on height maps and its evaluation.
//!
//! [`ProbabilityMap`] is the seam between detectors and the rest of the
//! pipeline: the classical LoG detector produces one, and externally computed
//! maps (e.g. from a learned model) can be read from `PMAP v1` files.

mod components;
mod eval;
pub mod io;
mod log_filter;

pub use components::extract_detections;
pub use eval::{average_precision, evaluate_many, evaluate_map, iou, DetectionEvalReport, MatchPair};
pub use log_filter::{log_detect, log_response, LogParams};

use serde::{Deserialize, Serialize};

/// Default probability at which maps are binarized into components.
pub const DEFAULT_BINARIZE_AT: f64 = 0.5;
/// Binarization level for maps produced by [`log_detect`]. Min-max
/// normalization scales every response by the strongest bump on the log, so
/// low knots peak well below 0.5.
pub const LOG_BINARIZE_AT: f64 = 0.2;
/// Default minimum component area; smaller components are dropped.
pub const DEFAULT_MIN_AREA_CELLS: usize = 4;
/// IoU at which a prediction counts as a true positive.
pub const DEFAULT_IOU_THRESHOLD: f64 = 0.10;

use crate::heightmap::{node_spacing, HeightMap};
use crate::{Error, Result};

/// Per-node knot probability congruent with a [`HeightMap`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityMap {
    pub theta_bins: usize,
    pub l_bins: usize,
    pub l_extent: f64,
    /// Row-major, `values[row * theta_bins + col]`, each in `[0, 1]`.
    pub values: Vec<f64>,
}

impl ProbabilityMap {
    pub fn zeros(theta_bins: usize, l_bins: usize, l_extent: f64) -> Self {
        Self {
            theta_bins,
            l_bins,
            l_extent,
            values: vec![0.0; theta_bins * l_bins],
        }
    }

    pub fn zeros_like(map: &HeightMap) -> Self {
        Self::zeros(map.theta_bins, map.l_bins, map.l_extent)
    }

    /// Builds a map from raw values, clamping them to `[0, 1]`.
    pub fn from_values(theta_bins: usize, l_bins: usize, l_extent: f64, values: Vec<f64>) -> Result<Self> {
        if values.len() != theta_bins * l_bins {
            return Err(Error::GridMismatch(format!(
                "{} values for a {}x{} grid",
                values.len(),
                l_bins,
                theta_bins
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite probability".into()));
        }
        Ok(Self {
            theta_bins,
            l_bins,
            l_extent,
            values: values.into_iter().map(|v| v.clamp(0.0, 1.0)).collect(),
        })
    }

    pub fn delta_theta(&self) -> f64 {
        360.0 / self.theta_bins as f64
    }

    pub fn delta_l(&self) -> f64 {
        node_spacing(self.l_extent, self.l_bins)
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.theta_bins + col]
    }

    pub fn set(&mut self, row: usize, col: usize, v: f64) {
        self.values[row * self.theta_bins + col] = v.clamp(0.0, 1.0);
    }

    /// Errors unless the map has the same grid as `hmap`.
    pub fn check_congruent(&self, hmap: &HeightMap) -> Result<()> {
        if self.theta_bins != hmap.theta_bins
            || self.l_bins != hmap.l_bins
            || (self.l_extent - hmap.l_extent).abs() > 1e-9 * hmap.l_extent.abs().max(1.0)
        {
            return Err(Error::GridMismatch(format!(
                "probability map {}x{} ({} mm) vs height map {}x{} ({} mm)",
                self.l_bins, self.theta_bins, self.l_extent, hmap.l_bins, hmap.theta_bins, hmap.l_extent
            )));
        }
        Ok(())
    }

    /// Circularly shifts columns so that new column `c` holds old column `c − shift`.
    pub fn shift_columns(&self, shift: isize) -> Self {
        let n = self.theta_bins;
        let mut out = self.clone();
        for r in 0..self.l_bins {
            for c in 0..n {
                let src = (c as isize - shift).rem_euclid(n as isize) as usize;
                out.values[r * n + c] = self.values[r * n + src];
            }
        }
        out
    }

    /// Paints detections into the map with their score, keeping the maximum.
    pub fn paint(&mut self, detections: &[KnotDetection]) {
        for d in detections {
            for &(r, c) in &d.cells {
                let i = r * self.theta_bins + c;
                self.values[i] = self.values[i].max(d.score.clamp(0.0, 1.0));
            }
        }
    }
}

/// Grid-aligned bounding box. Columns run from `col_start` to `col_end`
/// inclusive, wrapping through 0 when `col_end < col_start`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub row_min: usize,
    pub row_max: usize,
    pub col_start: usize,
    pub col_end: usize,
}

impl std::fmt::Display for BoundingBox {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}:{}:{}", self.row_min, self.row_max, self.col_start, self.col_end)
    }
}

impl std::str::FromStr for BoundingBox {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let parts: Vec<usize> = s
            .split(':')
            .map(|p| p.trim().parse::<usize>().map_err(|e| format!("bbox `{s}`: {e}")))
            .collect::<std::result::Result<_, _>>()?;
        match parts.as_slice() {
            [a, b, c, d] => Ok(Self {
                row_min: *a,
                row_max: *b,
                col_start: *c,
                col_end: *d,
            }),
            _ => Err(format!("bbox `{s}` must have four `:`-separated fields")),
        }
    }
}

/// One detected (or ground-truth) knot on the height-map grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnotDetection {
    /// `(row, col)` cells, sorted and unique.
    pub cells: Vec<(usize, usize)>,
    pub theta_deg: f64,
    pub l_mm: f64,
    pub score: f64,
    pub bbox: BoundingBox,
}

impl KnotDetection {
    /// Builds a detection from its cells, deriving centroid and bounding box.
    /// The θ centroid is a circular mean so seam-straddling masks stay correct.
    pub fn from_cells(
        mut cells: Vec<(usize, usize)>,
        score: f64,
        theta_bins: usize,
        l_bins: usize,
        l_extent: f64,
    ) -> Self {
        cells.sort_unstable();
        cells.dedup();
        assert!(!cells.is_empty(), "detection mask must be non-empty");
        let dtheta = 360.0 / theta_bins as f64;
        let dl = node_spacing(l_extent, l_bins);
        let (mut s, mut c, mut lsum) = (0.0, 0.0, 0.0);
        for &(r, col) in &cells {
            let a = (col as f64 * dtheta).to_radians();
            s += a.sin();
            c += a.cos();
            lsum += r as f64 * dl;
        }
        let theta_deg = if s.abs() < 1e-12 && c.abs() < 1e-12 {
            cells[0].1 as f64 * dtheta
        } else {
            crate::wrap_deg(s.atan2(c).to_degrees())
        };
        let row_min = cells.iter().map(|c| c.0).min().unwrap_or(0);
        let row_max = cells.iter().map(|c| c.0).max().unwrap_or(0);
        let (col_start, col_end) = covering_arc(&cells, theta_bins);
        Self {
            theta_deg,
            l_mm: lsum / cells.len() as f64,
            score,
            bbox: BoundingBox {
                row_min,
                row_max,
                col_start,
                col_end,
            },
            cells,
        }
    }

    pub fn area_cells(&self) -> usize {
        self.cells.len()
    }
}

/// Shortest circular column arc covering all occupied columns.
fn covering_arc(cells: &[(usize, usize)], n: usize) -> (usize, usize) {
    let mut cols: Vec<usize> = cells.iter().map(|c| c.1).collect();
    cols.sort_unstable();
    cols.dedup();
    if cols.len() == 1 {
        return (cols[0], cols[0]);
    }
    // The largest gap between consecutive occupied columns is left uncovered.
    let mut best_gap = n - cols[cols.len() - 1] + cols[0];
    let mut start = cols[0];
    let mut end = cols[cols.len() - 1];
    for w in cols.windows(2) {
        let gap = w[1] - w[0];
        if gap > best_gap {
            best_gap = gap;
            start = w[1];
            end = w[0];
        }
    }
    (start, end)
}

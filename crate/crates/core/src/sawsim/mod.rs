//! Virtual sawing of synthetic logs.
//!
//! The log is rotated by the sawing angle about its (straightened) pith and
//! every board face is intersected analytically with every knot cone. Knot
//! occupancy is rasterized per face and classified as face, edge or arris.

mod raster;
mod report;

pub use report::{
    all_angle_baseline, classify_appearances, improvement_report, saw_report, write_reports_csv, Baseline,
    BoardSummary, Improvement, KnotAppearance, KnotClass, SawingReport, REPORT_CSV_HEADER,
};

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::sawopt::{Board, SawingPattern};
use crate::synthgen::VirtualLog;
use crate::{Error, Result, Vec3};
use raster::{covered_cells, row_intervals, Cone};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SawParams {
    /// Raster cell size on board faces, mm.
    pub raster_mm: f64,
    /// Distance from a long board corner within which a knot counts as arris, mm.
    pub arris_band_mm: f64,
}

impl Default for SawParams {
    fn default() -> Self {
        Self {
            raster_mm: 1.0,
            arris_band_mm: 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FaceKind {
    /// `y = cy − h/2`
    Bottom,
    /// `y = cy + h/2`
    Top,
    /// `x = cx − w/2`
    Left,
    /// `x = cx + w/2`
    Right,
    /// `z = 0`
    ButtEnd,
    /// `z = length`
    TopEnd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FaceType {
    Wide,
    Narrow,
    End,
}

/// Horizontal run of occupied cells `[col_start, col_end]` in one row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Run {
    pub row: usize,
    pub col_start: usize,
    pub col_end: usize,
    pub knot: u32,
}

impl Run {
    pub fn len(&self) -> usize {
        self.col_end - self.col_start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Knot occupancy of one face. Columns run along the face's horizontal
/// axis, rows along z (long faces) or y (end faces); cell centers sit at
/// `(i + 0.5)·res` from the face origin. Each cell holds at most one knot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaceRaster {
    pub kind: FaceKind,
    pub face_type: FaceType,
    pub cols: usize,
    pub rows: usize,
    pub res: f64,
    /// Sorted by row, then column.
    pub runs: Vec<Run>,
}

impl FaceRaster {
    pub fn is_empty(&self) -> bool {
        self.runs.is_empty()
    }

    pub fn occupied_cells(&self) -> usize {
        self.runs.iter().map(Run::len).sum()
    }

    /// Dense occupancy, `knot id + 1` per cell and 0 when empty.
    pub fn dense(&self) -> Vec<u32> {
        let mut out = vec![0; self.cols * self.rows];
        for r in &self.runs {
            for c in r.col_start..=r.col_end {
                out[r.row * self.cols + c] = r.knot + 1;
            }
        }
        out
    }

    /// Binary PGM image; occupied cells are white.
    pub fn write_pgm<W: Write>(&self, w: &mut W) -> Result<()> {
        write!(w, "P5\n{} {}\n255\n", self.cols, self.rows)?;
        let bytes: Vec<u8> = self.dense().iter().map(|&v| if v > 0 { 255 } else { 0 }).collect();
        w.write_all(&bytes)?;
        Ok(())
    }
}

/// The six face rasters of one board.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoardSurfaceGrid {
    pub board: usize,
    pub width: f64,
    pub height: f64,
    pub faces: Vec<FaceRaster>,
}

struct FaceGeometry {
    kind: FaceKind,
    face_type: FaceType,
    origin: Vec3,
    /// Column direction (horizontal).
    e: Vec3,
    /// Row direction.
    f: Vec3,
    width: f64,
    height: f64,
}

fn face_geometry(b: &Board, length: f64) -> [FaceGeometry; 6] {
    let x0 = b.cx - b.w / 2.0;
    let x1 = b.cx + b.w / 2.0;
    let y0 = b.cy - b.h / 2.0;
    let y1 = b.cy + b.h / 2.0;
    let (ex, ey, ez) = (Vec3::x(), Vec3::y(), Vec3::z());
    let (y_type, x_type) = if b.w >= b.h {
        (FaceType::Wide, FaceType::Narrow)
    } else {
        (FaceType::Narrow, FaceType::Wide)
    };
    let face = |kind, face_type, origin, e, f, width, height| FaceGeometry {
        kind,
        face_type,
        origin,
        e,
        f,
        width,
        height,
    };
    [
        face(FaceKind::Bottom, y_type, Vec3::new(x0, y0, 0.0), ex, ez, b.w, length),
        face(FaceKind::Top, y_type, Vec3::new(x0, y1, 0.0), ex, ez, b.w, length),
        face(FaceKind::Left, x_type, Vec3::new(x0, y0, 0.0), ey, ez, b.h, length),
        face(FaceKind::Right, x_type, Vec3::new(x1, y0, 0.0), ey, ez, b.h, length),
        face(FaceKind::ButtEnd, FaceType::End, Vec3::new(x0, y0, 0.0), ex, ey, b.w, b.h),
        face(FaceKind::TopEnd, FaceType::End, Vec3::new(x0, y0, length), ex, ey, b.w, b.h),
    ]
}

/// Knot cones after rotating the log by `−angle_deg` about the pith.
fn rotated_cones(log: &VirtualLog, angle_deg: f64) -> Vec<Cone> {
    log.knots
        .iter()
        .map(|k| {
            let phi = (k.theta_pos - angle_deg).to_radians();
            let surface = log.radius_at(k.l_pos);
            Cone {
                id: k.id,
                apex: Vec3::new(0.0, 0.0, k.l_pos),
                axis: Vec3::new(phi.cos(), phi.sin(), 0.0),
                r0: k.apex_radius,
                slope: (k.base_radius - k.apex_radius) / surface,
            }
        })
        .collect()
}

/// Axis-aligned bounds of the part of a cone inside a log of radius `r_max`.
fn cone_bounds(cone: &Cone, r_max: f64) -> (Vec3, Vec3) {
    let reach = cone.r0 + cone.slope * r_max;
    let tip = cone.apex + cone.axis * r_max;
    let lo = Vec3::new(cone.apex.x.min(tip.x), cone.apex.y.min(tip.y), cone.apex.z) - Vec3::repeat(reach);
    let hi = Vec3::new(cone.apex.x.max(tip.x), cone.apex.y.max(tip.y), cone.apex.z) + Vec3::repeat(reach);
    (lo, hi)
}

fn rasterize_face(g: &FaceGeometry, cones: &[Cone], log: &VirtualLog, res: f64) -> FaceRaster {
    let cols = (g.width / res).round().max(0.0) as usize;
    let rows = (g.height / res).round().max(0.0) as usize;
    let r_max = log.butt_radius.max(log.top_radius);
    let mut runs = Vec::new();
    let face_lo = g.origin;
    let face_hi = g.origin + g.e * g.width + g.f * g.height;
    for cone in cones {
        let (lo, hi) = cone_bounds(cone, r_max);
        let miss = (0..3).any(|a| {
            face_lo[a].min(face_hi[a]) > hi[a] + res || face_lo[a].max(face_hi[a]) < lo[a] - res
        });
        if miss {
            continue;
        }
        // Rows whose line can meet the cone's bounding box.
        let (v_lo, v_hi) = {
            let axis = if g.f.z != 0.0 { 2 } else { 1 };
            let base = g.origin[axis];
            ((lo[axis] - base) / res - 1.0, (hi[axis] - base) / res + 1.0)
        };
        let r_first = v_lo.floor().max(0.0) as usize;
        let r_last = (v_hi.ceil().max(0.0) as usize).min(rows);
        for row in r_first..r_last {
            let v = (row as f64 + 0.5) * res;
            let p0 = g.origin + g.f * v;
            let radius = log.radius_at(p0.z);
            for iv in row_intervals(cone, &p0, &g.e, g.width, radius) {
                if let Some((a, b)) = covered_cells(iv, res, cols) {
                    runs.push(Run {
                        row,
                        col_start: a,
                        col_end: b,
                        knot: cone.id,
                    });
                }
            }
        }
    }
    FaceRaster {
        kind: g.kind,
        face_type: g.face_type,
        cols,
        rows,
        res,
        runs: resolve_overlaps(runs),
    }
}

/// Cells claimed by several knots go to the lowest knot id.
fn resolve_overlaps(mut runs: Vec<Run>) -> Vec<Run> {
    runs.sort_by_key(|r| (r.row, r.knot, r.col_start));
    let mut out: Vec<Run> = Vec::with_capacity(runs.len());
    let mut row_begin = 0;
    for r in runs {
        if out.last().is_some_and(|l| l.row != r.row) {
            row_begin = out.len();
        }
        let mut pieces = vec![(r.col_start, r.col_end)];
        for taken in &out[row_begin..] {
            if taken.knot == r.knot {
                continue;
            }
            pieces = pieces
                .into_iter()
                .flat_map(|(a, b)| {
                    let mut v = Vec::new();
                    if taken.col_end < a || taken.col_start > b {
                        v.push((a, b));
                    } else {
                        if taken.col_start > a {
                            v.push((a, taken.col_start - 1));
                        }
                        if taken.col_end < b {
                            v.push((taken.col_end + 1, b));
                        }
                    }
                    v
                })
                .collect();
        }
        out.extend(pieces.into_iter().map(|(a, b)| Run {
            row: r.row,
            col_start: a,
            col_end: b,
            knot: r.knot,
        }));
    }
    out.sort_by_key(|r| (r.row, r.col_start));
    out
}

/// Rasterizes knot occupancy on all faces of all boards after rotating the
/// log by `angle_deg`. The pith is treated as straight.
pub fn virtual_saw(log: &VirtualLog, pattern: &SawingPattern, angle_deg: f64, params: &SawParams) -> Result<Vec<BoardSurfaceGrid>> {
    if !(params.raster_mm > 0.0 && params.raster_mm.is_finite()) {
        return Err(Error::param("raster_mm", "must be positive"));
    }
    pattern.validate()?;
    let deficit = pattern.outer_radius() - log.min_radius();
    if deficit > 0.0 {
        return Err(Error::PatternDoesNotFit { deficit_mm: deficit });
    }
    let cones = rotated_cones(log, angle_deg);
    Ok(pattern
        .boards
        .iter()
        .enumerate()
        .map(|(i, b)| BoardSurfaceGrid {
            board: i,
            width: b.w,
            height: b.h,
            faces: face_geometry(b, log.length)
                .iter()
                .map(|g| rasterize_face(g, &cones, log, params.raster_mm))
                .collect(),
        })
        .collect())
}

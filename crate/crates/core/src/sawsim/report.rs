use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{virtual_saw, BoardSurfaceGrid, FaceKind, FaceType, SawParams};
use crate::sawopt::SawingPattern;
use crate::synthgen::VirtualLog;
use crate::{Error, Execution, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KnotClass {
    Face,
    Edge,
    Arris,
}

impl fmt::Display for KnotClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KnotClass::Face => "face",
            KnotClass::Edge => "edge",
            KnotClass::Arris => "arris",
        })
    }
}

/// One knot showing on the long surfaces of one board.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnotAppearance {
    pub knot_id: u32,
    pub board_id: usize,
    pub classification: KnotClass,
    /// Total occupied area over the board's long faces, mm².
    pub area_mm2: f64,
    pub face_areas: Vec<(FaceKind, f64)>,
    /// Mean longitudinal position of the occupied cells, mm.
    pub l_mm: f64,
}

#[derive(Default)]
struct Accum {
    faces: BTreeMap<FaceKind, usize>,
    arris: bool,
    narrow: bool,
    cells: usize,
    l_sum: f64,
}

/// Classifies every (knot, board) pair visible on the long faces. A knot is
/// arris when any of its cell centers lies within `arris_band_mm` of a long
/// corner line of the board, edge when it otherwise touches a narrow face,
/// and face otherwise. End faces are ignored.
pub fn classify_appearances(grids: &[BoardSurfaceGrid], arris_band_mm: f64) -> Vec<KnotAppearance> {
    let mut out = Vec::new();
    for g in grids {
        let mut per_knot: BTreeMap<u32, Accum> = BTreeMap::new();
        for face in g.faces.iter().filter(|f| f.face_type != FaceType::End) {
            let res = face.res;
            let width = face.cols as f64 * res;
            for run in &face.runs {
                let a = per_knot.entry(run.knot).or_default();
                let n = run.len();
                *a.faces.entry(face.kind).or_default() += n;
                a.cells += n;
                a.l_sum += n as f64 * (run.row as f64 + 0.5) * res;
                a.narrow |= face.face_type == FaceType::Narrow;
                let first = (run.col_start as f64 + 0.5) * res;
                let last = (run.col_end as f64 + 0.5) * res;
                a.arris |= first <= arris_band_mm || last >= width - arris_band_mm;
            }
        }
        let cell_area = g.faces.first().map_or(1.0, |f| f.res * f.res);
        for (knot, a) in per_knot {
            let classification = if a.arris {
                KnotClass::Arris
            } else if a.narrow {
                KnotClass::Edge
            } else {
                KnotClass::Face
            };
            out.push(KnotAppearance {
                knot_id: knot,
                board_id: g.board,
                classification,
                area_mm2: a.cells as f64 * cell_area,
                face_areas: a.faces.into_iter().map(|(k, c)| (k, c as f64 * cell_area)).collect(),
                l_mm: a.l_sum / a.cells as f64,
            });
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoardSummary {
    pub board: usize,
    pub face: usize,
    pub edge: usize,
    pub arris: usize,
    pub arris_area_mm2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SawingReport {
    pub angle_deg: f64,
    pub appearances: Vec<KnotAppearance>,
    pub arris_count: usize,
    pub total_count: usize,
    pub arris_area_dm2: f64,
    pub boards: Vec<BoardSummary>,
}

impl SawingReport {
    pub fn from_appearances(angle_deg: f64, n_boards: usize, appearances: Vec<KnotAppearance>) -> Self {
        let mut boards: Vec<BoardSummary> = (0..n_boards)
            .map(|board| BoardSummary {
                board,
                face: 0,
                edge: 0,
                arris: 0,
                arris_area_mm2: 0.0,
            })
            .collect();
        let mut arris_area = 0.0;
        for a in &appearances {
            let b = &mut boards[a.board_id];
            match a.classification {
                KnotClass::Face => b.face += 1,
                KnotClass::Edge => b.edge += 1,
                KnotClass::Arris => {
                    b.arris += 1;
                    b.arris_area_mm2 += a.area_mm2;
                    arris_area += a.area_mm2;
                }
            }
        }
        Self {
            angle_deg,
            arris_count: boards.iter().map(|b| b.arris).sum(),
            total_count: appearances.len(),
            arris_area_dm2: arris_area / 10_000.0,
            appearances,
            boards,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Virtual sawing followed by classification.
pub fn saw_report(log: &VirtualLog, pattern: &SawingPattern, angle_deg: f64, params: &SawParams) -> Result<SawingReport> {
    let grids = virtual_saw(log, pattern, angle_deg, params)?;
    let apps = classify_appearances(&grids, params.arris_band_mm);
    Ok(SawingReport::from_appearances(angle_deg, pattern.boards.len(), apps))
}

pub const REPORT_CSV_HEADER: &str = "log,angle_deg,arris_count,total_count,arris_area_dm2";

/// One summary row per report.
pub fn write_reports_csv<W: Write>(w: &mut W, rows: &[(String, &SawingReport)]) -> Result<()> {
    writeln!(w, "{REPORT_CSV_HEADER}")?;
    for (name, r) in rows {
        writeln!(w, "{},{},{},{},{}", name, r.angle_deg, r.arris_count, r.total_count, r.arris_area_dm2)?;
    }
    Ok(())
}

/// Arris statistics over a full sweep of sawing angles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Baseline {
    pub step_deg: f64,
    pub angles: Vec<f64>,
    pub arris_counts: Vec<usize>,
    pub total_counts: Vec<usize>,
    pub arris_areas_dm2: Vec<f64>,
    pub mean_arris_count: f64,
    pub mean_arris_area_dm2: f64,
    pub mean_total_count: f64,
}

/// Saws at every multiple of `step_deg` in `[0, 360)` and averages. This is
/// the expected outcome of a uniformly random sawing angle.
pub fn all_angle_baseline(
    log: &VirtualLog,
    pattern: &SawingPattern,
    step_deg: f64,
    params: &SawParams,
    execution: Execution,
) -> Result<Baseline> {
    let n = (360.0 / step_deg).round();
    if !(step_deg > 0.0) || n < 1.0 || (n * step_deg - 360.0).abs() > 1e-9 {
        return Err(Error::param("step_deg", format!("{step_deg}° does not divide 360°")));
    }
    let n = n as usize;
    let reports = execution.map_range(n, |i| saw_report(log, pattern, i as f64 * step_deg, params));
    let reports: Vec<SawingReport> = reports.into_iter().collect::<Result<_>>()?;
    let mean = |v: &mut dyn Iterator<Item = f64>| v.sum::<f64>() / n as f64;
    Ok(Baseline {
        step_deg,
        angles: reports.iter().map(|r| r.angle_deg).collect(),
        arris_counts: reports.iter().map(|r| r.arris_count).collect(),
        total_counts: reports.iter().map(|r| r.total_count).collect(),
        arris_areas_dm2: reports.iter().map(|r| r.arris_area_dm2).collect(),
        mean_arris_count: mean(&mut reports.iter().map(|r| r.arris_count as f64)),
        mean_arris_area_dm2: mean(&mut reports.iter().map(|r| r.arris_area_dm2)),
        mean_total_count: mean(&mut reports.iter().map(|r| r.total_count as f64)),
    })
}

/// Optimized sawing compared with the random-angle expectation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Improvement {
    /// `(optimized − mean) / mean` for the arris count; `None` when undefined.
    pub count_change: Option<f64>,
    pub area_change: Option<f64>,
    pub optimized_arris_count: usize,
    pub optimized_total_count: usize,
    pub optimized_arris_area_dm2: f64,
    pub baseline_mean_arris_count: f64,
    pub baseline_mean_arris_area_dm2: f64,
}

fn relative_change(opt: f64, mean: f64) -> Option<f64> {
    if mean > 0.0 {
        Some((opt - mean) / mean)
    } else if opt == 0.0 {
        Some(0.0)
    } else {
        None
    }
}

pub fn improvement_report(optimized: &SawingReport, baseline: &Baseline) -> Improvement {
    Improvement {
        count_change: relative_change(optimized.arris_count as f64, baseline.mean_arris_count),
        area_change: relative_change(optimized.arris_area_dm2, baseline.mean_arris_area_dm2),
        optimized_arris_count: optimized.arris_count,
        optimized_total_count: optimized.total_count,
        optimized_arris_area_dm2: optimized.arris_area_dm2,
        baseline_mean_arris_count: baseline.mean_arris_count,
        baseline_mean_arris_area_dm2: baseline.mean_arris_area_dm2,
    }
}

fn percent(v: Option<f64>, opt: f64, mean: f64) -> String {
    match v {
        Some(x) => format!("{:.1}%", 100.0 * x),
        None => format!("undefined ({opt} vs mean {mean})"),
    }
}

impl Improvement {
    /// Arris share of all appearances, e.g. `20.8% (82 / 394)`.
    pub fn arris_ratio(&self) -> String {
        let (a, t) = (self.optimized_arris_count, self.optimized_total_count);
        if t == 0 {
            format!("- ({a} / {t})")
        } else {
            format!("{:.1}% ({a} / {t})", 100.0 * a as f64 / t as f64)
        }
    }
}

impl fmt::Display for Improvement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "arris count vs. mean:  {}",
            percent(self.count_change, self.optimized_arris_count as f64, self.baseline_mean_arris_count)
        )?;
        writeln!(
            f,
            "arris area vs. mean:   {}",
            percent(self.area_change, self.optimized_arris_area_dm2, self.baseline_mean_arris_area_dm2)
        )?;
        write!(f, "arris / all knots:     {}", self.arris_ratio())
    }
}

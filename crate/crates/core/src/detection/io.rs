//! `PMAP v1` probability maps and detection CSV files.
//!
//! Detection CSV columns: `id,theta_deg,l_mm,area_cells,score,bbox,log,cells`.
//! The first six are required. `log` groups rows for per-log evaluation and
//! `cells` lists the mask as `row:col` pairs separated by `;`. Without `cells`
//! the bounding box stands in for the mask.

use std::io::{BufRead, Write};
use std::path::Path;

use super::{BoundingBox, KnotDetection, ProbabilityMap};
use crate::heightmap::grid_io::{read_grid, write_grid, GridFile};
use crate::{Error, Result};

impl ProbabilityMap {
    pub fn write<W: Write>(&self, w: &mut W) -> Result<()> {
        let g = GridFile {
            theta_bins: self.theta_bins,
            l_bins: self.l_bins,
            l_extent: self.l_extent,
            values: self.values.clone(),
        };
        write_grid("PMAP", &g, w)
    }

    pub fn read<R: BufRead>(r: R) -> Result<Self> {
        let g = read_grid("PMAP", r)?;
        Self::from_values(g.theta_bins, g.l_bins, g.l_extent, g.values)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

pub const CSV_HEADER: &str = "id,theta_deg,l_mm,area_cells,score,bbox,log,cells";

/// A detection row with the log it belongs to.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionRecord {
    pub id: usize,
    pub log: String,
    pub detection: KnotDetection,
}

pub fn write_detections_csv<W: Write>(w: &mut W, log: &str, detections: &[KnotDetection]) -> Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    append_detections_csv(w, log, detections)
}

pub fn append_detections_csv<W: Write>(w: &mut W, log: &str, detections: &[KnotDetection]) -> Result<()> {
    for (id, d) in detections.iter().enumerate() {
        let cells: Vec<String> = d.cells.iter().map(|(r, c)| format!("{r}:{c}")).collect();
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            id,
            d.theta_deg,
            d.l_mm,
            d.area_cells(),
            d.score,
            d.bbox,
            log,
            cells.join(";")
        )?;
    }
    Ok(())
}

fn bbox_cells(b: &BoundingBox, theta_bins: Option<usize>) -> Vec<(usize, usize)> {
    let cols: Vec<usize> = if b.col_end >= b.col_start {
        (b.col_start..=b.col_end).collect()
    } else {
        let n = theta_bins.unwrap_or(b.col_start + 1);
        (b.col_start..n).chain(0..=b.col_end).collect()
    };
    (b.row_min..=b.row_max)
        .flat_map(|r| cols.iter().map(move |&c| (r, c)))
        .collect()
}

/// Reads a detection CSV. `default_log` names rows without a `log` column.
/// `theta_bins` is needed only to expand wrapped boxes when `cells` is absent.
pub fn read_detections_csv<R: BufRead>(r: R, default_log: &str, theta_bins: Option<usize>) -> Result<Vec<DetectionRecord>> {
    let mut out = Vec::new();
    for (idx, line) in r.lines().enumerate() {
        let lineno = idx + 1;
        let line = line?;
        let t = line.trim();
        if t.is_empty() || (lineno == 1 && t.starts_with("id")) {
            continue;
        }
        let f: Vec<&str> = t.split(',').map(str::trim).collect();
        if f.len() < 6 || f.len() > 8 {
            return Err(Error::parse(lineno, format!("expected 6 to 8 columns, got {}", f.len())));
        }
        let num = |k: usize, name: &str| -> Result<f64> {
            f[k].parse::<f64>()
                .map_err(|e| Error::parse(lineno, format!("{name} `{}`: {e}", f[k])))
        };
        let id = f[0]
            .parse::<usize>()
            .map_err(|e| Error::parse(lineno, format!("id `{}`: {e}", f[0])))?;
        let theta_deg = num(1, "theta_deg")?;
        let l_mm = num(2, "l_mm")?;
        let score = num(4, "score")?;
        let bbox: BoundingBox = f[5].parse().map_err(|e: String| Error::parse(lineno, e))?;
        let log = f.get(6).filter(|s| !s.is_empty()).map_or(default_log.to_string(), |s| s.to_string());
        let mut cells: Vec<(usize, usize)> = match f.get(7).filter(|s| !s.is_empty()) {
            Some(s) => s
                .split(';')
                .map(|pair| {
                    let (a, b) = pair
                        .split_once(':')
                        .ok_or_else(|| Error::parse(lineno, format!("cell `{pair}` is not row:col")))?;
                    let a = a.parse::<usize>().map_err(|e| Error::parse(lineno, format!("cell `{pair}`: {e}")))?;
                    let b = b.parse::<usize>().map_err(|e| Error::parse(lineno, format!("cell `{pair}`: {e}")))?;
                    Ok((a, b))
                })
                .collect::<Result<_>>()?,
            None => bbox_cells(&bbox, theta_bins),
        };
        cells.sort_unstable();
        cells.dedup();
        if cells.is_empty() {
            return Err(Error::parse(lineno, "empty mask"));
        }
        out.push(DetectionRecord {
            id,
            log,
            detection: KnotDetection {
                cells,
                theta_deg,
                l_mm,
                score,
                bbox,
            },
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_roundtrip() {
        let d = vec![
            KnotDetection::from_cells(vec![(1, 359), (1, 0), (2, 0)], 0.75, 360, 10, 90.0),
            KnotDetection::from_cells(vec![(5, 20)], 1.0, 360, 10, 90.0),
        ];
        let mut buf = Vec::new();
        write_detections_csv(&mut buf, "log7", &d).unwrap();
        let back = read_detections_csv(buf.as_slice(), "x", None).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].log, "log7");
        assert_eq!(back[0].detection, d[0]);
        assert_eq!(back[1].detection, d[1]);
    }

    #[test]
    fn bbox_only_rows() {
        let text = "id,theta_deg,l_mm,area_cells,score,bbox\n0,0,10,6,0.5,1:2:359:0\n";
        let recs = read_detections_csv(text.as_bytes(), "a", Some(360)).unwrap();
        assert_eq!(recs[0].log, "a");
        assert_eq!(recs[0].detection.cells, vec![(1, 0), (1, 359), (2, 0), (2, 359)]);
    }

    #[test]
    fn malformed_rows_report_line() {
        let text = "id,theta_deg,l_mm,area_cells,score,bbox\n0,0,10,6,0.5,1:2:3:4\n1,abc,10,6,0.5,1:2:3:4\n";
        let err = read_detections_csv(text.as_bytes(), "a", None).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
    }

    #[test]
    fn pmap_roundtrip() {
        let p = ProbabilityMap::from_values(3, 2, 5.0, vec![0.0, 0.5, 1.0, 0.25, 0.0, 0.125]).unwrap();
        let mut buf = Vec::new();
        p.write(&mut buf).unwrap();
        assert!(buf.starts_with(b"PMAP v1\n"));
        assert_eq!(ProbabilityMap::read(buf.as_slice()).unwrap(), p);
    }
}

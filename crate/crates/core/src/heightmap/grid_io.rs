//! Text format shared by height maps (`HMAP v1`) and probability maps (`PMAP v1`):
//!
//! ```text
//! HMAP v1
//! theta_bins N
//! l_bins M
//! l_extent_mm F
//! <M lines of N comma-separated values>
//! ```
//!
//! Row `i` holds constant `l`, columns are θ bins ascending from 0°.
//! Values are written with shortest round-trip formatting.

use std::io::{BufRead, Write};
use std::path::Path;

use super::HeightMap;
use crate::{Error, Result};

/// Raw grid contents as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFile {
    pub theta_bins: usize,
    pub l_bins: usize,
    pub l_extent: f64,
    pub values: Vec<f64>,
}

pub fn write_grid<W: Write>(tag: &str, g: &GridFile, w: &mut W) -> Result<()> {
    writeln!(w, "{tag} v1")?;
    writeln!(w, "theta_bins {}", g.theta_bins)?;
    writeln!(w, "l_bins {}", g.l_bins)?;
    writeln!(w, "l_extent_mm {}", g.l_extent)?;
    for row in g.values.chunks(g.theta_bins) {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    Ok(())
}

fn header_value<'a>(line: Option<&'a str>, key: &str, lineno: usize) -> Result<&'a str> {
    let line = line.ok_or_else(|| Error::parse(lineno, format!("missing `{key}`")))?;
    let mut it = line.split_whitespace();
    match (it.next(), it.next(), it.next()) {
        (Some(k), Some(v), None) if k == key => Ok(v),
        _ => Err(Error::parse(lineno, format!("expected `{key} <value>`, got `{line}`"))),
    }
}

pub fn read_grid<R: BufRead>(tag: &str, reader: R) -> Result<GridFile> {
    let lines: Vec<String> = reader.lines().collect::<std::io::Result<_>>()?;
    let mut it = lines.iter().map(|s| s.trim());
    let magic = it.next().unwrap_or("");
    if magic != format!("{tag} v1") {
        return Err(Error::parse(1, format!("expected `{tag} v1` header, got `{magic}`")));
    }
    let theta_bins: usize = header_value(it.next(), "theta_bins", 2)?
        .parse()
        .map_err(|e| Error::parse(2, format!("theta_bins: {e}")))?;
    let l_bins: usize = header_value(it.next(), "l_bins", 3)?
        .parse()
        .map_err(|e| Error::parse(3, format!("l_bins: {e}")))?;
    let l_extent: f64 = header_value(it.next(), "l_extent_mm", 4)?
        .parse()
        .map_err(|e| Error::parse(4, format!("l_extent_mm: {e}")))?;
    if theta_bins == 0 || l_bins == 0 {
        return Err(Error::parse(2, "grid must have at least one bin per axis"));
    }
    let mut values = Vec::with_capacity(theta_bins * l_bins);
    let mut rows = 0;
    for (k, line) in it.enumerate() {
        let lineno = k + 5;
        if line.is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split(',')
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::parse(lineno, format!("bad value `{f}`: {e}")))
            })
            .collect::<Result<_>>()?;
        if row.len() != theta_bins {
            return Err(Error::parse(lineno, format!("expected {theta_bins} values, got {}", row.len())));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::parse(lineno, "non-finite value"));
        }
        values.extend(row);
        rows += 1;
    }
    if rows != l_bins {
        return Err(Error::parse(lines.len(), format!("expected {l_bins} rows, got {rows}")));
    }
    Ok(GridFile {
        theta_bins,
        l_bins,
        l_extent,
        values,
    })
}

impl HeightMap {
    pub fn to_grid_file(&self) -> GridFile {
        GridFile {
            theta_bins: self.theta_bins,
            l_bins: self.l_bins,
            l_extent: self.l_extent,
            values: self.values.clone(),
        }
    }

    pub fn from_grid_file(g: GridFile) -> Self {
        Self {
            theta_bins: g.theta_bins,
            l_bins: g.l_bins,
            l_extent: g.l_extent,
            values: g.values,
            lambda: None,
        }
    }

    pub fn write<W: Write>(&self, w: &mut W) -> Result<()> {
        write_grid("HMAP", &self.to_grid_file(), w)
    }

    pub fn read<R: BufRead>(r: R) -> Result<Self> {
        read_grid("HMAP", r).map(Self::from_grid_file)
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

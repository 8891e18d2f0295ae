//! Point clouds and their file formats.
//!
//! Two formats are supported:
//!
//! * ASCII XYZ: one `x y z [label]` record per line, millimeters. A negative
//!   label means "no label". Blank lines and lines starting with `#` are skipped.
//! * binary little-endian PLY with float32 `x`, `y`, `z` vertex properties.
//!   Other vertex properties are skipped on read.

use std::io::{BufRead, Write};
use std::path::Path;

use crate::{Error, Result, Vec3};

/// Unordered surface samples of a log, millimeters.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    pub points: Vec<Vec3>,
    /// Per-point knot id, same length as `points` when present.
    pub labels: Option<Vec<Option<u32>>>,
}

impl PointCloud {
    pub fn new(points: Vec<Vec3>) -> Self {
        Self {
            points,
            labels: None,
        }
    }

    pub fn with_labels(points: Vec<Vec3>, labels: Vec<Option<u32>>) -> Result<Self> {
        if labels.len() != points.len() {
            return Err(Error::InvalidInput(format!(
                "{} labels for {} points",
                labels.len(),
                points.len()
            )));
        }
        Ok(Self {
            points,
            labels: Some(labels),
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn label(&self, i: usize) -> Option<u32> {
        self.labels.as_ref().and_then(|l| l[i])
    }

    /// Checks the type invariants: finite coordinates and matching label length.
    pub fn validate(&self) -> Result<()> {
        if let Some(labels) = &self.labels {
            if labels.len() != self.points.len() {
                return Err(Error::InvalidInput("label count differs from point count".into()));
            }
        }
        if let Some(i) = self.points.iter().position(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(Error::InvalidInput(format!("point {i} has a non-finite coordinate")));
        }
        Ok(())
    }

    pub fn validate_non_empty(&self) -> Result<()> {
        if self.is_empty() {
            return Err(Error::InvalidInput("point cloud is empty".into()));
        }
        self.validate()
    }

    pub fn centroid(&self) -> Vec3 {
        let sum: Vec3 = self.points.iter().sum();
        sum / self.points.len().max(1) as f64
    }

    /// Loads `.ply` as binary PLY and anything else as XYZ text.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path)?;
        let reader = std::io::BufReader::new(file);
        if is_ply(path) {
            read_ply(reader)
        } else {
            read_xyz(reader)
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(file);
        if is_ply(path) {
            write_ply(self, &mut w)?;
        } else {
            write_xyz(self, &mut w)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn is_ply(path: &Path) -> bool {
    path.extension()
        .map(|e| e.eq_ignore_ascii_case("ply"))
        .unwrap_or(false)
}

pub fn read_xyz<R: BufRead>(reader: R) -> Result<PointCloud> {
    let mut points = Vec::new();
    let mut labels = Vec::new();
    let mut any_label = false;
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = t
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|s| !s.is_empty())
            .collect();
        if fields.len() < 3 || fields.len() > 4 {
            return Err(Error::parse(lineno, format!("expected 3 or 4 fields, got {}", fields.len())));
        }
        let mut xyz = [0.0; 3];
        for (k, f) in fields[..3].iter().enumerate() {
            xyz[k] = f
                .parse::<f64>()
                .map_err(|e| Error::parse(lineno, format!("bad coordinate `{f}`: {e}")))?;
            if !xyz[k].is_finite() {
                return Err(Error::parse(lineno, "non-finite coordinate"));
            }
        }
        points.push(Vec3::new(xyz[0], xyz[1], xyz[2]));
        let label = match fields.get(3) {
            Some(f) => {
                any_label = true;
                let v = f
                    .parse::<i64>()
                    .map_err(|e| Error::parse(lineno, format!("bad label `{f}`: {e}")))?;
                u32::try_from(v).ok()
            }
            None => None,
        };
        labels.push(label);
    }
    Ok(PointCloud {
        points,
        labels: any_label.then_some(labels),
    })
}

pub fn write_xyz<W: Write>(cloud: &PointCloud, w: &mut W) -> Result<()> {
    for (i, p) in cloud.points.iter().enumerate() {
        match &cloud.labels {
            Some(labels) => {
                let l = labels[i].map(i64::from).unwrap_or(-1);
                writeln!(w, "{} {} {} {}", p.x, p.y, p.z, l)?;
            }
            None => writeln!(w, "{} {} {}", p.x, p.y, p.z)?,
        }
    }
    Ok(())
}

fn ply_type_size(ty: &str) -> Option<usize> {
    Some(match ty {
        "char" | "uchar" | "int8" | "uint8" => 1,
        "short" | "ushort" | "int16" | "uint16" => 2,
        "int" | "uint" | "float" | "int32" | "uint32" | "float32" => 4,
        "double" | "float64" => 8,
        _ => return None,
    })
}

pub fn read_ply<R: BufRead>(mut reader: R) -> Result<PointCloud> {
    let mut line = String::new();
    let mut lineno = 0;
    let mut next_line = |reader: &mut R, line: &mut String| -> Result<usize> {
        line.clear();
        lineno += 1;
        if reader.read_line(line)? == 0 {
            return Err(Error::parse(lineno, "unexpected end of PLY header"));
        }
        Ok(lineno)
    };

    let n = next_line(&mut reader, &mut line)?;
    if line.trim() != "ply" {
        return Err(Error::parse(n, "missing `ply` magic"));
    }
    let mut vertex_count = None;
    let mut in_vertex = false;
    let mut offsets = [None::<usize>; 3];
    let mut stride = 0usize;
    let mut before_vertex_elements = false;
    loop {
        let n = next_line(&mut reader, &mut line)?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        match fields.as_slice() {
            ["format", fmt, _] => {
                if *fmt != "binary_little_endian" {
                    return Err(Error::parse(n, format!("unsupported PLY format `{fmt}`")));
                }
            }
            ["comment", ..] | ["obj_info", ..] => {}
            ["element", name, count] => {
                if vertex_count.is_some() && !in_vertex {
                    // elements after vertex are ignored
                } else if vertex_count.is_none() && *name != "vertex" {
                    before_vertex_elements = true;
                }
                in_vertex = *name == "vertex";
                if in_vertex {
                    vertex_count = Some(
                        count
                            .parse::<usize>()
                            .map_err(|e| Error::parse(n, format!("bad vertex count: {e}")))?,
                    );
                }
            }
            ["property", "list", ..] if in_vertex => {
                return Err(Error::parse(n, "list properties on vertices are not supported"));
            }
            ["property", ty, name] if in_vertex => {
                let size = ply_type_size(ty)
                    .ok_or_else(|| Error::parse(n, format!("unknown property type `{ty}`")))?;
                let axis = match *name {
                    "x" => Some(0),
                    "y" => Some(1),
                    "z" => Some(2),
                    _ => None,
                };
                if let Some(a) = axis {
                    if !matches!(*ty, "float" | "float32") {
                        return Err(Error::parse(n, format!("property `{name}` must be float32")));
                    }
                    offsets[a] = Some(stride);
                }
                stride += size;
            }
            ["property", ..] => {}
            ["end_header"] => break,
            _ => return Err(Error::parse(n, format!("unrecognized header line `{}`", line.trim()))),
        }
    }
    if before_vertex_elements {
        return Err(Error::parse(lineno, "vertex must be the first PLY element"));
    }
    let count = vertex_count.ok_or_else(|| Error::parse(lineno, "no vertex element"))?;
    let [ox, oy, oz] = offsets;
    let (ox, oy, oz) = match (ox, oy, oz) {
        (Some(x), Some(y), Some(z)) => (x, y, z),
        _ => return Err(Error::parse(lineno, "vertex element lacks x/y/z")),
    };
    let mut buf = vec![0u8; stride];
    let mut points = Vec::with_capacity(count);
    let f = |buf: &[u8], o: usize| f32::from_le_bytes([buf[o], buf[o + 1], buf[o + 2], buf[o + 3]]) as f64;
    for _ in 0..count {
        reader.read_exact(&mut buf)?;
        points.push(Vec3::new(f(&buf, ox), f(&buf, oy), f(&buf, oz)));
    }
    Ok(PointCloud::new(points))
}

pub fn write_ply<W: Write>(cloud: &PointCloud, w: &mut W) -> Result<()> {
    writeln!(w, "ply")?;
    writeln!(w, "format binary_little_endian 1.0")?;
    writeln!(w, "element vertex {}", cloud.len())?;
    writeln!(w, "property float x")?;
    writeln!(w, "property float y")?;
    writeln!(w, "property float z")?;
    writeln!(w, "end_header")?;
    for p in &cloud.points {
        for c in p.iter() {
            w.write_all(&(*c as f32).to_le_bytes())?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn xyz_with_and_without_labels() {
        let text = "# header\n1 2 3\n4.5 -1 0 7\n\n0 0 0 -1\n";
        let c = read_xyz(text.as_bytes()).unwrap();
        assert_eq!(c.len(), 3);
        assert_eq!(c.labels, Some(vec![None, Some(7), None]));
        assert_eq!(c.points[1], Vec3::new(4.5, -1.0, 0.0));

        let mut out = Vec::new();
        write_xyz(&c, &mut out).unwrap();
        assert_eq!(read_xyz(out.as_slice()).unwrap(), c);
    }

    #[test]
    fn xyz_reports_line_numbers() {
        let err = read_xyz("1 2 3\n1 2\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        let err = read_xyz("1 2 3\n1 x 3\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }

    #[test]
    fn ply_roundtrip_is_float32_exact() {
        let c = PointCloud::new(vec![Vec3::new(0.5, -2.25, 1000.0), Vec3::new(1.0, 2.0, 3.0)]);
        let mut out = Vec::new();
        write_ply(&c, &mut out).unwrap();
        let back = read_ply(out.as_slice()).unwrap();
        assert_eq!(back.points, c.points);
    }

    #[test]
    fn ply_skips_extra_properties() {
        let mut data = b"ply\nformat binary_little_endian 1.0\ncomment x\nelement vertex 1\nproperty uchar red\nproperty float x\nproperty float y\nproperty float z\nproperty double w\nend_header\n".to_vec();
        data.push(255);
        for v in [1.0f32, 2.0, 3.0] {
            data.extend_from_slice(&v.to_le_bytes());
        }
        data.extend_from_slice(&9.0f64.to_le_bytes());
        let c = read_ply(data.as_slice()).unwrap();
        assert_eq!(c.points, vec![Vec3::new(1.0, 2.0, 3.0)]);
    }

    #[test]
    fn ply_rejects_ascii() {
        let data = b"ply\nformat ascii 1.0\nelement vertex 0\nend_header\n";
        assert!(read_ply(&data[..]).is_err());
    }

    #[test]
    fn label_length_invariant() {
        assert!(PointCloud::with_labels(vec![Vec3::zeros()], vec![]).is_err());
        let mut c = PointCloud::new(vec![Vec3::new(f64::NAN, 0.0, 0.0)]);
        assert!(c.validate().is_err());
        c.points[0].x = 0.0;
        assert!(c.validate_non_empty().is_ok());
        assert!(PointCloud::default().validate_non_empty().is_err());
    }
}

//! Point-cloud container and file formats (binary PLY and CSV).
//!
//! Exported files carry the generating seed in a header comment so a scan can
//! be traced back to the simulator inputs that produced it.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::Vector3;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CloudIoError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: malformed {format} ({detail})")]
    Malformed {
        path: String,
        format: &'static str,
        detail: String,
    },
}

fn io_err(path: &Path, source: std::io::Error) -> CloudIoError {
    CloudIoError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn malformed(path: &Path, format: &'static str, detail: impl Into<String>) -> CloudIoError {
    CloudIoError::Malformed {
        path: path.display().to_string(),
        format,
        detail: detail.into(),
    }
}

/// Ordered set of 3D points from one lidar sweep, in the sensor frame.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Vector3<f64>>,
}

impl PointCloud {
    pub fn new(points: Vec<Vector3<f64>>) -> Self {
        Self { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Vector3<f64>> {
        self.points.iter()
    }

    /// Writes binary little-endian PLY with double-precision x/y/z.
    ///
    /// `seed` is recorded as a `comment seed <n>` header line.
    pub fn write_ply(&self, path: &Path, seed: u64) -> Result<(), CloudIoError> {
        let file = File::create(path).map_err(|e| io_err(path, e))?;
        let mut w = BufWriter::new(file);
        let header = format!(
            "ply\nformat binary_little_endian 1.0\ncomment seed {}\nelement vertex {}\nproperty double x\nproperty double y\nproperty double z\nend_header\n",
            seed,
            self.points.len()
        );
        w.write_all(header.as_bytes()).map_err(|e| io_err(path, e))?;
        for p in &self.points {
            for c in [p.x, p.y, p.z] {
                w.write_all(&c.to_le_bytes()).map_err(|e| io_err(path, e))?;
            }
        }
        w.flush().map_err(|e| io_err(path, e))
    }

    /// Reads the binary PLY subset produced by [`PointCloud::write_ply`].
    ///
    /// Returns the cloud and the seed recorded in the header, if present.
    pub fn read_ply(path: &Path) -> Result<(Self, Option<u64>), CloudIoError> {
        let file = File::open(path).map_err(|e| io_err(path, e))?;
        let mut reader = BufReader::new(file);
        let mut vertex_count: Option<usize> = None;
        let mut seed = None;
        let mut properties: Vec<String> = Vec::new();
        loop {
            let mut line = String::new();
            let n = reader.read_line(&mut line).map_err(|e| io_err(path, e))?;
            if n == 0 {
                return Err(malformed(path, "PLY", "missing end_header"));
            }
            let line = line.trim_end();
            if line == "end_header" {
                break;
            }
            let mut fields = line.split_whitespace();
            match fields.next() {
                Some("ply") => {}
                Some("format") => {
                    if fields.next() != Some("binary_little_endian") {
                        return Err(malformed(path, "PLY", "unsupported format"));
                    }
                }
                Some("comment") => {
                    if fields.next() == Some("seed") {
                        seed = fields.next().and_then(|s| s.parse().ok());
                    }
                }
                Some("element") => {
                    if fields.next() == Some("vertex") {
                        vertex_count = fields.next().and_then(|s| s.parse().ok());
                    } else {
                        return Err(malformed(path, "PLY", "unsupported element"));
                    }
                }
                Some("property") => {
                    let ty = fields.next().unwrap_or("");
                    let name = fields.next().unwrap_or("");
                    if ty != "double" {
                        return Err(malformed(path, "PLY", format!("unsupported property type {ty}")));
                    }
                    properties.push(name.to_string());
                }
                _ => {}
            }
        }
        if properties != ["x", "y", "z"] {
            return Err(malformed(path, "PLY", "expected double x/y/z properties"));
        }
        let count =
            vertex_count.ok_or_else(|| malformed(path, "PLY", "missing element vertex"))?;
        let mut buf = vec![0u8; count * 24];
        reader.read_exact(&mut buf).map_err(|e| io_err(path, e))?;
        let mut points = Vec::with_capacity(count);
        for chunk in buf.chunks_exact(24) {
            let x = f64::from_le_bytes(chunk[0..8].try_into().unwrap());
            let y = f64::from_le_bytes(chunk[8..16].try_into().unwrap());
            let z = f64::from_le_bytes(chunk[16..24].try_into().unwrap());
            points.push(Vector3::new(x, y, z));
        }
        Ok((Self { points }, seed))
    }

    /// Writes one `x,y,z` line per point, preceded by a `# seed <n>` comment.
    pub fn write_csv(&self, path: &Path, seed: u64) -> Result<(), CloudIoError> {
        let file = File::create(path).map_err(|e| io_err(path, e))?;
        let mut w = BufWriter::new(file);
        writeln!(w, "# seed {seed}").map_err(|e| io_err(path, e))?;
        writeln!(w, "x,y,z").map_err(|e| io_err(path, e))?;
        for p in &self.points {
            writeln!(w, "{},{},{}", p.x, p.y, p.z).map_err(|e| io_err(path, e))?;
        }
        w.flush().map_err(|e| io_err(path, e))
    }

    /// Reads the CSV layout produced by [`PointCloud::write_csv`].
    pub fn read_csv(path: &Path) -> Result<(Self, Option<u64>), CloudIoError> {
        let file = File::open(path).map_err(|e| io_err(path, e))?;
        let reader = BufReader::new(file);
        let mut points = Vec::new();
        let mut seed = None;
        for (lineno, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| io_err(path, e))?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                let mut fields = rest.split_whitespace();
                if fields.next() == Some("seed") {
                    seed = fields.next().and_then(|s| s.parse().ok());
                }
                continue;
            }
            if line == "x,y,z" {
                continue;
            }
            let mut fields = line.split(',');
            let mut parse = |name| {
                fields
                    .next()
                    .and_then(|s| s.trim().parse::<f64>().ok())
                    .ok_or_else(|| {
                        malformed(path, "CSV", format!("line {}: bad {name}", lineno + 1))
                    })
            };
            let x = parse("x")?;
            let y = parse("y")?;
            let z = parse("z")?;
            points.push(Vector3::new(x, y, z));
        }
        Ok((Self { points }, seed))
    }

    /// Reads a cloud from either supported format, picked by file extension
    /// (`.ply` is binary PLY, anything else is treated as CSV).
    pub fn read_auto(path: &Path) -> Result<(Self, Option<u64>), CloudIoError> {
        match path.extension().and_then(|e| e.to_str()) {
            Some("ply") => Self::read_ply(path),
            _ => Self::read_csv(path),
        }
    }
}

impl FromIterator<Vector3<f64>> for PointCloud {
    fn from_iter<T: IntoIterator<Item = Vector3<f64>>>(iter: T) -> Self {
        Self {
            points: iter.into_iter().collect(),
        }
    }
}

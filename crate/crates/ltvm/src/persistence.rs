//! On-disk formats.
//!
//! Scans, label files, line lists, maps, and manifests are line-oriented
//! text (diffable, inspectable); SDF grids are a compact binary container.
//! Every floating-point text field uses the shortest decimal that parses
//! back to the identical bits, so text round trips are lossless. Grid
//! planes are stored as f32; the pipeline quantizes its in-memory grids the
//! same way, so a grid that has been through [`SdfGrid::quantize_f32`]
//! round-trips bit-exactly too.
//!
//! Text parse errors report line numbers; structured formats (map, line
//! list, grid) report byte offsets.

use crate::config::{format_f64, Config};
use crate::extract::LineFeature;
use crate::geometry::{CompositeScan, Observation, Pose};
use crate::mapupdate::VectorMap;
use crate::scangen::FeatureClass;
use crate::sdf::SdfGrid;
use nalgebra::{Matrix2, Point2};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PersistError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Line {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}: byte {offset}: {message}")]
    Structured {
        path: PathBuf,
        offset: u64,
        message: String,
    },
    #[error("{path}: unsupported format version '{found}'")]
    UnsupportedVersion { path: PathBuf, found: String },
}

impl PersistError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        PersistError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

fn read_text(path: &Path) -> Result<String, PersistError> {
    std::fs::read_to_string(path).map_err(|e| PersistError::io(path, e))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), PersistError> {
    std::fs::write(path, bytes).map_err(|e| PersistError::io(path, e))
}

// --- scans ---

/// Write one observation per line: `rho alpha pose_x pose_y pose_theta`.
pub fn write_scan(path: &Path, observations: &[Observation]) -> Result<(), PersistError> {
    let mut out = String::with_capacity(observations.len() * 48 + 64);
    out.push_str("# columns: rho alpha pose_x pose_y pose_theta\n");
    for o in observations {
        let _ = writeln!(
            out,
            "{} {} {} {} {}",
            format_f64(o.range),
            format_f64(o.bearing),
            format_f64(o.pose.x),
            format_f64(o.pose.y),
            format_f64(o.pose.theta),
        );
    }
    write_bytes(path, out.as_bytes())
}

/// Read a scan file. `#` starts a comment; blank lines are skipped; a file
/// of only comments is a valid empty scan (unlike a missing file, which is
/// an I/O error).
pub fn read_scan(path: &Path) -> Result<Vec<Observation>, PersistError> {
    let text = read_text(path)?;
    let mut observations = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fail = |message: String| PersistError::Line {
            path: path.to_path_buf(),
            line: line_no,
            message,
        };
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() != 5 {
            return Err(fail(format!(
                "expected 5 fields (rho alpha pose_x pose_y pose_theta), got {}",
                tokens.len()
            )));
        }
        let mut values = [0.0f64; 5];
        for (slot, token) in values.iter_mut().zip(&tokens) {
            *slot = token
                .parse()
                .map_err(|_| fail(format!("invalid number '{token}'")))?;
            if !slot.is_finite() {
                return Err(fail(format!("non-finite value '{token}'")));
            }
        }
        if !(values[0] > 0.0) {
            return Err(fail(format!("rho must be positive, got {}", tokens[0])));
        }
        observations.push(Observation::new(
            values[0],
            values[1],
            Pose::new(values[2], values[3], values[4]),
        ));
    }
    Ok(observations)
}

pub fn read_scan_as_deployment(
    path: &Path,
    deployment_id: u32,
) -> Result<CompositeScan, PersistError> {
    Ok(CompositeScan::new(read_scan(path)?, deployment_id))
}

// --- labels ---

/// Write ground-truth labels, one `LTF`/`STF`/`DF` token per line, parallel
/// to a scan file.
pub fn write_labels(path: &Path, labels: &[FeatureClass]) -> Result<(), PersistError> {
    let mut out = String::with_capacity(labels.len() * 4 + 32);
    out.push_str("# one label per scan observation\n");
    for l in labels {
        out.push_str(l.as_str());
        out.push('\n');
    }
    write_bytes(path, out.as_bytes())
}

pub fn read_labels(path: &Path) -> Result<Vec<FeatureClass>, PersistError> {
    let text = read_text(path)?;
    let mut labels = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let label = FeatureClass::parse(line).ok_or_else(|| PersistError::Line {
            path: path.to_path_buf(),
            line: idx + 1,
            message: format!("unknown label '{line}'"),
        })?;
        labels.push(label);
    }
    Ok(labels)
}

// --- line records (shared by maps and line lists) ---

/// Serialize one line feature as 16 floats: endpoints (4), the upper
/// triangles of the two endpoint covariances (3 + 3), centroid (2), mass
/// (1), and the upper triangle of the scatter (3). All these matrices are
/// symmetric by construction, so the triangles are lossless.
fn format_line_record(l: &LineFeature) -> String {
    let tri = |m: &Matrix2<f64>| {
        format!(
            "{} {} {}",
            format_f64(m[(0, 0)]),
            format_f64(m[(0, 1)]),
            format_f64(m[(1, 1)])
        )
    };
    format!(
        "line {} {} {} {} {} {} {} {} {} {}",
        format_f64(l.p1.x),
        format_f64(l.p1.y),
        format_f64(l.p2.x),
        format_f64(l.p2.y),
        tri(&l.q1),
        tri(&l.q2),
        format_f64(l.centroid.x),
        format_f64(l.centroid.y),
        format_f64(l.mass),
        tri(&l.scatter),
    )
}

fn parse_line_record(
    tokens: &[&str],
    path: &Path,
    offset: u64,
) -> Result<LineFeature, PersistError> {
    let fail = |message: String| PersistError::Structured {
        path: path.to_path_buf(),
        offset,
        message,
    };
    if tokens.len() != 16 {
        return Err(fail(format!(
            "line record needs 16 values, got {}",
            tokens.len()
        )));
    }
    let mut v = [0.0f64; 16];
    for (slot, token) in v.iter_mut().zip(tokens) {
        *slot = token
            .parse()
            .map_err(|_| fail(format!("invalid number '{token}'")))?;
    }
    let tri = |a: f64, b: f64, c: f64| Matrix2::new(a, b, b, c);
    Ok(LineFeature {
        p1: Point2::new(v[0], v[1]),
        p2: Point2::new(v[2], v[3]),
        q1: tri(v[4], v[5], v[6]),
        q2: tri(v[7], v[8], v[9]),
        centroid: Point2::new(v[10], v[11]),
        mass: v[12],
        scatter: tri(v[13], v[14], v[15]),
    })
}

/// Line-oriented reader that tracks the byte offset of each line start.
struct OffsetLines<'a> {
    text: &'a str,
    pos: usize,
}

impl<'a> Iterator for OffsetLines<'a> {
    type Item = (u64, &'a str);
    fn next(&mut self) -> Option<(u64, &'a str)> {
        if self.pos >= self.text.len() {
            return None;
        }
        let start = self.pos;
        let rest = &self.text[start..];
        let (line, advance) = match rest.find('\n') {
            Some(i) => (&rest[..i], i + 1),
            None => (rest, rest.len()),
        };
        self.pos += advance;
        Some((start as u64, line.strip_suffix('\r').unwrap_or(line)))
    }
}

fn offset_lines(text: &str) -> OffsetLines<'_> {
    OffsetLines { text, pos: 0 }
}

/// Common body shared by the map and line-list formats: directives plus
/// `line` records, with a declared record count for truncation detection.
fn parse_records_section(
    path: &Path,
    text: &str,
    header: &str,
    mut directive: impl FnMut(u64, &str, &[&str]) -> Result<bool, PersistError>,
) -> Result<Vec<LineFeature>, PersistError> {
    let mut lines_iter = offset_lines(text);
    let Some((_, first)) = lines_iter.next() else {
        return Err(PersistError::UnsupportedVersion {
            path: path.to_path_buf(),
            found: String::new(),
        });
    };
    if first.trim() != header {
        return Err(PersistError::UnsupportedVersion {
            path: path.to_path_buf(),
            found: first.trim().to_string(),
        });
    }

    let mut declared: Option<usize> = None;
    let mut records = Vec::new();
    for (offset, raw) in lines_iter {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        let fail = |message: String| PersistError::Structured {
            path: path.to_path_buf(),
            offset,
            message,
        };
        match tokens[0] {
            "line" => {
                records.push(parse_line_record(&tokens[1..], path, offset)?);
                if let Some(n) = declared {
                    if records.len() > n {
                        return Err(fail(format!(
                            "more line records than the declared count {n}"
                        )));
                    }
                }
            }
            "lines" => {
                if tokens.len() != 2 {
                    return Err(fail("expected 'lines COUNT'".into()));
                }
                declared = Some(
                    tokens[1]
                        .parse()
                        .map_err(|_| fail(format!("invalid count '{}'", tokens[1])))?,
                );
            }
            key => {
                if !directive(offset, key, &tokens[1..])? {
                    return Err(fail(format!("unknown field '{key}'")));
                }
            }
        }
    }

    let end = text.len() as u64;
    match declared {
        None => Err(PersistError::Structured {
            path: path.to_path_buf(),
            offset: end,
            message: "missing 'lines COUNT' declaration".into(),
        }),
        Some(n) if records.len() < n => Err(PersistError::Structured {
            path: path.to_path_buf(),
            offset: end,
            message: format!(
                "truncated: declared {n} line records, found {}",
                records.len()
            ),
        }),
        Some(_) => Ok(records),
    }
}

// --- maps ---

const MAP_HEADER: &str = "ltvm-map v1";

pub fn write_map(path: &Path, map: &VectorMap) -> Result<(), PersistError> {
    let mut out = String::new();
    let _ = writeln!(out, "{MAP_HEADER}");
    let _ = writeln!(out, "deployments {}", map.deployment_count);
    let _ = writeln!(out, "lines {}", map.lines.len());
    for (key, value) in map.config_snapshot.to_key_values() {
        let _ = writeln!(out, "config {key} {value}");
    }
    for l in &map.lines {
        let _ = writeln!(out, "{}", format_line_record(l));
    }
    write_bytes(path, out.as_bytes())
}

pub fn read_map(path: &Path) -> Result<VectorMap, PersistError> {
    let text = read_text(path)?;
    let mut deployment_count = 0u32;
    let mut config = Config::default();
    let lines = parse_records_section(path, &text, MAP_HEADER, |offset, key, rest| {
        let fail = |message: String| PersistError::Structured {
            path: path.to_path_buf(),
            offset,
            message,
        };
        match key {
            "deployments" => {
                if rest.len() != 1 {
                    return Err(fail("expected 'deployments COUNT'".into()));
                }
                deployment_count = rest[0]
                    .parse()
                    .map_err(|_| fail(format!("invalid count '{}'", rest[0])))?;
                Ok(true)
            }
            "config" => {
                if rest.len() != 2 {
                    return Err(fail("expected 'config KEY VALUE'".into()));
                }
                match config.apply_key_value(rest[0], rest[1]) {
                    Ok(true) => Ok(true),
                    Ok(false) => Err(fail(format!("unknown config key '{}'", rest[0]))),
                    Err(message) => Err(fail(message)),
                }
            }
            _ => Ok(false),
        }
    })?;
    Ok(VectorMap {
        lines,
        deployment_count,
        config_snapshot: config,
    })
}

// --- line lists (standalone extraction output) ---

const LINES_HEADER: &str = "ltvm-lines v1";

pub fn write_lines(path: &Path, lines: &[LineFeature]) -> Result<(), PersistError> {
    let mut out = String::new();
    let _ = writeln!(out, "{LINES_HEADER}");
    let _ = writeln!(out, "lines {}", lines.len());
    for l in lines {
        let _ = writeln!(out, "{}", format_line_record(l));
    }
    write_bytes(path, out.as_bytes())
}

pub fn read_lines(path: &Path) -> Result<Vec<LineFeature>, PersistError> {
    let text = read_text(path)?;
    parse_records_section(path, &text, LINES_HEADER, |_, _, _| Ok(false))
}

// --- SDF grids (binary) ---

const SDF_MAGIC: &[u8; 8] = b"LTVMSDF1";

/// Binary layout, little-endian: the magic, origin (2 x f64), resolution
/// (f64), width and height (u32), normalized flag (u8), deployment count
/// (u32), then the value plane and the weight plane as f32 arrays of
/// width x height each.
pub fn write_sdf(path: &Path, grid: &SdfGrid) -> Result<(), PersistError> {
    let n = grid.width() * grid.height();
    let mut out = Vec::with_capacity(33 + 8 * n);
    out.extend_from_slice(SDF_MAGIC);
    let origin = grid.origin();
    out.extend_from_slice(&origin.x.to_le_bytes());
    out.extend_from_slice(&origin.y.to_le_bytes());
    out.extend_from_slice(&grid.resolution().to_le_bytes());
    out.extend_from_slice(&(grid.width() as u32).to_le_bytes());
    out.extend_from_slice(&(grid.height() as u32).to_le_bytes());
    out.push(grid.normalized() as u8);
    out.extend_from_slice(&grid.deployment_count().to_le_bytes());
    for &v in grid.value_plane() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    for &w in grid.weight_plane() {
        out.extend_from_slice(&(w as f32).to_le_bytes());
    }
    write_bytes(path, &out)
}

struct ByteReader<'a> {
    data: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> ByteReader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], PersistError> {
        if self.pos + n > self.data.len() {
            return Err(PersistError::Structured {
                path: self.path.to_path_buf(),
                offset: self.pos as u64,
                message: format!("truncated while reading {what}"),
            });
        }
        let slice = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn f64(&mut self, what: &str) -> Result<f64, PersistError> {
        Ok(f64::from_le_bytes(
            self.take(8, what)?.try_into().unwrap(),
        ))
    }

    fn u32(&mut self, what: &str) -> Result<u32, PersistError> {
        Ok(u32::from_le_bytes(
            self.take(4, what)?.try_into().unwrap(),
        ))
    }

    fn plane(&mut self, n: usize, what: &str) -> Result<Vec<f64>, PersistError> {
        let bytes = self.take(4 * n, what)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect())
    }
}

pub fn read_sdf(path: &Path) -> Result<SdfGrid, PersistError> {
    let data = std::fs::read(path).map_err(|e| PersistError::io(path, e))?;
    let mut r = ByteReader {
        data: &data,
        pos: 0,
        path,
    };
    let magic = r.take(8, "magic")?;
    if magic != SDF_MAGIC {
        return Err(PersistError::UnsupportedVersion {
            path: path.to_path_buf(),
            found: String::from_utf8_lossy(magic).into_owned(),
        });
    }
    let origin_x = r.f64("origin x")?;
    let origin_y = r.f64("origin y")?;
    let resolution = r.f64("resolution")?;
    let width = r.u32("width")? as usize;
    let height = r.u32("height")? as usize;
    let flag_offset = r.pos as u64;
    let normalized = match r.take(1, "normalized flag")?[0] {
        0 => false,
        1 => true,
        other => {
            return Err(PersistError::Structured {
                path: path.to_path_buf(),
                offset: flag_offset,
                message: format!("normalized flag must be 0 or 1, got {other}"),
            })
        }
    };
    let deployment_count = r.u32("deployment count")?;
    if !(resolution > 0.0 && resolution.is_finite()) && width * height > 0 {
        return Err(PersistError::Structured {
            path: path.to_path_buf(),
            offset: 24,
            message: format!("resolution must be positive, got {resolution}"),
        });
    }
    let n = width
        .checked_mul(height)
        .filter(|&n| n <= (1 << 30))
        .ok_or_else(|| PersistError::Structured {
            path: path.to_path_buf(),
            offset: 32,
            message: format!("implausible grid dimensions {width} x {height}"),
        })?;
    let values = r.plane(n, "value plane")?;
    let weights = r.plane(n, "weight plane")?;
    if r.pos != data.len() {
        return Err(PersistError::Structured {
            path: path.to_path_buf(),
            offset: r.pos as u64,
            message: format!("{} trailing bytes after the weight plane", data.len() - r.pos),
        });
    }
    if n == 0 {
        return Ok(SdfGrid::empty());
    }
    Ok(SdfGrid::from_raw_parts(
        Point2::new(origin_x, origin_y),
        resolution,
        width,
        height,
        values,
        weights,
        normalized,
        deployment_count,
    ))
}

// --- manifests ---

/// Read a run manifest: one scan file per non-comment line, in deployment
/// order. Relative entries resolve against the manifest's directory.
pub fn read_manifest(path: &Path) -> Result<Vec<PathBuf>, PersistError> {
    let text = read_text(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut entries = Vec::new();
    for raw in text.lines() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let entry = PathBuf::from(line);
        entries.push(if entry.is_absolute() {
            entry
        } else {
            base.join(entry)
        });
    }
    Ok(entries)
}

/// Write a manifest of scan files (as given, typically relative).
pub fn write_manifest(path: &Path, entries: &[PathBuf]) -> Result<(), PersistError> {
    let mut out = String::from("# scan files in deployment order\n");
    for e in entries {
        let _ = writeln!(out, "{}", e.display());
    }
    write_bytes(path, out.as_bytes())
}

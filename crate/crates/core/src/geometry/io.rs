//! ASCII PLY and whitespace-delimited XYZ point files.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{PointCloud, Vec3};
use crate::error::{Error, Result};

/// Parses an ASCII PLY document. Only the `vertex` element is read; its
/// `x y z` properties are required and `nx ny nz` are picked up when present.
pub fn parse_ply(text: &str) -> Result<PointCloud> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("ply") {
        return Err(Error::Parse("missing 'ply' magic".into()));
    }

    let mut vertex_count = None;
    let mut skip_before = 0usize;
    let mut in_vertex = false;
    let mut props: Vec<String> = Vec::new();
    let mut seen_vertex = false;
    loop {
        let line = lines
            .next()
            .ok_or_else(|| Error::Parse("unterminated header".into()))?
            .trim();
        let mut tok = line.split_whitespace();
        match tok.next() {
            Some("format") => {
                if tok.next() != Some("ascii") {
                    return Err(Error::Parse("only ascii PLY is supported".into()));
                }
            }
            Some("element") => {
                let name = tok.next().unwrap_or_default();
                let count: usize = tok
                    .next()
                    .and_then(|c| c.parse().ok())
                    .ok_or_else(|| Error::Parse(format!("bad element line: {line}")))?;
                in_vertex = name == "vertex";
                if in_vertex {
                    vertex_count = Some(count);
                    seen_vertex = true;
                } else if !seen_vertex {
                    skip_before += count;
                }
            }
            Some("property") if in_vertex => {
                let name = tok
                    .last()
                    .ok_or_else(|| Error::Parse(format!("bad property line: {line}")))?;
                props.push(name.to_string());
            }
            Some("end_header") => break,
            _ => {}
        }
    }

    let count = vertex_count.ok_or_else(|| Error::Parse("no vertex element".into()))?;
    let col = |name: &str| props.iter().position(|p| p == name);
    let (x, y, z) = match (col("x"), col("y"), col("z")) {
        (Some(x), Some(y), Some(z)) => (x, y, z),
        _ => return Err(Error::Parse("vertex element lacks x/y/z".into())),
    };
    let normal_cols = match (col("nx"), col("ny"), col("nz")) {
        (Some(a), Some(b), Some(c)) => Some((a, b, c)),
        _ => None,
    };

    let mut body = lines.filter(|l| !l.trim().is_empty()).skip(skip_before);
    let mut points = Vec::with_capacity(count);
    let mut normals = normal_cols.map(|_| Vec::with_capacity(count));
    for i in 0..count {
        let line = body
            .next()
            .ok_or_else(|| Error::Parse(format!("expected {count} vertices, found {i}")))?;
        let values: Vec<f64> = line
            .split_whitespace()
            .map(|v| v.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse(format!("vertex {i}: {e}")))?;
        if values.len() < props.len() {
            return Err(Error::Parse(format!("vertex {i} has too few values")));
        }
        points.push(Vec3::new(values[x], values[y], values[z]));
        if let (Some(ns), Some((a, b, c))) = (&mut normals, normal_cols) {
            ns.push(Vec3::new(values[a], values[b], values[c]));
        }
    }
    PointCloud::with_normals(points, normals)
}

/// Writes an ASCII PLY document. `{:?}` float formatting round-trips exactly.
pub fn format_ply(cloud: &PointCloud) -> String {
    let mut out = String::new();
    out.push_str("ply\nformat ascii 1.0\n");
    let _ = writeln!(out, "element vertex {}", cloud.len());
    out.push_str("property double x\nproperty double y\nproperty double z\n");
    if cloud.normals().is_some() {
        out.push_str("property double nx\nproperty double ny\nproperty double nz\n");
    }
    out.push_str("end_header\n");
    for (i, p) in cloud.points().iter().enumerate() {
        let _ = write!(out, "{:?} {:?} {:?}", p.x, p.y, p.z);
        if let Some(ns) = cloud.normals() {
            let n = ns[i];
            let _ = write!(out, " {:?} {:?} {:?}", n.x, n.y, n.z);
        }
        out.push('\n');
    }
    out
}

/// Whitespace-delimited `x y z [nx ny nz]` rows; `#` starts a comment.
pub fn parse_xyz(text: &str) -> Result<PointCloud> {
    let mut points = Vec::new();
    let mut normals = Vec::new();
    let mut with_normals = None;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or_default().trim();
        if line.is_empty() {
            continue;
        }
        let values: Vec<f64> = line
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|s| !s.is_empty())
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))?;
        let has_normal = match values.len() {
            3 => false,
            6 => true,
            n => return Err(Error::Parse(format!("line {}: expected 3 or 6 values, got {n}", lineno + 1))),
        };
        if *with_normals.get_or_insert(has_normal) != has_normal {
            return Err(Error::Parse(format!("line {}: inconsistent column count", lineno + 1)));
        }
        points.push(Vec3::new(values[0], values[1], values[2]));
        if has_normal {
            normals.push(Vec3::new(values[3], values[4], values[5]));
        }
    }
    PointCloud::with_normals(points, with_normals.unwrap_or(false).then_some(normals))
}

/// Reads `.ply` or `.xyz`/`.txt` by extension.
pub fn read_cloud(path: &Path) -> Result<PointCloud> {
    let text = fs::read_to_string(path)?;
    let parsed = match path.extension().and_then(|e| e.to_str()) {
        Some(ext) if ext.eq_ignore_ascii_case("ply") => parse_ply(&text),
        _ => parse_xyz(&text),
    };
    parsed.map_err(|e| e.context(path.display().to_string()))
}

pub fn write_ply(path: &Path, cloud: &PointCloud) -> Result<()> {
    fs::write(path, format_ply(cloud))?;
    Ok(())
}

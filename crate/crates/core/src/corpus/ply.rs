//! Minimal ASCII PLY reader/writer for vertex-only pointclouds.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Point3;

use crate::error::{Error, Result};

/// Reads the `x y z` vertex positions of an ASCII PLY file.
///
/// Extra vertex properties are skipped; elements declared after `vertex`
/// (e.g. faces) are ignored.
pub fn read_ply(path: impl AsRef<Path>) -> Result<Vec<Point3<f64>>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_ply(&text).map_err(|(line, msg)| Error::parse(path, line, msg))
}

fn parse_ply(text: &str) -> std::result::Result<Vec<Point3<f64>>, (usize, String)> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));

    match lines.next() {
        Some((_, "ply")) => {}
        _ => return Err((1, "missing 'ply' magic".into())),
    }

    let mut vertex_count: Option<usize> = None;
    let mut in_vertex = false;
    let mut props: Vec<String> = Vec::new();
    let mut saw_format = false;
    loop {
        let (no, line) = lines.next().ok_or((0, "unterminated header".to_string()))?;
        let mut tok = line.split_whitespace();
        match tok.next() {
            Some("format") => {
                if tok.next() != Some("ascii") {
                    return Err((no, "only 'format ascii 1.0' is supported".into()));
                }
                saw_format = true;
            }
            Some("comment") | Some("obj_info") | None => {}
            Some("element") => {
                let name = tok.next().unwrap_or_default();
                in_vertex = name == "vertex";
                if in_vertex {
                    let n = tok
                        .next()
                        .and_then(|n| n.parse().ok())
                        .ok_or((no, "bad vertex count".to_string()))?;
                    vertex_count = Some(n);
                }
            }
            Some("property") if in_vertex => {
                let parts: Vec<_> = tok.collect();
                if parts.first() == Some(&"list") {
                    return Err((no, "list properties on vertices are not supported".into()));
                }
                let name = parts
                    .last()
                    .ok_or((no, "property without name".to_string()))?;
                props.push(name.to_string());
            }
            Some("property") => {}
            Some("end_header") => break,
            Some(other) => return Err((no, format!("unexpected header keyword '{other}'"))),
        }
    }
    if !saw_format {
        return Err((0, "missing format line".into()));
    }
    let n = vertex_count.ok_or((0, "no vertex element".to_string()))?;
    let col = |name: &str| {
        props
            .iter()
            .position(|p| p == name)
            .ok_or((0, format!("vertex property '{name}' missing")))
    };
    let (ix, iy, iz) = (col("x")?, col("y")?, col("z")?);

    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let (no, line) = lines
            .by_ref()
            .find(|(_, l)| !l.is_empty())
            .ok_or((0, format!("expected {n} vertices, found {}", out.len())))?;
        let values: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| (no, format!("bad number: {e}")))?;
        if values.len() < props.len() {
            return Err((
                no,
                format!("expected {} values, found {}", props.len(), values.len()),
            ));
        }
        out.push(Point3::new(values[ix], values[iy], values[iz]));
    }
    Ok(out)
}

pub fn write_ply(path: impl AsRef<Path>, vertices: &[Point3<f64>]) -> Result<()> {
    let path = path.as_ref();
    let mut s = String::with_capacity(64 + vertices.len() * 40);
    s.push_str("ply\nformat ascii 1.0\n");
    let _ = writeln!(s, "element vertex {}", vertices.len());
    s.push_str("property double x\nproperty double y\nproperty double z\nend_header\n");
    for v in vertices {
        // `{}` on f64 prints the shortest representation that round-trips
        let _ = writeln!(s, "{} {} {}", v.x, v.y, v.z);
    }
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_header_with_extra_properties() {
        let text = "ply\nformat ascii 1.0\ncomment hi\nelement vertex 2\nproperty float y\n\
                    property float x\nproperty float z\nproperty uchar red\n\
                    element face 0\nproperty list uchar int vertex_indices\nend_header\n\
                    1 2 3 255\n4.5 -5 6e1 0\n";
        let v = parse_ply(text).unwrap();
        assert_eq!(
            v,
            vec![Point3::new(2.0, 1.0, 3.0), Point3::new(-5.0, 4.5, 60.0)]
        );
    }

    #[test]
    fn rejects_binary_and_short_bodies() {
        assert!(parse_ply("ply\nformat binary_little_endian 1.0\nend_header\n").is_err());
        let short = "ply\nformat ascii 1.0\nelement vertex 3\nproperty float x\nproperty float y\n\
                     property float z\nend_header\n0 0 0\n";
        assert!(parse_ply(short).is_err());
        assert!(parse_ply("plx\n").is_err());
    }

    #[test]
    fn write_then_read_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.ply");
        let pts = vec![
            Point3::new(0.1, -1e-300, 3.0 / 7.0),
            Point3::new(1e10, 2.5, -0.0),
        ];
        write_ply(&path, &pts).unwrap();
        assert_eq!(read_ply(&path).unwrap(), pts);
    }
}

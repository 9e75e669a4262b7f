//! ASCII OFF snapshots: `OFF`, then `V F 0`, then `V` vertex lines and `F`
//! lines of the form `3 i j k`.

use std::io::Write;

use super::mesh::{Point3, SurfaceMesh};
use crate::error::{Error, Result};

pub fn write_off<W: Write>(mesh: &SurfaceMesh, mut out: W) -> Result<()> {
    writeln!(out, "OFF")?;
    writeln!(out, "{} {} 0", mesh.num_vertices(), mesh.num_triangles())?;
    for p in mesh.vertices() {
        writeln!(out, "{:.16e} {:.16e} {:.16e}", p.x, p.y, p.z)?;
    }
    for [a, b, c] in mesh.triangles() {
        writeln!(out, "3 {a} {b} {c}")?;
    }
    Ok(())
}

pub fn off_string(mesh: &SurfaceMesh) -> String {
    let mut buf = Vec::new();
    write_off(mesh, &mut buf).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("OFF output is ASCII")
}

/// Parses an OFF snapshot. Blank lines and `#` comments are skipped; the
/// resulting mesh is validated like any other.
pub fn parse_off(src: &str) -> Result<SurfaceMesh> {
    let mut lines = src
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());
    let err = |line: usize, message: String| Error::Parse { line, message };

    let (line, header) = lines.next().ok_or_else(|| err(1, "empty input".into()))?;
    if header != "OFF" {
        return Err(err(line, format!("expected `OFF`, found `{header}`")));
    }
    let (line, counts) = lines
        .next()
        .ok_or_else(|| err(line + 1, "missing counts line".into()))?;
    let counts: Vec<&str> = counts.split_whitespace().collect();
    if counts.len() != 3 {
        return Err(err(line, "counts line must be `V F E`".into()));
    }
    let parse_count = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| err(line, format!("bad count `{s}`")))
    };
    let (nv, nf) = (parse_count(counts[0])?, parse_count(counts[1])?);
    parse_count(counts[2])?;
    let remaining = src.len();
    if nv > remaining || nf > remaining {
        return Err(err(line, "counts exceed input size".into()));
    }

    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (line, l) = lines
            .next()
            .ok_or_else(|| err(0, format!("expected {nv} vertices, found {}", vertices.len())))?;
        let coords: Vec<f64> = l
            .split_whitespace()
            .map(|s| s.parse::<f64>().map_err(|_| err(line, format!("bad coordinate `{s}`"))))
            .collect::<Result<_>>()?;
        if coords.len() != 3 {
            return Err(err(line, format!("vertex needs 3 coordinates, got {}", coords.len())));
        }
        vertices.push(Point3::new(coords[0], coords[1], coords[2]));
    }
    let mut triangles = Vec::with_capacity(nf);
    for _ in 0..nf {
        let (line, l) = lines
            .next()
            .ok_or_else(|| err(0, format!("expected {nf} faces, found {}", triangles.len())))?;
        let idx: Vec<usize> = l
            .split_whitespace()
            .map(|s| s.parse::<usize>().map_err(|_| err(line, format!("bad index `{s}`"))))
            .collect::<Result<_>>()?;
        if idx.len() != 4 || idx[0] != 3 {
            return Err(err(line, "face line must be `3 i j k`".into()));
        }
        triangles.push([idx[1], idx[2], idx[3]]);
    }
    if let Some((line, extra)) = lines.next() {
        return Err(err(line, format!("trailing content `{extra}`")));
    }
    SurfaceMesh::new(vertices, triangles)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::presets::{icosphere, torus};

    #[test]
    fn roundtrip_is_exact() {
        for mesh in [icosphere(2).unwrap(), torus(12, 6).unwrap()] {
            let text = off_string(&mesh);
            let back = parse_off(&text).unwrap();
            assert_eq!(back.vertices(), mesh.vertices());
            assert_eq!(back.triangles(), mesh.triangles());
        }
    }

    #[test]
    fn format_is_as_documented() {
        let text = off_string(&icosphere(0).unwrap());
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("OFF"));
        assert_eq!(lines.next(), Some("12 20 0"));
        let v = lines.next().unwrap();
        // 17 significant digits per coordinate
        let first = v.split_whitespace().next().unwrap();
        let mantissa = first.split('e').next().unwrap().trim_start_matches('-').replace('.', "");
        assert_eq!(mantissa.len(), 17);
        assert!(text.lines().last().unwrap().starts_with("3 "));
    }

    #[test]
    fn malformed_inputs_report_lines() {
        assert!(matches!(parse_off(""), Err(Error::Parse { .. })));
        assert!(matches!(parse_off("PLY\n"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse_off("OFF\n1 2\n"), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(
            parse_off("OFF\n1 0 0\n0 0 zz\n"),
            Err(Error::Parse { line: 3, .. })
        ));
        assert!(matches!(
            parse_off("OFF\n99999999999 1 0\n"),
            Err(Error::Parse { line: 2, .. })
        ));
        let mut text = off_string(&icosphere(0).unwrap());
        text.push_str("junk\n");
        assert!(parse_off(&text).is_err());
    }

    #[test]
    fn open_mesh_is_rejected_after_parsing() {
        let text = "OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n";
        assert!(matches!(parse_off(text), Err(Error::InvalidMesh(_))));
    }
}

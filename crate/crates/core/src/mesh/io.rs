//! OFF and ASCII PLY reading and writing.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Point3;

use super::TriangleMesh;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshFormat {
    Off,
    PlyAscii,
}

impl MeshFormat {
    /// Guesses the format from the file extension.
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "off" => Some(MeshFormat::Off),
            "ply" => Some(MeshFormat::PlyAscii),
            _ => None,
        }
    }
}

pub fn load_mesh(path: impl AsRef<Path>, format: MeshFormat) -> Result<TriangleMesh> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    let (vertices, triangles) = match format {
        MeshFormat::Off => {
            parse_off(&text).map_err(|(line, msg)| Error::format(path, line, msg))?
        }
        MeshFormat::PlyAscii => {
            parse_ply(&text).map_err(|(line, msg)| Error::format(path, line, msg))?
        }
    };
    TriangleMesh::new(vertices, triangles)
}

pub fn save_mesh(mesh: &TriangleMesh, path: impl AsRef<Path>, format: MeshFormat) -> Result<()> {
    let text = match format {
        MeshFormat::Off => to_off(mesh),
        MeshFormat::PlyAscii => to_ply(mesh),
    };
    std::fs::write(path, text)?;
    Ok(())
}

type Parsed = (Vec<Point3<f64>>, Vec<[usize; 3]>);
type ParseResult<T> = std::result::Result<T, (usize, String)>;

/// Non-blank lines with comments stripped, paired with 1-based line numbers.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter_map(|(i, line)| {
        let line = line.split('#').next().unwrap_or("").trim();
        (!line.is_empty()).then_some((i + 1, line))
    })
}

fn parse_num<T: std::str::FromStr>(tok: &str, line: usize, what: &str) -> ParseResult<T> {
    tok.parse()
        .map_err(|_| (line, format!("cannot parse {what} from `{tok}`")))
}

fn parse_off(text: &str) -> ParseResult<Parsed> {
    let mut lines = content_lines(text);
    let (first_no, first) = lines.next().ok_or((1, "empty file".to_string()))?;
    let mut header: Vec<&str> = first.split_whitespace().collect();
    if header[0] != "OFF" {
        return Err((
            first_no,
            format!("expected `OFF` header, found `{}`", header[0]),
        ));
    }
    header.remove(0);
    let (counts_line, counts) = if header.is_empty() {
        let (no, l) = lines
            .next()
            .ok_or((first_no, "missing element counts".to_string()))?;
        (no, l.split_whitespace().collect::<Vec<_>>())
    } else {
        (first_no, header)
    };
    if counts.len() < 2 {
        return Err((counts_line, "expected vertex and face counts".into()));
    }
    let nv: usize = parse_num(counts[0], counts_line, "vertex count")?;
    let nf: usize = parse_num(counts[1], counts_line, "face count")?;

    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (no, l) = lines
            .next()
            .ok_or((counts_line, "file ends before all vertices".to_string()))?;
        let toks: Vec<&str> = l.split_whitespace().collect();
        if toks.len() < 3 {
            return Err((no, "vertex needs three coordinates".into()));
        }
        vertices.push(Point3::new(
            parse_num(toks[0], no, "coordinate")?,
            parse_num(toks[1], no, "coordinate")?,
            parse_num(toks[2], no, "coordinate")?,
        ));
    }
    let mut triangles = Vec::with_capacity(nf);
    for _ in 0..nf {
        let (no, l) = lines
            .next()
            .ok_or((counts_line, "file ends before all faces".to_string()))?;
        triangles.push(parse_face(l, no)?);
    }
    Ok((vertices, triangles))
}

fn parse_face(line: &str, no: usize) -> ParseResult<[usize; 3]> {
    let toks: Vec<&str> = line.split_whitespace().collect();
    let k: usize = parse_num(toks[0], no, "face size")?;
    if k != 3 {
        return Err((
            no,
            format!("face has {k} vertices; only triangles are supported"),
        ));
    }
    if toks.len() < 4 {
        return Err((no, "triangle needs three vertex indices".into()));
    }
    Ok([
        parse_num(toks[1], no, "vertex index")?,
        parse_num(toks[2], no, "vertex index")?,
        parse_num(toks[3], no, "vertex index")?,
    ])
}

struct PlyElement {
    name: String,
    count: usize,
    properties: Vec<String>,
}

fn parse_ply(text: &str) -> ParseResult<Parsed> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    match lines.next() {
        Some((_, "ply")) => {}
        Some((no, other)) => return Err((no, format!("expected `ply` magic, found `{other}`"))),
        None => return Err((1, "empty file".into())),
    }
    let mut elements: Vec<PlyElement> = Vec::new();
    let mut header_end = 0;
    for (no, line) in lines.by_ref() {
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.first().copied() {
            Some("format") => {
                if toks.get(1) != Some(&"ascii") {
                    return Err((no, "only ASCII PLY is supported".into()));
                }
            }
            Some("comment") | Some("obj_info") | None => {}
            Some("element") => {
                if toks.len() != 3 {
                    return Err((no, "malformed element line".into()));
                }
                elements.push(PlyElement {
                    name: toks[1].to_string(),
                    count: parse_num(toks[2], no, "element count")?,
                    properties: Vec::new(),
                });
            }
            Some("property") => {
                let el = elements
                    .last_mut()
                    .ok_or((no, "property before any element".to_string()))?;
                let name = toks.last().ok_or((no, "malformed property".to_string()))?;
                el.properties.push(name.to_string());
            }
            Some("end_header") => {
                header_end = no;
                break;
            }
            Some(other) => return Err((no, format!("unexpected header keyword `{other}`"))),
        }
    }
    if header_end == 0 {
        return Err((1, "missing end_header".into()));
    }

    let mut body = lines.filter(|(_, l)| !l.is_empty());
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    for el in &elements {
        match el.name.as_str() {
            "vertex" => {
                let pos = |name: &str| {
                    el.properties
                        .iter()
                        .position(|p| p == name)
                        .ok_or((header_end, format!("vertex element lacks `{name}`")))
                };
                let (ix, iy, iz) = (pos("x")?, pos("y")?, pos("z")?);
                for _ in 0..el.count {
                    let (no, l) = body
                        .next()
                        .ok_or((header_end, "file ends before all vertices".to_string()))?;
                    let toks: Vec<&str> = l.split_whitespace().collect();
                    if toks.len() < el.properties.len() {
                        return Err((no, "vertex line has too few values".into()));
                    }
                    vertices.push(Point3::new(
                        parse_num(toks[ix], no, "coordinate")?,
                        parse_num(toks[iy], no, "coordinate")?,
                        parse_num(toks[iz], no, "coordinate")?,
                    ));
                }
            }
            "face" => {
                for _ in 0..el.count {
                    let (no, l) = body
                        .next()
                        .ok_or((header_end, "file ends before all faces".to_string()))?;
                    triangles.push(parse_face(l, no)?);
                }
            }
            _ => {
                for _ in 0..el.count {
                    body.next();
                }
            }
        }
    }
    Ok((vertices, triangles))
}

fn to_off(mesh: &TriangleMesh) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "OFF\n{} {} 0",
        mesh.vertex_count(),
        mesh.triangle_count()
    );
    for p in mesh.vertices() {
        let _ = writeln!(s, "{} {} {}", p.x, p.y, p.z);
    }
    for t in mesh.triangles() {
        let _ = writeln!(s, "3 {} {} {}", t[0], t[1], t[2]);
    }
    s
}

fn to_ply(mesh: &TriangleMesh) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "ply\nformat ascii 1.0");
    let _ = writeln!(s, "element vertex {}", mesh.vertex_count());
    let _ = writeln!(s, "property double x\nproperty double y\nproperty double z");
    let _ = writeln!(s, "element face {}", mesh.triangle_count());
    let _ = writeln!(s, "property list uchar int vertex_indices\nend_header");
    for p in mesh.vertices() {
        let _ = writeln!(s, "{} {} {}", p.x, p.y, p.z);
    }
    for t in mesh.triangles() {
        let _ = writeln!(s, "3 {} {} {}", t[0], t[1], t[2]);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::make_icosphere;

    const TETRA_OFF: &str = "OFF\n# regular tetrahedron\n4 4 6\n1 1 1\n1 -1 -1\n-1 1 -1\n-1 -1 1\n3 0 1 2\n3 0 3 1\n3 0 2 3\n3 1 3 2\n";

    fn write(dir: &tempfile::TempDir, name: &str, text: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        std::fs::write(&p, text).unwrap();
        p
    }

    #[test]
    fn loads_tetrahedron_off() {
        let dir = tempfile::tempdir().unwrap();
        let m = load_mesh(write(&dir, "t.off", TETRA_OFF), MeshFormat::Off).unwrap();
        assert_eq!(m.vertex_count(), 4);
        assert_eq!(m.euler_characteristic(), 2);
    }

    #[test]
    fn ply_quad_is_rejected_with_line() {
        let dir = tempfile::tempdir().unwrap();
        let text = "ply\nformat ascii 1.0\nelement vertex 4\nproperty float x\nproperty float y\nproperty float z\n\
                    element face 1\nproperty list uchar int vertex_indices\nend_header\n\
                    0 0 0\n1 0 0\n1 1 0\n0 1 0\n4 0 1 2 3\n";
        let err = load_mesh(write(&dir, "q.ply", text), MeshFormat::PlyAscii).unwrap_err();
        match err {
            Error::Format { line, message, .. } => {
                assert_eq!(line, 14);
                assert!(message.contains("only triangles"));
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn off_parse_error_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let text = "OFF\n3 1 0\n0 0 0\n1 zero 0\n0 1 0\n3 0 1 2\n";
        match load_mesh(write(&dir, "bad.off", text), MeshFormat::Off).unwrap_err() {
            Error::Format { line, .. } => assert_eq!(line, 4),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn degenerate_triangle_in_file() {
        let dir = tempfile::tempdir().unwrap();
        let text = "OFF\n3 1 0\n0 0 0\n1 0 0\n2 0 0\n3 0 1 2\n";
        let err = load_mesh(write(&dir, "d.off", text), MeshFormat::Off).unwrap_err();
        assert!(matches!(err, Error::DegenerateTriangle { index: 0, .. }));
    }

    #[test]
    fn round_trip_both_formats() {
        let m = make_icosphere(2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        for (name, fmt) in [("s.off", MeshFormat::Off), ("s.ply", MeshFormat::PlyAscii)] {
            let p = dir.path().join(name);
            save_mesh(&m, &p, fmt).unwrap();
            let r = load_mesh(&p, MeshFormat::from_path(&p).unwrap()).unwrap();
            assert_eq!(r.vertices(), m.vertices());
            assert_eq!(r.triangles(), m.triangles());
        }
    }

    #[test]
    fn ply_with_extra_properties() {
        let dir = tempfile::tempdir().unwrap();
        let text = "ply\nformat ascii 1.0\ncomment test\nelement vertex 3\nproperty float nx\nproperty float x\n\
                    property float y\nproperty float z\nelement face 1\nproperty list uchar int vertex_index\n\
                    end_header\n9 0 0 0\n9 1 0 0\n9 0 1 0\n3 0 1 2\n";
        let m = load_mesh(write(&dir, "e.ply", text), MeshFormat::PlyAscii).unwrap();
        assert_eq!(m.vertex(1).x, 1.0);
    }
}

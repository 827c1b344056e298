//! Mesh readers and writers: ASCII OBJ (optional `v x y z r g b` vertex colors) and
//! binary little-endian PLY with per-vertex normals and 8-bit colors.

use std::fs;
use std::io::Write;
use std::path::Path;

use log::warn;

use super::{mesh::TriangleMesh, Vec3};
use crate::{Error, Result};

/// Load an `.obj` or `.ply` mesh. Zero-area faces are dropped with a warning and an
/// open (non-watertight) mesh is reported as a warning only.
pub fn load_mesh(path: impl AsRef<Path>) -> Result<TriangleMesh> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut mesh = match extension(path).as_str() {
        "obj" => parse_obj(&String::from_utf8_lossy(&bytes))?,
        "ply" => parse_ply(&bytes)?,
        other => {
            return Err(Error::InvalidInput(format!(
                "unsupported mesh extension {other:?} for {}",
                path.display()
            )))
        }
    };
    let dropped = mesh.drop_degenerate();
    if dropped > 0 {
        warn!("{}: dropped {dropped} degenerate faces", path.display());
    }
    let open = mesh.open_edge_count();
    if open > 0 {
        warn!("{}: mesh is not watertight ({open} open or non-manifold edges)", path.display());
    }
    Ok(mesh)
}

pub fn save_mesh(mesh: &TriangleMesh, path: impl AsRef<Path>) -> Result<()> {
    save_mesh_with_comments(mesh, path, &[])
}

/// Like [`save_mesh`], embedding `comments` in the file header.
pub fn save_mesh_with_comments(mesh: &TriangleMesh, path: impl AsRef<Path>, comments: &[String]) -> Result<()> {
    let path = path.as_ref();
    let bytes = match extension(path).as_str() {
        "obj" => write_obj(mesh, comments).into_bytes(),
        "ply" => write_ply(mesh, comments),
        other => {
            return Err(Error::InvalidInput(format!(
                "unsupported mesh extension {other:?} for {}",
                path.display()
            )))
        }
    };
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn extension(path: &Path) -> String {
    path.extension()
        .and_then(|e| e.to_str())
        .unwrap_or("")
        .to_ascii_lowercase()
}

pub fn parse_obj(text: &str) -> Result<TriangleMesh> {
    let mut vertices = Vec::new();
    let mut colors: Vec<Option<[f64; 3]>> = Vec::new();
    let mut faces = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line.split('#').next().unwrap_or("").trim();
        let mut tokens = line.split_whitespace();
        match tokens.next() {
            Some("v") => {
                let values: Vec<f64> = tokens
                    .map(|t| t.parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| Error::parse_line(lineno, format!("bad vertex coordinate: {e}")))?;
                match values.len() {
                    3 | 4 => {
                        vertices.push(Vec3::new(values[0], values[1], values[2]));
                        colors.push(None);
                    }
                    6 => {
                        vertices.push(Vec3::new(values[0], values[1], values[2]));
                        colors.push(Some([values[3], values[4], values[5]]));
                    }
                    n => return Err(Error::parse_line(lineno, format!("vertex has {n} values"))),
                }
            }
            Some("f") => {
                let n = vertices.len() as i64;
                let idx: Vec<u32> = tokens
                    .map(|t| {
                        let first = t.split('/').next().unwrap_or("");
                        let i: i64 = first
                            .parse()
                            .map_err(|_| Error::parse_line(lineno, format!("bad face index {t:?}")))?;
                        let resolved = if i < 0 { n + i } else { i - 1 };
                        if resolved < 0 || resolved >= n {
                            return Err(Error::parse_line(lineno, format!("face index {i} out of range")));
                        }
                        Ok(resolved as u32)
                    })
                    .collect::<Result<_>>()?;
                if idx.len() < 3 {
                    return Err(Error::parse_line(lineno, "face has fewer than 3 vertices"));
                }
                for k in 1..idx.len() - 1 {
                    faces.push([idx[0], idx[k], idx[k + 1]]);
                }
            }
            _ => {}
        }
    }
    let mesh = TriangleMesh::new(vertices, faces)?;
    if !colors.is_empty() && colors.iter().all(Option::is_some) {
        let albedo = colors.into_iter().map(Option::unwrap).collect();
        mesh.with_albedo(albedo)
    } else {
        Ok(mesh)
    }
}

pub fn write_obj(mesh: &TriangleMesh, comments: &[String]) -> String {
    let mut out = String::new();
    for c in comments {
        out.push_str(&format!("# {c}\n"));
    }
    for (i, v) in mesh.vertices.iter().enumerate() {
        match &mesh.vertex_albedo {
            Some(a) => out.push_str(&format!(
                "v {} {} {} {} {} {}\n",
                v.x, v.y, v.z, a[i][0], a[i][1], a[i][2]
            )),
            None => out.push_str(&format!("v {} {} {}\n", v.x, v.y, v.z)),
        }
    }
    for f in &mesh.faces {
        out.push_str(&format!("f {} {} {}\n", f[0] + 1, f[1] + 1, f[2] + 1));
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(name: &str) -> Option<Scalar> {
        Some(match name {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Scalar::I8 | Scalar::U8 => 1,
            Scalar::I16 | Scalar::U16 => 2,
            Scalar::I32 | Scalar::U32 | Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }
}

#[derive(Debug)]
enum Property {
    Scalar(String, Scalar),
    List(String, Scalar, Scalar),
}

#[derive(Debug)]
struct Element {
    name: String,
    count: usize,
    props: Vec<Property>,
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn read(&mut self, ty: Scalar, what: &dyn Fn() -> String) -> Result<f64> {
        let size = ty.size();
        if self.pos + size > self.data.len() {
            return Err(Error::parse_byte(
                self.pos,
                format!("unexpected end of data while reading {}", what()),
            ));
        }
        let b = &self.data[self.pos..self.pos + size];
        self.pos += size;
        Ok(match ty {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes(b.try_into().unwrap()) as f64,
            Scalar::U32 => u32::from_le_bytes(b.try_into().unwrap()) as f64,
            Scalar::F32 => f32::from_le_bytes(b.try_into().unwrap()) as f64,
            Scalar::F64 => f64::from_le_bytes(b.try_into().unwrap()),
        })
    }
}

fn parse_ply_header(bytes: &[u8]) -> Result<(Vec<Element>, usize)> {
    const END: &[u8] = b"end_header";
    let end = bytes
        .windows(END.len())
        .position(|w| w == END)
        .ok_or_else(|| Error::parse_byte(0, "missing end_header"))?;
    let mut body = end + END.len();
    if bytes.get(body) == Some(&b'\r') {
        body += 1;
    }
    if bytes.get(body) != Some(&b'\n') {
        return Err(Error::parse_byte(body, "end_header must be followed by a newline"));
    }
    body += 1;
    let header = String::from_utf8_lossy(&bytes[..end]);
    let mut lines = header.lines().enumerate();
    match lines.next() {
        Some((_, l)) if l.trim() == "ply" => {}
        _ => return Err(Error::parse_line(1, "missing 'ply' signature")),
    }
    let mut elements: Vec<Element> = Vec::new();
    let mut format_ok = false;
    for (i, line) in lines {
        let lineno = i + 1;
        let t: Vec<&str> = line.split_whitespace().collect();
        match t.as_slice() {
            ["format", fmt, _] => {
                if *fmt != "binary_little_endian" {
                    return Err(Error::parse_line(lineno, format!("unsupported PLY format {fmt}")));
                }
                format_ok = true;
            }
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", name, count] => elements.push(Element {
                name: name.to_string(),
                count: count
                    .parse()
                    .map_err(|_| Error::parse_line(lineno, "bad element count"))?,
                props: Vec::new(),
            }),
            ["property", "list", ct, it, name] => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| Error::parse_line(lineno, "property before element"))?;
                let ct = Scalar::parse(ct).ok_or_else(|| Error::parse_line(lineno, "bad list count type"))?;
                let it = Scalar::parse(it).ok_or_else(|| Error::parse_line(lineno, "bad list index type"))?;
                el.props.push(Property::List(name.to_string(), ct, it));
            }
            ["property", ty, name] => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| Error::parse_line(lineno, "property before element"))?;
                let ty = Scalar::parse(ty).ok_or_else(|| Error::parse_line(lineno, format!("bad property type {ty}")))?;
                el.props.push(Property::Scalar(name.to_string(), ty));
            }
            _ => return Err(Error::parse_line(lineno, format!("unrecognized header line {line:?}"))),
        }
    }
    if !format_ok {
        return Err(Error::parse_byte(0, "missing format line"));
    }
    Ok((elements, body))
}

pub fn parse_ply(bytes: &[u8]) -> Result<TriangleMesh> {
    let (elements, body) = parse_ply_header(bytes)?;
    let mut cur = Cursor { data: bytes, pos: body };
    let mut vertices = Vec::new();
    let mut normals = Vec::new();
    let mut colors = Vec::new();
    let mut faces = Vec::new();
    for el in &elements {
        let is_vertex = el.name == "vertex";
        let is_face = el.name == "face";
        for idx in 0..el.count {
            let mut pos = [0.0; 3];
            let mut nrm = [0.0; 3];
            let mut col = [0.0; 3];
            let (mut has_n, mut has_c) = (false, false);
            for prop in &el.props {
                match prop {
                    Property::Scalar(name, ty) => {
                        let what = || format!("{} {idx} property {name}", el.name);
                        let mut v = cur.read(*ty, &what)?;
                        if !is_vertex {
                            continue;
                        }
                        if matches!(name.as_str(), "red" | "green" | "blue") && *ty == Scalar::U8 {
                            v /= 255.0;
                        }
                        match name.as_str() {
                            "x" => pos[0] = v,
                            "y" => pos[1] = v,
                            "z" => pos[2] = v,
                            "nx" => (nrm[0], has_n) = (v, true),
                            "ny" => nrm[1] = v,
                            "nz" => nrm[2] = v,
                            "red" => (col[0], has_c) = (v, true),
                            "green" => col[1] = v,
                            "blue" => col[2] = v,
                            _ => {}
                        }
                    }
                    Property::List(name, ct, it) => {
                        let what = || format!("{} {idx} list {name}", el.name);
                        let n = cur.read(*ct, &what)? as usize;
                        let mut list = Vec::with_capacity(n);
                        for _ in 0..n {
                            list.push(cur.read(*it, &what)?);
                        }
                        if is_face && (name == "vertex_indices" || name == "vertex_index") {
                            if n < 3 {
                                return Err(Error::parse_byte(cur.pos, format!("face {idx} has {n} vertices")));
                            }
                            for k in 1..n - 1 {
                                faces.push([list[0] as u32, list[k] as u32, list[k + 1] as u32]);
                            }
                        }
                    }
                }
            }
            if is_vertex {
                vertices.push(Vec3::from_array(pos));
                if has_n {
                    normals.push(Vec3::from_array(nrm));
                }
                if has_c {
                    colors.push(col);
                }
            }
        }
    }
    if cur.pos != bytes.len() {
        return Err(Error::parse_byte(cur.pos, "trailing bytes after last element"));
    }
    let mut mesh = TriangleMesh::new(vertices, faces)?;
    if normals.len() == mesh.vertices.len()
        && normals.iter().all(|n| (n.norm() - 1.0).abs() < 1e-3)
    {
        mesh.vertex_normals = normals;
    }
    if !colors.is_empty() && colors.len() == mesh.vertices.len() {
        mesh = mesh.with_albedo(colors)?;
    }
    Ok(mesh)
}

pub fn write_ply(mesh: &TriangleMesh, comments: &[String]) -> Vec<u8> {
    let mut out = Vec::new();
    let has_color = mesh.vertex_albedo.is_some();
    let mut header = String::from("ply\nformat binary_little_endian 1.0\n");
    for c in comments {
        header.push_str(&format!("comment {c}\n"));
    }
    header.push_str(&format!("element vertex {}\n", mesh.vertices.len()));
    for p in ["x", "y", "z", "nx", "ny", "nz"] {
        header.push_str(&format!("property float {p}\n"));
    }
    if has_color {
        for p in ["red", "green", "blue"] {
            header.push_str(&format!("property uchar {p}\n"));
        }
    }
    header.push_str(&format!("element face {}\n", mesh.faces.len()));
    header.push_str("property list uchar int vertex_indices\nend_header\n");
    out.extend_from_slice(header.as_bytes());
    for (i, v) in mesh.vertices.iter().enumerate() {
        let n = mesh.vertex_normals.get(i).copied().unwrap_or(Vec3::ZERO);
        for c in v.to_array().into_iter().chain(n.to_array()) {
            out.write_all(&(c as f32).to_le_bytes()).unwrap();
        }
        if let Some(a) = &mesh.vertex_albedo {
            for c in a[i] {
                out.push((c.clamp(0.0, 1.0) * 255.0).round() as u8);
            }
        }
    }
    for f in &mesh.faces {
        out.push(3);
        for i in f {
            out.write_all(&(*i as i32).to_le_bytes()).unwrap();
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::shapes;

    const TETRA: &str = "# tetrahedron\nv 0 0 0\nv 1 0 0\nv 0 1 0\nv 0 0 1\nf 1 3 2\nf 1 2 4\nf 1 4 3\nf 2 3 4\n";

    #[test]
    fn tetrahedron_obj() {
        let m = parse_obj(TETRA).unwrap();
        assert_eq!(m.vertices.len(), 4);
        assert_eq!(m.faces.len(), 4);
        assert!(m.is_watertight());
        assert!(m.vertex_albedo.is_none());
    }

    #[test]
    fn obj_polygons_colors_and_slashes() {
        let text = "v 0 0 0 1 0 0\nv 1 0 0 0 1 0\nv 1 1 0 0 0 1\nv 0 1 0 1 1 1\nf 1/1/1 2/2/2 3/3/3 -1//4\n";
        let m = parse_obj(text).unwrap();
        assert_eq!(m.faces, vec![[0, 1, 2], [0, 2, 3]]);
        assert_eq!(m.vertex_albedo.as_ref().unwrap()[1], [0.0, 1.0, 0.0]);
    }

    #[test]
    fn obj_errors_name_the_line() {
        let err = parse_obj("v 0 0 0\nv 1 0 0\nf 1 2 9\n").unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
        let err = parse_obj("v 0 zero 0\n").unwrap_err();
        assert!(err.to_string().contains("line 1"), "{err}");
    }

    #[test]
    fn obj_round_trip_is_exact() {
        let m = shapes::blob(2);
        let back = parse_obj(&write_obj(&m, &[])).unwrap();
        assert_eq!(back.vertices, m.vertices);
        assert_eq!(back.faces, m.faces);
        assert_eq!(back.vertex_albedo, m.vertex_albedo);
    }

    #[test]
    fn ply_round_trip_with_colors() {
        let m = shapes::blob(2);
        let bytes = write_ply(&m, &["test".into()]);
        let back = parse_ply(&bytes).unwrap();
        assert_eq!(back.faces, m.faces);
        for (a, b) in back.vertices.iter().zip(&m.vertices) {
            assert_eq!(*a, b.to_f32_precision());
        }
        let (ca, cb) = (back.vertex_albedo.unwrap(), m.vertex_albedo.unwrap());
        for (a, b) in ca.iter().zip(&cb) {
            for k in 0..3 {
                assert!((a[k] - b[k]).abs() <= 1.0 / 255.0);
            }
        }
        // second generation is byte-identical
        let again = write_ply(&parse_ply(&bytes).unwrap(), &["test".into()]);
        assert_eq!(again, bytes);
    }

    #[test]
    fn truncated_ply_reports_byte_offset() {
        let bytes = write_ply(&shapes::cube(1.0), &[]);
        let cut = &bytes[..bytes.len() - 7];
        match parse_ply(cut).unwrap_err() {
            Error::Parse { location, .. } => assert!(location.starts_with("byte offset")),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn load_drops_degenerate_faces() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.obj");
        std::fs::write(&path, format!("{TETRA}v 2 0 0\nf 1 2 5\n")).unwrap();
        let m = load_mesh(&path).unwrap();
        assert_eq!(m.faces.len(), 4);
        assert!(load_mesh(dir.path().join("missing.obj")).is_err());
    }
}

//! OBJ and PLY readers/writers.
//!
//! OBJ: `v` and `f` records with 1-based (or negative relative) indices; polygons
//! are fan-triangulated. PLY: `ascii 1.0` and `binary_little_endian 1.0`, any
//! numeric property type, extra elements and properties skipped.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use super::mesh::{PointCloud, Shape, TriangleMesh, Vec3};
use super::GeomError;

fn perr(line: usize, msg: impl Into<String>) -> GeomError {
    GeomError::ParseError {
        line,
        msg: msg.into(),
    }
}

/// Loads an OBJ or PLY file, choosing the parser from the extension.
pub fn load_shape(path: impl AsRef<Path>) -> Result<Shape, GeomError> {
    let path = path.as_ref();
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .unwrap_or_default();
    let bytes = fs::read(path)?;
    match ext.as_str() {
        "obj" => parse_obj(&String::from_utf8_lossy(&bytes)),
        "ply" => parse_ply(&bytes),
        other => Err(GeomError::Unsupported(format!("extension `{other}`"))),
    }
}

fn into_shape(positions: Vec<Vec3>, faces: Vec<[usize; 3]>) -> Result<Shape, GeomError> {
    if faces.is_empty() {
        if let Some(i) = positions.iter().position(|p| !p.is_finite()) {
            return Err(GeomError::NonFinite(i));
        }
        Ok(Shape::Points(PointCloud::new(positions)))
    } else {
        Ok(Shape::Mesh(TriangleMesh::new(positions, faces)?))
    }
}

fn fan(poly: &[usize], faces: &mut Vec<[usize; 3]>) {
    for i in 1..poly.len().saturating_sub(1) {
        faces.push([poly[0], poly[i], poly[i + 1]]);
    }
}

pub fn parse_obj(text: &str) -> Result<Shape, GeomError> {
    let mut positions = Vec::new();
    let mut faces = Vec::new();
    for (ln, raw) in text.lines().enumerate() {
        let line = ln + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        let mut tok = body.split_whitespace();
        match tok.next() {
            Some("v") => {
                let xyz: Vec<f64> = tok
                    .take(3)
                    .map(|t| t.parse::<f64>().map_err(|_| perr(line, format!("bad coordinate `{t}`"))))
                    .collect::<Result<_, _>>()?;
                if xyz.len() != 3 {
                    return Err(perr(line, "vertex needs three coordinates"));
                }
                positions.push(Vec3::new(xyz[0], xyz[1], xyz[2]));
            }
            Some("f") => {
                let mut poly = Vec::new();
                for t in tok {
                    let idx_str = t.split('/').next().unwrap_or("");
                    let idx: i64 = idx_str
                        .parse()
                        .map_err(|_| perr(line, format!("bad face index `{t}`")))?;
                    let resolved = match idx {
                        0 => return Err(perr(line, "face index 0 is invalid in OBJ")),
                        i if i > 0 => (i - 1) as usize,
                        i => {
                            let r = positions.len() as i64 + i;
                            if r < 0 {
                                return Err(GeomError::IndexError {
                                    face: faces.len(),
                                    index: usize::MAX,
                                    vertex_count: positions.len(),
                                });
                            }
                            r as usize
                        }
                    };
                    poly.push(resolved);
                }
                if poly.len() < 3 {
                    return Err(perr(line, "face needs at least three vertices"));
                }
                fan(&poly, &mut faces);
            }
            _ => {}
        }
    }
    into_shape(positions, faces)
}

#[derive(Debug, Clone, Copy, PartialEq)]
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
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
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

    fn read_le(self, b: &[u8]) -> f64 {
        match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::U32 => u32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F32 => f32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

#[derive(Debug, Clone)]
enum Property {
    Scalar(String, Scalar),
    List(String, Scalar, Scalar),
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    props: Vec<Property>,
}

/// Byte cursor over a binary PLY body.
struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take(&mut self, ty: Scalar) -> Result<f64, GeomError> {
        let n = ty.size();
        if self.pos + n > self.bytes.len() {
            return Err(perr(0, "binary PLY body is truncated"));
        }
        let v = ty.read_le(&self.bytes[self.pos..self.pos + n]);
        self.pos += n;
        Ok(v)
    }
}

pub fn parse_ply(bytes: &[u8]) -> Result<Shape, GeomError> {
    // header is ASCII and ends with a line `end_header`
    let marker = b"end_header";
    let end = bytes
        .windows(marker.len())
        .position(|w| w == marker)
        .ok_or_else(|| perr(0, "missing end_header"))?;
    let mut body_start = end + marker.len();
    if bytes.get(body_start) == Some(&b'\r') {
        body_start += 1;
    }
    if bytes.get(body_start) == Some(&b'\n') {
        body_start += 1;
    }
    let header = String::from_utf8_lossy(&bytes[..end]);
    let mut lines = header.lines().enumerate();
    match lines.next() {
        Some((_, l)) if l.trim() == "ply" => {}
        _ => return Err(perr(1, "missing `ply` magic line")),
    }
    let mut binary = None;
    let mut elements: Vec<Element> = Vec::new();
    for (i, l) in lines {
        let line = i + 1;
        let t: Vec<&str> = l.split_whitespace().collect();
        match t.as_slice() {
            ["format", "ascii", _] => binary = Some(false),
            ["format", "binary_little_endian", _] => binary = Some(true),
            ["format", other, _] => return Err(GeomError::Unsupported(format!("PLY format `{other}`"))),
            ["element", name, count] => elements.push(Element {
                name: name.to_string(),
                count: count.parse().map_err(|_| perr(line, "bad element count"))?,
                props: Vec::new(),
            }),
            ["property", "list", cty, ity, name] => {
                let el = elements.last_mut().ok_or_else(|| perr(line, "property before element"))?;
                let c = Scalar::parse(cty).ok_or_else(|| perr(line, format!("unknown type `{cty}`")))?;
                let it = Scalar::parse(ity).ok_or_else(|| perr(line, format!("unknown type `{ity}`")))?;
                el.props.push(Property::List(name.to_string(), c, it));
            }
            ["property", ty, name] => {
                let el = elements.last_mut().ok_or_else(|| perr(line, "property before element"))?;
                let s = Scalar::parse(ty).ok_or_else(|| perr(line, format!("unknown type `{ty}`")))?;
                el.props.push(Property::Scalar(name.to_string(), s));
            }
            ["comment", ..] | ["obj_info", ..] | [] => {}
            _ => return Err(perr(line, format!("unrecognized header line `{l}`"))),
        }
    }
    let binary = binary.ok_or_else(|| perr(0, "missing format line"))?;

    let mut positions = Vec::new();
    let mut faces = Vec::new();
    let body = &bytes[body_start..];

    // Rows are delivered as (scalar values, list values) per element entry.
    let mut handle = |el: &Element, scalars: &[f64], lists: &[Vec<f64>]| -> Result<(), GeomError> {
        match el.name.as_str() {
            "vertex" => {
                let mut xyz = [f64::NAN; 3];
                let mut si = 0;
                for p in &el.props {
                    if let Property::Scalar(name, _) = p {
                        match name.as_str() {
                            "x" => xyz[0] = scalars[si],
                            "y" => xyz[1] = scalars[si],
                            "z" => xyz[2] = scalars[si],
                            _ => {}
                        }
                        si += 1;
                    }
                }
                positions.push(Vec3::new(xyz[0], xyz[1], xyz[2]));
            }
            "face" => {
                let mut li = 0;
                for p in &el.props {
                    if let Property::List(name, _, _) = p {
                        if name == "vertex_indices" || name == "vertex_index" {
                            let poly: Vec<usize> = lists[li]
                                .iter()
                                .map(|&v| {
                                    if v < 0.0 {
                                        Err(GeomError::IndexError {
                                            face: faces.len(),
                                            index: usize::MAX,
                                            vertex_count: 0,
                                        })
                                    } else {
                                        Ok(v as usize)
                                    }
                                })
                                .collect::<Result<_, _>>()?;
                            if poly.len() < 3 {
                                return Err(perr(0, "face needs at least three vertices"));
                            }
                            fan(&poly, &mut faces);
                        }
                        li += 1;
                    }
                }
            }
            _ => {}
        }
        Ok(())
    };

    if binary {
        let mut cur = Cursor { bytes: body, pos: 0 };
        for el in &elements {
            for _ in 0..el.count {
                let mut scalars = Vec::new();
                let mut lists = Vec::new();
                for p in &el.props {
                    match p {
                        Property::Scalar(_, ty) => scalars.push(cur.take(*ty)?),
                        Property::List(_, cty, ity) => {
                            let n = cur.take(*cty)? as usize;
                            let mut v = Vec::with_capacity(n);
                            for _ in 0..n {
                                v.push(cur.take(*ity)?);
                            }
                            lists.push(v);
                        }
                    }
                }
                handle(el, &scalars, &lists)?;
            }
        }
    } else {
        let text = String::from_utf8_lossy(body);
        let header_lines = header.lines().count() + 1;
        let mut rows = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty());
        for el in &elements {
            for _ in 0..el.count {
                let (ri, row) = rows
                    .next()
                    .ok_or_else(|| perr(0, format!("missing `{}` rows", el.name)))?;
                let line = header_lines + ri + 1;
                let nums: Vec<f64> = row
                    .split_whitespace()
                    .map(|t| t.parse::<f64>().map_err(|_| perr(line, format!("bad number `{t}`"))))
                    .collect::<Result<_, _>>()?;
                let mut it = nums.into_iter();
                let mut scalars = Vec::new();
                let mut lists = Vec::new();
                for p in &el.props {
                    match p {
                        Property::Scalar(..) => {
                            scalars.push(it.next().ok_or_else(|| perr(line, "row too short"))?)
                        }
                        Property::List(..) => {
                            let n = it.next().ok_or_else(|| perr(line, "row too short"))? as usize;
                            let v: Vec<f64> = it.by_ref().take(n).collect();
                            if v.len() != n {
                                return Err(perr(line, "list shorter than its count"));
                            }
                            lists.push(v);
                        }
                    }
                }
                handle(el, &scalars, &lists)?;
            }
        }
    }
    into_shape(positions, faces)
}

pub fn obj_string(positions: &[Vec3], faces: &[[usize; 3]]) -> String {
    let mut s = String::new();
    for p in positions {
        writeln!(s, "v {} {} {}", p.x, p.y, p.z).unwrap();
    }
    for f in faces {
        writeln!(s, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1).unwrap();
    }
    s
}

/// Binary little-endian PLY with float64 positions and `uchar`/`int` face lists.
pub fn ply_binary_bytes(positions: &[Vec3], faces: &[[usize; 3]]) -> Vec<u8> {
    let mut out = Vec::new();
    let mut header = String::new();
    header.push_str("ply\nformat binary_little_endian 1.0\n");
    writeln!(header, "element vertex {}", positions.len()).unwrap();
    header.push_str("property double x\nproperty double y\nproperty double z\n");
    writeln!(header, "element face {}", faces.len()).unwrap();
    header.push_str("property list uchar int vertex_indices\nend_header\n");
    out.extend_from_slice(header.as_bytes());
    for p in positions {
        for v in p.to_array() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    for f in faces {
        out.push(3);
        for &i in f {
            out.extend_from_slice(&(i as i32).to_le_bytes());
        }
    }
    out
}

pub fn write_shape(path: impl AsRef<Path>, positions: &[Vec3], faces: &[[usize; 3]]) -> Result<(), GeomError> {
    let path = path.as_ref();
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .unwrap_or_default();
    let bytes = match ext.as_str() {
        "obj" => obj_string(positions, faces).into_bytes(),
        "ply" => ply_binary_bytes(positions, faces),
        other => return Err(GeomError::Unsupported(format!("extension `{other}`"))),
    };
    let mut f = fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_obj_triangle() {
        let s = parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n").unwrap();
        let m = s.as_mesh().unwrap();
        assert_eq!(m.positions.len(), 3);
        assert_eq!(m.faces, vec![[0, 1, 2]]);
    }

    #[test]
    fn obj_out_of_range_index() {
        let e = parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 5\n").unwrap_err();
        assert!(matches!(e, GeomError::IndexError { index: 4, .. }), "{e:?}");
    }

    #[test]
    fn obj_quads_slashes_and_negative_indices() {
        let s = parse_obj("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf -4/1/1 -3/2/2 -2/3/3 -1/4/4\n").unwrap();
        assert_eq!(s.as_mesh().unwrap().faces, vec![[0, 1, 2], [0, 2, 3]]);
    }

    #[test]
    fn obj_bad_number() {
        assert!(matches!(
            parse_obj("v 0 zero 0\n"),
            Err(GeomError::ParseError { line: 1, .. })
        ));
    }

    #[test]
    fn ascii_ply_point_cloud() {
        let text = "ply\nformat ascii 1.0\nelement vertex 4\nproperty float x\nproperty float y\nproperty float z\n\
                    element face 0\nproperty list uchar int vertex_indices\nend_header\n\
                    0 0 0\n1 0 0\n0 1 0\n0 0 1\n";
        match parse_ply(text.as_bytes()).unwrap() {
            Shape::Points(p) => assert_eq!(p.len(), 4),
            Shape::Mesh(_) => panic!("expected a point cloud"),
        }
    }

    #[test]
    fn binary_ply_roundtrip_with_extra_properties() {
        let pos = vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.0, 1.0, 0.25),
        ];
        let bytes = ply_binary_bytes(&pos, &[[0, 1, 2]]);
        let m = parse_ply(&bytes).unwrap().into_mesh().unwrap();
        assert_eq!(m.positions, pos);
        assert_eq!(m.faces, vec![[0, 1, 2]]);

        // float32 positions with an interleaved extra property
        let mut b = b"ply\nformat binary_little_endian 1.0\nelement vertex 3\nproperty float x\nproperty uchar flag\n\
                      property float y\nproperty float z\nelement face 1\nproperty list uchar uint vertex_indices\nend_header\n"
            .to_vec();
        for p in &pos {
            b.extend_from_slice(&(p.x as f32).to_le_bytes());
            b.push(7);
            b.extend_from_slice(&(p.y as f32).to_le_bytes());
            b.extend_from_slice(&(p.z as f32).to_le_bytes());
        }
        b.push(3);
        for i in [0u32, 1, 2] {
            b.extend_from_slice(&i.to_le_bytes());
        }
        let m = parse_ply(&b).unwrap().into_mesh().unwrap();
        assert_eq!(m.positions[2], Vec3::new(0.0, 1.0, 0.25));
    }

    #[test]
    fn truncated_binary_ply() {
        let bytes = ply_binary_bytes(&[Vec3::ZERO, Vec3::ZERO], &[]);
        assert!(parse_ply(&bytes[..bytes.len() - 3]).is_err());
    }
}

//! PLY (ASCII / binary) and OBJ reading and writing.
//!
//! PLY vertices carry `x y z` and an optional integer `label`; colors
//! (`red green blue`) may be written for visualization. OBJ files carry only
//! `v` / `f` records; their labels live in a JSON sidecar `{"labels": [...]}`
//! next to the mesh (`shape.obj` -> `shape.labels.json`).

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::Mesh;
use crate::error::{Error, Result};
use crate::geom::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeshFormat {
    Ply,
    Obj,
}

impl MeshFormat {
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "ply" => Some(MeshFormat::Ply),
            "obj" => Some(MeshFormat::Obj),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PlyEncoding {
    #[default]
    Ascii,
    BinaryLittleEndian,
}

#[derive(Debug, Clone, Default)]
pub struct PlyWriteOptions<'a> {
    pub encoding: PlyEncoding,
    /// Per-vertex RGB colors written as `red green blue` uchar properties.
    pub colors: Option<&'a [[u8; 3]]>,
}

#[derive(Serialize, Deserialize)]
struct LabelSidecar {
    labels: Vec<u32>,
}

pub fn labels_sidecar_path(obj_path: &Path) -> PathBuf {
    obj_path.with_extension("labels.json")
}

pub fn load_mesh(path: &Path, format: MeshFormat) -> Result<Mesh> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    match format {
        MeshFormat::Ply => parse_ply(&bytes),
        MeshFormat::Obj => {
            let mesh = parse_obj(&bytes)?;
            let sidecar = labels_sidecar_path(path);
            if sidecar.exists() {
                let text = fs::read_to_string(&sidecar).map_err(|e| Error::io(&sidecar, e))?;
                let parsed: LabelSidecar = serde_json::from_str(&text)?;
                mesh.with_labels(parsed.labels)
            } else {
                Ok(mesh)
            }
        }
    }
}

/// Load a mesh, inferring the format from the file extension.
pub fn load_mesh_auto(path: &Path) -> Result<Mesh> {
    let format = MeshFormat::from_path(path).ok_or_else(|| {
        Error::Config(format!("cannot infer mesh format of {}", path.display()))
    })?;
    load_mesh(path, format)
}

/// Save a mesh in the format implied by its extension (ASCII PLY for `.ply`).
pub fn save_mesh(path: &Path, mesh: &Mesh) -> Result<()> {
    match MeshFormat::from_path(path) {
        Some(MeshFormat::Ply) => save_ply(path, mesh, &PlyWriteOptions::default()),
        Some(MeshFormat::Obj) => save_obj(path, mesh),
        None => Err(Error::Config(format!("cannot infer mesh format of {}", path.display()))),
    }
}

pub fn save_ply(path: &Path, mesh: &Mesh, options: &PlyWriteOptions) -> Result<()> {
    let bytes = encode_ply(mesh, options)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn save_obj(path: &Path, mesh: &Mesh) -> Result<()> {
    let mut out = String::new();
    for v in mesh.vertices() {
        out.push_str(&format!("v {} {} {}\n", v[0], v[1], v[2]));
    }
    for f in mesh.faces() {
        out.push_str(&format!("f {} {} {}\n", f[0] + 1, f[1] + 1, f[2] + 1));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))?;
    if let Some(labels) = mesh.labels() {
        let sidecar = labels_sidecar_path(path);
        let text = serde_json::to_string(&LabelSidecar { labels: labels.to_vec() })?;
        fs::write(&sidecar, text).map_err(|e| Error::io(&sidecar, e))?;
    }
    Ok(())
}

pub(crate) fn encode_ply(mesh: &Mesh, options: &PlyWriteOptions) -> Result<Vec<u8>> {
    if let Some(c) = options.colors {
        if c.len() != mesh.vertex_count() {
            return Err(Error::Dimension(format!(
                "{} colors for {} vertices",
                c.len(),
                mesh.vertex_count()
            )));
        }
    }
    let mut header = String::from("ply\n");
    header.push_str(match options.encoding {
        PlyEncoding::Ascii => "format ascii 1.0\n",
        PlyEncoding::BinaryLittleEndian => "format binary_little_endian 1.0\n",
    });
    header.push_str(&format!("element vertex {}\n", mesh.vertex_count()));
    header.push_str("property double x\nproperty double y\nproperty double z\n");
    if mesh.labels().is_some() {
        header.push_str("property int label\n");
    }
    if options.colors.is_some() {
        header.push_str("property uchar red\nproperty uchar green\nproperty uchar blue\n");
    }
    header.push_str(&format!("element face {}\n", mesh.face_count()));
    header.push_str("property list uchar int vertex_indices\nend_header\n");

    let mut out = header.into_bytes();
    let labels = mesh.labels();
    match options.encoding {
        PlyEncoding::Ascii => {
            for (i, v) in mesh.vertices().iter().enumerate() {
                let mut line = format!("{} {} {}", v[0], v[1], v[2]);
                if let Some(l) = labels {
                    line.push_str(&format!(" {}", l[i]));
                }
                if let Some(c) = options.colors {
                    line.push_str(&format!(" {} {} {}", c[i][0], c[i][1], c[i][2]));
                }
                line.push('\n');
                out.extend_from_slice(line.as_bytes());
            }
            for f in mesh.faces() {
                writeln!(out, "3 {} {} {}", f[0], f[1], f[2]).expect("write to Vec");
            }
        }
        PlyEncoding::BinaryLittleEndian => {
            for (i, v) in mesh.vertices().iter().enumerate() {
                for c in v {
                    out.extend_from_slice(&c.to_le_bytes());
                }
                if let Some(l) = labels {
                    out.extend_from_slice(&(l[i] as i32).to_le_bytes());
                }
                if let Some(c) = options.colors {
                    out.extend_from_slice(&c[i]);
                }
            }
            for f in mesh.faces() {
                out.push(3);
                for &i in f {
                    out.extend_from_slice(&(i as i32).to_le_bytes());
                }
            }
        }
    }
    Ok(out)
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
    fn parse(name: &str) -> Option<Self> {
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

    fn is_integer(self) -> bool {
        !matches!(self, Scalar::F32 | Scalar::F64)
    }

    fn decode(self, b: &[u8], big_endian: bool) -> f64 {
        macro_rules! read {
            ($t:ty, $n:expr) => {{
                let arr: [u8; $n] = b[..$n].try_into().expect("sized slice");
                (if big_endian { <$t>::from_be_bytes(arr) } else { <$t>::from_le_bytes(arr) }) as f64
            }};
        }
        match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => read!(i16, 2),
            Scalar::U16 => read!(u16, 2),
            Scalar::I32 => read!(i32, 4),
            Scalar::U32 => read!(u32, 4),
            Scalar::F32 => read!(f32, 4),
            Scalar::F64 => read!(f64, 8),
        }
    }
}

#[derive(Debug, Clone)]
enum Property {
    Scalar { name: String, ty: Scalar },
    List { name: String, count: Scalar, item: Scalar },
}

impl Property {
    fn name(&self) -> &str {
        match self {
            Property::Scalar { name, .. } | Property::List { name, .. } => name,
        }
    }
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Encoding {
    Ascii,
    Binary { big_endian: bool },
}

fn malformed(location: String, message: impl Into<String>) -> Error {
    Error::Malformed {
        format: "PLY",
        location,
        message: message.into(),
    }
}

/// Values of one element instance: scalars and lists, in property order.
enum Value {
    Scalar(f64),
    List(Vec<f64>),
}

pub(crate) fn parse_ply(bytes: &[u8]) -> Result<Mesh> {
    // header is ASCII text up to and including "end_header\n"
    let mut pos = 0usize;
    let mut line_no = 0usize;
    let mut encoding = None;
    let mut elements: Vec<Element> = Vec::new();
    loop {
        let end = bytes[pos..]
            .iter()
            .position(|&b| b == b'\n')
            .map(|i| pos + i)
            .ok_or_else(|| malformed(format!("line {}", line_no + 1), "header is not terminated by end_header"))?;
        line_no += 1;
        let line = std::str::from_utf8(&bytes[pos..end])
            .map_err(|_| malformed(format!("line {line_no}"), "header is not ASCII"))?
            .trim_end_matches('\r')
            .trim();
        pos = end + 1;
        let loc = || format!("line {line_no}");
        let mut tokens = line.split_whitespace();
        match tokens.next() {
            Some("ply") if line_no == 1 => {}
            _ if line_no == 1 => return Err(malformed(loc(), "missing 'ply' magic")),
            Some("format") => {
                encoding = Some(match tokens.next() {
                    Some("ascii") => Encoding::Ascii,
                    Some("binary_little_endian") => Encoding::Binary { big_endian: false },
                    Some("binary_big_endian") => Encoding::Binary { big_endian: true },
                    other => return Err(malformed(loc(), format!("unknown format {other:?}"))),
                });
            }
            Some("comment") | Some("obj_info") | None => {}
            Some("element") => {
                let name = tokens.next().ok_or_else(|| malformed(loc(), "element without a name"))?;
                let count = tokens
                    .next()
                    .and_then(|c| c.parse().ok())
                    .ok_or_else(|| malformed(loc(), "element without a valid count"))?;
                elements.push(Element {
                    name: name.to_string(),
                    count,
                    properties: Vec::new(),
                });
            }
            Some("property") => {
                let element = elements
                    .last_mut()
                    .ok_or_else(|| malformed(loc(), "property before any element"))?;
                let first = tokens.next().ok_or_else(|| malformed(loc(), "empty property"))?;
                let prop = if first == "list" {
                    let count = tokens.next().and_then(Scalar::parse);
                    let item = tokens.next().and_then(Scalar::parse);
                    let name = tokens.next();
                    match (count, item, name) {
                        (Some(count), Some(item), Some(name)) if count.is_integer() => Property::List {
                            name: name.to_string(),
                            count,
                            item,
                        },
                        _ => return Err(malformed(loc(), "invalid list property")),
                    }
                } else {
                    let ty = Scalar::parse(first)
                        .ok_or_else(|| malformed(loc(), format!("unknown property type {first}")))?;
                    let name = tokens.next().ok_or_else(|| malformed(loc(), "property without a name"))?;
                    Property::Scalar {
                        name: name.to_string(),
                        ty,
                    }
                };
                element.properties.push(prop);
            }
            Some("end_header") => break,
            Some(other) => return Err(malformed(loc(), format!("unexpected header keyword {other}"))),
        }
    }
    let encoding = encoding.ok_or_else(|| malformed(format!("line {line_no}"), "missing format line"))?;

    let mut reader = BodyReader {
        bytes,
        pos,
        line: line_no,
        encoding,
        ascii_tokens: Vec::new(),
    };

    let mut vertices: Vec<Vec3> = Vec::new();
    let mut labels: Option<Vec<u32>> = None;
    let mut faces: Vec<[usize; 3]> = Vec::new();

    for element in &elements {
        let idx = |name: &str| element.properties.iter().position(|p| p.name() == name);
        match element.name.as_str() {
            "vertex" => {
                let (xi, yi, zi) = match (idx("x"), idx("y"), idx("z")) {
                    (Some(x), Some(y), Some(z)) => (x, y, z),
                    _ => return Err(malformed(reader.location(), "vertex element lacks x, y or z")),
                };
                let li = idx("label");
                if let Some(li) = li {
                    match &element.properties[li] {
                        Property::Scalar { ty, .. } if ty.is_integer() => {}
                        _ => return Err(malformed(reader.location(), "label property must be an integer scalar")),
                    }
                }
                vertices.reserve(element.count);
                let mut lab = Vec::with_capacity(if li.is_some() { element.count } else { 0 });
                for _ in 0..element.count {
                    let loc = reader.location();
                    let values = reader.read_instance(&element.properties)?;
                    let scalar = |i: usize| match values[i] {
                        Value::Scalar(v) => Ok(v),
                        Value::List(_) => Err(malformed(loc.clone(), "expected a scalar")),
                    };
                    vertices.push([scalar(xi)?, scalar(yi)?, scalar(zi)?]);
                    if let Some(li) = li {
                        let l = scalar(li)?;
                        if l < 0.0 || l > u32::MAX as f64 {
                            return Err(Error::Validation(format!("label {l} at {loc} is out of range")));
                        }
                        lab.push(l as u32);
                    }
                }
                if li.is_some() {
                    labels = Some(lab);
                }
            }
            "face" => {
                let fi = idx("vertex_indices").or_else(|| idx("vertex_index")).ok_or_else(|| {
                    malformed(reader.location(), "face element lacks vertex_indices")
                })?;
                for _ in 0..element.count {
                    let loc = reader.location();
                    let values = reader.read_instance(&element.properties)?;
                    let Value::List(poly) = &values[fi] else {
                        return Err(malformed(loc, "vertex_indices must be a list"));
                    };
                    if poly.len() < 3 {
                        return Err(malformed(loc, format!("face with {} vertices", poly.len())));
                    }
                    if poly.iter().any(|&i| i < 0.0) {
                        return Err(Error::Validation(format!("negative vertex index in face at {loc}")));
                    }
                    // fan triangulation for polygons
                    for k in 1..poly.len() - 1 {
                        faces.push([poly[0] as usize, poly[k] as usize, poly[k + 1] as usize]);
                    }
                }
            }
            _ => {
                for _ in 0..element.count {
                    reader.read_instance(&element.properties)?;
                }
            }
        }
    }

    let mesh = Mesh::new(vertices, faces)?;
    match labels {
        Some(l) => mesh.with_labels(l),
        None => Ok(mesh),
    }
}

struct BodyReader<'a> {
    bytes: &'a [u8],
    pos: usize,
    line: usize,
    encoding: Encoding,
    ascii_tokens: Vec<&'a str>,
}

impl<'a> BodyReader<'a> {
    fn location(&self) -> String {
        match self.encoding {
            Encoding::Ascii => format!("line {}", self.line + 1),
            Encoding::Binary { .. } => format!("byte offset {}", self.pos),
        }
    }

    fn read_instance(&mut self, props: &[Property]) -> Result<Vec<Value>> {
        match self.encoding {
            Encoding::Ascii => self.read_ascii(props),
            Encoding::Binary { big_endian } => self.read_binary(props, big_endian),
        }
    }

    fn next_line(&mut self) -> Result<()> {
        loop {
            if self.pos >= self.bytes.len() {
                return Err(malformed(self.location(), "unexpected end of file"));
            }
            let end = self.bytes[self.pos..]
                .iter()
                .position(|&b| b == b'\n')
                .map_or(self.bytes.len(), |i| self.pos + i);
            let text = std::str::from_utf8(&self.bytes[self.pos..end])
                .map_err(|_| malformed(self.location(), "invalid UTF-8"))?;
            self.line += 1;
            self.pos = end + 1;
            let tokens: Vec<&'a str> = text.split_whitespace().collect();
            if !tokens.is_empty() {
                self.ascii_tokens = tokens;
                self.ascii_tokens.reverse();
                return Ok(());
            }
        }
    }

    fn read_ascii(&mut self, props: &[Property]) -> Result<Vec<Value>> {
        self.next_line()?;
        let loc = format!("line {}", self.line);
        let take = |tokens: &mut Vec<&str>| -> Result<f64> {
            let t = tokens
                .pop()
                .ok_or_else(|| malformed(loc.clone(), "too few values on line"))?;
            t.parse::<f64>()
                .map_err(|_| malformed(loc.clone(), format!("cannot parse number {t:?}")))
        };
        let mut tokens = std::mem::take(&mut self.ascii_tokens);
        let mut out = Vec::with_capacity(props.len());
        for p in props {
            match p {
                Property::Scalar { .. } => out.push(Value::Scalar(take(&mut tokens)?)),
                Property::List { .. } => {
                    let n = take(&mut tokens)?;
                    if n < 0.0 || n.fract() != 0.0 {
                        return Err(malformed(loc.clone(), "invalid list length"));
                    }
                    let items = (0..n as usize).map(|_| take(&mut tokens)).collect::<Result<Vec<_>>>()?;
                    out.push(Value::List(items));
                }
            }
        }
        if !tokens.is_empty() {
            return Err(malformed(loc, "extra values on line"));
        }
        Ok(out)
    }

    fn take_bytes(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(malformed(self.location(), "unexpected end of binary data"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn read_binary(&mut self, props: &[Property], big_endian: bool) -> Result<Vec<Value>> {
        let mut out = Vec::with_capacity(props.len());
        for p in props {
            match *p {
                Property::Scalar { ty, .. } => {
                    let b = self.take_bytes(ty.size())?;
                    out.push(Value::Scalar(ty.decode(b, big_endian)));
                }
                Property::List { count, item, .. } => {
                    let b = self.take_bytes(count.size())?;
                    let n = count.decode(b, big_endian);
                    if n < 0.0 {
                        return Err(malformed(self.location(), "negative list length"));
                    }
                    let mut items = Vec::with_capacity(n as usize);
                    for _ in 0..n as usize {
                        let b = self.take_bytes(item.size())?;
                        items.push(item.decode(b, big_endian));
                    }
                    out.push(Value::List(items));
                }
            }
        }
        Ok(out)
    }
}

pub(crate) fn parse_obj(bytes: &[u8]) -> Result<Mesh> {
    let text = std::str::from_utf8(bytes).map_err(|e| Error::Malformed {
        format: "OBJ",
        location: format!("byte offset {}", e.valid_up_to()),
        message: "file is not UTF-8".into(),
    })?;
    let bad = |line: usize, msg: String| Error::Malformed {
        format: "OBJ",
        location: format!("line {line}"),
        message: msg,
    };
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        let mut tokens = line.split_whitespace();
        match tokens.next() {
            Some("v") => {
                let coords: Vec<f64> = tokens
                    .take(3)
                    .map(|t| t.parse::<f64>().map_err(|_| bad(line_no, format!("cannot parse {t:?}"))))
                    .collect::<Result<_>>()?;
                if coords.len() != 3 {
                    return Err(bad(line_no, "vertex needs three coordinates".into()));
                }
                vertices.push([coords[0], coords[1], coords[2]]);
            }
            Some("f") => {
                let n = vertices.len() as i64;
                let idx: Vec<usize> = tokens
                    .map(|t| {
                        let head = t.split('/').next().unwrap_or("");
                        let k: i64 = head.parse().map_err(|_| bad(line_no, format!("cannot parse index {t:?}")))?;
                        let resolved = if k > 0 { k - 1 } else { n + k };
                        if k == 0 || resolved < 0 {
                            return Err(Error::Validation(format!("invalid vertex index {k} on line {line_no}")));
                        }
                        Ok(resolved as usize)
                    })
                    .collect::<Result<_>>()?;
                if idx.len() < 3 {
                    return Err(bad(line_no, "face needs at least three vertices".into()));
                }
                for k in 1..idx.len() - 1 {
                    faces.push([idx[0], idx[k], idx[k + 1]]);
                }
            }
            _ => {}
        }
    }
    Mesh::new(vertices, faces)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const MINIMAL: &str = "ply\nformat ascii 1.0\nelement vertex 3\nproperty float x\nproperty float y\n\
property float z\nelement face 1\nproperty list uchar int vertex_indices\nend_header\n\
0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n";

    #[test]
    fn minimal_ascii_ply() {
        let m = parse_ply(MINIMAL.as_bytes()).unwrap();
        assert_eq!(m.vertex_count(), 3);
        assert_eq!(m.faces(), &[[0, 1, 2]]);
        assert!(m.labels().is_none());
    }

    #[test]
    fn out_of_range_face_index_is_validation_error() {
        let text = MINIMAL.replace("3 0 1 2", "3 0 1 7");
        assert!(matches!(parse_ply(text.as_bytes()), Err(Error::Validation(_))));
    }

    #[test]
    fn label_property_is_read() {
        let text = "ply\nformat ascii 1.0\nelement vertex 3\nproperty float x\nproperty float y\n\
property float z\nproperty uchar label\nelement face 1\nproperty list uchar int vertex_indices\nend_header\n\
0 0 0 2\n1 0 0 2\n0 1 0 2\n3 0 1 2\n";
        let m = parse_ply(text.as_bytes()).unwrap();
        assert_eq!(m.labels(), Some(&[2u32, 2, 2][..]));
    }

    #[test]
    fn malformed_files_name_their_location() {
        let text = MINIMAL.replace("1 0 0\n", "1 zero 0\n");
        let err = parse_ply(text.as_bytes()).unwrap_err().to_string();
        assert!(err.contains("line 11"), "{err}");

        let m = parse_ply(MINIMAL.as_bytes()).unwrap();
        let mut bin = encode_ply(
            &m,
            &PlyWriteOptions {
                encoding: PlyEncoding::BinaryLittleEndian,
                colors: None,
            },
        )
        .unwrap();
        bin.truncate(bin.len() - 3);
        let err = parse_ply(&bin).unwrap_err().to_string();
        assert!(err.contains("byte offset"), "{err}");

        let err = parse_obj(b"v 0 0 0\nv 1 0\n").unwrap_err().to_string();
        assert!(err.contains("line 2"), "{err}");
    }

    #[test]
    fn skips_unknown_elements_and_triangulates_quads() {
        let text = "ply\nformat ascii 1.0\ncomment hi\nelement vertex 4\nproperty double x\nproperty double y\n\
property double z\nelement edge 1\nproperty int a\nproperty int b\nelement face 1\n\
property list uchar uint vertex_index\nend_header\n0 0 0\n1 0 0\n1 1 0\n0 1 0\n0 1\n4 0 1 2 3\n";
        let m = parse_ply(text.as_bytes()).unwrap();
        assert_eq!(m.faces(), &[[0, 1, 2], [0, 2, 3]]);
    }

    #[test]
    fn obj_with_slashes_and_negative_indices() {
        let m = parse_obj(b"# c\nv 0 0 0\nv 1 0 0\nv 0 1 0\nvn 0 0 1\nf 1/1/1 2//1 -1\n").unwrap();
        assert_eq!(m.faces(), &[[0, 1, 2]]);
    }

    #[test]
    fn obj_sidecar_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tri.obj");
        let m = parse_ply(MINIMAL.as_bytes()).unwrap().with_labels(vec![1, 3, 2]).unwrap();
        save_obj(&path, &m).unwrap();
        assert!(labels_sidecar_path(&path).exists());
        let back = load_mesh(&path, MeshFormat::Obj).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn colored_ply_still_loads() {
        let m = parse_ply(MINIMAL.as_bytes()).unwrap();
        let colors = [[255, 0, 0], [0, 255, 0], [0, 0, 255]];
        for encoding in [PlyEncoding::Ascii, PlyEncoding::BinaryLittleEndian] {
            let bytes = encode_ply(&m, &PlyWriteOptions { encoding, colors: Some(&colors) }).unwrap();
            assert_eq!(parse_ply(&bytes).unwrap(), m);
        }
    }

    fn arb_mesh() -> impl Strategy<Value = Mesh> {
        (3usize..20).prop_flat_map(|n| {
            (
                proptest::collection::vec(proptest::array::uniform3(-1e3..1e3f64), n),
                proptest::collection::vec((0..n, 0..n, 0..n), 1..10),
                proptest::option::of(proptest::collection::vec(1u32..12, n)),
            )
                .prop_filter_map("degenerate faces", |(v, f, l)| {
                    let faces: Vec<[usize; 3]> = f
                        .into_iter()
                        .filter(|(a, b, c)| a != b && b != c && a != c)
                        .map(|(a, b, c)| [a, b, c])
                        .collect();
                    if faces.is_empty() {
                        return None;
                    }
                    let m = Mesh::new(v, faces).ok()?;
                    match l {
                        Some(l) => m.with_labels(l).ok(),
                        None => Some(m),
                    }
                })
        })
    }

    proptest! {
        #[test]
        fn ply_round_trip_is_exact(m in arb_mesh(), binary in any::<bool>()) {
            let encoding = if binary { PlyEncoding::BinaryLittleEndian } else { PlyEncoding::Ascii };
            let bytes = encode_ply(&m, &PlyWriteOptions { encoding, colors: None }).unwrap();
            prop_assert_eq!(parse_ply(&bytes).unwrap(), m);
        }
    }
}

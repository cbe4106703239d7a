use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{MeshError, TriMesh, Vec3, LABEL_COUNT};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshFormat {
    Off,
    Obj,
    PlyAscii,
    PlyBinary,
}

impl MeshFormat {
    /// Guesses the format from a file extension. PLY files are sniffed on load,
    /// so `PlyAscii` stands for both encodings here.
    pub fn from_path(path: &Path) -> Result<Self, MeshError> {
        let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase();
        match ext.as_str() {
            "off" => Ok(Self::Off),
            "obj" => Ok(Self::Obj),
            "ply" => Ok(Self::PlyAscii),
            other => Err(MeshError::Format(format!("unknown extension '{other}'"))),
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> MeshError + '_ {
    move |source| MeshError::Io { path: path.display().to_string(), source }
}

fn parse_err(line: usize, msg: impl Into<String>) -> MeshError {
    MeshError::Parse { line, msg: msg.into() }
}

/// Loads a mesh. `format = None` picks the format from the extension.
pub fn load_mesh(path: &Path, format: Option<MeshFormat>) -> Result<TriMesh, MeshError> {
    let format = match format {
        Some(f) => f,
        None => MeshFormat::from_path(path)?,
    };
    let mut bytes = Vec::new();
    File::open(path).and_then(|mut f| f.read_to_end(&mut bytes)).map_err(io_err(path))?;
    let (verts, faces) = match format {
        MeshFormat::Off => parse_off(&bytes)?,
        MeshFormat::Obj => parse_obj(&bytes)?,
        MeshFormat::PlyAscii | MeshFormat::PlyBinary => parse_ply(&bytes)?,
    };
    TriMesh::new(verts, faces)
}

pub fn save_mesh(mesh: &TriMesh, path: &Path, format: MeshFormat) -> Result<(), MeshError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    match format {
        MeshFormat::Off => write_off(mesh, &mut w),
        MeshFormat::Obj => write_obj(mesh, &mut w),
        MeshFormat::PlyAscii => write_ply(mesh, None, false, &mut w),
        MeshFormat::PlyBinary => write_ply(mesh, None, true, &mut w),
    }
    .and_then(|_| w.flush())
    .map_err(io_err(path))
}

/// ASCII PLY with per-vertex `red green blue` properties.
pub fn save_ply_colored(mesh: &TriMesh, colors: &[[u8; 3]], path: &Path) -> Result<(), MeshError> {
    assert_eq!(colors.len(), mesh.vertex_count());
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    write_ply(mesh, Some(colors), false, &mut w).and_then(|_| w.flush()).map_err(io_err(path))
}

/// Label sidecar: one integer per line, line i is the label of vertex i.
pub fn load_labels(path: &Path) -> Result<Vec<u8>, MeshError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        let l: i64 = t.parse().map_err(|_| parse_err(i + 1, format!("bad label '{t}'")))?;
        if !(0..LABEL_COUNT as i64).contains(&l) {
            return Err(MeshError::Label(format!(
                "vertex {} has label {l} outside 0..{LABEL_COUNT}",
                out.len()
            )));
        }
        out.push(l as u8);
    }
    Ok(out)
}

pub fn save_labels(labels: &[u8], path: &Path) -> Result<(), MeshError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    for l in labels {
        writeln!(w, "{l}").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

type Parsed = (Vec<Vec3>, Vec<[usize; 3]>);

/// Content lines with comments stripped, paired with 1-based line numbers.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter_map(|(i, l)| {
        let l = l.split('#').next().unwrap_or("").trim();
        (!l.is_empty()).then_some((i + 1, l))
    })
}

fn parse_num<T: std::str::FromStr>(tok: Option<&str>, line: usize) -> Result<T, MeshError> {
    let tok = tok.ok_or_else(|| parse_err(line, "missing value"))?;
    tok.parse().map_err(|_| parse_err(line, format!("bad number '{tok}'")))
}

fn parse_off(bytes: &[u8]) -> Result<Parsed, MeshError> {
    let text = std::str::from_utf8(bytes).map_err(|_| parse_err(0, "OFF file is not UTF-8"))?;
    let mut lines = content_lines(text);
    let (l0, header) = lines.next().ok_or_else(|| parse_err(1, "empty file"))?;
    let counts_line = if header.starts_with("OFF") {
        let rest = header[3..].trim();
        if rest.is_empty() {
            lines.next().ok_or_else(|| parse_err(l0, "missing counts"))?
        } else {
            (l0, rest)
        }
    } else {
        return Err(parse_err(l0, "missing OFF header"));
    };
    let mut it = counts_line.1.split_whitespace();
    let nv: usize = parse_num(it.next(), counts_line.0)?;
    let nf: usize = parse_num(it.next(), counts_line.0)?;
    let mut verts = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (ln, l) = lines.next().ok_or_else(|| parse_err(0, "unexpected end of vertex list"))?;
        let mut it = l.split_whitespace();
        verts.push(Vec3::new(parse_num(it.next(), ln)?, parse_num(it.next(), ln)?, parse_num(it.next(), ln)?));
    }
    let mut faces = Vec::with_capacity(nf);
    for fi in 0..nf {
        let (ln, l) = lines.next().ok_or_else(|| parse_err(0, "unexpected end of face list"))?;
        let mut it = l.split_whitespace();
        let k: usize = parse_num(it.next(), ln)?;
        if k != 3 {
            return Err(MeshError::NonTriangle(fi));
        }
        faces.push([parse_num(it.next(), ln)?, parse_num(it.next(), ln)?, parse_num(it.next(), ln)?]);
    }
    Ok((verts, faces))
}

fn parse_obj(bytes: &[u8]) -> Result<Parsed, MeshError> {
    let text = std::str::from_utf8(bytes).map_err(|_| parse_err(0, "OBJ file is not UTF-8"))?;
    let mut verts = Vec::new();
    let mut faces = Vec::new();
    for (ln, l) in content_lines(text) {
        let mut it = l.split_whitespace();
        match it.next() {
            Some("v") => verts.push(Vec3::new(
                parse_num(it.next(), ln)?,
                parse_num(it.next(), ln)?,
                parse_num(it.next(), ln)?,
            )),
            Some("f") => {
                let idx: Vec<&str> = it.collect();
                if idx.len() != 3 {
                    return Err(MeshError::NonTriangle(faces.len()));
                }
                let mut face = [0usize; 3];
                for (k, tok) in idx.iter().enumerate() {
                    let first = tok.split('/').next().unwrap_or("");
                    let i: i64 = parse_num(Some(first), ln)?;
                    let resolved = if i > 0 { i - 1 } else { verts.len() as i64 + i };
                    if resolved < 0 {
                        return Err(parse_err(ln, format!("bad vertex reference {i}")));
                    }
                    face[k] = resolved as usize;
                }
                faces.push(face);
            }
            _ => {}
        }
    }
    Ok((verts, faces))
}

#[derive(Debug, Clone, Copy)]
enum PlyType {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl PlyType {
    fn parse(s: &str, line: usize) -> Result<Self, MeshError> {
        Ok(match s {
            "char" | "int8" => Self::I8,
            "uchar" | "uint8" => Self::U8,
            "short" | "int16" => Self::I16,
            "ushort" | "uint16" => Self::U16,
            "int" | "int32" => Self::I32,
            "uint" | "uint32" => Self::U32,
            "float" | "float32" => Self::F32,
            "double" | "float64" => Self::F64,
            other => return Err(parse_err(line, format!("unknown PLY type '{other}'"))),
        })
    }

    fn size(self) -> usize {
        match self {
            Self::I8 | Self::U8 => 1,
            Self::I16 | Self::U16 => 2,
            Self::I32 | Self::U32 | Self::F32 => 4,
            Self::F64 => 8,
        }
    }

    fn read_le(self, b: &[u8]) -> f64 {
        match self {
            Self::I8 => b[0] as i8 as f64,
            Self::U8 => b[0] as f64,
            Self::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Self::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Self::I32 => i32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Self::U32 => u32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Self::F32 => f32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Self::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

#[derive(Debug)]
enum PlyProp {
    Scalar(String, PlyType),
    List(String, PlyType, PlyType),
}

#[derive(Debug)]
struct PlyElement {
    name: String,
    count: usize,
    props: Vec<PlyProp>,
}

fn parse_ply(bytes: &[u8]) -> Result<Parsed, MeshError> {
    // header is ASCII up to and including "end_header\n"
    let marker = b"end_header";
    let end = bytes
        .windows(marker.len())
        .position(|w| w == marker)
        .ok_or_else(|| parse_err(0, "missing end_header"))?;
    let mut body_start = end + marker.len();
    while body_start < bytes.len() && bytes[body_start] != b'\n' {
        body_start += 1;
    }
    body_start += 1;
    let header = std::str::from_utf8(&bytes[..end]).map_err(|_| parse_err(0, "bad PLY header"))?;
    let mut binary = false;
    let mut elements: Vec<PlyElement> = Vec::new();
    for (i, l) in header.lines().enumerate() {
        let ln = i + 1;
        let toks: Vec<&str> = l.split_whitespace().collect();
        match toks.first().copied() {
            Some("ply") | Some("comment") | Some("obj_info") | None => {}
            Some("format") => match toks.get(1).copied() {
                Some("ascii") => binary = false,
                Some("binary_little_endian") => binary = true,
                other => return Err(MeshError::Format(format!("unsupported PLY encoding {other:?}"))),
            },
            Some("element") => elements.push(PlyElement {
                name: toks.get(1).unwrap_or(&"").to_string(),
                count: parse_num(toks.get(2).copied(), ln)?,
                props: Vec::new(),
            }),
            Some("property") => {
                let el = elements.last_mut().ok_or_else(|| parse_err(ln, "property before element"))?;
                if toks.get(1) == Some(&"list") {
                    if toks.len() < 5 {
                        return Err(parse_err(ln, "short list property"));
                    }
                    el.props.push(PlyProp::List(
                        toks[4].to_string(),
                        PlyType::parse(toks[2], ln)?,
                        PlyType::parse(toks[3], ln)?,
                    ));
                } else {
                    if toks.len() < 3 {
                        return Err(parse_err(ln, "short property"));
                    }
                    el.props.push(PlyProp::Scalar(toks[2].to_string(), PlyType::parse(toks[1], ln)?));
                }
            }
            Some(other) => return Err(parse_err(ln, format!("unexpected header keyword '{other}'"))),
        }
    }

    let body = &bytes[body_start.min(bytes.len())..];
    let mut verts = Vec::new();
    let mut faces = Vec::new();
    let mut reader = PlyBody::new(body, binary);
    for el in &elements {
        for item in 0..el.count {
            let mut xyz = [0.0; 3];
            let mut list: Option<Vec<usize>> = None;
            for p in &el.props {
                match p {
                    PlyProp::Scalar(name, ty) => {
                        let v = reader.scalar(*ty)?;
                        match name.as_str() {
                            "x" => xyz[0] = v,
                            "y" => xyz[1] = v,
                            "z" => xyz[2] = v,
                            _ => {}
                        }
                    }
                    PlyProp::List(name, count_ty, item_ty) => {
                        let k = reader.scalar(*count_ty)? as usize;
                        let mut vals = Vec::with_capacity(k);
                        for _ in 0..k {
                            vals.push(reader.scalar(*item_ty)?);
                        }
                        if name == "vertex_indices" || name == "vertex_index" {
                            list = Some(vals.into_iter().map(|v| v as usize).collect());
                        }
                    }
                }
            }
            reader.end_record();
            match el.name.as_str() {
                "vertex" => verts.push(Vec3::new(xyz[0], xyz[1], xyz[2])),
                "face" => {
                    let idx = list.ok_or_else(|| parse_err(0, "face element without vertex_indices"))?;
                    if idx.len() != 3 {
                        return Err(MeshError::NonTriangle(item));
                    }
                    faces.push([idx[0], idx[1], idx[2]]);
                }
                _ => {}
            }
        }
    }
    Ok((verts, faces))
}

struct PlyBody<'a> {
    bytes: &'a [u8],
    pos: usize,
    binary: bool,
    tokens: std::vec::IntoIter<&'a str>,
    line: usize,
}

impl<'a> PlyBody<'a> {
    fn new(bytes: &'a [u8], binary: bool) -> Self {
        Self { bytes, pos: 0, binary, tokens: Vec::new().into_iter(), line: 0 }
    }

    fn scalar(&mut self, ty: PlyType) -> Result<f64, MeshError> {
        if self.binary {
            let n = ty.size();
            if self.pos + n > self.bytes.len() {
                return Err(parse_err(0, "truncated binary PLY body"));
            }
            let v = ty.read_le(&self.bytes[self.pos..self.pos + n]);
            self.pos += n;
            Ok(v)
        } else {
            loop {
                if let Some(t) = self.tokens.next() {
                    return t.parse().map_err(|_| parse_err(self.line, format!("bad number '{t}'")));
                }
                self.next_line()?;
            }
        }
    }

    fn next_line(&mut self) -> Result<(), MeshError> {
        loop {
            if self.pos >= self.bytes.len() {
                return Err(parse_err(self.line, "unexpected end of PLY body"));
            }
            let rest = &self.bytes[self.pos..];
            let len = rest.iter().position(|&b| b == b'\n').unwrap_or(rest.len());
            let line = std::str::from_utf8(&rest[..len]).map_err(|_| parse_err(self.line, "bad UTF-8"))?;
            self.pos += len + 1;
            self.line += 1;
            let toks: Vec<&'a str> = line.split_whitespace().collect();
            if !toks.is_empty() {
                self.tokens = toks.into_iter();
                return Ok(());
            }
        }
    }

    fn end_record(&mut self) {
        if !self.binary {
            self.tokens = Vec::new().into_iter();
        }
    }
}

fn write_off(mesh: &TriMesh, w: &mut impl Write) -> std::io::Result<()> {
    writeln!(w, "OFF")?;
    writeln!(w, "{} {} 0", mesh.vertex_count(), mesh.face_count())?;
    for p in mesh.vertices() {
        writeln!(w, "{} {} {}", p.x, p.y, p.z)?;
    }
    for f in mesh.faces() {
        writeln!(w, "3 {} {} {}", f[0], f[1], f[2])?;
    }
    Ok(())
}

fn write_obj(mesh: &TriMesh, w: &mut impl Write) -> std::io::Result<()> {
    for p in mesh.vertices() {
        writeln!(w, "v {} {} {}", p.x, p.y, p.z)?;
    }
    for f in mesh.faces() {
        writeln!(w, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1)?;
    }
    Ok(())
}

fn write_ply(mesh: &TriMesh, colors: Option<&[[u8; 3]]>, binary: bool, w: &mut impl Write) -> std::io::Result<()> {
    writeln!(w, "ply")?;
    writeln!(w, "format {} 1.0", if binary { "binary_little_endian" } else { "ascii" })?;
    writeln!(w, "element vertex {}", mesh.vertex_count())?;
    writeln!(w, "property double x\nproperty double y\nproperty double z")?;
    if colors.is_some() {
        writeln!(w, "property uchar red\nproperty uchar green\nproperty uchar blue")?;
    }
    writeln!(w, "element face {}", mesh.face_count())?;
    writeln!(w, "property list uchar int vertex_indices")?;
    writeln!(w, "end_header")?;
    for (i, p) in mesh.vertices().iter().enumerate() {
        if binary {
            for c in [p.x, p.y, p.z] {
                w.write_all(&c.to_le_bytes())?;
            }
            if let Some(cs) = colors {
                w.write_all(&cs[i])?;
            }
        } else {
            write!(w, "{} {} {}", p.x, p.y, p.z)?;
            if let Some(cs) = colors {
                write!(w, " {} {} {}", cs[i][0], cs[i][1], cs[i][2])?;
            }
            writeln!(w)?;
        }
    }
    for f in mesh.faces() {
        if binary {
            w.write_all(&[3u8])?;
            for &i in f {
                w.write_all(&(i as i32).to_le_bytes())?;
            }
        } else {
            writeln!(w, "3 {} {} {}", f[0], f[1], f[2])?;
        }
    }
    Ok(())
}

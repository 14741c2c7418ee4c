//! Minimal PLY reader/writer covering the element layouts used by the crate:
//! meshes with per-face texture coordinates, per-face integer properties and
//! point clouds. Values are carried as `f64`, which is exact for every scalar
//! type up to 32 bits.

use std::io::{BufRead, Write};

use super::MeshError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlyFormat {
    Ascii,
    BinaryLittleEndian,
    BinaryBigEndian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScalarType {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl ScalarType {
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "char" | "int8" => Self::I8,
            "uchar" | "uint8" => Self::U8,
            "short" | "int16" => Self::I16,
            "ushort" | "uint16" => Self::U16,
            "int" | "int32" => Self::I32,
            "uint" | "uint32" => Self::U32,
            "float" | "float32" => Self::F32,
            "double" | "float64" => Self::F64,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            Self::I8 => "char",
            Self::U8 => "uchar",
            Self::I16 => "short",
            Self::U16 => "ushort",
            Self::I32 => "int",
            Self::U32 => "uint",
            Self::F32 => "float",
            Self::F64 => "double",
        }
    }

    fn size(self) -> usize {
        match self {
            Self::I8 | Self::U8 => 1,
            Self::I16 | Self::U16 => 2,
            Self::I32 | Self::U32 | Self::F32 => 4,
            Self::F64 => 8,
        }
    }

    fn decode(self, b: &[u8], big: bool) -> f64 {
        macro_rules! num {
            ($t:ty, $n:expr) => {{
                let mut a = [0u8; $n];
                a.copy_from_slice(&b[..$n]);
                (if big { <$t>::from_be_bytes(a) } else { <$t>::from_le_bytes(a) }) as f64
            }};
        }
        match self {
            Self::I8 => b[0] as i8 as f64,
            Self::U8 => b[0] as f64,
            Self::I16 => num!(i16, 2),
            Self::U16 => num!(u16, 2),
            Self::I32 => num!(i32, 4),
            Self::U32 => num!(u32, 4),
            Self::F32 => num!(f32, 4),
            Self::F64 => num!(f64, 8),
        }
    }

    fn encode_le(self, v: f64, out: &mut Vec<u8>) {
        match self {
            Self::I8 => out.push(v as i8 as u8),
            Self::U8 => out.push(v as u8),
            Self::I16 => out.extend_from_slice(&(v as i16).to_le_bytes()),
            Self::U16 => out.extend_from_slice(&(v as u16).to_le_bytes()),
            Self::I32 => out.extend_from_slice(&(v as i32).to_le_bytes()),
            Self::U32 => out.extend_from_slice(&(v as u32).to_le_bytes()),
            Self::F32 => out.extend_from_slice(&(v as f32).to_le_bytes()),
            Self::F64 => out.extend_from_slice(&v.to_le_bytes()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PropertyKind {
    Scalar(ScalarType),
    List { count: ScalarType, item: ScalarType },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PropertyDef {
    pub name: String,
    pub kind: PropertyKind,
}

impl PropertyDef {
    pub fn scalar(name: &str, ty: ScalarType) -> Self {
        Self { name: name.to_string(), kind: PropertyKind::Scalar(ty) }
    }

    pub fn list(name: &str, count: ScalarType, item: ScalarType) -> Self {
        Self { name: name.to_string(), kind: PropertyKind::List { count, item } }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PlyValue {
    Scalar(f64),
    List(Vec<f64>),
}

impl PlyValue {
    pub fn as_scalar(&self) -> Option<f64> {
        match self {
            PlyValue::Scalar(v) => Some(*v),
            PlyValue::List(_) => None,
        }
    }

    pub fn as_list(&self) -> Option<&[f64]> {
        match self {
            PlyValue::List(v) => Some(v),
            PlyValue::Scalar(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlyElement {
    pub name: String,
    pub props: Vec<PropertyDef>,
    pub rows: Vec<Vec<PlyValue>>,
}

impl PlyElement {
    pub fn new(name: &str, props: Vec<PropertyDef>) -> Self {
        Self { name: name.to_string(), props, rows: Vec::new() }
    }

    pub fn prop_index(&self, name: &str) -> Option<usize> {
        self.props.iter().position(|p| p.name == name)
    }

    /// Scalar column by property name.
    pub fn scalars(&self, name: &str) -> Option<Vec<f64>> {
        let idx = self.prop_index(name)?;
        self.rows.iter().map(|r| r[idx].as_scalar()).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlyData {
    pub format: PlyFormat,
    pub comments: Vec<String>,
    pub elements: Vec<PlyElement>,
}

impl PlyData {
    pub fn element(&self, name: &str) -> Option<&PlyElement> {
        self.elements.iter().find(|e| e.name == name)
    }

    pub fn read<R: BufRead>(mut reader: R) -> Result<Self, MeshError> {
        let mut line = String::new();
        let mut header = Vec::new();
        loop {
            line.clear();
            if reader.read_line(&mut line)? == 0 {
                return Err(MeshError::Parse("PLY header not terminated".into()));
            }
            let l = line.trim_end_matches(['\r', '\n']).to_string();
            if l == "end_header" {
                break;
            }
            header.push(l);
        }
        if header.first().map(String::as_str) != Some("ply") {
            return Err(MeshError::Parse("missing PLY magic".into()));
        }
        let mut format = None;
        let mut comments = Vec::new();
        let mut elements: Vec<(PlyElement, usize)> = Vec::new();
        for l in &header[1..] {
            let mut toks = l.split_whitespace();
            match toks.next() {
                Some("format") => {
                    format = Some(match toks.next() {
                        Some("ascii") => PlyFormat::Ascii,
                        Some("binary_little_endian") => PlyFormat::BinaryLittleEndian,
                        Some("binary_big_endian") => PlyFormat::BinaryBigEndian,
                        other => {
                            return Err(MeshError::Parse(format!("unknown PLY format {other:?}")))
                        }
                    })
                }
                Some("comment") | Some("obj_info") => {
                    comments.push(l.splitn(2, ' ').nth(1).unwrap_or("").to_string())
                }
                Some("element") => {
                    let name = toks.next().ok_or_else(|| bad_header(l))?;
                    let count: usize =
                        toks.next().and_then(|c| c.parse().ok()).ok_or_else(|| bad_header(l))?;
                    elements.push((PlyElement::new(name, Vec::new()), count));
                }
                Some("property") => {
                    let (el, _) = elements.last_mut().ok_or_else(|| bad_header(l))?;
                    let t = toks.next().ok_or_else(|| bad_header(l))?;
                    let def = if t == "list" {
                        let count = toks.next().and_then(ScalarType::parse);
                        let item = toks.next().and_then(ScalarType::parse);
                        let name = toks.next();
                        match (count, item, name) {
                            (Some(c), Some(i), Some(n)) => PropertyDef::list(n, c, i),
                            _ => return Err(bad_header(l)),
                        }
                    } else {
                        let ty = ScalarType::parse(t).ok_or_else(|| bad_header(l))?;
                        let name = toks.next().ok_or_else(|| bad_header(l))?;
                        PropertyDef::scalar(name, ty)
                    };
                    el.props.push(def);
                }
                Some(_) | None => {}
            }
        }
        let format = format.ok_or_else(|| MeshError::Parse("PLY format line missing".into()))?;
        let mut out = Vec::with_capacity(elements.len());
        match format {
            PlyFormat::Ascii => {
                let mut body = String::new();
                reader.read_to_string(&mut body)?;
                let mut toks = body.split_whitespace();
                let mut next = || -> Result<f64, MeshError> {
                    toks.next()
                        .ok_or_else(|| MeshError::Parse("truncated PLY body".into()))?
                        .parse::<f64>()
                        .map_err(|e| MeshError::Parse(format!("bad PLY number: {e}")))
                };
                for (mut el, count) in elements {
                    for _ in 0..count {
                        let mut row = Vec::with_capacity(el.props.len());
                        for p in &el.props {
                            row.push(match p.kind {
                                PropertyKind::Scalar(_) => PlyValue::Scalar(next()?),
                                PropertyKind::List { .. } => {
                                    let n = next()? as usize;
                                    PlyValue::List((0..n).map(|_| next()).collect::<Result<_, _>>()?)
                                }
                            });
                        }
                        el.rows.push(row);
                    }
                    out.push(el);
                }
            }
            PlyFormat::BinaryLittleEndian | PlyFormat::BinaryBigEndian => {
                let big = format == PlyFormat::BinaryBigEndian;
                let mut body = Vec::new();
                reader.read_to_end(&mut body)?;
                let mut pos = 0usize;
                let mut take = |ty: ScalarType| -> Result<f64, MeshError> {
                    let n = ty.size();
                    if pos + n > body.len() {
                        return Err(MeshError::Parse("truncated PLY body".into()));
                    }
                    let v = ty.decode(&body[pos..pos + n], big);
                    pos += n;
                    Ok(v)
                };
                for (mut el, count) in elements {
                    for _ in 0..count {
                        let mut row = Vec::with_capacity(el.props.len());
                        for p in &el.props {
                            row.push(match p.kind {
                                PropertyKind::Scalar(t) => PlyValue::Scalar(take(t)?),
                                PropertyKind::List { count, item } => {
                                    let n = take(count)? as usize;
                                    PlyValue::List((0..n).map(|_| take(item)).collect::<Result<_, _>>()?)
                                }
                            });
                        }
                        el.rows.push(row);
                    }
                    out.push(el);
                }
            }
        }
        Ok(Self { format, comments, elements: out })
    }

    /// Writes the data as `binary_little_endian` (or ascii if requested).
    pub fn write<W: Write>(&self, mut w: W) -> Result<(), MeshError> {
        let mut head = String::from("ply\n");
        head.push_str(match self.format {
            PlyFormat::Ascii => "format ascii 1.0\n",
            _ => "format binary_little_endian 1.0\n",
        });
        for c in &self.comments {
            head.push_str(&format!("comment {c}\n"));
        }
        for el in &self.elements {
            head.push_str(&format!("element {} {}\n", el.name, el.rows.len()));
            for p in &el.props {
                match p.kind {
                    PropertyKind::Scalar(t) => head.push_str(&format!("property {} {}\n", t.name(), p.name)),
                    PropertyKind::List { count, item } => head.push_str(&format!(
                        "property list {} {} {}\n",
                        count.name(),
                        item.name(),
                        p.name
                    )),
                }
            }
        }
        head.push_str("end_header\n");
        w.write_all(head.as_bytes())?;
        let mut buf = Vec::new();
        for el in &self.elements {
            for row in &el.rows {
                if self.format == PlyFormat::Ascii {
                    let mut parts = Vec::new();
                    for v in row {
                        match v {
                            PlyValue::Scalar(x) => parts.push(fmt_ascii(*x)),
                            PlyValue::List(xs) => {
                                parts.push(xs.len().to_string());
                                parts.extend(xs.iter().map(|x| fmt_ascii(*x)));
                            }
                        }
                    }
                    buf.extend_from_slice(parts.join(" ").as_bytes());
                    buf.push(b'\n');
                } else {
                    for (p, v) in el.props.iter().zip(row) {
                        match (&p.kind, v) {
                            (PropertyKind::Scalar(t), PlyValue::Scalar(x)) => t.encode_le(*x, &mut buf),
                            (PropertyKind::List { count, item }, PlyValue::List(xs)) => {
                                count.encode_le(xs.len() as f64, &mut buf);
                                for x in xs {
                                    item.encode_le(*x, &mut buf);
                                }
                            }
                            _ => {
                                return Err(MeshError::Parse(format!(
                                    "value shape does not match property {}",
                                    p.name
                                )))
                            }
                        }
                    }
                }
            }
        }
        w.write_all(&buf)?;
        Ok(())
    }
}

fn fmt_ascii(x: f64) -> String {
    if x.fract() == 0.0 && x.abs() < 1e15 {
        format!("{}", x as i64)
    } else {
        format!("{x}")
    }
}

fn bad_header(l: &str) -> MeshError {
    MeshError::Parse(format!("malformed PLY header line: {l}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(format: PlyFormat) -> PlyData {
        let mut v = PlyElement::new(
            "vertex",
            vec![
                PropertyDef::scalar("x", ScalarType::F32),
                PropertyDef::scalar("y", ScalarType::F64),
                PropertyDef::scalar("label", ScalarType::I32),
            ],
        );
        v.rows.push(vec![PlyValue::Scalar(0.5), PlyValue::Scalar(-2.25), PlyValue::Scalar(7.0)]);
        v.rows.push(vec![PlyValue::Scalar(1.0), PlyValue::Scalar(3.0), PlyValue::Scalar(-1.0)]);
        let mut f = PlyElement::new(
            "face",
            vec![PropertyDef::list("vertex_indices", ScalarType::U8, ScalarType::I32)],
        );
        f.rows.push(vec![PlyValue::List(vec![0.0, 1.0, 1.0])]);
        PlyData { format, comments: vec!["TextureFile a.png".into()], elements: vec![v, f] }
    }

    #[test]
    fn binary_and_ascii_round_trip() {
        for fmt in [PlyFormat::Ascii, PlyFormat::BinaryLittleEndian] {
            let data = sample(fmt);
            let mut bytes = Vec::new();
            data.write(&mut bytes).unwrap();
            let back = PlyData::read(&bytes[..]).unwrap();
            assert_eq!(back, data);
        }
    }

    #[test]
    fn truncated_body_is_an_error() {
        let mut bytes = Vec::new();
        sample(PlyFormat::BinaryLittleEndian).write(&mut bytes).unwrap();
        bytes.truncate(bytes.len() - 3);
        assert!(PlyData::read(&bytes[..]).is_err());
    }
}

//! Point cloud file ingestion and output.
//!
//! Supported inputs: ASCII XYZ (one `x y z` triple per line), ASCII PLY and
//! binary little-endian PLY with float or double vertex coordinates.
//! Non-coordinate properties are ignored. Non-finite coordinates are
//! rejected, not dropped.

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::Vector3;

use crate::cloud::PointMatrix;
use crate::error::{Error, Result};

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Loads a cloud by sniffing the format: files starting with `ply` are
/// parsed as PLY, anything else as ASCII XYZ.
pub fn load_cloud(path: &Path) -> Result<PointMatrix> {
    let bytes = fs::read(path)?;
    if bytes.starts_with(b"ply") {
        parse_ply(path, &bytes)
    } else {
        parse_xyz(path, &bytes)
    }
}

fn parse_xyz(path: &Path, bytes: &[u8]) -> Result<PointMatrix> {
    let text = std::str::from_utf8(bytes)
        .map_err(|e| parse_err(path, 0, format!("not valid UTF-8: {e}")))?;
    let mut points = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut it = line.split_whitespace();
        let mut coord = [0.0f64; 3];
        for c in &mut coord {
            let token = it
                .next()
                .ok_or_else(|| parse_err(path, lineno + 1, "expected three coordinates"))?;
            *c = token
                .parse()
                .map_err(|e| parse_err(path, lineno + 1, format!("bad number {token:?}: {e}")))?;
        }
        points.push(Vector3::new(coord[0], coord[1], coord[2]));
    }
    PointMatrix::new(points)
}

#[derive(Clone, Copy, PartialEq)]
enum PlyFormat {
    Ascii,
    BinaryLe,
}

#[derive(Clone, Copy, PartialEq)]
enum ScalarType {
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
    fn parse(token: &str) -> Option<Self> {
        match token {
            "char" | "int8" => Some(Self::I8),
            "uchar" | "uint8" => Some(Self::U8),
            "short" | "int16" => Some(Self::I16),
            "ushort" | "uint16" => Some(Self::U16),
            "int" | "int32" => Some(Self::I32),
            "uint" | "uint32" => Some(Self::U32),
            "float" | "float32" => Some(Self::F32),
            "double" | "float64" => Some(Self::F64),
            _ => None,
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

    fn read_le(self, bytes: &[u8]) -> f64 {
        match self {
            Self::I8 => bytes[0] as i8 as f64,
            Self::U8 => bytes[0] as f64,
            Self::I16 => i16::from_le_bytes([bytes[0], bytes[1]]) as f64,
            Self::U16 => u16::from_le_bytes([bytes[0], bytes[1]]) as f64,
            Self::I32 => i32::from_le_bytes(bytes[..4].try_into().unwrap()) as f64,
            Self::U32 => u32::from_le_bytes(bytes[..4].try_into().unwrap()) as f64,
            Self::F32 => f32::from_le_bytes(bytes[..4].try_into().unwrap()) as f64,
            Self::F64 => f64::from_le_bytes(bytes[..8].try_into().unwrap()),
        }
    }
}

struct PlyElement {
    name: String,
    count: usize,
    properties: Vec<(ScalarType, String)>,
    has_list: bool,
}

fn parse_ply(path: &Path, bytes: &[u8]) -> Result<PointMatrix> {
    // Header is ASCII lines terminated by end_header.
    let mut offset = 0usize;
    let mut lineno = 0usize;
    let mut format = None;
    let mut elements: Vec<PlyElement> = Vec::new();
    loop {
        let rest = &bytes[offset..];
        let end = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| parse_err(path, lineno + 1, "header not terminated"))?;
        let line = std::str::from_utf8(&rest[..end])
            .map_err(|_| parse_err(path, lineno + 1, "non-UTF8 header"))?
            .trim_end_matches('\r')
            .trim();
        offset += end + 1;
        lineno += 1;
        let mut tokens = line.split_whitespace();
        match tokens.next() {
            Some("ply") | Some("comment") | Some("obj_info") | None => {}
            Some("format") => {
                format = match tokens.next() {
                    Some("ascii") => Some(PlyFormat::Ascii),
                    Some("binary_little_endian") => Some(PlyFormat::BinaryLe),
                    Some(other) => {
                        return Err(parse_err(
                            path,
                            lineno,
                            format!("unsupported PLY format {other:?}"),
                        ))
                    }
                    None => return Err(parse_err(path, lineno, "missing format")),
                };
            }
            Some("element") => {
                let name = tokens
                    .next()
                    .ok_or_else(|| parse_err(path, lineno, "element without name"))?;
                let count: usize = tokens
                    .next()
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| parse_err(path, lineno, "element without count"))?;
                elements.push(PlyElement {
                    name: name.to_string(),
                    count,
                    properties: Vec::new(),
                    has_list: false,
                });
            }
            Some("property") => {
                let element = elements
                    .last_mut()
                    .ok_or_else(|| parse_err(path, lineno, "property before element"))?;
                let kind = tokens
                    .next()
                    .ok_or_else(|| parse_err(path, lineno, "property without type"))?;
                if kind == "list" {
                    element.has_list = true;
                    continue;
                }
                let scalar = ScalarType::parse(kind)
                    .ok_or_else(|| parse_err(path, lineno, format!("unknown type {kind:?}")))?;
                let name = tokens
                    .next()
                    .ok_or_else(|| parse_err(path, lineno, "property without name"))?;
                element.properties.push((scalar, name.to_string()));
            }
            Some("end_header") => break,
            Some(other) => {
                return Err(parse_err(
                    path,
                    lineno,
                    format!("unexpected header keyword {other:?}"),
                ))
            }
        }
    }
    let format = format.ok_or_else(|| parse_err(path, lineno, "missing format line"))?;
    let vertex_pos = elements
        .iter()
        .position(|e| e.name == "vertex")
        .ok_or_else(|| parse_err(path, lineno, "no vertex element"))?;
    let vertex = &elements[vertex_pos];
    if vertex.has_list {
        return Err(parse_err(path, lineno, "list property on vertex element"));
    }
    let coord_idx: Vec<usize> = ["x", "y", "z"]
        .iter()
        .map(|axis| {
            vertex
                .properties
                .iter()
                .position(|(_, name)| name == axis)
                .ok_or_else(|| parse_err(path, lineno, format!("vertex missing {axis}")))
        })
        .collect::<Result<_>>()?;

    match format {
        PlyFormat::Ascii => {
            let text = std::str::from_utf8(&bytes[offset..])
                .map_err(|_| parse_err(path, lineno, "non-UTF8 body"))?;
            let mut lines = text.lines();
            // Skip data rows of elements preceding vertex.
            for element in &elements[..vertex_pos] {
                for _ in 0..element.count {
                    lines
                        .next()
                        .ok_or_else(|| parse_err(path, lineno, "truncated body"))?;
                    lineno += 1;
                }
            }
            let mut points = Vec::with_capacity(vertex.count);
            for row in 0..vertex.count {
                let line = lines.next().ok_or_else(|| {
                    parse_err(path, lineno + row + 1, "truncated vertex data")
                })?;
                let fields: Vec<&str> = line.split_whitespace().collect();
                if fields.len() < vertex.properties.len() {
                    return Err(parse_err(
                        path,
                        lineno + row + 1,
                        format!(
                            "expected {} fields, got {}",
                            vertex.properties.len(),
                            fields.len()
                        ),
                    ));
                }
                let mut coord = [0.0f64; 3];
                for (axis, &idx) in coord_idx.iter().enumerate() {
                    coord[axis] = fields[idx].parse().map_err(|e| {
                        parse_err(path, lineno + row + 1, format!("bad number: {e}"))
                    })?;
                }
                points.push(Vector3::new(coord[0], coord[1], coord[2]));
            }
            PointMatrix::new(points)
        }
        PlyFormat::BinaryLe => {
            if vertex_pos != 0 {
                return Err(parse_err(
                    path,
                    lineno,
                    "binary PLY with elements before vertex is not supported",
                ));
            }
            let stride: usize = vertex.properties.iter().map(|(t, _)| t.size()).sum();
            let mut field_offsets = Vec::with_capacity(vertex.properties.len());
            let mut acc = 0;
            for (t, _) in &vertex.properties {
                field_offsets.push(acc);
                acc += t.size();
            }
            let body = &bytes[offset..];
            if body.len() < stride * vertex.count {
                return Err(parse_err(
                    path,
                    lineno,
                    format!(
                        "truncated binary vertex data: need {} bytes, have {}",
                        stride * vertex.count,
                        body.len()
                    ),
                ));
            }
            let mut points = Vec::with_capacity(vertex.count);
            for row in 0..vertex.count {
                let base = row * stride;
                let mut coord = [0.0f64; 3];
                for (axis, &idx) in coord_idx.iter().enumerate() {
                    let (ty, _) = vertex.properties[idx];
                    coord[axis] = ty.read_le(&body[base + field_offsets[idx]..]);
                }
                points.push(Vector3::new(coord[0], coord[1], coord[2]));
            }
            PointMatrix::new(points)
        }
    }
}

/// Writes a cloud by extension: `.ply` as ASCII PLY, everything else as XYZ.
pub fn save_cloud(cloud: &PointMatrix, path: &Path) -> Result<()> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("ply") => write_ply_ascii(cloud, path),
        _ => write_xyz(cloud, path),
    }
}

pub fn write_xyz(cloud: &PointMatrix, path: &Path) -> Result<()> {
    let mut out = String::new();
    for p in cloud.iter() {
        out.push_str(&format!("{} {} {}\n", p.x, p.y, p.z));
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn write_ply_ascii(cloud: &PointMatrix, path: &Path) -> Result<()> {
    let mut out = String::new();
    out.push_str("ply\nformat ascii 1.0\n");
    out.push_str(&format!("element vertex {}\n", cloud.len()));
    out.push_str("property double x\nproperty double y\nproperty double z\nend_header\n");
    for p in cloud.iter() {
        out.push_str(&format!("{} {} {}\n", p.x, p.y, p.z));
    }
    fs::write(path, out)?;
    Ok(())
}

/// Binary little-endian PLY with float32 coordinates.
pub fn write_ply_binary(cloud: &PointMatrix, path: &Path) -> Result<()> {
    let mut file = fs::File::create(path)?;
    write!(
        file,
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\nproperty float x\nproperty float y\nproperty float z\nend_header\n",
        cloud.len()
    )?;
    let mut body = Vec::with_capacity(cloud.len() * 12);
    for p in cloud.iter() {
        body.extend_from_slice(&(p.x as f32).to_le_bytes());
        body.extend_from_slice(&(p.y as f32).to_le_bytes());
        body.extend_from_slice(&(p.z as f32).to_le_bytes());
    }
    file.write_all(&body)?;
    Ok(())
}

//! The PCMM1 model container.
//!
//! A text header (magic line plus a config echo) followed by binary sections
//! per primitive type. Floats are IEEE-754 little-endian f64, bitmaps are
//! row-major packed bits. Round-trips are bit-exact; files are written
//! atomically (temp file plus rename).

use std::fs;
use std::path::Path;

use nalgebra::{Matrix3, Vector3};

use crate::boundary::{BoundaryGrid, ClipLines, Corner};
use crate::bspline::{SplinePatch, DEGREE};
use crate::cloud::PipelineConfig;
use crate::error::{Error, Result};
use crate::eval::{GaussianPrimitive, ModelStats, PlanePrimitive, SceneModel, SurfacePrimitive};

const MAGIC: &str = "PCMM1";

fn push_f64(out: &mut Vec<u8>, v: f64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn push_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn push_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn push_bitmap(out: &mut Vec<u8>, bits: &[bool]) {
    let mut byte = 0u8;
    for (i, &b) in bits.iter().enumerate() {
        if b {
            byte |= 1 << (i % 8);
        }
        if i % 8 == 7 {
            out.push(byte);
            byte = 0;
        }
    }
    if bits.len() % 8 != 0 {
        out.push(byte);
    }
}

fn push_grid(out: &mut Vec<u8>, grid: &BoundaryGrid) {
    push_f64(out, grid.cell_size);
    push_f64(out, grid.origin[0]);
    push_f64(out, grid.origin[1]);
    push_u64(out, grid.nx as u64);
    push_u64(out, grid.ny as u64);
    push_bitmap(out, &grid.occupied);
    push_bitmap(out, &grid.boundary);
    for idx in 0..grid.nx * grid.ny {
        if grid.occupied[idx] {
            push_u32(out, grid.counts[idx]);
            push_f64(out, grid.cell_means[idx].x);
            push_f64(out, grid.cell_means[idx].y);
            push_f64(out, grid.cell_means[idx].z);
        }
    }
    push_u64(out, grid.clips.len() as u64);
    for c in &grid.clips {
        push_u32(out, c.i);
        push_u32(out, c.j);
        out.push(c.corner as u8);
        push_f64(out, c.lx);
        push_f64(out, c.ly);
        push_f64(out, c.lxy);
    }
}

fn push_pose(out: &mut Vec<u8>, origin: &Vector3<f64>, basis: &Matrix3<f64>) {
    for k in 0..3 {
        push_f64(out, origin[k]);
    }
    for col in 0..3 {
        for row in 0..3 {
            push_f64(out, basis[(row, col)]);
        }
    }
}

/// Serializes a model into the container byte layout.
pub fn encode_model(model: &SceneModel) -> Vec<u8> {
    let mut out = Vec::new();
    let cfg = &model.config;
    out.extend_from_slice(MAGIC.as_bytes());
    out.push(b'\n');
    let header = format!(
        "voxel_size = {}\nem_switch = {}\ndensity_radius = {}\nmin_cluster_points = {}\n\
         merge_angle = {}\nmerge_distance = {}\nplane_cell_size = {}\nsurface_cell_size = {}\n\
         rng_seed = {}\nend_header\n",
        cfg.voxel_size,
        cfg.em_switch,
        cfg.density_radius,
        cfg.min_cluster_points,
        cfg.merge_angle,
        cfg.merge_distance,
        cfg.plane_cell_size,
        cfg.surface_cell_size,
        cfg.rng_seed
    );
    out.extend_from_slice(header.as_bytes());

    push_u64(&mut out, model.gaussians.len() as u64);
    push_u64(&mut out, model.planes.len() as u64);
    push_u64(&mut out, model.surfaces.len() as u64);
    push_u64(&mut out, model.stats.input_points);
    push_u64(&mut out, model.stats.filtered_points);

    for g in &model.gaussians {
        for k in 0..3 {
            push_f64(&mut out, g.mean[k]);
        }
        // Upper triangle of the symmetric covariance.
        for (row, col) in [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)] {
            push_f64(&mut out, g.covariance[(row, col)]);
        }
        push_u64(&mut out, g.source_points);
    }

    for p in &model.planes {
        push_pose(&mut out, &p.origin, &p.basis);
        push_grid(&mut out, &p.grid);
    }

    for s in &model.surfaces {
        push_pose(&mut out, &s.origin, &s.basis);
        push_grid(&mut out, &s.grid);
        out.push(s.patch.degree as u8);
        push_u64(&mut out, s.patch.knots_u.len() as u64);
        for &k in &s.patch.knots_u {
            push_f64(&mut out, k);
        }
        push_u64(&mut out, s.patch.knots_v.len() as u64);
        for &k in &s.patch.knots_v {
            push_f64(&mut out, k);
        }
        for &z in &s.patch.ctrl_z {
            push_f64(&mut out, z);
        }
    }
    out
}

/// Writes the model atomically.
pub fn save_model(model: &SceneModel, path: &Path) -> Result<()> {
    let bytes = encode_model(model);
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let tmp = match dir {
        Some(d) => d.join(format!(
            ".{}.tmp{}",
            path.file_name().and_then(|n| n.to_str()).unwrap_or("model"),
            std::process::id()
        )),
        None => Path::new(&format!(".model.tmp{}", std::process::id())).to_path_buf(),
    };
    fs::write(&tmp, &bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    offset: usize,
}

impl<'a> Reader<'a> {
    fn err(&self, message: impl Into<String>) -> Error {
        Error::ModelFormat {
            offset: self.offset as u64,
            message: message.into(),
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.offset + n > self.bytes.len() {
            return Err(self.err(format!(
                "unexpected end of file: need {n} bytes, {} left",
                self.bytes.len() - self.offset
            )));
        }
        let slice = &self.bytes[self.offset..self.offset + n];
        self.offset += n;
        Ok(slice)
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn count(&mut self, what: &str) -> Result<usize> {
        let v = self.u64()?;
        if v > 1 << 40 {
            return Err(self.err(format!("implausible {what} count {v}")));
        }
        Ok(v as usize)
    }

    fn bitmap(&mut self, len: usize) -> Result<Vec<bool>> {
        let bytes = self.take(len.div_ceil(8))?;
        Ok((0..len).map(|i| bytes[i / 8] & (1 << (i % 8)) != 0).collect())
    }

    fn vector3(&mut self) -> Result<Vector3<f64>> {
        Ok(Vector3::new(self.f64()?, self.f64()?, self.f64()?))
    }

    fn pose(&mut self) -> Result<(Vector3<f64>, Matrix3<f64>)> {
        let origin = self.vector3()?;
        let mut basis = Matrix3::zeros();
        for col in 0..3 {
            for row in 0..3 {
                basis[(row, col)] = self.f64()?;
            }
        }
        Ok((origin, basis))
    }

    fn grid(&mut self) -> Result<BoundaryGrid> {
        let cell_size = self.f64()?;
        let origin = [self.f64()?, self.f64()?];
        let nx = self.count("grid nx")?;
        let ny = self.count("grid ny")?;
        if nx == 0 || ny == 0 || nx.saturating_mul(ny) > 1 << 32 {
            return Err(self.err(format!("bad grid dimensions {nx} x {ny}")));
        }
        let cells = nx * ny;
        let occupied = self.bitmap(cells)?;
        let boundary = self.bitmap(cells)?;
        let mut counts = vec![0u32; cells];
        let mut cell_means = vec![Vector3::zeros(); cells];
        for idx in 0..cells {
            if occupied[idx] {
                counts[idx] = self.u32()?;
                cell_means[idx] = self.vector3()?;
            }
        }
        let clip_count = self.count("clip")?;
        let mut clips = Vec::with_capacity(clip_count);
        for _ in 0..clip_count {
            let i = self.u32()?;
            let j = self.u32()?;
            let corner_id = self.u8()?;
            let corner = Corner::from_id(corner_id)
                .ok_or_else(|| self.err(format!("bad corner id {corner_id}")))?;
            let lx = self.f64()?;
            let ly = self.f64()?;
            let lxy = self.f64()?;
            if i as usize >= nx || j as usize >= ny {
                return Err(self.err(format!("clip cell ({i}, {j}) outside grid")));
            }
            clips.push(ClipLines {
                i,
                j,
                corner,
                lx,
                ly,
                lxy,
            });
        }
        Ok(BoundaryGrid {
            cell_size,
            origin,
            nx,
            ny,
            occupied,
            boundary,
            counts,
            cell_means,
            clips,
        })
    }
}

fn parse_header_line(line: &str, cfg: &mut PipelineConfig, offset: u64) -> Result<()> {
    let (key, value) = line.split_once('=').ok_or(Error::ModelFormat {
        offset,
        message: format!("malformed header line {line:?}"),
    })?;
    let key = key.trim();
    let value = value.trim();
    let bad = |what: &str| Error::ModelFormat {
        offset,
        message: format!("bad {what} value {value:?}"),
    };
    match key {
        "voxel_size" => cfg.voxel_size = value.parse().map_err(|_| bad(key))?,
        "em_switch" => cfg.em_switch = value.parse().map_err(|_| bad(key))?,
        "density_radius" => cfg.density_radius = value.parse().map_err(|_| bad(key))?,
        "min_cluster_points" => cfg.min_cluster_points = value.parse().map_err(|_| bad(key))?,
        "merge_angle" => cfg.merge_angle = value.parse().map_err(|_| bad(key))?,
        "merge_distance" => cfg.merge_distance = value.parse().map_err(|_| bad(key))?,
        "plane_cell_size" => cfg.plane_cell_size = value.parse().map_err(|_| bad(key))?,
        "surface_cell_size" => cfg.surface_cell_size = value.parse().map_err(|_| bad(key))?,
        "rng_seed" => cfg.rng_seed = value.parse().map_err(|_| bad(key))?,
        other => {
            return Err(Error::ModelFormat {
                offset,
                message: format!("unknown header key {other:?}"),
            })
        }
    }
    Ok(())
}

/// Parses a model from container bytes.
pub fn decode_model(bytes: &[u8]) -> Result<SceneModel> {
    // Magic line.
    let newline = bytes.iter().position(|&b| b == b'\n').ok_or(Error::ModelFormat {
        offset: 0,
        message: "missing magic line".into(),
    })?;
    let magic = std::str::from_utf8(&bytes[..newline]).map_err(|_| Error::ModelFormat {
        offset: 0,
        message: "magic line is not UTF-8".into(),
    })?;
    if magic != MAGIC {
        if magic.starts_with("PCMM") {
            return Err(Error::VersionMismatch {
                found: magic.to_string(),
            });
        }
        return Err(Error::ModelFormat {
            offset: 0,
            message: format!("bad magic {magic:?}"),
        });
    }

    let mut cfg = PipelineConfig::default();
    let mut offset = newline + 1;
    loop {
        let rest = &bytes[offset..];
        let end = rest.iter().position(|&b| b == b'\n').ok_or(Error::ModelFormat {
            offset: offset as u64,
            message: "header not terminated by end_header".into(),
        })?;
        let line = std::str::from_utf8(&rest[..end]).map_err(|_| Error::ModelFormat {
            offset: offset as u64,
            message: "header line is not UTF-8".into(),
        })?;
        let line_offset = offset as u64;
        offset += end + 1;
        if line.trim() == "end_header" {
            break;
        }
        parse_header_line(line, &mut cfg, line_offset)?;
    }

    let mut r = Reader { bytes, offset };
    let gaussian_count = r.count("gaussian")?;
    let plane_count = r.count("plane")?;
    let surface_count = r.count("surface")?;
    let stats = ModelStats {
        input_points: r.u64()?,
        filtered_points: r.u64()?,
    };

    let mut gaussians = Vec::with_capacity(gaussian_count);
    for _ in 0..gaussian_count {
        let mean = r.vector3()?;
        let mut cov = Matrix3::zeros();
        for (row, col) in [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)] {
            let v = r.f64()?;
            cov[(row, col)] = v;
            cov[(col, row)] = v;
        }
        let source_points = r.u64()?;
        gaussians.push(GaussianPrimitive {
            mean,
            covariance: cov,
            source_points,
        });
    }

    let mut planes = Vec::with_capacity(plane_count);
    for _ in 0..plane_count {
        let (origin, basis) = r.pose()?;
        let grid = r.grid()?;
        planes.push(PlanePrimitive {
            origin,
            basis,
            grid,
        });
    }

    let mut surfaces = Vec::with_capacity(surface_count);
    for _ in 0..surface_count {
        let (origin, basis) = r.pose()?;
        let grid = r.grid()?;
        let degree = r.u8()? as usize;
        if degree != DEGREE {
            return Err(r.err(format!("unsupported spline degree {degree}")));
        }
        let ku_len = r.count("knot")?;
        if ku_len != grid.nx + degree + 3 {
            return Err(r.err(format!(
                "u knot count {ku_len} does not match grid nx {}",
                grid.nx
            )));
        }
        let mut knots_u = Vec::with_capacity(ku_len);
        for _ in 0..ku_len {
            knots_u.push(r.f64()?);
        }
        let kv_len = r.count("knot")?;
        if kv_len != grid.ny + degree + 3 {
            return Err(r.err(format!(
                "v knot count {kv_len} does not match grid ny {}",
                grid.ny
            )));
        }
        let mut knots_v = Vec::with_capacity(kv_len);
        for _ in 0..kv_len {
            knots_v.push(r.f64()?);
        }
        let ctrl_len = (grid.nx + 2) * (grid.ny + 2);
        let mut ctrl_z = Vec::with_capacity(ctrl_len);
        for _ in 0..ctrl_len {
            ctrl_z.push(r.f64()?);
        }
        let patch = SplinePatch {
            degree,
            nx: grid.nx,
            ny: grid.ny,
            origin: grid.origin,
            cell_size: grid.cell_size,
            knots_u,
            knots_v,
            ctrl_z,
        };
        surfaces.push(SurfacePrimitive {
            origin,
            basis,
            grid,
            patch,
        });
    }

    if r.offset != bytes.len() {
        return Err(r.err(format!(
            "{} trailing bytes after model data",
            bytes.len() - r.offset
        )));
    }

    Ok(SceneModel {
        gaussians,
        planes,
        surfaces,
        config: cfg,
        stats,
    })
}

pub fn load_model(path: &Path) -> Result<SceneModel> {
    let bytes = fs::read(path)?;
    decode_model(&bytes)
}

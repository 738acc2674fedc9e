//! Local-frame transform and 2D voxel boundary description.
//!
//! A detected plane (or a surface footprint) is expressed in its PCA frame,
//! then covered by a 2D occupancy grid. Boundary cells get up to three clip
//! lines anchored at their empty corner so resampling does not spill into
//! empty regions.

use nalgebra::{Matrix3, Vector3};

use crate::cloud::{compute_moments, PointMatrix};
use crate::error::{Error, Result};

/// Points of one primitive expressed in its own PCA frame.
#[derive(Clone, Debug)]
pub struct LocalFrame {
    /// World position of the frame origin (the cluster mean).
    pub origin: Vector3<f64>,
    /// Columns are the frame axes; the third column is the plane normal.
    pub basis: Matrix3<f64>,
    /// Points as offsets in the frame: `basis^T * (p - origin)`.
    pub local_points: Vec<Vector3<f64>>,
}

impl LocalFrame {
    pub fn to_world(&self, local: &Vector3<f64>) -> Vector3<f64> {
        self.basis * local + self.origin
    }
}

/// Transforms a cluster into its PCA frame. Collinear supports cannot define
/// a plane and are rejected.
pub fn to_local_frame(cluster: &PointMatrix) -> Result<LocalFrame> {
    if cluster.len() < 3 {
        return Err(Error::DegeneratePlaneSupport);
    }
    let m = compute_moments(cluster)?;
    if m.eigenvalues[0] <= 0.0 || m.eigenvalues[1] <= m.eigenvalues[0] * 1e-12 {
        return Err(Error::DegeneratePlaneSupport);
    }
    let qt = m.eigenvectors.transpose();
    let local_points = cluster.iter().map(|p| qt * (p - m.mean)).collect();
    Ok(LocalFrame {
        origin: m.mean,
        basis: m.eigenvectors,
        local_points,
    })
}

/// Identity of the empty corner of a boundary cell, in the fixed tie-break
/// order used everywhere.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Corner {
    MinXMinY = 0,
    MinXMaxY = 1,
    MaxXMinY = 2,
    MaxXMaxY = 3,
}

impl Corner {
    pub fn from_id(id: u8) -> Option<Self> {
        match id {
            0 => Some(Corner::MinXMinY),
            1 => Some(Corner::MinXMaxY),
            2 => Some(Corner::MaxXMinY),
            3 => Some(Corner::MaxXMaxY),
            _ => None,
        }
    }
}

/// Clip lines of one boundary cell: distances from the empty corner below
/// which lattice points are discarded (`lx` along x, `ly` along y, `lxy` in
/// the L1 diagonal sense).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClipLines {
    pub i: u32,
    pub j: u32,
    pub corner: Corner,
    pub lx: f64,
    pub ly: f64,
    pub lxy: f64,
}

/// 2D occupancy / boundary description of a primitive footprint.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryGrid {
    /// Cell edge length (the plane or surface boundary voxel size).
    pub cell_size: f64,
    /// Minimum corner of cell (0, 0) in the local frame.
    pub origin: [f64; 2],
    pub nx: usize,
    pub ny: usize,
    /// Row-major occupancy, index `i * ny + j`.
    pub occupied: Vec<bool>,
    /// Row-major boundary flags; subset of `occupied`.
    pub boundary: Vec<bool>,
    /// Per-cell point counts.
    pub counts: Vec<u32>,
    /// Per-cell means of the local points (zero vector for empty cells).
    pub cell_means: Vec<Vector3<f64>>,
    /// Clip lines, one entry per boundary cell, ordered by cell index.
    pub clips: Vec<ClipLines>,
}

impl BoundaryGrid {
    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.ny + j
    }

    pub fn is_occupied(&self, i: i64, j: i64) -> bool {
        i >= 0
            && j >= 0
            && (i as usize) < self.nx
            && (j as usize) < self.ny
            && self.occupied[i as usize * self.ny + j as usize]
    }

    pub fn cell_x_min(&self, i: usize) -> f64 {
        self.origin[0] + i as f64 * self.cell_size
    }

    pub fn cell_y_min(&self, j: usize) -> f64 {
        self.origin[1] + j as f64 * self.cell_size
    }

    pub fn cell_center(&self, i: usize, j: usize) -> [f64; 2] {
        [
            self.cell_x_min(i) + 0.5 * self.cell_size,
            self.cell_y_min(j) + 0.5 * self.cell_size,
        ]
    }

    pub fn corner_position(&self, i: usize, j: usize, corner: Corner) -> [f64; 2] {
        let x = match corner {
            Corner::MinXMinY | Corner::MinXMaxY => self.cell_x_min(i),
            _ => self.cell_x_min(i) + self.cell_size,
        };
        let y = match corner {
            Corner::MinXMinY | Corner::MaxXMinY => self.cell_y_min(j),
            _ => self.cell_y_min(j) + self.cell_size,
        };
        [x, y]
    }

    /// Cell index of a local xy position, clamped into the grid.
    pub fn cell_of(&self, x: f64, y: f64) -> (usize, usize) {
        let i = ((x - self.origin[0]) / self.cell_size).floor() as i64;
        let j = ((y - self.origin[1]) / self.cell_size).floor() as i64;
        (
            i.clamp(0, self.nx as i64 - 1) as usize,
            j.clamp(0, self.ny as i64 - 1) as usize,
        )
    }

    pub fn clip_for(&self, i: usize, j: usize) -> Option<&ClipLines> {
        self.clips
            .iter()
            .find(|c| c.i as usize == i && c.j as usize == j)
    }

    /// Whether a point in cell (i, j) survives that cell's clip lines.
    pub fn accepts(&self, i: usize, j: usize, x: f64, y: f64) -> bool {
        match self.clip_for(i, j) {
            None => true,
            Some(c) => {
                let [cx, cy] = self.corner_position(i, j, c.corner);
                let dx = (x - cx).abs();
                let dy = (y - cy).abs();
                dx >= c.lx && dy >= c.ly && dx + dy >= c.lxy
            }
        }
    }
}

/// Builds the occupancy grid, boundary flags, per-cell means and the empty
/// corner of every boundary cell.
pub fn build_boundary(frame: &LocalFrame, cell_size: f64) -> Result<BoundaryGrid> {
    if !(cell_size.is_finite() && cell_size > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "boundary cell size must be > 0, got {cell_size}"
        )));
    }
    let (mut x_min, mut x_max) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y_min, mut y_max) = (f64::INFINITY, f64::NEG_INFINITY);
    for p in &frame.local_points {
        x_min = x_min.min(p.x);
        x_max = x_max.max(p.x);
        y_min = y_min.min(p.y);
        y_max = y_max.max(p.y);
    }
    let nx = (((x_max - x_min) / cell_size).ceil() as usize).max(1);
    let ny = (((y_max - y_min) / cell_size).ceil() as usize).max(1);

    let mut grid = BoundaryGrid {
        cell_size,
        origin: [x_min, y_min],
        nx,
        ny,
        occupied: vec![false; nx * ny],
        boundary: vec![false; nx * ny],
        counts: vec![0; nx * ny],
        cell_means: vec![Vector3::zeros(); nx * ny],
        clips: Vec::new(),
    };

    for p in &frame.local_points {
        let (i, j) = grid.cell_of(p.x, p.y);
        let idx = grid.index(i, j);
        grid.occupied[idx] = true;
        grid.counts[idx] += 1;
        grid.cell_means[idx] += p;
    }
    for idx in 0..nx * ny {
        if grid.counts[idx] > 0 {
            grid.cell_means[idx] /= grid.counts[idx] as f64;
        }
    }

    for i in 0..nx {
        for j in 0..ny {
            let idx = grid.index(i, j);
            if !grid.occupied[idx] {
                continue;
            }
            let at_edge = i == 0 || i == nx - 1 || j == 0 || j == ny - 1;
            let has_empty_side = !grid.is_occupied(i as i64 + 1, j as i64)
                || !grid.is_occupied(i as i64 - 1, j as i64)
                || !grid.is_occupied(i as i64, j as i64 + 1)
                || !grid.is_occupied(i as i64, j as i64 - 1);
            if at_edge || has_empty_side {
                grid.boundary[idx] = true;
            }
        }
    }

    // Empty corner per boundary cell: farthest from the in-cell mean, ties by
    // the fixed corner order.
    for i in 0..nx {
        for j in 0..ny {
            let idx = grid.index(i, j);
            if !grid.boundary[idx] {
                continue;
            }
            let mean = grid.cell_means[idx];
            let mut best = Corner::MinXMinY;
            let mut best_d = f64::NEG_INFINITY;
            for id in 0..4u8 {
                let corner = Corner::from_id(id).unwrap();
                let [cx, cy] = grid.corner_position(i, j, corner);
                let d = (cx - mean.x).powi(2) + (cy - mean.y).powi(2);
                if d > best_d {
                    best_d = d;
                    best = corner;
                }
            }
            grid.clips.push(ClipLines {
                i: i as u32,
                j: j as u32,
                corner: best,
                lx: 0.0,
                ly: 0.0,
                lxy: 0.0,
            });
        }
    }

    Ok(grid)
}

/// Fits the three clip lines of every boundary cell. `filter_voxel` is the
/// point-cloud filter edge; the margins are half of it along the axes and
/// sqrt(2)/2 of it diagonally. A corner whose three touching neighbor cells
/// are all occupied keeps zero lines.
pub fn fit_clip_lines(grid: &mut BoundaryGrid, frame: &LocalFrame, filter_voxel: f64) {
    let mut min_dx = vec![f64::INFINITY; grid.clips.len()];
    let mut min_dy = vec![f64::INFINITY; grid.clips.len()];
    let mut min_l1 = vec![f64::INFINITY; grid.clips.len()];

    let mut clip_slot = vec![usize::MAX; grid.nx * grid.ny];
    for (slot, c) in grid.clips.iter().enumerate() {
        clip_slot[c.i as usize * grid.ny + c.j as usize] = slot;
    }

    for p in &frame.local_points {
        let (i, j) = grid.cell_of(p.x, p.y);
        let slot = clip_slot[grid.index(i, j)];
        if slot == usize::MAX {
            continue;
        }
        let c = &grid.clips[slot];
        let [cx, cy] = grid.corner_position(i, j, c.corner);
        let dx = (p.x - cx).abs();
        let dy = (p.y - cy).abs();
        min_dx[slot] = min_dx[slot].min(dx);
        min_dy[slot] = min_dy[slot].min(dy);
        min_l1[slot] = min_l1[slot].min(dx + dy);
    }

    let mut clips = std::mem::take(&mut grid.clips);
    for (slot, c) in clips.iter_mut().enumerate() {
        let (i, j) = (c.i as i64, c.j as i64);
        let (di, dj) = match c.corner {
            Corner::MinXMinY => (-1, -1),
            Corner::MinXMaxY => (-1, 1),
            Corner::MaxXMinY => (1, -1),
            Corner::MaxXMaxY => (1, 1),
        };
        let surrounded = grid.is_occupied(i, j)
            && grid.is_occupied(i + di, j)
            && grid.is_occupied(i, j + dj)
            && grid.is_occupied(i + di, j + dj);
        if surrounded || !min_dx[slot].is_finite() {
            c.lx = 0.0;
            c.ly = 0.0;
            c.lxy = 0.0;
            continue;
        }
        c.lx = (min_dx[slot] - 0.5 * filter_voxel).max(0.0);
        c.ly = (min_dy[slot] - 0.5 * filter_voxel).max(0.0);
        c.lxy = (min_l1[slot] - std::f64::consts::FRAC_1_SQRT_2 * filter_voxel).max(0.0);
    }
    grid.clips = clips;
}

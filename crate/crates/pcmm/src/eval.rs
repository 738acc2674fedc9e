//! Model resampling and precision / completeness metrics.
//!
//! A fitted scene is turned back into a point cloud (lattices over plane and
//! surface footprints, seeded draws from the Gaussians) and compared against
//! the original cloud with nearest-neighbor RMSE in both directions.

use std::collections::HashMap;

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::boundary::BoundaryGrid;
use crate::bspline::SplinePatch;
use crate::cloud::{eigen_sym3, PipelineConfig, PointMatrix};
use crate::error::{Error, Result};

/// An unstructured region: mean, covariance and how many filtered points it
/// absorbed.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianPrimitive {
    pub mean: Vector3<f64>,
    pub covariance: Matrix3<f64>,
    pub source_points: u64,
}

/// A bounded plane: pose plus its boundary grid.
#[derive(Clone, Debug, PartialEq)]
pub struct PlanePrimitive {
    pub origin: Vector3<f64>,
    /// Columns are the local frame axes; the third is the plane normal.
    pub basis: Matrix3<f64>,
    pub grid: BoundaryGrid,
}

/// A bounded curved surface: pose, boundary grid and fitted height field.
#[derive(Clone, Debug, PartialEq)]
pub struct SurfacePrimitive {
    pub origin: Vector3<f64>,
    pub basis: Matrix3<f64>,
    pub grid: BoundaryGrid,
    pub patch: SplinePatch,
}

/// Deterministic bookkeeping carried inside the model container.
#[derive(Clone, Copy, Debug, Default, PartialEq, serde::Serialize)]
pub struct ModelStats {
    pub input_points: u64,
    pub filtered_points: u64,
}

/// The complete fitted scene.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneModel {
    pub gaussians: Vec<GaussianPrimitive>,
    pub planes: Vec<PlanePrimitive>,
    pub surfaces: Vec<SurfacePrimitive>,
    pub config: PipelineConfig,
    pub stats: ModelStats,
}

impl SceneModel {
    pub fn primitive_count(&self) -> usize {
        self.gaussians.len() + self.planes.len() + self.surfaces.len()
    }

    /// Scalar parameter count under the fixed accounting scheme: mean 3,
    /// covariance 6, pose 12, bitmaps 1/32 per cell for E and B, clip tuples
    /// 3, control heights 1 each.
    pub fn parameter_scalars(&self) -> f64 {
        let mut total = 0.0;
        total += self.gaussians.len() as f64 * 9.0;
        for grid in self
            .planes
            .iter()
            .map(|p| &p.grid)
            .chain(self.surfaces.iter().map(|s| &s.grid))
        {
            total += 12.0;
            total += 2.0 * (grid.nx * grid.ny) as f64 / 32.0;
            total += 3.0 * grid.clips.len() as f64;
        }
        for s in &self.surfaces {
            total += s.patch.ctrl_count() as f64;
        }
        total
    }
}

/// Evaluation summary.
#[derive(Clone, Copy, Debug, serde::Serialize)]
pub struct EvalReport {
    pub precision_rmse: f64,
    pub completeness_rmse: f64,
    pub generated_points: u64,
    pub original_points: u64,
    pub compression_ratio: f64,
    pub gaussian_count: u64,
    pub plane_count: u64,
    pub surface_count: u64,
}

fn lattice_over_grid(
    grid: &BoundaryGrid,
    pitch: f64,
    mut emit: impl FnMut(usize, usize, f64, f64),
) {
    let steps_x = ((grid.nx as f64 * grid.cell_size) / pitch).ceil() as usize;
    let steps_y = ((grid.ny as f64 * grid.cell_size) / pitch).ceil() as usize;
    let extent_x = grid.nx as f64 * grid.cell_size;
    let extent_y = grid.ny as f64 * grid.cell_size;
    for sx in 0..steps_x {
        let lx = (sx as f64 + 0.5) * pitch;
        if lx >= extent_x {
            continue;
        }
        let x = grid.origin[0] + lx;
        let i = (lx / grid.cell_size) as usize;
        for sy in 0..steps_y {
            let ly = (sy as f64 + 0.5) * pitch;
            if ly >= extent_y {
                continue;
            }
            let y = grid.origin[1] + ly;
            let j = (ly / grid.cell_size) as usize;
            let idx = grid.index(i.min(grid.nx - 1), j.min(grid.ny - 1));
            if !grid.occupied[idx] {
                continue;
            }
            if grid.accepts(i.min(grid.nx - 1), j.min(grid.ny - 1), x, y) {
                emit(i.min(grid.nx - 1), j.min(grid.ny - 1), x, y);
            }
        }
    }
}

fn gaussian_seed(base: u64, index: usize) -> u64 {
    base ^ (index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Generates a point cloud from the model. Deterministic for a given
/// `config.rng_seed`: lattices at the filter pitch over plane and surface
/// footprints (clip lines honored), per-Gaussian seeded normal draws
/// truncated at the three-sigma ellipsoid.
pub fn resample(model: &SceneModel) -> Result<PointMatrix> {
    let pitch = model.config.voxel_size;
    let mut out: Vec<Vector3<f64>> = Vec::new();

    for plane in &model.planes {
        lattice_over_grid(&plane.grid, pitch, |_, _, x, y| {
            out.push(plane.basis * Vector3::new(x, y, 0.0) + plane.origin);
        });
    }

    for surface in &model.surfaces {
        let patch = &surface.patch;
        let mut failure = None;
        lattice_over_grid(&surface.grid, pitch, |_, _, x, y| {
            match patch.height_at(patch.param_u(x), patch.param_v(y)) {
                Ok(z) => out.push(surface.basis * Vector3::new(x, y, z) + surface.origin),
                Err(e) => failure = Some(e),
            }
        });
        if let Some(e) = failure {
            return Err(e);
        }
    }

    for (index, g) in model.gaussians.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(gaussian_seed(model.config.rng_seed, index));
        let (vals, vecs) = eigen_sym3(&g.covariance);
        let sds = Vector3::new(vals[0].sqrt(), vals[1].sqrt(), vals[2].sqrt());
        let count = g.source_points.max(4);
        for _ in 0..count {
            let mut point = g.mean;
            for _attempt in 0..256 {
                let xi = Vector3::new(
                    rng.sample::<f64, _>(StandardNormal),
                    rng.sample::<f64, _>(StandardNormal),
                    rng.sample::<f64, _>(StandardNormal),
                );
                if xi.norm_squared() < 9.0 {
                    point = g.mean
                        + vecs.column(0).into_owned() * (sds[0] * xi[0])
                        + vecs.column(1).into_owned() * (sds[1] * xi[1])
                        + vecs.column(2).into_owned() * (sds[2] * xi[2]);
                    break;
                }
            }
            out.push(point);
        }
    }

    PointMatrix::new(out)
}

struct NnIndex<'a> {
    points: &'a [Vector3<f64>],
    cell: f64,
    buckets: HashMap<(i64, i64, i64), Vec<u32>>,
    key_min: (i64, i64, i64),
    key_max: (i64, i64, i64),
}

impl<'a> NnIndex<'a> {
    fn build(points: &'a [Vector3<f64>]) -> Self {
        let mut lo = points[0];
        let mut hi = points[0];
        for p in points {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        let extent = (hi - lo).max().max(1e-9);
        let cell = extent / (points.len() as f64).cbrt().max(1.0);
        let key = |p: &Vector3<f64>| {
            (
                (p.x / cell).floor() as i64,
                (p.y / cell).floor() as i64,
                (p.z / cell).floor() as i64,
            )
        };
        let mut buckets: HashMap<(i64, i64, i64), Vec<u32>> = HashMap::new();
        let mut key_min = key(&points[0]);
        let mut key_max = key_min;
        for (idx, p) in points.iter().enumerate() {
            let k = key(p);
            key_min = (key_min.0.min(k.0), key_min.1.min(k.1), key_min.2.min(k.2));
            key_max = (key_max.0.max(k.0), key_max.1.max(k.1), key_max.2.max(k.2));
            buckets.entry(k).or_default().push(idx as u32);
        }
        Self {
            points,
            cell,
            buckets,
            key_min,
            key_max,
        }
    }

    fn scan_cell(&self, k: (i64, i64, i64), q: &Vector3<f64>, best: &mut f64) {
        if let Some(bucket) = self.buckets.get(&k) {
            for &idx in bucket {
                let d = (self.points[idx as usize] - q).norm_squared();
                if d < *best {
                    *best = d;
                }
            }
        }
    }

    /// Exact squared nearest-neighbor distance via expanding Chebyshev
    /// shells, restricted to the occupied key range so far-away queries stay
    /// cheap.
    fn nearest_sq(&self, q: &Vector3<f64>) -> f64 {
        let cq = (
            (q.x / self.cell).floor() as i64,
            (q.y / self.cell).floor() as i64,
            (q.z / self.cell).floor() as i64,
        );
        let axis_gap = |lo: i64, hi: i64, c: i64| {
            if c < lo {
                lo - c
            } else if c > hi {
                c - hi
            } else {
                0
            }
        };
        // First shell that can touch any occupied cell.
        let start = axis_gap(self.key_min.0, self.key_max.0, cq.0)
            .max(axis_gap(self.key_min.1, self.key_max.1, cq.1))
            .max(axis_gap(self.key_min.2, self.key_max.2, cq.2));
        let span = |lo: i64, hi: i64, c: i64| (c - lo).abs().max((hi - c).abs());
        let max_shell = span(self.key_min.0, self.key_max.0, cq.0)
            .max(span(self.key_min.1, self.key_max.1, cq.1))
            .max(span(self.key_min.2, self.key_max.2, cq.2));
        let mut best = f64::INFINITY;
        for m in start..=max_shell {
            if best.is_finite() {
                let lower = (m - 1).max(0) as f64 * self.cell;
                if lower * lower >= best {
                    break;
                }
            }
            if m == 0 {
                self.scan_cell(cq, q, &mut best);
                continue;
            }
            // Cells on the shell of radius m, clipped to the key range.
            let clip = |lo: i64, hi: i64, c: i64| ((lo - c).max(-m), (hi - c).min(m));
            let (x0, x1) = clip(self.key_min.0, self.key_max.0, cq.0);
            let (y0, y1) = clip(self.key_min.1, self.key_max.1, cq.1);
            let (z0, z1) = clip(self.key_min.2, self.key_max.2, cq.2);
            for dx in x0..=x1 {
                for dy in y0..=y1 {
                    if dx.abs() == m || dy.abs() == m {
                        for dz in z0..=z1 {
                            self.scan_cell((cq.0 + dx, cq.1 + dy, cq.2 + dz), q, &mut best);
                        }
                    } else {
                        for dz in [-m, m] {
                            if dz >= z0 && dz <= z1 {
                                self.scan_cell((cq.0 + dx, cq.1 + dy, cq.2 + dz), q, &mut best);
                            }
                        }
                    }
                }
            }
        }
        best
    }
}

/// Root-mean-square nearest-neighbor distance from every point of `from` to
/// the cloud `to`. Accelerated with a uniform grid; exact.
pub fn rmse(from: &PointMatrix, to: &PointMatrix) -> Result<f64> {
    if from.len() == 0 || to.len() == 0 {
        return Err(Error::EmptyInput);
    }
    let total: f64 = if to.len() < 32 {
        from.iter()
            .map(|p| {
                to.iter()
                    .map(|q| (p - q).norm_squared())
                    .fold(f64::INFINITY, f64::min)
            })
            .sum()
    } else {
        let index = NnIndex::build(to.points());
        from.iter().map(|p| index.nearest_sq(p)).sum()
    };
    Ok((total / from.len() as f64).sqrt())
}

/// Resamples the model and reports precision RMSE (generated to original),
/// completeness RMSE (original to generated), counts and compression ratio.
pub fn evaluate(model: &SceneModel, original: &PointMatrix) -> Result<EvalReport> {
    let generated = resample(model)?;
    let precision_rmse = rmse(&generated, original)?;
    let completeness_rmse = rmse(original, &generated)?;
    let scalars = model.parameter_scalars();
    Ok(EvalReport {
        precision_rmse,
        completeness_rmse,
        generated_points: generated.len() as u64,
        original_points: original.len() as u64,
        compression_ratio: 3.0 * original.len() as f64 / scalars.max(f64::MIN_POSITIVE),
        gaussian_count: model.gaussians.len() as u64,
        plane_count: model.planes.len() as u64,
        surface_count: model.surfaces.len() as u64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boundary::{ClipLines, Corner};
    use approx::assert_relative_eq;
    use rand::Rng;

    fn full_grid(nx: usize, ny: usize, cell: f64) -> BoundaryGrid {
        BoundaryGrid {
            cell_size: cell,
            origin: [0.0, 0.0],
            nx,
            ny,
            occupied: vec![true; nx * ny],
            boundary: vec![false; nx * ny],
            counts: vec![1; nx * ny],
            cell_means: vec![Vector3::zeros(); nx * ny],
            clips: Vec::new(),
        }
    }

    fn plane_model(grid: BoundaryGrid) -> SceneModel {
        SceneModel {
            gaussians: vec![],
            planes: vec![PlanePrimitive {
                origin: Vector3::zeros(),
                basis: Matrix3::identity(),
                grid,
            }],
            surfaces: vec![],
            config: PipelineConfig::default(),
            stats: ModelStats::default(),
        }
    }

    #[test]
    fn plane_resample_is_axis_aligned_lattice() {
        let cell = 0.15;
        let model = plane_model(full_grid(2, 1, cell));
        let cloud = resample(&model).unwrap();
        // 0.3 x 0.15 footprint at 0.03 pitch: 10 x 5 lattice.
        assert_eq!(cloud.len(), 50);
        for p in cloud.iter() {
            assert_eq!(p.z, 0.0);
            assert!(p.x > 0.0 && p.x < 0.3 && p.y > 0.0 && p.y < 0.15);
            let fx = (p.x / 0.03 - 0.5).round() * 0.03 + 0.015;
            assert_relative_eq!(p.x, fx, epsilon = 1e-12);
        }
    }

    #[test]
    fn clipped_corner_discards_lattice_points() {
        let cell = 0.15;
        let mut grid = full_grid(1, 1, cell);
        grid.boundary[0] = true;
        grid.clips.push(ClipLines {
            i: 0,
            j: 0,
            corner: Corner::MaxXMaxY,
            lx: 0.05,
            ly: 0.05,
            lxy: 0.12,
        });
        let model = plane_model(grid.clone());
        let cloud = resample(&model).unwrap();
        assert!(cloud.len() < 25, "corner region must be clipped");
        for p in cloud.iter() {
            let dx = (p.x - cell).abs();
            let dy = (p.y - cell).abs();
            assert!(dx >= 0.05 && dy >= 0.05 && dx + dy >= 0.12);
        }
    }

    #[test]
    fn gaussian_resample_stays_inside_three_sigma() {
        let sigma = 0.2;
        let mean = Vector3::new(1.0, -2.0, 0.5);
        let cov = Matrix3::identity() * (sigma * sigma);
        let model = SceneModel {
            gaussians: vec![GaussianPrimitive {
                mean,
                covariance: cov,
                source_points: 500,
            }],
            planes: vec![],
            surfaces: vec![],
            config: PipelineConfig::default(),
            stats: ModelStats::default(),
        };
        let cloud = resample(&model).unwrap();
        assert_eq!(cloud.len(), 500);
        let inv = cov.try_inverse().unwrap();
        for p in cloud.iter() {
            let d = p - mean;
            assert!(d.dot(&(inv * d)) < 9.0 + 1e-9);
        }
    }

    #[test]
    fn zero_covariance_gaussian_resamples_to_mean() {
        let mean = Vector3::new(0.3, 0.4, -0.2);
        let model = SceneModel {
            gaussians: vec![GaussianPrimitive {
                mean,
                covariance: Matrix3::zeros(),
                source_points: 1,
            }],
            planes: vec![],
            surfaces: vec![],
            config: PipelineConfig::default(),
            stats: ModelStats::default(),
        };
        let cloud = resample(&model).unwrap();
        assert_eq!(cloud.len(), 4);
        for p in cloud.iter() {
            assert_eq!(*p, mean);
        }
    }

    #[test]
    fn resample_is_deterministic() {
        let model = SceneModel {
            gaussians: vec![GaussianPrimitive {
                mean: Vector3::zeros(),
                covariance: Matrix3::identity() * 0.01,
                source_points: 64,
            }],
            planes: vec![],
            surfaces: vec![],
            config: PipelineConfig::default(),
            stats: ModelStats::default(),
        };
        let a = resample(&model).unwrap();
        let b = resample(&model).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rmse_identical_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts: Vec<Vector3<f64>> = (0..200)
            .map(|_| Vector3::new(rng.gen(), rng.gen(), rng.gen()))
            .collect();
        let cloud = PointMatrix::new(pts).unwrap();
        assert_eq!(rmse(&cloud, &cloud).unwrap(), 0.0);
    }

    #[test]
    fn rmse_single_point_example() {
        let from = PointMatrix::new(vec![Vector3::zeros()]).unwrap();
        let to = PointMatrix::new(vec![
            Vector3::new(0.0, 0.0, 1.0),
            Vector3::new(0.0, 2.0, 0.0),
        ])
        .unwrap();
        assert_relative_eq!(rmse(&from, &to).unwrap(), 1.0);
    }

    #[test]
    fn rmse_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for case in 0..10 {
            let n = 500;
            let spread = if case % 2 == 0 { 1.0 } else { 20.0 };
            let mk = |rng: &mut ChaCha8Rng| {
                PointMatrix::new(
                    (0..n)
                        .map(|_| {
                            Vector3::new(
                                rng.gen::<f64>() * spread,
                                rng.gen::<f64>() * spread * 0.3,
                                rng.gen::<f64>(),
                            )
                        })
                        .collect(),
                )
                .unwrap()
            };
            let from = mk(&mut rng);
            let to = mk(&mut rng);
            let fast = rmse(&from, &to).unwrap();
            let brute = {
                let total: f64 = from
                    .iter()
                    .map(|p| {
                        to.iter()
                            .map(|q| (p - q).norm_squared())
                            .fold(f64::INFINITY, f64::min)
                    })
                    .sum();
                (total / from.len() as f64).sqrt()
            };
            assert!((fast - brute).abs() < 1e-12, "case {case}: {fast} vs {brute}");
        }
    }

    #[test]
    fn rmse_rigid_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mk = |rng: &mut ChaCha8Rng| {
            PointMatrix::new(
                (0..150)
                    .map(|_| Vector3::new(rng.gen(), rng.gen(), rng.gen()))
                    .collect(),
            )
            .unwrap()
        };
        let a = mk(&mut rng);
        let b = mk(&mut rng);
        let base = rmse(&a, &b).unwrap();
        let rot = nalgebra::Rotation3::from_euler_angles(0.4, -1.2, 0.8);
        let t = Vector3::new(3.0, -5.0, 2.0);
        let move_cloud = |c: &PointMatrix| {
            PointMatrix::new(c.iter().map(|p| rot * p + t).collect()).unwrap()
        };
        let moved = rmse(&move_cloud(&a), &move_cloud(&b)).unwrap();
        assert!((base - moved).abs() < 1e-9);
    }

    #[test]
    fn evaluate_degenerate_point_model() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pts: Vec<Vector3<f64>> = (0..50)
            .map(|_| Vector3::new(rng.gen(), rng.gen(), rng.gen()))
            .collect();
        let cloud = PointMatrix::new(pts.clone()).unwrap();
        let model = SceneModel {
            gaussians: pts
                .iter()
                .map(|&mean| GaussianPrimitive {
                    mean,
                    covariance: Matrix3::zeros(),
                    source_points: 1,
                })
                .collect(),
            planes: vec![],
            surfaces: vec![],
            config: PipelineConfig::default(),
            stats: ModelStats::default(),
        };
        let report = evaluate(&model, &cloud).unwrap();
        assert_eq!(report.precision_rmse, 0.0);
        assert_eq!(report.gaussian_count, 50);
        assert!(report.compression_ratio > 0.0);
    }

    #[test]
    fn parameter_accounting() {
        let mut grid = full_grid(4, 4, 0.15);
        grid.clips.push(ClipLines {
            i: 0,
            j: 0,
            corner: Corner::MinXMinY,
            lx: 0.0,
            ly: 0.0,
            lxy: 0.0,
        });
        let model = plane_model(grid);
        // pose 12 + 2*16/32 + 3 clip scalars = 16.
        assert_relative_eq!(model.parameter_scalars(), 16.0);
    }
}

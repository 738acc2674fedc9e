//! Point containers, voxel filtering and second-moment (PCA) computation.
//!
//! Everything downstream works on a [`PointMatrix`] and the [`Moments`] of its
//! clusters: mean, covariance, and the eigen frame whose last axis is the
//! cluster normal.

use std::collections::HashMap;

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

/// An ordered list of 3D points in meters. Never empty, never non-finite.
#[derive(Clone, Debug, PartialEq)]
pub struct PointMatrix {
    points: Vec<Vector3<f64>>,
}

impl PointMatrix {
    /// Builds a point matrix, rejecting empty input and non-finite coordinates.
    pub fn new(points: Vec<Vector3<f64>>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyInput);
        }
        for (index, p) in points.iter().enumerate() {
            if !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite()) {
                return Err(Error::NonFinite { index });
            }
        }
        Ok(Self { points })
    }

    /// Internal constructor for points already known to be valid.
    pub(crate) fn from_valid(points: Vec<Vector3<f64>>) -> Self {
        debug_assert!(!points.is_empty());
        Self { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn points(&self) -> &[Vector3<f64>] {
        &self.points
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Vector3<f64>> {
        self.points.iter()
    }
}

impl std::ops::Index<usize> for PointMatrix {
    type Output = Vector3<f64>;
    fn index(&self, i: usize) -> &Vector3<f64> {
        &self.points[i]
    }
}

/// Mean, covariance and the descending eigen frame of a point cluster.
///
/// Invariants: eigenvalues sorted `l0 >= l1 >= l2 >= 0`, columns of
/// `eigenvectors` are a right-handed orthonormal basis, and
/// `Q diag(l) Q^T` reconstructs the covariance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Moments {
    pub mean: Vector3<f64>,
    pub covariance: Matrix3<f64>,
    /// Descending: `eigenvalues[0] >= eigenvalues[1] >= eigenvalues[2] >= 0`.
    pub eigenvalues: Vector3<f64>,
    /// Columns are the unit eigenvectors `v0, v1, v2` matching `eigenvalues`.
    pub eigenvectors: Matrix3<f64>,
}

impl Moments {
    /// Unit normal of the best-fit plane (eigenvector of the smallest eigenvalue).
    pub fn normal(&self) -> Vector3<f64> {
        self.eigenvectors.column(2).into_owned()
    }

    pub fn axis(&self, j: usize) -> Vector3<f64> {
        self.eigenvectors.column(j).into_owned()
    }

    /// Squared Mahalanobis distance with a spectral pseudo-inverse.
    ///
    /// Directions with eigenvalue below `l0 * 1e-12` are treated as
    /// zero-variance: a zero offset contributes nothing, any real offset is
    /// effectively outside every sigma bound.
    pub fn mahalanobis_sq(&self, p: &Vector3<f64>) -> f64 {
        let d = p - self.mean;
        let floor = self.eigenvalues[0] * 1e-12;
        let mut acc = 0.0;
        for j in 0..3 {
            let c = self.eigenvectors.column(j).dot(&d);
            if c == 0.0 {
                continue;
            }
            let lam = self.eigenvalues[j].max(floor);
            if lam <= 0.0 {
                return f64::INFINITY;
            }
            acc += c * c / lam;
        }
        acc
    }
}

/// Pipeline parameters. Defaults follow the reference tuning for indoor
/// RGB-D scenes at 0.03 m voxels.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PipelineConfig {
    /// Voxel filter edge length in meters.
    pub voxel_size: f64,
    /// Cluster size at or below which bipartition switches from 2-means to EM.
    pub em_switch: usize,
    /// Density radius factor, dimensionless, in [2, 3].
    pub density_radius: f64,
    /// Minimum cluster size; smaller clusters terminate unconditionally.
    pub min_cluster_points: usize,
    /// Largest normal angle (radians) two clusters may differ by and still merge.
    pub merge_angle: f64,
    /// Largest mean normal-direction offset (meters) for merging, in
    /// [voxel_size, 2 * voxel_size].
    pub merge_distance: f64,
    /// Boundary-grid cell edge for planes (meters).
    pub plane_cell_size: f64,
    /// Boundary-grid cell edge for surfaces (meters).
    pub surface_cell_size: f64,
    /// Seed for every randomized step (resampling, synthetic data).
    pub rng_seed: u64,
}

impl PipelineConfig {
    /// Defaults for a given voxel size: derived lengths scale with the voxel.
    pub fn with_voxel_size(voxel_size: f64) -> Self {
        Self {
            voxel_size,
            em_switch: 200,
            density_radius: 2.0,
            min_cluster_points: 40,
            merge_angle: 15.0_f64.to_radians(),
            merge_distance: 1.5 * voxel_size,
            plane_cell_size: 5.0 * voxel_size,
            surface_cell_size: 3.0 * voxel_size,
            rng_seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        for (name, v) in [
            ("voxel_size", self.voxel_size),
            ("merge_distance", self.merge_distance),
            ("plane_cell_size", self.plane_cell_size),
            ("surface_cell_size", self.surface_cell_size),
        ] {
            if !(v.is_finite() && v > 0.0) {
                problems.push(format!("{name} must be > 0, got {v}"));
            }
        }
        if self.min_cluster_points < 4 {
            problems.push(format!(
                "min_cluster_points must be >= 4, got {}",
                self.min_cluster_points
            ));
        }
        if self.em_switch <= self.min_cluster_points {
            problems.push(format!(
                "em_switch ({}) must exceed min_cluster_points ({})",
                self.em_switch, self.min_cluster_points
            ));
        }
        if !(2.0..=3.0).contains(&self.density_radius) {
            problems.push(format!(
                "density_radius must be in [2, 3], got {}",
                self.density_radius
            ));
        }
        if self.merge_distance < self.voxel_size || self.merge_distance > 2.0 * self.voxel_size {
            problems.push(format!(
                "merge_distance must be in [voxel_size, 2*voxel_size], got {}",
                self.merge_distance
            ));
        }
        if !(self.merge_angle.is_finite() && self.merge_angle > 0.0) {
            problems.push(format!("merge_angle must be > 0, got {}", self.merge_angle));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(problems.join("; ")))
        }
    }
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self::with_voxel_size(0.03)
    }
}

fn voxel_key(p: &Vector3<f64>, edge: f64) -> (i64, i64, i64) {
    (
        (p.x / edge).floor() as i64,
        (p.y / edge).floor() as i64,
        (p.z / edge).floor() as i64,
    )
}

/// Voxel down-filter: one centroid per occupied voxel of the given edge, on
/// the lattice anchored at the world origin. Output is ordered by voxel index.
pub fn voxel_filter(cloud: &PointMatrix, edge: f64) -> Result<PointMatrix> {
    if !(edge.is_finite() && edge > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "voxel edge must be > 0, got {edge}"
        )));
    }
    let mut cells: HashMap<(i64, i64, i64), (Vector3<f64>, usize)> = HashMap::new();
    for p in cloud.iter() {
        let entry = cells
            .entry(voxel_key(p, edge))
            .or_insert((Vector3::zeros(), 0));
        entry.0 += p;
        entry.1 += 1;
    }
    let mut keys: Vec<_> = cells.keys().copied().collect();
    keys.sort_unstable();
    let points = keys
        .into_iter()
        .map(|k| {
            let (sum, n) = cells[&k];
            sum / n as f64
        })
        .collect();
    Ok(PointMatrix::from_valid(points))
}

/// Mean, sample covariance (divisor N-1) and eigen frame of a cluster.
pub fn compute_moments(cluster: &PointMatrix) -> Result<Moments> {
    let n = cluster.len();
    if n < 2 {
        return Err(Error::ClusterTooSmall { needed: 2, got: n });
    }
    let mut mean = Vector3::zeros();
    for p in cluster.iter() {
        mean += p;
    }
    mean /= n as f64;

    let mut cov = Matrix3::zeros();
    for p in cluster.iter() {
        let d = p - mean;
        cov.syger(1.0, &d, &d, 1.0);
    }
    // syger fills the lower triangle; mirror it.
    cov.m12 = cov.m21;
    cov.m13 = cov.m31;
    cov.m23 = cov.m32;
    cov /= (n - 1) as f64;

    let (eigenvalues, eigenvectors) = eigen_sym3(&cov);
    Ok(Moments {
        mean,
        covariance: cov,
        eigenvalues,
        eigenvectors,
    })
}

/// Symmetric 3x3 eigendecomposition with a deterministic convention:
/// eigenvalues descending and clamped at zero, v0 and v2 sign-fixed so their
/// largest-magnitude component is positive, v1 = v2 x v0 (right-handed).
pub fn eigen_sym3(m: &Matrix3<f64>) -> (Vector3<f64>, Matrix3<f64>) {
    let se = m.symmetric_eigen();
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| {
        se.eigenvalues[b]
            .partial_cmp(&se.eigenvalues[a])
            .unwrap()
            .then(a.cmp(&b))
    });
    let vals = Vector3::new(
        se.eigenvalues[order[0]].max(0.0),
        se.eigenvalues[order[1]].max(0.0),
        se.eigenvalues[order[2]].max(0.0),
    );

    let mut v0: Vector3<f64> = se.eigenvectors.column(order[0]).into_owned();
    v0.normalize_mut();
    fix_sign(&mut v0);

    let mut v2: Vector3<f64> = se.eigenvectors.column(order[2]).into_owned();
    v2 -= v0 * v2.dot(&v0);
    if v2.norm() < 1e-12 {
        v2 = orthogonal_to(&v0);
    }
    v2.normalize_mut();
    fix_sign(&mut v2);

    let v1 = v2.cross(&v0);
    (vals, Matrix3::from_columns(&[v0, v1, v2]))
}

fn fix_sign(v: &mut Vector3<f64>) {
    let mut idx = 0;
    for j in 1..3 {
        if v[j].abs() > v[idx].abs() {
            idx = j;
        }
    }
    if v[idx] < 0.0 {
        *v = -*v;
    }
}

fn orthogonal_to(v: &Vector3<f64>) -> Vector3<f64> {
    let candidate = if v.x.abs() < 0.9 {
        Vector3::x()
    } else {
        Vector3::y()
    };
    v.cross(&candidate)
}

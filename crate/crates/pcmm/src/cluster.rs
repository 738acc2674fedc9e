//! Integrated hierarchical clustering.
//!
//! The cloud is recursively bipartitioned (2-means for large clusters, a
//! 2-component EM Gaussian mixture for small ones) until every cluster passes
//! the termination predicate. Clusters that pass while flat are candidates
//! for plane / surface merging; the rest stay Gaussian.

use std::collections::VecDeque;
use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};

use crate::cloud::{compute_moments, Moments, PipelineConfig, PointMatrix};
use crate::error::{Error, Result};

const KMEANS_MAX_ITERS: usize = 25;
const EM_MAX_ITERS: usize = 50;
const EM_LOG_LIKELIHOOD_TOL: f64 = 1e-4;
const EM_COV_REG: f64 = 1e-8;

/// Outcome of the termination predicate for one cluster.
///
/// `terminate` is `min(1, within_sigma * thin * dense + small)`; `flat` is the
/// product term alone and marks planar-primitive candidates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TerminationVerdict {
    pub terminate: bool,
    pub flat: bool,
    /// Every point's squared Mahalanobis distance is below 9.
    pub within_sigma: bool,
    /// Six sigma along the normal fits inside one filter voxel.
    pub thin: bool,
    /// Footprint density beats the ellipse-area bound.
    pub dense: bool,
    /// Fewer points than the configured minimum.
    pub small: bool,
}

/// Evaluates the stop test for one cluster given its precomputed moments.
pub fn termination_check(
    cluster: &PointMatrix,
    m: &Moments,
    cfg: &PipelineConfig,
) -> TerminationVerdict {
    let within_sigma = cluster.iter().all(|p| m.mahalanobis_sq(p) < 9.0);
    let thin = 6.0 * m.eigenvalues[2].sqrt() < cfg.voxel_size;
    let dense = cluster.len() as f64 * cfg.voxel_size * cfg.voxel_size
        > PI * cfg.density_radius * cfg.density_radius
            * (m.eigenvalues[0] * m.eigenvalues[1]).sqrt();
    let small = cluster.len() < cfg.min_cluster_points;
    let flat = within_sigma && thin && dense;
    TerminationVerdict {
        terminate: flat || small,
        flat,
        within_sigma,
        thin,
        dense,
        small,
    }
}

/// Which algorithm a bipartition of `n` points uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SplitMethod {
    KMeans,
    EmGmm,
}

pub fn split_method(n: usize, cfg: &PipelineConfig) -> SplitMethod {
    if n > cfg.em_switch {
        SplitMethod::KMeans
    } else {
        SplitMethod::EmGmm
    }
}

/// Splits one cluster into two nonempty halves.
///
/// 2-means is seeded at `mean +- sqrt(l0) v0` and runs Lloyd iterations; the
/// EM branch starts from the 2-means result with full covariances. Both are
/// fully deterministic. If either side degenerates below two points the
/// cluster is split at the median along the principal axis instead.
pub fn bipartition(
    cluster: &PointMatrix,
    cfg: &PipelineConfig,
) -> Result<(PointMatrix, PointMatrix)> {
    let n = cluster.len();
    if n < 4 {
        return Err(Error::ClusterTooSmall { needed: 4, got: n });
    }
    let m = compute_moments(cluster)?;
    let assignment = match split_method(n, cfg) {
        SplitMethod::KMeans => kmeans2(cluster, &m),
        SplitMethod::EmGmm => {
            let init = kmeans2(cluster, &m);
            em2(cluster, &init).unwrap_or(init)
        }
    };
    let split = partition_by(cluster, &assignment);
    match split {
        Some((a, b)) if a.len() >= 2 && b.len() >= 2 => Ok((a, b)),
        _ => Ok(median_split(cluster, &m)),
    }
}

fn partition_by(cluster: &PointMatrix, assignment: &[bool]) -> Option<(PointMatrix, PointMatrix)> {
    let mut a = Vec::new();
    let mut b = Vec::new();
    for (p, &to_second) in cluster.iter().zip(assignment) {
        if to_second {
            b.push(*p);
        } else {
            a.push(*p);
        }
    }
    if a.is_empty() || b.is_empty() {
        None
    } else {
        Some((PointMatrix::from_valid(a), PointMatrix::from_valid(b)))
    }
}

fn median_split(cluster: &PointMatrix, m: &Moments) -> (PointMatrix, PointMatrix) {
    let axis = m.axis(0);
    let mut order: Vec<usize> = (0..cluster.len()).collect();
    order.sort_by(|&i, &j| {
        let a = axis.dot(&(cluster[i] - m.mean));
        let b = axis.dot(&(cluster[j] - m.mean));
        a.partial_cmp(&b).unwrap().then(i.cmp(&j))
    });
    let half = cluster.len() / 2;
    let lower: Vec<Vector3<f64>> = order[..half].iter().map(|&i| cluster[i]).collect();
    let upper: Vec<Vector3<f64>> = order[half..].iter().map(|&i| cluster[i]).collect();
    (
        PointMatrix::from_valid(lower),
        PointMatrix::from_valid(upper),
    )
}

/// Lloyd 2-means, principal-axis seeded. Returns per-point side flags.
fn kmeans2(cluster: &PointMatrix, m: &Moments) -> Vec<bool> {
    let offset = m.axis(0) * m.eigenvalues[0].sqrt();
    let mut centers = [m.mean - offset, m.mean + offset];
    let mut assignment = vec![false; cluster.len()];
    for _ in 0..KMEANS_MAX_ITERS {
        let mut changed = false;
        for (i, p) in cluster.iter().enumerate() {
            let to_second = (p - centers[1]).norm_squared() < (p - centers[0]).norm_squared();
            if assignment[i] != to_second {
                assignment[i] = to_second;
                changed = true;
            }
        }
        let mut sums = [Vector3::zeros(), Vector3::zeros()];
        let mut counts = [0usize; 2];
        for (p, &to_second) in cluster.iter().zip(&assignment) {
            let k = to_second as usize;
            sums[k] += p;
            counts[k] += 1;
        }
        if counts[0] == 0 || counts[1] == 0 {
            break;
        }
        centers = [sums[0] / counts[0] as f64, sums[1] / counts[1] as f64];
        if !changed {
            break;
        }
    }
    assignment
}

struct GaussComponent {
    weight: f64,
    mean: Vector3<f64>,
    inv_cov: Matrix3<f64>,
    log_norm: f64,
}

impl GaussComponent {
    fn from_stats(weight: f64, mean: Vector3<f64>, cov: Matrix3<f64>) -> Option<Self> {
        let cov = cov + Matrix3::identity() * EM_COV_REG;
        let det = cov.determinant();
        if !(det.is_finite() && det > 0.0) {
            return None;
        }
        let inv_cov = cov.try_inverse()?;
        let log_norm = -0.5 * (3.0 * (2.0 * PI).ln() + det.ln());
        Some(Self {
            weight,
            mean,
            inv_cov,
            log_norm,
        })
    }

    fn log_density(&self, p: &Vector3<f64>) -> f64 {
        let d = p - self.mean;
        self.weight.ln() + self.log_norm - 0.5 * d.dot(&(self.inv_cov * d))
    }
}

/// Two-component EM with full covariances, hard-assigned at convergence.
/// Returns `None` when the mixture degenerates.
fn em2(cluster: &PointMatrix, init: &[bool]) -> Option<Vec<bool>> {
    let n = cluster.len();
    let mut resp: Vec<f64> = init.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    let mut last_ll = f64::NEG_INFINITY;
    for _ in 0..EM_MAX_ITERS {
        // M step from responsibilities.
        let mut comps = Vec::with_capacity(2);
        for k in 0..2 {
            let gamma = |r: f64| if k == 0 { 1.0 - r } else { r };
            let total: f64 = resp.iter().map(|&r| gamma(r)).sum();
            if total < 1e-9 {
                return None;
            }
            let mut mean = Vector3::zeros();
            for (p, &r) in cluster.iter().zip(&resp) {
                mean += p * gamma(r);
            }
            mean /= total;
            let mut cov = Matrix3::zeros();
            for (p, &r) in cluster.iter().zip(&resp) {
                let d = p - mean;
                cov.syger(gamma(r) / total, &d, &d, 1.0);
            }
            cov.m12 = cov.m21;
            cov.m13 = cov.m31;
            cov.m23 = cov.m32;
            comps.push(GaussComponent::from_stats(total / n as f64, mean, cov)?);
        }
        // E step.
        let mut ll = 0.0;
        for (i, p) in cluster.iter().enumerate() {
            let l0 = comps[0].log_density(p);
            let l1 = comps[1].log_density(p);
            let hi = l0.max(l1);
            let log_sum = hi + ((l0 - hi).exp() + (l1 - hi).exp()).ln();
            resp[i] = (l1 - log_sum).exp();
            ll += log_sum;
        }
        if !ll.is_finite() {
            return None;
        }
        if (ll - last_ll).abs() < EM_LOG_LIKELIHOOD_TOL {
            break;
        }
        last_ll = ll;
    }
    Some(resp.iter().map(|&r| r >= 0.5).collect())
}

/// One terminal cluster: its points, moments and flatness flag.
#[derive(Clone, Debug)]
pub struct ClusterEntry {
    pub points: PointMatrix,
    pub moments: Moments,
    pub flat: bool,
}

/// The final partition of the filtered cloud.
#[derive(Clone, Debug)]
pub struct ClusterSet {
    pub clusters: Vec<ClusterEntry>,
    /// Number of clusters at termination (the final iteration index).
    pub iterations: usize,
}

impl ClusterSet {
    pub fn total_points(&self) -> usize {
        self.clusters.iter().map(|c| c.points.len()).sum()
    }
}

/// Work-queue expansion of the one-to-two partition until every cluster
/// passes the stop test. Clusters below four points are kept as terminal
/// Gaussians. Output order follows cluster creation order.
pub fn hierarchical_cluster(cloud: &PointMatrix, cfg: &PipelineConfig) -> Result<ClusterSet> {
    if cloud.len() < 2 {
        return Err(Error::ClusterTooSmall {
            needed: 2,
            got: cloud.len(),
        });
    }
    let mut queue: VecDeque<(usize, PointMatrix)> = VecDeque::new();
    let mut next_id = 1usize;
    queue.push_back((0, cloud.clone()));
    let mut done: Vec<(usize, ClusterEntry)> = Vec::new();

    while let Some((id, points)) = queue.pop_front() {
        let moments = compute_moments(&points)?;
        let verdict = termination_check(&points, &moments, cfg);
        if verdict.terminate || points.len() < 4 {
            done.push((
                id,
                ClusterEntry {
                    flat: verdict.flat,
                    points,
                    moments,
                },
            ));
            continue;
        }
        let (a, b) = bipartition(&points, cfg)?;
        debug_assert!(a.len() < points.len() && b.len() < points.len());
        queue.push_back((next_id, a));
        queue.push_back((next_id + 1, b));
        next_id += 2;
    }

    done.sort_by_key(|(id, _)| *id);
    let clusters: Vec<ClusterEntry> = done.into_iter().map(|(_, e)| e).collect();
    let iterations = clusters.len();
    Ok(ClusterSet {
        clusters,
        iterations,
    })
}

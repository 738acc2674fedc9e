//! End-to-end pipeline: filter, cluster, merge, fit, package.

use std::time::Instant;

use crate::boundary::{build_boundary, fit_clip_lines, to_local_frame};
use crate::bspline::{fit_heights, init_control_points};
use crate::cloud::{voxel_filter, PipelineConfig, PointMatrix};
use crate::cluster::hierarchical_cluster;
use crate::error::{Error, Result};
use crate::eval::{GaussianPrimitive, ModelStats, PlanePrimitive, SceneModel, SurfacePrimitive};
use crate::merge::detect;

/// Wall-clock and size statistics of one pipeline run.
#[derive(Clone, Copy, Debug, serde::Serialize)]
pub struct RunStats {
    pub filter_ms: f64,
    pub clustering_ms: f64,
    pub detect_ms: f64,
    pub plane_fit_ms: f64,
    pub surface_fit_ms: f64,
    pub total_ms: f64,
    pub input_points: u64,
    pub filtered_points: u64,
    pub gaussian_count: u64,
    pub plane_count: u64,
    pub surface_count: u64,
}

/// Runs the full representation pipeline on a raw cloud.
///
/// Stages: voxel filter, hierarchical clustering, merge and detection, then
/// per-plane boundary description and per-surface boundary description plus
/// height-field fitting. Deterministic for a given config.
pub fn run_pipeline(cloud: &PointMatrix, cfg: &PipelineConfig) -> Result<(SceneModel, RunStats)> {
    cfg.validate()?;
    let t0 = Instant::now();

    let filtered = voxel_filter(cloud, cfg.voxel_size).map_err(Error::stage("filter"))?;
    let t1 = Instant::now();

    let clusters = hierarchical_cluster(&filtered, cfg).map_err(Error::stage("clustering"))?;
    let t2 = Instant::now();

    let detection = detect(&clusters, cfg).map_err(Error::stage("detect"))?;
    let t3 = Instant::now();

    let gaussians: Vec<GaussianPrimitive> = detection
        .gaussians
        .iter()
        .map(|g| GaussianPrimitive {
            mean: g.moments.mean,
            covariance: g.moments.covariance,
            source_points: g.point_count as u64,
        })
        .collect();

    let mut planes = Vec::with_capacity(detection.planes.len());
    for points in &detection.planes {
        let frame = to_local_frame(points).map_err(Error::stage("plane fit"))?;
        let mut grid =
            build_boundary(&frame, cfg.plane_cell_size).map_err(Error::stage("plane fit"))?;
        fit_clip_lines(&mut grid, &frame, cfg.voxel_size);
        planes.push(PlanePrimitive {
            origin: frame.origin,
            basis: frame.basis,
            grid,
        });
    }
    let t4 = Instant::now();

    let mut surfaces = Vec::with_capacity(detection.surfaces.len());
    for points in &detection.surfaces {
        let frame = to_local_frame(points).map_err(Error::stage("surface fit"))?;
        let mut grid =
            build_boundary(&frame, cfg.surface_cell_size).map_err(Error::stage("surface fit"))?;
        fit_clip_lines(&mut grid, &frame, cfg.voxel_size);
        let patch = init_control_points(&grid).map_err(Error::stage("surface fit"))?;
        let patch = fit_heights(&patch, &grid).map_err(Error::stage("surface fit"))?;
        surfaces.push(SurfacePrimitive {
            origin: frame.origin,
            basis: frame.basis,
            grid,
            patch,
        });
    }
    let t5 = Instant::now();

    let stats = RunStats {
        filter_ms: ms(t0, t1),
        clustering_ms: ms(t1, t2),
        detect_ms: ms(t2, t3),
        plane_fit_ms: ms(t3, t4),
        surface_fit_ms: ms(t4, t5),
        total_ms: ms(t0, t5),
        input_points: cloud.len() as u64,
        filtered_points: filtered.len() as u64,
        gaussian_count: gaussians.len() as u64,
        plane_count: planes.len() as u64,
        surface_count: surfaces.len() as u64,
    };

    let model = SceneModel {
        gaussians,
        planes,
        surfaces,
        config: *cfg,
        stats: ModelStats {
            input_points: cloud.len() as u64,
            filtered_points: filtered.len() as u64,
        },
    };
    Ok((model, stats))
}

fn ms(from: Instant, to: Instant) -> f64 {
    to.duration_since(from).as_secs_f64() * 1e3
}

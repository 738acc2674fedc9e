//! Multi-model parametric point cloud representation.
//!
//! Compresses a 3D point cloud into a hybrid model: Gaussian distributions
//! for unstructured regions, bounded planes for flat regions, and bounded
//! bicubic B-spline height fields for curved regions. The fitted model can be
//! resampled back into a cloud and scored with precision / completeness RMSE.
//!
//! ```
//! use pcmm::{run_pipeline, PipelineConfig, synth};
//!
//! # fn main() -> pcmm::Result<()> {
//! let pose = synth::demo_pose();
//! let cloud = synth::plane_patch(1.2, 1.0, 0.012, 0.002, &pose, 7)?;
//! let cfg = PipelineConfig::with_voxel_size(0.03);
//! let (model, stats) = run_pipeline(&cloud, &cfg)?;
//! assert_eq!(model.planes.len(), 1);
//! assert!(stats.total_ms >= 0.0);
//! # Ok(())
//! # }
//! ```

pub mod boundary;
pub mod bspline;
pub mod cloud;
pub mod cluster;
mod error;
pub mod eval;
pub mod io;
pub mod merge;
pub mod model_io;
pub mod pipeline;
pub mod synth;

pub use boundary::{build_boundary, fit_clip_lines, to_local_frame, BoundaryGrid, ClipLines, LocalFrame};
pub use bspline::{
    basis_weights, build_knots, eval_surface, fit_heights, init_control_points, SplinePatch,
};
pub use cloud::{compute_moments, voxel_filter, Moments, PipelineConfig, PointMatrix};
pub use cluster::{bipartition, hierarchical_cluster, termination_check, ClusterSet, TerminationVerdict};
pub use error::{Error, Result};
pub use eval::{evaluate, resample, rmse, EvalReport, SceneModel};
pub use merge::{
    detect, judge_angle, judge_gaussian_gap, judge_normal_distance, judge_point_adjacency,
    DetectionResult, MergeGraph,
};
pub use model_io::{load_model, save_model};
pub use pipeline::{run_pipeline, RunStats};

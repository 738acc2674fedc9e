//! Synthetic scene generators for examples, tests and benchmarks.
//!
//! Generators take an isometry so scenes can be placed in generic pose.
//! Voxel-lattice-aligned synthetic data sits exactly on the density
//! predicate's decision boundary, which real scans never do; a generic
//! rotation reproduces realistic behavior.

use nalgebra::{Isometry3, Translation3, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::cloud::PointMatrix;
use crate::error::Result;

/// A fixed generic pose: a few degrees off every lattice plane, origin
/// shifted. Keeps surfaces oblique to the filter lattice the way a real
/// gravity-aligned scan is, without the staircase quantization a steep tilt
/// would add to the filtered cloud.
pub fn demo_pose() -> Isometry3<f64> {
    let rot = UnitQuaternion::from_euler_angles(0.06, 0.05, 0.09);
    Isometry3::from_parts(Translation3::new(0.31, -0.17, 0.23), rot)
}

fn noise(rng: &mut ChaCha8Rng, sigma: f64) -> Vector3<f64> {
    let g = |r: &mut ChaCha8Rng| {
        let v: f64 = r.sample(StandardNormal);
        v
    };
    Vector3::new(g(rng), g(rng), g(rng)) * sigma
}

/// Rectangular patch of the z = 0 plane, `width x height`, regular grid at
/// `pitch` plus isotropic Gaussian noise.
pub fn plane_patch(
    width: f64,
    height: f64,
    pitch: f64,
    sigma: f64,
    pose: &Isometry3<f64>,
    seed: u64,
) -> Result<PointMatrix> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nx = (width / pitch).round() as usize;
    let ny = (height / pitch).round() as usize;
    let mut points = Vec::with_capacity(nx * ny);
    for i in 0..nx {
        for j in 0..ny {
            let local =
                Vector3::new(i as f64 * pitch, j as f64 * pitch, 0.0) + noise(&mut rng, sigma);
            points.push(pose * nalgebra::Point3::from(local));
        }
    }
    PointMatrix::new(points.into_iter().map(|p| p.coords).collect())
}

/// Section of a cylinder shell: radius `radius`, opening angle `arc_span`
/// around the local +z direction, axial length `axial_len` along local y.
pub fn cylinder_shell(
    radius: f64,
    arc_span: f64,
    axial_len: f64,
    pitch: f64,
    sigma: f64,
    pose: &Isometry3<f64>,
    seed: u64,
) -> Result<PointMatrix> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_arc = ((radius * arc_span) / pitch).round() as usize;
    let n_axial = (axial_len / pitch).round() as usize;
    let mut points = Vec::with_capacity(n_arc * n_axial);
    for a in 0..n_arc {
        let theta = (a as f64 / n_arc as f64 - 0.5) * arc_span;
        for h in 0..n_axial {
            let y = (h as f64 / n_axial as f64 - 0.5) * axial_len;
            let local = Vector3::new(radius * theta.sin(), y, radius * theta.cos())
                + noise(&mut rng, sigma);
            points.push((pose * nalgebra::Point3::from(local)).coords);
        }
    }
    PointMatrix::new(points)
}

/// Isotropic Gaussian blob centered at the pose origin.
pub fn gaussian_blob(
    sigma: f64,
    count: usize,
    pose: &Isometry3<f64>,
    seed: u64,
) -> Result<PointMatrix> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = (0..count)
        .map(|_| (pose * nalgebra::Point3::from(noise(&mut rng, sigma))).coords)
        .collect();
    PointMatrix::new(points)
}

/// Smooth stationary Gaussian random field over the plane, built from
/// random-phase cosines. Each sample is Gaussian with standard deviation
/// `sigma`; values vary over the given correlation length.
struct SurfaceField {
    waves: Vec<(f64, f64, f64)>,
    amplitude: f64,
}

impl SurfaceField {
    fn new(sigma: f64, corr_len: f64, rng: &mut ChaCha8Rng) -> Self {
        let k = 48;
        let waves = (0..k)
            .map(|_| {
                let dir = rng.gen::<f64>() * std::f64::consts::TAU;
                let wavenumber =
                    std::f64::consts::TAU / corr_len * (0.5 + rng.gen::<f64>());
                let phase = rng.gen::<f64>() * std::f64::consts::TAU;
                (dir.cos() * wavenumber, dir.sin() * wavenumber, phase)
            })
            .collect();
        Self {
            waves,
            amplitude: sigma * (2.0 / k as f64).sqrt(),
        }
    }

    fn at(&self, u: f64, v: f64) -> f64 {
        self.amplitude
            * self
                .waves
                .iter()
                .map(|&(ku, kv, phase)| (ku * u + kv * v + phase).cos())
                .sum::<f64>()
    }
}

/// Six square walls of side `side` arranged as the faces of a cube, each
/// face pushed outward by `gap` so the walls stay pairwise disjoint.
///
/// Wall displacement noise is a spatially correlated Gaussian field along
/// the wall normal (correlation length about a third of the wall side), the
/// way depth-sensor error behaves on a flat wall. Point-wise it is Gaussian
/// with standard deviation `sigma`.
pub fn exploded_room(
    side: f64,
    gap: f64,
    pitch: f64,
    sigma: f64,
    pose: &Isometry3<f64>,
    seed: u64,
) -> Result<PointMatrix> {
    let half = side / 2.0;
    let offset = half + gap;
    // (normal axis, sign) per face.
    let faces = [
        (0usize, 1.0f64),
        (0, -1.0),
        (1, 1.0),
        (1, -1.0),
        (2, 1.0),
        (2, -1.0),
    ];
    let mut points = Vec::new();
    for (face_idx, &(axis, sign)) in faces.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(face_idx as u64));
        let field = SurfaceField::new(sigma, 2.0 * side, &mut rng);
        let n = (side / pitch).round() as usize;
        for i in 0..n {
            for j in 0..n {
                let u = i as f64 * pitch - half;
                let v = j as f64 * pitch - half;
                let mut local = Vector3::zeros();
                local[axis] = sign * (offset + field.at(u, v));
                local[(axis + 1) % 3] = u;
                local[(axis + 2) % 3] = v;
                points.push((pose * nalgebra::Point3::from(local)).coords);
            }
        }
    }
    PointMatrix::new(points)
}

/// Concatenates clouds in order.
pub fn concat(clouds: &[PointMatrix]) -> Result<PointMatrix> {
    let mut points = Vec::new();
    for c in clouds {
        points.extend_from_slice(c.points());
    }
    PointMatrix::new(points)
}

/// Translates a cloud.
pub fn translated(cloud: &PointMatrix, offset: Vector3<f64>) -> PointMatrix {
    PointMatrix::from_valid(cloud.iter().map(|p| p + offset).collect())
}

/// Mixed demo scene: one plane, one cylinder section, three noise blobs.
pub fn mixed_scene(seed: u64) -> Result<PointMatrix> {
    let pose = demo_pose();
    let plane = plane_patch(2.0, 1.5, 0.01, 0.003, &pose, seed)?;
    let arc = cylinder_shell(
        0.8,
        std::f64::consts::FRAC_PI_2,
        1.2,
        0.01,
        0.003,
        &pose,
        seed.wrapping_add(1),
    )?;
    let arc = translated(&arc, Vector3::new(4.0, 0.5, 0.0));
    let mut blobs = Vec::new();
    for b in 0..3 {
        let blob = gaussian_blob(0.09, 200, &pose, seed.wrapping_add(2 + b))?;
        blobs.push(translated(
            &blob,
            Vector3::new(-3.0 - b as f64, 2.0, 0.5 * b as f64),
        ));
    }
    let mut all = vec![plane, arc];
    all.extend(blobs);
    concat(&all)
}

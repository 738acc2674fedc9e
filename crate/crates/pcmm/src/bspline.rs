//! Clamped bicubic B-spline height fields over a boundary grid.
//!
//! Control points sit at the centers of an extended (nx+2) x (ny+2) cell
//! grid; only their heights are free. Fitting the heights to the per-cell
//! mean heights is a linear least-squares problem solved by preconditioned
//! conjugate gradients on the normal equations.

use nalgebra::Vector3;

use crate::boundary::BoundaryGrid;
use crate::error::{Error, Result};

/// Spline degree in both directions.
pub const DEGREE: usize = 3;

const CG_TOL: f64 = 1e-10;
const EMPTY_CELL_REG: f64 = 1e-8;

/// Clamped-uniform knot vector of length `n + degree + 3` for a grid
/// dimension of `n` cells (`n + 2` control points).
///
/// Interior knots are `(i - degree) / (n + 2 - degree)`, which reaches 1
/// exactly at `i = n + 2` where the end clamp begins.
pub fn build_knots(n: usize, degree: usize) -> Vec<f64> {
    let len = n + degree + 3;
    let denom = (n + 2 - degree) as f64;
    (0..len)
        .map(|i| {
            if i <= degree {
                0.0
            } else if i >= n + 2 {
                1.0
            } else {
                (i - degree) as f64 / denom
            }
        })
        .collect()
}

/// All basis function values of the given degree at `u`, by the Cox-de Boor
/// recursion with the 0/0 := 0 convention. The last span is closed so u = 1
/// is usable.
pub fn basis_1d(knots: &[f64], degree: usize, u: f64) -> Vec<f64> {
    let count = knots.len() - degree - 1;
    let last = *knots.last().unwrap();
    let mut values: Vec<f64> = (0..knots.len() - 1)
        .map(|i| {
            let closes_last = u == last && knots[i] < knots[i + 1] && knots[i + 1] == last;
            if (knots[i] <= u && u < knots[i + 1]) || closes_last {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    for p in 1..=degree {
        for i in 0..knots.len() - 1 - p {
            let left = if knots[i + p] > knots[i] {
                (u - knots[i]) / (knots[i + p] - knots[i]) * values[i]
            } else {
                0.0
            };
            let right = if knots[i + p + 1] > knots[i + 1] {
                (knots[i + p + 1] - u) / (knots[i + p + 1] - knots[i + 1]) * values[i + 1]
            } else {
                0.0
            };
            values[i] = left + right;
        }
    }
    values.truncate(count);
    values
}

/// Bicubic patch over a boundary grid: fixed control xy at extended cell
/// centers, free control heights.
#[derive(Clone, Debug, PartialEq)]
pub struct SplinePatch {
    pub degree: usize,
    /// Grid dimensions the patch extends (control net is (nx+2) x (ny+2)).
    pub nx: usize,
    pub ny: usize,
    /// Grid origin (minimum corner of cell (0,0)) in the local frame.
    pub origin: [f64; 2],
    pub cell_size: f64,
    pub knots_u: Vec<f64>,
    pub knots_v: Vec<f64>,
    /// Control heights, row-major: index `alpha * (ny + 2) + beta`.
    pub ctrl_z: Vec<f64>,
}

impl SplinePatch {
    pub fn ctrl_count(&self) -> usize {
        (self.nx + 2) * (self.ny + 2)
    }

    #[inline]
    pub fn ctrl_index(&self, alpha: usize, beta: usize) -> usize {
        alpha * (self.ny + 2) + beta
    }

    /// X coordinate of control column `alpha` (cell centers of the extended grid).
    pub fn ctrl_x(&self, alpha: usize) -> f64 {
        self.origin[0] + (alpha as f64 - 0.5) * self.cell_size
    }

    pub fn ctrl_y(&self, beta: usize) -> f64 {
        self.origin[1] + (beta as f64 - 0.5) * self.cell_size
    }

    /// Parameter of a local x position: cell i and its interior map to
    /// [i, i+1] / (nx + 1), so the whole footprint lands inside [0, 1].
    pub fn param_u(&self, x: f64) -> f64 {
        ((x - self.origin[0]) / (self.cell_size * (self.nx as f64 + 1.0))).clamp(0.0, 1.0)
    }

    pub fn param_v(&self, y: f64) -> f64 {
        ((y - self.origin[1]) / (self.cell_size * (self.ny as f64 + 1.0))).clamp(0.0, 1.0)
    }

    /// Height of the fitted field at parameters (u, v), without the xy sums.
    pub fn height_at(&self, u: f64, v: f64) -> Result<f64> {
        check_params(u, v)?;
        let wu = basis_1d(&self.knots_u, self.degree, u);
        let wv = basis_1d(&self.knots_v, self.degree, v);
        let mut z = 0.0;
        for (alpha, &a) in wu.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            for (beta, &b) in wv.iter().enumerate() {
                z += a * b * self.ctrl_z[self.ctrl_index(alpha, beta)];
            }
        }
        Ok(z)
    }
}

fn check_params(u: f64, v: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&u) || !(0.0..=1.0).contains(&v) {
        return Err(Error::ParamOutOfRange { u, v });
    }
    Ok(())
}

/// Initializes the control net from a boundary grid: interior heights take
/// the in-cell mean height (0 for empty cells), the surrounding ring is 0.
pub fn init_control_points(grid: &BoundaryGrid) -> Result<SplinePatch> {
    if grid.nx == 0 || grid.ny == 0 {
        return Err(Error::EmptySurfaceSupport);
    }
    let (nx, ny) = (grid.nx, grid.ny);
    let mut ctrl_z = vec![0.0; (nx + 2) * (ny + 2)];
    for i in 0..nx {
        for j in 0..ny {
            let idx = grid.index(i, j);
            if grid.occupied[idx] {
                ctrl_z[(i + 1) * (ny + 2) + (j + 1)] = grid.cell_means[idx].z;
            }
        }
    }
    Ok(SplinePatch {
        degree: DEGREE,
        nx,
        ny,
        origin: grid.origin,
        cell_size: grid.cell_size,
        knots_u: build_knots(nx, DEGREE),
        knots_v: build_knots(ny, DEGREE),
        ctrl_z,
    })
}

/// Full tensor-product weight matrix at (u, v), row-major over control
/// indices. Sums to 1 on valid (non-degenerate) patches.
pub fn basis_weights(u: f64, v: f64, patch: &SplinePatch) -> Result<Vec<f64>> {
    check_params(u, v)?;
    let wu = basis_1d(&patch.knots_u, patch.degree, u);
    let wv = basis_1d(&patch.knots_v, patch.degree, v);
    let mut weights = vec![0.0; patch.ctrl_count()];
    for (alpha, &a) in wu.iter().enumerate() {
        for (beta, &b) in wv.iter().enumerate() {
            weights[patch.ctrl_index(alpha, beta)] = a * b;
        }
    }
    Ok(weights)
}

/// Evaluates the full surface point (x, y, z) at parameters (u, v).
pub fn eval_surface(patch: &SplinePatch, u: f64, v: f64) -> Result<Vector3<f64>> {
    check_params(u, v)?;
    let wu = basis_1d(&patch.knots_u, patch.degree, u);
    let wv = basis_1d(&patch.knots_v, patch.degree, v);
    let su: f64 = wu.iter().sum();
    let sv: f64 = wv.iter().sum();
    let x: f64 = wu
        .iter()
        .enumerate()
        .map(|(a, &w)| w * patch.ctrl_x(a))
        .sum::<f64>()
        * sv;
    let y: f64 = wv
        .iter()
        .enumerate()
        .map(|(b, &w)| w * patch.ctrl_y(b))
        .sum::<f64>()
        * su;
    let mut z = 0.0;
    for (alpha, &a) in wu.iter().enumerate() {
        if a == 0.0 {
            continue;
        }
        for (beta, &b) in wv.iter().enumerate() {
            z += a * b * patch.ctrl_z[patch.ctrl_index(alpha, beta)];
        }
    }
    Ok(Vector3::new(x, y, z))
}

struct FitRow {
    weights: Vec<(usize, f64)>,
    rhs: f64,
}

/// Least-squares fit of control heights to the occupied cells' mean heights.
///
/// The objective is convex; conjugate gradients with Jacobi preconditioning
/// solve the normal equations to the optimal residual. Control points of
/// empty interior cells are pulled to 0 with a tiny weight to pin the null
/// space; control points with no observation at all keep their
/// initialization.
pub fn fit_heights(patch: &SplinePatch, grid: &BoundaryGrid) -> Result<SplinePatch> {
    let m = patch.ctrl_count();
    let mut rows = Vec::new();
    for i in 0..grid.nx {
        for j in 0..grid.ny {
            let idx = grid.index(i, j);
            if !grid.occupied[idx] {
                continue;
            }
            let mean = grid.cell_means[idx];
            if !mean.z.is_finite() {
                return Err(Error::Numerical(format!(
                    "non-finite height in cell ({i}, {j})"
                )));
            }
            let u = patch.param_u(mean.x);
            let v = patch.param_v(mean.y);
            let wu = basis_1d(&patch.knots_u, patch.degree, u);
            let wv = basis_1d(&patch.knots_v, patch.degree, v);
            let mut weights = Vec::with_capacity(16);
            for (alpha, &a) in wu.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (beta, &b) in wv.iter().enumerate() {
                    if b == 0.0 {
                        continue;
                    }
                    weights.push((patch.ctrl_index(alpha, beta), a * b));
                }
            }
            rows.push(FitRow {
                weights,
                rhs: mean.z,
            });
        }
    }
    if rows.is_empty() {
        return Err(Error::EmptySurfaceSupport);
    }

    // Tikhonov weight on controls whose own cell is empty.
    let mut reg = vec![0.0; m];
    for alpha in 1..=patch.nx {
        for beta in 1..=patch.ny {
            if !grid.occupied[grid.index(alpha - 1, beta - 1)] {
                reg[patch.ctrl_index(alpha, beta)] = EMPTY_CELL_REG;
            }
        }
    }

    // Normal-equation operator y = A^T A x + reg x, matrix free.
    let apply = |x: &[f64], out: &mut [f64]| {
        out.iter_mut()
            .zip(reg.iter().zip(x))
            .for_each(|(o, (&r, &xi))| *o = r * xi);
        for row in &rows {
            let mut dot = 0.0;
            for &(c, w) in &row.weights {
                dot += w * x[c];
            }
            for &(c, w) in &row.weights {
                out[c] += w * dot;
            }
        }
    };

    let mut rhs = vec![0.0; m];
    let mut diag = reg.clone();
    for row in &rows {
        for &(c, w) in &row.weights {
            rhs[c] += w * row.rhs;
            diag[c] += w * w;
        }
    }
    // Controls whose total observation weight is negligible cannot be
    // determined by the data; freeze them at their initialization instead of
    // letting conjugate gradients wander along near-null directions.
    let max_diag = diag.iter().cloned().fold(0.0_f64, f64::max);
    let floor = max_diag * 1e-10;
    let diag_inv: Vec<f64> = diag
        .iter()
        .map(|&d| if d > floor { 1.0 / d } else { 0.0 })
        .collect();

    let mut x = patch.ctrl_z.clone();
    let mut r = vec![0.0; m];
    apply(&x, &mut r);
    for (ri, &bi) in r.iter_mut().zip(&rhs) {
        *ri = bi - *ri;
    }
    let rhs_norm = rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
    let tol = CG_TOL * (1.0 + rhs_norm);
    let mut z: Vec<f64> = r.iter().zip(&diag_inv).map(|(&ri, &di)| ri * di).collect();
    let mut p = z.clone();
    let mut rz: f64 = r.iter().zip(&z).map(|(&a, &b)| a * b).sum();
    let mut ap = vec![0.0; m];
    let max_iters = 10 * m;
    for _ in 0..max_iters {
        let rnorm = r
            .iter()
            .zip(&diag_inv)
            .filter(|(_, &di)| di > 0.0)
            .map(|(v, _)| v * v)
            .sum::<f64>()
            .sqrt();
        if rnorm <= tol {
            break;
        }
        apply(&p, &mut ap);
        let pap: f64 = p.iter().zip(&ap).map(|(&a, &b)| a * b).sum();
        if !(pap.is_finite() && pap > 0.0) {
            break;
        }
        let alpha = rz / pap;
        for k in 0..m {
            x[k] += alpha * p[k];
            r[k] -= alpha * ap[k];
        }
        for k in 0..m {
            z[k] = r[k] * diag_inv[k];
        }
        let rz_next: f64 = r.iter().zip(&z).map(|(&a, &b)| a * b).sum();
        let beta = rz_next / rz;
        rz = rz_next;
        for k in 0..m {
            p[k] = z[k] + beta * p[k];
        }
    }

    let mut fitted = patch.clone();
    fitted.ctrl_z = x;
    Ok(fitted)
}

/// Sum of squared residuals of the fit objective for a given control net.
pub fn fit_objective(patch: &SplinePatch, grid: &BoundaryGrid) -> f64 {
    let mut total = 0.0;
    for i in 0..grid.nx {
        for j in 0..grid.ny {
            let idx = grid.index(i, j);
            if !grid.occupied[idx] {
                continue;
            }
            let mean = grid.cell_means[idx];
            let z = patch
                .height_at(patch.param_u(mean.x), patch.param_v(mean.y))
                .expect("params in range");
            total += (mean.z - z) * (mean.z - z);
        }
    }
    total
}

//! Second-order stencil kernels on the MAC grid.
//!
//! All operators read grid geometry and boundary tags from their operands.
//! The pairing that matters for every energy argument downstream is the
//! discrete summation-by-parts identity
//! `<gradient(f), v>_faces = -<f, divergence(v)>_cells`,
//! which holds exactly (to rounding) because gradients of Neumann scalars
//! and Dirichlet vectors both vanish on boundary faces.

use crate::error::{Error, Result};
use crate::grid::{ScalarField, VectorField};

/// Face-normal differences of a Neumann scalar; boundary faces are zero flux.
pub fn gradient(f: &ScalarField) -> VectorField {
    let grid = *f.grid();
    let h = grid.spacing();
    let data = f.data();
    let mut out = VectorField::zeros(grid);
    for axis in 0..grid.dim() {
        let inv_h = 1.0 / h[axis];
        let fd = grid.face_dims(axis);
        let comp = out.comp_mut(axis);
        for k in 0..fd[2] {
            for j in 0..fd[1] {
                for i in 0..fd[0] {
                    if grid.is_boundary_face(axis, i, j, k) {
                        continue;
                    }
                    // interior face m sits between cells m-1 and m along axis
                    let mut lo = [i, j, k];
                    lo[axis] -= 1;
                    let lo_cell = grid.cell_idx(lo[0], lo[1], lo[2]);
                    let hi_cell = grid.cell_idx(i, j, k);
                    comp[grid.face_idx(axis, i, j, k)] =
                        (data[hi_cell] - data[lo_cell]) * inv_h;
                }
            }
        }
    }
    out
}

/// Cell-centered divergence of a face field.
pub fn divergence(v: &VectorField) -> ScalarField {
    let grid = *v.grid();
    let [nx, ny, nz] = grid.dims();
    let h = grid.spacing();
    let mut out = ScalarField::zeros(grid);
    let data = out.data_mut();
    for axis in 0..grid.dim() {
        let inv_h = 1.0 / h[axis];
        let comp = v.comp(axis);
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..nx {
                    let lo = grid.face_idx(axis, i, j, k);
                    let mut up = [i, j, k];
                    up[axis] += 1;
                    let hi = grid.face_idx(axis, up[0], up[1], up[2]);
                    data[grid.cell_idx(i, j, k)] += (comp[hi] - comp[lo]) * inv_h;
                }
            }
        }
    }
    out
}

/// Divergence-of-gradient composition with zero-flux closure.
///
/// The cell sum of the output telescopes to zero exactly (discrete Gauss).
pub fn laplacian_neumann(f: &ScalarField) -> ScalarField {
    divergence(&gradient(f))
}

/// Outflow CFL number of an upwind transport step: the largest per-cell sum
/// of outgoing face velocities scaled by `dt / h`. Keeping this at or below
/// one is exactly the discrete maximum-principle condition.
pub fn advective_cfl(v: &VectorField, dt: f64) -> f64 {
    let grid = *v.grid();
    let [nx, ny, nz] = grid.dims();
    let h = grid.spacing();
    let mut worst = 0.0f64;
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let mut outflow = 0.0;
                for axis in 0..grid.dim() {
                    let lo = v.comp(axis)[grid.face_idx(axis, i, j, k)];
                    let mut up = [i, j, k];
                    up[axis] += 1;
                    let hi = v.comp(axis)[grid.face_idx(axis, up[0], up[1], up[2])];
                    outflow += (hi.max(0.0) + (-lo).max(0.0)) / h[axis];
                }
                worst = worst.max(outflow);
            }
        }
    }
    worst * dt
}

/// Conservative flux-form first-order upwind transport increment.
///
/// Returns the increment `-dt * div(v * upwind(f))`; its cell sum telescopes
/// to zero because boundary faces carry no flux. Rejects the step when the
/// outflow CFL number exceeds one.
pub fn advect_scalar_upwind(f: &ScalarField, v: &VectorField, dt: f64) -> Result<ScalarField> {
    assert_eq!(f.grid(), v.grid(), "grid mismatch");
    let cfl = advective_cfl(v, dt);
    if cfl > 1.0 {
        return Err(Error::StepRejected(format!(
            "advective CFL {cfl:.3} exceeds 1"
        )));
    }
    let grid = *f.grid();
    let h = grid.spacing();
    let data = f.data();
    let mut out = ScalarField::zeros(grid);
    for axis in 0..grid.dim() {
        let scale = dt / h[axis];
        let comp = v.comp(axis);
        let fd = grid.face_dims(axis);
        // accumulate -dt * (F_hi - F_lo) / h per cell, flux F = v * upwind(f)
        for k in 0..fd[2] {
            for j in 0..fd[1] {
                for i in 0..fd[0] {
                    if grid.is_boundary_face(axis, i, j, k) {
                        continue;
                    }
                    let vel = comp[grid.face_idx(axis, i, j, k)];
                    if vel == 0.0 {
                        continue;
                    }
                    let mut lo_cell = [i, j, k];
                    lo_cell[axis] -= 1;
                    let lo = grid.cell_idx(lo_cell[0], lo_cell[1], lo_cell[2]);
                    let hi = grid.cell_idx(i, j, k);
                    let flux = if vel > 0.0 { vel * data[lo] } else { vel * data[hi] };
                    let incr = out.data_mut();
                    incr[lo] -= scale * flux;
                    incr[hi] += scale * flux;
                }
            }
        }
    }
    Ok(out)
}

/// Cell-centered Frobenius norm of the second-difference Hessian.
///
/// Diagonal entries use shifted (one-sided) stencils on the boundary ring so
/// quadratics stay exact everywhere; cross terms clamp their sample points at
/// walls. Consumers that need controlled accuracy sample the interior only.
pub fn hessian_frobenius(f: &ScalarField) -> ScalarField {
    let grid = *f.grid();
    let [nx, ny, nz] = grid.dims();
    let dims = [nx, ny, nz];
    let h = grid.spacing();
    let data = f.data();
    let dim = grid.dim();
    let mut out = ScalarField::zeros(grid);

    let at = |p: [usize; 3]| data[grid.cell_idx(p[0], p[1], p[2])];

    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let p = [i, j, k];
                let mut sq = 0.0;
                for a in 0..dim {
                    // second difference along a, shifted inward at the walls
                    let base = p[a].clamp(1, dims[a] - 2);
                    let mut lo = p;
                    let mut mid = p;
                    let mut hi = p;
                    lo[a] = base - 1;
                    mid[a] = base;
                    hi[a] = base + 1;
                    let haa = (at(lo) - 2.0 * at(mid) + at(hi)) / (h[a] * h[a]);
                    sq += haa * haa;
                }
                for a in 0..dim {
                    for b in (a + 1)..dim {
                        let am = p[a].saturating_sub(1);
                        let ap = (p[a] + 1).min(dims[a] - 1);
                        let bm = p[b].saturating_sub(1);
                        let bp = (p[b] + 1).min(dims[b] - 1);
                        let da = (ap - am) as f64 * h[a];
                        let db = (bp - bm) as f64 * h[b];
                        let mut q = p;
                        q[a] = ap;
                        q[b] = bp;
                        let fpp = at(q);
                        q[b] = bm;
                        let fpm = at(q);
                        q[a] = am;
                        let fmm = at(q);
                        q[b] = bp;
                        let fmp = at(q);
                        let hab = (fpp - fpm - fmp + fmm) / (da * db);
                        sq += 2.0 * hab * hab;
                    }
                }
                out.data_mut()[grid.cell_idx(i, j, k)] = sq.sqrt();
            }
        }
    }
    out
}

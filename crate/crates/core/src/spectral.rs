//! Direct solvers for the constant-coefficient elliptic pieces on the box.
//!
//! Every 1D second-difference operator that appears (cell-centered with
//! zero-flux closure, face-normal with pinned walls, face-tangential with
//! mirror-negative ghosts) has a known orthonormal eigenbasis of sampled
//! cosines/sines. Solves transform along each axis, divide by the mode
//! symbol, and transform back; they are exact to rounding, which keeps
//! projection residuals far below every tolerance in the config.

use crate::grid::{Grid, ScalarField, VectorField};

/// Orthonormal eigenbasis of one 1D second-difference operator.
///
/// `q` is column-major (column k = k-th eigenvector), `lambda` holds the
/// (nonpositive) eigenvalues of the plain second difference scaled by 1/h^2.
#[derive(Debug, Clone)]
struct LineBasis {
    m: usize,
    q: Vec<f64>,
    lambda: Vec<f64>,
}

impl LineBasis {
    /// Cells with zero-flux walls: cos(pi k (i + 1/2) / n), k = 0..n-1.
    fn cell_neumann(n: usize, h: f64) -> Self {
        let mut q = vec![0.0; n * n];
        let mut lambda = vec![0.0; n];
        for k in 0..n {
            let col = &mut q[k * n..(k + 1) * n];
            for (i, v) in col.iter_mut().enumerate() {
                *v = (std::f64::consts::PI * k as f64 * (i as f64 + 0.5) / n as f64).cos();
            }
            normalize(col);
            let s = (std::f64::consts::PI * k as f64 / (2.0 * n as f64)).sin();
            lambda[k] = -4.0 / (h * h) * s * s;
        }
        Self { m: n, q, lambda }
    }

    /// Interior faces with pinned walls: sin(pi k i / n), k = 1..n-1.
    fn face_normal(n: usize, h: f64) -> Self {
        let m = n - 1;
        let mut q = vec![0.0; m * m];
        let mut lambda = vec![0.0; m];
        for k in 1..n {
            let col = &mut q[(k - 1) * m..k * m];
            for (i, v) in col.iter_mut().enumerate() {
                *v = (std::f64::consts::PI * k as f64 * (i + 1) as f64 / n as f64).sin();
            }
            normalize(col);
            let s = (std::f64::consts::PI * k as f64 / (2.0 * n as f64)).sin();
            lambda[k - 1] = -4.0 / (h * h) * s * s;
        }
        Self { m, q, lambda }
    }

    /// Offset positions with mirror-negative ghosts: sin(pi k (i+1/2) / n),
    /// k = 1..n.
    fn face_tangent(n: usize, h: f64) -> Self {
        let mut q = vec![0.0; n * n];
        let mut lambda = vec![0.0; n];
        for k in 1..=n {
            let col = &mut q[(k - 1) * n..k * n];
            for (i, v) in col.iter_mut().enumerate() {
                *v = (std::f64::consts::PI * k as f64 * (i as f64 + 0.5) / n as f64).sin();
            }
            normalize(col);
            let s = (std::f64::consts::PI * k as f64 / (2.0 * n as f64)).sin();
            lambda[k - 1] = -4.0 / (h * h) * s * s;
        }
        Self { m: n, q, lambda }
    }
}

fn normalize(col: &mut [f64]) {
    let norm = col.iter().map(|v| v * v).sum::<f64>().sqrt();
    for v in col {
        *v /= norm;
    }
}

const LINE_BLOCK: usize = 8;

fn bytemuck_chunks(data: &[f64], m: usize) -> &[[f64; LINE_BLOCK]] {
    assert!(data.len() >= m * LINE_BLOCK);
    // SAFETY: [f64; LINE_BLOCK] has the same layout as LINE_BLOCK f64s
    unsafe { std::slice::from_raw_parts(data.as_ptr() as *const [f64; LINE_BLOCK], m) }
}

fn bytemuck_chunks_mut(data: &mut [f64], m: usize) -> &mut [[f64; LINE_BLOCK]] {
    assert!(data.len() >= m * LINE_BLOCK);
    // SAFETY: as above, with exclusive access
    unsafe { std::slice::from_raw_parts_mut(data.as_mut_ptr() as *mut [f64; LINE_BLOCK], m) }
}

/// Apply `Q^T` (forward = true) or `Q` (forward = false) along `axis` of a
/// 3D array of shape `shape`, restricted to `m` entries starting at `offset`
/// along that axis. Lines are processed in blocks so the inner loops stream
/// the eigenvector matrix once per block at full vector width.
fn transform_axis(
    data: &mut [f64],
    shape: [usize; 3],
    axis: usize,
    offset: usize,
    basis: &LineBasis,
    forward: bool,
) {
    let m = basis.m;
    let stride = match axis {
        0 => 1,
        1 => shape[0],
        _ => shape[0] * shape[1],
    };
    let (oa, ob) = match axis {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    };
    let stride_of = |a: usize| match a {
        0 => 1,
        1 => shape[0],
        _ => shape[0] * shape[1],
    };
    let (stride_a, stride_b) = (stride_of(oa), stride_of(ob));
    let (na, nb) = (shape[oa], shape[ob]);
    let total_lines = na * nb;

    let mut tile = vec![0.0f64; m * LINE_BLOCK];
    let mut out = vec![0.0f64; m * LINE_BLOCK];
    let mut bases = [0usize; LINE_BLOCK];

    let mut start = 0usize;
    while start < total_lines {
        let count = (total_lines - start).min(LINE_BLOCK);
        for l in 0..count {
            let line = start + l;
            let base = (line % na) * stride_a + (line / na) * stride_b + offset * stride;
            bases[l] = base;
            for i in 0..m {
                tile[i * LINE_BLOCK + l] = data[base + i * stride];
            }
        }
        if count < LINE_BLOCK {
            for l in count..LINE_BLOCK {
                for i in 0..m {
                    tile[i * LINE_BLOCK + l] = 0.0;
                }
            }
        }
        if forward {
            // out[k][:] = sum_i q[k*m+i] * tile[i][:], four output modes at a
            // time so the accumulator chains overlap
            let tiles: &[[f64; LINE_BLOCK]] = bytemuck_chunks(&tile, m);
            let mut k = 0;
            while k + 4 <= m {
                let c0 = &basis.q[k * m..(k + 1) * m];
                let c1 = &basis.q[(k + 1) * m..(k + 2) * m];
                let c2 = &basis.q[(k + 2) * m..(k + 3) * m];
                let c3 = &basis.q[(k + 3) * m..(k + 4) * m];
                let mut a0 = [0.0f64; LINE_BLOCK];
                let mut a1 = [0.0f64; LINE_BLOCK];
                let mut a2 = [0.0f64; LINE_BLOCK];
                let mut a3 = [0.0f64; LINE_BLOCK];
                for (i, t) in tiles.iter().enumerate() {
                    let (q0, q1, q2, q3) = (c0[i], c1[i], c2[i], c3[i]);
                    for l in 0..LINE_BLOCK {
                        a0[l] += q0 * t[l];
                        a1[l] += q1 * t[l];
                        a2[l] += q2 * t[l];
                        a3[l] += q3 * t[l];
                    }
                }
                out[k * LINE_BLOCK..(k + 1) * LINE_BLOCK].copy_from_slice(&a0);
                out[(k + 1) * LINE_BLOCK..(k + 2) * LINE_BLOCK].copy_from_slice(&a1);
                out[(k + 2) * LINE_BLOCK..(k + 3) * LINE_BLOCK].copy_from_slice(&a2);
                out[(k + 3) * LINE_BLOCK..(k + 4) * LINE_BLOCK].copy_from_slice(&a3);
                k += 4;
            }
            while k < m {
                let col = &basis.q[k * m..(k + 1) * m];
                let mut acc = [0.0f64; LINE_BLOCK];
                for (qv, t) in col.iter().zip(tiles) {
                    for l in 0..LINE_BLOCK {
                        acc[l] += qv * t[l];
                    }
                }
                out[k * LINE_BLOCK..(k + 1) * LINE_BLOCK].copy_from_slice(&acc);
                k += 1;
            }
        } else {
            // out[i][:] += q[k*m+i] * tile[k][:] accumulated over k
            out.iter_mut().for_each(|v| *v = 0.0);
            for k in 0..m {
                let col = &basis.q[k * m..(k + 1) * m];
                let mut coeffs = [0.0f64; LINE_BLOCK];
                coeffs.copy_from_slice(&tile[k * LINE_BLOCK..(k + 1) * LINE_BLOCK]);
                let outs: &mut [[f64; LINE_BLOCK]] = bytemuck_chunks_mut(&mut out, m);
                for (qv, o) in col.iter().zip(outs.iter_mut()) {
                    for l in 0..LINE_BLOCK {
                        o[l] += qv * coeffs[l];
                    }
                }
            }
        }
        for l in 0..count {
            let base = bases[l];
            for i in 0..m {
                data[base + i * stride] = out[i * LINE_BLOCK + l];
            }
        }
        start += count;
    }
}

/// Direct solver for the cell-centered zero-flux Poisson problem
/// `div(grad p) = rhs` with the constant mode pinned to zero.
#[derive(Debug, Clone)]
pub struct SpectralPoisson {
    grid: Grid,
    bases: Vec<LineBasis>,
}

impl SpectralPoisson {
    pub fn new(grid: Grid) -> Self {
        let h = grid.spacing();
        let dims = grid.dims();
        let bases = (0..grid.dim())
            .map(|a| LineBasis::cell_neumann(dims[a], h[a]))
            .collect();
        Self { grid, bases }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Solve with the mean of the right-hand side removed (compatibility)
    /// and a mean-zero result.
    pub fn solve(&self, rhs: &ScalarField) -> ScalarField {
        assert_eq!(rhs.grid(), &self.grid, "grid mismatch");
        let dims = self.grid.dims();
        let mut work = rhs.data().to_vec();
        for (a, basis) in self.bases.iter().enumerate() {
            transform_axis(&mut work, dims, a, 0, basis, true);
        }
        let [nx, ny, nz] = dims;
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..nx {
                    let idx = self.grid.cell_idx(i, j, k);
                    let mut lam = self.bases[0].lambda[i];
                    if self.grid.dim() > 1 {
                        lam += self.bases[1].lambda[j];
                    }
                    if self.grid.dim() > 2 {
                        lam += self.bases[2].lambda[k];
                    }
                    if lam == 0.0 {
                        work[idx] = 0.0; // nullspace: pin the constant mode
                    } else {
                        work[idx] /= lam;
                    }
                }
            }
        }
        for (a, basis) in self.bases.iter().enumerate() {
            transform_axis(&mut work, dims, a, 0, basis, false);
        }
        ScalarField::from_data(self.grid, work)
    }
}

/// Direct componentwise solver for `(I - alpha * Lap) u = rhs` on the face
/// grid with no-slip ghosts.
#[derive(Debug, Clone)]
pub struct SpectralHelmholtz {
    grid: Grid,
    /// per axis: basis along the component's own axis (interior faces)
    normal: Vec<LineBasis>,
    /// per axis: basis along a cross axis (offset positions, mirror ghosts)
    tangent: Vec<LineBasis>,
}

impl SpectralHelmholtz {
    pub fn new(grid: Grid) -> Self {
        let h = grid.spacing();
        let dims = grid.dims();
        let normal = (0..grid.dim())
            .map(|a| LineBasis::face_normal(dims[a], h[a]))
            .collect();
        let tangent = (0..grid.dim())
            .map(|a| LineBasis::face_tangent(dims[a], h[a]))
            .collect();
        Self {
            grid,
            normal,
            tangent,
        }
    }

    /// Solve for one velocity component; the input slice is the full face
    /// array of `comp_axis` with boundary faces zero. Returns the same layout.
    pub fn solve_component(&self, comp_axis: usize, alpha: f64, rhs: &[f64]) -> Vec<f64> {
        let fd = self.grid.face_dims(comp_axis);
        assert_eq!(rhs.len(), fd[0] * fd[1] * fd[2]);
        let mut work = rhs.to_vec();
        for a in 0..self.grid.dim() {
            if a == comp_axis {
                transform_axis(&mut work, fd, a, 1, &self.normal[a], true);
            } else {
                transform_axis(&mut work, fd, a, 0, &self.tangent[a], true);
            }
        }
        // mode division: slot s along the own axis holds wavenumber s (comes
        // from offset-1 storage), slot s along a cross axis holds s+1
        for k in 0..fd[2] {
            for j in 0..fd[1] {
                for i in 0..fd[0] {
                    let slots = [i, j, k];
                    if slots[comp_axis] == 0 || slots[comp_axis] == fd[comp_axis] - 1 {
                        continue; // pinned boundary faces stay zero
                    }
                    let mut lam = 0.0;
                    for a in 0..self.grid.dim() {
                        if a == comp_axis {
                            lam += self.normal[a].lambda[slots[a] - 1];
                        } else {
                            lam += self.tangent[a].lambda[slots[a]];
                        }
                    }
                    let idx = i + fd[0] * (j + fd[1] * k);
                    work[idx] /= 1.0 - alpha * lam;
                }
            }
        }
        for a in 0..self.grid.dim() {
            if a == comp_axis {
                transform_axis(&mut work, fd, a, 1, &self.normal[a], false);
            } else {
                transform_axis(&mut work, fd, a, 0, &self.tangent[a], false);
            }
        }
        work
    }

    /// Solve all components of a face field.
    pub fn solve(&self, alpha: f64, rhs: &VectorField) -> VectorField {
        let mut out = VectorField::zeros(self.grid);
        for axis in 0..self.grid.dim() {
            let solved = self.solve_component(axis, alpha, rhs.comp(axis));
            out.comp_mut(axis).copy_from_slice(&solved);
        }
        out.zero_boundary_faces();
        out
    }
}

/// Stencil form of the componentwise velocity Laplacian the spectral solver
/// inverts: pinned walls along the own axis, mirror-negative ghosts across.
/// Output boundary faces are zero.
pub fn lap_component(v: &VectorField, comp_axis: usize) -> Vec<f64> {
    let grid = *v.grid();
    let fd = grid.face_dims(comp_axis);
    let h = grid.spacing();
    let comp = v.comp(comp_axis);
    let mut out = vec![0.0; comp.len()];
    let strides = [1usize, fd[0], fd[0] * fd[1]];
    for k in 0..fd[2] {
        for j in 0..fd[1] {
            for i in 0..fd[0] {
                if grid.is_boundary_face(comp_axis, i, j, k) {
                    continue;
                }
                let slots = [i, j, k];
                let idx = i + fd[0] * (j + fd[1] * k);
                let center = comp[idx];
                let mut acc = 0.0;
                for a in 0..grid.dim() {
                    let inv_h2 = 1.0 / (h[a] * h[a]);
                    if a == comp_axis {
                        // neighbors are faces; walls are stored as zeros
                        let lo = comp[idx - strides[a]];
                        let hi = comp[idx + strides[a]];
                        acc += (lo - 2.0 * center + hi) * inv_h2;
                    } else {
                        let n_a = fd[a];
                        let lo = if slots[a] == 0 {
                            -center
                        } else {
                            comp[idx - strides[a]]
                        };
                        let hi = if slots[a] + 1 == n_a {
                            -center
                        } else {
                            comp[idx + strides[a]]
                        };
                        acc += (lo - 2.0 * center + hi) * inv_h2;
                    }
                }
                out[idx] = acc;
            }
        }
    }
    out
}

/// Componentwise Laplacian of a whole face field.
pub fn lap_vector(v: &VectorField) -> VectorField {
    let grid = *v.grid();
    let mut out = VectorField::zeros(grid);
    for axis in 0..grid.dim() {
        let lap = lap_component(v, axis);
        out.comp_mut(axis).copy_from_slice(&lap);
    }
    out.zero_boundary_faces();
    out
}

/// Face-weighted squared H1 seminorm `sum_i <-Lap u_i, u_i> vol`, the
/// discrete Dirichlet energy of the velocity with no-slip ghosts.
pub fn grad_velocity_sq(v: &VectorField) -> f64 {
    let vol = v.grid().cell_volume();
    let mut acc = 0.0;
    for axis in 0..v.grid().dim() {
        let lap = lap_component(v, axis);
        for (l, u) in lap.iter().zip(v.comp(axis)) {
            acc -= l * u;
        }
    }
    acc * vol
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ops::laplacian_neumann;

    #[test]
    fn poisson_solution_satisfies_stencil_laplacian() {
        for (dim, dims, ext) in [
            (2usize, vec![16usize, 12], vec![1.0, 0.7]),
            (3, vec![8, 6, 10], vec![1.0, 1.3, 0.8]),
        ] {
            let g = Grid::new(dim, &dims, &ext).unwrap();
            let mut rhs = ScalarField::from_fn(g, |x| {
                (7.0 * x[0]).sin() + (3.0 * x[1] + 1.0).cos() * (2.0 * x[2]).cos()
            });
            // remove the mean for compatibility
            let mean = rhs.integrate() / (g.extents()[0] * g.extents()[1] * g.extents()[2]);
            for v in rhs.data_mut() {
                *v -= mean;
            }
            let solver = SpectralPoisson::new(g);
            let p = solver.solve(&rhs);
            let lap = laplacian_neumann(&p);
            let scale = rhs.max_abs().max(1.0);
            for (a, b) in lap.data().iter().zip(rhs.data()) {
                assert!((a - b).abs() < 1e-10 * scale, "dim {dim}: {a} vs {b}");
            }
            // mean-zero result
            assert!(p.integrate().abs() < 1e-10);
        }
    }

    #[test]
    fn helmholtz_solution_satisfies_stencil_operator() {
        for (dim, dims, ext) in [
            (2usize, vec![16usize, 12], vec![1.0, 0.9]),
            (3, vec![6, 8, 6], vec![1.0, 1.1, 0.6]),
        ] {
            let g = Grid::new(dim, &dims, &ext).unwrap();
            let rhs = VectorField::from_fn(g, |axis, x| {
                ((axis + 2) as f64 * x[0] - 1.7 * x[1] + 0.9 * x[2]).sin()
            });
            let solver = SpectralHelmholtz::new(g);
            for alpha in [1e-4, 0.03, 2.0] {
                let u = solver.solve(alpha, &rhs);
                for axis in 0..dim {
                    let lap = lap_component(&u, axis);
                    let fd = g.face_dims(axis);
                    for k in 0..fd[2] {
                        for j in 0..fd[1] {
                            for i in 0..fd[0] {
                                if g.is_boundary_face(axis, i, j, k) {
                                    continue;
                                }
                                let idx = g.face_idx(axis, i, j, k);
                                let residual =
                                    u.comp(axis)[idx] - alpha * lap[idx] - rhs.comp(axis)[idx];
                                assert!(
                                    residual.abs() < 1e-10,
                                    "dim {dim} axis {axis} alpha {alpha}: {residual}"
                                );
                            }
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn helmholtz_identity_limit() {
        let g = Grid::new(2, &[8, 8], &[1.0, 1.0]).unwrap();
        let rhs = VectorField::from_fn(g, |_, x| (5.0 * x[0] * x[1]).sin());
        let solver = SpectralHelmholtz::new(g);
        let u = solver.solve(0.0, &rhs);
        for axis in 0..2 {
            for (a, b) in u.comp(axis).iter().zip(rhs.comp(axis)) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn dirichlet_energy_is_nonnegative_and_zero_for_zero_field() {
        let g = Grid::new(2, &[10, 10], &[1.0, 1.0]).unwrap();
        assert_eq!(grad_velocity_sq(&VectorField::zeros(g)), 0.0);
        let v = VectorField::from_fn(g, |_, x| (3.0 * x[0]).cos() * x[1]);
        assert!(grad_velocity_sq(&v) > 0.0);
    }
}

//! Incompressible velocity update: Helmholtz projection, the resolvent
//! `(I + eps A)^{-1}` of the discrete Stokes operator, implicit viscosity,
//! energy-neutral convection, and buoyancy forcing.

use crate::convection::convection;
use crate::error::{Error, Result};
use crate::grid::{Grid, ScalarField, VectorField};
use crate::model::{ModelParams, PotentialSpec};
use crate::ops::{divergence, gradient, laplacian_neumann};
use crate::spectral::{SpectralHelmholtz, SpectralPoisson};

/// Velocity and mean-zero pressure at one time instant.
#[derive(Debug, Clone)]
pub struct StokesState {
    pub u: VectorField,
    pub pressure: ScalarField,
}

impl StokesState {
    pub fn resting(grid: Grid) -> Self {
        Self {
            u: VectorField::zeros(grid),
            pressure: ScalarField::zeros(grid),
        }
    }

    pub fn div_inf(&self) -> f64 {
        divergence(&self.u).max_abs()
    }
}

/// Pressure Poisson solver: direct spectral factorization with the constant
/// mode pinned; the residual is still measured against the configured
/// tolerance so a failed solve surfaces instead of propagating.
#[derive(Debug, Clone)]
pub struct PoissonSolver {
    spectral: SpectralPoisson,
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl PoissonSolver {
    pub fn new(grid: Grid, tolerance: f64, max_iterations: usize) -> Self {
        Self {
            spectral: SpectralPoisson::new(grid),
            tolerance,
            max_iterations,
        }
    }

    pub fn solve(&self, rhs: &ScalarField) -> Result<ScalarField> {
        let p = self.spectral.solve(rhs);
        let lap = laplacian_neumann(&p);
        let volume: f64 = {
            let e = rhs.grid().extents();
            e[0] * e[1] * e[2]
        };
        let mean = rhs.integrate() / volume;
        let mut worst = 0.0f64;
        for (l, r) in lap.data().iter().zip(rhs.data()) {
            worst = worst.max((l - (r - mean)).abs());
        }
        let scale = rhs.max_abs().max(1.0);
        if worst > self.tolerance.max(1e-13) * scale * 100.0 {
            return Err(Error::Solver {
                context: "pressure poisson",
                residual: worst / scale,
                iterations: 1,
            });
        }
        Ok(p)
    }
}

/// Owns every elliptic solve of the velocity block. One instance serves one
/// simulation; instances are independent.
#[derive(Debug, Clone)]
pub struct StokesSolver {
    grid: Grid,
    pub poisson: PoissonSolver,
    helmholtz: SpectralHelmholtz,
    pub yosida_tol: f64,
    pub yosida_max_iter: usize,
    /// tolerance used for the resolvent inside velocity steps; the advecting
    /// field enters the update at O(dt * kappa), so solving it tighter than
    /// the splitting error buys nothing
    pub yosida_step_tol: f64,
    yosida_cache: Option<YosidaCache>,
    /// CG iterations spent in the most recent resolvent solve
    pub yosida_last_iterations: usize,
}

/// Warm-start state for consecutive resolvent solves. The multiplier and its
/// smoothed gradient extrapolate together (both are linear in q), so a step
/// can often start below tolerance without any solve; the pair is recomputed
/// from scratch periodically to shed accumulated rounding.
#[derive(Debug, Clone)]
struct YosidaCache {
    eps: f64,
    q: ScalarField,
    hgq: VectorField,
    prev: Option<(ScalarField, VectorField)>,
    age: u32,
}

impl StokesSolver {
    pub fn new(grid: Grid, poisson_tol: f64, poisson_max_iter: usize) -> Self {
        Self {
            grid,
            poisson: PoissonSolver::new(grid, poisson_tol, poisson_max_iter),
            helmholtz: SpectralHelmholtz::new(grid),
            yosida_tol: 1e-9,
            yosida_max_iter: 200,
            yosida_step_tol: 1e-5,
            yosida_cache: None,
            yosida_last_iterations: 0,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Helmholtz projection onto the divergence-free subspace. Returns the
    /// projected field and the (mean-zero) scalar potential removed from it.
    pub fn project(&self, v: &VectorField) -> Result<(VectorField, ScalarField)> {
        assert_eq!(v.grid(), &self.grid, "grid mismatch");
        let rhs = divergence(v);
        let p = self.poisson.solve(&rhs)?;
        let grad_p = gradient(&p);
        let mut w = v.clone();
        w.axpy(-1.0, &grad_p);
        Ok((w, p))
    }

    /// Projection without the per-call residual audit; the stepping loop
    /// validates the post-step divergence itself.
    fn project_fast(&self, v: &VectorField) -> (VectorField, ScalarField) {
        let rhs = divergence(v);
        let p = self.poisson.spectral_solve(&rhs);
        let grad_p = gradient(&p);
        let mut w = v.clone();
        w.axpy(-1.0, &grad_p);
        (w, p)
    }

    /// Apply `(I + eps A)^{-1}` with `A` the projected Dirichlet Laplacian.
    ///
    /// Solves the saddle system `(I - eps Lap) v + grad q = w, div v = 0` by
    /// conjugate gradients on the pressure Schur complement; every sweep is
    /// one spectral Helmholtz solve per component followed by a projection
    /// step on the multiplier. The L2 contraction `|v| <= |w| (1 + tol)` is
    /// checked on every call.
    pub fn yosida_apply(&mut self, w: &VectorField, eps: f64) -> Result<VectorField> {
        self.yosida_apply_inner(w, eps, true)
    }

    fn yosida_apply_inner(&mut self, w: &VectorField, eps: f64, clean: bool) -> Result<VectorField> {
        assert_eq!(w.grid(), &self.grid, "grid mismatch");
        if !w.is_finite() {
            return Err(Error::Domain("yosida input not finite".into()));
        }
        let w_norm = w.norm_l2();
        if w_norm == 0.0 {
            return Ok(VectorField::zeros(self.grid));
        }
        // input must be (numerically) divergence free; project if not
        let div_w = divergence(w).max_abs();
        let div_scale = w.max_abs() / self.grid.min_spacing();
        let w_projected;
        let w = if div_w > 1e-10 * div_scale.max(1.0) {
            w_projected = self.project(w)?.0;
            &w_projected
        } else {
            w
        };

        let vol = self.grid.cell_volume();
        let dot = |a: &ScalarField, b: &ScalarField| -> f64 {
            a.data()
                .iter()
                .zip(b.data())
                .map(|(x, y)| x * y)
                .sum::<f64>()
                * vol
        };

        // Schur operator: q -> -div (I - eps Lap)^{-1} grad q  (SPD).
        // Also returns the smoothed gradient so the final velocity can be
        // assembled without another Helmholtz solve.
        let apply_schur = |q: &ScalarField| -> (ScalarField, VectorField) {
            let g = gradient(q);
            let hg = self.helmholtz.solve(eps, &g);
            let mut d = divergence(&hg);
            d.scale(-1.0);
            (d, hg)
        };
        // Cahouet-Chabard preconditioner: (-L)^{-1} + eps I
        let precond = |r: &ScalarField| -> ScalarField {
            let mut z = self.poisson.spectral_solve(r);
            z.scale(-1.0);
            z.axpy(eps, r);
            z
        };

        let hw = self.helmholtz.solve(eps, w);
        let mut b = divergence(&hw);
        b.scale(-1.0);
        let b_norm = dot(&b, &b).sqrt();
        // the Schur residual equals div(v); resolve it relative to the
        // natural divergence scale of w rather than chasing a rounding-level
        // right-hand side when eps is tiny
        let div_scale_norm = 0.01 * w_norm / self.grid.min_spacing();
        let target = self.yosida_tol * b_norm.max(div_scale_norm);

        // warm start: extrapolate (q, H^{-1} grad q) from the cached pair;
        // refresh the smoothed gradient from an actual solve now and then
        let old_cache = self
            .yosida_cache
            .take()
            .filter(|c| c.eps == eps && c.q.grid() == &self.grid);
        let mut q = ScalarField::zeros(self.grid);
        let mut hgq = VectorField::zeros(self.grid);
        let mut age = 0u32;
        let mut refreshed = false;
        if b_norm > target {
            if let Some(cache) = &old_cache {
                q = cache.q.clone();
                hgq = cache.hgq.clone();
                if let Some((qp, hp)) = &cache.prev {
                    q.scale(2.0);
                    q.axpy(-1.0, qp);
                    hgq.scale(2.0);
                    hgq.axpy(-1.0, hp);
                }
                age = cache.age + 1;
                if age >= 128 {
                    // re-derive the smoothed gradient to shed accumulated
                    // extrapolation rounding; the stale pair must not feed
                    // the next extrapolation
                    hgq = self.helmholtz.solve(eps, &gradient(&q));
                    age = 0;
                    refreshed = true;
                }
            }
        }
        let mut r = b.clone();
        if q.max_abs() > 0.0 {
            let mut kq = divergence(&hgq);
            kq.scale(-1.0);
            r.axpy(-1.0, &kq);
        }
        self.yosida_last_iterations = 0;
        if b_norm > target {
            let mut z = precond(&r);
            let mut p = z.clone();
            let mut rz = dot(&r, &z);
            let mut iterations = 0usize;
            loop {
                let r_norm = dot(&r, &r).sqrt();
                if r_norm <= target {
                    break;
                }
                if iterations >= self.yosida_max_iter {
                    return Err(Error::Solver {
                        context: "yosida schur cg",
                        residual: r_norm / b_norm,
                        iterations,
                    });
                }
                let (y, hg_p) = apply_schur(&p);
                let py = dot(&p, &y);
                if py <= 0.0 {
                    return Err(Error::Solver {
                        context: "yosida schur cg (indefinite)",
                        residual: r_norm / b_norm,
                        iterations,
                    });
                }
                let alpha = rz / py;
                q.axpy(alpha, &p);
                hgq.axpy(alpha, &hg_p);
                r.axpy(-alpha, &y);
                z = precond(&r);
                let rz_new = dot(&r, &z);
                let beta = rz_new / rz;
                rz = rz_new;
                let mut p_new = z.clone();
                p_new.axpy(beta, &p);
                p = p_new;
                iterations += 1;
            }
            self.yosida_last_iterations = iterations;
        }
        self.yosida_cache = Some(YosidaCache {
            eps,
            q: q.clone(),
            hgq: hgq.clone(),
            prev: if refreshed {
                None
            } else {
                old_cache.map(|c| (c.q, c.hgq))
            },
            age,
        });

        let mut v = hw;
        v.axpy(-1.0, &hgq);
        if clean {
            // remove the leftover divergence (within CG tolerance) exactly
            v = self.project(&v)?.0;
        }

        let v_norm = v.norm_l2();
        if v_norm > w_norm * (1.0 + 10.0 * self.yosida_tol.max(1e-12)) {
            return Err(Error::Solver {
                context: "yosida contraction violated",
                residual: v_norm / w_norm - 1.0,
                iterations: 0,
            });
        }
        Ok(v)
    }

    /// One implicit-viscous velocity update with energy-neutral convection
    /// and buoyancy `n grad(phi)`, followed by the pressure projection.
    pub fn velocity_step(
        &mut self,
        state: &StokesState,
        n: &ScalarField,
        p: &ModelParams,
        phi: &PotentialSpec,
        dt: f64,
    ) -> Result<StokesState> {
        assert!(dt > 0.0, "dt must be positive");
        if !state.u.is_finite() || !n.is_finite() {
            return Err(Error::Domain("velocity step input not finite".into()));
        }
        let force = buoyancy_force(n, phi);
        let quiet = state.u.max_abs() == 0.0 && force.max_abs() == 0.0;
        if quiet {
            // exact rest state: all solves return zero
            return Ok(StokesState {
                u: VectorField::zeros(self.grid),
                pressure: ScalarField::zeros(self.grid),
            });
        }

        // assemble the explicit forcing and strip its gradient part before
        // the viscous solve: a conservative force then leaves a resting
        // fluid exactly at rest, and its potential goes into the pressure
        let mut forcing = force;
        if p.kappa != 0.0 && state.u.max_abs() > 0.0 {
            // the advecting field enters at O(dt * kappa); solve it to the
            // step tolerance and skip the cleanup projection (the skew form
            // is energy neutral for any advecting field)
            let tight = self.yosida_tol;
            self.yosida_tol = tight.max(self.yosida_step_tol);
            let advecting = self.yosida_apply_inner(&state.u, p.epsilon, false);
            self.yosida_tol = tight;
            let conv = convection(&advecting?, &state.u);
            forcing.axpy(-p.kappa, &conv);
        }
        let (forcing_sol, hydrostatic) = self.project_fast(&forcing);

        let mut rhs = state.u.clone();
        rhs.axpy(dt, &forcing_sol);
        let u_star = self.helmholtz.solve(dt, &rhs);
        let (u_new, potential) = self.project_fast(&u_star);
        if !u_new.is_finite() {
            return Err(Error::Solver {
                context: "velocity step produced non-finite values",
                residual: f64::INFINITY,
                iterations: 0,
            });
        }
        let mut pressure = potential;
        pressure.scale(1.0 / dt);
        pressure.axpy(1.0, &hydrostatic);
        Ok(StokesState { u: u_new, pressure })
    }
}

impl PoissonSolver {
    /// Raw spectral solve without the residual audit (internal hot path).
    pub(crate) fn spectral_solve(&self, rhs: &ScalarField) -> ScalarField {
        self.spectral.solve(rhs)
    }
}

/// Buoyancy `n grad(phi)` interpolated to faces; boundary faces carry none.
pub fn buoyancy_force(n: &ScalarField, phi: &PotentialSpec) -> VectorField {
    let grid = *n.grid();
    let mut out = VectorField::zeros(grid);
    for axis in 0..grid.dim() {
        let fd = grid.face_dims(axis);
        for k in 0..fd[2] {
            for j in 0..fd[1] {
                for i in 0..fd[0] {
                    if grid.is_boundary_face(axis, i, j, k) {
                        continue;
                    }
                    let mut lo = [i, j, k];
                    lo[axis] -= 1;
                    let n_face = 0.5
                        * (n.data()[grid.cell_idx(lo[0], lo[1], lo[2])]
                            + n.data()[grid.cell_idx(i, j, k)]);
                    let g = match phi {
                        PotentialSpec::Constant { grad } => grad[axis],
                        PotentialSpec::Sampled { grad } => {
                            grad.comp(axis)[grid.face_idx(axis, i, j, k)]
                        }
                    };
                    if g != 0.0 {
                        out.comp_mut(axis)[grid.face_idx(axis, i, j, k)] = n_face * g;
                    }
                }
            }
        }
    }
    out
}

/// Half the face-weighted squared L2 norm of the velocity.
pub fn kinetic_energy(u: &VectorField) -> f64 {
    let n = u.norm_l2();
    0.5 * n * n
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::lap_vector;
    use nalgebra::{DMatrix, SymmetricEigen};

    fn grid2(n: usize) -> Grid {
        Grid::new(2, &[n, n], &[1.0, 1.0]).unwrap()
    }

    fn rough_field(g: Grid, seed: f64) -> VectorField {
        VectorField::from_fn(g, |axis, x| {
            ((axis + 1) as f64 * (9.0 * x[0] + seed).sin() + (6.0 * x[1] - seed).cos()) * 0.4
        })
    }

    #[test]
    fn projection_is_idempotent() {
        let g = grid2(16);
        let solver = StokesSolver::new(g, 1e-10, 1000);
        for seed in 0..5 {
            let v = rough_field(g, seed as f64);
            let (w1, _) = solver.project(&v).unwrap();
            let (w2, _) = solver.project(&w1).unwrap();
            let mut diff = w2.clone();
            diff.axpy(-1.0, &w1);
            assert!(diff.norm_l2() <= 10.0 * solver.poisson.tolerance * v.norm_l2().max(1.0));
        }
    }

    #[test]
    fn projection_kills_gradient_fields() {
        let g = grid2(16);
        let solver = StokesSolver::new(g, 1e-10, 1000);
        let f = ScalarField::from_fn(g, |x| (4.0 * x[0]).sin() * (3.0 * x[1]).cos());
        let gf = gradient(&f);
        let (w, _) = solver.project(&gf).unwrap();
        assert!(w.norm_l2() <= 1e-8 * gf.norm_l2());
    }

    #[test]
    fn projection_recovers_divfree_part() {
        let g = grid2(16);
        let solver = StokesSolver::new(g, 1e-10, 1000);
        // div-free part from a vanishing stream function, gradient part from
        // a random scalar; both built explicitly
        let pi = std::f64::consts::PI;
        let h = g.spacing();
        let psi = |x: f64, y: f64| (pi * x).sin() * (2.0 * pi * y).sin();
        let mut divfree = VectorField::zeros(g);
        for j in 0..16 {
            for i in 0..=16 {
                if g.is_boundary_face(0, i, j, 0) {
                    continue;
                }
                let node = |jj: usize| psi(i as f64 * h[0], jj as f64 * h[1]);
                divfree.comp_mut(0)[g.face_idx(0, i, j, 0)] = (node(j + 1) - node(j)) / h[1];
            }
        }
        for j in 0..=16 {
            for i in 0..16 {
                if g.is_boundary_face(1, i, j, 0) {
                    continue;
                }
                let node = |ii: usize| psi(ii as f64 * h[0], j as f64 * h[1]);
                divfree.comp_mut(1)[g.face_idx(1, i, j, 0)] = -(node(i + 1) - node(i)) / h[0];
            }
        }
        assert!(divergence(&divfree).max_abs() < 1e-12);
        let scalar = ScalarField::from_fn(g, |x| (3.0 * x[0] - x[1]).cos());
        let mut v = divfree.clone();
        v.axpy(1.0, &gradient(&scalar));
        let (w, _) = solver.project(&v).unwrap();
        let mut diff = w.clone();
        diff.axpy(-1.0, &divfree);
        assert!(
            diff.norm_l2() <= 1e-9 * divfree.norm_l2().max(1.0),
            "defect {}",
            diff.norm_l2()
        );
    }

    #[test]
    fn projected_fields_have_small_divergence() {
        let g = grid2(16);
        let solver = StokesSolver::new(g, 1e-10, 1000);
        for seed in 0..10 {
            let v = rough_field(g, seed as f64 * 1.3);
            let (w, _) = solver.project(&v).unwrap();
            assert!(divergence(&w).max_abs() <= 1e-9 * v.norm_l2().max(1.0));
        }
    }

    #[test]
    fn yosida_identity_limit() {
        let g = grid2(12);
        let mut solver = StokesSolver::new(g, 1e-10, 1000);
        let v = rough_field(g, 2.0);
        let (w, _) = solver.project(&v).unwrap();
        let y = solver.yosida_apply(&w, 1e-12).unwrap();
        let mut diff = y.clone();
        diff.axpy(-1.0, &w);
        assert!(diff.norm_l2() <= 1e-6 * w.norm_l2());
    }

    #[test]
    fn yosida_contracts_every_call() {
        let g = grid2(12);
        let mut solver = StokesSolver::new(g, 1e-10, 1000);
        for seed in 0..10 {
            let v = rough_field(g, seed as f64);
            let (w, _) = solver.project(&v).unwrap();
            for eps in [0.5, 0.1, 0.01] {
                let y = solver.yosida_apply(&w, eps).unwrap();
                assert!(y.norm_l2() <= w.norm_l2() * (1.0 + 1e-8));
            }
        }
    }

    #[test]
    fn yosida_error_decreases_with_eps() {
        let g = grid2(12);
        let mut solver = StokesSolver::new(g, 1e-10, 1000);
        let v = rough_field(g, 7.0);
        let (w, _) = solver.project(&v).unwrap();
        let mut last = f64::INFINITY;
        for eps in [0.5, 0.1, 0.01] {
            let y = solver.yosida_apply(&w, eps).unwrap();
            let mut diff = y.clone();
            diff.axpy(-1.0, &w);
            let err = diff.norm_l2();
            assert!(err < last, "eps {eps}: {err} !< {last}");
            last = err;
        }
    }

    /// Interior-face coordinates (axis, flat index) in a fixed order.
    fn interior_face_coords(g: Grid) -> Vec<(usize, usize)> {
        let mut coords = Vec::new();
        for axis in 0..2 {
            let fd = g.face_dims(axis);
            for k in 0..fd[2] {
                for j in 0..fd[1] {
                    for i in 0..fd[0] {
                        if !g.is_boundary_face(axis, i, j, k) {
                            coords.push((axis, g.face_idx(axis, i, j, k)));
                        }
                    }
                }
            }
        }
        coords
    }

    /// Dense assembly of the projected Dirichlet Laplacian on interior faces.
    fn assemble_stokes_operator(g: Grid, solver: &StokesSolver) -> DMatrix<f64> {
        let coords = interior_face_coords(g);
        let m = coords.len();
        let mut mat = DMatrix::<f64>::zeros(m, m);
        for col in 0..m {
            let mut e = VectorField::zeros(g);
            let (axis, idx) = coords[col];
            e.comp_mut(axis)[idx] = 1.0;
            let (pe, _) = solver.project(&e).unwrap();
            let mut lap = lap_vector(&pe);
            lap.scale(-1.0);
            let (ple, _) = solver.project(&lap).unwrap();
            for (row, &(raxis, ridx)) in coords.iter().enumerate() {
                mat[(row, col)] = ple.comp(raxis)[ridx];
            }
        }
        mat
    }

    /// Smallest clearly-positive eigenpair of the dense Stokes operator,
    /// returned as (eigenvalue, eigenfield).
    fn leading_stokes_mode(g: Grid, solver: &StokesSolver) -> (f64, VectorField) {
        let mat = assemble_stokes_operator(g, solver);
        let sym = (&mat + mat.transpose()) * 0.5;
        let eig = SymmetricEigen::new(sym);
        let mut best: Option<(usize, f64)> = None;
        for (idx, &lam) in eig.eigenvalues.iter().enumerate() {
            if lam > 1.0 && best.map(|(_, b)| lam < b).unwrap_or(true) {
                best = Some((idx, lam));
            }
        }
        let (mode, lambda) = best.expect("no positive Stokes mode found");
        let coords = interior_face_coords(g);
        let mut v = VectorField::zeros(g);
        for (row, &(axis, idx)) in coords.iter().enumerate() {
            v.comp_mut(axis)[idx] = eig.eigenvectors[(row, mode)];
        }
        (lambda, v)
    }

    #[test]
    fn yosida_matches_dense_stokes_eigenfield() {
        let g = grid2(10);
        let mut solver = StokesSolver::new(g, 1e-10, 1000);
        let (lambda, v) = leading_stokes_mode(g, &solver);
        // eigenvector of P(-Lap)P with positive eigenvalue is div-free
        assert!(divergence(&v).max_abs() < 1e-6 * v.max_abs());
        for eps in [0.3, 0.05] {
            let y = solver.yosida_apply(&v, eps).unwrap();
            let expect_scale = 1.0 / (1.0 + eps * lambda);
            let mut diff = y.clone();
            diff.axpy(-expect_scale, &v);
            assert!(
                diff.norm_l2() <= 1e-5 * v.norm_l2(),
                "eps {eps}: defect {}",
                diff.norm_l2() / v.norm_l2()
            );
        }
    }

    #[test]
    fn velocity_step_keeps_rest_state_exact() {
        let g = grid2(12);
        let mut solver = StokesSolver::new(g, 1e-10, 1000);
        let state = StokesState::resting(g);
        let n = ScalarField::zeros(g);
        let p = ModelParams::new(1.5, 1.0, 1.0, 1.0, 0.1, 2).unwrap();
        let phi = PotentialSpec::constant(2, &[0.0, 0.0]).unwrap();
        let next = solver.velocity_step(&state, &n, &p, &phi, 1e-3).unwrap();
        assert_eq!(next.u.max_abs(), 0.0);
        assert_eq!(next.pressure.max_abs(), 0.0);
    }

    #[test]
    fn constant_buoyancy_projects_to_zero_velocity() {
        // kappa = 0, n = 1, grad phi = (0,-1): the face force field is the
        // discrete gradient of -y, so the projection removes it entirely
        let g = grid2(16);
        let mut solver = StokesSolver::new(g, 1e-10, 1000);
        let n = ScalarField::constant(g, 1.0);
        let phi = PotentialSpec::constant(2, &[0.0, -1.0]).unwrap();
        // oracle: project the raw force and record the result
        let force = buoyancy_force(&n, &phi);
        let (projected_force, _) = solver.project(&force).unwrap();
        assert!(projected_force.norm_l2() <= 1e-11 * force.norm_l2());

        let p = ModelParams::new(1.5, 0.0, 1.0, 1.0, 0.1, 2).unwrap();
        let state = StokesState::resting(g);
        let dt = 1e-2;
        let next = solver.velocity_step(&state, &n, &p, &phi, dt).unwrap();
        assert!(next.u.norm_l2() <= dt * 1e-10);
    }

    #[test]
    fn stokes_eigenfield_energy_decays_at_eigenrate() {
        let g = grid2(10);
        let mut solver = StokesSolver::new(g, 1e-10, 1000);
        let (lambda, u0) = leading_stokes_mode(g, &solver);
        let (u0, _) = solver.project(&u0).unwrap();

        let p = ModelParams::new(1.5, 0.0, 1.0, 1.0, 0.1, 2).unwrap();
        let phi = PotentialSpec::constant(2, &[0.0, 0.0]).unwrap();
        let n = ScalarField::zeros(g);
        let dt = 2e-4;
        let steps = 50;
        let mut state = StokesState {
            u: u0.clone(),
            pressure: ScalarField::zeros(g),
        };
        let k0 = kinetic_energy(&state.u);
        let mut last = k0;
        for _ in 0..steps {
            state = solver.velocity_step(&state, &n, &p, &phi, dt).unwrap();
            let k = kinetic_energy(&state.u);
            assert!(k <= last * (1.0 + 1e-12), "kinetic energy must not grow");
            last = k;
        }
        let t = dt * steps as f64;
        let expect = k0 * (-2.0 * lambda * t).exp();
        let got = kinetic_energy(&state.u);
        assert!(
            (got - expect).abs() <= 0.1 * expect,
            "decay mismatch: got {got}, expected {expect} (lambda {lambda})"
        );
    }
}

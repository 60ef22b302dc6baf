//! Time integration of the coupled regularized system: explicit conservative
//! transport/diffusion for the density, explicit consumption-diffusion for
//! the signal, then the implicit incompressible velocity update, with CFL
//! control, positivity safeguards, and a halve-and-retry rejection policy.

use crate::diagnostics::FunctionalSeries;
use crate::error::{Error, Result};
use crate::grid::{Grid, ScalarField, VectorField};
use crate::model::{InitialData, ModelParams, PotentialSpec, SensitivitySpec};
use crate::ops::{advect_scalar_upwind, advective_cfl, divergence, gradient, laplacian_neumann};
use crate::regularization::{chemotactic_flux_with_speed, d_eps, rho_eps, CutoffField};
use crate::stokes::{buoyancy_force, kinetic_energy, StokesSolver, StokesState};

/// The coupled unknowns at one time instant.
#[derive(Debug, Clone)]
pub struct State {
    pub n: ScalarField,
    pub c: ScalarField,
    pub stokes: StokesState,
    pub t: f64,
    pub step: u64,
}

impl State {
    pub fn from_initial(init: &InitialData) -> Self {
        let grid = *init.n0.grid();
        Self {
            n: init.n0.clone(),
            c: init.c0.clone(),
            stokes: StokesState {
                u: init.u0.clone(),
                pressure: ScalarField::zeros(grid),
            },
            t: 0.0,
            step: 0,
        }
    }

    pub fn grid(&self) -> &Grid {
        self.n.grid()
    }
}

/// Everything recorded about one accepted step.
#[derive(Debug, Clone, Copy)]
pub struct StepReport {
    pub dt: f64,
    pub halvings: u32,
    pub cfl_advective: f64,
    pub cfl_diffusive: f64,
    pub min_n: f64,
    pub max_c: f64,
    pub clamped_n_cells: usize,
    pub clamped_c_cells: usize,
    pub kinetic_pre: f64,
    pub kinetic_post: f64,
    /// buoyancy power at the start of the step
    pub buoyancy_power: f64,
    /// (K_post - K_pre)/dt - buoyancy power; bounded by O(dt) for the scheme
    pub energy_defect: f64,
}

/// How a horizon run ended.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RunOutcome {
    Completed,
    /// dt halvings were exhausted; partial outputs are still returned
    BlowUpSuspected { time: f64, step: u64 },
}

/// Options steering `run_to_time`.
#[derive(Debug, Clone, Copy)]
pub struct RunOptions {
    pub horizon: f64,
    /// record diagnostics every this many accepted steps
    pub cadence: u64,
    pub fixed_dt: Option<f64>,
}

/// Owns the model closure and the velocity solver for one simulation.
pub struct Stepper {
    pub params: ModelParams,
    pub sensitivity: SensitivitySpec,
    pub potential: PotentialSpec,
    pub rho: CutoffField,
    pub solver: StokesSolver,
    /// sup-norm of the initial signal: the global maximum-principle bound
    pub c0_max: f64,
    pub safety: f64,
    pub max_halvings: u32,
}

impl Stepper {
    pub fn new(
        grid: Grid,
        params: ModelParams,
        sensitivity: SensitivitySpec,
        potential: PotentialSpec,
        poisson_tol: f64,
        poisson_max_iter: usize,
    ) -> Result<Self> {
        let rho = rho_eps(grid, params.epsilon)?;
        Ok(Self {
            params,
            sensitivity,
            potential,
            rho,
            solver: StokesSolver::new(grid, poisson_tol, poisson_max_iter),
            c0_max: 0.0,
            safety: 0.9,
            max_halvings: 10,
        })
    }

    /// Largest diffusivity over the current density field.
    fn max_diffusivity(&self, n: &ScalarField) -> f64 {
        n.data()
            .iter()
            .fold(0.0f64, |m, &v| m.max(d_eps(v.max(0.0), &self.params)))
    }

    /// Explicit-term stability proposal:
    /// `safety * min(h^2/(2 dim maxD), h/max|u|, h/max|chem drift|, 1/max n)`.
    pub fn stable_dt(&self, state: &State) -> Result<f64> {
        let (_, chem_speed) = chemotactic_flux_with_speed(
            &state.n,
            &state.c,
            &self.sensitivity,
            &self.rho,
            &self.params,
        )?;
        Ok(self.stable_dt_with_speed(state, chem_speed))
    }

    fn stable_dt_with_speed(&self, state: &State, chem_speed: f64) -> f64 {
        let h = state.grid().min_spacing();
        let dim = self.params.dim as f64;
        let max_d = self.max_diffusivity(&state.n);
        let mut dt = h * h / (2.0 * dim * max_d);
        let u_max = state.stokes.u.max_abs();
        if u_max > 0.0 {
            dt = dt.min(h / u_max);
        }
        if chem_speed > 0.0 {
            dt = dt.min(h / chem_speed);
        }
        let n_max = state.n.max();
        if n_max > 0.0 {
            dt = dt.min(1.0 / n_max);
        }
        self.safety * dt
    }

    /// Strict per-cell monotonicity bound combining every explicit
    /// coefficient (diffusion of both scalars, transport, drift,
    /// consumption); keeping dt under this avoids rejection churn.
    fn monotone_dt(&self, state: &State, chem_speed: f64) -> f64 {
        let grid = state.grid();
        let h = grid.spacing();
        let dim = self.params.dim;
        let max_d = self.max_diffusivity(&state.n);
        let u_max = state.stokes.u.max_abs();
        let inv_h_sum: f64 = (0..dim).map(|a| 1.0 / h[a]).sum();
        let inv_h2_sum: f64 = (0..dim).map(|a| 1.0 / (h[a] * h[a])).sum();

        let coef_n = 2.0 * max_d * inv_h2_sum + (u_max + chem_speed) * inv_h_sum;
        let c_range = state.c.max() - state.c.min();
        let c_diffusion = if c_range > 0.0 { 2.0 * inv_h2_sum } else { 0.0 };
        let coef_c = c_diffusion + u_max * inv_h_sum + state.n.max().max(0.0);
        let coef = coef_n.max(coef_c);
        if coef > 0.0 {
            self.safety / coef
        } else {
            f64::INFINITY
        }
    }

    /// Explicit conservative density update for a precomputed chemotactic
    /// flux. Returns the new density and the count of rounding-level
    /// negatives snapped to zero.
    fn step_n_with_flux(
        &self,
        state: &State,
        dt: f64,
        chem_flux: &VectorField,
    ) -> Result<(ScalarField, usize)> {
        let grid = *state.grid();
        let n = &state.n;
        let grad_n = gradient(n);
        // total face flux: chemotaxis minus diffusion
        let mut flux = chem_flux.clone();
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
                        let d_face = 0.5
                            * (d_eps(n.data()[grid.cell_idx(lo[0], lo[1], lo[2])], &self.params)
                                + d_eps(n.data()[grid.cell_idx(i, j, k)], &self.params));
                        let fidx = grid.face_idx(axis, i, j, k);
                        flux.comp_mut(axis)[fidx] -= d_face * grad_n.comp(axis)[fidx];
                    }
                }
            }
        }
        let mut n_new = n.clone();
        n_new.axpy(-dt, &divergence(&flux));
        let transport = advect_scalar_upwind(n, &state.stokes.u, dt)?;
        n_new.axpy(1.0, &transport);

        let scale = n.max_abs().max(1.0);
        let tol_neg = 1e-13 * scale;
        let mut clamped = 0usize;
        let mut worst = 0.0f64;
        for v in n_new.data_mut() {
            if *v < 0.0 {
                worst = worst.max(-*v);
                if *v >= -tol_neg {
                    *v = 0.0;
                    clamped += 1;
                }
            }
        }
        if worst > tol_neg {
            return Err(Error::StepRejected(format!(
                "density dipped to -{worst:.3e} (CFL violation symptom)"
            )));
        }
        Ok((n_new, clamped))
    }

    /// Public single-substep entry retained for direct use and tests.
    pub fn step_n(&self, state: &State, dt: f64) -> Result<ScalarField> {
        let (flux, _) = chemotactic_flux_with_speed(
            &state.n,
            &state.c,
            &self.sensitivity,
            &self.rho,
            &self.params,
        )?;
        Ok(self.step_n_with_flux(state, dt, &flux)?.0)
    }

    /// Explicit consumption-diffusion-transport update for the signal.
    /// Preserves `0 <= c <= max(c)` or rejects the step.
    pub fn step_c(&self, state: &State, dt: f64) -> Result<(ScalarField, usize)> {
        if dt * state.n.max() > 1.0 {
            return Err(Error::StepRejected(format!(
                "consumption stability dt*max(n) = {} > 1",
                dt * state.n.max()
            )));
        }
        let lap = laplacian_neumann(&state.c);
        let transport = advect_scalar_upwind(&state.c, &state.stokes.u, dt)?;
        let mut c_new = state.c.clone();
        c_new.axpy(dt, &lap);
        for ((v, n), a) in c_new
            .data_mut()
            .iter_mut()
            .zip(state.n.data())
            .zip(state.c.data())
        {
            *v -= dt * n * a;
        }
        c_new.axpy(1.0, &transport);

        let prev_max = state.c.max();
        let scale = prev_max.max(1.0);
        let tol = 1e-13 * scale;
        let mut clamped = 0usize;
        let mut worst_neg = 0.0f64;
        for v in c_new.data_mut() {
            if *v < 0.0 {
                worst_neg = worst_neg.max(-*v);
                if *v >= -tol {
                    *v = 0.0;
                    clamped += 1;
                }
            }
        }
        if worst_neg > tol {
            return Err(Error::StepRejected(format!(
                "signal dipped to -{worst_neg:.3e}"
            )));
        }
        let new_max = c_new.max();
        if new_max > prev_max + 1e-12 {
            return Err(Error::StepRejected(format!(
                "signal maximum grew from {prev_max} to {new_max}"
            )));
        }
        Ok((c_new, clamped))
    }

    fn try_step(
        &mut self,
        state: &State,
        dt: f64,
        chem_flux: &VectorField,
    ) -> Result<(State, StepReport)> {
        let (n_new, clamped_n) = self.step_n_with_flux(state, dt, chem_flux)?;
        let (c_new, clamped_c) = self.step_c(state, dt)?;
        let force = buoyancy_force(&n_new, &self.potential);
        let buoyancy_power = force.dot(&state.stokes.u);
        let stokes_new =
            self.solver
                .velocity_step(&state.stokes, &n_new, &self.params, &self.potential, dt)?;

        if !n_new.is_finite() || !c_new.is_finite() || !stokes_new.u.is_finite() {
            return Err(Error::StepRejected("non-finite values after update".into()));
        }
        let div_inf = divergence(&stokes_new.u).max_abs();
        let div_tol = 1e-8
            * (stokes_new.u.max_abs() / state.grid().min_spacing()).max(1.0);
        if div_inf > div_tol {
            return Err(Error::Solver {
                context: "post-step divergence",
                residual: div_inf,
                iterations: 0,
            });
        }

        let kinetic_pre = kinetic_energy(&state.stokes.u);
        let kinetic_post = kinetic_energy(&stokes_new.u);
        let report = StepReport {
            dt,
            halvings: 0,
            cfl_advective: advective_cfl(&state.stokes.u, dt),
            cfl_diffusive: {
                let h = state.grid().min_spacing();
                dt * 2.0 * self.params.dim as f64 * self.max_diffusivity(&state.n) / (h * h)
            },
            min_n: n_new.min(),
            max_c: c_new.max(),
            clamped_n_cells: clamped_n,
            clamped_c_cells: clamped_c,
            kinetic_pre,
            kinetic_post,
            buoyancy_power,
            energy_defect: (kinetic_post - kinetic_pre) / dt - buoyancy_power,
        };
        let next = State {
            n: n_new,
            c: c_new,
            stokes: stokes_new,
            t: state.t + dt,
            step: state.step + 1,
        };
        Ok((next, report))
    }

    /// One coupled step with the halve-and-retry rejection policy.
    pub fn step_coupled(&mut self, state: &State, dt_proposal: f64) -> Result<(State, StepReport)> {
        let (chem_flux, _) = chemotactic_flux_with_speed(
            &state.n,
            &state.c,
            &self.sensitivity,
            &self.rho,
            &self.params,
        )?;
        let mut dt = dt_proposal;
        let mut halvings = 0u32;
        loop {
            match self.try_step(state, dt, &chem_flux) {
                Ok((next, mut report)) => {
                    report.halvings = halvings;
                    return Ok((next, report));
                }
                Err(Error::StepRejected(_)) if halvings < self.max_halvings => {
                    dt *= 0.5;
                    halvings += 1;
                }
                Err(Error::StepRejected(_)) => {
                    return Err(Error::BlowUpSuspected {
                        time: state.t,
                        step: state.step,
                    });
                }
                Err(e) => return Err(e),
            }
        }
    }

    /// Advance to the horizon with adaptive dt, recording diagnostics every
    /// `cadence` accepted steps (plus the initial and final instants).
    pub fn run_to_time(
        &mut self,
        state0: State,
        opts: &RunOptions,
        mut on_record: impl FnMut(&State, Option<&StepReport>),
    ) -> Result<(State, FunctionalSeries, RunOutcome)> {
        assert!(opts.horizon >= 0.0, "horizon must be nonnegative");
        self.c0_max = self.c0_max.max(state0.c.max());
        let mut series = FunctionalSeries::new(&self.params);
        let mut state = state0;
        if opts.horizon == 0.0 {
            return Ok((state, series, RunOutcome::Completed));
        }
        series.record(&state, 0.0);
        on_record(&state, None);
        let t_end = state.t + opts.horizon;
        let mut last_record_t = state.t;
        let mut steps_since_record = 0u64;
        loop {
            if state.t >= t_end - 1e-12 * opts.horizon.max(1.0) {
                break;
            }
            let (chem_flux, chem_speed) = chemotactic_flux_with_speed(
                &state.n,
                &state.c,
                &self.sensitivity,
                &self.rho,
                &self.params,
            )?;
            let mut dt = match opts.fixed_dt {
                Some(fixed) => fixed,
                None => self
                    .stable_dt_with_speed(&state, chem_speed)
                    .min(self.monotone_dt(&state, chem_speed)),
            };
            dt = dt.min(t_end - state.t);

            // inline retry loop reusing the precomputed flux
            let mut halvings = 0u32;
            let outcome = loop {
                match self.try_step(&state, dt, &chem_flux) {
                    Ok(pair) => break Ok(pair),
                    Err(Error::StepRejected(_)) if halvings < self.max_halvings => {
                        dt *= 0.5;
                        halvings += 1;
                    }
                    Err(Error::StepRejected(_)) => break Err(()),
                    Err(e) => return Err(e),
                }
            };
            match outcome {
                Ok((next, mut report)) => {
                    report.halvings = halvings;
                    // left-endpoint budget quadrature on the step partition
                    series.accumulate(&state, report.dt);
                    state = next;
                    steps_since_record += 1;
                    let done = state.t >= t_end - 1e-12 * opts.horizon.max(1.0);
                    if steps_since_record >= opts.cadence.max(1) || done {
                        series.record(&state, 0.0);
                        on_record(&state, Some(&report));
                        last_record_t = state.t;
                        steps_since_record = 0;
                    }
                }
                Err(()) => {
                    // halvings exhausted: flag and return partial outputs
                    if steps_since_record > 0 {
                        series.record(&state, state.t - last_record_t);
                        on_record(&state, None);
                    }
                    return Ok((
                        state.clone(),
                        series,
                        RunOutcome::BlowUpSuspected {
                            time: state.t,
                            step: state.step,
                        },
                    ));
                }
            }
        }
        Ok((state, series, RunOutcome::Completed))
    }
}

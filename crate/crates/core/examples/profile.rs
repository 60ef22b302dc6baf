// micro-profile of per-step component costs on the 64x64 grid
use chemflow::config::RunConfig;
use chemflow::harness;
use chemflow::ops::{divergence, gradient, laplacian_neumann, advect_scalar_upwind};
use chemflow::regularization::chemotactic_flux_with_speed;
use chemflow::spectral::{SpectralHelmholtz, SpectralPoisson};
use std::time::Instant;

fn timeit(name: &str, reps: usize, mut f: impl FnMut()) {
    let t0 = Instant::now();
    for _ in 0..reps {
        f();
    }
    println!("{name}: {:?} per call", t0.elapsed() / reps as u32);
}

fn main() {
    let cfg = RunConfig::from_path(std::path::Path::new("/tmp/bench/c1.json")).unwrap();
    let (mut stepper, state0) = harness::build(&cfg).unwrap();
    let mut state = state0;
    // settle a few steps so u is nonzero
    for _ in 0..20 {
        let dt = stepper.stable_dt(&state).unwrap();
        let (next, _) = stepper.step_coupled(&state, dt).unwrap();
        state = next;
    }
    let grid = *state.grid();
    let reps = 400;

    timeit("gradient(n)", reps, || {
        std::hint::black_box(gradient(&state.n));
    });
    timeit("divergence(u)", reps, || {
        std::hint::black_box(divergence(&state.stokes.u));
    });
    timeit("laplacian(c)", reps, || {
        std::hint::black_box(laplacian_neumann(&state.c));
    });
    timeit("advect(n,u)", reps, || {
        std::hint::black_box(advect_scalar_upwind(&state.n, &state.stokes.u, 1e-5).unwrap());
    });
    timeit("chem_flux", reps, || {
        std::hint::black_box(
            chemotactic_flux_with_speed(
                &state.n,
                &state.c,
                &stepper.sensitivity,
                &stepper.rho,
                &stepper.params,
            )
            .unwrap(),
        );
    });
    let poisson = SpectralPoisson::new(grid);
    timeit("spectral poisson", reps, || {
        std::hint::black_box(poisson.solve(&state.c));
    });
    let helm = SpectralHelmholtz::new(grid);
    timeit("spectral helmholtz (2 comps)", reps, || {
        std::hint::black_box(helm.solve(0.1, &state.stokes.u));
    });
    timeit("project", reps, || {
        std::hint::black_box(stepper.solver.project(&state.stokes.u).unwrap());
    });
    timeit("yosida", 50, || {
        std::hint::black_box(stepper.solver.yosida_apply(&state.stokes.u, 0.1).unwrap());
    });
    timeit("velocity_step", 50, || {
        std::hint::black_box(
            stepper
                .solver
                .velocity_step(&state.stokes, &state.n, &stepper.params, &stepper.potential, 1e-5)
                .unwrap(),
        );
    });
    timeit("step_c", reps, || {
        std::hint::black_box(stepper.step_c(&state, 1e-5).unwrap());
    });
    timeit("full step_coupled", 50, || {
        std::hint::black_box(stepper.step_coupled(&state, 1e-5).unwrap());
    });
    let rates_params = stepper.params;
    timeit("dissipation_rates", reps, || {
        std::hint::black_box(chemflow::diagnostics::dissipation_rates(&state, &rates_params));
    });
}

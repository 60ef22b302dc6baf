// probe: does the extrapolated warm start land near tolerance?
use chemflow::config::RunConfig;
use chemflow::harness;

fn main() {
    let cfg = RunConfig::from_path(std::path::Path::new("/tmp/bench/c1.json")).unwrap();
    let (mut stepper, state0) = harness::build(&cfg).unwrap();
    let mut state = state0;
    for k in 0..400 {
        let dt = stepper.stable_dt(&state).unwrap();
        let (next, _) = stepper.step_coupled(&state, dt).unwrap();
        state = next;
        if k >= 390 {
            println!(
                "step {k}: iters {} umax {:.3e}",
                stepper.solver.yosida_last_iterations,
                state.stokes.u.max_abs()
            );
        }
    }
}

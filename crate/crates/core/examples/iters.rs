// quick probe: yosida iteration counts over a short run
use chemflow::config::RunConfig;
use chemflow::harness;
use chemflow::stepper::RunOptions;

fn main() {
    let cfg = RunConfig::from_path(std::path::Path::new("/tmp/bench/c1.json")).unwrap();
    let (mut stepper, state0) = harness::build(&cfg).unwrap();
    let mut state = state0;
    let mut total = 0usize;
    let mut count = 0usize;
    let t0 = std::time::Instant::now();
    for k in 0..200 {
        let dt = stepper.stable_dt(&state).unwrap();
        let (next, _) = stepper.step_coupled(&state, dt).unwrap();
        state = next;
        total += stepper.solver.yosida_last_iterations;
        count += 1;
        if k % 50 == 0 {
            println!("step {k}: yosida iters {}", stepper.solver.yosida_last_iterations);
        }
    }
    println!("mean yosida iters: {}", total as f64 / count as f64);
    println!("elapsed: {:?} for {count} steps", t0.elapsed());
    let _ = RunOptions { horizon: 0.0, cadence: 1, fixed_dt: None };
}

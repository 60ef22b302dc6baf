//! Experiment orchestration: single runs, parameter sweeps, checkpoint
//! persistence, and the artifact layout on disk.

use crate::config::{RunConfig, RNG_ALGORITHM};
use crate::diagnostics::{audit_bounds, AuditReport, FunctionalSeries};
use crate::error::{Error, Result};
use crate::grid::{Grid, ScalarField, VectorField};
use crate::model::validate_params;
use crate::stepper::{RunOptions, RunOutcome, State, Stepper};
use crate::stokes::StokesState;
use serde::{Deserialize, Serialize};
use serde_json::json;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

/// Stable process exit codes for CI.
pub mod exit_codes {
    pub const OK: i32 = 0;
    pub const FAILURE: i32 = 1;
    pub const VALIDATION: i32 = 2;
    pub const SOLVER: i32 = 3;
    pub const BLOW_UP: i32 = 4;
    pub const IO: i32 = 5;
}

/// Map an error to its exit code.
pub fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::Validation(_) | Error::Domain(_) | Error::OutOfRegime { .. } => {
            exit_codes::VALIDATION
        }
        Error::Solver { .. } | Error::StepRejected(_) => exit_codes::SOLVER,
        Error::BlowUpSuspected { .. } => exit_codes::BLOW_UP,
        Error::Io(_) => exit_codes::IO,
        Error::Format(_) | Error::UnsupportedVersion(_) => exit_codes::VALIDATION,
    }
}

/// Everything a finished run left on disk plus the in-memory summaries.
pub struct RunArtifacts {
    pub outcome: RunOutcome,
    pub audit: AuditReport,
    pub series: FunctionalSeries,
    pub final_state: State,
    pub series_path: PathBuf,
    pub audit_path: PathBuf,
    pub checkpoint_path: PathBuf,
}

/// Build the stepper and initial state for a config.
pub fn build(config: &RunConfig) -> Result<(Stepper, State)> {
    let grid = config.grid()?;
    let params = config.params()?;
    let sensitivity = config.sensitivity_spec()?;
    let potential = config.potential()?;
    let mut stepper = Stepper::new(
        grid,
        params,
        sensitivity,
        potential,
        config.solvers.poisson_tol,
        config.solvers.poisson_max_iter,
    )?;
    stepper.solver.yosida_tol = config.solvers.yosida_tol;
    stepper.solver.yosida_max_iter = config.solvers.yosida_max_iter;
    stepper.solver.yosida_step_tol = config.solvers.yosida_step_tol;
    stepper.safety = config.time.safety;
    stepper.max_halvings = config.time.max_halvings;

    let init = config.initial_data(&stepper.solver)?;
    let report = validate_params(&stepper.params, &stepper.sensitivity, &stepper.potential, &init)?;
    if !report.all_pass() && !config.override_regime {
        let failing: Vec<&str> = report
            .checks
            .iter()
            .filter(|c| !c.pass)
            .map(|c| c.name.as_str())
            .collect();
        return Err(Error::Validation(format!(
            "hypothesis checks failed: {failing:?} (set override_regime to run anyway)"
        )));
    }
    stepper.c0_max = init.c0.max();
    Ok((stepper, State::from_initial(&init)))
}

/// Resolve the output directory, honoring the `CHEMFLOW_OUTPUT_ROOT`
/// environment variable as a prefix when set.
pub fn resolve_output_dir(config: &RunConfig) -> PathBuf {
    match std::env::var_os("CHEMFLOW_OUTPUT_ROOT") {
        Some(root) => Path::new(&root).join(&config.output.dir),
        None => PathBuf::from(&config.output.dir),
    }
}

/// Execute a configured run and persist its artifacts.
///
/// Writes the functional series CSV, the audit report JSON, the final-state
/// checkpoint, and an echo of the resolved configuration (with the RNG
/// algorithm and cutoff-width convention) for reproducibility.
pub fn run(config: &RunConfig) -> Result<RunArtifacts> {
    let outdir = resolve_output_dir(config);
    std::fs::create_dir_all(&outdir)?;
    let (mut stepper, state0) = build(config)?;
    let opts = RunOptions {
        horizon: config.time.horizon,
        cadence: config.diagnostics.cadence,
        fixed_dt: config.time.fixed_dt,
    };
    let (final_state, series, outcome) = stepper.run_to_time(state0, &opts, |_, _| {})?;
    let audit = audit_bounds(&series);

    let series_path = outdir.join("series.csv");
    std::fs::write(&series_path, series.to_csv())?;
    let audit_path = outdir.join("audit.json");
    std::fs::write(&audit_path, serde_json::to_string_pretty(&audit).unwrap())?;
    let checkpoint_path = outdir.join("final.ckpt");
    save_checkpoint(&final_state, &checkpoint_path)?;
    let echo = json!({
        "config": config,
        "rng": RNG_ALGORITHM,
        "cutoff_width_rule": "epsilon * min_extent",
        "outcome": match outcome {
            RunOutcome::Completed => "completed".to_string(),
            RunOutcome::BlowUpSuspected { time, step } => {
                format!("blow_up_suspected at t={time} step={step}")
            }
        },
    });
    std::fs::write(
        outdir.join("config_echo.json"),
        serde_json::to_string_pretty(&echo).unwrap(),
    )?;

    Ok(RunArtifacts {
        outcome,
        audit,
        series,
        final_state,
        series_path,
        audit_path,
        checkpoint_path,
    })
}

/// Which parameter a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    Epsilon,
    DiffusionExponent,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepResult {
    pub parameter: String,
    pub ladder: Vec<f64>,
    /// L1 differences of consecutive final densities
    pub n_l1_diffs: Vec<f64>,
    /// L2 differences of consecutive final signals
    pub c_l2_diffs: Vec<f64>,
    /// L2 differences of consecutive final velocities
    pub u_l2_diffs: Vec<f64>,
    /// trend check: differences nonincreasing within 20% slack
    pub cauchy_trend_pass: bool,
    pub failures: Vec<String>,
}

/// Run the identical scenario once per ladder member and report pairwise
/// Cauchy differences of the final fields.
///
/// Initial data is generated once from the seed and shared bit-exactly by
/// every member. Members run concurrently up to the worker count.
pub fn sweep_epsilon(config: &RunConfig, ladder: &[f64]) -> Result<SweepResult> {
    sweep(config, SweepParam::Epsilon, ladder, None)
}

pub fn sweep(
    config: &RunConfig,
    param: SweepParam,
    ladder: &[f64],
    workers: Option<usize>,
) -> Result<SweepResult> {
    if ladder.is_empty() {
        return Err(Error::Validation("sweep ladder is empty".into()));
    }
    match param {
        SweepParam::Epsilon => {
            for w in ladder.windows(2) {
                if w[1] >= w[0] {
                    return Err(Error::Validation(
                        "epsilon ladder must be strictly decreasing".into(),
                    ));
                }
            }
            if ladder.iter().any(|e| !(*e > 0.0 && *e <= 1.0)) {
                return Err(Error::Validation(
                    "epsilon ladder members must lie in (0, 1]".into(),
                ));
            }
        }
        SweepParam::DiffusionExponent => {
            if ladder.iter().any(|m| !(m.is_finite() && *m > 0.0)) {
                return Err(Error::Validation("m ladder members must be positive".into()));
            }
        }
    }

    // shared initial data, generated once
    let (base_stepper, base_state) = build(config)?;
    drop(base_stepper);
    let outroot = resolve_output_dir(config);
    std::fs::create_dir_all(&outroot)?;

    let worker_count = workers
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        })
        .clamp(1, ladder.len().max(1));

    let mut member_configs = Vec::new();
    for &value in ladder {
        let mut member = config.clone();
        match param {
            SweepParam::Epsilon => member.epsilon = value,
            SweepParam::DiffusionExponent => member.m = value,
        }
        member_configs.push(member);
    }

    type MemberOutcome = std::result::Result<(State, RunOutcome), String>;
    let mut results: Vec<Option<MemberOutcome>> = (0..ladder.len()).map(|_| None).collect();
    let next = std::sync::atomic::AtomicUsize::new(0);
    let results_mutex = std::sync::Mutex::new(&mut results);
    std::thread::scope(|scope| {
        for _ in 0..worker_count {
            scope.spawn(|| loop {
                let idx = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                if idx >= member_configs.len() {
                    break;
                }
                let member = &member_configs[idx];
                let outcome = run_member(member, &base_state, &outroot, param, ladder[idx]);
                results_mutex.lock().unwrap()[idx] = Some(outcome);
            });
        }
    });

    let mut failures = Vec::new();
    let mut finals = Vec::new();
    for (i, slot) in results.into_iter().enumerate() {
        match slot.expect("sweep member did not report") {
            Ok((state, outcome)) => {
                if let RunOutcome::BlowUpSuspected { time, step } = outcome {
                    failures.push(format!(
                        "member {} ({}={}): blow-up suspected at t={time} step={step}",
                        i, param_name(param), ladder[i]
                    ));
                }
                finals.push(Some(state));
            }
            Err(msg) => {
                failures.push(format!(
                    "member {} ({}={}): {msg}",
                    i,
                    param_name(param),
                    ladder[i]
                ));
                finals.push(None);
            }
        }
    }

    let mut n_l1 = Vec::new();
    let mut c_l2 = Vec::new();
    let mut u_l2 = Vec::new();
    for pair in finals.windows(2) {
        if let (Some(a), Some(b)) = (&pair[0], &pair[1]) {
            let mut dn = a.n.clone();
            dn.axpy(-1.0, &b.n);
            n_l1.push(dn.norm_lp(1.0).unwrap());
            let mut dc = a.c.clone();
            dc.axpy(-1.0, &b.c);
            c_l2.push(dc.norm_lp(2.0).unwrap());
            let mut du = a.stokes.u.clone();
            du.axpy(-1.0, &b.stokes.u);
            u_l2.push(du.norm_l2());
        }
    }
    let trend = |d: &[f64]| d.windows(2).all(|w| w[1] <= 1.2 * w[0]);
    let cauchy_trend_pass = match param {
        SweepParam::Epsilon => {
            failures.is_empty() && trend(&n_l1) && trend(&c_l2) && trend(&u_l2)
        }
        SweepParam::DiffusionExponent => failures.is_empty(),
    };

    let result = SweepResult {
        parameter: param_name(param).to_string(),
        ladder: ladder.to_vec(),
        n_l1_diffs: n_l1,
        c_l2_diffs: c_l2,
        u_l2_diffs: u_l2,
        cauchy_trend_pass,
        failures,
    };
    std::fs::write(
        outroot.join("sweep.json"),
        serde_json::to_string_pretty(&result).unwrap(),
    )?;
    Ok(result)
}

fn param_name(p: SweepParam) -> &'static str {
    match p {
        SweepParam::Epsilon => "epsilon",
        SweepParam::DiffusionExponent => "m",
    }
}

fn run_member(
    member: &RunConfig,
    shared_state: &State,
    outroot: &Path,
    param: SweepParam,
    value: f64,
) -> std::result::Result<(State, RunOutcome), String> {
    let dir = outroot.join(format!("{}_{}", param_name(param), value));
    let exec = || -> Result<(State, RunOutcome)> {
        std::fs::create_dir_all(&dir)?;
        let grid = member.grid()?;
        let params = member.params()?;
        let mut stepper = Stepper::new(
            grid,
            params,
            member.sensitivity_spec()?,
            member.potential()?,
            member.solvers.poisson_tol,
            member.solvers.poisson_max_iter,
        )?;
        stepper.solver.yosida_tol = member.solvers.yosida_tol;
        stepper.solver.yosida_max_iter = member.solvers.yosida_max_iter;
        stepper.solver.yosida_step_tol = member.solvers.yosida_step_tol;
        stepper.safety = member.time.safety;
        stepper.max_halvings = member.time.max_halvings;
        stepper.c0_max = shared_state.c.max();
        let opts = RunOptions {
            horizon: member.time.horizon,
            cadence: member.diagnostics.cadence,
            fixed_dt: member.time.fixed_dt,
        };
        let (final_state, series, outcome) =
            stepper.run_to_time(shared_state.clone(), &opts, |_, _| {})?;
        std::fs::write(dir.join("series.csv"), series.to_csv())?;
        save_checkpoint(&final_state, &dir.join("final.ckpt"))?;
        Ok((final_state, outcome))
    };
    exec().map_err(|e| e.to_string())
}

const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointHeader {
    format: String,
    version: u32,
    time: f64,
    step: u64,
    dim: usize,
    grid_dims: Vec<usize>,
    grid_extents: Vec<f64>,
    fields: Vec<FieldHeader>,
}

#[derive(Debug, Serialize, Deserialize)]
struct FieldHeader {
    name: String,
    shape: Vec<usize>,
    bc: String,
    len: usize,
}

/// Serialize the full state: a one-line JSON header followed by one
/// little-endian f64 block per field. Byte-exact round trips.
pub fn save_checkpoint(state: &State, path: &Path) -> Result<()> {
    let grid = *state.grid();
    let dim = grid.dim();
    let mut fields = Vec::new();
    let mut blocks: Vec<&[f64]> = Vec::new();
    let dims = grid.dims();

    let scalar_shape: Vec<usize> = dims[..dim].to_vec();
    for (name, field) in [("n", &state.n), ("c", &state.c), ("p", &state.stokes.pressure)] {
        fields.push(FieldHeader {
            name: name.to_string(),
            shape: scalar_shape.clone(),
            bc: "neumann-zero-flux".to_string(),
            len: field.data().len(),
        });
        blocks.push(field.data());
    }
    for axis in 0..dim {
        let fd = grid.face_dims(axis);
        fields.push(FieldHeader {
            name: format!("u_{}", ["x", "y", "z"][axis]),
            shape: fd[..dim].to_vec(),
            bc: "dirichlet-zero".to_string(),
            len: state.stokes.u.comp(axis).len(),
        });
        blocks.push(state.stokes.u.comp(axis));
    }

    let header = CheckpointHeader {
        format: "chemflow-checkpoint".to_string(),
        version: CHECKPOINT_VERSION,
        time: state.t,
        step: state.step,
        dim,
        grid_dims: dims[..dim].to_vec(),
        grid_extents: grid.extents()[..dim].to_vec(),
        fields,
    };
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    serde_json::to_writer(&mut file, &header)
        .map_err(|e| Error::Format(format!("header write: {e}")))?;
    file.write_all(b"\n")?;
    for block in blocks {
        for v in block {
            file.write_all(&v.to_le_bytes())?;
        }
    }
    file.flush()?;
    Ok(())
}

/// Load a checkpoint, validating version, grid, and every field shape.
pub fn load_checkpoint(path: &Path) -> Result<State> {
    let mut file = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut header_bytes = Vec::new();
    loop {
        let mut byte = [0u8; 1];
        let read = file.read(&mut byte)?;
        if read == 0 {
            return Err(Error::Format("checkpoint header line missing".into()));
        }
        if byte[0] == b'\n' {
            break;
        }
        header_bytes.push(byte[0]);
        if header_bytes.len() > 1 << 20 {
            return Err(Error::Format("checkpoint header unreasonably large".into()));
        }
    }
    let header: CheckpointHeader = serde_json::from_slice(&header_bytes)
        .map_err(|e| Error::Format(format!("header parse: {e}")))?;
    if header.format != "chemflow-checkpoint" {
        return Err(Error::Format(format!("unknown format {:?}", header.format)));
    }
    if header.version != CHECKPOINT_VERSION {
        return Err(Error::UnsupportedVersion(header.version));
    }
    let grid = Grid::new(header.dim, &header.grid_dims, &header.grid_extents)?;

    let mut read_block = |fh: &FieldHeader| -> Result<Vec<f64>> {
        let expect: usize = fh.shape.iter().product();
        if expect != fh.len {
            return Err(Error::Format(format!(
                "field {}: shape {:?} does not match len {}",
                fh.name, fh.shape, fh.len
            )));
        }
        let mut buf = vec![0u8; fh.len * 8];
        file.read_exact(&mut buf).map_err(|e| {
            Error::Format(format!("field {}: truncated payload ({e})", fh.name))
        })?;
        Ok(buf
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    };

    let mut n = None;
    let mut c = None;
    let mut p = None;
    let mut u = VectorField::zeros(grid);
    for fh in &header.fields {
        match fh.name.as_str() {
            "n" | "c" | "p" => {
                if fh.len != grid.cell_count() {
                    return Err(Error::Format(format!(
                        "field {}: expected {} cells, header says {}",
                        fh.name,
                        grid.cell_count(),
                        fh.len
                    )));
                }
                let data = read_block(fh)?;
                let field = ScalarField::from_data(grid, data);
                match fh.name.as_str() {
                    "n" => n = Some(field),
                    "c" => c = Some(field),
                    _ => p = Some(field),
                }
            }
            "u_x" | "u_y" | "u_z" => {
                let axis = match fh.name.as_str() {
                    "u_x" => 0,
                    "u_y" => 1,
                    _ => 2,
                };
                if fh.len != grid.face_count(axis) {
                    return Err(Error::Format(format!(
                        "field {}: expected {} faces, header says {}",
                        fh.name,
                        grid.face_count(axis),
                        fh.len
                    )));
                }
                let data = read_block(fh)?;
                u.comp_mut(axis).copy_from_slice(&data);
            }
            other => {
                return Err(Error::Format(format!("unexpected field {other:?}")));
            }
        }
    }
    let mut trailing = [0u8; 1];
    if file.read(&mut trailing)? != 0 {
        return Err(Error::Format("trailing bytes after final field".into()));
    }
    let (n, c, p) = match (n, c, p) {
        (Some(n), Some(c), Some(p)) => (n, c, p),
        _ => return Err(Error::Format("checkpoint missing a required field".into())),
    };
    Ok(State {
        n,
        c,
        stokes: StokesState { u, pressure: p },
        t: header.time,
        step: header.step,
    })
}

/// Save-then-load helper used by the persistence contract tests.
pub fn checkpoint_roundtrip(state: &State, path: &Path) -> Result<State> {
    save_checkpoint(state, path)?;
    load_checkpoint(path)
}

/// Human-readable checkpoint summary for the inspect verb.
pub fn describe_checkpoint(path: &Path) -> Result<String> {
    let state = load_checkpoint(path)?;
    let grid = state.grid();
    let mut out = String::new();
    out.push_str(&format!(
        "checkpoint: t = {}, step = {}, dim = {}, dims = {:?}\n",
        state.t,
        state.step,
        grid.dim(),
        &grid.dims()[..grid.dim()],
    ));
    let stats = |name: &str, data: &[f64]| -> String {
        let min = data.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = data.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mean = data.iter().sum::<f64>() / data.len() as f64;
        format!("  {name}: min {min:.6e} max {max:.6e} mean {mean:.6e}\n")
    };
    out.push_str(&stats("n", state.n.data()));
    out.push_str(&stats("c", state.c.data()));
    out.push_str(&stats("p", state.stokes.pressure.data()));
    for axis in 0..grid.dim() {
        out.push_str(&stats(
            &format!("u_{}", ["x", "y", "z"][axis]),
            state.stokes.u.comp(axis),
        ));
    }
    Ok(out)
}

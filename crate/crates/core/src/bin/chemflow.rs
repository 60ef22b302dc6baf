use chemflow::config::RunConfig;
use chemflow::harness::{self, exit_code_for, exit_codes, SweepParam};
use chemflow::stepper::RunOutcome;
use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "chemflow",
    version,
    about = "Chemotaxis-fluid simulator and a-priori bound auditor"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a configured simulation and write its artifacts.
    Run {
        config: PathBuf,
        /// Override the output directory from the config.
        #[arg(long)]
        output: Option<String>,
        /// Override the time horizon.
        #[arg(long)]
        horizon: Option<f64>,
        /// Override the RNG seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the regularization parameter.
        #[arg(long)]
        epsilon: Option<f64>,
        /// Override the diffusion exponent.
        #[arg(long)]
        m: Option<f64>,
        /// Allow sub-threshold diffusion exponents.
        #[arg(long)]
        override_regime: bool,
    },
    /// Run the same scenario over a parameter ladder and report the
    /// pairwise differences of the final fields.
    Sweep {
        config: PathBuf,
        /// Comma-separated ladder, e.g. 0.4,0.2,0.1
        #[arg(long)]
        ladder: String,
        /// Which parameter to sweep: epsilon (default) or m.
        #[arg(long, default_value = "epsilon")]
        param: String,
        /// Concurrent member runs (defaults to available cores).
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        output: Option<String>,
    },
    /// Run a configuration and check every audited bound, printing one
    /// pass/fail line per check.
    Verify {
        config: PathBuf,
        #[arg(long)]
        output: Option<String>,
    },
    /// Print the header and field statistics of a checkpoint.
    Inspect { checkpoint: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    };
    ExitCode::from(code as u8)
}

fn load_config(
    path: &PathBuf,
    output: Option<String>,
    horizon: Option<f64>,
    seed: Option<u64>,
    epsilon: Option<f64>,
    m: Option<f64>,
    override_regime: bool,
) -> chemflow::Result<RunConfig> {
    let mut config = RunConfig::from_path(path)?;
    if let Some(dir) = output {
        config.output.dir = dir;
    }
    if let Some(t) = horizon {
        config.time.horizon = t;
    }
    if let Some(s) = seed {
        config.seed = s;
    }
    if let Some(e) = epsilon {
        config.epsilon = e;
    }
    if let Some(m) = m {
        config.m = m;
    }
    if override_regime {
        config.override_regime = true;
    }
    Ok(config)
}

fn dispatch(cli: Cli) -> chemflow::Result<i32> {
    match cli.command {
        Command::Run {
            config,
            output,
            horizon,
            seed,
            epsilon,
            m,
            override_regime,
        } => {
            let config = load_config(&config, output, horizon, seed, epsilon, m, override_regime)?;
            let artifacts = harness::run(&config)?;
            println!("series:     {}", artifacts.series_path.display());
            println!("audit:      {}", artifacts.audit_path.display());
            println!("checkpoint: {}", artifacts.checkpoint_path.display());
            match artifacts.outcome {
                RunOutcome::Completed => {
                    println!("outcome: completed ({} records)", artifacts.series.records.len());
                    Ok(exit_codes::OK)
                }
                RunOutcome::BlowUpSuspected { time, step } => {
                    eprintln!("outcome: blow-up suspected at t = {time} (step {step})");
                    Ok(exit_codes::BLOW_UP)
                }
            }
        }
        Command::Sweep {
            config,
            ladder,
            param,
            workers,
            output,
        } => {
            let config = load_config(&config, output, None, None, None, None, false)?;
            let values: Vec<f64> = ladder
                .split(',')
                .map(|s| {
                    s.trim().parse::<f64>().map_err(|e| {
                        chemflow::Error::Validation(format!("bad ladder entry {s:?}: {e}"))
                    })
                })
                .collect::<chemflow::Result<_>>()?;
            let param = match param.as_str() {
                "epsilon" => SweepParam::Epsilon,
                "m" => SweepParam::DiffusionExponent,
                other => {
                    return Err(chemflow::Error::Validation(format!(
                        "unknown sweep parameter {other:?} (expected epsilon or m)"
                    )))
                }
            };
            let result = harness::sweep(&config, param, &values, workers)?;
            println!("{}", serde_json::to_string_pretty(&result).unwrap());
            if !result.failures.is_empty() {
                Ok(exit_codes::SOLVER)
            } else {
                Ok(exit_codes::OK)
            }
        }
        Command::Verify { config, output } => {
            let config = load_config(&config, output, None, None, None, None, false)?;
            let artifacts = harness::run(&config)?;
            let mut all_pass = true;
            for check in &artifacts.audit.checks {
                let status = if check.pass { "PASS" } else { "FAIL" };
                println!(
                    "[{status}] {} (violation {:.3e}, tolerance {:.3e})",
                    check.name, check.max_violation, check.tolerance
                );
                all_pass &= check.pass;
            }
            let min_n = artifacts
                .series
                .records
                .iter()
                .map(|r| r.min_n)
                .fold(f64::INFINITY, f64::min);
            let n_ok = min_n >= 0.0;
            println!(
                "[{}] density nonnegative (min over records {min_n:.3e})",
                if n_ok { "PASS" } else { "FAIL" }
            );
            all_pass &= n_ok;
            match artifacts.outcome {
                RunOutcome::Completed => println!("[PASS] run completed"),
                RunOutcome::BlowUpSuspected { time, step } => {
                    println!("[FAIL] run flagged blow-up at t = {time} (step {step})");
                    all_pass = false;
                }
            }
            Ok(if all_pass {
                exit_codes::OK
            } else {
                exit_codes::FAILURE
            })
        }
        Command::Inspect { checkpoint } => {
            print!("{}", harness::describe_checkpoint(&checkpoint)?);
            Ok(exit_codes::OK)
        }
    }
}

//! `pdsim` command-line driver.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;

use pdsim::compression::{contract_report, shipped_operators};
use pdsim::config::{DeltaChoice, ExperimentConfig};
use pdsim::engine::{run, RunOptions};
use pdsim::error::Error;
use pdsim::suite::{cached_reference, delta_auto, run_suite, Setup};

#[derive(Parser)]
#[command(name = "pdsim", version, about = "Compressed decentralized primal-dual optimization simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured suite and write per-run CSVs plus summary.csv.
    Run(Common),
    /// Compute (or load from cache) the reference solution.
    Oracle(Common),
    /// Run the compression-contract and invariant battery.
    Check(CheckArgs),
    /// Print the admissible delta interval for each compressor and mode.
    Delta(Common),
}

#[derive(Args)]
struct Common {
    /// Flat key = value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides `out` in the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override a configuration key; may be repeated.
    #[arg(long = "set", value_name = "K=V")]
    overrides: Vec<String>,
    /// Worker threads for independent runs.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct CheckArgs {
    #[command(flatten)]
    common: Common,
    /// Monte Carlo trials per vector family in the contract check.
    #[arg(long, default_value_t = 10_000)]
    trials: usize,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig, Error> {
        let mut cfg = ExperimentConfig::default();
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::InvalidConfig(format!("cannot read {}: {e}", path.display())))?;
            cfg.apply_text(&text)?;
        }
        cfg.apply_overrides(&self.overrides)?;
        if let Some(out) = &self.out {
            cfg.out_dir = out.clone();
        }
        cfg.validate()?;
        if let Some(jobs) = self.jobs {
            if jobs == 0 {
                return Err(Error::InvalidConfig("--jobs must be at least 1".into()));
            }
            if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
                log::warn!("could not size the worker pool: {e}");
            }
        }
        Ok(cfg)
    }
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::InvalidConfig(_) | Error::HorizonTooShort { .. } | Error::Parse { .. } | Error::MissingConstraint { .. } => 2,
        Error::NumericalDivergence { .. } => 3,
        Error::OracleFailure { .. } => 4,
        _ => 1,
    }
}

fn cmd_run(common: &Common) -> Result<u8, Error> {
    let cfg = common.load()?;
    let report = run_suite(&cfg)?;
    println!("compressor feedback seed status final_gap bits_to_target rate_slope");
    for row in &report.summary {
        println!(
            "{} {} {} {} {:.3e} {} {}",
            row.compressor,
            row.feedback,
            row.seed,
            row.status,
            row.final_gap,
            row.bits_to_target.map_or("-".into(), |b| b.to_string()),
            row.rate_slope.map_or("-".into(), |s| format!("{s:.3}")),
        );
    }
    println!("summary written to {}", report.summary_path.display());
    let worst = report.failures().filter_map(|o| o.error.as_ref()).map(exit_code).max();
    Ok(worst.unwrap_or(0))
}

fn cmd_oracle(common: &Common) -> Result<u8, Error> {
    let cfg = common.load()?;
    let setup = Setup::build(&cfg)?;
    let reference = cached_reference(&setup.instance, &cfg.out_dir, cfg.oracle_iters)?;
    println!("f_star {}", reference.f_star);
    println!("max_violation {:e}", reference.max_violation);
    println!("movement {:e}", reference.movement);
    println!("iterations {}", reference.iterations);
    println!("cached in {}", cfg.out_dir.join("reference.txt").display());
    Ok(0)
}

fn cmd_delta(common: &Common) -> Result<u8, Error> {
    let cfg = common.load()?;
    let setup = Setup::build(&cfg)?;
    let m = setup.instance.index().len();
    println!("m {m} G~ {:.6e} C {:.6e}", setup.constants.g_tilde, setup.constants.c);
    let mut code = 0;
    for spec in &cfg.compressors {
        for &feedback in &cfg.feedback {
            let hyper = cfg.hyper(feedback, 1.0);
            match hyper.delta_interval(m, setup.constants.g_tilde, spec.omega(cfg.d)) {
                Ok((lo, hi)) => println!(
                    "{spec} {feedback} eta {:.6e} interval [{lo:.10e}, {hi:.10e}] midpoint {:.10e}",
                    hyper.eta(),
                    0.5 * (lo + hi)
                ),
                Err(e) => {
                    println!("{spec} {feedback} eta {:.6e}: {e}", hyper.eta());
                    code = 2;
                }
            }
        }
    }
    Ok(code)
}

fn cmd_check(args: &CheckArgs) -> Result<u8, Error> {
    let cfg = args.common.load()?;
    let mut all_ok = true;
    let mut report = |name: String, ok: bool, detail: String| {
        all_ok &= ok;
        println!("{} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
    };

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.instance_seed);
    for d in [4, 10, 100] {
        for spec in shipped_operators(d) {
            let r = contract_report(&spec, d, args.trials, &mut rng)?;
            let allowed = 1.0 - spec.omega(d) + 0.02;
            report(format!("contract {spec} d={d}"), r.worst() <= allowed, format!("{:.4} <= {allowed:.4}", r.worst()));
        }
    }

    let setup = Setup::build(&cfg)?;
    let reference = cached_reference(&setup.instance, &cfg.out_dir, cfg.oracle_iters)?;
    report(
        "reference feasibility".into(),
        reference.max_violation <= 1e-3
            && reference.x_star.iter().all(|x| x.norm() <= setup.instance.radius() + 1e-9),
        format!("max violation {:.3e}", reference.max_violation),
    );
    for spec in &cfg.compressors {
        for &feedback in &cfg.feedback {
            let delta = match cfg.delta {
                DeltaChoice::Value(v) => v,
                DeltaChoice::Auto => delta_auto(&cfg, &setup, spec, feedback)?,
            };
            let hyper = cfg.hyper(feedback, delta);
            let options = RunOptions {
                record_every: cfg.record_every,
                designated_edge: setup.designated_edge,
                constants: Some(setup.constants.clone()),
                ..RunOptions::default()
            };
            let seed = cfg.seeds[0];
            match run(&setup.instance, spec, &hyper, &reference, seed, &options) {
                Ok(rec) => {
                    let inv = &rec.invariants;
                    report(
                        format!("invariants {spec} {feedback}"),
                        inv.all_held(),
                        format!(
                            "symmetric {} nonnegative {} coherent {} feasibility excess {:.3e}",
                            inv.dual_symmetric, inv.dual_nonnegative, inv.copies_coherent, inv.feasibility_excess
                        ),
                    );
                }
                Err(e) => report(format!("invariants {spec} {feedback}"), false, e.to_string()),
            }
        }
    }
    Ok(if all_ok { 0 } else { 1 })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(c) => cmd_run(c),
        Command::Oracle(c) => cmd_oracle(c),
        Command::Check(c) => cmd_check(c),
        Command::Delta(c) => cmd_delta(c),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

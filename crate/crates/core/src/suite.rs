//! Batch execution: one run per (compressor, feedback, seed) on a shared
//! instance and reference solution, plus a summary table.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub use crate::config::{DeltaChoice, ExperimentConfig, ZetaChoice};
use crate::compression::CompressorSpec;
use crate::engine::{run, Feedback, RunOptions};
use crate::error::{Error, Result};
use crate::metrics::{self, RecordRow};
use crate::problem::{estimate_constants, reference_solution, ConstantEstimates, QcqpInstance, ReferenceSolution};
use crate::topology::Graph;

pub const SUMMARY_HEADER: &str =
    "compressor,feedback,seed,status,final_gap,final_err,final_g_max,total_bits,bits_to_target,rate_slope";

const CONSTANT_SAMPLES: usize = 2000;

/// Graph, instance, constants and designated edge shared by every run.
pub struct Setup {
    pub graph: Graph,
    pub instance: QcqpInstance,
    pub constants: ConstantEstimates,
    pub designated_edge: Option<(usize, usize)>,
}

impl Setup {
    pub fn build(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let graph = Graph::erdos_renyi(cfg.n, cfg.p, cfg.graph_seed)?;
        if !graph.is_connected() {
            log::warn!("graph is disconnected; the constraint coupling decomposes into components");
        }
        let instance = QcqpInstance::generate(&graph, &cfg.problem_params())?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.instance_seed);
        rng.set_stream(1);
        let constants = estimate_constants(&instance, CONSTANT_SAMPLES, &mut rng)?;
        let designated_edge = (graph.edge_count() > 0).then(|| graph.edges()[rng.random_range(0..graph.edge_count())]);
        Ok(Self { graph, instance, constants, designated_edge })
    }
}

/// Midpoint of the admissible `delta` interval for this compressor and mode.
pub fn delta_auto(cfg: &ExperimentConfig, setup: &Setup, spec: &CompressorSpec, feedback: Feedback) -> Result<f64> {
    let hyper = cfg.hyper(feedback, 1.0);
    let (lo, hi) =
        hyper.delta_interval(setup.instance.index().len(), setup.constants.g_tilde, spec.omega(cfg.d))?;
    log::info!("{spec} / {feedback}: delta interval [{lo:.6e}, {hi:.6e}]");
    Ok(0.5 * (lo + hi))
}

/// Loads `reference.txt` from `dir` when `instance.txt` there matches the
/// instance, otherwise solves and writes both.
pub fn cached_reference(instance: &QcqpInstance, dir: &Path, max_iters: usize) -> Result<ReferenceSolution> {
    let inst_path = dir.join("instance.txt");
    let ref_path = dir.join("reference.txt");
    let text = instance.to_text();
    if let (Ok(cached_inst), Ok(cached_ref)) = (std::fs::read_to_string(&inst_path), std::fs::read_to_string(&ref_path)) {
        if cached_inst == text {
            match ReferenceSolution::from_text(&cached_ref) {
                Ok(r) => {
                    log::info!("using cached reference solution from {}", ref_path.display());
                    return Ok(r);
                }
                Err(e) => log::warn!("ignoring unreadable cache {}: {e}", ref_path.display()),
            }
        }
    }
    let reference = reference_solution(instance, max_iters)?;
    log::info!(
        "reference solution: F* = {}, max violation {:.3e}, movement {:.3e}, {} iterations",
        reference.f_star,
        reference.max_violation,
        reference.movement,
        reference.iterations
    );
    std::fs::create_dir_all(dir)?;
    std::fs::write(&inst_path, text)?;
    std::fs::write(&ref_path, reference.to_text())?;
    Ok(reference)
}

/// File stem for one run, e.g. `sign+top_k-5_bandit_s3`.
pub fn run_stem(spec: &CompressorSpec, feedback: Feedback, seed: u64) -> String {
    format!("{}_{feedback}_s{seed}", spec.to_string().replace(':', "-"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub compressor: String,
    pub feedback: Feedback,
    pub seed: u64,
    /// `ok`, or the error kind for a failed run.
    pub status: String,
    pub final_gap: f64,
    pub final_err: f64,
    pub final_g_max: f64,
    pub total_bits: Option<u64>,
    pub bits_to_target: Option<u64>,
    pub rate_slope: Option<f64>,
}

impl SummaryRow {
    /// Summary of a run computed purely from its recorded rows.
    pub fn from_rows(spec: &str, feedback: Feedback, seed: u64, rows: &[RecordRow], target_gap: f64) -> Self {
        let last = rows.last();
        let ts: Vec<usize> = rows.iter().map(|r| r.t).collect();
        let gaps: Vec<f64> = rows.iter().map(|r| r.rel_gap).collect();
        Self {
            compressor: spec.to_string(),
            feedback,
            seed,
            status: "ok".into(),
            final_gap: last.map_or(f64::NAN, |r| r.rel_gap),
            final_err: last.map_or(f64::NAN, |r| r.rel_err),
            final_g_max: last.map_or(f64::NAN, |r| r.g_max),
            total_bits: last.map(|r| r.cum_bits),
            bits_to_target: metrics::bits_to_target(rows, target_gap).ok(),
            rate_slope: metrics::rate_fit(&ts, &gaps).ok(),
        }
    }

    fn failed(spec: &str, feedback: Feedback, seed: u64, error: &Error) -> Self {
        let status = match error {
            Error::NumericalDivergence { .. } => "diverged",
            Error::FeasibilityViolation { .. } => "infeasible",
            Error::InvalidConfig(_) | Error::HorizonTooShort { .. } => "config-error",
            _ => "failed",
        };
        Self {
            compressor: spec.to_string(),
            feedback,
            seed,
            status: status.into(),
            final_gap: f64::NAN,
            final_err: f64::NAN,
            final_g_max: f64::NAN,
            total_bits: None,
            bits_to_target: None,
            rate_slope: None,
        }
    }

    pub fn csv_line(&self) -> String {
        let opt = |v: Option<String>| v.unwrap_or_default();
        format!(
            "{},{},{},{},{:.16e},{:.16e},{:.16e},{},{},{}",
            self.compressor,
            self.feedback,
            self.seed,
            self.status,
            self.final_gap,
            self.final_err,
            self.final_g_max,
            opt(self.total_bits.map(|b| b.to_string())),
            opt(self.bits_to_target.map(|b| b.to_string())),
            opt(self.rate_slope.map(|s| format!("{s:.16e}"))),
        )
    }
}

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(out, "{}", r.csv_line());
    }
    out
}

#[derive(Debug)]
pub struct RunOutcome {
    pub spec: CompressorSpec,
    pub feedback: Feedback,
    pub seed: u64,
    pub csv: Option<PathBuf>,
    pub error: Option<Error>,
}

#[derive(Debug)]
pub struct SuiteReport {
    pub outcomes: Vec<RunOutcome>,
    pub summary: Vec<SummaryRow>,
    pub summary_path: PathBuf,
}

impl SuiteReport {
    pub fn failures(&self) -> impl Iterator<Item = &RunOutcome> {
        self.outcomes.iter().filter(|o| o.error.is_some())
    }
}

/// Runs every (compressor, feedback, seed) combination, writing one CSV and
/// sidecar per run plus `summary.csv` and `config.txt`. Individual run errors
/// are reported in the summary instead of aborting the suite.
pub fn run_suite(cfg: &ExperimentConfig) -> Result<SuiteReport> {
    let setup = Setup::build(cfg)?;
    let out = &cfg.out_dir;
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("config.txt"), cfg.to_text())?;
    std::fs::write(out.join("graph.txt"), setup.graph.to_edge_list())?;
    let reference = cached_reference(&setup.instance, out, cfg.oracle_iters)?;

    let mut jobs = Vec::new();
    for spec in &cfg.compressors {
        for &feedback in &cfg.feedback {
            for &seed in &cfg.seeds {
                jobs.push((spec.clone(), feedback, seed));
            }
        }
    }
    let outcomes: Vec<RunOutcome> = jobs
        .into_par_iter()
        .map(|(spec, feedback, seed)| {
            let result = execute(cfg, &setup, &reference, &spec, feedback, seed);
            match result {
                Ok(path) => RunOutcome { spec, feedback, seed, csv: Some(path), error: None },
                Err(e) => {
                    log::error!("{} failed: {e}", run_stem(&spec, feedback, seed));
                    RunOutcome { spec, feedback, seed, csv: None, error: Some(e) }
                }
            }
        })
        .collect();

    let mut summary = Vec::with_capacity(outcomes.len());
    for o in &outcomes {
        let name = o.spec.to_string();
        summary.push(match (&o.csv, &o.error) {
            (Some(path), _) => {
                let rows = metrics::parse_csv(&std::fs::read_to_string(path)?)?;
                SummaryRow::from_rows(&name, o.feedback, o.seed, &rows, cfg.target_gap)
            }
            (None, Some(e)) => SummaryRow::failed(&name, o.feedback, o.seed, e),
            (None, None) => unreachable!("a run either wrote its CSV or failed"),
        });
    }
    let summary_path = out.join("summary.csv");
    std::fs::write(&summary_path, summary_csv(&summary))?;
    Ok(SuiteReport { outcomes, summary, summary_path })
}

fn execute(
    cfg: &ExperimentConfig,
    setup: &Setup,
    reference: &ReferenceSolution,
    spec: &CompressorSpec,
    feedback: Feedback,
    seed: u64,
) -> Result<PathBuf> {
    let delta = match cfg.delta {
        DeltaChoice::Value(v) => v,
        DeltaChoice::Auto => delta_auto(cfg, setup, spec, feedback)?,
    };
    let hyper = cfg.hyper(feedback, delta);
    let options = RunOptions {
        record_every: cfg.record_every,
        designated_edge: setup.designated_edge,
        strict_delta: cfg.strict_delta,
        constants: Some(setup.constants.clone()),
        ..RunOptions::default()
    };
    let mut record = run(&setup.instance, spec, &hyper, reference, seed, &options)?;
    let mut echo: Vec<(String, String)> = cfg
        .to_text()
        .lines()
        .filter_map(|l| l.split_once(" = "))
        .map(|(k, v)| (format!("config.{k}"), v.to_string()))
        .collect();
    echo.append(&mut record.meta);
    record.meta = echo;
    record.write(&cfg.out_dir, &run_stem(spec, feedback, seed))
}

//! Flat `key = value` experiment configuration.
//!
//! Lines are `key = value`; `#` starts a comment. Lists are comma-separated.
//! Overrides given as `key=value` strings are applied after the file, so the
//! precedence is overrides > file > defaults.

use std::fmt::Write as _;
use std::path::PathBuf;

use crate::compression::CompressorSpec;
use crate::engine::{Feedback, HyperParams, StepSize};
use crate::error::{Error, Result};
use crate::metrics::DEFAULT_STRIDE;
use crate::problem::{QcqpParams, DEFAULT_ORACLE_ITERS};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DeltaChoice {
    Value(f64),
    /// Midpoint of the admissible interval.
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ZetaChoice {
    Value(f64),
    /// `zeta = 1 / T`.
    InverseHorizon,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub n: usize,
    pub p: f64,
    pub graph_seed: u64,
    pub d: usize,
    /// Per-node ball radius.
    pub radius: f64,
    pub interior_radius: Option<f64>,
    pub c_min: f64,
    pub c_max: f64,
    pub noise_sigma: f64,
    pub instance_seed: u64,
    pub compressors: Vec<CompressorSpec>,
    pub feedback: Vec<Feedback>,
    pub step: StepSize,
    pub delta: DeltaChoice,
    pub horizon: usize,
    pub zeta: ZetaChoice,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    pub record_every: usize,
    pub strict_delta: bool,
    pub oracle_iters: usize,
    /// Gap used for the `bits_to_target` summary column.
    pub target_gap: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let problem = QcqpParams::paper(1);
        Self {
            n: 30,
            p: 0.15,
            graph_seed: 1,
            d: problem.d,
            radius: problem.radius,
            interior_radius: None,
            c_min: problem.c_range.0,
            c_max: problem.c_range.1,
            noise_sigma: 0.0,
            instance_seed: 1,
            compressors: vec![
                CompressorSpec::Identity,
                CompressorSpec::TopK { k: 5 },
                CompressorSpec::SignScaled,
                CompressorSpec::SignTopK { k: 5 },
            ],
            feedback: vec![Feedback::Sample, Feedback::Bandit],
            step: StepSize::Fixed(1e-3),
            delta: DeltaChoice::Value(100.0),
            horizon: 50_000,
            zeta: ZetaChoice::Value(1e-4),
            seeds: vec![1],
            out_dir: PathBuf::from("out"),
            record_every: DEFAULT_STRIDE,
            strict_delta: false,
            oracle_iters: DEFAULT_ORACLE_ITERS,
            target_gap: 1e-2,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e| Error::config(format!("{key}: cannot parse '{value}': {e}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::config(format!("{key}: expected true or false, got '{value}'"))),
    }
}

fn list(value: &str) -> impl Iterator<Item = &str> {
    value.split(',').map(str::trim).filter(|s| !s.is_empty())
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

impl ExperimentConfig {
    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (k, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) =
                line.split_once('=').ok_or_else(|| Error::config(format!("line {}: expected 'key = value'", k + 1)))?;
            self.set(key.trim(), value.trim()).map_err(|e| match e {
                Error::InvalidConfig(msg) => Error::config(format!("line {}: {msg}", k + 1)),
                other => other,
            })?;
        }
        Ok(())
    }

    /// Applies `key=value` overrides in order.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<()> {
        for o in overrides {
            let o = o.as_ref();
            let (key, value) = o.split_once('=').ok_or_else(|| Error::config(format!("override '{o}' is not key=value")))?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "n" => self.n = parse_num(key, value)?,
            "p" => self.p = parse_num(key, value)?,
            "graph_seed" => self.graph_seed = parse_num(key, value)?,
            "d" => self.d = parse_num(key, value)?,
            "radius" => self.radius = parse_num(key, value)?,
            "interior_radius" => {
                self.interior_radius = if value == "auto" { None } else { Some(parse_num(key, value)?) }
            }
            "c_min" => self.c_min = parse_num(key, value)?,
            "c_max" => self.c_max = parse_num(key, value)?,
            "noise_sigma" => self.noise_sigma = parse_num(key, value)?,
            "instance_seed" => self.instance_seed = parse_num(key, value)?,
            "compressors" => self.compressors = list(value).map(str::parse).collect::<Result<_>>()?,
            "feedback" => self.feedback = list(value).map(str::parse).collect::<Result<_>>()?,
            "eta" => self.step = StepSize::Fixed(parse_num(key, value)?),
            "a" => self.step = StepSize::Scaled(parse_num(key, value)?),
            "delta" => {
                self.delta = if value == "auto" { DeltaChoice::Auto } else { DeltaChoice::Value(parse_num(key, value)?) }
            }
            "T" => self.horizon = parse_num(key, value)?,
            "zeta" => {
                self.zeta = if value == "1/T" { ZetaChoice::InverseHorizon } else { ZetaChoice::Value(parse_num(key, value)?) }
            }
            "seeds" => self.seeds = list(value).map(|s| parse_num(key, s)).collect::<Result<_>>()?,
            "out" => self.out_dir = PathBuf::from(value),
            "record_every" => self.record_every = parse_num(key, value)?,
            "strict_delta" => self.strict_delta = parse_bool(key, value)?,
            "oracle_iters" => self.oracle_iters = parse_num(key, value)?,
            "target_gap" => self.target_gap = parse_num(key, value)?,
            _ => return Err(Error::config(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.compressors.is_empty() || self.feedback.is_empty() || self.seeds.is_empty() {
            return Err(Error::config("compressors, feedback and seeds must be nonempty"));
        }
        if self.record_every == 0 {
            return Err(Error::config("record_every must be at least 1"));
        }
        if self.horizon == 0 {
            return Err(Error::config("T must be at least 1"));
        }
        for spec in &self.compressors {
            spec.validate(self.d)?;
        }
        Ok(())
    }

    pub fn problem_params(&self) -> QcqpParams {
        QcqpParams {
            d: self.d,
            radius: self.radius,
            c_range: (self.c_min, self.c_max),
            noise_sigma: self.noise_sigma,
            interior_radius: self.interior_radius,
            seed: self.instance_seed,
        }
    }

    pub fn zeta_value(&self) -> f64 {
        match self.zeta {
            ZetaChoice::Value(z) => z,
            ZetaChoice::InverseHorizon => 1.0 / self.horizon as f64,
        }
    }

    /// Hyperparameters for one feedback mode with an explicit `delta`.
    pub fn hyper(&self, feedback: Feedback, delta: f64) -> HyperParams {
        HyperParams { step: self.step, delta, horizon: self.horizon, zeta: self.zeta_value(), feedback }
    }

    /// Canonical text form; parsing it yields an equal config.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        kv("n", self.n.to_string());
        kv("p", self.p.to_string());
        kv("graph_seed", self.graph_seed.to_string());
        kv("d", self.d.to_string());
        kv("radius", self.radius.to_string());
        kv("interior_radius", self.interior_radius.map_or("auto".into(), |r| r.to_string()));
        kv("c_min", self.c_min.to_string());
        kv("c_max", self.c_max.to_string());
        kv("noise_sigma", self.noise_sigma.to_string());
        kv("instance_seed", self.instance_seed.to_string());
        kv("compressors", join(&self.compressors));
        kv("feedback", join(&self.feedback));
        match self.step {
            StepSize::Fixed(eta) => kv("eta", eta.to_string()),
            StepSize::Scaled(a) => kv("a", a.to_string()),
        }
        kv(
            "delta",
            match self.delta {
                DeltaChoice::Value(v) => v.to_string(),
                DeltaChoice::Auto => "auto".into(),
            },
        );
        kv("T", self.horizon.to_string());
        kv(
            "zeta",
            match self.zeta {
                ZetaChoice::Value(v) => v.to_string(),
                ZetaChoice::InverseHorizon => "1/T".into(),
            },
        );
        kv("seeds", join(&self.seeds));
        kv("out", self.out_dir.display().to_string());
        kv("record_every", self.record_every.to_string());
        kv("strict_delta", self.strict_delta.to_string());
        kv("oracle_iters", self.oracle_iters.to_string());
        kv("target_gap", self.target_gap.to_string());
        out
    }
}

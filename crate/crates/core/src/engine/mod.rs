//! Synchronous simulation of compressed decentralized primal-dual optimization.
//!
//! Each iteration has two phases. In the exchange phase every node compresses
//! the gap between its raw parameter and its public copy, broadcasts the
//! message, and every holder of that copy applies the same update. In the
//! step phase every node reads the iteration's snapshot, forms its primal
//! direction (sampled gradient or two-point estimate) and its dual ascent
//! values, and all updates are committed together.

mod bandit;
mod delta;

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use bandit::{bandit_gradient_estimate, constraint_term, two_point_term};
pub use delta::{delta_coefficient, delta_interval, min_horizon};

use crate::compression::CompressorSpec;
use crate::error::{Error, Result};
use crate::metrics::{self, InvariantSummary, RecordRow, RunRecord, TracePoint};
use crate::problem::{
    estimate_constants, project_feasible, sample_ball, shrunk_bound, ConstantEstimates, QcqpInstance,
    ReferenceSolution,
};

const DIVERGENCE_LIMIT: f64 = 1e12;
const CONSTANT_SAMPLES: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Feedback {
    Sample,
    Bandit,
}

impl fmt::Display for Feedback {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Feedback::Sample => "sample",
            Feedback::Bandit => "bandit",
        })
    }
}

impl FromStr for Feedback {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "sample" => Ok(Feedback::Sample),
            "bandit" => Ok(Feedback::Bandit),
            other => Err(Error::config(format!("unknown feedback mode '{other}' (expected sample or bandit)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepSize {
    Fixed(f64),
    /// `eta = a / sqrt(T)`.
    Scaled(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HyperParams {
    pub step: StepSize,
    pub delta: f64,
    pub horizon: usize,
    pub zeta: f64,
    pub feedback: Feedback,
}

impl HyperParams {
    /// `eta = 0.001`, `delta = 100`, `T = 50_000`, `zeta = 1e-4`.
    pub fn paper(feedback: Feedback) -> Self {
        Self { step: StepSize::Fixed(1e-3), delta: 100.0, horizon: 50_000, zeta: 1e-4, feedback }
    }

    pub fn eta(&self) -> f64 {
        match self.step {
            StepSize::Fixed(eta) => eta,
            StepSize::Scaled(a) => a / (self.horizon as f64).sqrt(),
        }
    }

    pub fn validate(&self, instance: &QcqpInstance) -> Result<()> {
        let eta = self.eta();
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(Error::config(format!("step size must be positive and finite, got {eta}")));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(Error::config(format!("delta must be positive and finite, got {}", self.delta)));
        }
        if self.horizon < 1 {
            return Err(Error::config("horizon T must be at least 1"));
        }
        if self.feedback == Feedback::Bandit {
            let r = instance.interior_radius();
            if !(self.zeta > 0.0 && self.zeta < r) {
                return Err(Error::config(format!("bandit mode needs 0 < zeta < r = {r}, got zeta = {}", self.zeta)));
            }
        }
        Ok(())
    }

    /// Norm bound of the set iterates are projected onto: the ball itself for
    /// sampled gradients, the shrunken ball for two-point queries.
    pub fn iterate_bound(&self, instance: &QcqpInstance) -> Result<f64> {
        match self.feedback {
            Feedback::Sample => Ok(instance.radius()),
            Feedback::Bandit => shrunk_bound(instance.radius(), self.zeta, instance.interior_radius()),
        }
    }

    /// Admissible `delta` range for these settings; a too-short horizon is
    /// reported with the minimal `T` when the step is `a / sqrt(T)`.
    pub fn delta_interval(&self, m: usize, g_tilde: f64, omega: f64) -> Result<(f64, f64)> {
        delta_interval(self.eta(), m, g_tilde, omega, self.feedback).map_err(|e| match (e, self.step) {
            (Error::HorizonTooShort { max_eta, .. }, StepSize::Scaled(a)) => Error::HorizonTooShort {
                max_eta,
                min_horizon: Some(min_horizon(a, m, g_tilde, omega, self.feedback)),
            },
            (e, _) => e,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub record_every: usize,
    /// Edge whose constraint value is reported as `g_edge`; defaults to the first edge.
    pub designated_edge: Option<(usize, usize)>,
    /// Reject `delta` outside the theoretical interval.
    pub strict_delta: bool,
    /// Check `||lambda|| <= C / (delta eta)` at every iteration.
    pub check_dual_bound: bool,
    /// Keep every-iteration diagnostics in the record.
    pub trace: bool,
    /// Assumption constants; estimated from the instance when absent.
    pub constants: Option<ConstantEstimates>,
    /// Starting raw parameters; drawn uniformly from the iterate ball when absent.
    pub initial: Option<Vec<DVector<f64>>>,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            record_every: metrics::DEFAULT_STRIDE,
            designated_edge: None,
            strict_delta: false,
            check_dual_bound: false,
            trace: false,
            constants: None,
            initial: None,
        }
    }
}

/// Local state of one node. Neighbor-indexed vectors follow `graph.neighbors(i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeState {
    pub raw: DVector<f64>,
    pub own_copy: DVector<f64>,
    pub neighbor_copies: Vec<DVector<f64>>,
    pub projected: DVector<f64>,
    pub neighbor_projected: Vec<DVector<f64>>,
    pub running_avg: DVector<f64>,
}

/// Independent generator for node `i` (streams start at 1; stream 0 draws the
/// initial point).
pub fn node_rng(seed: u64, i: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(i as u64 + 1);
    rng
}

pub struct Simulation<'a> {
    instance: &'a QcqpInstance,
    spec: CompressorSpec,
    hyper: HyperParams,
    eta: f64,
    bound: f64,
    nodes: Vec<NodeState>,
    lambda: Vec<f64>,
    rngs: Vec<ChaCha8Rng>,
    t: usize,
    bits: u64,
    invariants: InvariantSummary,
}

impl<'a> Simulation<'a> {
    pub fn new(instance: &'a QcqpInstance, spec: CompressorSpec, hyper: HyperParams, seed: u64) -> Result<Self> {
        Self::with_initial(instance, spec, hyper, seed, None)
    }

    /// Like [`new`](Self::new) with explicit starting raw parameters, which are
    /// projected onto the iterate ball.
    pub fn with_initial(
        instance: &'a QcqpInstance,
        spec: CompressorSpec,
        hyper: HyperParams,
        seed: u64,
        initial: Option<&[DVector<f64>]>,
    ) -> Result<Self> {
        hyper.validate(instance)?;
        spec.validate(instance.dim())?;
        let bound = hyper.iterate_bound(instance)?;
        let graph = instance.graph();
        let d = instance.dim();
        if let Some(xs) = initial {
            if xs.len() != graph.node_count() || xs.iter().any(|x| x.len() != d) {
                return Err(Error::config("initial point must have one d-vector per node"));
            }
        }
        let mut init_rng = ChaCha8Rng::seed_from_u64(seed);
        let nodes = (0..graph.node_count())
            .map(|i| {
                let deg = graph.degree(i);
                let raw = match initial {
                    Some(xs) => project_feasible(&xs[i], bound),
                    None => sample_ball(&mut init_rng, d, bound),
                };
                NodeState {
                    raw,
                    own_copy: DVector::zeros(d),
                    neighbor_copies: vec![DVector::zeros(d); deg],
                    projected: DVector::zeros(d),
                    neighbor_projected: vec![DVector::zeros(d); deg],
                    running_avg: DVector::zeros(d),
                }
            })
            .collect();
        Ok(Self {
            instance,
            spec,
            hyper,
            eta: hyper.eta(),
            bound,
            nodes,
            lambda: vec![0.0; instance.index().len()],
            rngs: (0..graph.node_count()).map(|i| node_rng(seed, i)).collect(),
            t: 0,
            bits: 0,
            invariants: InvariantSummary::default(),
        })
    }

    pub fn iteration(&self) -> usize {
        self.t
    }

    pub fn nodes(&self) -> &[NodeState] {
        &self.nodes
    }

    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    pub fn total_bits(&self) -> u64 {
        self.bits
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn invariants(&self) -> &InvariantSummary {
        &self.invariants
    }

    pub fn running_averages(&self) -> Vec<DVector<f64>> {
        self.nodes.iter().map(|n| n.running_avg.clone()).collect()
    }

    /// `sum_i ||x~_i - x^_i||^2`.
    pub fn compression_error(&self) -> f64 {
        self.nodes.iter().map(|n| (&n.raw - &n.own_copy).norm_squared()).sum()
    }

    pub fn lambda_norm(&self) -> f64 {
        self.lambda.iter().map(|l| l * l).sum::<f64>().sqrt()
    }

    /// Starts the next iteration: compress, broadcast, update every copy and
    /// re-project. The first round is sent uncompressed. Returns the bits sent
    /// (one message per directed edge).
    pub fn exchange_round(&mut self) -> Result<u64> {
        self.t += 1;
        let graph = self.instance.graph();
        let d = self.instance.dim();
        // A lossless round carries the raw vector itself, so receivers assign
        // instead of accumulating and the copies equal the raw values exactly.
        let lossless = self.t == 1 || self.spec == CompressorSpec::Identity;
        let mut messages = Vec::with_capacity(self.nodes.len());
        let mut round_bits = 0u64;
        for (i, node) in self.nodes.iter().enumerate() {
            let (q, bits) = if lossless {
                (node.raw.clone(), CompressorSpec::Identity.message_bits(d))
            } else {
                let residual = &node.raw - &node.own_copy;
                let c = self.spec.compress(residual.as_slice(), &mut self.rngs[i])?;
                (DVector::from_vec(c.values), c.bits)
            };
            round_bits += bits * graph.degree(i) as u64;
            messages.push(q);
        }
        let apply = |copy: &mut DVector<f64>, q: &DVector<f64>| {
            if lossless {
                copy.copy_from(q);
            } else {
                *copy += q;
            }
        };
        for (i, node) in self.nodes.iter_mut().enumerate() {
            apply(&mut node.own_copy, &messages[i]);
            for (pos, &j) in graph.neighbors(i).iter().enumerate() {
                apply(&mut node.neighbor_copies[pos], &messages[j]);
            }
        }
        for i in 0..self.nodes.len() {
            for (pos, &j) in graph.neighbors(i).iter().enumerate() {
                if self.nodes[i].neighbor_copies[pos] != self.nodes[j].own_copy {
                    self.invariants.copies_coherent = false;
                }
            }
        }
        let bound = self.bound;
        for node in &mut self.nodes {
            node.projected = project_feasible(&node.own_copy, bound);
            node.neighbor_projected = node.neighbor_copies.iter().map(|c| project_feasible(c, bound)).collect();
            let excess = node.projected.norm() - bound;
            self.invariants.feasibility_excess = self.invariants.feasibility_excess.max(excess);
        }
        self.bits += round_bits;
        Ok(round_bits)
    }

    /// `x_bar = x / t + (t - 1) / t * x_bar`.
    pub fn update_running_average(&mut self) {
        let t = self.t as f64;
        for node in &mut self.nodes {
            node.running_avg = &node.projected / t + &node.running_avg * ((t - 1.0) / t);
        }
    }

    /// Primal and dual updates for the current iteration in node order.
    pub fn step(&mut self) -> Result<f64> {
        let order: Vec<usize> = (0..self.nodes.len()).collect();
        self.step_in_order(&order)
    }

    /// Same as [`step`](Self::step) but evaluates nodes in `order`; all reads
    /// come from the iteration snapshot, so the order cannot affect the result.
    /// Returns `sum_i ||p_i||^2`.
    pub fn step_in_order(&mut self, order: &[usize]) -> Result<f64> {
        let n = self.nodes.len();
        let mut seen = vec![false; n];
        if order.len() != n || order.iter().any(|&i| i >= n || std::mem::replace(&mut seen[i], true)) {
            return Err(Error::config("node order must be a permutation"));
        }
        let inst = self.instance;
        let index = inst.index();
        let (eta, delta) = (self.eta, self.hyper.delta);
        let mut directions: Vec<Option<DVector<f64>>> = vec![None; n];
        let mut next_lambda = self.lambda.clone();
        for &i in order {
            let node = &self.nodes[i];
            let slots = index.node_slots(i);
            let lambda_row = &self.lambda[slots.clone()];
            let neighbor_x: Vec<&DVector<f64>> = node.neighbor_projected.iter().collect();
            let rng = &mut self.rngs[i];
            let mut p = match self.hyper.feedback {
                Feedback::Sample => inst.local_grad(i, &node.projected, rng),
                Feedback::Bandit => two_point_term(inst, i, &node.projected, self.hyper.zeta, inst.radius(), rng)?,
            };
            p += constraint_term(&node.projected, &neighbor_x, lambda_row);
            for (k, slot) in slots.enumerate() {
                let g = inst.slot_value(slot, &node.projected, neighbor_x[k]);
                let lam = self.lambda[slot];
                next_lambda[slot] = (lam + eta * (g - delta * eta * lam)).max(0.0);
            }
            directions[i] = Some(p);
        }

        let mut grad_sq = 0.0;
        for (i, (node, p)) in self.nodes.iter_mut().zip(directions).enumerate() {
            let p = p.expect("every node visited");
            if p.iter().any(|v| !v.is_finite() || v.abs() > DIVERGENCE_LIMIT) {
                return Err(Error::NumericalDivergence {
                    iteration: self.t,
                    detail: format!("primal direction of node {i} is out of range"),
                });
            }
            grad_sq += p.norm_squared();
            node.raw = project_feasible(&(&node.raw - p * eta), self.bound);
        }
        if let Some(bad) = next_lambda.iter().position(|l| !l.is_finite() || l.abs() > DIVERGENCE_LIMIT) {
            return Err(Error::NumericalDivergence {
                iteration: self.t,
                detail: format!("dual variable {bad} = {}", next_lambda[bad]),
            });
        }
        self.lambda = next_lambda;
        self.check_duals();
        Ok(grad_sq)
    }

    fn check_duals(&mut self) {
        let index = self.instance.index();
        for (slot, &l) in self.lambda.iter().enumerate() {
            if l < 0.0 {
                self.invariants.dual_nonnegative = false;
            }
            if l.to_bits() != self.lambda[index.mirror(slot)].to_bits() {
                self.invariants.dual_symmetric = false;
            }
        }
        self.invariants.max_lambda_norm = self.invariants.max_lambda_norm.max(self.lambda_norm());
    }

    /// Enables the `||lambda|| <= bound` check for all later iterations.
    pub fn set_dual_bound(&mut self, bound: f64) {
        self.invariants.dual_bound = Some(bound);
        self.invariants.dual_bound_held = Some(self.lambda_norm() <= bound + 1e-9);
    }

    fn check_dual_bound(&mut self) {
        if let Some(bound) = self.invariants.dual_bound {
            if self.lambda_norm() > bound + 1e-9 {
                self.invariants.dual_bound_held = Some(false);
            }
        }
    }

    /// One full iteration: exchange, running average, step. Returns the trace point.
    pub fn advance(&mut self) -> Result<TracePoint> {
        self.exchange_round()?;
        self.update_running_average();
        let s_t = self.compression_error();
        let lambda_norm = self.lambda_norm();
        let grad_sq = self.step()?;
        self.check_dual_bound();
        Ok(TracePoint { s_t, grad_sq, lambda_norm })
    }
}

fn stacked_distance(a: &[DVector<f64>], b: &[DVector<f64>]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm_squared()).sum::<f64>().sqrt()
}

/// Runs `hyper.horizon` iterations and records metrics at `t = 1`, every
/// `record_every` iterations and at `T`.
pub fn run(
    instance: &QcqpInstance,
    spec: &CompressorSpec,
    hyper: &HyperParams,
    reference: &ReferenceSolution,
    seed: u64,
    options: &RunOptions,
) -> Result<RunRecord> {
    let graph = instance.graph();
    let m = instance.index().len();
    let d = instance.dim();
    let mut sim = Simulation::with_initial(instance, spec.clone(), *hyper, seed, options.initial.as_deref())?;

    let constants = match &options.constants {
        Some(c) => c.clone(),
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(u64::MAX);
            estimate_constants(instance, CONSTANT_SAMPLES, &mut rng)?
        }
    };
    let omega = spec.omega(d);
    let interval = match hyper.delta_interval(m, constants.g_tilde, omega) {
        Ok((lo, hi)) => {
            log::info!("delta interval [{lo:.6e}, {hi:.6e}], delta = {}", hyper.delta);
            if options.strict_delta && !(hyper.delta >= lo && hyper.delta <= hi) {
                return Err(Error::config(format!(
                    "delta = {} lies outside the admissible interval [{lo:.6e}, {hi:.6e}]",
                    hyper.delta
                )));
            }
            Some((lo, hi))
        }
        Err(e) if options.strict_delta => return Err(e),
        Err(e) => {
            log::info!("delta interval unavailable: {e}");
            None
        }
    };
    if options.check_dual_bound {
        sim.set_dual_bound(constants.c / (hyper.delta * sim.eta()));
    }

    let designated = match options.designated_edge {
        Some((i, j)) => {
            instance.index().slot(graph, i, j)?;
            Some((i.min(j), i.max(j)))
        }
        None => graph.edges().first().copied(),
    };
    let x_star_norm = reference.x_star.iter().map(|x| x.norm_squared()).sum::<f64>().sqrt();
    let mut initial_gap = f64::NAN;
    let mut rows = Vec::new();
    let mut trace = options.trace.then(|| Vec::with_capacity(hyper.horizon));
    let stride = options.record_every.max(1);

    for t in 1..=hyper.horizon {
        sim.exchange_round()?;
        sim.update_running_average();
        let s_t = sim.compression_error();
        let lambda_norm = sim.lambda_norm();
        if metrics::is_record_point(t, hyper.horizon, stride) {
            let avg = sim.running_averages();
            let cost = instance.total_cost(&avg);
            if t == 1 {
                initial_gap = cost - reference.f_star;
            }
            let dist = stacked_distance(&avg, &reference.x_star);
            let g_edge = designated
                .map(|(i, j)| instance.constraint_value(i, j, &avg[i], &avg[j]))
                .transpose()?
                .unwrap_or(f64::NAN);
            let g_max = if graph.edge_count() == 0 { f64::NAN } else { instance.max_constraint(&avg) };
            rows.push(RecordRow {
                t,
                rel_gap: metrics::relative_cost_gap(cost, reference.f_star, initial_gap)?,
                rel_err: if x_star_norm > 0.0 { dist / x_star_norm } else { dist },
                g_edge,
                g_max,
                cum_bits: sim.total_bits(),
                s_t,
                lambda_norm,
            });
        }
        let grad_sq = sim.step()?;
        sim.check_dual_bound();
        if let Some(tr) = trace.as_mut() {
            tr.push(TracePoint { s_t, grad_sq, lambda_norm });
        }
    }

    let invariants = sim.invariants().clone();
    let interval_text = match interval {
        Some((lo, hi)) => format!("{lo:e},{hi:e}"),
        None => "empty".into(),
    };
    let mut meta: Vec<(String, String)> = vec![
        ("seed".into(), seed.to_string()),
        ("compressor".into(), spec.to_string()),
        ("omega".into(), omega.to_string()),
        ("feedback".into(), hyper.feedback.to_string()),
        ("eta".into(), sim.eta().to_string()),
        ("delta".into(), hyper.delta.to_string()),
        ("delta_interval".into(), interval_text),
        ("T".into(), hyper.horizon.to_string()),
        ("zeta".into(), hyper.zeta.to_string()),
        ("record_every".into(), stride.to_string()),
        ("iterate_bound".into(), sim.bound().to_string()),
        ("n".into(), graph.node_count().to_string()),
        ("d".into(), d.to_string()),
        ("edges".into(), graph.edge_count().to_string()),
        ("connected".into(), graph.is_connected().to_string()),
        ("f_star".into(), reference.f_star.to_string()),
        ("oracle_max_violation".into(), reference.max_violation.to_string()),
        ("oracle_movement".into(), reference.movement.to_string()),
        ("initial_gap".into(), initial_gap.to_string()),
        ("total_bits".into(), sim.total_bits().to_string()),
        ("dual_symmetric".into(), invariants.dual_symmetric.to_string()),
        ("dual_nonnegative".into(), invariants.dual_nonnegative.to_string()),
        ("copies_coherent".into(), invariants.copies_coherent.to_string()),
        ("feasibility_excess".into(), invariants.feasibility_excess.to_string()),
        ("max_lambda_norm".into(), invariants.max_lambda_norm.to_string()),
    ];
    if let Some((i, j)) = designated {
        meta.push(("designated_edge".into(), format!("{i}-{j}")));
    }
    if let (Some(b), Some(held)) = (invariants.dual_bound, invariants.dual_bound_held) {
        meta.push(("dual_bound".into(), b.to_string()));
        meta.push(("dual_bound_held".into(), held.to_string()));
    }
    Ok(RunRecord {
        rows,
        final_average: sim.running_averages(),
        invariants,
        trace,
        initial_gap,
        designated_edge: designated,
        connected: graph.is_connected(),
        total_bits: sim.total_bits(),
        meta,
    })
}

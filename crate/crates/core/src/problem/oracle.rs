//! High-accuracy reference solution `x*` used to normalize the metrics.
//!
//! Solves the full (centralized) QCQP with an augmented Lagrangian method over
//! the edge constraints; each subproblem is minimized over the product of
//! balls by accelerated projected gradient with backtracking and adaptive
//! restart. Everything is deterministic.

use nalgebra::DVector;

use super::{project_feasible, QcqpInstance};
use crate::error::{Error, Result};

pub const DEFAULT_ORACLE_ITERS: usize = 2_000_000;

const MOVEMENT_TOL: f64 = 1e-8;
const VIOLATION_TOL: f64 = 1e-3;
const INNER_TOL: f64 = 1e-10;
const MAX_PENALTY: f64 = 1e4;

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSolution {
    pub x_star: Vec<DVector<f64>>,
    pub f_star: f64,
    /// Largest positive part of `g_ij(x*)`.
    pub max_violation: f64,
    /// Movement of `x*` over the last outer update.
    pub movement: f64,
    /// Multiplier per unordered edge, aligned with `graph.edges()`.
    pub edge_multipliers: Vec<f64>,
    pub iterations: usize,
}

const REFERENCE_MAGIC: &str = "qcqp-reference v1";

impl ReferenceSolution {
    /// Plain-text form; floats round-trip exactly.
    pub fn to_text(&self) -> String {
        let join = |v: &DVector<f64>| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
        let mut out = format!(
            "{REFERENCE_MAGIC}\nf_star {}\nmax_violation {}\nmovement {}\niterations {}\nnodes {}\n",
            self.f_star,
            self.max_violation,
            self.movement,
            self.iterations,
            self.x_star.len()
        );
        for x in &self.x_star {
            out.push_str(&join(x));
            out.push('\n');
        }
        let multipliers = DVector::from_column_slice(&self.edge_multipliers);
        out.push_str(&format!("multipliers {}\n", join(&multipliers)));
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let lines: Vec<&str> = text.lines().collect();
        let get = |k: usize| lines.get(k).map(|l| l.trim()).ok_or_else(|| Error::parse(k + 1, "unexpected end of input"));
        if get(0)? != REFERENCE_MAGIC {
            return Err(Error::parse(1, format!("missing '{REFERENCE_MAGIC}' header")));
        }
        let field = |k: usize, key: &str| -> Result<&str> {
            get(k)?.strip_prefix(key).map(str::trim).ok_or_else(|| Error::parse(k + 1, format!("expected '{key}'")))
        };
        let float = |k: usize, s: &str| s.parse::<f64>().map_err(|e| Error::parse(k + 1, format!("'{s}': {e}")));
        let f_star = float(1, field(1, "f_star")?)?;
        let max_violation = float(2, field(2, "max_violation")?)?;
        let movement = float(3, field(3, "movement")?)?;
        let iterations = field(4, "iterations")?.parse().map_err(|e| Error::parse(5, format!("{e}")))?;
        let nodes: usize = field(5, "nodes")?.parse().map_err(|e| Error::parse(6, format!("{e}")))?;
        let mut x_star = Vec::with_capacity(nodes);
        for k in 6..6 + nodes {
            let v = get(k)?.split_whitespace().map(|s| float(k, s)).collect::<Result<Vec<f64>>>()?;
            x_star.push(DVector::from_vec(v));
        }
        let edge_multipliers = field(6 + nodes, "multipliers")?
            .split_whitespace()
            .map(|s| float(6 + nodes, s))
            .collect::<Result<Vec<f64>>>()?;
        Ok(Self { x_star, f_star, max_violation, movement, edge_multipliers, iterations })
    }
}

struct Penalized<'a> {
    inst: &'a QcqpInstance,
    /// Offset per unordered edge.
    offsets: Vec<f64>,
    multipliers: Vec<f64>,
    penalty: f64,
}

impl Penalized<'_> {
    fn edge_value(&self, e: usize, xs: &[DVector<f64>]) -> f64 {
        let (i, j) = self.inst.graph().edges()[e];
        (&xs[i] - &xs[j]).norm_squared() + self.offsets[e]
    }

    fn value(&self, xs: &[DVector<f64>]) -> f64 {
        let mut total = self.inst.total_cost(xs);
        for e in 0..self.offsets.len() {
            let shifted = (self.multipliers[e] + self.penalty * self.edge_value(e, xs)).max(0.0);
            total += (shifted * shifted - self.multipliers[e] * self.multipliers[e]) / (2.0 * self.penalty);
        }
        total
    }

    fn gradient(&self, xs: &[DVector<f64>]) -> Vec<DVector<f64>> {
        let mut grad: Vec<DVector<f64>> = xs.iter().enumerate().map(|(i, x)| self.inst.exact_grad(i, x)).collect();
        for (e, &(i, j)) in self.inst.graph().edges().iter().enumerate() {
            let weight = (self.multipliers[e] + self.penalty * self.edge_value(e, xs)).max(0.0);
            if weight > 0.0 {
                let diff = (&xs[i] - &xs[j]) * (2.0 * weight);
                grad[i] += &diff;
                grad[j] -= &diff;
            }
        }
        grad
    }
}

fn dist_sq(a: &[DVector<f64>], b: &[DVector<f64>]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm_squared()).sum()
}

/// Accelerated projected gradient on the penalized subproblem. Returns the
/// number of iterations used and the final gradient-mapping norm.
fn minimize_subproblem(
    problem: &Penalized<'_>,
    xs: &mut Vec<DVector<f64>>,
    lipschitz: &mut f64,
    budget: usize,
) -> (usize, f64) {
    let radius = problem.inst.radius();
    let project = |v: Vec<DVector<f64>>| -> Vec<DVector<f64>> { v.iter().map(|x| project_feasible(x, radius)).collect() };
    let mut y = xs.clone();
    let mut momentum = 1.0f64;
    let mut value = problem.value(xs);
    let mut mapping = f64::INFINITY;
    let mut used = 0;
    while used < budget {
        used += 1;
        let grad = problem.gradient(&y);
        let fy = problem.value(&y);
        let (candidate, f_candidate) = loop {
            let step = 1.0 / *lipschitz;
            let cand = project(y.iter().zip(&grad).map(|(yi, gi)| yi - gi * step).collect());
            let d_sq = dist_sq(&cand, &y);
            let linear: f64 = cand.iter().zip(&y).zip(&grad).map(|((c, yi), g)| g.dot(&(c - yi))).sum();
            let fc = problem.value(&cand);
            let slack = 1e-12 * fy.abs().max(1.0);
            if fc <= fy + linear + 0.5 * *lipschitz * d_sq + slack || *lipschitz > 1e15 {
                mapping = *lipschitz * d_sq.sqrt();
                break (cand, fc);
            }
            *lipschitz *= 2.0;
        };
        if f_candidate > value && momentum > 1.0 {
            // adaptive restart: drop momentum and retry from the last accepted point
            momentum = 1.0;
            y = xs.clone();
            continue;
        }
        let next_momentum = 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt());
        let beta = (momentum - 1.0) / next_momentum;
        y = candidate.iter().zip(xs.iter()).map(|(c, x)| c + (c - x) * beta).collect();
        *xs = candidate;
        value = f_candidate;
        momentum = next_momentum;
        *lipschitz *= 0.95;
        let scale = 1.0 + xs.iter().enumerate().map(|(i, x)| problem.inst.exact_grad(i, x).norm()).fold(0.0, f64::max);
        if mapping <= INNER_TOL * scale {
            break;
        }
    }
    (used, mapping)
}

/// Computes `x*` and `F(x*)` to high accuracy.
///
/// Stops once the outer update moves `x*` by less than `1e-8` with all
/// constraint violations below `1e-3`; otherwise fails with the final residuals
/// after `max_iters` inner iterations.
pub fn reference_solution(inst: &QcqpInstance, max_iters: usize) -> Result<ReferenceSolution> {
    let graph = inst.graph();
    let offsets: Vec<f64> = graph.edges().iter().map(|&(i, j)| inst.offset(i, j).expect("edge")).collect();
    let mut problem = Penalized { inst, offsets, multipliers: vec![0.0; graph.edge_count()], penalty: 1.0 };
    let mut xs: Vec<DVector<f64>> = (0..inst.node_count()).map(|_| DVector::zeros(inst.dim())).collect();
    let mut lipschitz = 1.0;
    let mut iterations = 0;
    let mut movement = f64::INFINITY;
    let mut previous_violation = f64::INFINITY;
    let max_violation = |xs: &[DVector<f64>], p: &Penalized<'_>| {
        (0..p.offsets.len()).map(|e| p.edge_value(e, xs).max(0.0)).fold(0.0, f64::max)
    };

    while iterations < max_iters {
        let before = xs.clone();
        let (used, mapping) = minimize_subproblem(&problem, &mut xs, &mut lipschitz, max_iters - iterations);
        iterations += used;
        movement = dist_sq(&xs, &before).sqrt();

        for e in 0..problem.offsets.len() {
            problem.multipliers[e] = (problem.multipliers[e] + problem.penalty * problem.edge_value(e, &xs)).max(0.0);
        }
        let violation = max_violation(&xs, &problem);
        let scale = 1.0 + xs.iter().enumerate().map(|(i, x)| inst.exact_grad(i, x).norm()).fold(0.0, f64::max);
        let inner_done = mapping <= INNER_TOL * scale;
        if inner_done && movement < MOVEMENT_TOL && violation <= 1e-9 {
            break;
        }
        if violation > 0.25 * previous_violation && problem.penalty < MAX_PENALTY {
            problem.penalty *= 10.0;
        }
        previous_violation = violation;
    }

    let violation = max_violation(&xs, &problem);
    if movement >= MOVEMENT_TOL || violation > VIOLATION_TOL {
        return Err(Error::OracleFailure { iterations, movement, max_violation: violation });
    }
    Ok(ReferenceSolution {
        f_star: inst.total_cost(&xs),
        x_star: xs,
        max_violation: violation,
        movement,
        edge_multipliers: problem.multipliers,
        iterations,
    })
}

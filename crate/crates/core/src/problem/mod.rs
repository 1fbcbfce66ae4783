//! Quadratic objectives with pairwise proximity constraints over a graph.
//!
//! Node `i` minimizes `f_i(x) = x' A_i x + b_i' x` over the ball
//! `||x|| <= radius`, subject to `g_ij(x_i, x_j) = ||x_i - x_j||^2 + c_ij <= 0`
//! for every neighbor `j`. Stochastic gradients add isotropic Gaussian noise
//! to the linear term.

mod io;
mod oracle;

pub use oracle::{reference_solution, ReferenceSolution, DEFAULT_ORACLE_ITERS};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::topology::{ConstraintIndex, Graph};

/// Parameters for [`QcqpInstance::generate`].
#[derive(Debug, Clone, PartialEq)]
pub struct QcqpParams {
    pub d: usize,
    /// Radius of each node's feasible ball (`R / sqrt(n)`).
    pub radius: f64,
    /// Interval the proximity offsets `c_ij` are drawn from; must be nonpositive.
    pub c_range: (f64, f64),
    pub noise_sigma: f64,
    /// Interior ball radius around the origin; defaults to `radius`.
    pub interior_radius: Option<f64>,
    pub seed: u64,
}

impl QcqpParams {
    /// Setup of the 30-node experiment: d = 10, radius 40/sqrt(30), c in [-5, -3].
    pub fn paper(seed: u64) -> Self {
        Self {
            d: 10,
            radius: 40.0 / 30f64.sqrt(),
            c_range: (-5.0, -3.0),
            noise_sigma: 0.0,
            interior_radius: None,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QcqpInstance {
    graph: Graph,
    index: ConstraintIndex,
    d: usize,
    radius: f64,
    interior_radius: f64,
    noise_sigma: f64,
    a: Vec<DMatrix<f64>>,
    b: Vec<DVector<f64>>,
    /// Offset `c_ij` per directed constraint slot.
    c: Vec<f64>,
}

impl QcqpInstance {
    /// Draws `A_i = M M'` with `M` a `d x d` standard normal matrix, `b_i` Gaussian
    /// with one `(mean, variance)` pair per node drawn from `U[0, 1]`, and one `c_ij`
    /// per edge uniform on `c_range`.
    pub fn generate(graph: &Graph, params: &QcqpParams) -> Result<Self> {
        if params.d == 0 {
            return Err(Error::config("dimension d must be at least 1"));
        }
        let (lo, hi) = params.c_range;
        if !(lo <= hi) || hi > 0.0 {
            return Err(Error::config(format!(
                "c_range [{lo}, {hi}] must be a nonempty interval of nonpositive values"
            )));
        }
        let d = params.d;
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let mut a = Vec::with_capacity(graph.node_count());
        let mut b = Vec::with_capacity(graph.node_count());
        for _ in 0..graph.node_count() {
            let m = DMatrix::<f64>::from_fn(d, d, |_, _| standard_normal(&mut rng));
            let w = &m * m.transpose();
            a.push(DMatrix::from_fn(d, d, |r, c| if r <= c { w[(r, c)] } else { w[(c, r)] }));
            let mean: f64 = rng.random();
            let std = rng.random::<f64>().sqrt();
            b.push(DVector::from_fn(d, |_, _| mean + std * standard_normal(&mut rng)));
        }
        let edge_c: Vec<f64> = graph.edges().iter().map(|_| lo + (hi - lo) * rng.random::<f64>()).collect();
        let c = Self::slot_offsets(graph, &edge_c);
        Self::from_parts(
            graph.clone(),
            a,
            b,
            c,
            params.radius,
            params.interior_radius.unwrap_or(params.radius),
            params.noise_sigma,
        )
    }

    fn slot_offsets(graph: &Graph, edge_c: &[f64]) -> Vec<f64> {
        let index = ConstraintIndex::new(graph);
        index
            .iter()
            .map(|(_, (i, j))| {
                let key = (i.min(j), i.max(j));
                let e = graph.edges().binary_search(&key).expect("edge exists");
                edge_c[e]
            })
            .collect()
    }

    /// Assembles an instance from explicit data; `edge_c` is indexed like `graph.edges()`.
    pub fn from_edge_data(
        graph: Graph,
        a: Vec<DMatrix<f64>>,
        b: Vec<DVector<f64>>,
        edge_c: &[f64],
        radius: f64,
        interior_radius: f64,
        noise_sigma: f64,
    ) -> Result<Self> {
        if edge_c.len() != graph.edge_count() {
            return Err(Error::config("one offset per edge required"));
        }
        let c = Self::slot_offsets(&graph, edge_c);
        Self::from_parts(graph, a, b, c, radius, interior_radius, noise_sigma)
    }

    fn from_parts(
        graph: Graph,
        a: Vec<DMatrix<f64>>,
        b: Vec<DVector<f64>>,
        c: Vec<f64>,
        radius: f64,
        interior_radius: f64,
        noise_sigma: f64,
    ) -> Result<Self> {
        let n = graph.node_count();
        if a.len() != n || b.len() != n {
            return Err(Error::config("one cost term per node required"));
        }
        let d = b.first().map_or(1, |v| v.len());
        if d == 0 {
            return Err(Error::config("dimension d must be at least 1"));
        }
        for (i, (ai, bi)) in a.iter().zip(&b).enumerate() {
            if ai.nrows() != d || ai.ncols() != d || bi.len() != d {
                return Err(Error::config(format!("node {i}: dimension mismatch")));
            }
            if ai != &ai.transpose() {
                return Err(Error::config(format!("node {i}: A is not symmetric")));
            }
            let min_eig = ai.clone().symmetric_eigenvalues().min();
            if min_eig < -1e-10 {
                return Err(Error::config(format!("node {i}: A has eigenvalue {min_eig} < 0")));
            }
        }
        if !(radius > 0.0) {
            return Err(Error::config(format!("radius must be positive, got {radius}")));
        }
        if !(interior_radius > 0.0 && interior_radius <= radius) {
            return Err(Error::config(format!(
                "interior radius {interior_radius} must lie in (0, {radius}]"
            )));
        }
        if !(noise_sigma >= 0.0) {
            return Err(Error::config("noise_sigma must be nonnegative"));
        }
        let index = ConstraintIndex::new(&graph);
        if c.len() != index.len() || c.iter().any(|&v| v > 0.0) {
            return Err(Error::config("constraint offsets must be nonpositive, one per slot"));
        }
        if index.iter().any(|(s, _)| c[s] != c[index.mirror(s)]) {
            return Err(Error::config("constraint offsets must be symmetric"));
        }
        Ok(Self { graph, index, d, radius, interior_radius, noise_sigma, a, b, c })
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn index(&self) -> &ConstraintIndex {
        &self.index
    }

    pub fn node_count(&self) -> usize {
        self.graph.node_count()
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    /// Per-node feasible ball radius.
    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// Assumption constant `R` with `||x_i|| <= R / sqrt(n)`.
    pub fn radius_total(&self) -> f64 {
        self.radius * (self.node_count() as f64).sqrt()
    }

    pub fn interior_radius(&self) -> f64 {
        self.interior_radius
    }

    pub fn noise_sigma(&self) -> f64 {
        self.noise_sigma
    }

    pub fn quadratic(&self, i: usize) -> &DMatrix<f64> {
        &self.a[i]
    }

    pub fn linear(&self, i: usize) -> &DVector<f64> {
        &self.b[i]
    }

    pub fn offset(&self, i: usize, j: usize) -> Result<f64> {
        Ok(self.c[self.index.slot(&self.graph, i, j)?])
    }

    pub fn slot_offset(&self, slot: usize) -> f64 {
        self.c[slot]
    }

    pub fn with_noise(mut self, sigma: f64) -> Result<Self> {
        if !(sigma >= 0.0) {
            return Err(Error::config("noise_sigma must be nonnegative"));
        }
        self.noise_sigma = sigma;
        Ok(self)
    }

    /// `x' A_i x + b_i' x`.
    pub fn cost(&self, i: usize, x: &DVector<f64>) -> f64 {
        x.dot(&(&self.a[i] * x)) + self.b[i].dot(x)
    }

    /// Cost under a sampled perturbation `xi` of the linear term.
    pub fn sample_cost(&self, i: usize, x: &DVector<f64>, xi: &DVector<f64>) -> f64 {
        self.cost(i, x) + xi.dot(x)
    }

    pub fn total_cost(&self, xs: &[DVector<f64>]) -> f64 {
        xs.iter().enumerate().map(|(i, x)| self.cost(i, x)).sum()
    }

    /// Noise-free gradient `(A_i + A_i') x + b_i`.
    pub fn exact_grad(&self, i: usize, x: &DVector<f64>) -> DVector<f64> {
        (&self.a[i] * x) * 2.0 + &self.b[i]
    }

    /// One sample `xi ~ N(0, sigma^2 I)`; zero without touching `rng` when sigma = 0.
    pub fn draw_sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        if self.noise_sigma == 0.0 {
            return DVector::zeros(self.d);
        }
        DVector::from_fn(self.d, |_, _| self.noise_sigma * standard_normal(rng))
    }

    /// Stochastic gradient of `f_i` at `x`.
    pub fn local_grad<R: Rng + ?Sized>(&self, i: usize, x: &DVector<f64>, rng: &mut R) -> DVector<f64> {
        self.exact_grad(i, x) + self.draw_sample(rng)
    }

    /// `g` for a directed slot.
    pub fn slot_value(&self, slot: usize, xi: &DVector<f64>, xj: &DVector<f64>) -> f64 {
        (xi - xj).norm_squared() + self.c[slot]
    }

    pub fn constraint_value(&self, i: usize, j: usize, xi: &DVector<f64>, xj: &DVector<f64>) -> Result<f64> {
        let slot = self.index.slot(&self.graph, i, j)?;
        Ok(self.slot_value(slot, xi, xj))
    }

    /// Gradient of `g_ij` with respect to its first argument, `2 (x_i - x_j)`.
    pub fn constraint_grad(&self, i: usize, j: usize, xi: &DVector<f64>, xj: &DVector<f64>) -> Result<DVector<f64>> {
        self.index.slot(&self.graph, i, j)?;
        Ok((xi - xj) * 2.0)
    }

    /// Largest `g_ij` over all edges.
    pub fn max_constraint(&self, xs: &[DVector<f64>]) -> f64 {
        self.index
            .iter()
            .map(|(s, (i, j))| self.slot_value(s, &xs[i], &xs[j]))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Text dump; see [`QcqpInstance::from_text`].
    pub fn to_text(&self) -> String {
        io::write(self)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        io::read(text)
    }
}

/// Euclidean projection onto the centered ball of radius `bound`.
pub fn project_feasible(x: &DVector<f64>, bound: f64) -> DVector<f64> {
    let norm = x.norm();
    if norm <= bound {
        x.clone()
    } else {
        // rounding can leave the rescaled norm an ulp above `bound`
        let mut scale = bound / norm;
        loop {
            let y = x * scale;
            if y.norm() <= bound {
                return y;
            }
            scale = scale.next_down();
        }
    }
}

/// Radius of the shrunken ball `(1 - zeta / r) * bound`, whose `zeta`-perturbations stay
/// inside the ball of radius `bound`.
pub fn shrunk_bound(bound: f64, zeta: f64, r: f64) -> Result<f64> {
    if !(r > 0.0 && r <= bound) {
        return Err(Error::config(format!("interior radius {r} must lie in (0, {bound}]")));
    }
    if !(zeta >= 0.0) || zeta >= r {
        return Err(Error::config(format!("perturbation zeta = {zeta} must lie in [0, r = {r})")));
    }
    Ok((1.0 - zeta / r) * bound)
}

/// Sampled estimates of the assumption constants.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantEstimates {
    /// Per-node objective gradient bounds `G_i`.
    pub g_nodes: Vec<f64>,
    /// `sqrt(sum G_i^2)`.
    pub g: f64,
    /// Largest stacked constraint gradient norm.
    pub g_tilde: f64,
    /// Per-slot constraint magnitude bounds `C_ij`.
    pub c_slots: Vec<f64>,
    /// `sqrt(sum C_ij^2)` over directed slots.
    pub c: f64,
    pub r_total: f64,
    /// Raw sample maxima before inflation: (max ||grad f_i||, max stacked constraint grad, max |g|).
    pub sampled: (f64, f64, f64),
}

const INFLATION: f64 = 1.05;

fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

fn random_in_ball<R: Rng + ?Sized>(rng: &mut R, d: usize, radius: f64, on_sphere: bool) -> DVector<f64> {
    let dir = DVector::from_fn(d, |_, _| standard_normal(rng));
    let norm = dir.norm();
    if norm == 0.0 {
        return DVector::zeros(d);
    }
    let scale = if on_sphere { radius } else { radius * rng.random::<f64>().powf(1.0 / d as f64) };
    dir * (scale / norm)
}

/// Uniform draw from the ball of radius `radius`.
pub fn sample_ball<R: Rng + ?Sized>(rng: &mut R, d: usize, radius: f64) -> DVector<f64> {
    random_in_ball(rng, d, radius, false)
}

/// Uniform draw from the unit sphere.
pub fn sample_sphere<R: Rng + ?Sized>(rng: &mut R, d: usize) -> DVector<f64> {
    loop {
        let v = random_in_ball(rng, d, 1.0, true);
        if v.norm() > 0.0 {
            return v;
        }
    }
}

/// Samples feasible points (half uniform in the ball, half on its boundary, and
/// antipodal pairs for constraints) and reports sample maxima inflated by 5%.
/// `G_i` also gets `3 sigma sqrt(d)` of noise head-room.
pub fn estimate_constants<R: Rng + ?Sized>(
    instance: &QcqpInstance,
    samples: usize,
    rng: &mut R,
) -> Result<ConstantEstimates> {
    if samples < 1000 {
        return Err(Error::config(format!("constant estimation needs >= 1000 samples, got {samples}")));
    }
    let d = instance.dim();
    let rho = instance.radius();
    let point = |rng: &mut R, k: usize| random_in_ball(rng, d, rho, k % 2 == 1);

    let mut grad_max: f64 = 0.0;
    let mut g_nodes = Vec::with_capacity(instance.node_count());
    for i in 0..instance.node_count() {
        let mut best: f64 = 0.0;
        for k in 0..samples {
            best = best.max(instance.exact_grad(i, &point(rng, k)).norm());
        }
        grad_max = grad_max.max(best);
        g_nodes.push(INFLATION * best + 3.0 * instance.noise_sigma() * (d as f64).sqrt());
    }

    let mut stacked_max: f64 = 0.0;
    let mut abs_max: f64 = 0.0;
    let mut edge_bounds = Vec::with_capacity(instance.graph().edge_count());
    for &(i, j) in instance.graph().edges() {
        let c = instance.offset(i, j)?;
        let mut best_abs: f64 = 0.0;
        for k in 0..samples {
            let xi = point(rng, k);
            let xj = if k % 4 == 3 { -&xi } else { point(rng, k) };
            let diff = (&xi - &xj).norm();
            stacked_max = stacked_max.max(2.0 * std::f64::consts::SQRT_2 * diff);
            best_abs = best_abs.max((diff * diff + c).abs());
        }
        abs_max = abs_max.max(best_abs);
        edge_bounds.push(((i, j), INFLATION * best_abs));
    }
    let c_slots: Vec<f64> = instance
        .index()
        .iter()
        .map(|(_, (i, j))| {
            let key = (i.min(j), i.max(j));
            edge_bounds[instance.graph().edges().binary_search(&key).expect("edge")].1
        })
        .collect();

    Ok(ConstantEstimates {
        g: g_nodes.iter().map(|v| v * v).sum::<f64>().sqrt(),
        g_nodes,
        g_tilde: INFLATION * stacked_max,
        c: c_slots.iter().map(|v| v * v).sum::<f64>().sqrt(),
        c_slots,
        r_total: instance.radius_total(),
        sampled: (grad_max, stacked_max, abs_max),
    })
}

//! Two-point function-value estimate of the Lagrangian gradient.

use nalgebra::DVector;
use rand::Rng;

use crate::error::{Error, Result};
use crate::problem::{sample_sphere, QcqpInstance};

/// `(d / (2 zeta)) [f_i(x + zeta u, xi) - f_i(x - zeta u, xi)] u` for one sphere
/// draw `u` and one sample `xi` shared by both queries. Both query points must
/// lie within `bound`.
pub fn two_point_term<R: Rng + ?Sized>(
    instance: &QcqpInstance,
    i: usize,
    x: &DVector<f64>,
    zeta: f64,
    bound: f64,
    rng: &mut R,
) -> Result<DVector<f64>> {
    if !(zeta > 0.0) {
        return Err(Error::config(format!("zeta must be positive, got {zeta}")));
    }
    let d = instance.dim();
    let u = sample_sphere(rng, d);
    let xi = instance.draw_sample(rng);
    let plus = x + &u * zeta;
    let minus = x - &u * zeta;
    for query in [&plus, &minus] {
        let norm = query.norm();
        if norm > bound + 1e-9 {
            return Err(Error::FeasibilityViolation { node: i, norm, bound });
        }
    }
    let diff = instance.sample_cost(i, &plus, &xi) - instance.sample_cost(i, &minus, &xi);
    Ok(u * (d as f64 / (2.0 * zeta) * diff))
}

/// Constraint part `2 sum_j lambda_ij grad_{x_i} g_ij(x_i, x_j)` of the
/// primal direction; `neighbor_x` and `lambda_row` follow `graph.neighbors(i)`.
pub fn constraint_term(x: &DVector<f64>, neighbor_x: &[&DVector<f64>], lambda_row: &[f64]) -> DVector<f64> {
    let mut out = DVector::zeros(x.len());
    for (xj, &lam) in neighbor_x.iter().zip(lambda_row) {
        if lam != 0.0 {
            out += (x - *xj) * (4.0 * lam);
        }
    }
    out
}

/// Bandit-feedback primal direction for node `i`.
pub fn bandit_gradient_estimate<R: Rng + ?Sized>(
    instance: &QcqpInstance,
    i: usize,
    x: &DVector<f64>,
    neighbor_x: &[&DVector<f64>],
    lambda_row: &[f64],
    zeta: f64,
    rng: &mut R,
) -> Result<DVector<f64>> {
    let mut p = two_point_term(instance, i, x, zeta, instance.radius(), rng)?;
    p += constraint_term(x, neighbor_x, lambda_row);
    Ok(p)
}

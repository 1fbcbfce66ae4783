//! Admissible interval for the dual regularizer `delta`.

use super::Feedback;
use crate::error::{Error, Result};

/// Leading constant of the interval: 64 for sampled gradients, 256 for
/// two-point estimates.
pub fn delta_coefficient(feedback: Feedback) -> f64 {
    match feedback {
        Feedback::Sample => 64.0,
        Feedback::Bandit => 256.0,
    }
}

fn load(m: usize, g_tilde: f64, omega: f64, feedback: Feedback) -> f64 {
    delta_coefficient(feedback) * (1.0 + m as f64) * g_tilde * g_tilde / (omega * omega)
}

/// Smallest horizon `T` for which `eta = a / sqrt(T)` gives a nonempty interval.
pub fn min_horizon(a: f64, m: usize, g_tilde: f64, omega: f64, feedback: Feedback) -> f64 {
    load(m, g_tilde, omega, feedback) * a * a
}

/// `[(1 - sqrt(D)) / (4 eta^2), (1 + sqrt(D)) / (4 eta^2)]` with
/// `D = 1 - c eta^2 (1 + m) G~^2 / omega^2`.
///
/// `m` is the number of dual slots (twice the edge count).
pub fn delta_interval(eta: f64, m: usize, g_tilde: f64, omega: f64, feedback: Feedback) -> Result<(f64, f64)> {
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::config(format!("step size must be positive, got {eta}")));
    }
    if !(omega > 0.0 && omega <= 1.0) {
        return Err(Error::config(format!("omega must lie in (0, 1], got {omega}")));
    }
    if !(g_tilde >= 0.0 && g_tilde.is_finite()) {
        return Err(Error::config(format!("constraint gradient bound must be finite and nonnegative, got {g_tilde}")));
    }
    let k = load(m, g_tilde, omega, feedback);
    let mut disc = 1.0 - k * eta * eta;
    if disc < 0.0 && disc > -4.0 * f64::EPSILON {
        disc = 0.0;
    }
    if disc < 0.0 {
        return Err(Error::HorizonTooShort { max_eta: 1.0 / k.sqrt(), min_horizon: None });
    }
    let root = disc.sqrt();
    let scale = 4.0 * eta * eta;
    // lower end rewritten as k / (4 (1 + sqrt(D))) to avoid cancellation
    Ok((k / (4.0 * (1.0 + root)), (1.0 + root) / scale))
}

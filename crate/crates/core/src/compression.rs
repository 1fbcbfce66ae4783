//! Contraction-type compression operators and their wire cost.
//!
//! Every operator `C` here satisfies `E||x - C(x)||^2 <= (1 - omega) ||x||^2`
//! for the `omega` reported by [`CompressorSpec::omega`], and maps zero to
//! zero. Bit costs assume 32-bit floats and `ceil(log2 d)`-bit indices.

use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

use crate::error::{Error, Result};

pub const DEFAULT_QSGD_LEVELS: u32 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CompressorSpec {
    Identity,
    TopK { k: usize },
    /// Unscaled random sparsifier: selected coordinates are kept verbatim.
    RandK { k: usize },
    /// `(||x||_1 / d) * sign(x)`.
    SignScaled,
    /// Stochastic quantizer with `levels` levels, shrunk by `1 / (1 + beta)`
    /// so the unbiased operator becomes a contraction.
    Qsgd { levels: u32 },
    /// Top-k selection followed by scaled sign on the kept coordinates.
    SignTopK { k: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Compressed {
    /// Decoded full-dimension value of the message.
    pub values: Vec<f64>,
    pub bits: u64,
}

fn index_bits(d: usize) -> u64 {
    if d <= 1 {
        0
    } else {
        u64::from(usize::BITS - (d - 1).leading_zeros())
    }
}

impl CompressorSpec {
    /// Checks the parameters against dimension `d`.
    pub fn validate(&self, d: usize) -> Result<()> {
        if d == 0 {
            return Err(Error::config("compression dimension must be at least 1"));
        }
        match *self {
            CompressorSpec::TopK { k } | CompressorSpec::RandK { k } | CompressorSpec::SignTopK { k } => {
                if k < 1 || k > d {
                    return Err(Error::config(format!("{self}: k = {k} must lie in [1, {d}]")));
                }
            }
            CompressorSpec::Qsgd { levels } if levels < 1 => {
                return Err(Error::config("qsgd needs at least one quantization level"));
            }
            _ => {}
        }
        Ok(())
    }

    pub fn is_randomized(&self) -> bool {
        matches!(self, CompressorSpec::RandK { .. } | CompressorSpec::Qsgd { .. })
    }

    /// Variance factor `beta = min(d / s^2, sqrt(d) / s)` of the unbiased QSGD quantizer.
    fn qsgd_beta(levels: u32, d: usize) -> f64 {
        let s = f64::from(levels);
        let d = d as f64;
        (d / (s * s)).min(d.sqrt() / s)
    }

    /// Contraction constant `omega` for dimension `d`.
    pub fn omega(&self, d: usize) -> f64 {
        let df = d as f64;
        match *self {
            CompressorSpec::Identity => 1.0,
            CompressorSpec::TopK { k } | CompressorSpec::RandK { k } => k as f64 / df,
            CompressorSpec::SignScaled => 1.0 / df,
            CompressorSpec::Qsgd { levels } => 1.0 / (1.0 + Self::qsgd_beta(levels, d)),
            // product of the top-k (k/d) and sign-on-k (1/k) constants
            CompressorSpec::SignTopK { k } => (k as f64 / df) * (1.0 / k as f64),
        }
    }

    /// Size in bits of one compressed message of dimension `d`.
    pub fn message_bits(&self, d: usize) -> u64 {
        let d64 = d as u64;
        match *self {
            CompressorSpec::Identity => 32 * d64,
            CompressorSpec::TopK { k } | CompressorSpec::RandK { k } => k as u64 * (32 + index_bits(d)),
            CompressorSpec::SignScaled => d64 + 32,
            CompressorSpec::Qsgd { levels } => 32 + d64 * index_bits(2 * levels as usize + 1),
            CompressorSpec::SignTopK { k } => k as u64 * (1 + index_bits(d)) + 32,
        }
    }

    pub fn compress<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R) -> Result<Compressed> {
        let d = x.len();
        self.validate(d)?;
        let values = match *self {
            CompressorSpec::Identity => x.to_vec(),
            CompressorSpec::TopK { k } => {
                let mut y = vec![0.0; d];
                for i in top_k_indices(x, k) {
                    y[i] = x[i];
                }
                y
            }
            CompressorSpec::RandK { k } => {
                let mut y = vec![0.0; d];
                for i in index::sample(rng, d, k) {
                    y[i] = x[i];
                }
                y
            }
            CompressorSpec::SignScaled => {
                let scale = x.iter().map(|v| v.abs()).sum::<f64>() / d as f64;
                x.iter().map(|&v| scale * sign(v)).collect()
            }
            CompressorSpec::Qsgd { levels } => qsgd(x, levels, rng),
            CompressorSpec::SignTopK { k } => {
                let kept = top_k_indices(x, k);
                let scale = kept.iter().map(|&i| x[i].abs()).sum::<f64>() / k as f64;
                let mut y = vec![0.0; d];
                for i in kept {
                    y[i] = scale * sign(x[i]);
                }
                y
            }
        };
        Ok(Compressed { values, bits: self.message_bits(d) })
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Indices of the `k` largest magnitudes; ties go to the lowest index.
fn top_k_indices(x: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[b].abs().total_cmp(&x[a].abs()).then(a.cmp(&b)));
    order.truncate(k);
    order
}

fn qsgd<R: Rng + ?Sized>(x: &[f64], levels: u32, rng: &mut R) -> Vec<f64> {
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return vec![0.0; x.len()];
    }
    let s = f64::from(levels);
    let shrink = 1.0 / (1.0 + CompressorSpec::qsgd_beta(levels, x.len()));
    x.iter()
        .map(|&v| {
            let r = v.abs() / norm * s;
            let lower = r.floor();
            let level = if rng.random::<f64>() < r - lower { lower + 1.0 } else { lower };
            shrink * norm * sign(v) * level / s
        })
        .collect()
}

impl fmt::Display for CompressorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CompressorSpec::Identity => write!(f, "none"),
            CompressorSpec::TopK { k } => write!(f, "top_k:{k}"),
            CompressorSpec::RandK { k } => write!(f, "rand_k:{k}"),
            CompressorSpec::SignScaled => write!(f, "sign"),
            CompressorSpec::Qsgd { levels } => write!(f, "qsgd:{levels}"),
            CompressorSpec::SignTopK { k } => write!(f, "sign+top_k:{k}"),
        }
    }
}

impl FromStr for CompressorSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let token = s.trim();
        let (name, arg) = match token.split_once(':') {
            Some((name, arg)) => (name.trim(), Some(arg.trim())),
            None => (token, None),
        };
        let bad = || Error::config(format!("unrecognized compressor '{token}'"));
        let count = |arg: Option<&str>| -> Result<usize> {
            arg.ok_or_else(bad)?.parse::<usize>().map_err(|_| bad())
        };
        let spec = match name {
            "none" | "identity" if arg.is_none() => CompressorSpec::Identity,
            "sign" if arg.is_none() => CompressorSpec::SignScaled,
            "top_k" => CompressorSpec::TopK { k: count(arg)? },
            "rand_k" => CompressorSpec::RandK { k: count(arg)? },
            "sign+top_k" => CompressorSpec::SignTopK { k: count(arg)? },
            "qsgd" => CompressorSpec::Qsgd {
                levels: match arg {
                    None => DEFAULT_QSGD_LEVELS,
                    Some(a) => a.parse().map_err(|_| bad())?,
                },
            },
            _ => return Err(bad()),
        };
        if let CompressorSpec::TopK { k: 0 } | CompressorSpec::RandK { k: 0 } | CompressorSpec::SignTopK { k: 0 } =
            spec
        {
            return Err(bad());
        }
        Ok(spec)
    }
}

/// Monte Carlo estimates of `E||x - C(x)||^2 / ||x||^2` per test-vector family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContractReport {
    pub gaussian: f64,
    pub uniform: f64,
    pub one_hot: f64,
}

impl ContractReport {
    pub fn worst(&self) -> f64 {
        self.gaussian.max(self.uniform).max(self.one_hot)
    }
}

/// Estimates the contraction ratio on standard Gaussian, uniform `[-1, 1]^d` and
/// signed one-hot vectors, drawing a fresh vector and a fresh compression per trial.
pub fn contract_report<R: Rng + ?Sized>(
    spec: &CompressorSpec,
    d: usize,
    trials: usize,
    rng: &mut R,
) -> Result<ContractReport> {
    spec.validate(d)?;
    if trials < 1000 {
        return Err(Error::config(format!("contract validation needs >= 1000 trials, got {trials}")));
    }
    let uniform = Uniform::new_inclusive(-1.0, 1.0).expect("valid range");
    let mut family = |draw: &mut dyn FnMut(&mut R) -> Vec<f64>| -> Result<f64> {
        let mut total = 0.0;
        let mut counted = 0usize;
        for _ in 0..trials {
            let x = draw(rng);
            let norm_sq: f64 = x.iter().map(|v| v * v).sum();
            if norm_sq == 0.0 {
                continue;
            }
            let y = spec.compress(&x, rng)?.values;
            let err: f64 = x.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum();
            total += err / norm_sq;
            counted += 1;
        }
        Ok(total / counted.max(1) as f64)
    };
    let gaussian = family(&mut |r: &mut R| (0..d).map(|_| StandardNormal.sample(r)).collect())?;
    let uniform = family(&mut |r: &mut R| (0..d).map(|_| uniform.sample(r)).collect())?;
    let one_hot = family(&mut |r: &mut R| {
        let mut x = vec![0.0; d];
        x[r.random_range(0..d)] = if r.random_bool(0.5) { 1.0 } else { -1.0 };
        x
    })?;
    Ok(ContractReport { gaussian, uniform, one_hot })
}

/// Worst family estimate of the contraction ratio; the contract holds when this
/// is at most `1 - omega` plus Monte Carlo slack.
pub fn validate_contract<R: Rng + ?Sized>(
    spec: &CompressorSpec,
    d: usize,
    trials: usize,
    rng: &mut R,
) -> Result<f64> {
    Ok(contract_report(spec, d, trials, rng)?.worst())
}

/// The operators shipped for experiments, instantiated for dimension `d`.
pub fn shipped_operators(d: usize) -> Vec<CompressorSpec> {
    let k = (d / 2).max(1);
    vec![
        CompressorSpec::Identity,
        CompressorSpec::TopK { k },
        CompressorSpec::RandK { k },
        CompressorSpec::SignScaled,
        CompressorSpec::Qsgd { levels: DEFAULT_QSGD_LEVELS },
        CompressorSpec::SignTopK { k },
    ]
}

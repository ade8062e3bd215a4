//! The two budget-dependent terms of the perturbed objective: the Gaussian
//! linear term `b(eps) = sigma(eps) u` and the ridge coefficient
//! `Delta(eps) = 2 lambda / eps`, together with their derivatives in `eps`.
//!
//! `sigma(eps) = zeta sqrt(8 ln(2/delta) + 4 eps) / eps` is strictly
//! decreasing, so `sigma'` is negative. Holding `u` fixed makes `b` a
//! differentiable function of the budget.

use serde::{Deserialize, Serialize};

use crate::error::{positive, unit_open, Result};
use crate::model::NoiseDraw;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationAtEps {
    pub eps: f64,
    pub sigma: f64,
    pub sigma_prime: f64,
    pub delta_eps_coeff: f64,
    pub delta_eps_prime: f64,
    pub b: Vec<f64>,
    pub b_prime: Vec<f64>,
    /// The draw `b` was built from.
    pub noise: NoiseDraw,
}

pub fn delta_coeff(lambda_hess: f64, eps: f64) -> Result<f64> {
    Ok(2.0 * positive("lambda_hess", lambda_hess)? / positive("epsilon", eps)?)
}

pub fn delta_coeff_prime(lambda_hess: f64, eps: f64) -> Result<f64> {
    let eps = positive("epsilon", eps)?;
    Ok(-2.0 * positive("lambda_hess", lambda_hess)? / (eps * eps))
}

/// Standard deviation of each coordinate of `b`.
pub fn noise_sigma(zeta: f64, delta: f64, eps: f64) -> Result<f64> {
    let (zeta, log_term, eps) = domain(zeta, delta, eps)?;
    Ok(zeta * (8.0 * log_term + 4.0 * eps).sqrt() / eps)
}

/// `d sigma / d eps = -zeta (4 ln(2/delta) + eps) / (eps^2 sqrt(2 ln(2/delta) + eps))`.
pub fn noise_sigma_prime(zeta: f64, delta: f64, eps: f64) -> Result<f64> {
    let (zeta, log_term, eps) = domain(zeta, delta, eps)?;
    Ok(-zeta * (4.0 * log_term + eps) / (eps * eps * (2.0 * log_term + eps).sqrt()))
}

fn domain(zeta: f64, delta: f64, eps: f64) -> Result<(f64, f64, f64)> {
    let zeta = positive("zeta", zeta)?;
    let delta = unit_open("delta", delta)?;
    let eps = positive("epsilon", eps)?;
    Ok((zeta, (2.0 / delta).ln(), eps))
}

/// Scales the fixed base vector to the requested budget.
pub fn materialize(
    noise: &NoiseDraw,
    zeta: f64,
    delta: f64,
    eps: f64,
    lambda_hess: f64,
) -> Result<PerturbationAtEps> {
    let sigma = noise_sigma(zeta, delta, eps)?;
    let sigma_prime = noise_sigma_prime(zeta, delta, eps)?;
    Ok(PerturbationAtEps {
        eps,
        sigma,
        sigma_prime,
        delta_eps_coeff: delta_coeff(lambda_hess, eps)?,
        delta_eps_prime: delta_coeff_prime(lambda_hess, eps)?,
        b: noise.base_u().iter().map(|u| sigma * u).collect(),
        b_prime: noise.base_u().iter().map(|u| sigma_prime * u).collect(),
        noise: noise.clone(),
    })
}

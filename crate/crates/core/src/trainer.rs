//! Minimization of the perturbed objective
//!
//! ```text
//! J(theta) = L(theta) + (Lambda/2n)|theta|^2 + (1/n) <b, theta> + (Delta/2n)|theta|^2
//! ```
//!
//! `Exact` mode runs damped Newton to a gradient-norm tolerance; `SgdRepro`
//! runs a fixed number of fixed-size full-gradient steps from the origin.

use std::cell::Cell;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, norm, Cholesky};
use crate::losses;
use crate::model::{Dataset, LossSpec, NoiseDraw, PrivacyBudget, PrivateModel, SolverMode};
use crate::perturbation::{materialize, PerturbationAtEps};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub reg_lambda: f64,
    pub solver_mode: SolverMode,
    pub stationarity_tol: f64,
    pub sgd_iterations: usize,
    pub sgd_learning_rate: f64,
    pub max_exact_iterations: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            reg_lambda: 1e-2,
            solver_mode: SolverMode::Exact,
            stationarity_tol: 1e-8,
            sgd_iterations: 100,
            sgd_learning_rate: 0.01,
            max_exact_iterations: 500,
        }
    }
}

impl TrainConfig {
    pub fn exact() -> Self {
        Self::default()
    }

    pub fn sgd_repro() -> Self {
        Self {
            solver_mode: SolverMode::SgdRepro,
            ..Self::default()
        }
    }

    pub fn with_tolerance(mut self, tol: f64) -> Self {
        self.stationarity_tol = tol;
        self
    }

    pub fn with_reg_lambda(mut self, reg_lambda: f64) -> Self {
        self.reg_lambda = reg_lambda;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.reg_lambda >= 0.0 && self.reg_lambda.is_finite()) {
            return Err(Error::Domain {
                name: "reg_lambda",
                value: self.reg_lambda,
            });
        }
        crate::error::positive("stationarity_tol", self.stationarity_tol)?;
        crate::error::positive("sgd_learning_rate", self.sgd_learning_rate)?;
        Ok(())
    }
}

thread_local! {
    static TRAINING_RUNS: Cell<usize> = const { Cell::new(0) };
}

/// Number of [`train`] calls made on the current thread.
pub fn training_runs() -> usize {
    TRAINING_RUNS.with(Cell::get)
}

fn check_perturbation(theta: &[f64], d: &Dataset, pert: &PerturbationAtEps) -> Result<()> {
    for len in [theta.len(), pert.b.len()] {
        if len != d.p() {
            return Err(Error::DimensionMismatch {
                expected: d.p(),
                found: len,
            });
        }
    }
    Ok(())
}

/// Value and gradient of the perturbed objective.
pub fn perturbed_objective(
    theta: &[f64],
    d: &Dataset,
    spec: &LossSpec,
    cfg: &TrainConfig,
    pert: &PerturbationAtEps,
) -> Result<(f64, Vec<f64>)> {
    check_perturbation(theta, d, pert)?;
    let (loss, mut grad) = losses::value_and_grad(spec, theta, d)?;
    let inv_n = 1.0 / d.n() as f64;
    let ridge = cfg.reg_lambda + pert.delta_eps_coeff;
    let value = loss + inv_n * (0.5 * ridge * dot(theta, theta) + dot(&pert.b, theta));
    axpy(inv_n * ridge, theta, &mut grad);
    axpy(inv_n, &pert.b, &mut grad);
    Ok((value, grad))
}

/// Trains at `budget` with the linear perturbation built from `noise`.
pub fn train(
    d: &Dataset,
    spec: &LossSpec,
    cfg: &TrainConfig,
    budget: PrivacyBudget,
    noise: &NoiseDraw,
) -> Result<PrivateModel> {
    train_from(d, spec, cfg, budget, noise, &vec![0.0; d.p()])
}

/// As [`train`], starting the solver at `start` instead of the origin.
pub fn train_from(
    d: &Dataset,
    spec: &LossSpec,
    cfg: &TrainConfig,
    budget: PrivacyBudget,
    noise: &NoiseDraw,
    start: &[f64],
) -> Result<PrivateModel> {
    TRAINING_RUNS.with(|c| c.set(c.get() + 1));
    cfg.validate()?;
    let pert = materialize(
        noise,
        spec.zeta(),
        budget.delta(),
        budget.epsilon(),
        spec.lambda_hess(),
    )?;
    check_perturbation(start, d, &pert)?;
    let (theta, grad_norm, iterations) = match cfg.solver_mode {
        SolverMode::Exact => newton(d, spec, cfg, &pert, start.to_vec())?,
        SolverMode::SgdRepro => gradient_steps(d, spec, cfg, &pert, start.to_vec())?,
    };
    Ok(PrivateModel {
        theta,
        budget,
        reg_lambda: cfg.reg_lambda,
        noise: noise.clone(),
        loss: *spec,
        grad_norm_at_solution: grad_norm,
        solver_mode: cfg.solver_mode,
        iterations_used: iterations,
    })
}

fn newton(
    d: &Dataset,
    spec: &LossSpec,
    cfg: &TrainConfig,
    pert: &PerturbationAtEps,
    mut theta: Vec<f64>,
) -> Result<(Vec<f64>, f64, usize)> {
    let inv_n = 1.0 / d.n() as f64;
    let ridge = inv_n * (cfg.reg_lambda + pert.delta_eps_coeff);
    let objective = |theta: &[f64]| perturbed_objective(theta, d, spec, cfg, pert);
    let (mut value, mut grad) = objective(&theta)?;
    for iteration in 0..cfg.max_exact_iterations {
        let grad_norm = norm(&grad);
        if !grad_norm.is_finite() || !value.is_finite() {
            return Err(Error::NonFinite("exact solve"));
        }
        if grad_norm <= cfg.stationarity_tol {
            return Ok((theta, grad_norm, iteration));
        }
        let mut hess = losses::aggregate(spec, &theta, d)?.hess;
        hess.add_diagonal(ridge);
        let step: Vec<f64> = Cholesky::factor(&hess)?
            .solve(&grad)
            .into_iter()
            .map(|v| -v)
            .collect();
        let decrement = -dot(&grad, &step);
        // Below this the objective cannot resolve an Armijo decrease; the
        // full Newton step is taken.
        let resolvable = decrement > 1e-13 * (1.0 + value.abs());
        let mut t = 1.0;
        loop {
            let mut trial = theta.clone();
            axpy(t, &step, &mut trial);
            let (trial_value, trial_grad) = objective(&trial)?;
            let accept = !resolvable
                || (trial_value.is_finite() && trial_value <= value - 1e-4 * t * decrement);
            if accept {
                theta = trial;
                value = trial_value;
                grad = trial_grad;
                break;
            }
            t *= 0.5;
            if t < 1e-12 {
                return Err(Error::NotConverged {
                    iterations: iteration,
                    grad_norm,
                });
            }
        }
    }
    let grad_norm = norm(&grad);
    if grad_norm <= cfg.stationarity_tol {
        Ok((theta, grad_norm, cfg.max_exact_iterations))
    } else {
        Err(Error::NotConverged {
            iterations: cfg.max_exact_iterations,
            grad_norm,
        })
    }
}

fn gradient_steps(
    d: &Dataset,
    spec: &LossSpec,
    cfg: &TrainConfig,
    pert: &PerturbationAtEps,
    mut theta: Vec<f64>,
) -> Result<(Vec<f64>, f64, usize)> {
    for _ in 0..cfg.sgd_iterations {
        let (value, grad) = perturbed_objective(&theta, d, spec, cfg, pert)?;
        if !value.is_finite() {
            return Err(Error::NonFinite("gradient descent"));
        }
        axpy(-cfg.sgd_learning_rate, &grad, &mut theta);
    }
    let (value, grad) = perturbed_objective(&theta, d, spec, cfg, pert)?;
    let grad_norm = norm(&grad);
    if !value.is_finite() || !grad_norm.is_finite() {
        return Err(Error::NonFinite("gradient descent"));
    }
    Ok((theta, grad_norm, cfg.sgd_iterations))
}

/// Mean unregularized empirical loss, the utility the sensitivity machinery
/// differentiates.
pub fn utility(theta: &[f64], d: &Dataset, spec: &LossSpec) -> Result<f64> {
    losses::mean_loss(spec, theta, d)
}

/// Fraction of examples with nonpositive margin. Reporting only.
pub fn error_rate(theta: &[f64], d: &Dataset) -> Result<f64> {
    if theta.len() != d.p() {
        return Err(Error::DimensionMismatch {
            expected: d.p(),
            found: theta.len(),
        });
    }
    let wrong = d
        .examples()
        .iter()
        .filter(|ex| ex.y() * dot(theta, &ex.features) <= 0.0)
        .count();
    Ok(wrong as f64 / d.n() as f64)
}

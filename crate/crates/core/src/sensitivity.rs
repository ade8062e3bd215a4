//! Implicit differentiation of the private minimizer with respect to the
//! budget, and the utility extrapolation built on it.
//!
//! Differentiating the stationarity condition
//! `grad L(theta) + (1/n)(Lambda theta + b + Delta theta) = 0` in `eps` gives
//!
//! ```text
//! W dtheta/deps = -(1/n) (b' + Delta' theta),   W = hess L(theta) + ((Lambda + Delta)/n) I
//! ```
//!
//! and the utility slope follows by the chain rule through `grad F = grad L`.

use serde::{Deserialize, Serialize};

use crate::error::{positive, unit_open, Error, Result};
use crate::linalg::{dot, norm, Cholesky, Matrix};
use crate::losses;
use crate::model::{Dataset, ExtrapolationLine, LossSpec, PrivateModel, SensitivityReport, SolverMode};
use crate::perturbation::{delta_coeff, materialize, PerturbationAtEps};

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    /// Added to the diagonal of `W`. This is the quadratic-approximation
    /// fallback for iterates that are not exact minimizers.
    pub damping: f64,
    /// Required to differentiate a model trained in `SgdRepro` mode.
    pub allow_non_stationary: bool,
}

impl SolveOptions {
    pub fn damped(damping: f64) -> Self {
        Self {
            damping,
            ..Self::default()
        }
    }

    pub fn non_stationary(damping: f64) -> Self {
        Self {
            damping,
            allow_non_stationary: true,
        }
    }
}

/// Spectral floor of `W` guaranteed by convexity of the loss.
fn ridge(model: &PrivateModel, d: &Dataset) -> Result<f64> {
    let delta = delta_coeff(model.loss.lambda_hess(), model.budget.epsilon())?;
    Ok((model.reg_lambda + delta) / d.n() as f64)
}

fn build_w(model: &PrivateModel, d: &Dataset, spec: &LossSpec) -> Result<Matrix> {
    let mut w = losses::aggregate(spec, &model.theta, d)?.hess;
    w.add_diagonal(ridge(model, d)?);
    Ok(w)
}

/// Hessian of the perturbed objective at the trained parameters, certified
/// positive definite by a Cholesky factorization.
pub fn assemble_w(model: &PrivateModel, d: &Dataset, spec: &LossSpec) -> Result<Matrix> {
    let w = build_w(model, d, spec)?;
    Cholesky::factor(&w)?;
    Ok(w)
}

pub fn dtheta_deps(
    model: &PrivateModel,
    d: &Dataset,
    spec: &LossSpec,
    pert: &PerturbationAtEps,
    opts: SolveOptions,
) -> Result<SensitivityReport> {
    if model.solver_mode == SolverMode::SgdRepro && !opts.allow_non_stationary {
        return Err(Error::NonStationaryModel);
    }
    if !(opts.damping >= 0.0 && opts.damping.is_finite()) {
        return Err(Error::Domain {
            name: "damping",
            value: opts.damping,
        });
    }
    if !pert.noise.same_draw(&model.noise) || pert.eps.to_bits() != model.budget.epsilon().to_bits() {
        return Err(Error::NoiseMismatch);
    }
    let mut w = build_w(model, d, spec)?;
    w.add_diagonal(opts.damping);
    let factor = Cholesky::factor(&w)?;
    let inv_n = 1.0 / d.n() as f64;
    let rhs: Vec<f64> = pert
        .b_prime
        .iter()
        .zip(&model.theta)
        .map(|(bp, t)| -inv_n * (bp + pert.delta_eps_prime * t))
        .collect();
    let v = factor.solve(&rhs);
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("sensitivity solve"));
    }
    Ok(SensitivityReport {
        dtheta_deps: v,
        df_deps: 0.0,
        w_min_eigen_lower: ridge(model, d)? + opts.damping,
        damping_added: opts.damping,
    })
}

/// `<grad F(theta), dtheta/deps>`, also written into `report.df_deps`.
pub fn utility_slope(
    model: &PrivateModel,
    d: &Dataset,
    spec: &LossSpec,
    report: &mut SensitivityReport,
) -> Result<f64> {
    let (_, grad) = losses::value_and_grad(spec, &model.theta, d)?;
    let slope = dot(&grad, &report.dtheta_deps);
    report.df_deps = slope;
    Ok(slope)
}

/// Everything needed to extrapolate from one trained model: the report and
/// the affine utility line through the measured point.
pub fn measure(
    model: &PrivateModel,
    d: &Dataset,
    spec: &LossSpec,
    opts: SolveOptions,
) -> Result<(SensitivityReport, ExtrapolationLine)> {
    let eps = model.budget.epsilon();
    let pert = materialize(
        &model.noise,
        spec.zeta(),
        model.budget.delta(),
        eps,
        spec.lambda_hess(),
    )?;
    let mut report = dtheta_deps(model, d, spec, &pert, opts)?;
    let slope = utility_slope(model, d, spec, &mut report)?;
    let base = crate::trainer::utility(&model.theta, d, spec)?;
    Ok((report, ExtrapolationLine::new(eps, base, slope)?))
}

/// First-order prediction of the utility at `target_eps`.
pub fn extrapolate(line: &ExtrapolationLine, target_eps: f64) -> Result<f64> {
    let target = positive("target_eps", target_eps)?;
    Ok(line.base_utility + line.slope * (target - line.measure_eps()))
}

/// Order-of-magnitude size of the first-order remainder, with unit constant:
/// `(measure - target)^2 / (n min(measure, target)^3)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorScale {
    pub measure_eps: f64,
    pub target_eps: f64,
    pub n: usize,
    pub scale: f64,
}

pub fn error_scale(measure_eps: f64, target_eps: f64, n: usize) -> Result<ErrorScale> {
    let measure = positive("measure_eps", measure_eps)?;
    let target = positive("target_eps", target_eps)?;
    if n == 0 {
        return Err(Error::Domain {
            name: "n",
            value: 0.0,
        });
    }
    let gap = measure - target;
    let worst = measure.min(target);
    Ok(ErrorScale {
        measure_eps,
        target_eps,
        n,
        scale: gap * gap / (n as f64 * worst * worst * worst),
    })
}

/// The conservative excess-risk bound `zeta |theta| sqrt(p ln(1/delta)) / (eps n)`
/// with unit constant, for comparison against the extrapolation.
pub fn worst_case_bound(
    zeta: f64,
    theta_norm: f64,
    p: usize,
    delta: f64,
    eps: f64,
    n: usize,
) -> Result<f64> {
    let zeta = positive("zeta", zeta)?;
    if !(theta_norm >= 0.0 && theta_norm.is_finite()) {
        return Err(Error::Domain {
            name: "theta_norm",
            value: theta_norm,
        });
    }
    let delta = unit_open("delta", delta)?;
    let eps = positive("epsilon", eps)?;
    if p == 0 || n == 0 {
        return Err(Error::Domain {
            name: if p == 0 { "p" } else { "n" },
            value: 0.0,
        });
    }
    Ok(zeta * theta_norm * (p as f64 * (1.0 / delta).ln()).sqrt() / (eps * n as f64))
}

/// `|W v - rhs|` for a report, used to audit the solve.
pub fn solve_residual(
    model: &PrivateModel,
    d: &Dataset,
    spec: &LossSpec,
    pert: &PerturbationAtEps,
    report: &SensitivityReport,
) -> Result<(f64, f64)> {
    let mut w = build_w(model, d, spec)?;
    w.add_diagonal(report.damping_added);
    let inv_n = 1.0 / d.n() as f64;
    let wv = w.mul_vec(&report.dtheta_deps);
    let rhs: Vec<f64> = pert
        .b_prime
        .iter()
        .zip(&model.theta)
        .map(|(bp, t)| -inv_n * (bp + pert.delta_eps_prime * t))
        .collect();
    let resid: Vec<f64> = wv.iter().zip(&rhs).map(|(a, b)| a - b).collect();
    Ok((norm(&resid), norm(&rhs)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Example, LossKind, NoiseDraw, PrivacyBudget};
    use crate::trainer::{train, TrainConfig};

    fn scalar_case() -> (Dataset, LossSpec, PrivateModel) {
        let d = Dataset::new(vec![Example::new(vec![1.0], 1)]).unwrap();
        let spec = LossSpec::new(LossKind::Quadratic, 2.0, 1.0, 0.0).unwrap();
        let cfg = TrainConfig::exact().with_reg_lambda(0.0);
        let model = train(&d, &spec, &cfg, PrivacyBudget::new(1.0, 0.1).unwrap(), &NoiseDraw::zeros(1)).unwrap();
        (d, spec, model)
    }

    #[test]
    fn scalar_w_and_derivative() {
        let (d, spec, model) = scalar_case();
        let w = assemble_w(&model, &d, &spec).unwrap();
        assert!((w.get(0, 0) - 3.0).abs() < 1e-15);
        let (mut report, line) = measure(&model, &d, &spec, SolveOptions::default()).unwrap();
        assert!((report.dtheta_deps[0] - 2.0 / 9.0).abs() < 1e-12);
        assert!((report.df_deps + 4.0 / 27.0).abs() < 1e-12);
        assert!((line.slope + 4.0 / 27.0).abs() < 1e-12);
        assert_eq!(report.w_min_eigen_lower, 2.0);
        report.dtheta_deps = vec![0.0];
        assert_eq!(utility_slope(&model, &d, &spec, &mut report).unwrap(), 0.0);
    }

    #[test]
    fn flat_huber_region_gives_pure_ridge() {
        // every margin above 1 + h
        let d = Dataset::new(vec![
            Example::new(vec![1.0, 0.0], 1),
            Example::new(vec![0.0, -1.0], -1),
        ])
        .unwrap();
        let spec = LossSpec::new(LossKind::HuberSvm { h: 0.1 }, 1.0, 5.0, 0.0).unwrap();
        let model = PrivateModel {
            theta: vec![3.0, 3.0],
            budget: PrivacyBudget::new(2.0, 0.1).unwrap(),
            reg_lambda: 0.5,
            noise: NoiseDraw::zeros(2),
            loss: spec,
            grad_norm_at_solution: 0.0,
            solver_mode: SolverMode::Exact,
            iterations_used: 0,
        };
        let w = assemble_w(&model, &d, &spec).unwrap();
        let r = (0.5 + 5.0) / 2.0;
        assert_eq!(w.to_rows(), vec![vec![r, 0.0], vec![0.0, r]]);
    }

    #[test]
    fn symmetric_data_zero_noise_gives_zero_derivative() {
        let d = Dataset::new(vec![
            Example::new(vec![0.5, 0.2], 1),
            Example::new(vec![0.5, 0.2], -1),
        ])
        .unwrap();
        let spec = LossSpec::new(LossKind::Logistic, 1.0, 0.25, 0.1).unwrap();
        let model = train(&d, &spec, &TrainConfig::default(), PrivacyBudget::new(1.0, 0.1).unwrap(), &NoiseDraw::zeros(2)).unwrap();
        assert!(model.theta.iter().all(|t| t.abs() < 1e-12));
        let (report, _) = measure(&model, &d, &spec, SolveOptions::default()).unwrap();
        assert!(report.dtheta_deps.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn mismatched_draw_is_rejected() {
        let (d, spec, model) = scalar_case();
        let other = NoiseDraw::from_vector(vec![1.0], 5);
        let pert = materialize(&other, 2.0, 0.1, 1.0, 1.0).unwrap();
        let err = dtheta_deps(&model, &d, &spec, &pert, SolveOptions::default()).unwrap_err();
        assert_eq!(err, Error::NoiseMismatch);
        let pert = materialize(&model.noise, 2.0, 0.1, 1.5, 1.0).unwrap();
        assert_eq!(
            dtheta_deps(&model, &d, &spec, &pert, SolveOptions::default()).unwrap_err(),
            Error::NoiseMismatch
        );
    }

    #[test]
    fn sgd_models_need_override() {
        let d = Dataset::new(vec![Example::new(vec![1.0], 1)]).unwrap();
        let spec = LossSpec::new(LossKind::Quadratic, 2.0, 1.0, 0.0).unwrap();
        let model = train(&d, &spec, &TrainConfig::sgd_repro(), PrivacyBudget::new(1.0, 0.1).unwrap(), &NoiseDraw::zeros(1)).unwrap();
        assert_eq!(
            measure(&model, &d, &spec, SolveOptions::default()).unwrap_err(),
            Error::NonStationaryModel
        );
        let (report, _) = measure(&model, &d, &spec, SolveOptions::non_stationary(0.5)).unwrap();
        assert_eq!(report.damping_added, 0.5);
        assert!(report.w_min_eigen_lower >= 0.5);
    }

    #[test]
    fn extrapolation_values() {
        let line = ExtrapolationLine::new(1.0, 0.5, -0.1).unwrap();
        assert_eq!(extrapolate(&line, 1.0).unwrap(), 0.5);
        assert!((extrapolate(&line, 2.0).unwrap() - 0.4).abs() < 1e-15);
        let v: Vec<f64> = [1.0, 2.0, 3.0].iter().map(|&t| extrapolate(&line, t).unwrap()).collect();
        assert!((v[2] - 2.0 * v[1] + v[0]).abs() < 1e-15);
        assert!(extrapolate(&line, 0.0).is_err());
    }

    #[test]
    fn error_scale_values() {
        assert_eq!(error_scale(0.3, 0.3, 10).unwrap().scale, 0.0);
        let s = error_scale(0.01, 10.0, 1).unwrap().scale;
        assert!((9.9e7..=1.0e8).contains(&s));
        let a = error_scale(0.5, 0.8, 100).unwrap().scale;
        let b = error_scale(0.5, 0.8, 200).unwrap().scale;
        assert_eq!(a, 2.0 * b);
        assert!(error_scale(0.5, 0.8, 0).is_err());
    }

    #[test]
    fn worst_case_bound_values() {
        let e = std::f64::consts::E;
        assert!((worst_case_bound(1.0, 1.0, 1, 1.0 / e, 1.0, 1).unwrap() - 1.0).abs() < 1e-15);
        let a = worst_case_bound(2.0, 3.0, 4, 0.01, 0.5, 10).unwrap();
        let b = worst_case_bound(2.0, 3.0, 4, 0.01, 1.0, 10).unwrap();
        assert!((a - 2.0 * b).abs() < 1e-15);
        let v = worst_case_bound(20.396, 1.0, 104, 1e-3, 0.25, 10000).unwrap();
        assert!((v - 0.2187).abs() < 1e-4);
        assert!(worst_case_bound(1.0, 1.0, 1, 1.5, 1.0, 1).is_err());
    }
}

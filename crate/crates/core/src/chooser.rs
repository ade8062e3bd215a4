//! Accuracy-first budget selection: train once at a measuring budget, fit the
//! utility line and invert it at the requested utility.

use serde::{Deserialize, Serialize};

use crate::error::{positive, Error, Result};
use crate::model::{Dataset, ExtrapolationLine, LossSpec, NoiseDraw, PrivacyBudget, PrivateModel, SolverMode};
use crate::sensitivity::{error_scale, measure, ErrorScale, SolveOptions};
use crate::trainer::{train, TrainConfig};

/// Slopes at or below this magnitude are treated as zero.
pub const SLOPE_TOLERANCE: f64 = 1e-12;

/// Inverts the utility line: the budget predicted to reach `expected_utility`.
pub fn choose_epsilon(line: &ExtrapolationLine, expected_utility: f64) -> Result<f64> {
    if !(line.slope.abs() > SLOPE_TOLERANCE) {
        return Err(Error::InsensitiveUtility(line.slope));
    }
    let eps = (expected_utility - line.base_utility) / line.slope + line.measure_eps();
    if eps > 0.0 && eps.is_finite() {
        Ok(eps)
    } else {
        Err(Error::Unreachable(eps))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub model: PrivateModel,
    pub line: ExtrapolationLine,
    pub chosen_eps: f64,
    pub error_scale: ErrorScale,
    /// Set when the chosen and measuring budgets differ by more than a
    /// factor of ten, where the first-order prediction is unreliable.
    pub warning: Option<String>,
    pub trainings: usize,
}

/// Trains at `measure_eps` with the draw for `seed`, measures the utility
/// slope and returns the budget predicted to reach `expected_utility`.
pub fn plan(
    d: &Dataset,
    spec: &LossSpec,
    cfg: &TrainConfig,
    measure_eps: f64,
    delta: f64,
    expected_utility: f64,
    seed: u64,
) -> Result<Plan> {
    positive("measure_eps", measure_eps)?;
    let budget = PrivacyBudget::new(measure_eps, delta)?;
    let noise = NoiseDraw::from_seed(seed, d.p());
    let model = train(d, spec, cfg, budget, &noise)?;
    let opts = match cfg.solver_mode {
        SolverMode::Exact => SolveOptions::default(),
        SolverMode::SgdRepro => {
            let ridge = (cfg.reg_lambda + 2.0 * spec.lambda_hess() / measure_eps) / d.n() as f64;
            SolveOptions::non_stationary(ridge)
        }
    };
    let (_, line) = measure(&model, d, spec, opts)?;
    let chosen_eps = choose_epsilon(&line, expected_utility)?;
    let ratio = chosen_eps.max(measure_eps) / chosen_eps.min(measure_eps);
    let warning = (ratio > 10.0).then(|| {
        format!(
            "chosen epsilon {chosen_eps:.4} and measuring epsilon {measure_eps:.4} differ by more \
             than an order of magnitude; remeasure closer to the chosen value"
        )
    });
    Ok(Plan {
        error_scale: error_scale(measure_eps, chosen_eps, d.n())?,
        model,
        line,
        chosen_eps,
        warning,
        trainings: 1,
    })
}

/// Trains the release model at the chosen budget with a fresh draw; the
/// measuring draw is not reused.
pub fn deploy(
    d: &Dataset,
    spec: &LossSpec,
    cfg: &TrainConfig,
    plan: &Plan,
    fresh_seed: u64,
) -> Result<PrivateModel> {
    let budget = plan.model.budget.with_epsilon(plan.chosen_eps)?;
    train(d, spec, cfg, budget, &NoiseDraw::from_seed(fresh_seed, d.p()))
}

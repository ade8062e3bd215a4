//! Shared domain types. Everything here is immutable after construction;
//! constructors validate and the rest of the crate trusts the invariants.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{positive, unit_open, Error, Result};

/// Slack allowed on the unit-norm feature bound.
pub const NORM_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub features: Vec<f64>,
    pub label: i8,
}

impl Example {
    pub fn new(features: Vec<f64>, label: i8) -> Self {
        Self { features, label }
    }

    pub fn norm(&self) -> f64 {
        crate::linalg::norm(&self.features)
    }

    pub fn y(&self) -> f64 {
        f64::from(self.label)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Example>", into = "Vec<Example>")]
pub struct Dataset {
    examples: Vec<Example>,
    p: usize,
}

impl Dataset {
    /// Builds a dataset from already-normalized examples, enforcing every
    /// invariant.
    pub fn new(examples: Vec<Example>) -> Result<Self> {
        let p = examples.first().ok_or(Error::EmptyDataset)?.features.len();
        let d = Self { examples, p };
        validate_dataset(&d)?;
        Ok(d)
    }

    /// Ingestion path for raw rows: labels in {0,1} or {-1,+1} are mapped to
    /// {-1,+1} and every row is divided by the largest row norm.
    pub fn from_raw(rows: Vec<Vec<f64>>, labels: &[f64]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if rows.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: rows.len(),
                found: labels.len(),
            });
        }
        let p = rows[0].len();
        let mut max_norm = 0.0_f64;
        for row in &rows {
            if row.len() != p {
                return Err(Error::DimensionMismatch {
                    expected: p,
                    found: row.len(),
                });
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("ingestion"));
            }
            max_norm = max_norm.max(crate::linalg::norm(row));
        }
        let scale = if max_norm > 0.0 { 1.0 / max_norm } else { 1.0 };
        let examples = rows
            .into_iter()
            .zip(labels)
            .enumerate()
            .map(|(index, (row, &raw))| {
                let label = canonical_label(raw).ok_or(Error::InvalidLabel {
                    index,
                    label: raw as i64,
                })?;
                Ok(Example::new(row.into_iter().map(|v| v * scale).collect(), label))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(examples)
    }

    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    pub fn n(&self) -> usize {
        self.examples.len()
    }

    pub fn p(&self) -> usize {
        self.p
    }

    /// Subset in the order given by `indices`.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let examples = indices
            .iter()
            .map(|&i| {
                self.examples.get(i).cloned().ok_or(Error::DimensionMismatch {
                    expected: self.n(),
                    found: i,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(examples)
    }
}

impl TryFrom<Vec<Example>> for Dataset {
    type Error = Error;

    fn try_from(examples: Vec<Example>) -> Result<Self> {
        Self::new(examples)
    }
}

impl From<Dataset> for Vec<Example> {
    fn from(d: Dataset) -> Self {
        d.examples
    }
}

fn canonical_label(raw: f64) -> Option<i8> {
    if raw == 1.0 {
        Some(1)
    } else if raw == -1.0 || raw == 0.0 {
        Some(-1)
    } else {
        None
    }
}

/// Checks the dataset invariants: non-empty, uniform dimension, labels in
/// {-1,+1} and feature norms at most `1 + NORM_SLACK`.
pub fn validate_dataset(d: &Dataset) -> Result<&Dataset> {
    if d.examples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    for (index, ex) in d.examples.iter().enumerate() {
        if ex.features.len() != d.p {
            return Err(Error::DimensionMismatch {
                expected: d.p,
                found: ex.features.len(),
            });
        }
        if ex.label != 1 && ex.label != -1 {
            return Err(Error::InvalidLabel {
                index,
                label: i64::from(ex.label),
            });
        }
        let norm = ex.norm();
        if !(norm <= 1.0 + NORM_SLACK) {
            return Err(Error::FeatureNorm { index, norm });
        }
    }
    Ok(d)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBudget")]
pub struct PrivacyBudget {
    epsilon: f64,
    delta: f64,
}

#[derive(Deserialize)]
struct RawBudget {
    epsilon: f64,
    delta: f64,
}

impl TryFrom<RawBudget> for PrivacyBudget {
    type Error = Error;

    fn try_from(raw: RawBudget) -> Result<Self> {
        Self::new(raw.epsilon, raw.delta)
    }
}

impl PrivacyBudget {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self> {
        Ok(Self {
            epsilon: positive("epsilon", epsilon)?,
            delta: unit_open("delta", delta)?,
        })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        Self::new(epsilon, self.delta)
    }
}

/// Supported margin losses with their shape parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LossKind {
    Logistic,
    HuberSvm { h: f64 },
    Quadratic,
    SmoothHinge { t: f64 },
}

/// Default Huber smoothing half-width.
pub const DEFAULT_HUBER_H: f64 = 0.1;

impl LossKind {
    pub fn name(&self) -> &'static str {
        match self {
            LossKind::Logistic => "logistic",
            LossKind::HuberSvm { .. } => "huber_svm",
            LossKind::Quadratic => "quadratic",
            LossKind::SmoothHinge { .. } => "smooth_hinge",
        }
    }
}

impl std::str::FromStr for LossKind {
    type Err = Error;

    /// Accepts `logistic`, `quadratic`, `huber_svm[:h]` and `smooth_hinge[:t]`.
    fn from_str(s: &str) -> Result<Self> {
        let (name, param) = match s.split_once(':') {
            Some((name, param)) => {
                let v: f64 = param
                    .parse()
                    .map_err(|_| Error::UnknownLoss(s.to_string()))?;
                (name, Some(v))
            }
            None => (s, None),
        };
        let kind = match name.to_ascii_lowercase().replace('-', "_").as_str() {
            "logistic" | "lr" => LossKind::Logistic,
            "quadratic" => LossKind::Quadratic,
            "huber_svm" | "huber" | "svm" => LossKind::HuberSvm {
                h: positive("huber_h", param.unwrap_or(DEFAULT_HUBER_H))?,
            },
            "smooth_hinge" => LossKind::SmoothHinge {
                t: positive("smooth_t", param.unwrap_or(1.0))?,
            },
            _ => return Err(Error::UnknownLoss(s.to_string())),
        };
        if param.is_some() && matches!(kind, LossKind::Logistic | LossKind::Quadratic) {
            return Err(Error::UnknownLoss(s.to_string()));
        }
        Ok(kind)
    }
}

/// A loss together with its per-example bound constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawLossSpec", into = "RawLossSpec")]
pub struct LossSpec {
    kind: LossKind,
    zeta: f64,
    lambda_hess: f64,
    s_third: f64,
}

#[derive(Clone, Copy, Serialize, Deserialize)]
struct RawLossSpec {
    #[serde(flatten)]
    kind: LossKind,
    zeta: f64,
    lambda_hess: f64,
    s_third: f64,
}

impl TryFrom<RawLossSpec> for LossSpec {
    type Error = Error;

    fn try_from(r: RawLossSpec) -> Result<Self> {
        Self::new(r.kind, r.zeta, r.lambda_hess, r.s_third)
    }
}

impl From<LossSpec> for RawLossSpec {
    fn from(s: LossSpec) -> Self {
        Self {
            kind: s.kind,
            zeta: s.zeta,
            lambda_hess: s.lambda_hess,
            s_third: s.s_third,
        }
    }
}

impl LossSpec {
    pub fn new(kind: LossKind, zeta: f64, lambda_hess: f64, s_third: f64) -> Result<Self> {
        match kind {
            LossKind::HuberSvm { h } => {
                positive("huber_h", h)?;
            }
            LossKind::SmoothHinge { t } => {
                positive("smooth_t", t)?;
            }
            _ => {}
        }
        if !(s_third >= 0.0 && s_third.is_finite()) {
            return Err(Error::Domain {
                name: "s_third",
                value: s_third,
            });
        }
        Ok(Self {
            kind,
            zeta: positive("zeta", zeta)?,
            lambda_hess: positive("lambda_hess", lambda_hess)?,
            s_third,
        })
    }

    /// Spec with bound constants from [`crate::losses::default_bounds`].
    pub fn with_default_bounds(kind: LossKind, p: usize, mode: BoundMode) -> Result<Self> {
        let b = crate::losses::default_bounds(kind, p, mode)?;
        Self::new(kind, b.zeta, b.lambda_hess, b.s_third)
    }

    pub fn kind(&self) -> LossKind {
        self.kind
    }

    pub fn zeta(&self) -> f64 {
        self.zeta
    }

    pub fn lambda_hess(&self) -> f64 {
        self.lambda_hess
    }

    pub fn s_third(&self) -> f64 {
        self.s_third
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundMode {
    /// Dimension-scaled constants `zeta = 2 sqrt(p)`, `lambda = p`.
    Paper,
    /// Analytic bounds for unit-norm features.
    Tight,
}

impl std::str::FromStr for BoundMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "paper" => Ok(Self::Paper),
            "tight" => Ok(Self::Tight),
            other => Err(format!("unknown bound mode `{other}`")),
        }
    }
}

/// The standard-normal base vector `u` of the linear perturbation
/// `b = sigma(eps) * u`. Fixed once drawn, so `b` is a smooth function of
/// `eps`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseDraw {
    base_u: Vec<f64>,
    seed: u64,
}

impl NoiseDraw {
    /// Draws `p` standard normals with the Marsaglia polar method over a
    /// ChaCha20 stream seeded from `seed`.
    pub fn from_seed(seed: u64, p: usize) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        Self {
            base_u: standard_normals(&mut rng, p),
            seed,
        }
    }

    /// Explicit base vector, for tests and closed-form instances.
    pub fn from_vector(base_u: Vec<f64>, seed: u64) -> Self {
        Self { base_u, seed }
    }

    pub fn zeros(p: usize) -> Self {
        Self::from_vector(vec![0.0; p], 0)
    }

    pub fn base_u(&self) -> &[f64] {
        &self.base_u
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Bitwise identity, used to check that a perturbation derivative shares
    /// its base vector with the perturbation used in training.
    pub fn same_draw(&self, other: &NoiseDraw) -> bool {
        self.seed == other.seed
            && self.base_u.len() == other.base_u.len()
            && self
                .base_u
                .iter()
                .zip(&other.base_u)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

/// Marsaglia polar method. Both values of each accepted pair are used.
pub fn standard_normals<R: Rng>(rng: &mut R, count: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(count + 1);
    while out.len() < count {
        let u: f64 = rng.gen::<f64>() * 2.0 - 1.0;
        let v: f64 = rng.gen::<f64>() * 2.0 - 1.0;
        let s = u * u + v * v;
        if s >= 1.0 || s == 0.0 {
            continue;
        }
        let m = (-2.0 * s.ln() / s).sqrt();
        out.push(u * m);
        out.push(v * m);
    }
    out.truncate(count);
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverMode {
    /// Newton iterations until the gradient-norm tolerance is met.
    Exact,
    /// Fixed-step full-gradient descent reproducing the original protocol.
    SgdRepro,
}

impl std::str::FromStr for SolverMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "exact" => Ok(Self::Exact),
            "sgd" | "sgd_repro" => Ok(Self::SgdRepro),
            other => Err(format!("unknown solver `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrivateModel {
    pub theta: Vec<f64>,
    pub budget: PrivacyBudget,
    pub reg_lambda: f64,
    pub noise: NoiseDraw,
    pub loss: LossSpec,
    pub grad_norm_at_solution: f64,
    pub solver_mode: SolverMode,
    pub iterations_used: usize,
}

impl PrivateModel {
    pub fn theta_norm(&self) -> f64 {
        crate::linalg::norm(&self.theta)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport {
    /// Derivative of the minimizer with respect to epsilon.
    pub dtheta_deps: Vec<f64>,
    /// Utility slope; zero until [`crate::sensitivity::utility_slope`] fills it.
    pub df_deps: f64,
    /// Certified lower bound on the spectrum of the solved system.
    pub w_min_eigen_lower: f64,
    pub damping_added: f64,
}

/// Affine utility predictor `F(eps) ~ base_utility + slope * (eps - measure_eps)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawLine")]
pub struct ExtrapolationLine {
    measure_eps: f64,
    pub base_utility: f64,
    pub slope: f64,
}

#[derive(Deserialize)]
struct RawLine {
    measure_eps: f64,
    base_utility: f64,
    slope: f64,
}

impl TryFrom<RawLine> for ExtrapolationLine {
    type Error = Error;

    fn try_from(r: RawLine) -> Result<Self> {
        Self::new(r.measure_eps, r.base_utility, r.slope)
    }
}

impl ExtrapolationLine {
    pub fn new(measure_eps: f64, base_utility: f64, slope: f64) -> Result<Self> {
        Ok(Self {
            measure_eps: positive("measure_eps", measure_eps)?,
            base_utility,
            slope,
        })
    }

    pub fn measure_eps(&self) -> f64 {
        self.measure_eps
    }
}

//! Margin losses `l(y <theta, x>)`: values, gradients, rank-one Hessian
//! factors, dataset aggregates and bound constants.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, Matrix};
use crate::model::{BoundMode, Dataset, Example, LossKind, LossSpec};

/// Per-example evaluation. The Hessian is `hess_factor * x x^T`.
#[derive(Debug, Clone, PartialEq)]
pub struct LossEval {
    pub value: f64,
    pub grad: Vec<f64>,
    pub hess_factor: f64,
}

/// Dataset means of value, gradient and Hessian.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub value: f64,
    pub grad: Vec<f64>,
    pub hess: Matrix,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub zeta: f64,
    pub lambda_hess: f64,
    pub s_third: f64,
}

/// `log(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `t log(1 + e^{(1 - margin)/t})`, a smooth surrogate of the hinge loss.
pub fn smooth_hinge(t: f64, margin: f64) -> f64 {
    t * softplus((1.0 - margin) / t)
}

/// Loss value and its first two derivatives as functions of the margin.
fn margin_terms(kind: LossKind, m: f64) -> (f64, f64, f64) {
    match kind {
        LossKind::Logistic => {
            let s = sigmoid(-m);
            (softplus(-m), -s, s * (1.0 - s))
        }
        LossKind::HuberSvm { h } => {
            if m > 1.0 + h {
                (0.0, 0.0, 0.0)
            } else if m < 1.0 - h {
                (1.0 - m, -1.0, 0.0)
            } else {
                let r = 1.0 + h - m;
                (r * r / (4.0 * h), -r / (2.0 * h), 1.0 / (2.0 * h))
            }
        }
        LossKind::Quadratic => {
            let r = 1.0 - m;
            (0.5 * r * r, -r, 1.0)
        }
        LossKind::SmoothHinge { t } => {
            let a = (1.0 - m) / t;
            let s = sigmoid(a);
            (t * softplus(a), -s, s * (1.0 - s) / t)
        }
    }
}

fn margin(theta: &[f64], ex: &Example) -> f64 {
    ex.y() * dot(theta, &ex.features)
}

pub fn loss_value(spec: &LossSpec, theta: &[f64], ex: &Example) -> f64 {
    margin_terms(spec.kind(), margin(theta, ex)).0
}

pub fn loss_eval(spec: &LossSpec, theta: &[f64], ex: &Example) -> LossEval {
    let (value, d1, d2) = margin_terms(spec.kind(), margin(theta, ex));
    let g = d1 * ex.y();
    LossEval {
        value,
        grad: ex.features.iter().map(|x| g * x).collect(),
        hess_factor: d2,
    }
}

fn check_dim(theta: &[f64], d: &Dataset) -> Result<()> {
    if theta.len() == d.p() {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            expected: d.p(),
            found: theta.len(),
        })
    }
}

/// Mean loss and gradient, skipping the Hessian.
pub fn value_and_grad(spec: &LossSpec, theta: &[f64], d: &Dataset) -> Result<(f64, Vec<f64>)> {
    check_dim(theta, d)?;
    let mut value = 0.0;
    let mut grad = vec![0.0; d.p()];
    for ex in d.examples() {
        let (v, d1, _) = margin_terms(spec.kind(), margin(theta, ex));
        value += v;
        crate::linalg::axpy(d1 * ex.y(), &ex.features, &mut grad);
    }
    let inv_n = 1.0 / d.n() as f64;
    grad.iter_mut().for_each(|g| *g *= inv_n);
    Ok((value * inv_n, grad))
}

/// Mean loss only.
pub fn mean_loss(spec: &LossSpec, theta: &[f64], d: &Dataset) -> Result<f64> {
    check_dim(theta, d)?;
    let total: f64 = d.examples().iter().map(|ex| loss_value(spec, theta, ex)).sum();
    Ok(total / d.n() as f64)
}

pub fn aggregate(spec: &LossSpec, theta: &[f64], d: &Dataset) -> Result<Aggregate> {
    check_dim(theta, d)?;
    let p = d.p();
    let mut value = 0.0;
    let mut grad = vec![0.0; p];
    let mut hess = Matrix::zeros(p);
    for ex in d.examples() {
        let (v, d1, d2) = margin_terms(spec.kind(), margin(theta, ex));
        value += v;
        crate::linalg::axpy(d1 * ex.y(), &ex.features, &mut grad);
        if d2 != 0.0 {
            hess.rank_one_lower(d2, &ex.features);
        }
    }
    let inv_n = 1.0 / d.n() as f64;
    grad.iter_mut().for_each(|g| *g *= inv_n);
    hess.scale(inv_n);
    hess.symmetrize_from_lower();
    Ok(Aggregate {
        value: value * inv_n,
        grad,
        hess,
    })
}

/// Per-example bounds on the gradient norm, the Hessian spectrum and the
/// third derivative.
///
/// `Paper` mode returns `zeta = 2 sqrt(p)` and `lambda = p`; `Tight` mode
/// returns analytic bounds for unit-norm features. The third-derivative
/// bound is the analytic one in both modes.
pub fn default_bounds(kind: LossKind, p: usize, mode: BoundMode) -> Result<Bounds> {
    if p == 0 {
        return Err(Error::Domain {
            name: "p",
            value: 0.0,
        });
    }
    // max |s (1 - s) (1 - 2 s)| over the logistic sigmoid is 1/(6 sqrt 3)
    let third_logistic = 1.0 / (6.0 * 3f64.sqrt());
    let tight = match kind {
        LossKind::Logistic => Bounds {
            zeta: 1.0,
            lambda_hess: 0.25,
            s_third: 0.1,
        },
        LossKind::HuberSvm { h } => Bounds {
            zeta: 1.0,
            lambda_hess: 1.0 / (2.0 * crate::error::positive("huber_h", h)?),
            s_third: 0.0,
        },
        LossKind::Quadratic => Bounds {
            zeta: 2.0,
            lambda_hess: 1.0,
            s_third: 0.0,
        },
        LossKind::SmoothHinge { t } => {
            let t = crate::error::positive("smooth_t", t)?;
            Bounds {
                zeta: 1.0,
                lambda_hess: 1.0 / (4.0 * t),
                s_third: third_logistic / (t * t),
            }
        }
    };
    Ok(match mode {
        BoundMode::Tight => tight,
        BoundMode::Paper => Bounds {
            zeta: 2.0 * (p as f64).sqrt(),
            lambda_hess: p as f64,
            s_third: tight.s_third,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BoundMode, Dataset, Example, LossKind};

    fn spec(kind: LossKind) -> LossSpec {
        LossSpec::with_default_bounds(kind, 3, BoundMode::Tight).unwrap()
    }

    fn unit_example(m: f64) -> (Vec<f64>, Example) {
        (vec![m], Example::new(vec![1.0], 1))
    }

    #[test]
    fn logistic_at_zero_margin() {
        let (theta, ex) = unit_example(0.0);
        let s = spec(LossKind::Logistic);
        assert!((loss_value(&s, &theta, &ex) - 2f64.ln()).abs() < 1e-15);
        let e = loss_eval(&s, &theta, &ex);
        assert_eq!(e.grad, vec![-0.5]);
        assert_eq!(e.hess_factor, 0.25);
    }

    #[test]
    fn logistic_is_stable_for_huge_margins() {
        let s = spec(LossKind::Logistic);
        let ex = Example::new(vec![1.0], 1);
        assert_eq!(loss_value(&s, &[1000.0], &ex), 0.0);
        assert!((loss_value(&s, &[-1000.0], &ex) - 1000.0).abs() < 1e-12);
        assert!(loss_eval(&s, &[-1000.0], &ex).hess_factor.is_finite());
    }

    #[test]
    fn huber_branches() {
        let s = spec(LossKind::HuberSvm { h: 0.1 });
        let ex = Example::new(vec![1.0], 1);
        assert_eq!(loss_value(&s, &[1.2], &ex), 0.0);
        assert!((loss_value(&s, &[1.0], &ex) - 0.025).abs() < 1e-15);
        let lin = loss_eval(&s, &[0.5], &ex);
        assert_eq!(lin.grad, vec![-1.0]);
        assert_eq!(lin.hess_factor, 0.0);
        assert!((loss_eval(&s, &[1.0], &ex).hess_factor - 5.0).abs() < 1e-12);
    }

    #[test]
    fn quadratic_minimum() {
        let (theta, ex) = unit_example(1.0);
        let e = loss_eval(&spec(LossKind::Quadratic), &theta, &ex);
        assert_eq!(e.grad, vec![0.0]);
        assert_eq!(e.hess_factor, 1.0);
    }

    #[test]
    fn smooth_hinge_limits() {
        assert!((smooth_hinge(1.0, 1.0) - 2f64.ln()).abs() < 1e-15);
        assert!(smooth_hinge(0.01, 2.0).abs() < 1e-40);
        assert!((smooth_hinge(0.01, 0.0) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn aggregate_of_single_example_equals_eval() {
        let s = spec(LossKind::Logistic);
        let ex = Example::new(vec![0.3, -0.2, 0.5], -1);
        let theta = [0.7, 1.1, -0.4];
        let d = Dataset::new(vec![ex.clone()]).unwrap();
        let agg = aggregate(&s, &theta, &d).unwrap();
        let e = loss_eval(&s, &theta, &ex);
        assert_eq!(agg.value, e.value);
        assert_eq!(agg.grad, e.grad);
        for i in 0..3 {
            for j in 0..3 {
                let want = e.hess_factor * ex.features[i] * ex.features[j];
                assert!((agg.hess.get(i, j) - want).abs() < 1e-16);
            }
        }
    }

    #[test]
    fn aggregate_of_identical_examples_is_the_example() {
        let s = spec(LossKind::Quadratic);
        let ex = Example::new(vec![0.6, 0.0, 0.8], 1);
        let theta = [0.2, 0.1, 0.3];
        let d = Dataset::new(vec![ex.clone(), ex.clone()]).unwrap();
        let agg = aggregate(&s, &theta, &d).unwrap();
        let e = loss_eval(&s, &theta, &ex);
        assert!((agg.value - e.value).abs() < 1e-16);
        for (a, b) in agg.grad.iter().zip(&e.grad) {
            assert!((a - b).abs() < 1e-16);
        }
    }

    #[test]
    fn bounds_by_mode() {
        let b = default_bounds(LossKind::Logistic, 104, BoundMode::Paper).unwrap();
        assert!((b.zeta - 20.396).abs() < 1e-3);
        assert_eq!(b.lambda_hess, 104.0);
        let t = default_bounds(LossKind::Logistic, 1, BoundMode::Tight).unwrap();
        assert_eq!((t.zeta, t.lambda_hess), (1.0, 0.25));
        assert!(t.s_third >= 1.0 / (6.0 * 3f64.sqrt()));
        let h = default_bounds(LossKind::HuberSvm { h: 0.1 }, 10, BoundMode::Tight).unwrap();
        assert!((h.lambda_hess - 5.0).abs() < 1e-12);
        assert_eq!(h.s_third, 0.0);
        assert!(default_bounds(LossKind::Logistic, 0, BoundMode::Tight).is_err());
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let d = Dataset::new(vec![Example::new(vec![0.1, 0.2], 1)]).unwrap();
        assert!(aggregate(&spec(LossKind::Logistic), &[0.0], &d).is_err());
    }
}

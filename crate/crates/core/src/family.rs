//! Canonical exponential-family cumulant functions.
//!
//! Every family is described by a convex cumulant `b: R^k -> R`. The GLM loss
//! of a row is `b(Xβ) - yᵀXβ`, its gradient in `β` is the canonical score
//! `Xᵀ(∇b(Xβ) - y)` and the curvature is `Xᵀ∇²b(Xβ)X`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{GaiError, Result};

/// GLM family with a canonical link.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum GlmFamily {
    Linear,
    Logistic,
    /// Multinomial logit with `k` non-baseline classes.
    Mnl { k: usize },
    Poisson,
}

impl GlmFamily {
    /// Output dimension of the natural parameter.
    pub fn k(&self) -> usize {
        match self {
            GlmFamily::Mnl { k } => *k,
            _ => 1,
        }
    }

    pub fn name(&self) -> String {
        match self {
            GlmFamily::Linear => "linear".into(),
            GlmFamily::Logistic => "logistic".into(),
            GlmFamily::Mnl { k } => format!("mnl{k}"),
            GlmFamily::Poisson => "poisson".into(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let GlmFamily::Mnl { k } = self {
            if *k == 0 {
                return Err(GaiError::config("MNL family needs k >= 1"));
            }
        }
        Ok(())
    }

    fn check(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.k() {
            return Err(GaiError::dim(format!(
                "theta has length {}, family {} expects {}",
                theta.len(),
                self.name(),
                self.k()
            )));
        }
        if theta.iter().any(|t| !t.is_finite()) {
            return Err(GaiError::Domain("non-finite natural parameter".into()));
        }
        Ok(())
    }

    /// Cumulant `b(θ)`.
    pub fn b_value(&self, theta: &[f64]) -> Result<f64> {
        self.check(theta)?;
        Ok(self.b_unchecked(theta))
    }

    /// Mean map `∇b(θ)`.
    pub fn grad_b(&self, theta: &[f64]) -> Result<Vec<f64>> {
        self.check(theta)?;
        let mut out = vec![0.0; self.k()];
        self.grad_into(theta, &mut out);
        Ok(out)
    }

    /// Variance map `∇²b(θ)`.
    pub fn hess_b(&self, theta: &[f64]) -> Result<DMatrix<f64>> {
        self.check(theta)?;
        let k = self.k();
        let mut out = vec![0.0; k * k];
        self.hess_into(theta, &mut out);
        Ok(DMatrix::from_row_slice(k, k, &out))
    }

    pub(crate) fn b_unchecked(&self, theta: &[f64]) -> f64 {
        match self {
            GlmFamily::Linear => 0.5 * theta[0] * theta[0],
            GlmFamily::Logistic => softplus(theta[0]),
            GlmFamily::Mnl { .. } => {
                let m = theta.iter().copied().fold(0.0_f64, f64::max);
                let s: f64 = (-m).exp() + theta.iter().map(|t| (t - m).exp()).sum::<f64>();
                m + s.ln()
            }
            GlmFamily::Poisson => theta[0].exp(),
        }
    }

    pub(crate) fn grad_into(&self, theta: &[f64], out: &mut [f64]) {
        match self {
            GlmFamily::Linear => out[0] = theta[0],
            GlmFamily::Logistic => out[0] = sigmoid(theta[0]),
            GlmFamily::Mnl { .. } => softmax_into(theta, out),
            GlmFamily::Poisson => out[0] = theta[0].exp(),
        }
    }

    /// Row-major `k×k` Hessian.
    pub(crate) fn hess_into(&self, theta: &[f64], out: &mut [f64]) {
        match self {
            GlmFamily::Linear => out[0] = 1.0,
            GlmFamily::Logistic => {
                let p = sigmoid(theta[0]);
                out[0] = p * (1.0 - p);
            }
            GlmFamily::Mnl { k } => {
                let k = *k;
                let mut p = vec![0.0; k];
                softmax_into(theta, &mut p);
                for i in 0..k {
                    for j in 0..k {
                        out[i * k + j] = if i == j { p[i] * (1.0 - p[i]) } else { -p[i] * p[j] };
                    }
                }
            }
            GlmFamily::Poisson => out[0] = theta[0].exp(),
        }
    }

    /// Clip a mean-scale prediction into the family's mean range.
    pub fn clip_mean(&self, mu: &mut [f64]) {
        match self {
            GlmFamily::Linear => {}
            GlmFamily::Logistic | GlmFamily::Mnl { .. } => {
                for m in mu.iter_mut() {
                    *m = m.clamp(0.0, 1.0);
                }
            }
            GlmFamily::Poisson => {
                for m in mu.iter_mut() {
                    *m = m.max(0.0);
                }
            }
        }
    }

    /// Prediction loss (negative log-likelihood up to constants) of mean
    /// prediction `mu` for observed label `y`. Used for model selection.
    pub fn mean_loss(&self, y: &[f64], mu: &[f64]) -> f64 {
        const FLOOR: f64 = 1e-12;
        match self {
            GlmFamily::Linear => 0.5 * (y[0] - mu[0]).powi(2),
            GlmFamily::Logistic => {
                let p = mu[0].clamp(FLOOR, 1.0 - FLOOR);
                -(y[0] * p.ln() + (1.0 - y[0]) * (1.0 - p).ln())
            }
            GlmFamily::Mnl { .. } => {
                let mut loss = 0.0;
                let mut rest_y = 1.0;
                let mut rest_mu = 1.0;
                for (yj, mj) in y.iter().zip(mu) {
                    loss -= yj * mj.clamp(FLOOR, 1.0).ln();
                    rest_y -= yj;
                    rest_mu -= mj;
                }
                loss - rest_y * rest_mu.clamp(FLOOR, 1.0).ln()
            }
            GlmFamily::Poisson => {
                let m = mu[0].max(FLOOR);
                m - y[0] * m.ln()
            }
        }
    }
}

pub(crate) fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^t)` without overflow.
pub(crate) fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

/// Softmax against an implicit zero-utility baseline.
pub(crate) fn softmax_into(theta: &[f64], out: &mut [f64]) {
    let m = theta.iter().copied().fold(0.0_f64, f64::max);
    let base = (-m).exp();
    let mut denom = base;
    for (o, t) in out.iter_mut().zip(theta) {
        *o = (t - m).exp();
        denom += *o;
    }
    for o in out.iter_mut() {
        *o /= denom;
    }
}

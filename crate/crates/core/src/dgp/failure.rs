use std::collections::BTreeMap;

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{check_finite, check_positive, Raw};
use crate::data::{Dataset, Design};
use crate::error::{GaiError, Result};
use crate::rng::Rng;

/// Two-component mixture with component-dependent noise and selection.
///
/// Component 1 (probability `p`) has Rademacher coordinates and is always
/// labeled; component 0 has coordinates `±0.5` or `±√1.75` and is labeled with
/// probability `κ`. Both satisfy `E[xxᵀ] = I` and their supports are disjoint.
/// `y = xᵀβ + N(0, σ²_c)`, `z = y - xᵀβ`, so `g* = y`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FailureParams {
    pub p: f64,
    pub sigma1: f64,
    pub sigma0: f64,
    pub kappa: f64,
    pub beta: Vec<f64>,
}

impl Default for FailureParams {
    fn default() -> Self {
        FailureParams { p: 0.5, sigma1: 0.1, sigma0: 1.0, kappa: 0.1, beta: vec![1.0, -0.5] }
    }
}

pub(crate) const SMALL: f64 = 0.5;

impl FailureParams {
    pub(crate) fn validate(&self) -> Result<()> {
        if !(self.p > 0.0 && self.p < 1.0) {
            return Err(GaiError::config(format!("mixture weight p must lie in (0, 1), got {}", self.p)));
        }
        if !(self.kappa > 0.0 && self.kappa <= 1.0) {
            return Err(GaiError::config(format!("kappa must lie in (0, 1], got {}", self.kappa)));
        }
        check_positive("sigma1", self.sigma1)?;
        check_positive("sigma0", self.sigma0)?;
        if self.beta.is_empty() {
            return Err(GaiError::config("beta must be non-empty"));
        }
        check_finite("beta", &self.beta)
    }

    /// Per-coordinate asymptotic variance of the primary-only estimator.
    pub fn primary_variance(&self) -> f64 {
        let (p, k) = (self.p, self.kappa);
        (p * self.sigma1.powi(2) + (1.0 - p) * self.sigma0.powi(2) * k) / (p + (1.0 - p) * k).powi(2)
    }

    /// Per-coordinate asymptotic variance of the augmented estimator.
    pub fn gai_variance(&self) -> f64 {
        self.p * self.sigma1.powi(2) + (1.0 - self.p) * self.sigma0.powi(2)
    }
}

pub(crate) fn draw(p: &FailureParams, n: usize, rng: &mut Rng) -> Result<Raw> {
    let d = p.beta.len();
    let large = 1.75_f64.sqrt();
    let mut x = Vec::with_capacity(n * d);
    let mut y = Vec::with_capacity(n);
    let mut z = Vec::with_capacity(n);
    let mut w = Vec::with_capacity(n);
    let mut e = Vec::with_capacity(n);
    let mut mean = Vec::with_capacity(n);
    for _ in 0..n {
        let first = rng.random::<f64>() < p.p;
        let mut lin = 0.0;
        for b in &p.beta {
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            let mag = if first {
                1.0
            } else if rng.random::<bool>() {
                SMALL
            } else {
                large
            };
            x.push(sign * mag);
            lin += sign * mag * b;
        }
        let sd = if first { p.sigma1 } else { p.sigma0 };
        let noise: f64 = sd * rng.sample::<f64, _>(StandardNormal);
        let ei = if first { 1.0 } else { p.kappa };
        y.push(lin + noise);
        z.push(noise);
        w.push(rng.random::<f64>() < ei);
        e.push(ei);
        mean.push(lin);
    }
    let g_star = y.clone();
    let data = Dataset::from_parts(Design::new(1, d, x)?, y, w, z, 1)?;
    let mut printed = BTreeMap::new();
    printed.insert("primary".to_string(), p.primary_variance());
    printed.insert("gai".to_string(), p.gai_variance());
    Ok(Raw { data, g_star, e_star: e, mean_given_x: mean, printed })
}

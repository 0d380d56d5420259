use std::collections::BTreeMap;

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{check_positive, Labeling, Raw};
use crate::data::{Dataset, Design};
use crate::error::Result;
use crate::rng::Rng;

/// `X ∈ {-1, +1}` uniform, `U ~ N(0, σ²)`, `y = XU`, AI output `U`.
///
/// The estimation target is `E[y]` (intercept-only design). The covariate `X`
/// enters only through the auxiliary signal, stored as `z = (U, X)`, so the
/// oracle outcome model is `g*(z) = z₀ z₁`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HiddenParams {
    pub sigma: f64,
}

impl Default for HiddenParams {
    fn default() -> Self {
        HiddenParams { sigma: 1.0 }
    }
}

impl HiddenParams {
    pub(crate) fn validate(&self) -> Result<()> {
        check_positive("sigma", self.sigma)
    }

    /// √n-variance of the prediction-powered mean with weight `λ` and
    /// `r = n_P / n_A`.
    pub fn ppi_variance(&self, lambda: f64, r: f64) -> f64 {
        self.sigma.powi(2) * (1.0 + lambda * lambda * (1.0 + r))
    }
}

pub(crate) fn draw(p: &HiddenParams, n: usize, labeling: &Labeling, rng: &mut Rng) -> Result<Raw> {
    let mut y = Vec::with_capacity(n);
    let mut z = Vec::with_capacity(2 * n);
    let mut w = Vec::with_capacity(n);
    for i in 0..n {
        let x = if rng.random::<bool>() { 1.0 } else { -1.0 };
        let u: f64 = p.sigma * rng.sample::<f64, _>(StandardNormal);
        y.push(x * u);
        z.extend([u, x]);
        w.push(labeling.draw(i, rng));
    }
    let g_star = y.clone();
    let data = Dataset::from_parts(Design::new(1, 1, vec![1.0; n])?, y, w, z, 2)?;
    let rho = labeling.rate(n);
    let s2 = p.sigma.powi(2);
    let mut printed = BTreeMap::new();
    printed.insert("gai".to_string(), s2);
    printed.insert("primary".to_string(), s2);
    if rho < 1.0 {
        let r = rho / (1.0 - rho);
        printed.insert("ppi_lambda1".to_string(), p.ppi_variance(1.0, r));
    }
    printed.insert("ppi_optimal_lambda".to_string(), 0.0);
    Ok(Raw { data, g_star, e_star: vec![rho; n], mean_given_x: vec![0.0; n], printed })
}

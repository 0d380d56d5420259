use std::collections::BTreeMap;

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{check_finite, check_positive, Labeling, Raw};
use crate::data::{Dataset, Design};
use crate::error::{GaiError, Result};
use crate::rng::Rng;

/// Nonlinear regression fitted by a straight line.
///
/// `x` is uniform on `levels` equally spaced points of `[-1, 1]`, `X = (1, x)`,
/// `y = m(x) + N(0, noise_sd²)` with `m(x) = c₀ + c₁x + c₂x² + c₃ sin(3x)`.
/// The signal `z = (x² + ν₁, sin(3x) + ν₂)` carries the nonlinear features
/// with independent noise, so `y ⊥ z | X`; with `informative_z = false` it is
/// pure noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MisspecParams {
    pub levels: usize,
    pub coef: [f64; 4],
    pub noise_sd: f64,
    pub z_noise_sd: f64,
    pub informative_z: bool,
}

impl Default for MisspecParams {
    fn default() -> Self {
        MisspecParams { levels: 41, coef: [0.5, 1.0, 1.5, 0.5], noise_sd: 0.3, z_noise_sd: 0.1, informative_z: true }
    }
}

impl MisspecParams {
    pub(crate) fn validate(&self) -> Result<()> {
        if self.levels < 2 {
            return Err(GaiError::config("misspecified model needs at least 2 covariate levels"));
        }
        check_finite("mean coefficients", &self.coef)?;
        check_positive("noise_sd", self.noise_sd)?;
        check_positive("z_noise_sd", self.z_noise_sd)
    }

    pub fn level(&self, i: usize) -> f64 {
        -1.0 + 2.0 * i as f64 / (self.levels - 1) as f64
    }

    /// `E[y | x]`.
    pub fn mean(&self, x: f64) -> f64 {
        let c = &self.coef;
        c[0] + c[1] * x + c[2] * x * x + c[3] * (3.0 * x).sin()
    }

    /// Population least-squares coefficients of `m(x)` on `(1, x)`.
    pub fn population_beta(&self) -> Vec<f64> {
        let l = self.levels as f64;
        let (mut sx, mut sxx, mut sm, mut sxm) = (0.0, 0.0, 0.0, 0.0);
        for i in 0..self.levels {
            let x = self.level(i);
            let m = self.mean(x);
            sx += x / l;
            sxx += x * x / l;
            sm += m / l;
            sxm += x * m / l;
        }
        let det = sxx - sx * sx;
        vec![(sxx * sm - sx * sxm) / det, (sxm - sx * sm) / det]
    }
}

pub(crate) fn draw(p: &MisspecParams, n: usize, labeling: &Labeling, rng: &mut Rng) -> Result<Raw> {
    let mut x = Vec::with_capacity(2 * n);
    let mut y = Vec::with_capacity(n);
    let mut z = Vec::with_capacity(2 * n);
    let mut w = Vec::with_capacity(n);
    let mut m = Vec::with_capacity(n);
    for i in 0..n {
        let xi = p.level(rng.random_range(0..p.levels));
        let mi = p.mean(xi);
        let eps: f64 = rng.sample(StandardNormal);
        let nu1: f64 = rng.sample(StandardNormal);
        let nu2: f64 = rng.sample(StandardNormal);
        x.extend([1.0, xi]);
        y.push(mi + p.noise_sd * eps);
        if p.informative_z {
            z.extend([xi * xi + p.z_noise_sd * nu1, (3.0 * xi).sin() + p.z_noise_sd * nu2]);
        } else {
            z.extend([nu1, nu2]);
        }
        w.push(labeling.draw(i, rng));
        m.push(mi);
    }
    let data = Dataset::from_parts(Design::new(1, 2, x)?, y, w, z, 2)?;
    Ok(Raw { data, g_star: m.clone(), e_star: vec![labeling.rate(n); n], mean_given_x: m, printed: BTreeMap::new() })
}

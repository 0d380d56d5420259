use std::collections::BTreeMap;
use std::sync::{Arc, Mutex, OnceLock};

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::quadrature::{gauss_legendre, standard_normal_rule};
use super::population_fit;
use super::{check_finite, Labeling, Raw};
use crate::data::{Dataset, Design};
use crate::error::{GaiError, Result};
use crate::family::{sigmoid, GlmFamily};
use crate::rng::Rng;

/// Purchase model with a persona vector `U ~ N(0, I_p)` driving both the true
/// outcome and its twin-generated proxy.
///
/// `y ~ Bernoulli(σ(η₀ + η₁·price + h(U)))`, `z ~ Bernoulli(σ(γ₀ + γ₁·price + h̃(U)))`
/// with `h(U) = aᵀU + q_a (aᵀU)²` and `h̃(U) = bᵀU + q_b (bᵀU)²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TwinParams {
    pub eta0: f64,
    pub eta1: f64,
    pub a: Vec<f64>,
    pub quad_a: f64,
    pub gamma0: f64,
    pub gamma1: f64,
    pub b: Vec<f64>,
    pub quad_b: f64,
    pub price_low: f64,
    pub price_high: f64,
}

impl Default for TwinParams {
    fn default() -> Self {
        TwinParams {
            eta0: 1.0,
            eta1: -0.9,
            a: vec![2.0, 1.5, 1.0, 0.5],
            quad_a: 0.0,
            gamma0: 0.0,
            gamma1: -0.9,
            b: vec![3.0, 2.25, 1.5, 0.75],
            quad_b: 0.0,
            price_low: 0.5,
            price_high: 2.5,
        }
    }
}

const NODES: usize = 24;
const PRICE_NODES: usize = 64;

impl TwinParams {
    pub(crate) fn validate(&self) -> Result<()> {
        if self.a.is_empty() || self.a.len() != self.b.len() {
            return Err(GaiError::config("persona weights a and b need the same positive length"));
        }
        check_finite("twin coefficients", &[self.eta0, self.eta1, self.gamma0, self.gamma1, self.quad_a, self.quad_b])?;
        check_finite("persona weights", &self.a)?;
        check_finite("persona weights", &self.b)?;
        if !(self.price_low < self.price_high) {
            return Err(GaiError::config("price range must satisfy low < high"));
        }
        Ok(())
    }

    fn norms(&self) -> (f64, f64, f64) {
        let na = self.a.iter().map(|v| v * v).sum::<f64>().sqrt();
        let nb = self.b.iter().map(|v| v * v).sum::<f64>().sqrt();
        let cov: f64 = self.a.iter().zip(&self.b).map(|(x, y)| x * y).sum();
        (na, nb, cov)
    }

    /// `E[y | price]`.
    pub fn mean_given_price(&self, price: f64) -> f64 {
        let (x, w) = standard_normal_rule(NODES);
        let (na, _, _) = self.norms();
        x.iter()
            .zip(&w)
            .map(|(xi, wi)| {
                let s = na * xi;
                wi * sigmoid(self.eta0 + self.eta1 * price + s + self.quad_a * s * s)
            })
            .sum()
    }

    /// Population logistic coefficients of `y` on `(1, price)`: the weighted
    /// fit of `E[y | price]` over a Gauss–Legendre rule for the uniform price.
    pub fn population_beta(&self) -> Result<Vec<f64>> {
        let (x, w) = gauss_legendre(PRICE_NODES);
        let half = 0.5 * (self.price_high - self.price_low);
        let mid = 0.5 * (self.price_high + self.price_low);
        let prices: Vec<f64> = x.iter().map(|t| mid + half * t).collect();
        let design = Design::new(1, 2, prices.iter().flat_map(|p| [1.0, *p]).collect())?;
        let targets: Vec<f64> = prices.iter().map(|p| self.mean_given_price(*p)).collect();
        let weights: Vec<f64> = w.iter().map(|v| v / 2.0).collect();
        population_fit(GlmFamily::Logistic, &design, &targets, &weights)
    }

    /// `E[y | price, z]`, integrating the persona scores `(aᵀU, bᵀU)`.
    pub fn g_star(&self, price: f64, z: f64) -> f64 {
        let (x, w) = standard_normal_rule(NODES);
        let (na, nb, cov) = self.norms();
        let corr = if na > 0.0 && nb > 0.0 { cov / (na * nb) } else { 0.0 };
        let resid = (1.0 - corr * corr).max(0.0).sqrt();
        let mut num = 0.0;
        let mut den = 0.0;
        for (x1, w1) in x.iter().zip(&w) {
            let sa = na * x1;
            let py = sigmoid(self.eta0 + self.eta1 * price + sa + self.quad_a * sa * sa);
            for (x2, w2) in x.iter().zip(&w) {
                let sb = nb * (corr * x1 + resid * x2);
                let pz = sigmoid(self.gamma0 + self.gamma1 * price + sb + self.quad_b * sb * sb);
                let lik = if z >= 0.5 { pz } else { 1.0 - pz };
                num += w1 * w2 * py * lik;
                den += w1 * w2 * lik;
            }
        }
        num / den
    }
}

pub(crate) fn draw(p: &TwinParams, n: usize, labeling: &Labeling, rng: &mut Rng) -> Result<Raw> {
    let mut x = Vec::with_capacity(2 * n);
    let mut y = Vec::with_capacity(n);
    let mut z = Vec::with_capacity(n);
    let mut w = Vec::with_capacity(n);
    let mut prices = Vec::with_capacity(n);
    for i in 0..n {
        let price = p.price_low + (p.price_high - p.price_low) * rng.random::<f64>();
        let mut sa = 0.0;
        let mut sb = 0.0;
        for (aj, bj) in p.a.iter().zip(&p.b) {
            let u: f64 = rng.sample(StandardNormal);
            sa += aj * u;
            sb += bj * u;
        }
        let py = sigmoid(p.eta0 + p.eta1 * price + sa + p.quad_a * sa * sa);
        let pz = sigmoid(p.gamma0 + p.gamma1 * price + sb + p.quad_b * sb * sb);
        let yi = if rng.random::<f64>() < py { 1.0 } else { 0.0 };
        let zi = if rng.random::<f64>() < pz { 1.0 } else { 0.0 };
        x.extend([1.0, price]);
        y.push(yi);
        z.push(zi);
        w.push(labeling.draw(i, rng));
        prices.push(price);
    }
    let data = Dataset::from_parts(Design::new(1, 2, x)?, y, w, z.clone(), 1)?;
    // The oracle functions are smooth in price; tabulating them on a fine
    // grid and interpolating keeps generation fast without visible error.
    let table = OracleTable::shared(p);
    let g_star = prices.iter().zip(&z).map(|(pr, zi)| table.g(*pr, *zi)).collect();
    let mean_given_x = prices.iter().map(|pr| table.m(*pr)).collect();
    Ok(Raw {
        data,
        g_star,
        e_star: vec![labeling.rate(n); n],
        mean_given_x,
        printed: BTreeMap::new(),
    })
}

const GRID: usize = 2001;

struct OracleTable {
    low: f64,
    step: f64,
    g0: Vec<f64>,
    g1: Vec<f64>,
    m: Vec<f64>,
}

type TableCache = Vec<(TwinParams, Arc<OracleTable>)>;

impl OracleTable {
    /// Shared table for `p`, built on first use.
    fn shared(p: &TwinParams) -> Arc<OracleTable> {
        static CACHE: OnceLock<Mutex<TableCache>> = OnceLock::new();
        let mut guard = CACHE.get_or_init(|| Mutex::new(Vec::new())).lock().unwrap_or_else(|e| e.into_inner());
        if let Some((_, t)) = guard.iter().find(|(q, _)| q == p) {
            return t.clone();
        }
        let t = Arc::new(OracleTable::new(p));
        guard.push((p.clone(), t.clone()));
        t
    }

    fn new(p: &TwinParams) -> Self {
        let step = (p.price_high - p.price_low) / (GRID - 1) as f64;
        let grid: Vec<f64> = (0..GRID).map(|i| p.price_low + step * i as f64).collect();
        OracleTable {
            low: p.price_low,
            step,
            g0: grid.iter().map(|pr| p.g_star(*pr, 0.0)).collect(),
            g1: grid.iter().map(|pr| p.g_star(*pr, 1.0)).collect(),
            m: grid.iter().map(|pr| p.mean_given_price(*pr)).collect(),
        }
    }

    fn interp(&self, v: &[f64], price: f64) -> f64 {
        let t = ((price - self.low) / self.step).clamp(0.0, (GRID - 1) as f64);
        let i = (t.floor() as usize).min(GRID - 2);
        let f = t - i as f64;
        v[i] * (1.0 - f) + v[i + 1] * f
    }

    fn g(&self, price: f64, z: f64) -> f64 {
        self.interp(if z >= 0.5 { &self.g1 } else { &self.g0 }, price)
    }

    fn m(&self, price: f64) -> f64 {
        self.interp(&self.m, price)
    }
}

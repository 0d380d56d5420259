use std::collections::BTreeMap;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{check_finite, population_fit, Labeling, Raw};
use crate::data::{Dataset, Design};
use crate::error::{GaiError, Result};
use crate::family::{softmax_into, GlmFamily};
use crate::rng::Rng;

/// Conjoint-style choice among `alternatives` options plus an outside option.
///
/// Alternative `j` has binary attributes `x_(j)`. An off-the-shelf model picks
/// `φ(X) = argmax_j v_j` with `v_j = ωᵀx_(j) + ξ x_(j)0 x_(j)1` and outside
/// utility `threshold` (code 0); it reports `z = φ(X)` with probability
/// `1 - noise`, otherwise a uniform code. Humans choose from
/// `softmax(θᵀx_(j) + η [φ(X) = j])` against a zero-utility baseline, so
/// `y ⊥ z | X`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmParams {
    pub alternatives: usize,
    pub theta: Vec<f64>,
    pub eta: f64,
    pub omega: Vec<f64>,
    pub xi: f64,
    pub threshold: f64,
    pub noise: f64,
}

impl Default for LlmParams {
    fn default() -> Self {
        LlmParams {
            alternatives: 2,
            theta: vec![0.8, -0.6, 0.4],
            eta: 1.0,
            omega: vec![1.0, -1.0, 0.5],
            xi: 1.5,
            threshold: 0.8,
            noise: 0.2,
        }
    }
}

const MAX_ENUMERATED_BITS: usize = 16;

impl LlmParams {
    pub(crate) fn validate(&self) -> Result<()> {
        if self.alternatives < 2 {
            return Err(GaiError::config("choice sets need at least 2 alternatives"));
        }
        if self.theta.len() < 2 || self.theta.len() != self.omega.len() {
            return Err(GaiError::config("theta and omega need the same length, at least 2"));
        }
        check_finite("choice coefficients", &self.theta)?;
        check_finite("choice coefficients", &self.omega)?;
        check_finite("choice coefficients", &[self.eta, self.xi, self.threshold])?;
        if !(0.0..=1.0).contains(&self.noise) {
            return Err(GaiError::config(format!("noise must lie in [0, 1], got {}", self.noise)));
        }
        Ok(())
    }

    /// The model's deterministic choice code `φ(X)`, `0` for the outside option.
    pub fn phi(&self, x: &[f64]) -> usize {
        let a = self.theta.len();
        let mut best = (0, self.threshold);
        for j in 0..self.alternatives {
            let xj = &x[j * a..(j + 1) * a];
            let v: f64 = self.omega.iter().zip(xj).map(|(o, v)| o * v).sum::<f64>() + self.xi * xj[0] * xj[1];
            if v > best.1 {
                best = (j + 1, v);
            }
        }
        best.0
    }

    /// Population MNL coefficients: the fit of the choice probabilities over
    /// every attribute configuration, each with equal weight. `None` when the
    /// configuration count exceeds `2^MAX_ENUMERATED_BITS`.
    pub fn population_beta(&self) -> Result<Option<Vec<f64>>> {
        let (k, a) = (self.alternatives, self.theta.len());
        let bits = k * a;
        if bits > MAX_ENUMERATED_BITS {
            return Ok(None);
        }
        let count = 1usize << bits;
        let mut design = Design::with_capacity(k, a, count);
        let mut targets = Vec::with_capacity(count * k);
        let mut row = vec![0.0; bits];
        for code in 0..count {
            for (b, v) in row.iter_mut().enumerate() {
                *v = f64::from((code >> b) as u8 & 1);
            }
            design.push_row(&row);
            targets.extend(self.probabilities(&row));
        }
        let weights = vec![1.0 / count as f64; count];
        population_fit(GlmFamily::Mnl { k }, &design, &targets, &weights).map(Some)
    }

    /// Choice probabilities of the non-baseline options given `X`.
    pub fn probabilities(&self, x: &[f64]) -> Vec<f64> {
        let a = self.theta.len();
        let code = self.phi(x);
        let theta: Vec<f64> = (0..self.alternatives)
            .map(|j| {
                let xj = &x[j * a..(j + 1) * a];
                let u: f64 = self.theta.iter().zip(xj).map(|(t, v)| t * v).sum();
                u + if code == j + 1 { self.eta } else { 0.0 }
            })
            .collect();
        let mut p = vec![0.0; self.alternatives];
        softmax_into(&theta, &mut p);
        p
    }
}

pub(crate) fn draw(p: &LlmParams, n: usize, labeling: &Labeling, rng: &mut Rng) -> Result<Raw> {
    let (k, a) = (p.alternatives, p.theta.len());
    let mut x = Vec::with_capacity(n * k * a);
    let mut y = Vec::with_capacity(n * k);
    let mut z = Vec::with_capacity(n);
    let mut w = Vec::with_capacity(n);
    let mut g = Vec::with_capacity(n * k);
    let mut row = vec![0.0; k * a];
    for i in 0..n {
        for v in row.iter_mut() {
            *v = if rng.random::<bool>() { 1.0 } else { 0.0 };
        }
        let probs = p.probabilities(&row);
        let u = rng.random::<f64>();
        let mut acc = 0.0;
        let mut choice = None;
        for (j, pj) in probs.iter().enumerate() {
            acc += pj;
            if u < acc {
                choice = Some(j);
                break;
            }
        }
        let code = if rng.random::<f64>() < p.noise { rng.random_range(0..=k) } else { p.phi(&row) };
        x.extend_from_slice(&row);
        y.extend((0..k).map(|j| if choice == Some(j) { 1.0 } else { 0.0 }));
        z.push(code as f64);
        w.push(labeling.draw(i, rng));
        g.extend_from_slice(&probs);
    }
    let data = Dataset::from_parts(Design::new(k, a, x)?, y, w, z, 1)?;
    Ok(Raw { data, g_star: g.clone(), e_star: vec![labeling.rate(n); n], mean_given_x: g, printed: BTreeMap::new() })
}

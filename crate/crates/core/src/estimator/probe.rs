use serde::{Deserialize, Serialize};

use crate::data::{Dataset, DesignRow};
use crate::error::{GaiError, Result};
use crate::family::GlmFamily;
use crate::solver::norm;

/// Direction along which the probe moves away from the oracle.
pub enum Perturbation<'a> {
    /// `g = g* + ε h_g`, `e = e* + ε h_e`, with `β = β*`.
    Nuisance {
        h_g: &'a (dyn Fn(DesignRow<'_>, &[f64]) -> Vec<f64> + Sync),
        h_e: &'a (dyn Fn(DesignRow<'_>, &[f64]) -> f64 + Sync),
    },
    /// `β = β* + ε δ` with oracle nuisances.
    Beta(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeRow {
    pub epsilon: f64,
    /// `‖mean score‖` at this `ε`.
    pub norm: f64,
    /// `‖mean score(ε) - mean score(0)‖` on the same draws.
    pub shift_norm: f64,
    /// Monte Carlo standard error of the norm at this `ε`.
    pub mc_se: f64,
}

/// Monte Carlo estimate of the population score under perturbed nuisances.
///
/// `(w, y)` are integrated out in closed form given `(X, z)` using the
/// oracles: `E[ψ | X, z] = Xᵀ[∇b(Xβ) - g + (e*/e)(g - g*)]`, so only the
/// `(X, z)` draws of `sample` enter.
pub fn orthogonality_probe(
    sample: &Dataset,
    g_star: &[f64],
    e_star: &[f64],
    family: GlmFamily,
    beta_star: &[f64],
    direction: &Perturbation<'_>,
    epsilons: &[f64],
) -> Result<Vec<ProbeRow>> {
    let (n, k, d) = (sample.n(), family.k(), sample.d());
    if sample.k() != k || g_star.len() != n * k || e_star.len() != n || beta_star.len() != d {
        return Err(GaiError::dim("probe oracles are not aligned with the sample"));
    }
    let base = conditional_scores(sample, g_star, e_star, family, beta_star, direction, 0.0)?;
    let base_mean = column_mean(&base, d);
    epsilons
        .iter()
        .map(|&eps| {
            let scores = conditional_scores(sample, g_star, e_star, family, beta_star, direction, eps)?;
            let mean = column_mean(&scores, d);
            let var: f64 = (0..d)
                .map(|c| scores.iter().map(|s| (s[c] - mean[c]).powi(2)).sum::<f64>() / (n as f64 - 1.0))
                .sum();
            let shift: Vec<f64> = mean.iter().zip(&base_mean).map(|(a, b)| a - b).collect();
            Ok(ProbeRow { epsilon: eps, norm: norm(&mean), shift_norm: norm(&shift), mc_se: (var / n as f64).sqrt() })
        })
        .collect()
}

fn conditional_scores(
    sample: &Dataset,
    g_star: &[f64],
    e_star: &[f64],
    family: GlmFamily,
    beta_star: &[f64],
    direction: &Perturbation<'_>,
    eps: f64,
) -> Result<Vec<Vec<f64>>> {
    let (n, k, d) = (sample.n(), family.k(), sample.d());
    let beta: Vec<f64> = match direction {
        Perturbation::Beta(delta) => {
            if delta.len() != d {
                return Err(GaiError::dim("beta direction has wrong length"));
            }
            beta_star.iter().zip(delta).map(|(b, h)| b + eps * h).collect()
        }
        Perturbation::Nuisance { .. } => beta_star.to_vec(),
    };
    let mut theta = vec![0.0; k];
    let mut mu = vec![0.0; k];
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let row = sample.design.row(i);
        let z = sample.z(i);
        let gs = &g_star[i * k..(i + 1) * k];
        let es = e_star[i];
        let (g, e) = match direction {
            Perturbation::Nuisance { h_g, h_e } => {
                let hg = h_g(row, z);
                let g: Vec<f64> = gs.iter().zip(&hg).map(|(a, h)| a + eps * h).collect();
                (g, es + eps * h_e(row, z))
            }
            Perturbation::Beta(_) => (gs.to_vec(), es),
        };
        if !(e > 0.0 && e <= 1.0) {
            return Err(GaiError::Domain(format!("perturbed propensity {e} left (0, 1] at row {i}")));
        }
        row.theta_into(&beta, &mut theta);
        family.grad_into(&theta, &mut mu);
        let r: Vec<f64> = (0..k).map(|j| mu[j] - g[j] + (es / e) * (g[j] - gs[j])).collect();
        let mut s = vec![0.0; d];
        row.add_xt_v(&r, 1.0, &mut s);
        out.push(s);
    }
    Ok(out)
}

fn column_mean(rows: &[Vec<f64>], d: usize) -> Vec<f64> {
    let mut m = vec![0.0; d];
    for r in rows {
        for (a, v) in m.iter_mut().zip(r) {
            *a += v;
        }
    }
    m.iter_mut().for_each(|a| *a /= rows.len() as f64);
    m
}

/// Least-squares slope of `ln y` on `ln x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let m = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / m;
    let my = ly.iter().sum::<f64>() / m;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_power_law() {
        let x = [0.02, 0.04, 0.08, 0.16];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powi(2)).collect();
        assert!((log_log_slope(&x, &y) - 2.0).abs() < 1e-12);
    }
}

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::data::Design;
use crate::error::{GaiError, Result};
use crate::family::GlmFamily;
use crate::solver::FitResult;

/// Largest admissible condition number of the information matrix.
pub const MAX_CONDITION: f64 = 1e12;

/// Point estimate, sandwich covariance and confidence intervals.
///
/// `sigma` is the asymptotic covariance of `√scale_n (β̂ - β*)`; intervals use
/// `sqrt(sigma_jj / scale_n)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub estimator: String,
    pub family: GlmFamily,
    pub beta: Vec<f64>,
    pub sigma: Vec<Vec<f64>>,
    pub j_hat: Vec<Vec<f64>>,
    pub ci_lower: Vec<f64>,
    pub ci_upper: Vec<f64>,
    pub level: f64,
    pub n: usize,
    pub n_primary: usize,
    pub n_aux: usize,
    pub scale_n: usize,
    pub solver: FitResult,
    /// Shrinkage weight of prediction-powered baselines.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub lambda: Option<f64>,
}

impl EstimateReport {
    pub fn std_errors(&self) -> Vec<f64> {
        (0..self.beta.len()).map(|j| (self.sigma[j][j].max(0.0) / self.scale_n as f64).sqrt()).collect()
    }

    pub fn sigma_matrix(&self) -> DMatrix<f64> {
        to_matrix(&self.sigma)
    }

    pub fn converged(&self) -> bool {
        self.solver.converged
    }

    #[allow(clippy::too_many_arguments)]
    pub(crate) fn assemble(
        estimator: &str,
        family: GlmFamily,
        solver: FitResult,
        j_hat: &DMatrix<f64>,
        sigma: &DMatrix<f64>,
        counts: (usize, usize, usize),
        scale_n: usize,
        level: f64,
    ) -> Result<Self> {
        let (ci_lower, ci_upper) = confidence_intervals(&solver.beta, sigma, scale_n, level)?;
        Ok(EstimateReport {
            estimator: estimator.to_string(),
            family,
            beta: solver.beta.clone(),
            sigma: to_rows(sigma),
            j_hat: to_rows(j_hat),
            ci_lower,
            ci_upper,
            level,
            n: counts.0,
            n_primary: counts.1,
            n_aux: counts.2,
            scale_n,
            solver,
            lambda: None,
        })
    }
}

pub(crate) fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

pub(crate) fn to_matrix(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let d = rows.len();
    DMatrix::from_fn(d, d, |i, j| rows[i][j])
}

/// `(1/|rows|) Σ Xᵢᵀ ∇²b(Xᵢβ) Xᵢ` over the given rows.
pub fn information_matrix(family: GlmFamily, design: &Design, rows: &[usize], beta: &[f64]) -> DMatrix<f64> {
    let (k, d) = (design.k(), design.d());
    let mut acc = vec![0.0; d * d];
    let mut theta = vec![0.0; k];
    let mut h = vec![0.0; k * k];
    for &i in rows {
        let row = design.row(i);
        row.theta_into(beta, &mut theta);
        family.hess_into(&theta, &mut h);
        row.add_xt_h_x(&h, 1.0, &mut acc);
    }
    let scale = 1.0 / rows.len() as f64;
    DMatrix::from_row_slice(d, d, &acc) * scale
}

/// Inverse of a symmetric positive definite matrix, refusing condition
/// numbers above [`MAX_CONDITION`].
pub fn checked_inverse(j: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = SymmetricEigen::new(j.clone());
    let max = eig.eigenvalues.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let min = eig.eigenvalues.iter().fold(f64::INFINITY, |a, v| a.min(*v));
    let condition = if min > 0.0 { max / min } else { f64::INFINITY };
    if !(condition <= MAX_CONDITION) {
        return Err(GaiError::IllConditioned { condition });
    }
    let inv_vals = eig.eigenvalues.map(|v| 1.0 / v);
    let inv = &eig.eigenvectors * DMatrix::from_diagonal(&inv_vals) * eig.eigenvectors.transpose();
    Ok(symmetrize(inv))
}

pub(crate) fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

/// Mean outer product `(1/m) Σ sᵢ sᵢᵀ`.
pub fn mean_outer(scores: &[Vec<f64>], d: usize) -> DMatrix<f64> {
    let mut acc = DMatrix::zeros(d, d);
    for s in scores {
        for a in 0..d {
            if s[a] != 0.0 {
                for b in 0..d {
                    acc[(a, b)] += s[a] * s[b];
                }
            }
        }
    }
    acc / scores.len() as f64
}

/// `J⁻¹ M J⁻¹`.
pub fn sandwich(j: &DMatrix<f64>, meat: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let jinv = checked_inverse(j)?;
    Ok(symmetrize(&jinv * meat * &jinv))
}

/// Normal quantile `z_p`.
pub fn normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

/// Intervals `β̂_j ± z_{(1+level)/2} sqrt(Σ_jj / n)`.
pub fn confidence_intervals(beta: &[f64], sigma: &DMatrix<f64>, n: usize, level: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(level > 0.0 && level < 1.0) {
        return Err(GaiError::config(format!("confidence level must lie in (0, 1), got {level}")));
    }
    if sigma.nrows() != beta.len() || sigma.ncols() != beta.len() {
        return Err(GaiError::dim("covariance shape does not match beta"));
    }
    if n == 0 {
        return Err(GaiError::input("interval scaling needs n >= 1"));
    }
    let z = normal_quantile(0.5 * (1.0 + level));
    let mut lo = Vec::with_capacity(beta.len());
    let mut hi = Vec::with_capacity(beta.len());
    for (j, b) in beta.iter().enumerate() {
        let half = z * (sigma[(j, j)].max(0.0) / n as f64).sqrt();
        lo.push(b - half);
        hi.push(b + half);
    }
    Ok((lo, hi))
}

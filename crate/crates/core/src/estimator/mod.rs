//! The augmented estimator: orthogonal score, pseudo-labels, target fit and
//! sandwich inference.

mod probe;
mod variance;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub use probe::{log_log_slope, orthogonality_probe, Perturbation, ProbeRow};
pub use variance::{
    checked_inverse, confidence_intervals, information_matrix, mean_outer, normal_quantile, sandwich, EstimateReport,
    MAX_CONDITION,
};

use crate::data::{Dataset, Design, DesignRow};
use crate::error::{GaiError, Result};
use crate::family::GlmFamily;
use crate::nuisance::NuisanceFits;
use crate::solver::{check_row, fit_score_equation, SolverOptions};

/// One row as consumed by the augmented score.
#[derive(Debug, Clone, Copy)]
pub struct GaiScoreInput<'a> {
    pub row: DesignRow<'a>,
    pub y: Option<&'a [f64]>,
    pub w: bool,
    pub g_hat: &'a [f64],
    pub e_hat: f64,
}

/// `τ = g + (w/e)(y - g)`.
pub fn pseudo_label(g_hat: &[f64], y: Option<&[f64]>, w: bool, e_hat: f64) -> Result<Vec<f64>> {
    if !(e_hat > 0.0 && e_hat <= 1.0) {
        return Err(GaiError::Domain(format!("propensity {e_hat} outside (0, 1]")));
    }
    if !w {
        return Ok(g_hat.to_vec());
    }
    let y = y.ok_or_else(|| GaiError::input("labeled row (w=1) without a label"))?;
    if y.len() != g_hat.len() {
        return Err(GaiError::dim("label and outcome prediction lengths differ"));
    }
    if e_hat == 1.0 {
        return Ok(y.to_vec());
    }
    Ok(g_hat.iter().zip(y).map(|(g, yj)| g + (yj - g) / e_hat).collect())
}

/// `Xᵀ[∇b(Xβ) - g + (w/e)(g - y)]`.
pub fn gai_score(input: &GaiScoreInput<'_>, family: GlmFamily, beta: &[f64]) -> Result<Vec<f64>> {
    let tau = pseudo_label(input.g_hat, input.y, input.w, input.e_hat)?;
    check_row(family, input.row, &tau, beta)?;
    Ok(score_with_target(family, input.row, &tau, beta))
}

fn score_with_target(family: GlmFamily, row: DesignRow<'_>, target: &[f64], beta: &[f64]) -> Vec<f64> {
    let k = family.k();
    let mut theta = vec![0.0; k];
    row.theta_into(beta, &mut theta);
    let mut r = vec![0.0; k];
    family.grad_into(&theta, &mut r);
    for (a, t) in r.iter_mut().zip(target) {
        *a -= t;
    }
    let mut out = vec![0.0; row.d()];
    row.add_xt_v(&r, 1.0, &mut out);
    out
}

/// Appends the baseline mass `1 - Στ`, clips all `k+1` entries to `[eps, 1]`,
/// renormalizes and drops the baseline again.
pub fn clip_normalize_mnl(tau: &[f64], eps: f64) -> Vec<f64> {
    let base = 1.0 - tau.iter().sum::<f64>();
    let clipped: Vec<f64> = tau.iter().map(|t| t.clamp(eps, 1.0)).collect();
    let total = clipped.iter().sum::<f64>() + base.clamp(eps, 1.0);
    clipped.iter().map(|c| c / total).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorOptions {
    pub solver: SolverOptions,
    pub ci_level: f64,
    /// For MNL, clip-normalize pseudo-labels into probability vectors
    /// (the cross-entropy formulation).
    pub mnl_clip: bool,
    pub mnl_clip_eps: f64,
}

impl Default for EstimatorOptions {
    fn default() -> Self {
        EstimatorOptions { solver: SolverOptions::default(), ci_level: 0.95, mnl_clip: false, mnl_clip_eps: 1e-3 }
    }
}

fn check_aligned(data: &Dataset, nuisances: &NuisanceFits, family: GlmFamily) -> Result<()> {
    family.validate()?;
    if data.k() != family.k() {
        return Err(GaiError::dim(format!("data has k={}, family {} needs k={}", data.k(), family.name(), family.k())));
    }
    if nuisances.n() != data.n() || nuisances.k() != data.k() {
        return Err(GaiError::dim("nuisance predictions are not aligned with the dataset"));
    }
    Ok(())
}

fn targets(data: &Dataset, nuisances: &NuisanceFits, family: GlmFamily, opts: &EstimatorOptions) -> Result<Vec<f64>> {
    let clip = opts.mnl_clip && matches!(family, GlmFamily::Mnl { .. });
    if clip && !(opts.mnl_clip_eps > 0.0 && opts.mnl_clip_eps < 1.0 / (family.k() as f64 + 1.0)) {
        return Err(GaiError::config("mnl_clip_eps must lie in (0, 1/(k+1))"));
    }
    let mut out = Vec::with_capacity(data.n() * data.k());
    for i in 0..data.n() {
        let w = data.is_labeled(i);
        let tau = pseudo_label(nuisances.g(i), data.label(i), w, nuisances.e(i))?;
        if clip {
            out.extend(clip_normalize_mnl(&tau, opts.mnl_clip_eps));
        } else {
            out.extend(tau);
        }
    }
    Ok(out)
}

/// Solves the augmented score equation over all rows and attaches sandwich
/// inference.
pub fn fit_gai(data: &Dataset, nuisances: &NuisanceFits, family: GlmFamily, opts: &EstimatorOptions) -> Result<EstimateReport> {
    check_aligned(data, nuisances, family)?;
    let tau = targets(data, nuisances, family, opts)?;
    let weights = vec![1.0; data.n()];
    let fit = fit_score_equation(family, &data.design, &tau, &weights, 0.0, &opts.solver)?;
    let (j, sigma) = sandwich_from_targets(family, &data.design, &tau, &fit.beta)?;
    EstimateReport::assemble(
        "gai",
        family,
        fit,
        &j,
        &sigma,
        (data.n(), data.n_primary(), data.n_aux()),
        data.n(),
        opts.ci_level,
    )
}

/// `Ĵ` and `Σ̂ = Ĵ⁻¹ (mean ψψᵀ) Ĵ⁻¹` at `beta`, with each row's own nuisances.
pub fn sandwich_variance(
    data: &Dataset,
    nuisances: &NuisanceFits,
    family: GlmFamily,
    beta: &[f64],
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    check_aligned(data, nuisances, family)?;
    if beta.len() != data.d() {
        return Err(GaiError::dim("beta length does not match design"));
    }
    let tau = targets(data, nuisances, family, &EstimatorOptions::default())?;
    sandwich_from_targets(family, &data.design, &tau, beta)
}

/// Sandwich for the score `Xᵀ(∇b(Xβ) - t)` over every row of `design`.
pub(crate) fn sandwich_from_targets(
    family: GlmFamily,
    design: &Design,
    targets: &[f64],
    beta: &[f64],
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let k = family.k();
    let rows: Vec<usize> = (0..design.n()).collect();
    let j = information_matrix(family, design, &rows, beta);
    let scores: Vec<Vec<f64>> =
        rows.iter().map(|&i| score_with_target(family, design.row(i), &targets[i * k..(i + 1) * k], beta)).collect();
    let sigma = sandwich(&j, &mean_outer(&scores, design.d()))?;
    Ok((j, sigma))
}

//! Reference estimators: primary-only, naive pooling and prediction-powered
//! inference (fixed and tuned shrinkage).

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Design};
use crate::error::{GaiError, Result};
use crate::estimator::{information_matrix, mean_outer, sandwich, EstimateReport, EstimatorOptions};
use crate::family::GlmFamily;
use crate::nuisance::choice_code;
use crate::solver::fit_score_equation;

/// How an auxiliary signal is read as a surrogate label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ZProjection {
    /// The first `k` coordinates are mean-scale labels.
    #[default]
    Scalar,
    /// The first coordinate is a class code; `1..=k` are the non-baseline
    /// classes, anything else the baseline.
    Choice,
    /// Dense representation with no label reading.
    Embedding,
}

impl ZProjection {
    pub fn project(&self, z: &[f64], k: usize, estimator: &str) -> Result<Vec<f64>> {
        match self {
            ZProjection::Scalar => {
                if z.len() < k {
                    return Err(GaiError::dim(format!("signal has {} coordinates, label needs {k}", z.len())));
                }
                Ok(z[..k].to_vec())
            }
            ZProjection::Choice => {
                let mut out = vec![0.0; k];
                if let Some(j) = choice_code(z, k) {
                    out[j] = 1.0;
                }
                Ok(out)
            }
            ZProjection::Embedding => Err(GaiError::Inapplicable {
                estimator: estimator.to_string(),
                reason: "an embedding signal cannot be read as a label".into(),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "lambda")]
pub enum PpiLambda {
    Fixed(f64),
    /// Grid search over `{0, 0.1, …, 1}` minimizing the covariance trace.
    Auto,
}

/// Shrinkage grid of the tuned prediction-powered estimator.
pub fn lambda_grid() -> Vec<f64> {
    (0..=10).map(|i| i as f64 / 10.0).collect()
}

fn require_primary(data: &Dataset) -> Result<()> {
    if data.n_primary() == 0 {
        return Err(GaiError::input("no labeled (w=1) rows"));
    }
    Ok(())
}

fn check_family(data: &Dataset, family: GlmFamily) -> Result<()> {
    family.validate()?;
    if data.k() != family.k() {
        return Err(GaiError::dim(format!("data has k={}, family {} needs k={}", data.k(), family.name(), family.k())));
    }
    Ok(())
}

fn residual_score(family: GlmFamily, design: &Design, i: usize, target: &[f64], beta: &[f64]) -> Vec<f64> {
    let k = family.k();
    let row = design.row(i);
    let mut theta = vec![0.0; k];
    row.theta_into(beta, &mut theta);
    let mut r = vec![0.0; k];
    family.grad_into(&theta, &mut r);
    for (a, t) in r.iter_mut().zip(target) {
        *a -= t;
    }
    let mut out = vec![0.0; design.d()];
    row.add_xt_v(&r, 1.0, &mut out);
    out
}

/// GLM fit on the labeled rows only, with a sandwich over those rows.
pub fn fit_primary(data: &Dataset, family: GlmFamily, opts: &EstimatorOptions) -> Result<EstimateReport> {
    check_family(data, family)?;
    require_primary(data)?;
    let idx = data.primary_indices();
    let design = data.design.select(&idx);
    let mut targets = Vec::with_capacity(idx.len() * family.k());
    for &i in &idx {
        targets.extend_from_slice(data.label(i).expect("labeled"));
    }
    let fit = fit_score_equation(family, &design, &targets, &vec![1.0; idx.len()], 0.0, &opts.solver)?;
    let (j, sigma) = pooled_sandwich(family, &design, &targets, &fit.beta)?;
    EstimateReport::assemble(
        "primary",
        family,
        fit,
        &j,
        &sigma,
        (data.n(), data.n_primary(), data.n_aux()),
        idx.len(),
        opts.ci_level,
    )
}

fn pooled_sandwich(
    family: GlmFamily,
    design: &Design,
    targets: &[f64],
    beta: &[f64],
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let k = family.k();
    let rows: Vec<usize> = (0..design.n()).collect();
    let j = information_matrix(family, design, &rows, beta);
    let scores: Vec<Vec<f64>> =
        rows.iter().map(|&i| residual_score(family, design, i, &targets[i * k..(i + 1) * k], beta)).collect();
    let sigma = sandwich(&j, &mean_outer(&scores, design.d()))?;
    Ok((j, sigma))
}

/// Pools human labels with projected AI labels as if both were ground truth.
pub fn fit_naive(data: &Dataset, family: GlmFamily, proj: ZProjection, opts: &EstimatorOptions) -> Result<EstimateReport> {
    check_family(data, family)?;
    let k = family.k();
    let mut targets = Vec::with_capacity(data.n() * k);
    for i in 0..data.n() {
        match data.label(i) {
            Some(y) => targets.extend_from_slice(y),
            None => targets.extend(proj.project(data.z(i), k, "naive")?),
        }
    }
    let fit = fit_score_equation(family, &data.design, &targets, &vec![1.0; data.n()], 0.0, &opts.solver)?;
    let (j, sigma) = pooled_sandwich(family, &data.design, &targets, &fit.beta)?;
    EstimateReport::assemble(
        "naive",
        family,
        fit,
        &j,
        &sigma,
        (data.n(), data.n_primary(), data.n_aux()),
        data.n(),
        opts.ci_level,
    )
}

/// Prediction-powered mean estimate with its plug-in variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PpiMean {
    pub theta: f64,
    /// Asymptotic variance of `√n (θ̂ - θ)`, `n` the labeled count.
    pub variance: f64,
    pub lambda: f64,
    pub n: usize,
    pub n_aux: usize,
}

/// `θ̂ = ȳ_L + λ (z̄_U - z̄_L)` for scalar `y` and the scalar reading of `z`.
pub fn fit_ppi_mean(data: &Dataset, lambda: f64) -> Result<PpiMean> {
    if !lambda.is_finite() {
        return Err(GaiError::config("lambda must be finite"));
    }
    if data.k() != 1 {
        return Err(GaiError::dim("mean estimation needs a scalar label"));
    }
    require_primary(data)?;
    if data.n_aux() == 0 {
        return Err(GaiError::input("no unlabeled (w=0) rows"));
    }
    let mut lab = Vec::new();
    let mut unl = Vec::new();
    for i in 0..data.n() {
        match data.label(i) {
            Some(y) => lab.push((y[0], data.z(i)[0])),
            None => unl.push(data.z(i)[0]),
        }
    }
    let n = lab.len() as f64;
    let nn = unl.len() as f64;
    let ybar = lab.iter().map(|p| p.0).sum::<f64>() / n;
    let zbar_l = lab.iter().map(|p| p.1).sum::<f64>() / n;
    let zbar_u = unl.iter().sum::<f64>() / nn;
    let theta = ybar + lambda * (zbar_u - zbar_l);
    let resid_mean = ybar - lambda * zbar_l;
    let var_l = lab.iter().map(|p| (p.0 - lambda * p.1 - resid_mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    let var_u = unl.iter().map(|z| (z - zbar_u).powi(2)).sum::<f64>() / (nn - 1.0).max(1.0);
    Ok(PpiMean { theta, variance: var_l + lambda * lambda * (n / nn) * var_u, lambda, n: lab.len(), n_aux: unl.len() })
}

/// Prediction-powered mean with `λ` picked from [`lambda_grid`] by the
/// smallest plug-in variance; ties go to the smaller `λ`.
pub fn fit_ppi_mean_tuned(data: &Dataset) -> Result<PpiMean> {
    let mut best: Option<PpiMean> = None;
    for l in lambda_grid() {
        let m = fit_ppi_mean(data, l)?;
        if best.as_ref().is_none_or(|b| m.variance < b.variance) {
            best = Some(m);
        }
    }
    Ok(best.expect("grid is non-empty"))
}

/// Prediction-powered GLM. Solves
/// `λ·mean_all Xᵀ(∇b - z̃) + mean_L [Xᵀ(∇b - y) - λ Xᵀ(∇b - z̃)] = 0`.
pub fn fit_ppi_glm(
    data: &Dataset,
    family: GlmFamily,
    proj: ZProjection,
    lambda: PpiLambda,
    opts: &EstimatorOptions,
) -> Result<EstimateReport> {
    check_family(data, family)?;
    require_primary(data)?;
    let name = match lambda {
        PpiLambda::Fixed(_) => "ppi",
        PpiLambda::Auto => "ppi++",
    };
    let k = family.k();
    let mut ztilde = Vec::with_capacity(data.n() * k);
    for i in 0..data.n() {
        ztilde.extend(proj.project(data.z(i), k, name)?);
    }
    match lambda {
        PpiLambda::Fixed(l) => ppi_at(data, family, &ztilde, l, name, opts),
        PpiLambda::Auto => {
            let mut best: Option<EstimateReport> = None;
            for l in lambda_grid() {
                let Ok(rep) = ppi_at(data, family, &ztilde, l, name, opts) else {
                    continue;
                };
                if !rep.converged() {
                    continue;
                }
                let tr = trace(&rep.sigma);
                if best.as_ref().is_none_or(|b| tr < trace(&b.sigma)) {
                    best = Some(rep);
                }
            }
            best.ok_or_else(|| GaiError::Numerical("no shrinkage value on the grid produced a usable fit".into()))
        }
    }
}

fn trace(m: &[Vec<f64>]) -> f64 {
    (0..m.len()).map(|i| m[i][i]).sum()
}

fn ppi_at(
    data: &Dataset,
    family: GlmFamily,
    ztilde: &[f64],
    lambda: f64,
    name: &str,
    opts: &EstimatorOptions,
) -> Result<EstimateReport> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(GaiError::config(format!("GLM shrinkage must lie in [0, 1], got {lambda}")));
    }
    let k = family.k();
    let (n, n_all) = (data.n_primary() as f64, data.n() as f64);
    // Multiplying the estimating equation by n gives per-row weights:
    // labeled rows (1 - c) with target (y - c z̃)/(1 - c), c = λ(N_all - n)/N_all,
    // unlabeled rows λ n / N_all with target z̃.
    let c = lambda * (n_all - n) / n_all;
    let w_unl = lambda * n / n_all;
    let mut weights = Vec::with_capacity(data.n());
    let mut targets = Vec::with_capacity(data.n() * k);
    for i in 0..data.n() {
        let zt = &ztilde[i * k..(i + 1) * k];
        match data.label(i) {
            Some(y) => {
                weights.push(1.0 - c);
                if c == 0.0 {
                    targets.extend_from_slice(y);
                } else {
                    targets.extend(y.iter().zip(zt).map(|(a, b)| (a - c * b) / (1.0 - c)));
                }
            }
            None => {
                weights.push(w_unl);
                targets.extend_from_slice(zt);
            }
        }
    }
    let fit = fit_score_equation(family, &data.design, &targets, &weights, 0.0, &opts.solver)?;
    let beta = &fit.beta;
    let d = data.d();

    let lab: Vec<usize> = data.primary_indices();
    let unl: Vec<usize> = (0..data.n()).filter(|&i| !data.is_labeled(i)).collect();
    let all: Vec<usize> = (0..data.n()).collect();
    let j = information_matrix(family, &data.design, &all, beta) * lambda
        + information_matrix(family, &data.design, &lab, beta) * (1.0 - lambda);

    // Influence of each row on the mean-form equation.
    let lab_terms: Vec<Vec<f64>> = lab
        .iter()
        .map(|&i| {
            let a = residual_score(family, &data.design, i, &ztilde[i * k..(i + 1) * k], beta);
            let b = residual_score(family, &data.design, i, data.label(i).expect("labeled"), beta);
            (0..d).map(|c| lambda * a[c] / n_all + (b[c] - lambda * a[c]) / n).collect()
        })
        .collect();
    let unl_terms: Vec<Vec<f64>> = unl
        .iter()
        .map(|&i| {
            let a = residual_score(family, &data.design, i, &ztilde[i * k..(i + 1) * k], beta);
            a.iter().map(|v| lambda * v / n_all).collect()
        })
        .collect();
    let var_m = centered_sum_cov(&lab_terms, d) + centered_sum_cov(&unl_terms, d);
    let sigma = sandwich(&j, &(var_m * n))?;

    let mut rep = EstimateReport::assemble(
        name,
        family,
        fit,
        &j,
        &sigma,
        (data.n(), data.n_primary(), data.n_aux()),
        data.n_primary(),
        opts.ci_level,
    )?;
    rep.lambda = Some(lambda);
    Ok(rep)
}

/// `Σ (tᵢ - t̄)(tᵢ - t̄)ᵀ`: the variance of `Σ t` under independent rows.
fn centered_sum_cov(terms: &[Vec<f64>], d: usize) -> DMatrix<f64> {
    if terms.is_empty() {
        return DMatrix::zeros(d, d);
    }
    let m = terms.len() as f64;
    let mut mean = vec![0.0; d];
    for t in terms {
        for (a, v) in mean.iter_mut().zip(t) {
            *a += v / m;
        }
    }
    let centered: Vec<Vec<f64>> = terms.iter().map(|t| t.iter().zip(&mean).map(|(a, b)| a - b).collect()).collect();
    mean_outer(&centered, d) * m
}

use serde::{Deserialize, Serialize};

use super::features::{label_shift_row, FeatureMap, FeatureSpec};
use crate::data::{Dataset, Design, DesignRow};
use crate::error::{GaiError, Result};
use crate::family::GlmFamily;
use crate::solver::{fit_penalized, SolverOptions};

/// Learner for `g(X, z) ≈ E[y | X, z]`.
///
/// `ridge` is the penalty on the summed loss, i.e. `1/C` in the usual
/// inverse-regularization parameterization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum OutcomeModel {
    RidgeGlm {
        ridge: f64,
        #[serde(default)]
        features: FeatureSpec,
    },
    /// `g(X, z) = z[..k]`, clipped to the family's mean range.
    IdentityFromZ,
    /// Alternative `j` has utility `θᵀx_(j) + η [z = j]`.
    LabelShiftGlm { ridge: f64 },
}

impl Default for OutcomeModel {
    fn default() -> Self {
        OutcomeModel::RidgeGlm { ridge: 20.0, features: FeatureSpec::default() }
    }
}

impl OutcomeModel {
    pub fn validate(&self) -> Result<()> {
        match self {
            OutcomeModel::RidgeGlm { ridge, .. } | OutcomeModel::LabelShiftGlm { ridge } => {
                if !(ridge.is_finite() && *ridge >= 0.0) {
                    return Err(GaiError::config(format!("outcome ridge must be finite and >= 0, got {ridge}")));
                }
            }
            OutcomeModel::IdentityFromZ => {}
        }
        Ok(())
    }
}

/// A fitted outcome model.
#[derive(Debug, Clone, PartialEq)]
pub enum OutcomePredictor {
    Glm { family: GlmFamily, map: FeatureMap, beta: Vec<f64> },
    Identity { family: GlmFamily },
    LabelShift { family: GlmFamily, beta: Vec<f64> },
}

impl OutcomePredictor {
    pub fn predict(&self, row: DesignRow<'_>, z: &[f64]) -> Vec<f64> {
        match self {
            OutcomePredictor::Glm { family, map, beta } => {
                let k = family.k();
                let x = map.design_row(row, z, k);
                glm_mean(*family, &x, beta)
            }
            OutcomePredictor::Identity { family } => {
                let k = family.k();
                let mut out: Vec<f64> = (0..k).map(|j| z.get(j).copied().unwrap_or(0.0)).collect();
                family.clip_mean(&mut out);
                out
            }
            OutcomePredictor::LabelShift { family, beta } => glm_mean(*family, &label_shift_row(row, z), beta),
        }
    }
}

fn glm_mean(family: GlmFamily, x: &[f64], beta: &[f64]) -> Vec<f64> {
    let k = family.k();
    let row = DesignRow::new(k, beta.len(), x).expect("feature row matches coefficients");
    let mut theta = vec![0.0; k];
    row.theta_into(beta, &mut theta);
    let mut mu = vec![0.0; k];
    family.grad_into(&theta, &mut mu);
    mu
}

/// Fits the outcome model on the labeled rows among `rows`. Returns the
/// predictor and, when the solver did not converge, a warning.
pub fn fit_outcome_model(
    data: &Dataset,
    rows: &[usize],
    model: &OutcomeModel,
    standardize: bool,
    family: GlmFamily,
) -> Result<(OutcomePredictor, Option<String>)> {
    model.validate()?;
    let train: Vec<usize> = rows.iter().copied().filter(|&i| data.is_labeled(i)).collect();
    if train.is_empty() {
        return Err(GaiError::input("outcome model needs at least one labeled training row"));
    }
    if data.k() != family.k() {
        return Err(GaiError::dim(format!("data has k={}, family {} needs k={}", data.k(), family.name(), family.k())));
    }
    let k = family.k();
    let mut targets = Vec::with_capacity(train.len() * k);
    for &i in &train {
        targets.extend_from_slice(data.label(i).expect("filtered to labeled rows"));
    }
    let weights = vec![1.0; train.len()];
    let opts = SolverOptions::default();
    match *model {
        OutcomeModel::IdentityFromZ => Ok((OutcomePredictor::Identity { family }, None)),
        OutcomeModel::RidgeGlm { ridge, features } => {
            let map = FeatureMap::fit(features, data, &train, standardize);
            let design = map.build_design(data, &train, k);
            let penalty = map.penalty(k, ridge);
            let fit = fit_penalized(family, &design, &targets, &weights, &penalty, &opts, None)?;
            let warn = (!fit.converged).then(|| format!("outcome fit stopped with {:?}", fit.termination));
            Ok((OutcomePredictor::Glm { family, map, beta: fit.beta }, warn))
        }
        OutcomeModel::LabelShiftGlm { ridge } => {
            let d1 = data.d() + 1;
            let mut design = Design::with_capacity(k, d1, train.len());
            for &i in &train {
                design.push_row(&label_shift_row(data.design.row(i), data.z(i)));
            }
            let penalty = vec![ridge; d1];
            let fit = fit_penalized(family, &design, &targets, &weights, &penalty, &opts, None)?;
            let warn = (!fit.converged).then(|| format!("label-shift fit stopped with {:?}", fit.termination));
            Ok((OutcomePredictor::LabelShift { family, beta: fit.beta }, warn))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn logistic_data() -> Dataset {
        let xs = [-1.0, -0.5, 0.0, 0.5, 1.0, 1.5];
        let ys = [0.0, 1.0, 0.0, 1.0, 1.0, 0.0];
        let mut v = Vec::new();
        for x in xs {
            v.extend([1.0, x]);
        }
        let design = Design::new(1, 2, v).unwrap();
        let y = ys.iter().map(|y| Some(vec![*y])).collect();
        Dataset::new(design, y, vec![true; 6], vec![0.85, 0.1, 0.4, 0.7, 0.9, 0.2], 1).unwrap()
    }

    #[test]
    fn identity_returns_z() {
        let d = logistic_data();
        let (p, _) = fit_outcome_model(&d, &[0, 1], &OutcomeModel::IdentityFromZ, true, GlmFamily::Logistic).unwrap();
        assert_eq!(p.predict(d.design.row(0), &[0.85]), vec![0.85]);
        assert_eq!(p.predict(d.design.row(0), &[1.3]), vec![1.0]);
    }

    #[test]
    fn heavy_ridge_gives_intercept_only_fit() {
        let d = logistic_data();
        let rows: Vec<usize> = (0..6).collect();
        let model = OutcomeModel::RidgeGlm { ridge: 1e9, features: FeatureSpec::default() };
        let (p, _) = fit_outcome_model(&d, &rows, &model, true, GlmFamily::Logistic).unwrap();
        for i in 0..6 {
            let g = p.predict(d.design.row(i), d.z(i))[0];
            assert!((g - 0.5).abs() < 1e-6, "{g}");
        }
    }

    #[test]
    fn no_labeled_rows_is_error() {
        let d = logistic_data().with_labels_observed(vec![false; 6]).unwrap();
        assert!(fit_outcome_model(&d, &[0, 1, 2], &OutcomeModel::default(), true, GlmFamily::Logistic).is_err());
    }
}

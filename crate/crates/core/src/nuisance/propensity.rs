use serde::{Deserialize, Serialize};

use super::features::{FeatureMap, FeatureSpec};
use crate::data::{Dataset, DesignRow};
use crate::error::{GaiError, Result};
use crate::family::{sigmoid, GlmFamily};
use crate::solver::{fit_penalized, SolverOptions};

/// Learner for the labeling propensity `e(X, z) = P(w = 1 | X, z)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum PropensityModel {
    /// Labeled share of the training split.
    #[default]
    ConstantRho,
    RidgeLogistic {
        ridge: f64,
        #[serde(default)]
        features: FeatureSpec,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum PropensityPredictor {
    Constant(f64),
    Logistic { map: FeatureMap, beta: Vec<f64> },
}

impl PropensityPredictor {
    /// Unclipped prediction.
    pub fn predict_raw(&self, row: DesignRow<'_>, z: &[f64]) -> f64 {
        match self {
            PropensityPredictor::Constant(rho) => *rho,
            PropensityPredictor::Logistic { map, beta } => {
                let x = map.transform(row, z);
                sigmoid(x.iter().zip(beta).map(|(a, b)| a * b).sum())
            }
        }
    }

    /// Prediction clipped to `[floor, 1]`.
    pub fn predict(&self, row: DesignRow<'_>, z: &[f64], floor: f64) -> f64 {
        clip_propensity(self.predict_raw(row, z), floor)
    }
}

pub fn clip_propensity(e: f64, floor: f64) -> f64 {
    e.clamp(floor, 1.0)
}

/// Fits the propensity model on all of `rows`. A logistic fit on a split
/// whose indicators are all equal falls back to the constant rate and
/// returns a warning.
pub fn fit_propensity(
    data: &Dataset,
    rows: &[usize],
    model: &PropensityModel,
    standardize: bool,
) -> Result<(PropensityPredictor, Option<String>)> {
    if rows.is_empty() {
        return Err(GaiError::input("propensity model needs at least one training row"));
    }
    let n_p = rows.iter().filter(|&&i| data.is_labeled(i)).count();
    let rho = n_p as f64 / rows.len() as f64;
    match *model {
        PropensityModel::ConstantRho => Ok((PropensityPredictor::Constant(rho), None)),
        PropensityModel::RidgeLogistic { ridge, features } => {
            if !(ridge.is_finite() && ridge >= 0.0) {
                return Err(GaiError::config(format!("propensity ridge must be finite and >= 0, got {ridge}")));
            }
            if n_p == 0 || n_p == rows.len() {
                return Ok((
                    PropensityPredictor::Constant(rho),
                    Some("propensity training split has a single w value; using the constant rate".into()),
                ));
            }
            let map = FeatureMap::fit(features, data, rows, standardize);
            let design = map.build_design(data, rows, 1);
            let targets: Vec<f64> = rows.iter().map(|&i| if data.is_labeled(i) { 1.0 } else { 0.0 }).collect();
            let weights = vec![1.0; rows.len()];
            let penalty = map.penalty(1, ridge);
            let fit =
                fit_penalized(GlmFamily::Logistic, &design, &targets, &weights, &penalty, &SolverOptions::default(), None)?;
            let warn = (!fit.converged).then(|| format!("propensity fit stopped with {:?}", fit.termination));
            Ok((PropensityPredictor::Logistic { map, beta: fit.beta }, warn))
        }
    }
}

//! Cross-fitted nuisance estimation: the outcome model `g(X, z)` and the
//! labeling propensity `e(X, z)`.

mod features;
mod folds;
mod outcome;
mod propensity;
mod select;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use features::{FeatureMap, FeatureSpec};
pub(crate) use features::choice_code;
pub use folds::{assign_folds, fold_members};
pub use outcome::{fit_outcome_model, OutcomeModel, OutcomePredictor};
pub use propensity::{clip_propensity, fit_propensity, PropensityModel, PropensityPredictor};
pub use select::{nested_cv_select, Selection};

use crate::data::Dataset;
use crate::error::{GaiError, Result};
use crate::family::GlmFamily;
use crate::rng::derive_seed;

/// Inner fold count used by nested model selection.
pub const INNER_FOLDS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NuisanceConfig {
    pub outcome: OutcomeModel,
    pub propensity: PropensityModel,
    /// Standardize learner features on each training split.
    pub standardize: bool,
    pub clip_floor_e: f64,
    /// Give unlabeled rows the average outcome prediction of all fold models
    /// instead of the model of their own fold.
    pub average_aux_predictions: bool,
}

impl Default for NuisanceConfig {
    fn default() -> Self {
        NuisanceConfig {
            outcome: OutcomeModel::default(),
            propensity: PropensityModel::default(),
            standardize: true,
            clip_floor_e: 0.01,
            average_aux_predictions: false,
        }
    }
}

impl NuisanceConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.clip_floor_e > 0.0 && self.clip_floor_e < 0.5) {
            return Err(GaiError::config(format!("clip_floor_e must lie in (0, 0.5), got {}", self.clip_floor_e)));
        }
        self.outcome.validate()
    }
}

/// Per-fold record of what was fitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldDiagnostics {
    pub fold: usize,
    pub size: usize,
    pub train_primary: usize,
    pub outcome: OutcomeModel,
    pub cv_losses: Option<Vec<f64>>,
    pub warnings: Vec<String>,
}

/// Out-of-fold nuisance predictions, aligned with the dataset rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NuisanceFits {
    k: usize,
    /// `n×k` row-major.
    g_hat: Vec<f64>,
    e_hat: Vec<f64>,
    fold_id: Vec<usize>,
    pub folds: Vec<FoldDiagnostics>,
}

impl NuisanceFits {
    /// Nuisances supplied directly (e.g. oracle values); every row is put in fold 0.
    pub fn from_values(k: usize, g_hat: Vec<f64>, e_hat: Vec<f64>) -> Result<Self> {
        let n = e_hat.len();
        if g_hat.len() != n * k {
            return Err(GaiError::dim(format!("expected {} outcome predictions, got {}", n * k, g_hat.len())));
        }
        if g_hat.iter().any(|g| !g.is_finite()) {
            return Err(GaiError::input("non-finite outcome prediction"));
        }
        if e_hat.iter().any(|e| !(*e > 0.0 && *e <= 1.0)) {
            return Err(GaiError::Domain("propensities must lie in (0, 1]".into()));
        }
        Ok(NuisanceFits { k, g_hat, e_hat, fold_id: vec![0; n], folds: Vec::new() })
    }

    pub fn n(&self) -> usize {
        self.e_hat.len()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn g(&self, i: usize) -> &[f64] {
        &self.g_hat[i * self.k..(i + 1) * self.k]
    }

    pub fn e(&self, i: usize) -> f64 {
        self.e_hat[i]
    }

    pub fn g_values(&self) -> &[f64] {
        &self.g_hat
    }

    pub fn e_values(&self) -> &[f64] {
        &self.e_hat
    }

    pub fn fold_id(&self) -> &[usize] {
        &self.fold_id
    }

    pub fn warnings(&self) -> impl Iterator<Item = &str> {
        self.folds.iter().flat_map(|f| f.warnings.iter().map(String::as_str))
    }
}

struct FoldFit {
    outcome: OutcomePredictor,
    propensity: PropensityPredictor,
    diag: FoldDiagnostics,
}

/// K-fold cross-fitting. Each fold's outcome model is trained on the labeled
/// rows outside the fold and its propensity model on all rows outside it.
/// With `select`, the outcome model of each fold is chosen from the candidate
/// menu by inner cross-validation on the fold complement.
pub fn cross_fit(
    data: &Dataset,
    k_folds: usize,
    config: &NuisanceConfig,
    family: GlmFamily,
    seed: u64,
    select: Option<&[OutcomeModel]>,
) -> Result<NuisanceFits> {
    config.validate()?;
    family.validate()?;
    if data.k() != family.k() {
        return Err(GaiError::dim(format!("data has k={}, family {} needs k={}", data.k(), family.name(), family.k())));
    }
    let n = data.n();
    let folds = assign_folds(n, k_folds, derive_seed(seed, 0))?;
    let members = fold_members(&folds, k_folds);
    let complements: Vec<Vec<usize>> =
        (0..k_folds).map(|f| (0..n).filter(|&i| folds[i] != f).collect()).collect();
    for (f, comp) in complements.iter().enumerate() {
        if !comp.iter().any(|&i| data.is_labeled(i)) {
            return Err(GaiError::EmptyFoldComplement { fold: f });
        }
    }

    let fits: Vec<FoldFit> = (0..k_folds)
        .into_par_iter()
        .map(|f| -> Result<FoldFit> {
            let comp = &complements[f];
            let mut warnings = Vec::new();
            let (outcome_model, cv_losses) = match select {
                Some(cands) => {
                    let s = nested_cv_select(
                        data,
                        comp,
                        cands,
                        INNER_FOLDS,
                        config.standardize,
                        family,
                        derive_seed(seed, 1 + f as u64),
                    )?;
                    (cands[s.index], Some(s.losses))
                }
                None => (config.outcome, None),
            };
            let (outcome, w1) = fit_outcome_model(data, comp, &outcome_model, config.standardize, family)?;
            let (propensity, w2) = fit_propensity(data, comp, &config.propensity, config.standardize)?;
            warnings.extend(w1.into_iter().chain(w2).map(|w| format!("fold {f}: {w}")));
            let diag = FoldDiagnostics {
                fold: f,
                size: members[f].len(),
                train_primary: comp.iter().filter(|&&i| data.is_labeled(i)).count(),
                outcome: outcome_model,
                cv_losses,
                warnings,
            };
            Ok(FoldFit { outcome, propensity, diag })
        })
        .collect::<Result<Vec<_>>>()?;

    for w in fits.iter().flat_map(|f| &f.diag.warnings) {
        log::warn!("{w}");
    }

    let k = family.k();
    let mut g_hat = vec![0.0; n * k];
    let mut e_hat = vec![0.0; n];
    for i in 0..n {
        let row = data.design.row(i);
        let z = data.z(i);
        let own = &fits[folds[i]];
        let g = if config.average_aux_predictions && !data.is_labeled(i) {
            let mut acc = vec![0.0; k];
            for fit in &fits {
                for (a, v) in acc.iter_mut().zip(fit.outcome.predict(row, z)) {
                    *a += v;
                }
            }
            acc.iter_mut().for_each(|a| *a /= k_folds as f64);
            acc
        } else {
            own.outcome.predict(row, z)
        };
        g_hat[i * k..(i + 1) * k].copy_from_slice(&g);
        e_hat[i] = own.propensity.predict(row, z, config.clip_floor_e);
    }

    Ok(NuisanceFits { k, g_hat, e_hat, fold_id: folds, folds: fits.into_iter().map(|f| f.diag).collect() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Design;

    fn data(w: Vec<bool>) -> Dataset {
        let n = w.len();
        let mut v = Vec::new();
        for i in 0..n {
            v.extend([1.0, (i as f64 * 0.37).sin()]);
        }
        let y = (0..n).map(|i| Some(vec![(i % 2) as f64])).collect();
        let z = (0..n).map(|i| (i as f64 * 0.11).fract()).collect();
        Dataset::new(Design::new(1, 2, v).unwrap(), y, w, z, 1).unwrap()
    }

    #[test]
    fn fully_labeled_identity() {
        let d = data(vec![true; 20]);
        let cfg = NuisanceConfig { outcome: OutcomeModel::IdentityFromZ, ..Default::default() };
        let fits = cross_fit(&d, 5, &cfg, GlmFamily::Logistic, 3, None).unwrap();
        for i in 0..20 {
            assert_eq!(fits.e(i), 1.0);
            assert_eq!(fits.g(i), d.z(i));
        }
    }

    #[test]
    fn deterministic() {
        let w = (0..40).map(|i| i % 3 == 0).collect::<Vec<_>>();
        let d = data(w);
        let cfg = NuisanceConfig::default();
        let a = cross_fit(&d, 4, &cfg, GlmFamily::Logistic, 9, None).unwrap();
        let b = cross_fit(&d, 4, &cfg, GlmFamily::Logistic, 9, None).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_complement_names_fold() {
        let mut w = vec![false; 10];
        w[0] = true;
        let d = data(w);
        let fits = cross_fit(&d, 2, &NuisanceConfig::default(), GlmFamily::Logistic, 1, None);
        assert!(matches!(fits, Err(GaiError::EmptyFoldComplement { .. })));
    }

    #[test]
    fn propensity_floor_holds() {
        let w = (0..50).map(|i| i % 10 == 0).collect::<Vec<_>>();
        let d = data(w);
        let cfg = NuisanceConfig {
            propensity: PropensityModel::RidgeLogistic { ridge: 1e-6, features: FeatureSpec::default() },
            clip_floor_e: 0.2,
            ..Default::default()
        };
        let fits = cross_fit(&d, 2, &cfg, GlmFamily::Logistic, 1, None).unwrap();
        assert!(fits.e_values().iter().all(|e| (0.2..=1.0).contains(e)));
    }
}

use serde::{Deserialize, Serialize};

use super::folds::{assign_folds, fold_members};
use super::outcome::{fit_outcome_model, OutcomeModel};
use crate::data::Dataset;
use crate::error::{GaiError, Result};
use crate::family::GlmFamily;

/// Outcome of an inner cross-validation sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub index: usize,
    /// Mean validation loss per candidate; `inf` for candidates that failed.
    pub losses: Vec<f64>,
}

/// Picks the outcome model with the smallest inner-CV prediction loss on the
/// labeled rows of `rows`. Ties go to the lowest index.
pub fn nested_cv_select(
    data: &Dataset,
    rows: &[usize],
    candidates: &[OutcomeModel],
    inner_folds: usize,
    standardize: bool,
    family: GlmFamily,
    seed: u64,
) -> Result<Selection> {
    if candidates.is_empty() {
        return Err(GaiError::config("model selection needs at least one candidate"));
    }
    if candidates.len() == 1 {
        return Ok(Selection { index: 0, losses: vec![f64::NAN] });
    }
    let primary: Vec<usize> = rows.iter().copied().filter(|&i| data.is_labeled(i)).collect();
    let folds = assign_folds(primary.len(), inner_folds, seed)?;
    let members = fold_members(&folds, inner_folds);

    let losses: Vec<f64> = candidates
        .iter()
        .map(|cand| {
            let mut total = 0.0;
            for (f, valid) in members.iter().enumerate() {
                let train: Vec<usize> =
                    primary.iter().zip(&folds).filter(|(_, g)| **g != f).map(|(i, _)| *i).collect();
                let Ok((pred, _)) = fit_outcome_model(data, &train, cand, standardize, family) else {
                    return f64::INFINITY;
                };
                for &v in valid {
                    let i = primary[v];
                    let mu = pred.predict(data.design.row(i), data.z(i));
                    total += family.mean_loss(data.label(i).expect("labeled"), &mu);
                }
            }
            let loss = total / primary.len() as f64;
            if loss.is_finite() {
                loss
            } else {
                f64::INFINITY
            }
        })
        .collect();

    let mut best = None;
    for (i, l) in losses.iter().enumerate() {
        if l.is_finite() && best.is_none_or(|b: usize| *l < losses[b]) {
            best = Some(i);
        }
    }
    let index = best.ok_or_else(|| GaiError::Numerical("every model-selection candidate failed".into()))?;
    Ok(Selection { index, losses })
}

//! Feature construction for GLM-type nuisance learners.

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Design, DesignRow};

/// Which raw inputs enter a nuisance learner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureSpec {
    /// The flattened design matrix `vec(X)`.
    pub design: bool,
    /// The auxiliary signal `z`.
    pub aux: bool,
    /// Expand each coordinate of `z` into indicators of its distinct training
    /// values (reference level dropped). Meant for discrete AI labels.
    pub aux_indicators: bool,
    /// Pairwise products of the non-constant raw features.
    pub interactions: bool,
}

impl Default for FeatureSpec {
    fn default() -> Self {
        FeatureSpec { design: true, aux: true, aux_indicators: false, interactions: false }
    }
}

/// Feature map fitted on a training split: raw features, pairwise products,
/// dropping of constant columns and (optionally) standardization.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    spec: FeatureSpec,
    /// Sorted distinct training values per `z` coordinate (indicator mode only).
    levels: Vec<Vec<f64>>,
    /// Raw-column indices that vary on the training split.
    keep: Vec<usize>,
    pairs: Vec<(usize, usize)>,
    center: Vec<f64>,
    scale: Vec<f64>,
}

impl FeatureMap {
    pub fn fit(spec: FeatureSpec, data: &Dataset, rows: &[usize], standardize: bool) -> FeatureMap {
        let mut levels = Vec::new();
        if spec.aux && spec.aux_indicators {
            for c in 0..data.dz() {
                let mut v: Vec<f64> = rows.iter().map(|&i| data.z(i)[c]).collect();
                v.sort_by(f64::total_cmp);
                v.dedup();
                levels.push(v);
            }
        }
        let raw: Vec<Vec<f64>> = rows.iter().map(|&i| raw_features(spec, &levels, data.design.row(i), data.z(i))).collect();
        let width = raw.first().map_or(0, Vec::len);
        let keep: Vec<usize> = (0..width)
            .filter(|&c| {
                let first = raw[0][c];
                raw.iter().any(|r| r[c] != first)
            })
            .collect();
        let mut pairs = Vec::new();
        if spec.interactions {
            for (a, &ca) in keep.iter().enumerate() {
                for &cb in &keep[a + 1..] {
                    pairs.push((ca, cb));
                }
            }
        }
        let mut map = FeatureMap { spec, levels, keep, pairs, center: Vec::new(), scale: Vec::new() };
        let expanded: Vec<Vec<f64>> = raw.iter().map(|r| map.expand(r)).collect();
        let m = map.width();
        if standardize && !expanded.is_empty() {
            let n = expanded.len() as f64;
            for c in 0..m {
                let mean = expanded.iter().map(|r| r[c]).sum::<f64>() / n;
                let var = expanded.iter().map(|r| (r[c] - mean).powi(2)).sum::<f64>() / n;
                let sd = var.sqrt();
                map.center.push(mean);
                map.scale.push(if sd > 1e-12 { sd } else { 1.0 });
            }
        } else {
            map.center = vec![0.0; m];
            map.scale = vec![1.0; m];
        }
        map
    }

    /// Number of features, excluding the intercept.
    pub fn width(&self) -> usize {
        self.keep.len() + self.pairs.len()
    }

    fn expand(&self, raw: &[f64]) -> Vec<f64> {
        let mut out: Vec<f64> = self.keep.iter().map(|&c| raw[c]).collect();
        out.extend(self.pairs.iter().map(|&(a, b)| raw[a] * raw[b]));
        out
    }

    /// Standardized features with a leading intercept.
    pub fn transform(&self, row: DesignRow<'_>, z: &[f64]) -> Vec<f64> {
        let raw = raw_features(self.spec, &self.levels, row, z);
        let mut out = Vec::with_capacity(self.width() + 1);
        out.push(1.0);
        for ((v, c), s) in self.expand(&raw).into_iter().zip(&self.center).zip(&self.scale) {
            out.push((v - c) / s);
        }
        out
    }

    /// GLM design row for a family with `k` outputs: for `k = 1` the feature
    /// vector itself, otherwise a block-diagonal `k × k(m+1)` matrix giving
    /// every class its own coefficients.
    pub fn design_row(&self, row: DesignRow<'_>, z: &[f64], k: usize) -> Vec<f64> {
        let f = self.transform(row, z);
        block_rows(&f, k)
    }

    /// Coefficient count of the GLM built on this map.
    pub fn n_coef(&self, k: usize) -> usize {
        k * (self.width() + 1)
    }

    /// Ridge penalty per coefficient; intercepts are not penalized.
    pub fn penalty(&self, k: usize, ridge: f64) -> Vec<f64> {
        let m = self.width() + 1;
        (0..k * m).map(|c| if c % m == 0 { 0.0 } else { ridge }).collect()
    }

    pub fn build_design(&self, data: &Dataset, rows: &[usize], k: usize) -> Design {
        let mut out = Design::with_capacity(k, self.n_coef(k), rows.len());
        for &i in rows {
            out.push_row(&self.design_row(data.design.row(i), data.z(i), k));
        }
        out
    }
}

fn block_rows(f: &[f64], k: usize) -> Vec<f64> {
    if k == 1 {
        return f.to_vec();
    }
    let m = f.len();
    let mut out = vec![0.0; k * k * m];
    for j in 0..k {
        out[j * k * m + j * m..j * k * m + (j + 1) * m].copy_from_slice(f);
    }
    out
}

fn raw_features(spec: FeatureSpec, levels: &[Vec<f64>], row: DesignRow<'_>, z: &[f64]) -> Vec<f64> {
    let mut out = Vec::new();
    if spec.design {
        out.extend_from_slice(row.values());
    }
    if spec.aux {
        if spec.aux_indicators {
            for (v, lv) in z.iter().zip(levels) {
                out.extend(lv.iter().skip(1).map(|l| if v == l { 1.0 } else { 0.0 }));
            }
        } else {
            out.extend_from_slice(z);
        }
    }
    out
}

/// Class code carried by the first coordinate of `z`: `1..=k` names a
/// non-baseline class, anything else is the baseline.
pub(crate) fn choice_code(z: &[f64], k: usize) -> Option<usize> {
    let c = z[0].round();
    if c >= 1.0 && c <= k as f64 && (z[0] - c).abs() < 1e-9 {
        Some(c as usize - 1)
    } else {
        None
    }
}

/// Design row for the label-shift outcome model: alternative `j` gets
/// `(x_(j), [z = j])`.
pub(crate) fn label_shift_row(row: DesignRow<'_>, z: &[f64]) -> Vec<f64> {
    let (k, d) = (row.k(), row.d());
    let code = choice_code(z, k);
    let mut out = Vec::with_capacity(k * (d + 1));
    for j in 0..k {
        out.extend_from_slice(row.alt(j));
        out.push(if code == Some(j) { 1.0 } else { 0.0 });
    }
    out
}

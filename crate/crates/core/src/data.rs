//! Design matrices and partially labeled datasets.

use serde::{Deserialize, Serialize};

use crate::error::{GaiError, Result};

/// Borrowed `k×d` feature matrix of one observation, row-major.
#[derive(Debug, Clone, Copy)]
pub struct DesignRow<'a> {
    k: usize,
    d: usize,
    values: &'a [f64],
}

impl<'a> DesignRow<'a> {
    pub fn new(k: usize, d: usize, values: &'a [f64]) -> Result<Self> {
        if values.len() != k * d {
            return Err(GaiError::dim(format!(
                "design row has {} entries, expected {k}x{d}",
                values.len()
            )));
        }
        Ok(DesignRow { k, d, values })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn values(&self) -> &'a [f64] {
        self.values
    }

    /// Row `j` of the matrix (the feature vector of alternative `j`).
    pub fn alt(&self, j: usize) -> &'a [f64] {
        &self.values[j * self.d..(j + 1) * self.d]
    }

    /// `θ = Xβ`, written into `out` (length `k`).
    pub fn theta_into(&self, beta: &[f64], out: &mut [f64]) {
        for (j, o) in out.iter_mut().enumerate() {
            *o = dot(self.alt(j), beta);
        }
    }

    /// `out += scale · Xᵀ v` with `v` of length `k`.
    pub fn add_xt_v(&self, v: &[f64], scale: f64, out: &mut [f64]) {
        for (j, vj) in v.iter().enumerate() {
            let c = scale * vj;
            if c != 0.0 {
                for (o, x) in out.iter_mut().zip(self.alt(j)) {
                    *o += c * x;
                }
            }
        }
    }

    /// `out += scale · Xᵀ H X` for a row-major `k×k` matrix `H`; `out` is `d×d` row-major.
    pub fn add_xt_h_x(&self, h: &[f64], scale: f64, out: &mut [f64]) {
        let (k, d) = (self.k, self.d);
        if k == 1 {
            let c = scale * h[0];
            let x = self.values;
            for a in 0..d {
                let ca = c * x[a];
                if ca != 0.0 {
                    for b in 0..d {
                        out[a * d + b] += ca * x[b];
                    }
                }
            }
            return;
        }
        for i in 0..k {
            let xi = self.alt(i);
            for j in 0..k {
                let c = scale * h[i * k + j];
                if c == 0.0 {
                    continue;
                }
                let xj = self.alt(j);
                for a in 0..d {
                    let ca = c * xi[a];
                    for b in 0..d {
                        out[a * d + b] += ca * xj[b];
                    }
                }
            }
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Stack of `n` design rows sharing a `k×d` shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Design {
    k: usize,
    d: usize,
    values: Vec<f64>,
}

impl Design {
    pub fn new(k: usize, d: usize, values: Vec<f64>) -> Result<Self> {
        if k == 0 || d == 0 {
            return Err(GaiError::dim("design needs k >= 1 and d >= 1"));
        }
        if !values.len().is_multiple_of(k * d) {
            return Err(GaiError::dim(format!(
                "{} design values is not a multiple of {k}x{d}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(GaiError::input("design contains non-finite entries"));
        }
        Ok(Design { k, d, values })
    }

    pub fn with_capacity(k: usize, d: usize, n: usize) -> Self {
        Design { k, d, values: Vec::with_capacity(n * k * d) }
    }

    pub fn push_row(&mut self, row: &[f64]) {
        debug_assert_eq!(row.len(), self.k * self.d);
        self.values.extend_from_slice(row);
    }

    pub fn n(&self) -> usize {
        self.values.len() / (self.k * self.d)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> DesignRow<'_> {
        let s = self.k * self.d;
        DesignRow { k: self.k, d: self.d, values: &self.values[i * s..(i + 1) * s] }
    }

    pub fn rows(&self) -> impl Iterator<Item = DesignRow<'_>> + '_ {
        (0..self.n()).map(move |i| self.row(i))
    }

    pub fn select(&self, idx: &[usize]) -> Design {
        let mut out = Design::with_capacity(self.k, self.d, idx.len());
        for &i in idx {
            out.push_row(self.row(i).values);
        }
        out
    }
}

/// Partially labeled data `(X_i, y_i, w_i, z_i)`.
///
/// Rows with `w = 0` may still carry a recorded label (simulated data keeps it
/// for oracle evaluation); estimators never read it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub design: Design,
    /// `n×k` labels, row-major; entries of rows without a recorded label are `NaN`.
    y: Vec<f64>,
    w: Vec<bool>,
    /// `n×dz` auxiliary signals.
    z: Vec<f64>,
    dz: usize,
}

impl Dataset {
    /// Labels are `None` where unrecorded. A row with `w = true` must carry a label.
    pub fn new(design: Design, y: Vec<Option<Vec<f64>>>, w: Vec<bool>, z: Vec<f64>, dz: usize) -> Result<Self> {
        let n = design.n();
        let k = design.k();
        if y.len() != n || w.len() != n {
            return Err(GaiError::dim(format!(
                "design has {n} rows but {} labels and {} indicators",
                y.len(),
                w.len()
            )));
        }
        let mut flat = Vec::with_capacity(n * k);
        for (i, yi) in y.into_iter().enumerate() {
            match yi {
                Some(v) => {
                    if v.len() != k {
                        return Err(GaiError::dim(format!("row {i}: label has length {}, expected {k}", v.len())));
                    }
                    if v.iter().any(|t| !t.is_finite()) {
                        return Err(GaiError::input(format!("row {i}: non-finite label")));
                    }
                    flat.extend(v);
                }
                None if w[i] => {
                    return Err(GaiError::input(format!("row {i}: labeled (w=1) row without a label")));
                }
                None => flat.extend(std::iter::repeat_n(f64::NAN, k)),
            }
        }
        Self::from_parts(design, flat, w, z, dz)
    }

    pub(crate) fn from_parts(design: Design, y: Vec<f64>, w: Vec<bool>, z: Vec<f64>, dz: usize) -> Result<Self> {
        let n = design.n();
        if dz == 0 {
            return Err(GaiError::dim("auxiliary signal needs dz >= 1"));
        }
        if z.len() != n * dz {
            return Err(GaiError::dim(format!("expected {} auxiliary values, got {}", n * dz, z.len())));
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(GaiError::input("auxiliary signal contains non-finite entries"));
        }
        debug_assert_eq!(y.len(), n * design.k());
        Ok(Dataset { design, y, w, z, dz })
    }

    pub fn n(&self) -> usize {
        self.design.n()
    }

    pub fn k(&self) -> usize {
        self.design.k()
    }

    pub fn d(&self) -> usize {
        self.design.d()
    }

    pub fn dz(&self) -> usize {
        self.dz
    }

    pub fn n_primary(&self) -> usize {
        self.w.iter().filter(|w| **w).count()
    }

    pub fn n_aux(&self) -> usize {
        self.n() - self.n_primary()
    }

    pub fn is_labeled(&self, i: usize) -> bool {
        self.w[i]
    }

    pub fn w(&self) -> &[bool] {
        &self.w
    }

    /// Label usable by estimators: present only when `w = 1`.
    pub fn label(&self, i: usize) -> Option<&[f64]> {
        if self.w[i] {
            Some(self.recorded_label(i).expect("labeled rows carry y"))
        } else {
            None
        }
    }

    /// Any recorded label, including those of unlabeled rows kept for oracle checks.
    pub fn recorded_label(&self, i: usize) -> Option<&[f64]> {
        let k = self.k();
        let y = &self.y[i * k..(i + 1) * k];
        if y[0].is_nan() {
            None
        } else {
            Some(y)
        }
    }

    pub fn z(&self, i: usize) -> &[f64] {
        &self.z[i * self.dz..(i + 1) * self.dz]
    }

    pub fn z_values(&self) -> &[f64] {
        &self.z
    }

    pub fn primary_indices(&self) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.w[i]).collect()
    }

    /// Subset of rows, order preserved.
    pub fn select(&self, idx: &[usize]) -> Dataset {
        let k = self.k();
        let mut y = Vec::with_capacity(idx.len() * k);
        let mut z = Vec::with_capacity(idx.len() * self.dz);
        let mut w = Vec::with_capacity(idx.len());
        for &i in idx {
            y.extend_from_slice(&self.y[i * k..(i + 1) * k]);
            z.extend_from_slice(self.z(i));
            w.push(self.w[i]);
        }
        Dataset { design: self.design.select(idx), y, w, z, dz: self.dz }
    }

    /// Copy with every recorded label marked as observed (`w ≡ 1`).
    /// Fails if some row has no recorded label.
    pub fn fully_labeled(&self) -> Result<Dataset> {
        if (0..self.n()).any(|i| self.recorded_label(i).is_none()) {
            return Err(GaiError::input("dataset has rows without a recorded label"));
        }
        let mut out = self.clone();
        out.w.iter_mut().for_each(|w| *w = true);
        Ok(out)
    }

    /// Copy with a replaced labeling indicator; labels must exist where `w = 1`.
    pub fn with_labels_observed(&self, w: Vec<bool>) -> Result<Dataset> {
        if w.len() != self.n() {
            return Err(GaiError::dim("indicator length mismatch"));
        }
        if let Some(i) = (0..self.n()).find(|&i| w[i] && self.recorded_label(i).is_none()) {
            return Err(GaiError::input(format!("row {i}: no recorded label to observe")));
        }
        let mut out = self.clone();
        out.w = w;
        Ok(out)
    }

    /// Labels as stored, `NaN` where unrecorded.
    pub fn raw_labels(&self) -> &[f64] {
        &self.y
    }
}

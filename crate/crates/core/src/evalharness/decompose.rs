use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dgp::DgpSpec;
use crate::error::{GaiError, Result};
use crate::estimator::{checked_inverse, information_matrix};

/// Monte Carlo estimates of the two variance-reduction sources and their
/// cross term, all `d×d` and row-major.
///
/// With `a = Xᵀ(∇b(Xβ*) - E[y|X])` and `c = Xᵀ(E[y|X] - E[y|X,z])`:
/// `term_ii = E[aaᵀ]`, `term_iii = E[ccᵀ]`, `cross = E[acᵀ]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionReport {
    pub dgp: String,
    pub rho: f64,
    pub samples: usize,
    pub beta_star: Vec<f64>,
    pub j: Vec<Vec<f64>>,
    pub term_ii: Vec<Vec<f64>>,
    pub term_iii: Vec<Vec<f64>>,
    pub cross: Vec<Vec<f64>>,
    pub se_ii: Vec<Vec<f64>>,
    pub se_iii: Vec<Vec<f64>>,
    pub se_cross: Vec<Vec<f64>>,
    /// `(1/ρ - 1) J⁻¹ [(II) + (III)] J⁻¹`.
    pub predicted_gap: Vec<Vec<f64>>,
}

impl DecompositionReport {
    pub fn cross_norm(&self) -> f64 {
        frobenius(&self.cross)
    }

    /// Root of the summed squared entry standard errors; the scale of the
    /// Frobenius norm of a pure-noise matrix.
    pub fn cross_norm_se(&self) -> f64 {
        frobenius(&self.se_cross)
    }

    pub fn ii_norm(&self) -> f64 {
        frobenius(&self.term_ii)
    }

    pub fn ii_norm_se(&self) -> f64 {
        frobenius(&self.se_ii)
    }

    pub fn iii_norm(&self) -> f64 {
        frobenius(&self.term_iii)
    }

    pub fn iii_norm_se(&self) -> f64 {
        frobenius(&self.se_iii)
    }

    pub fn iii_min_eigenvalue(&self) -> f64 {
        let m = DMatrix::from_fn(self.term_iii.len(), self.term_iii.len(), |i, j| self.term_iii[i][j]);
        m.symmetric_eigenvalues().min()
    }
}

fn frobenius(m: &[Vec<f64>]) -> f64 {
    m.iter().flatten().map(|v| v * v).sum::<f64>().sqrt()
}

struct Moments {
    mean: DMatrix<f64>,
    sq: DMatrix<f64>,
}

impl Moments {
    fn new(d: usize) -> Self {
        Moments { mean: DMatrix::zeros(d, d), sq: DMatrix::zeros(d, d) }
    }

    fn push(&mut self, u: &[f64], v: &[f64]) {
        for (i, ui) in u.iter().enumerate() {
            for (j, vj) in v.iter().enumerate() {
                let p = ui * vj;
                self.mean[(i, j)] += p;
                self.sq[(i, j)] += p * p;
            }
        }
    }

    fn finish(self, n: usize) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let nf = n as f64;
        let mean = self.mean / nf;
        let se = DMatrix::from_fn(mean.nrows(), mean.ncols(), |i, j| {
            let var = (self.sq[(i, j)] / nf - mean[(i, j)].powi(2)).max(0.0) * nf / (nf - 1.0);
            (var / nf).sqrt()
        });
        (rows(&mean), rows(&se))
    }
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

/// Estimates the decomposition terms on `mc_samples` draws of `dgp` using its
/// oracle `β*`, `E[y|X]` and `E[y|X,z]`.
pub fn variance_decomposition_report(dgp: &DgpSpec, rho: f64, mc_samples: usize, seed: u64) -> Result<DecompositionReport> {
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(GaiError::config(format!("rho must lie in (0, 1], got {rho}")));
    }
    if mc_samples < 2 {
        return Err(GaiError::config("mc_samples must be at least 2"));
    }
    let spec = DgpSpec { n: mc_samples, ..dgp.clone() };
    let sim = spec.generate(seed)?;
    let family = spec.family();
    let (k, d) = (family.k(), sim.data.d());
    let beta = &sim.oracle.beta_star;
    let (m, g) = (&sim.oracle.mean_given_x, &sim.oracle.g_star);
    if m.len() != mc_samples * k || g.len() != mc_samples * k {
        return Err(GaiError::Numerical("generator did not supply the conditional-mean oracles".into()));
    }
    let mut ii = Moments::new(d);
    let mut iii = Moments::new(d);
    let mut cross = Moments::new(d);
    let mut theta = vec![0.0; k];
    let mut mu = vec![0.0; k];
    for i in 0..mc_samples {
        let row = sim.data.design.row(i);
        row.theta_into(beta, &mut theta);
        family.grad_into(&theta, &mut mu);
        let mi = &m[i * k..(i + 1) * k];
        let gi = &g[i * k..(i + 1) * k];
        let ra: Vec<f64> = mu.iter().zip(mi).map(|(u, v)| u - v).collect();
        let rc: Vec<f64> = mi.iter().zip(gi).map(|(u, v)| u - v).collect();
        let mut a = vec![0.0; d];
        let mut c = vec![0.0; d];
        row.add_xt_v(&ra, 1.0, &mut a);
        row.add_xt_v(&rc, 1.0, &mut c);
        ii.push(&a, &a);
        iii.push(&c, &c);
        cross.push(&a, &c);
    }
    let all: Vec<usize> = (0..mc_samples).collect();
    let j = information_matrix(family, &sim.data.design, &all, beta);
    let jinv = checked_inverse(&j)?;
    let (term_ii, se_ii) = ii.finish(mc_samples);
    let (term_iii, se_iii) = iii.finish(mc_samples);
    let (cross, se_cross) = cross.finish(mc_samples);
    let sum = DMatrix::from_fn(d, d, |a, b| term_ii[a][b] + term_iii[a][b]);
    let gap = &jinv * sum * &jinv * (1.0 / rho - 1.0);
    Ok(DecompositionReport {
        dgp: spec.name().to_string(),
        rho,
        samples: mc_samples,
        beta_star: beta.clone(),
        j: rows(&j),
        term_ii,
        term_iii,
        cross,
        se_ii,
        se_iii,
        se_cross,
        predicted_gap: rows(&gap),
    })
}

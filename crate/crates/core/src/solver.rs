//! Damped Newton solver for weighted, pseudo-labeled GLM score equations.
//!
//! Solves `Σᵢ wᵢ Xᵢᵀ(∇b(Xᵢβ) - tᵢ) + Pβ = 0` by minimizing the convex surrogate
//! `Σᵢ wᵢ [b(Xᵢβ) - tᵢᵀXᵢβ] + ½ βᵀPβ` with a diagonal penalty `P`. Targets
//! are free to leave the label range (pseudo-labels routinely do), so the
//! same routine fits primary, pooled, augmented and nuisance models.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{Design, DesignRow};
use crate::error::{GaiError, Result};
use crate::family::GlmFamily;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    /// Convergence threshold on the Euclidean norm of the (summed) score.
    pub tol: f64,
    pub max_iter: usize,
    /// Fits whose coefficient norm exceeds this are flagged as divergent.
    pub beta_cap: f64,
    /// Armijo sufficient-decrease constant.
    pub armijo_c: f64,
    /// A fit also needs its last Newton step below `step_tol · max(1, ‖β‖)`.
    pub step_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { tol: 1e-9, max_iter: 200, beta_cap: 1e3, armijo_c: 1e-4, step_tol: 1e-6 }
    }
}

/// Why the solver stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    MaxIterations,
    /// `‖β‖` exceeded the configured cap (separation or an unbounded surrogate).
    NormCap,
    LineSearchFailed,
    SingularSystem,
    /// A coefficient has no support among the weighted rows and no penalty.
    DegenerateColumn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub beta: Vec<f64>,
    pub iterations: usize,
    pub final_score_norm: f64,
    pub converged: bool,
    pub termination: Termination,
}

/// Canonical score `Xᵀ(∇b(Xβ) - y)` of a single row.
pub fn canonical_score(family: GlmFamily, row: DesignRow<'_>, y: &[f64], beta: &[f64]) -> Result<Vec<f64>> {
    check_row(family, row, y, beta)?;
    let k = family.k();
    let mut theta = vec![0.0; k];
    row.theta_into(beta, &mut theta);
    let mut mean = vec![0.0; k];
    family.grad_into(&theta, &mut mean);
    for (m, yj) in mean.iter_mut().zip(y) {
        *m -= yj;
    }
    let mut out = vec![0.0; row.d()];
    row.add_xt_v(&mean, 1.0, &mut out);
    Ok(out)
}

pub(crate) fn check_row(family: GlmFamily, row: DesignRow<'_>, y: &[f64], beta: &[f64]) -> Result<()> {
    if row.k() != family.k() || y.len() != family.k() || beta.len() != row.d() {
        return Err(GaiError::dim(format!(
            "row is {}x{}, label has {} entries, beta has {}; family {} needs k={}",
            row.k(),
            row.d(),
            y.len(),
            beta.len(),
            family.name(),
            family.k()
        )));
    }
    Ok(())
}

/// Weighted GLM fit with a uniform ridge penalty `(ridge/2)‖β‖²`.
pub fn fit_score_equation(
    family: GlmFamily,
    design: &Design,
    targets: &[f64],
    weights: &[f64],
    ridge: f64,
    opts: &SolverOptions,
) -> Result<FitResult> {
    if !(ridge >= 0.0 && ridge.is_finite()) {
        return Err(GaiError::input(format!("ridge must be a nonnegative finite number, got {ridge}")));
    }
    let penalty = vec![ridge; design.d()];
    fit_penalized(family, design, targets, weights, &penalty, opts, None)
}

/// Weighted GLM fit with a per-coefficient ridge penalty and optional warm start.
pub fn fit_penalized(
    family: GlmFamily,
    design: &Design,
    targets: &[f64],
    weights: &[f64],
    penalty: &[f64],
    opts: &SolverOptions,
    init: Option<&[f64]>,
) -> Result<FitResult> {
    let problem = Problem::new(family, design, targets, weights, penalty)?;
    let d = design.d();
    let mut beta = match init {
        Some(b) if b.len() == d => b.to_vec(),
        Some(b) => return Err(GaiError::dim(format!("warm start has length {}, expected {d}", b.len()))),
        None => vec![0.0; d],
    };

    if problem.has_degenerate_column() {
        let (_, grad, _) = problem.evaluate(&beta, true);
        return Ok(FitResult {
            beta,
            iterations: 0,
            final_score_norm: norm(&grad),
            converged: false,
            termination: Termination::DegenerateColumn,
        });
    }

    let mut iterations = 0;
    let (mut loss, mut grad, mut hess) = problem.evaluate(&beta, true);
    let termination = loop {
        let gnorm = norm(&grad);
        if !gnorm.is_finite() || !loss.is_finite() {
            break Termination::LineSearchFailed;
        }
        let Some(step) = newton_step(&hess, &grad, d) else {
            break Termination::SingularSystem;
        };
        let bnorm = norm(&beta);
        if gnorm <= opts.tol && norm(&step) <= opts.step_tol * bnorm.max(1.0) {
            // Final polishing step, kept only if it does not worsen the score.
            let cand: Vec<f64> = beta.iter().zip(&step).map(|(b, s)| b + s).collect();
            let (l, g, _) = problem.evaluate(&cand, false);
            if l.is_finite() && norm(&g) <= gnorm {
                beta = cand;
                grad = g;
            }
            break Termination::Converged;
        }
        if iterations >= opts.max_iter {
            break Termination::MaxIterations;
        }
        iterations += 1;

        let slope: f64 = grad.iter().zip(&step).map(|(g, s)| g * s).sum();
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let cand: Vec<f64> = beta.iter().zip(&step).map(|(b, s)| b + alpha * s).collect();
            if cand == beta {
                break;
            }
            let (l, _, _) = problem.evaluate(&cand, false);
            if l.is_finite() && l <= loss + opts.armijo_c * alpha * slope {
                accepted = Some(cand);
                break;
            }
            alpha *= 0.5;
        }
        let cand = match accepted {
            Some(c) => c,
            None => {
                // Near the optimum the loss is flat to rounding; accept a full
                // step when it still shrinks the score.
                let cand: Vec<f64> = beta.iter().zip(&step).map(|(b, s)| b + s).collect();
                let (_, g, _) = problem.evaluate(&cand, false);
                if norm(&g) < gnorm {
                    cand
                } else {
                    break Termination::LineSearchFailed;
                }
            }
        };
        beta = cand;
        if norm(&beta) > opts.beta_cap {
            grad = problem.evaluate(&beta, false).1;
            break Termination::NormCap;
        }
        let (l, g, h) = problem.evaluate(&beta, true);
        loss = l;
        grad = g;
        hess = h;
    };

    Ok(FitResult {
        final_score_norm: norm(&grad),
        converged: termination == Termination::Converged,
        beta,
        iterations,
        termination,
    })
}

/// Surrogate loss `Σᵢ wᵢ [b(Xᵢβ) - tᵢᵀXᵢβ] + ½ βᵀPβ`.
pub fn surrogate_loss(
    family: GlmFamily,
    design: &Design,
    targets: &[f64],
    weights: &[f64],
    penalty: &[f64],
    beta: &[f64],
) -> Result<f64> {
    let problem = Problem::new(family, design, targets, weights, penalty)?;
    if beta.len() != design.d() {
        return Err(GaiError::dim("beta length does not match design"));
    }
    Ok(problem.evaluate(beta, false).0)
}

/// Summed penalized score `Σᵢ wᵢ Xᵢᵀ(∇b(Xᵢβ) - tᵢ) + Pβ`.
pub fn weighted_score(
    family: GlmFamily,
    design: &Design,
    targets: &[f64],
    weights: &[f64],
    penalty: &[f64],
    beta: &[f64],
) -> Result<Vec<f64>> {
    let problem = Problem::new(family, design, targets, weights, penalty)?;
    if beta.len() != design.d() {
        return Err(GaiError::dim("beta length does not match design"));
    }
    Ok(problem.evaluate(beta, false).1)
}

struct Problem<'a> {
    family: GlmFamily,
    design: &'a Design,
    targets: &'a [f64],
    weights: &'a [f64],
    penalty: &'a [f64],
}

impl<'a> Problem<'a> {
    fn new(
        family: GlmFamily,
        design: &'a Design,
        targets: &'a [f64],
        weights: &'a [f64],
        penalty: &'a [f64],
    ) -> Result<Self> {
        family.validate()?;
        let (n, k, d) = (design.n(), design.k(), design.d());
        if k != family.k() {
            return Err(GaiError::dim(format!("design has k={k}, family {} needs k={}", family.name(), family.k())));
        }
        if targets.len() != n * k || weights.len() != n {
            return Err(GaiError::dim(format!(
                "{n} rows need {} targets and {n} weights, got {} and {}",
                n * k,
                targets.len(),
                weights.len()
            )));
        }
        if penalty.len() != d || penalty.iter().any(|p| !(*p >= 0.0 && p.is_finite())) {
            return Err(GaiError::input("penalty must hold d nonnegative finite entries"));
        }
        let mut any_positive = false;
        for (i, w) in weights.iter().enumerate() {
            if !(*w >= 0.0 && w.is_finite()) {
                return Err(GaiError::input(format!("row {i}: weight {w} is not a nonnegative finite number")));
            }
            if *w > 0.0 {
                any_positive = true;
                if targets[i * k..(i + 1) * k].iter().any(|t| !t.is_finite()) {
                    return Err(GaiError::input(format!("row {i}: non-finite target")));
                }
            }
        }
        if !any_positive {
            return Err(GaiError::input("at least one weight must be positive"));
        }
        Ok(Problem { family, design, targets, weights, penalty })
    }

    fn has_degenerate_column(&self) -> bool {
        let d = self.design.d();
        let mut support = vec![false; d];
        for (i, w) in self.weights.iter().enumerate() {
            if *w > 0.0 {
                let row = self.design.row(i).values();
                for (idx, x) in row.iter().enumerate() {
                    if *x != 0.0 {
                        support[idx % d] = true;
                    }
                }
            }
        }
        support.iter().zip(self.penalty).any(|(s, p)| !s && *p == 0.0)
    }

    /// Loss, gradient and (optionally) Hessian at `beta`.
    fn evaluate(&self, beta: &[f64], with_hessian: bool) -> (f64, Vec<f64>, Vec<f64>) {
        let (k, d) = (self.design.k(), self.design.d());
        let mut loss = 0.0;
        let mut grad = vec![0.0; d];
        let mut hess = if with_hessian { vec![0.0; d * d] } else { Vec::new() };
        let mut theta = vec![0.0; k];
        let mut resid = vec![0.0; k];
        let mut h = vec![0.0; k * k];
        for (i, w) in self.weights.iter().enumerate() {
            if *w == 0.0 {
                continue;
            }
            let row = self.design.row(i);
            let t = &self.targets[i * k..(i + 1) * k];
            row.theta_into(beta, &mut theta);
            let lin: f64 = theta.iter().zip(t).map(|(a, b)| a * b).sum();
            loss += w * (self.family.b_unchecked(&theta) - lin);
            self.family.grad_into(&theta, &mut resid);
            for (r, tj) in resid.iter_mut().zip(t) {
                *r -= tj;
            }
            row.add_xt_v(&resid, *w, &mut grad);
            if with_hessian {
                self.family.hess_into(&theta, &mut h);
                row.add_xt_h_x(&h, *w, &mut hess);
            }
        }
        for (a, p) in self.penalty.iter().enumerate() {
            if *p > 0.0 {
                loss += 0.5 * p * beta[a] * beta[a];
                grad[a] += p * beta[a];
                if with_hessian {
                    hess[a * d + a] += p;
                }
            }
        }
        (loss, grad, hess)
    }
}

/// Solve `(H + δI) s = -g` with `δ = 1e-10 · tr(H) / d`.
fn newton_step(hess: &[f64], grad: &[f64], d: usize) -> Option<Vec<f64>> {
    let mut h = DMatrix::from_row_slice(d, d, hess);
    let trace = h.trace();
    if !trace.is_finite() {
        return None;
    }
    let damping = 1e-10 * trace.abs() / d as f64;
    for a in 0..d {
        h[(a, a)] += damping;
    }
    let chol = h.cholesky()?;
    let rhs = DVector::from_iterator(d, grad.iter().map(|g| -g));
    let s = chol.solve(&rhs);
    if s.iter().all(|v| v.is_finite()) {
        Some(s.iter().copied().collect())
    } else {
        None
    }
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

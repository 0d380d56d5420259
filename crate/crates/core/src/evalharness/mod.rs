//! Monte Carlo experiment driver and evaluation metrics.

mod decompose;
mod metrics;

use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use decompose::{variance_decomposition_report, DecompositionReport};
pub use metrics::{
    classify_interval, coverage_and_width, covers, decision_errors, mape, Coverage, DecisionError, DecisionErrors,
    Interval,
};

use crate::baselines::{fit_naive, fit_ppi_glm, fit_primary, PpiLambda, ZProjection};
use crate::data::Dataset;
use crate::dgp::{DgpSpec, OracleBundle};
use crate::error::{GaiError, Result};
use crate::family::GlmFamily;
use crate::estimator::{fit_gai, EstimateReport, EstimatorOptions};
use crate::nuisance::{cross_fit, NuisanceConfig, NuisanceFits, OutcomeModel};
use crate::rng::derive_seed;
use crate::solver::SolverOptions;

/// An estimator requested by an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "name", deny_unknown_fields)]
pub enum EstimatorSpec {
    /// The augmented estimator; `oracle` swaps cross-fitted nuisances for the
    /// generator's `g*` and `e*`.
    Gai {
        #[serde(default)]
        oracle: bool,
    },
    Primary,
    Naive,
    Ppi {
        lambda: f64,
    },
    PpiPlusPlus,
}

impl EstimatorSpec {
    pub fn label(&self) -> String {
        match self {
            EstimatorSpec::Gai { oracle: false } => "gai".into(),
            EstimatorSpec::Gai { oracle: true } => "gai_oracle".into(),
            EstimatorSpec::Primary => "primary".into(),
            EstimatorSpec::Naive => "naive".into(),
            EstimatorSpec::Ppi { lambda } => format!("ppi_{lambda}"),
            EstimatorSpec::PpiPlusPlus => "ppi_plus_plus".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricOptions {
    /// Offset `c` in the MAPE denominator.
    pub c_offset: f64,
    pub ci_level: f64,
}

impl Default for MetricOptions {
    fn default() -> Self {
        MetricOptions { c_offset: 1.0, ci_level: 0.95 }
    }
}

fn default_estimators() -> Vec<EstimatorSpec> {
    vec![EstimatorSpec::Gai { oracle: false }, EstimatorSpec::Primary]
}

fn default_folds() -> usize {
    5
}

fn default_trials() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dgp: DgpSpec,
    #[serde(default = "default_estimators")]
    pub estimators: Vec<EstimatorSpec>,
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default)]
    pub nuisance: NuisanceConfig,
    /// Outcome-model menu for nested cross-validation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub candidates: Option<Vec<OutcomeModel>>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub metrics: MetricOptions,
    #[serde(default)]
    pub solver: SolverOptions,
    /// Clip-normalize MNL pseudo-labels.
    #[serde(default)]
    pub mnl_clip: bool,
}

impl ExperimentConfig {
    pub fn new(dgp: DgpSpec, estimators: Vec<EstimatorSpec>, trials: usize, seed: u64) -> Self {
        ExperimentConfig {
            dgp,
            estimators,
            folds: default_folds(),
            nuisance: NuisanceConfig::default(),
            candidates: None,
            trials,
            seed,
            metrics: MetricOptions::default(),
            solver: SolverOptions::default(),
            mnl_clip: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(GaiError::config("trials must be at least 1"));
        }
        if self.estimators.is_empty() {
            return Err(GaiError::config("estimators must list at least one estimator"));
        }
        if !(self.metrics.ci_level > 0.0 && self.metrics.ci_level < 1.0) {
            return Err(GaiError::config(format!("metrics.ci_level must lie in (0, 1), got {}", self.metrics.ci_level)));
        }
        if !(self.metrics.c_offset >= 0.0) {
            return Err(GaiError::config(format!("metrics.c_offset must be nonnegative, got {}", self.metrics.c_offset)));
        }
        if self.folds < 2 {
            return Err(GaiError::config("folds must be at least 2"));
        }
        for e in &self.estimators {
            if let EstimatorSpec::Ppi { lambda } = e {
                if !lambda.is_finite() {
                    return Err(GaiError::config("estimators.lambda must be finite"));
                }
            }
        }
        if let Some(c) = &self.candidates {
            if c.is_empty() {
                return Err(GaiError::config("candidates must be non-empty when given"));
            }
            for m in c {
                m.validate()?;
            }
        }
        self.nuisance.validate()?;
        self.dgp.validate()
    }

    pub fn estimator_options(&self) -> EstimatorOptions {
        EstimatorOptions { solver: self.solver, ci_level: self.metrics.ci_level, mnl_clip: self.mnl_clip, ..Default::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialStatus {
    Ok,
    Failed,
    Inapplicable,
}

/// One estimator's result on one trial's dataset. Equality ignores
/// `wall_time`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial_id: usize,
    pub estimator: String,
    pub status: TrialStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
    pub converged: bool,
    pub beta_hat: Vec<f64>,
    pub ci_lower: Vec<f64>,
    pub ci_upper: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    pub n_primary: usize,
    pub n_aux: usize,
    #[serde(skip)]
    pub wall_time: Duration,
}

impl PartialEq for TrialRecord {
    fn eq(&self, o: &Self) -> bool {
        self.trial_id == o.trial_id
            && self.estimator == o.estimator
            && self.status == o.status
            && self.message == o.message
            && self.converged == o.converged
            && self.beta_hat == o.beta_hat
            && self.ci_lower == o.ci_lower
            && self.ci_upper == o.ci_upper
            && self.lambda == o.lambda
            && self.n_primary == o.n_primary
            && self.n_aux == o.n_aux
    }
}

impl TrialRecord {
    fn from_result(trial_id: usize, label: String, data: &Dataset, res: Result<EstimateReport>, wall_time: Duration) -> Self {
        let mut rec = TrialRecord {
            trial_id,
            estimator: label,
            status: TrialStatus::Ok,
            message: None,
            converged: false,
            beta_hat: Vec::new(),
            ci_lower: Vec::new(),
            ci_upper: Vec::new(),
            lambda: None,
            n_primary: data.n_primary(),
            n_aux: data.n_aux(),
            wall_time,
        };
        match res {
            Ok(rep) => {
                rec.converged = rep.converged();
                rec.lambda = rep.lambda;
                rec.beta_hat = rep.beta;
                rec.ci_lower = rep.ci_lower;
                rec.ci_upper = rep.ci_upper;
            }
            Err(GaiError::Inapplicable { reason, .. }) => {
                rec.status = TrialStatus::Inapplicable;
                rec.message = Some(reason);
            }
            Err(e) => {
                rec.status = TrialStatus::Failed;
                rec.message = Some(e.to_string());
            }
        }
        rec
    }

    /// Whether the record enters the metrics.
    pub fn usable(&self) -> bool {
        self.status == TrialStatus::Ok && self.converged
    }
}

/// Aggregate metrics of one estimator. Metric fields are `None` when the
/// estimator was inapplicable or never produced a usable fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub estimator: String,
    pub inapplicable: bool,
    pub trials: usize,
    /// Trials with a converged fit.
    pub used: usize,
    pub n_primary: f64,
    pub n_aux: f64,
    pub mape: Option<f64>,
    pub coverage: Option<Coverage>,
    pub decision_errors: Option<DecisionErrors>,
    /// Monte Carlo variance of each coefficient across used trials.
    pub mc_variance: Option<Vec<f64>>,
    pub mape_per_trial: Vec<f64>,
}

pub fn summarize(label: &str, records: &[&TrialRecord], beta_star: &[f64], c_offset: f64) -> Result<MetricSummary> {
    let used: Vec<&TrialRecord> = records.iter().copied().filter(|r| r.usable()).collect();
    let mean_count = |f: fn(&TrialRecord) -> usize| {
        if records.is_empty() {
            0.0
        } else {
            records.iter().map(|r| f(r) as f64).sum::<f64>() / records.len() as f64
        }
    };
    let mut s = MetricSummary {
        estimator: label.to_string(),
        inapplicable: !records.is_empty() && records.iter().all(|r| r.status == TrialStatus::Inapplicable),
        trials: records.len(),
        used: used.len(),
        n_primary: mean_count(|r| r.n_primary),
        n_aux: mean_count(|r| r.n_aux),
        mape: None,
        coverage: None,
        decision_errors: None,
        mc_variance: None,
        mape_per_trial: Vec::new(),
    };
    if used.is_empty() {
        return Ok(s);
    }
    s.mape_per_trial = used.iter().map(|r| mape(&r.beta_hat, beta_star, c_offset)).collect::<Result<_>>()?;
    s.mape = Some(s.mape_per_trial.iter().sum::<f64>() / used.len() as f64);
    let ivs: Vec<Interval> = used.iter().map(|r| Interval { lower: &r.ci_lower, upper: &r.ci_upper }).collect();
    s.coverage = Some(coverage_and_width(&ivs, beta_star)?);
    s.decision_errors = Some(decision_errors(&ivs, beta_star)?);
    let betas: Vec<Vec<f64>> = used.iter().map(|r| r.beta_hat.clone()).collect();
    let cov = mc_covariance(&betas);
    s.mc_variance = Some((0..beta_star.len()).map(|j| cov[(j, j)]).collect());
    Ok(s)
}

/// Sample covariance (divisor `T - 1`) of a set of coefficient vectors.
pub fn mc_covariance(betas: &[Vec<f64>]) -> DMatrix<f64> {
    let d = betas.first().map_or(0, |b| b.len());
    let t = betas.len() as f64;
    let mut mean = vec![0.0; d];
    for b in betas {
        for (m, v) in mean.iter_mut().zip(b) {
            *m += v / t;
        }
    }
    let mut cov = DMatrix::zeros(d, d);
    for b in betas {
        for i in 0..d {
            for j in 0..d {
                cov[(i, j)] += (b[i] - mean[i]) * (b[j] - mean[j]);
            }
        }
    }
    if t > 1.0 {
        cov /= t - 1.0;
    }
    cov
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub beta_star: Vec<f64>,
    pub summaries: Vec<MetricSummary>,
    pub records: Vec<TrialRecord>,
}

impl ExperimentResult {
    pub fn records_for(&self, label: &str) -> Vec<&TrialRecord> {
        self.records.iter().filter(|r| r.estimator == label).collect()
    }

    pub fn summary(&self, label: &str) -> Option<&MetricSummary> {
        self.summaries.iter().find(|s| s.estimator == label)
    }
}

/// Seed of the dataset drawn for trial `t`.
pub fn trial_seed(seed: u64, t: usize) -> u64 {
    derive_seed(seed, t as u64)
}

/// Runs every estimator on one dataset per trial. Trials run in parallel on
/// the current rayon pool; results do not depend on the pool size.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    config.validate()?;
    let beta_star = config.dgp.beta_star()?;
    let per_trial: Vec<Vec<TrialRecord>> =
        (0..config.trials).into_par_iter().map(|t| run_trial(config, t)).collect::<Result<_>>()?;
    let records: Vec<TrialRecord> = per_trial.into_iter().flatten().collect();
    let mut summaries = Vec::with_capacity(config.estimators.len());
    for e in &config.estimators {
        let label = e.label();
        let recs: Vec<&TrialRecord> = records.iter().filter(|r| r.estimator == label).collect();
        summaries.push(summarize(&label, &recs, &beta_star, config.metrics.c_offset)?);
    }
    Ok(ExperimentResult { beta_star, summaries, records })
}

fn run_trial(config: &ExperimentConfig, t: usize) -> Result<Vec<TrialRecord>> {
    let seed = trial_seed(config.seed, t);
    let sim = config.dgp.generate(seed)?;
    let family = config.dgp.family();
    let proj = config.dgp.z_projection();
    let opts = config.estimator_options();
    let needs_fit = config.estimators.contains(&EstimatorSpec::Gai { oracle: false });
    let cross: Option<Result<NuisanceFits>> = needs_fit.then(|| {
        cross_fit(&sim.data, config.folds, &config.nuisance, family, derive_seed(seed, 1), config.candidates.as_deref())
    });
    let mut out = Vec::with_capacity(config.estimators.len());
    for e in &config.estimators {
        let start = Instant::now();
        let res = fit_estimator(e, &sim.data, family, proj, cross.as_ref(), Some(&sim.oracle), &opts);
        out.push(TrialRecord::from_result(t, e.label(), &sim.data, res, start.elapsed()));
    }
    Ok(out)
}

/// Fits one estimator on `data`. `cross` is the cross-fit outcome (needed by
/// `gai`), `oracle` the generator's nuisances (needed by `gai_oracle`).
#[allow(clippy::too_many_arguments)]
pub fn fit_estimator(
    spec: &EstimatorSpec,
    data: &Dataset,
    family: GlmFamily,
    proj: ZProjection,
    cross: Option<&Result<NuisanceFits>>,
    oracle: Option<&OracleBundle>,
    opts: &EstimatorOptions,
) -> Result<EstimateReport> {
    match spec {
        EstimatorSpec::Gai { oracle: true } => match oracle {
            Some(o) => fit_gai(data, &o.nuisances(family.k())?, family, opts),
            None => Err(GaiError::config("gai with oracle nuisances needs a generated dataset")),
        },
        EstimatorSpec::Gai { oracle: false } => match cross {
            Some(Ok(n)) => fit_gai(data, n, family, opts),
            Some(Err(e)) => Err(GaiError::Numerical(format!("cross-fitting failed: {e}"))),
            None => Err(GaiError::Numerical("nuisances were not fitted".into())),
        },
        EstimatorSpec::Primary => fit_primary(data, family, opts),
        EstimatorSpec::Naive => fit_naive(data, family, proj, opts),
        EstimatorSpec::Ppi { lambda } => fit_ppi_glm(data, family, proj, PpiLambda::Fixed(*lambda), opts),
        EstimatorSpec::PpiPlusPlus => fit_ppi_glm(data, family, proj, PpiLambda::Auto, opts),
    }
}

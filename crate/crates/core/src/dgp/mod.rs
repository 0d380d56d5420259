//! Synthetic data-generating processes with known oracle nuisances.

mod failure;
mod hidden;
mod llm;
mod misspec;
pub mod quadrature;
mod twin;

use std::collections::{BTreeMap, HashMap};
use std::sync::{Mutex, OnceLock};

use serde::{Deserialize, Serialize};

pub use failure::FailureParams;
pub use hidden::HiddenParams;
pub use llm::LlmParams;
pub use misspec::MisspecParams;
pub use twin::TwinParams;

use crate::baselines::ZProjection;
use crate::data::{Dataset, Design};
use crate::error::{GaiError, Result};
use crate::estimator::information_matrix;
use crate::family::GlmFamily;
use crate::nuisance::NuisanceFits;
use crate::rng::{derive_seed, rng_from_seed, Rng};
use crate::solver::{fit_score_equation, SolverOptions};

/// Rows used for the operational β* of DGPs without a closed form.
pub const ORACLE_ROWS: usize = 1_000_000;
/// Seed of the cached β* fits.
pub const ORACLE_SEED: u64 = 0x0A11_CE5E_ED00_0001;

/// How the labeling indicator `w` is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum Labeling {
    /// `w ~ Bernoulli(rho)` independently of everything else.
    Bernoulli { rho: f64 },
    /// The first `n_primary` rows are labeled.
    Fixed { n_primary: usize },
}

impl Default for Labeling {
    fn default() -> Self {
        Labeling::Bernoulli { rho: 0.2 }
    }
}

impl Labeling {
    fn validate(&self, n: usize) -> Result<()> {
        match *self {
            Labeling::Bernoulli { rho } if !(rho > 0.0 && rho <= 1.0) => {
                Err(GaiError::config(format!("labeling rate must lie in (0, 1], got {rho}")))
            }
            Labeling::Fixed { n_primary } if n_primary == 0 || n_primary > n => {
                Err(GaiError::config(format!("n_primary must lie in 1..={n}, got {n_primary}")))
            }
            _ => Ok(()),
        }
    }

    /// Marginal labeling probability.
    pub fn rate(&self, n: usize) -> f64 {
        match *self {
            Labeling::Bernoulli { rho } => rho,
            Labeling::Fixed { n_primary } => n_primary as f64 / n as f64,
        }
    }

    fn draw(&self, i: usize, rng: &mut Rng) -> bool {
        use rand::Rng as _;
        match *self {
            Labeling::Bernoulli { rho } => rng.random::<f64>() < rho,
            Labeling::Fixed { n_primary } => i < n_primary,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum DgpModel {
    DigitalTwin(TwinParams),
    HiddenFactor(HiddenParams),
    OffShelfLlm(LlmParams),
    FailureOfDominance(FailureParams),
    MisspecifiedLinear(MisspecParams),
}

/// A generator together with its sample size and labeling rule.
/// The failure-of-dominance model selects labels itself and ignores `labeling`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DgpSpec {
    pub model: DgpModel,
    pub n: usize,
    #[serde(default)]
    pub labeling: Labeling,
}

/// Population quantities attached to a simulated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleBundle {
    pub beta_star: Vec<f64>,
    /// `E[y | X, z]` per row, `n×k`.
    pub g_star: Vec<f64>,
    /// `P(w = 1 | X, z)` per row.
    pub e_star: Vec<f64>,
    /// `E[y | X]` per row, `n×k`.
    pub mean_given_x: Vec<f64>,
    /// Closed-form asymptotic variances where the model has them.
    pub printed: BTreeMap<String, f64>,
}

impl OracleBundle {
    /// The oracle nuisances as cross-fit output.
    pub fn nuisances(&self, k: usize) -> Result<NuisanceFits> {
        NuisanceFits::from_values(k, self.g_star.clone(), self.e_star.clone())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Simulated {
    pub data: Dataset,
    pub oracle: OracleBundle,
}

impl DgpSpec {
    pub fn new(model: DgpModel, n: usize, labeling: Labeling) -> Self {
        DgpSpec { model, n, labeling }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(GaiError::config("sample size must be positive"));
        }
        if !matches!(self.model, DgpModel::FailureOfDominance(_)) {
            self.labeling.validate(self.n)?;
        }
        match &self.model {
            DgpModel::DigitalTwin(p) => p.validate(),
            DgpModel::HiddenFactor(p) => p.validate(),
            DgpModel::OffShelfLlm(p) => p.validate(),
            DgpModel::FailureOfDominance(p) => p.validate(),
            DgpModel::MisspecifiedLinear(p) => p.validate(),
        }
    }

    pub fn family(&self) -> GlmFamily {
        match &self.model {
            DgpModel::DigitalTwin(_) => GlmFamily::Logistic,
            DgpModel::HiddenFactor(_) | DgpModel::FailureOfDominance(_) | DgpModel::MisspecifiedLinear(_) => {
                GlmFamily::Linear
            }
            DgpModel::OffShelfLlm(p) => GlmFamily::Mnl { k: p.alternatives },
        }
    }

    /// How the model's auxiliary signal reads as a label.
    pub fn z_projection(&self) -> ZProjection {
        match &self.model {
            DgpModel::DigitalTwin(_) | DgpModel::HiddenFactor(_) | DgpModel::FailureOfDominance(_) => {
                ZProjection::Scalar
            }
            DgpModel::OffShelfLlm(_) => ZProjection::Choice,
            DgpModel::MisspecifiedLinear(_) => ZProjection::Embedding,
        }
    }

    pub fn name(&self) -> &'static str {
        match &self.model {
            DgpModel::DigitalTwin(_) => "digital_twin",
            DgpModel::HiddenFactor(_) => "hidden_factor",
            DgpModel::OffShelfLlm(_) => "off_shelf_llm",
            DgpModel::FailureOfDominance(_) => "failure_of_dominance",
            DgpModel::MisspecifiedLinear(_) => "misspecified_linear",
        }
    }

    /// Draws a dataset with its oracles. Pure in `(self, seed)`.
    pub fn generate(&self, seed: u64) -> Result<Simulated> {
        self.validate()?;
        let mut rng = rng_from_seed(seed);
        let raw = self.draw(self.n, &self.labeling, &mut rng)?;
        let beta_star = self.beta_star()?;
        Ok(raw.finish(beta_star))
    }

    fn draw(&self, n: usize, labeling: &Labeling, rng: &mut Rng) -> Result<Raw> {
        match &self.model {
            DgpModel::DigitalTwin(p) => twin::draw(p, n, labeling, rng),
            DgpModel::HiddenFactor(p) => hidden::draw(p, n, labeling, rng),
            DgpModel::OffShelfLlm(p) => llm::draw(p, n, labeling, rng),
            DgpModel::FailureOfDominance(p) => failure::draw(p, n, rng),
            DgpModel::MisspecifiedLinear(p) => misspec::draw(p, n, labeling, rng),
        }
    }

    /// Best-in-class parameter. Closed form or an exact population fit where
    /// the covariate law allows it, otherwise a cached fit on [`ORACLE_ROWS`]
    /// fully observed rows.
    pub fn beta_star(&self) -> Result<Vec<f64>> {
        let exact = match &self.model {
            DgpModel::HiddenFactor(_) => Some(vec![0.0]),
            DgpModel::FailureOfDominance(p) => Some(p.beta.clone()),
            DgpModel::MisspecifiedLinear(p) => Some(p.population_beta()),
            DgpModel::DigitalTwin(_) | DgpModel::OffShelfLlm(_) => None,
        };
        if let Some(b) = exact {
            return Ok(b);
        }
        let key = format!("{:?}", self.model);
        let cache = BETA_CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut guard = cache.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(b) = guard.get(&key) {
            return Ok(b.clone());
        }
        let b = match &self.model {
            DgpModel::DigitalTwin(p) => p.population_beta()?,
            DgpModel::OffShelfLlm(p) => match p.population_beta()? {
                Some(b) => b,
                None => self.oracle_fit(ORACLE_SEED, ORACLE_ROWS)?.0,
            },
            _ => unreachable!("closed forms handled above"),
        };
        guard.insert(key, b.clone());
        Ok(b)
    }

    /// Fits the model's GLM on `rows` fully observed draws; returns the
    /// coefficients and their sandwich standard errors.
    pub fn oracle_fit(&self, seed: u64, rows: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        let family = self.family();
        let mut rng = rng_from_seed(derive_seed(seed, 0xB5));
        let raw = self.draw(rows, &Labeling::Bernoulli { rho: 1.0 }, &mut rng)?;
        let data = raw.data.fully_labeled()?;
        let y = data.raw_labels().to_vec();
        let fit = fit_score_equation(family, &data.design, &y, &vec![1.0; rows], 0.0, &SolverOptions::default())?;
        if !fit.converged {
            return Err(GaiError::Numerical(format!("oracle fit stopped with {:?}", fit.termination)));
        }
        let nuis = NuisanceFits::from_values(family.k(), y.clone(), vec![1.0; rows])?;
        let (_, sigma) = crate::estimator::sandwich_variance(&data, &nuis, family, &fit.beta)?;
        let se = (0..fit.beta.len()).map(|j| (sigma[(j, j)] / rows as f64).sqrt()).collect();
        Ok((fit.beta, se))
    }

    /// `J = E[Xᵀ∇²b(Xβ*)X]` estimated on `rows` draws.
    pub fn information(&self, seed: u64, rows: usize) -> Result<nalgebra::DMatrix<f64>> {
        let beta = self.beta_star()?;
        let mut rng = rng_from_seed(seed);
        let raw = self.draw(rows, &self.labeling, &mut rng)?;
        let idx: Vec<usize> = (0..rows).collect();
        Ok(information_matrix(self.family(), &raw.data.design, &idx, &beta))
    }
}

/// Weighted fit of exact conditional means; the weights are a probability
/// law over the design rows.
pub(crate) fn population_fit(family: GlmFamily, design: &Design, targets: &[f64], weights: &[f64]) -> Result<Vec<f64>> {
    let opts = SolverOptions { tol: 1e-13, ..SolverOptions::default() };
    let fit = fit_score_equation(family, design, targets, weights, 0.0, &opts)?;
    if !fit.converged {
        return Err(GaiError::Numerical(format!("population fit stopped with {:?}", fit.termination)));
    }
    Ok(fit.beta)
}

static BETA_CACHE: OnceLock<Mutex<HashMap<String, Vec<f64>>>> = OnceLock::new();

/// Generator output before β* is attached.
pub(crate) struct Raw {
    pub data: Dataset,
    pub g_star: Vec<f64>,
    pub e_star: Vec<f64>,
    pub mean_given_x: Vec<f64>,
    pub printed: BTreeMap<String, f64>,
}

impl Raw {
    fn finish(self, beta_star: Vec<f64>) -> Simulated {
        let oracle = OracleBundle {
            beta_star,
            g_star: self.g_star,
            e_star: self.e_star,
            mean_given_x: self.mean_given_x,
            printed: self.printed,
        };
        Simulated { data: self.data, oracle }
    }
}

pub(crate) fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(GaiError::config(format!("{name} must be positive and finite, got {v}")))
    }
}

pub(crate) fn check_finite(name: &str, v: &[f64]) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(GaiError::config(format!("{name} must be finite")))
    }
}

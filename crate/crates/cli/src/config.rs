use std::path::{Path, PathBuf};

use gai::baselines::ZProjection;
use gai::dgp::{DgpSpec, Labeling};
use gai::evalharness::{EstimatorSpec, ExperimentConfig, MetricOptions};
use gai::nuisance::{NuisanceConfig, OutcomeModel};
use gai::{GaiError, GlmFamily, SolverOptions};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Output {
    /// Not embedded in outputs, so a run can be replayed elsewhere.
    #[serde(default = "default_out", skip_serializing)]
    pub dir: PathBuf,
    #[serde(default)]
    pub format: Format,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

impl Default for Output {
    fn default() -> Self {
        Output { dir: default_out(), format: Format::Json }
    }
}

/// Primary sample sizes to sweep; each block draws `n_primary + n_aux` rows
/// with the first `n_primary` labeled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub n_primary: Vec<usize>,
    pub n_aux: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Decompose {
    /// Labeling rate; defaults to the generator's.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(default = "default_mc")]
    pub mc_samples: usize,
}

fn default_mc() -> usize {
    200_000
}

impl Default for Decompose {
    fn default() -> Self {
        Decompose { rho: None, mc_samples: default_mc() }
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

/// Contents of the `--config` file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dgp: Option<DgpSpec>,
    /// CSV dataset for `estimate`, relative to the working directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<PathBuf>,
    /// Model family for an external dataset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<GlmFamily>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z_projection: Option<ZProjection>,
    #[serde(default = "default_estimators")]
    pub estimators: Vec<EstimatorSpec>,
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default)]
    pub nuisance: NuisanceConfig,
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
    #[serde(default)]
    pub mnl_clip: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<Sweep>,
    #[serde(default)]
    pub decompose: Decompose,
    #[serde(default)]
    pub output: Output,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::config(format!("invalid config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn require_dgp(&self) -> Result<&DgpSpec, CliError> {
        self.dgp.as_ref().ok_or_else(|| CliError::config("missing field `dgp`"))
    }

    /// Experiment settings around `dgp`.
    pub fn experiment(&self, dgp: DgpSpec) -> Result<ExperimentConfig, CliError> {
        let cfg = ExperimentConfig {
            dgp,
            estimators: self.estimators.clone(),
            folds: self.folds,
            nuisance: self.nuisance,
            candidates: self.candidates.clone(),
            trials: self.trials,
            seed: self.seed,
            metrics: self.metrics,
            solver: self.solver,
            mnl_clip: self.mnl_clip,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// One generator spec per sweep block, or the configured one.
    pub fn blocks(&self) -> Result<Vec<(Option<usize>, DgpSpec)>, CliError> {
        let dgp = self.require_dgp()?;
        match &self.sweep {
            None => Ok(vec![(None, dgp.clone())]),
            Some(s) => {
                if s.n_primary.is_empty() || s.n_primary.contains(&0) {
                    return Err(CliError::config("sweep.n_primary must list positive sizes"));
                }
                Ok(s.n_primary
                    .iter()
                    .map(|&np| {
                        let spec = DgpSpec {
                            n: np + s.n_aux,
                            labeling: Labeling::Fixed { n_primary: np },
                            ..dgp.clone()
                        };
                        (Some(np), spec)
                    })
                    .collect())
            }
        }
    }

    pub fn resolved_family(&self) -> Result<GlmFamily, CliError> {
        match (&self.family, &self.dgp) {
            (Some(f), _) => Ok(*f),
            (None, Some(d)) => Ok(d.family()),
            (None, None) => Err(CliError::config("missing field `family` (needed for an external dataset)")),
        }
    }

    pub fn resolved_projection(&self) -> ZProjection {
        self.z_projection.or_else(|| self.dgp.as_ref().map(|d| d.z_projection())).unwrap_or_default()
    }
}

impl From<GaiError> for CliError {
    fn from(e: GaiError) -> Self {
        let code = match &e {
            GaiError::Config(_) => 2,
            GaiError::Numerical(_) | GaiError::IllConditioned { .. } => 4,
            _ => 3,
        };
        CliError { code, message: e.to_string() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config() {
        let c = Config::parse(
            r#"
            seed = 3
            [dgp]
            n = 100
            model = { kind = "hidden_factor", sigma = 2.0 }
            "#,
        )
        .unwrap();
        assert_eq!(c.estimators.len(), 2);
        assert_eq!(c.output.format, Format::Json);
        assert_eq!(c.require_dgp().unwrap().labeling, Labeling::default());
    }

    #[test]
    fn unknown_field_is_named() {
        let e = Config::parse("seeds = 3\n").unwrap_err();
        assert_eq!(e.code, 2);
        assert!(e.message.contains("seeds"), "{}", e.message);
        let e = Config::parse("[dgp]\nn = 10\nmodel = { kind = \"hidden_factor\", sigmaa = 1.0 }\n").unwrap_err();
        assert!(e.message.contains("sigmaa"), "{}", e.message);
    }

    #[test]
    fn sweep_blocks() {
        let c = Config::parse(
            r#"
            [dgp]
            n = 100
            model = { kind = "hidden_factor" }
            [sweep]
            n_primary = [10, 20]
            n_aux = 50
            "#,
        )
        .unwrap();
        let b = c.blocks().unwrap();
        assert_eq!(b[1].1.n, 70);
        assert_eq!(b[1].1.labeling, Labeling::Fixed { n_primary: 20 });
    }
}

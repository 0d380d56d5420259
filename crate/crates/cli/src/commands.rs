use std::fs;
use std::path::Path;

use gai::baselines::ZProjection;
use gai::data::Dataset;
use gai::dgp::OracleBundle;
use gai::estimator::EstimateReport;
use gai::evalharness::{
    fit_estimator, run_experiment, trial_seed, variance_decomposition_report, EstimatorSpec, ExperimentResult,
    MetricSummary, TrialRecord, TrialStatus,
};
use gai::io::{load_dataset, write_dataset};
use gai::nuisance::{cross_fit, FoldDiagnostics};
use gai::rng::derive_seed;
use gai::{GaiError, GlmFamily};
use serde::Serialize;

use crate::config::{Config, Format};
use crate::{json, CliError};

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::data(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))?;
    log::info!("wrote {}", path.display());
    Ok(())
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<(), CliError> {
    let text = json::to_string(value).map_err(|e| CliError::data(format!("cannot serialize {name}: {e}")))?;
    write_file(dir, name, &text)
}

/// `# config: {...}` preface for CSV outputs.
fn preface(config: &Config) -> String {
    let cfg = serde_json::to_string(config).expect("config serializes");
    format!("# config: {cfg}\n")
}

fn csv_text(config: &Config, header: &[String], rows: &[Vec<String>]) -> Result<String, CliError> {
    let mut w = csv::WriterBuilder::new().flexible(false).from_writer(Vec::new());
    w.write_record(header).map_err(|e| CliError::data(e.to_string()))?;
    for r in rows {
        w.write_record(r).map_err(|e| CliError::data(e.to_string()))?;
    }
    let body = w.into_inner().map_err(|e| CliError::data(e.to_string()))?;
    Ok(preface(config) + &String::from_utf8(body).expect("csv emits UTF-8"))
}

fn num(v: f64) -> String {
    v.to_string()
}

#[derive(Serialize)]
struct GenOutput<'a> {
    config: &'a Config,
    dgp: &'a str,
    n: usize,
    n_primary: usize,
    n_aux: usize,
    oracle: OracleSummary<'a>,
}

#[derive(Serialize)]
struct OracleSummary<'a> {
    beta_star: &'a [f64],
    printed: &'a std::collections::BTreeMap<String, f64>,
}

pub fn gen(config: &Config) -> Result<(), CliError> {
    let dgp = config.require_dgp()?;
    let sim = dgp.generate(trial_seed(config.seed, 0))?;
    let mut buf = preface(config).into_bytes();
    write_dataset(&sim.data, &mut buf)?;
    let dir = &config.output.dir;
    write_file(dir, "dataset.csv", &String::from_utf8(buf).expect("csv emits UTF-8"))?;
    let out = GenOutput {
        config,
        dgp: dgp.name(),
        n: sim.data.n(),
        n_primary: sim.data.n_primary(),
        n_aux: sim.data.n_aux(),
        oracle: OracleSummary { beta_star: &sim.oracle.beta_star, printed: &sim.oracle.printed },
    };
    write_json(dir, "oracle.json", &out)
}

#[derive(Debug, Clone, Serialize)]
pub struct EstimatorResult {
    pub estimator: String,
    pub status: TrialStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<EstimateReport>,
}

#[derive(Serialize)]
struct DatasetInfo {
    source: String,
    n: usize,
    n_primary: usize,
    n_aux: usize,
    d: usize,
    k: usize,
    dz: usize,
}

#[derive(Serialize)]
struct NuisanceInfo<'a> {
    folds: &'a [FoldDiagnostics],
    warnings: Vec<&'a str>,
}

#[derive(Serialize)]
struct EstimateOutput<'a> {
    config: &'a Config,
    dataset: DatasetInfo,
    family: GlmFamily,
    z_projection: ZProjection,
    #[serde(skip_serializing_if = "Option::is_none")]
    nuisance: Option<NuisanceInfo<'a>>,
    results: &'a [EstimatorResult],
}

/// Loads or generates the dataset named by `config`.
pub fn dataset(config: &Config) -> Result<(Dataset, Option<OracleBundle>, String), CliError> {
    match (&config.dataset, &config.dgp) {
        (Some(path), _) => {
            let data = load_dataset(path).map_err(|e| match e {
                GaiError::Io(io) => CliError::data(format!("cannot read dataset {}: {io}", path.display())),
                other => CliError::from(other),
            })?;
            Ok((data, None, path.display().to_string()))
        }
        (None, Some(dgp)) => {
            let sim = dgp.generate(trial_seed(config.seed, 0))?;
            Ok((sim.data, Some(sim.oracle), format!("generated:{}", dgp.name())))
        }
        (None, None) => Err(CliError::config("set either `dataset` or `dgp`")),
    }
}

/// Runs the configured estimators on one dataset. Cross-fitting uses the
/// same seed stream as trial 0 of `simulate`.
pub fn estimate_results(config: &Config) -> Result<(Vec<EstimatorResult>, EstimateContext), CliError> {
    if config.estimators.is_empty() {
        return Err(CliError::config("estimators must list at least one estimator"));
    }
    config.nuisance.validate()?;
    let (data, oracle, source) = dataset(config)?;
    let family = config.resolved_family()?;
    let proj = config.resolved_projection();
    let opts = gai::estimator::EstimatorOptions {
        solver: config.solver,
        ci_level: config.metrics.ci_level,
        mnl_clip: config.mnl_clip,
        ..Default::default()
    };
    let cross = config.estimators.contains(&EstimatorSpec::Gai { oracle: false }).then(|| {
        cross_fit(
            &data,
            config.folds,
            &config.nuisance,
            family,
            derive_seed(trial_seed(config.seed, 0), 1),
            config.candidates.as_deref(),
        )
    });
    let results = config
        .estimators
        .iter()
        .map(|e| {
            let res = fit_estimator(e, &data, family, proj, cross.as_ref(), oracle.as_ref(), &opts);
            let (status, reason, report) = match res {
                Ok(r) => (TrialStatus::Ok, None, Some(r)),
                Err(GaiError::Inapplicable { reason, .. }) => (TrialStatus::Inapplicable, Some(reason), None),
                Err(e) => (TrialStatus::Failed, Some(e.to_string()), None),
            };
            EstimatorResult { estimator: e.label(), status, reason, report }
        })
        .collect();
    Ok((results, EstimateContext { data, source, family, proj, cross }))
}

pub struct EstimateContext {
    pub data: Dataset,
    source: String,
    family: GlmFamily,
    proj: ZProjection,
    cross: Option<gai::Result<gai::nuisance::NuisanceFits>>,
}

pub fn estimate(config: &Config) -> Result<(), CliError> {
    let (results, ctx) = estimate_results(config)?;
    let dir = &config.output.dir;
    let nuisance = match &ctx.cross {
        Some(Ok(n)) => Some(NuisanceInfo { folds: &n.folds, warnings: n.warnings().collect() }),
        _ => None,
    };
    let d = &ctx.data;
    let out = EstimateOutput {
        config,
        dataset: DatasetInfo {
            source: ctx.source.clone(),
            n: d.n(),
            n_primary: d.n_primary(),
            n_aux: d.n_aux(),
            d: d.d(),
            k: d.k(),
            dz: d.dz(),
        },
        family: ctx.family,
        z_projection: ctx.proj,
        nuisance,
        results: &results,
    };
    match config.output.format {
        Format::Json => write_json(dir, "estimate.json", &out)?,
        Format::Csv => {
            let header: Vec<String> =
                ["estimator", "status", "coefficient", "beta", "std_error", "ci_lower", "ci_upper", "converged"]
                    .map(String::from)
                    .to_vec();
            let mut rows = Vec::new();
            for r in &results {
                match &r.report {
                    Some(rep) => {
                        let se = rep.std_errors();
                        for (j, s) in se.iter().enumerate() {
                            rows.push(vec![
                                r.estimator.clone(),
                                "ok".into(),
                                j.to_string(),
                                num(rep.beta[j]),
                                num(*s),
                                num(rep.ci_lower[j]),
                                num(rep.ci_upper[j]),
                                rep.converged().to_string(),
                            ]);
                        }
                    }
                    None => {
                        let status = if r.status == TrialStatus::Inapplicable { "inapplicable" } else { "failed" };
                        rows.push(vec![
                            r.estimator.clone(),
                            status.into(),
                            String::new(),
                            String::new(),
                            String::new(),
                            String::new(),
                            String::new(),
                            String::new(),
                        ]);
                    }
                }
            }
            write_file(dir, "estimate.csv", &csv_text(config, &header, &rows)?)?;
        }
    }
    if let Some(Err(e)) = &ctx.cross {
        return Err(CliError { code: 4, message: format!("cross-fitting failed: {e}") });
    }
    for r in &results {
        if r.status == TrialStatus::Failed {
            return Err(CliError {
                code: 4,
                message: format!("{}: {}", r.estimator, r.reason.as_deref().unwrap_or("failed")),
            });
        }
        if let Some(rep) = &r.report {
            if !rep.converged() {
                return Err(CliError {
                    code: 4,
                    message: format!("{}: solver stopped with {:?}", r.estimator, rep.solver.termination),
                });
            }
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct SummaryBlock<'a> {
    #[serde(skip_serializing_if = "Option::is_none")]
    n_primary: Option<usize>,
    beta_star: &'a [f64],
    summaries: &'a [MetricSummary],
}

#[derive(Serialize)]
struct TrialBlock<'a> {
    #[serde(skip_serializing_if = "Option::is_none")]
    n_primary: Option<usize>,
    records: &'a [TrialRecord],
}

#[derive(Serialize)]
struct Blocks<'a, T> {
    config: &'a Config,
    blocks: Vec<T>,
}

/// Runs every sweep block.
pub fn simulate_results(config: &Config) -> Result<Vec<(Option<usize>, ExperimentResult)>, CliError> {
    config
        .blocks()?
        .into_iter()
        .map(|(np, dgp)| {
            let exp = config.experiment(dgp)?;
            Ok((np, run_experiment(&exp)?))
        })
        .collect()
}

fn opt(v: Option<f64>, s: &MetricSummary) -> String {
    match v {
        Some(x) => num(x),
        None if s.inapplicable => "inapplicable".into(),
        None => "NA".into(),
    }
}

pub fn simulate(config: &Config) -> Result<(), CliError> {
    let results = simulate_results(config)?;
    let dir = &config.output.dir;
    match config.output.format {
        Format::Json => {
            let summary = Blocks {
                config,
                blocks: results
                    .iter()
                    .map(|(np, r)| SummaryBlock { n_primary: *np, beta_star: &r.beta_star, summaries: &r.summaries })
                    .collect(),
            };
            write_json(dir, "summary.json", &summary)?;
            let trials = Blocks {
                config,
                blocks: results.iter().map(|(np, r)| TrialBlock { n_primary: *np, records: &r.records }).collect(),
            };
            write_json(dir, "trials.json", &trials)?;
        }
        Format::Csv => {
            let d = results.first().map_or(0, |(_, r)| r.beta_star.len());
            let mut header: Vec<String> = [
                "estimator",
                "n_P",
                "n_A",
                "mape",
                "coverage",
                "ci_width",
                "decision_error_i",
                "decision_error_ii",
                "trials",
                "used",
                "block_n_primary",
            ]
            .map(String::from)
            .to_vec();
            header.extend((0..d).map(|j| format!("coverage_b{j}")));
            header.extend((0..d).map(|j| format!("mc_variance_b{j}")));
            let mut rows = Vec::new();
            for (np, r) in &results {
                for s in &r.summaries {
                    let cov = s.coverage.as_ref();
                    let de = s.decision_errors.as_ref();
                    let mut row = vec![
                        s.estimator.clone(),
                        num(s.n_primary),
                        num(s.n_aux),
                        opt(s.mape, s),
                        opt(cov.map(|c| c.pooled), s),
                        opt(cov.map(|c| c.mean_width), s),
                        opt(de.map(|e| e.wrong_sign), s),
                        opt(de.map(|e| e.spans_zero), s),
                        s.trials.to_string(),
                        s.used.to_string(),
                        np.map_or(String::new(), |v| v.to_string()),
                    ];
                    row.extend((0..d).map(|j| opt(cov.map(|c| c.per_coefficient[j]), s)));
                    row.extend((0..d).map(|j| opt(s.mc_variance.as_ref().map(|v| v[j]), s)));
                    rows.push(row);
                }
            }
            write_file(dir, "summary.csv", &csv_text(config, &header, &rows)?)?;

            let mut header: Vec<String> =
                ["block_n_primary", "trial_id", "estimator", "status", "converged", "n_primary", "n_aux", "lambda"]
                    .map(String::from)
                    .to_vec();
            for name in ["beta", "ci_lower", "ci_upper"] {
                header.extend((0..d).map(|j| format!("{name}_{j}")));
            }
            header.push("message".into());
            let mut rows = Vec::new();
            for (np, r) in &results {
                for rec in &r.records {
                    let status = match rec.status {
                        TrialStatus::Ok => "ok",
                        TrialStatus::Failed => "failed",
                        TrialStatus::Inapplicable => "inapplicable",
                    };
                    let mut row = vec![
                        np.map_or(String::new(), |v| v.to_string()),
                        rec.trial_id.to_string(),
                        rec.estimator.clone(),
                        status.into(),
                        rec.converged.to_string(),
                        rec.n_primary.to_string(),
                        rec.n_aux.to_string(),
                        rec.lambda.map_or(String::new(), num),
                    ];
                    for v in [&rec.beta_hat, &rec.ci_lower, &rec.ci_upper] {
                        row.extend((0..d).map(|j| v.get(j).map_or(String::new(), |x| num(*x))));
                    }
                    row.push(rec.message.clone().unwrap_or_default());
                    rows.push(row);
                }
            }
            write_file(dir, "trials.csv", &csv_text(config, &header, &rows)?)?;
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct DecomposeOutput<'a> {
    config: &'a Config,
    report: &'a gai::evalharness::DecompositionReport,
    cross_norm: f64,
    cross_norm_se: f64,
    ii_norm: f64,
    ii_norm_se: f64,
    iii_norm: f64,
    iii_norm_se: f64,
}

pub fn decompose(config: &Config) -> Result<(), CliError> {
    let dgp = config.require_dgp()?;
    let rho = config.decompose.rho.unwrap_or_else(|| dgp.labeling.rate(dgp.n));
    let report = variance_decomposition_report(dgp, rho, config.decompose.mc_samples, trial_seed(config.seed, 0))?;
    let dir = &config.output.dir;
    match config.output.format {
        Format::Json => write_json(
            dir,
            "decompose.json",
            &DecomposeOutput {
                config,
                report: &report,
                cross_norm: report.cross_norm(),
                cross_norm_se: report.cross_norm_se(),
                ii_norm: report.ii_norm(),
                ii_norm_se: report.ii_norm_se(),
                iii_norm: report.iii_norm(),
                iii_norm_se: report.iii_norm_se(),
            },
        ),
        Format::Csv => {
            let header: Vec<String> = ["term", "i", "j", "value", "std_error"].map(String::from).to_vec();
            let mut rows = Vec::new();
            let terms = [
                ("ii", &report.term_ii, Some(&report.se_ii)),
                ("iii", &report.term_iii, Some(&report.se_iii)),
                ("cross", &report.cross, Some(&report.se_cross)),
                ("j", &report.j, None),
                ("predicted_gap", &report.predicted_gap, None),
            ];
            for (name, m, se) in terms {
                for (i, row) in m.iter().enumerate() {
                    for (j, v) in row.iter().enumerate() {
                        rows.push(vec![
                            name.to_string(),
                            i.to_string(),
                            j.to_string(),
                            num(*v),
                            se.map_or(String::new(), |s| num(s[i][j])),
                        ]);
                    }
                }
            }
            write_file(dir, "decompose.csv", &csv_text(config, &header, &rows)?)
        }
    }
}

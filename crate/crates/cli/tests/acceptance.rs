//! Acceptance criteria. Each test prints one `criterion N ...: PASS|FAIL` line.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use gai::baselines::{fit_ppi_mean, fit_ppi_mean_tuned, fit_primary};
use gai::dgp::{DgpModel, DgpSpec, FailureParams, HiddenParams, Labeling, MisspecParams, TwinParams};
use gai::estimator::{
    fit_gai, gai_score, log_log_slope, orthogonality_probe, pseudo_label, EstimatorOptions, GaiScoreInput,
    Perturbation,
};
use gai::evalharness::{
    classify_interval, coverage_and_width, decision_errors, mape, run_experiment, trial_seed,
    variance_decomposition_report, DecisionError, EstimatorSpec, ExperimentConfig, ExperimentResult, Interval,
};
use gai::nuisance::{cross_fit, NuisanceConfig};
use gai::rng::rng_from_seed;
use gai::solver::canonical_score;
use gai::{fit_score_equation, Design, DesignRow, GlmFamily, SolverOptions};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

fn verdict(id: u32, name: &str, pass: bool, start: Instant, detail: String) {
    let tag = if pass { "PASS" } else { "FAIL" };
    println!("criterion {id} {name}: {tag} ({:.1}s) {detail}", start.elapsed().as_secs_f64());
    assert!(pass, "criterion {id} {name} failed: {detail}");
}

fn variance(v: &[f64]) -> f64 {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64
}

fn within(value: f64, target: f64, rel: f64) -> bool {
    (value - target).abs() <= rel * target.abs()
}

/// Coefficient vectors of the usable records of `label`, in trial order.
fn betas(res: &ExperimentResult, label: &str) -> Vec<Vec<f64>> {
    res.records_for(label).iter().filter(|r| r.usable()).map(|r| r.beta_hat.clone()).collect()
}

/// Paired Monte Carlo estimate of `Cov(a) - Cov(b)` entry `(i, j)` and its
/// standard error, from per-trial centered products.
fn paired_gap(a: &[Vec<f64>], b: &[Vec<f64>], i: usize, j: usize) -> (f64, f64) {
    let t = a.len().min(b.len());
    let mean = |v: &[Vec<f64>], c: usize| v[..t].iter().map(|x| x[c]).sum::<f64>() / t as f64;
    let (ai, aj, bi, bj) = (mean(a, i), mean(a, j), mean(b, i), mean(b, j));
    let d: Vec<f64> = (0..t).map(|s| (a[s][i] - ai) * (a[s][j] - aj) - (b[s][i] - bi) * (b[s][j] - bj)).collect();
    let tf = t as f64;
    let m = d.iter().sum::<f64>() / (tf - 1.0);
    let se = (variance(&d) / tf).sqrt() * tf / (tf - 1.0);
    (m, se)
}

#[test]
fn criterion_01_hidden_factor() {
    let start = Instant::now();
    let (n, big_n, trials) = (500usize, 5000usize, 2000usize);
    let dgp = DgpSpec::new(DgpModel::HiddenFactor(HiddenParams { sigma: 1.0 }), n + big_n, Labeling::Fixed { n_primary: n });
    let opts = EstimatorOptions::default();
    let rows: Vec<[f64; 5]> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let sim = dgp.generate(trial_seed(101, t)).unwrap();
            let ppi1 = fit_ppi_mean(&sim.data, 1.0).unwrap().theta;
            let ppi0 = fit_ppi_mean(&sim.data, 0.0).unwrap().theta;
            let primary = fit_primary(&sim.data, GlmFamily::Linear, &opts).unwrap().beta[0];
            let gai = fit_gai(&sim.data, &sim.oracle.nuisances(1).unwrap(), GlmFamily::Linear, &opts).unwrap().beta[0];
            let lambda = fit_ppi_mean_tuned(&sim.data).unwrap().lambda;
            [ppi1, ppi0, primary, gai, lambda]
        })
        .collect();
    let col = |c: usize| rows.iter().map(|r| r[c]).collect::<Vec<f64>>();
    let v_ppi1 = n as f64 * variance(&col(0));
    let v_ppi0 = n as f64 * variance(&col(1));
    let v_primary = n as f64 * variance(&col(2));
    let v_gai = (n + big_n) as f64 * variance(&col(3));
    let zero_share = col(4).iter().filter(|l| **l == 0.0).count() as f64 / trials as f64;
    let pass = within(v_ppi1, 2.1, 0.10)
        && within(v_ppi0, 1.0, 0.10)
        && within(v_primary, 1.0, 0.10)
        && within(v_gai, 1.0, 0.10)
        && zero_share >= 0.90;
    verdict(
        1,
        "hidden-factor variances",
        pass,
        start,
        format!(
            "ppi(1)={v_ppi1:.4} (2.1) ppi(0)={v_ppi0:.4} primary={v_primary:.4} (1.0) gai={v_gai:.4} (1.0) \
             ppi++ picks 0 in {:.1}% (>=90%)",
            100.0 * zero_share
        ),
    );
}

#[test]
fn criterion_02_failure_of_dominance() {
    let start = Instant::now();
    let n = 2000;
    let params = FailureParams { p: 0.5, sigma1: 0.1, sigma0: 1.0, kappa: 0.1, ..Default::default() };
    let dgp = DgpSpec::new(DgpModel::FailureOfDominance(params.clone()), n, Labeling::default());
    let cfg = ExperimentConfig::new(dgp, vec![EstimatorSpec::Gai { oracle: true }, EstimatorSpec::Primary], 2000, 202);
    let res = run_experiment(&cfg).unwrap();
    let vp: Vec<f64> = res.summary("primary").unwrap().mc_variance.clone().unwrap().iter().map(|v| v * n as f64).collect();
    let vg: Vec<f64> =
        res.summary("gai_oracle").unwrap().mc_variance.clone().unwrap().iter().map(|v| v * n as f64).collect();
    let (tp, tg) = (params.primary_variance(), params.gai_variance());
    let pass = vp.iter().all(|v| within(*v, tp, 0.15)) && vg.iter().all(|v| within(*v, tg, 0.15));
    verdict(
        2,
        "failure of dominance",
        pass,
        start,
        format!("primary {vp:.4?} (target {tp:.4}) gai {vg:.4?} (target {tg:.4})"),
    );
}

#[test]
fn criterion_03_dominance_random_labeling() {
    let start = Instant::now();
    let dgp = DgpSpec::new(DgpModel::DigitalTwin(TwinParams::default()), 5000, Labeling::Bernoulli { rho: 0.2 });
    let cfg = ExperimentConfig::new(dgp, vec![EstimatorSpec::Gai { oracle: false }, EstimatorSpec::Primary], 1000, 303);
    let res = run_experiment(&cfg).unwrap();
    let (p, g) = (betas(&res, "primary"), betas(&res, "gai"));
    let gaps: Vec<(f64, f64)> = (0..2).map(|j| paired_gap(&p, &g, j, j)).collect();
    let no_worse = gaps.iter().all(|(m, se)| *m >= -2.0 * se);
    let strictly = gaps.iter().any(|(m, se)| *m > 2.0 * se);
    verdict(
        3,
        "dominance under random labeling",
        no_worse && strictly && p.len() == 1000 && g.len() == 1000,
        start,
        format!(
            "var(primary)-var(gai) per coefficient {:?} (used {} / {})",
            gaps.iter().map(|(m, se)| format!("{m:.3e}±{se:.1e}")).collect::<Vec<_>>(),
            p.len(),
            g.len()
        ),
    );
}

fn decomposition_check(dgp: DgpSpec, seed: u64) -> (bool, String) {
    let n = dgp.n;
    let rho = dgp.labeling.rate(n);
    let report = variance_decomposition_report(&dgp, rho, 1_000_000, seed).unwrap();
    let cfg = ExperimentConfig::new(dgp.clone(), vec![EstimatorSpec::Gai { oracle: true }, EstimatorSpec::Primary], 2000, seed);
    let res = run_experiment(&cfg).unwrap();
    let (p, g) = (betas(&res, "primary"), betas(&res, "gai_oracle"));
    let d = report.predicted_gap.len();
    let mut ok = true;
    let mut checked = 0;
    let mut detail = Vec::new();
    for i in 0..d {
        for j in 0..d {
            let (m, se) = paired_gap(&p, &g, i, j);
            let (mc, se) = (m * n as f64, se * n as f64);
            let pred = report.predicted_gap[i][j];
            if pred.abs() > 3.0 * se {
                checked += 1;
                ok &= within(mc, pred, 0.15);
                detail.push(format!("[{i}{j}] mc={mc:.4} pred={pred:.4}"));
            }
        }
    }
    let cross_ok = report.cross_norm() <= 3.0 * report.cross_norm_se();
    detail.push(format!("cross={:.2e} (3se={:.2e})", report.cross_norm(), 3.0 * report.cross_norm_se()));
    (ok && checked > 0 && cross_ok, format!("{}: {}", dgp.name(), detail.join(" ")))
}

#[test]
fn criterion_04_variance_decomposition() {
    let start = Instant::now();
    let hidden = DgpSpec::new(DgpModel::HiddenFactor(HiddenParams::default()), 2000, Labeling::Bernoulli { rho: 0.2 });
    let misspec =
        DgpSpec::new(DgpModel::MisspecifiedLinear(MisspecParams::default()), 2000, Labeling::Bernoulli { rho: 0.2 });
    let (a, da) = decomposition_check(hidden, 404);
    let (b, db) = decomposition_check(misspec, 405);
    verdict(4, "variance decomposition identity", a && b, start, format!("{da}; {db}"));
}

#[test]
fn criterion_05_coverage() {
    let start = Instant::now();
    let dgp = DgpSpec::new(DgpModel::DigitalTwin(TwinParams::default()), 2000, Labeling::Bernoulli { rho: 0.2 });
    let cfg = ExperimentConfig::new(dgp, vec![EstimatorSpec::Gai { oracle: false }], 500, 505);
    let res = run_experiment(&cfg).unwrap();
    let s = res.summary("gai").unwrap();
    let cov = s.coverage.as_ref().map_or(f64::NAN, |c| c.pooled);
    verdict(
        5,
        "coverage with cross-fitted nuisances",
        (92.0..=98.0).contains(&cov) && s.used == 500,
        start,
        format!("pooled coverage {cov:.1}% over {} trials (target [92, 98])", s.used),
    );
}

#[test]
fn criterion_06_orthogonality_probe() {
    let start = Instant::now();
    let dgp = DgpSpec::new(DgpModel::DigitalTwin(TwinParams::default()), 200_000, Labeling::Bernoulli { rho: 0.2 });
    let sim = dgp.generate(606).unwrap();
    let o = &sim.oracle;
    let eps: Vec<f64> = (1..=8).map(|i| 0.02 * i as f64).collect();
    let h_g = |row: DesignRow<'_>, z: &[f64]| vec![0.3 * row.values()[1].sin() + 0.2 * z[0]];
    let h_e = |row: DesignRow<'_>, z: &[f64]| 0.1 * (z[0] - 0.5) + 0.05 * row.values()[1].cos();
    let nuis = Perturbation::Nuisance { h_g: &h_g, h_e: &h_e };
    let rows = orthogonality_probe(&sim.data, &o.g_star, &o.e_star, GlmFamily::Logistic, &o.beta_star, &nuis, &eps).unwrap();
    let slope_n = log_log_slope(&eps, &rows.iter().map(|r| r.shift_norm).collect::<Vec<_>>());
    let beta = Perturbation::Beta(vec![1.0, -1.0]);
    let rows = orthogonality_probe(&sim.data, &o.g_star, &o.e_star, GlmFamily::Logistic, &o.beta_star, &beta, &eps).unwrap();
    let slope_b = log_log_slope(&eps, &rows.iter().map(|r| r.shift_norm).collect::<Vec<_>>());
    verdict(
        6,
        "Neyman orthogonality probe",
        slope_n >= 1.7 && (0.8..=1.2).contains(&slope_b),
        start,
        format!("nuisance slope {slope_n:.3} (>=1.7), beta slope {slope_b:.3} ([0.8, 1.2])"),
    );
}

fn random_row(rng: &mut impl Rng, k: usize, d: usize) -> Vec<f64> {
    (0..k * d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

#[test]
fn criterion_07_algebraic_collapse() {
    let start = Instant::now();
    let mut rng = rng_from_seed(707);
    let families = [GlmFamily::Linear, GlmFamily::Logistic, GlmFamily::Poisson, GlmFamily::Mnl { k: 3 }];
    let mut worst_collapse: f64 = 0.0;
    let mut worst_pseudo: f64 = 0.0;
    for fam in families {
        let k = fam.k();
        for _ in 0..200 {
            let d = 3;
            let x = random_row(&mut rng, k, d);
            let row = DesignRow::new(k, d, &x).unwrap();
            let beta: Vec<f64> = (0..d).map(|_| 0.5 * rng.sample::<f64, _>(StandardNormal)).collect();
            let y: Vec<f64> = (0..k).map(|_| rng.random::<f64>()).collect();
            let g: Vec<f64> = (0..k).map(|_| rng.random::<f64>()).collect();
            let a = gai_score(&GaiScoreInput { row, y: Some(&y), w: true, g_hat: &g, e_hat: 1.0 }, fam, &beta).unwrap();
            let b = canonical_score(fam, row, &y, &beta).unwrap();
            worst_collapse = a.iter().zip(&b).map(|(u, v)| (u - v).abs()).fold(worst_collapse, f64::max);

            let w = rng.random::<bool>();
            let e = 0.05 + 0.95 * rng.random::<f64>();
            let input = GaiScoreInput { row, y: Some(&y), w, g_hat: &g, e_hat: e };
            let s = gai_score(&input, fam, &beta).unwrap();
            let tau = pseudo_label(&g, Some(&y), w, e).unwrap();
            let c = canonical_score(fam, row, &tau, &beta).unwrap();
            worst_pseudo = s.iter().zip(&c).map(|(u, v)| (u - v).abs()).fold(worst_pseudo, f64::max);
        }
    }

    let mut worst_fit: f64 = 0.0;
    let opts = EstimatorOptions::default();
    let fixtures = [
        DgpSpec::new(DgpModel::DigitalTwin(TwinParams::default()), 1500, Labeling::Bernoulli { rho: 1.0 }),
        DgpSpec::new(DgpModel::MisspecifiedLinear(MisspecParams::default()), 1500, Labeling::Bernoulli { rho: 1.0 }),
        DgpSpec::new(DgpModel::OffShelfLlm(Default::default()), 1500, Labeling::Bernoulli { rho: 1.0 }),
    ];
    for (s, spec) in fixtures.iter().enumerate() {
        let sim = spec.generate(710 + s as u64).unwrap();
        let fam = spec.family();
        let nuis = cross_fit(&sim.data, 5, &NuisanceConfig::default(), fam, 9, None).unwrap();
        let a = fit_gai(&sim.data, &nuis, fam, &opts).unwrap();
        let b = fit_primary(&sim.data, fam, &opts).unwrap();
        worst_fit = a.beta.iter().zip(&b.beta).map(|(u, v)| (u - v).abs()).fold(worst_fit, f64::max);
    }
    verdict(
        7,
        "algebraic collapse",
        worst_collapse <= 1e-12 && worst_pseudo <= 1e-12 && worst_fit <= 1e-8,
        start,
        format!("score {worst_collapse:.1e} (1e-12) pseudo-label {worst_pseudo:.1e} (1e-12) fit {worst_fit:.1e} (1e-8)"),
    );
}

/// Independent loss for the grid oracle.
fn oracle_loss(fam: GlmFamily, x: &[[f64; 2]], y: &[f64], b: [f64; 2]) -> f64 {
    x.iter()
        .zip(y)
        .map(|(r, yi)| {
            let t = r[0] * b[0] + r[1] * b[1];
            let cum = match fam {
                GlmFamily::Linear => 0.5 * t * t,
                _ => t.max(0.0) + (-t.abs()).exp().ln_1p(),
            };
            cum - yi * t
        })
        .sum()
}

fn grid_min(fam: GlmFamily, x: &[[f64; 2]], y: &[f64], center: [f64; 2], half: f64, step: f64) -> [f64; 2] {
    let m = (half / step).round() as i64;
    let mut best = (f64::INFINITY, center);
    for i in -m..=m {
        for j in -m..=m {
            let b = [center[0] + i as f64 * step, center[1] + j as f64 * step];
            let l = oracle_loss(fam, x, y, b);
            if l < best.0 {
                best = (l, b);
            }
        }
    }
    best.1
}

fn fd_checks() -> (bool, f64) {
    let mut rng = rng_from_seed(808);
    let families = [GlmFamily::Linear, GlmFamily::Logistic, GlmFamily::Poisson, GlmFamily::Mnl { k: 3 }];
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for fam in families {
        let k = fam.k();
        for _ in 0..50 {
            let theta: Vec<f64> = (0..k).map(|_| 1.5 * rng.sample::<f64, _>(StandardNormal)).collect();
            let grad = fam.grad_b(&theta).unwrap();
            let hess = fam.hess_b(&theta).unwrap();
            for a in 0..k {
                let mut up = theta.clone();
                let mut dn = theta.clone();
                up[a] += h;
                dn[a] -= h;
                let fd = (fam.b_value(&up).unwrap() - fam.b_value(&dn).unwrap()) / (2.0 * h);
                worst = worst.max((fd - grad[a]).abs() / grad[a].abs().max(1.0));
                let gu = fam.grad_b(&up).unwrap();
                let gd = fam.grad_b(&dn).unwrap();
                for c in 0..k {
                    let fd = (gu[c] - gd[c]) / (2.0 * h);
                    worst = worst.max((fd - hess[(c, a)]).abs() / hess[(c, a)].abs().max(1.0));
                }
            }
        }
    }
    (worst <= 1e-6, worst)
}

#[test]
fn criterion_08_solver_oracles() {
    let start = Instant::now();
    let mut rng = rng_from_seed(888);
    let mut ok = true;
    let mut worst: f64 = 0.0;
    let fine = 1e-3;
    let mut fixtures = 0;
    for fam in [GlmFamily::Linear, GlmFamily::Logistic] {
        for _ in 0..12 {
            let n = 60;
            let truth = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            let x: Vec<[f64; 2]> = (0..n).map(|_| [1.0, rng.sample::<f64, _>(StandardNormal)]).collect();
            let y: Vec<f64> = x
                .iter()
                .map(|r| {
                    let t = truth[0] + truth[1] * r[1];
                    match fam {
                        GlmFamily::Linear => t + rng.sample::<f64, _>(StandardNormal),
                        _ => f64::from(rng.random::<f64>() < 1.0 / (1.0 + (-t).exp())),
                    }
                })
                .collect();
            let design = Design::new(1, 2, x.iter().flatten().copied().collect()).unwrap();
            let fit = fit_score_equation(fam, &design, &y, &vec![1.0; n], 0.0, &SolverOptions::default()).unwrap();
            let coarse = grid_min(fam, &x, &y, [0.0, 0.0], 4.0, 0.05);
            let b = grid_min(fam, &x, &y, coarse, 0.25, fine);
            let err = (fit.beta[0] - b[0]).abs().max((fit.beta[1] - b[1]).abs());
            worst = worst.max(err);
            ok &= fit.converged && err <= fine;
            fixtures += 1;
        }
    }
    let (fd_ok, fd_worst) = fd_checks();
    verdict(
        8,
        "solver oracle equivalence",
        ok && fd_ok,
        start,
        format!("{fixtures} grid fixtures, worst gap {worst:.1e} (grid step {fine:.0e}); derivative rel err {fd_worst:.1e} (1e-6)"),
    );
}

#[test]
fn criterion_09_metrics() {
    let start = Instant::now();
    let mut ok = (mape(&[1.1, 2.2], &[1.0, 2.0], 1.0).unwrap() - 50.0 * (0.1 / 2.0 + 0.2 / 3.0)).abs() < 1e-12;
    ok &= mape(&[1.0, 2.0], &[1.0, 2.0], 1.0).unwrap() == 0.0;
    ok &= mape(&[2.0], &[1.0], 0.0).unwrap() == 100.0;
    ok &= mape(&[2.0], &[0.0], 0.0).is_err();
    ok &= coverage_and_width(&[Interval { lower: &[0.0], upper: &[2.0] }], &[1.0]).unwrap().pooled == 100.0;
    ok &= coverage_and_width(&[Interval { lower: &[0.0], upper: &[2.0] }], &[3.0]).unwrap().pooled == 0.0;
    let lo: Vec<[f64; 1]> = (0..100).map(|i| [if i < 90 { 0.0 } else { 5.0 }]).collect();
    let hi: Vec<[f64; 1]> = (0..100).map(|i| [if i < 90 { 2.0 } else { 6.0 }]).collect();
    let ivs: Vec<Interval> = lo.iter().zip(&hi).map(|(l, h)| Interval { lower: l, upper: h }).collect();
    let c = coverage_and_width(&ivs, &[1.0]).unwrap();
    ok &= c.pooled == 90.0 && (c.mean_width - 1.9).abs() < 1e-12;
    ok &= classify_interval(0.2, 0.8, -0.5) == DecisionError::WrongSign;
    ok &= classify_interval(-0.1, 0.3, 0.5) == DecisionError::SpansZero;
    ok &= classify_interval(0.2, 0.8, 0.5) == DecisionError::None;
    let de = decision_errors(
        &[
            Interval { lower: &[0.2], upper: &[0.8] },
            Interval { lower: &[-0.1], upper: &[0.3] },
            Interval { lower: &[0.4], upper: &[0.6] },
            Interval { lower: &[-0.9], upper: &[-0.2] },
        ],
        &[0.5],
    )
    .unwrap();
    ok &= de.wrong_sign == 25.0 && de.spans_zero == 25.0;
    verdict(9, "metric unit suite", ok, start, format!("decision errors {de:?}"));
}

fn run_cli(dir: &Path, args: &[&str]) {
    let status = Command::new(env!("CARGO_BIN_EXE_gai")).args(args).current_dir(dir).status().unwrap();
    assert!(status.success(), "gai {args:?} failed with {status}");
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn criterion_10_determinism() {
    let start = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    let cfg = r#"
seed = 1010
trials = 12
estimators = [
    { name = "gai" },
    { name = "gai", oracle = true },
    { name = "primary" },
    { name = "naive" },
    { name = "ppi", lambda = 0.5 },
    { name = "ppi_plus_plus" },
]

[dgp]
n = 600
model = { kind = "digital_twin" }
labeling = { kind = "bernoulli", rho = 0.3 }

[sweep]
n_primary = [60, 120]
n_aux = 400
"#;
    std::fs::write(tmp.path().join("exp.toml"), cfg).unwrap();
    let mut same = true;
    for format in ["json", "csv"] {
        let mut outputs = Vec::new();
        for threads in ["1", "4", "1"] {
            let out = format!("out_{format}_{threads}_{}", outputs.len());
            run_cli(
                tmp.path(),
                &["simulate", "--config", "exp.toml", "--threads", threads, "--out", &out, "--format", format],
            );
            outputs.push(dir_bytes(&tmp.path().join(&out)));
        }
        same &= outputs.windows(2).all(|w| w[0] == w[1]) && outputs[0].len() == 2;
    }
    verdict(10, "determinism across thread counts", same, start, "simulate json+csv, threads 1/4/1".into());
}


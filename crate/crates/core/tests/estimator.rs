use gai::baselines::fit_primary;
use gai::dgp::{DgpModel, DgpSpec, Labeling, LlmParams, TwinParams};
use gai::estimator::{fit_gai, log_log_slope, orthogonality_probe, EstimatorOptions, Perturbation};
use gai::nuisance::{cross_fit, NuisanceConfig, NuisanceFits};
use gai::rng::rng_from_seed;
use gai::{Dataset, Design, DesignRow, GlmFamily};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

fn twin(n: usize, rho: f64) -> DgpSpec {
    DgpSpec::new(DgpModel::DigitalTwin(TwinParams::default()), n, Labeling::Bernoulli { rho })
}

fn unit_propensity(data: &Dataset, g: &[f64]) -> NuisanceFits {
    NuisanceFits::from_values(data.k(), g.to_vec(), vec![1.0; data.n()]).unwrap()
}

#[test]
fn linear_sandwich_is_hc0() {
    let mut rng = rng_from_seed(21);
    let n = 300;
    let mut x = Vec::new();
    let mut y = Vec::new();
    for _ in 0..n {
        let (a, b): (f64, f64) = (rng.sample(StandardNormal), rng.sample(StandardNormal));
        x.extend([1.0, a, b]);
        let noise: f64 = rng.sample(StandardNormal);
        y.push(Some(vec![0.5 + a - 0.3 * b + (0.5 + a.abs()) * noise]));
    }
    let data = Dataset::new(Design::new(1, 3, x.clone()).unwrap(), y, vec![true; n], vec![0.0; n], 1).unwrap();
    let g = vec![0.0; n];
    let rep = fit_gai(&data, &unit_propensity(&data, &g), GlmFamily::Linear, &EstimatorOptions::default()).unwrap();

    let xm = DMatrix::from_row_slice(n, 3, &x);
    let yv = DVector::from_iterator(n, data.raw_labels().iter().copied());
    let xtx_inv = (xm.transpose() * &xm).try_inverse().unwrap();
    let b = &xtx_inv * xm.transpose() * &yv;
    let resid = &yv - &xm * &b;
    let mut meat = DMatrix::zeros(3, 3);
    for i in 0..n {
        let xi = xm.row(i).transpose();
        meat += &xi * xi.transpose() * resid[i].powi(2);
    }
    let hc0 = &xtx_inv * meat * &xtx_inv * n as f64;
    for i in 0..3 {
        assert!((rep.beta[i] - b[i]).abs() <= 1e-10);
        for j in 0..3 {
            assert!((rep.sigma[i][j] - hc0[(i, j)]).abs() <= 1e-10, "({i},{j}) {} vs {}", rep.sigma[i][j], hc0[(i, j)]);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn sandwich_is_symmetric_psd_and_brackets_estimate(seed in any::<u64>(), rho in 0.2f64..0.9) {
        let sim = twin(400, rho).generate(seed).unwrap();
        let nuis = cross_fit(&sim.data, 5, &NuisanceConfig::default(), GlmFamily::Logistic, seed, None).unwrap();
        let rep = fit_gai(&sim.data, &nuis, GlmFamily::Logistic, &EstimatorOptions::default()).unwrap();
        let s = rep.sigma_matrix();
        prop_assert_eq!(&s, &s.transpose());
        let min = s.clone().symmetric_eigenvalues().min();
        prop_assert!(min >= -1e-12 * s.trace().abs());
        for j in 0..rep.beta.len() {
            prop_assert!(rep.ci_lower[j] <= rep.beta[j] && rep.beta[j] <= rep.ci_upper[j]);
        }
    }
}

#[test]
fn sandwich_matches_replication_variance() {
    let spec = twin(20_000, 0.2);
    let opts = EstimatorOptions::default();
    let reps: Vec<(Vec<f64>, Vec<f64>)> = (0..500u64)
        .into_par_iter()
        .map(|t| {
            let sim = spec.generate(50_000 + t).unwrap();
            let rep = fit_gai(&sim.data, &sim.oracle.nuisances(1).unwrap(), GlmFamily::Logistic, &opts).unwrap();
            let var = (0..2).map(|j| rep.sigma[j][j] / rep.scale_n as f64).collect();
            (rep.beta, var)
        })
        .collect();
    for j in 0..2 {
        let b: Vec<f64> = reps.iter().map(|r| r.0[j]).collect();
        let m = b.iter().sum::<f64>() / 500.0;
        let mc = b.iter().map(|v| (v - m).powi(2)).sum::<f64>() / 499.0;
        let est = reps.iter().map(|r| r.1[j]).sum::<f64>() / 500.0;
        assert!((est - mc).abs() <= 0.15 * mc, "coefficient {j}: sandwich {est:.3e} vs replication {mc:.3e}");
    }
}

#[test]
fn intervals_cover_at_nominal_rate() {
    let spec = twin(2000, 0.2);
    let beta_star = spec.beta_star().unwrap();
    let opts = EstimatorOptions::default();
    let hits: Vec<[bool; 2]> = (0..500u64)
        .into_par_iter()
        .map(|t| {
            let sim = spec.generate(60_000 + t).unwrap();
            let rep = fit_gai(&sim.data, &sim.oracle.nuisances(1).unwrap(), GlmFamily::Logistic, &opts).unwrap();
            [0, 1].map(|j| rep.ci_lower[j] <= beta_star[j] && beta_star[j] <= rep.ci_upper[j])
        })
        .collect();
    for j in 0..2 {
        let rate = hits.iter().filter(|h| h[j]).count() as f64 / 500.0;
        assert!((0.92..=0.98).contains(&rate), "coefficient {j}: coverage {rate}");
    }
}

#[test]
fn probe_shows_second_order_nuisance_sensitivity() {
    let sim = twin(200_000, 0.3).generate(22).unwrap();
    let o = &sim.oracle;
    let eps = [0.02, 0.04, 0.08, 0.16];
    let h_g = |row: DesignRow<'_>, z: &[f64]| vec![0.25 * (2.0 * row.values()[1]).cos() - 0.15 * z[0]];
    let h_e = |row: DesignRow<'_>, z: &[f64]| 0.2 * (z[0] - 0.5) - 0.1 * (row.values()[1] - 1.5);
    let nuis = Perturbation::Nuisance { h_g: &h_g, h_e: &h_e };
    let rows = orthogonality_probe(&sim.data, &o.g_star, &o.e_star, GlmFamily::Logistic, &o.beta_star, &nuis, &eps).unwrap();
    let slope = log_log_slope(&eps, &rows.iter().map(|r| r.shift_norm).collect::<Vec<_>>());
    assert!(slope >= 1.7, "nuisance slope {slope}");

    let base = orthogonality_probe(&sim.data, &o.g_star, &o.e_star, GlmFamily::Logistic, &o.beta_star, &nuis, &[0.0]).unwrap();
    assert!(base[0].norm <= 3.0 * base[0].mc_se, "norm {} vs se {}", base[0].norm, base[0].mc_se);

    let beta = Perturbation::Beta(vec![-0.5, 1.0]);
    let rows = orthogonality_probe(&sim.data, &o.g_star, &o.e_star, GlmFamily::Logistic, &o.beta_star, &beta, &eps).unwrap();
    let slope = log_log_slope(&eps, &rows.iter().map(|r| r.shift_norm).collect::<Vec<_>>());
    assert!((0.8..=1.2).contains(&slope), "beta slope {slope}");
}

#[test]
fn fully_labeled_data_collapses_to_primary() {
    let opts = EstimatorOptions::default();
    let specs = [
        twin(1500, 1.0),
        DgpSpec::new(DgpModel::OffShelfLlm(LlmParams::default()), 1500, Labeling::Bernoulli { rho: 1.0 }),
    ];
    for (s, spec) in specs.iter().enumerate() {
        let sim = spec.generate(23 + s as u64).unwrap();
        let fam = spec.family();
        let primary = fit_primary(&sim.data, fam, &opts).unwrap();
        let oracle = fit_gai(&sim.data, &unit_propensity(&sim.data, &sim.oracle.g_star), fam, &opts).unwrap();
        let crossfit = cross_fit(&sim.data, 5, &NuisanceConfig::default(), fam, 5, None).unwrap();
        assert!(crossfit.e_values().iter().all(|e| *e == 1.0));
        let fitted = fit_gai(&sim.data, &crossfit, fam, &opts).unwrap();
        for rep in [&oracle, &fitted] {
            for (a, b) in rep.beta.iter().zip(&primary.beta) {
                assert!((a - b).abs() <= 1e-8);
            }
            for (ra, rb) in rep.sigma.iter().zip(&primary.sigma) {
                for (a, b) in ra.iter().zip(rb) {
                    assert!((a - b).abs() <= 1e-6);
                }
            }
        }
    }
}

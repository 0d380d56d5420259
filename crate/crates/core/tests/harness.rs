use gai::dgp::{
    DgpModel, DgpSpec, FailureParams, HiddenParams, Labeling, LlmParams, MisspecParams, TwinParams,
};
use gai::evalharness::{mape, run_experiment, variance_decomposition_report, EstimatorSpec, ExperimentConfig};

fn all_models() -> Vec<DgpModel> {
    vec![
        DgpModel::DigitalTwin(TwinParams::default()),
        DgpModel::HiddenFactor(HiddenParams::default()),
        DgpModel::OffShelfLlm(LlmParams::default()),
        DgpModel::FailureOfDominance(FailureParams::default()),
        DgpModel::MisspecifiedLinear(MisspecParams::default()),
    ]
}

#[test]
fn gai_beats_primary_on_the_twin_benchmark() {
    let spec = DgpSpec::new(DgpModel::DigitalTwin(TwinParams::default()), 1100, Labeling::Fixed { n_primary: 100 });
    let cfg = ExperimentConfig::new(spec, vec![EstimatorSpec::Gai { oracle: false }, EstimatorSpec::Primary], 200, 61);
    let res = run_experiment(&cfg).unwrap();
    let (g, p) = (res.records_for("gai"), res.records_for("primary"));
    let c = cfg.metrics.c_offset;
    let diffs: Vec<f64> = g
        .iter()
        .zip(&p)
        .filter(|(a, b)| a.usable() && b.usable())
        .map(|(a, b)| mape(&b.beta_hat, &res.beta_star, c).unwrap() - mape(&a.beta_hat, &res.beta_star, c).unwrap())
        .collect();
    assert!(diffs.len() >= 190, "only {} paired trials usable", diffs.len());
    let n = diffs.len() as f64;
    let m = diffs.iter().sum::<f64>() / n;
    let sd = (diffs.iter().map(|d| (d - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let t = m / (sd / n.sqrt());
    assert!(t > 2.0, "paired MAPE gain {m} with t = {t}");
}

#[test]
fn llm_without_label_shift_is_a_plain_mnl() {
    let params = LlmParams { eta: 0.0, ..LlmParams::default() };
    let spec = DgpSpec::new(DgpModel::OffShelfLlm(params.clone()), 5000, Labeling::default());
    let sim = spec.generate(48).unwrap();
    let a = params.theta.len();
    for i in 0..sim.data.n() {
        let x = sim.data.design.row(i).values();
        let u: Vec<f64> = (0..2).map(|j| (0..a).map(|c| params.theta[c] * x[j * a + c]).sum::<f64>().exp()).collect();
        let den = 1.0 + u.iter().sum::<f64>();
        for (j, uj) in u.iter().enumerate() {
            assert!((sim.oracle.g_star[2 * i + j] - uj / den).abs() < 1e-14);
        }
    }
    let r = variance_decomposition_report(&spec, 0.2, 200_000, 49).unwrap();
    assert_eq!(r.iii_norm(), 0.0);
    assert!(r.ii_norm() <= 3.0 * r.ii_norm_se(), "II {} vs se {}", r.ii_norm(), r.ii_norm_se());
    assert!((0..spec.beta_star().unwrap().len()).all(|j| (r.beta_star[j] - params.theta[j]).abs() < 1e-9));
}

#[test]
fn cross_term_vanishes_on_every_dgp() {
    for (s, model) in all_models().into_iter().enumerate() {
        let spec = DgpSpec::new(model, 10, Labeling::default());
        let r = variance_decomposition_report(&spec, 0.2, 200_000, 500 + s as u64).unwrap();
        assert!(r.cross_norm() <= 3.0 * r.cross_norm_se(), "{}: {} vs se {}", spec.name(), r.cross_norm(), r.cross_norm_se());
    }
}


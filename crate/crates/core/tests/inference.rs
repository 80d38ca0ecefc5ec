mod common;

use common::*;
use mvtc_core::prelude::*;
use nalgebra::DMatrix;

fn config() -> InferenceConfig {
    InferenceConfig { tau_max: 5, alpha: 0.05, ..InferenceConfig::default() }
}

#[test]
fn parents_of_y_are_found() {
    let model = bivariate(0.5, 0.4, 0.3);
    let truth = parents(&graph_from_model(&model, DEFAULT_LINK_EPS).unwrap(), 1).unwrap();
    let hits = (0..100)
        .filter(|&seed| {
            let data = simulate(&model, 10_000, seed, None).unwrap();
            infer_parents(&data, 1, &config()).unwrap() == truth
        })
        .count();
    assert!(hits >= 90, "exact parent recovery {hits}/100");
}

#[test]
fn uncoupled_link_is_absent() {
    let model = bivariate(0.5, 0.4, 0.0);
    let absent = (0..100)
        .filter(|&seed| {
            let data = simulate(&model, 10_000, 500 + seed, None).unwrap();
            infer_parents(&data, 1, &config()).unwrap().iter().all(|p| p.var != 0)
        })
        .count();
    assert!(absent >= 90, "X absent from parents in {absent}/100");
}

#[test]
fn null_false_parent_count_is_calibrated() {
    let noise = VarModel::with_default_names(vec![DMatrix::zeros(3, 3)], DMatrix::identity(3, 3)).unwrap();
    let cfg = config();
    let trials = 100;
    let mut false_parents = 0;
    for seed in 0..trials {
        let data = simulate(&noise, 10_000, 900 + seed, None).unwrap();
        false_parents += infer_parents(&data, 0, &cfg).unwrap().len();
    }
    // binomial 95% band around alpha * N * tau_max per target
    let n = (trials as usize * 3 * cfg.tau_max) as f64;
    let mean = cfg.alpha * n;
    let sd = (n * cfg.alpha * (1.0 - cfg.alpha)).sqrt();
    assert!((false_parents as f64) <= mean + 1.96 * sd, "{false_parents} vs {mean}");
}

#[test]
fn contemporaneous_dependence_only() {
    let sigma = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]);
    let model = VarModel::with_default_names(vec![DMatrix::zeros(2, 2)], sigma).unwrap();
    let truth = graph_from_model(&model, DEFAULT_LINK_EPS).unwrap();
    let exact = (0..100)
        .filter(|&seed| {
            let data = simulate(&model, 10_000, 1300 + seed, None).unwrap();
            infer_graph(&data, &config()).unwrap().graph == truth
        })
        .count();
    assert!(exact >= 85, "exact recovery {exact}/100");
}

#[test]
fn recovery_does_not_degrade_with_length() {
    let model = bivariate(0.5, 0.4, 0.3);
    let truth = graph_from_model(&model, DEFAULT_LINK_EPS).unwrap();
    let rate = |t: usize| {
        (0..60u64)
            .filter(|&seed| {
                let data = simulate(&model, t, 1700 + seed, None).unwrap();
                infer_graph(&data, &config()).unwrap().graph == truth
            })
            .count()
    };
    let (short, mid, long) = (rate(500), rate(2_000), rate(10_000));
    assert!(short <= mid + 3 && mid <= long + 3, "{short} {mid} {long}");
}

#[test]
fn output_links_carry_significant_mit() {
    let model = sidepath_model(0.5, 0.4, 0.6);
    for seed in 0..10 {
        let data = simulate(&model, 3_000, 2100 + seed, None).unwrap();
        let out = infer_graph(&data, &config()).unwrap();
        assert_eq!(out.links.len(), out.graph.directed_links().count());
        for r in &out.links {
            assert_eq!(r.kind, MeasureKind::Mit);
            assert!(r.source.lag >= 1 && r.p_value < 0.05);
        }
        for (s, t, lag) in [(0, 1, 1), (1, 2, 1), (0, 2, 2)] {
            assert!(out.graph.has_link(s, t, lag));
        }
    }
}

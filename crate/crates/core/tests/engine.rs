use std::sync::Arc;

use samplan::engine::{run_scenario, summarize};
use samplan::popgen::synthesize_casemix;
use samplan::preset::{preeclampsia_column_names, preeclampsia_marginals, preeclampsia_weights};
use samplan::{
    CaseMix, CriteriaSpec, Criterion, McmcConfig, ReferenceModel, ReferenceSpec, Scenario, ScenarioConfig, Strategy,
};

fn casemix(rows: usize) -> Arc<CaseMix> {
    Arc::new(synthesize_casemix(&preeclampsia_marginals(), rows, 1).unwrap())
}

// Intercept and scale close to the calibrated surrogate pre-eclampsia model.
fn reference() -> ReferenceModel {
    ReferenceModel::new(15.7, 0.75, preeclampsia_weights(), preeclampsia_column_names()).unwrap()
}

fn strategies(json: &str) -> Vec<Strategy> {
    serde_json::from_str(json).unwrap()
}

fn scenario(cm: Arc<CaseMix>, n: usize, iterations: usize, seed: u64, strategies: Vec<Strategy>) -> Scenario {
    Scenario {
        config: ScenarioConfig {
            n_values: vec![n],
            iterations,
            strategies,
            thresholds: vec![0.5],
            master_seed: seed,
            criteria: CriteriaSpec::new(vec![Criterion::new("cal_slope", Some(0.9), Some(1.1), 0.5)]),
            instability_sample: 50,
            curves_emitted: 5,
            mcmc: McmcConfig::default(),
        },
        casemix: cm,
        reference: ReferenceSpec::Single(reference()),
    }
}

fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

#[test]
fn permuting_iterations_leaves_summary_unchanged() {
    let s = scenario(casemix(20_000), 200, 60, 3, strategies(r#"[{"kind": "mle"}]"#));
    let out = run_scenario(&s).unwrap();
    let mut draws = out.blocks[0].draws.clone();
    let before = summarize(&draws, &s.config.criteria);
    draws.records.reverse();
    draws.records.rotate_left(17);
    assert_eq!(summarize(&draws, &s.config.criteria), before);
}

// The master seed also keys the population outcome realisation, which every
// iteration shares. Only metrics against the true risks are free of it.
#[test]
fn master_seed_changes_draws_not_means() {
    let cm = casemix(20_000);
    let a = run_scenario(&scenario(cm.clone(), 300, 1000, 11, strategies(r#"[{"kind": "mle"}]"#))).unwrap();
    let b = run_scenario(&scenario(cm, 300, 1000, 12, strategies(r#"[{"kind": "mle"}]"#))).unwrap();
    let (da, db) = (&a.blocks[0].draws, &b.blocks[0].draws);
    assert_ne!(da.values("c_stat", None, None), db.values("c_stat", None, None));
    for metric in ["mape", "rmspe"] {
        let va: Vec<f64> = da.values(metric, None, None).into_iter().flatten().collect();
        let vb: Vec<f64> = db.values(metric, None, None).into_iter().flatten().collect();
        let ((ma, sa), (mb, sb)) = (mean_se(&va), mean_se(&vb));
        assert!((ma - mb).abs() <= 3.0 * (sa * sa + sb * sb).sqrt(), "{metric}: {ma} vs {mb}");
    }
}

#[test]
fn fitted_models_do_not_beat_the_reference() {
    let s = scenario(
        casemix(100_000),
        300,
        150,
        5,
        strategies(r#"[{"kind": "mle"}, {"kind": "lasso_cv", "folds": 5}, {"kind": "forest", "n_trees": 30, "max_depth": 3}]"#),
    );
    let out = run_scenario(&s).unwrap();
    for b in &out.blocks {
        let v: Vec<f64> = b.draws.values("c_degradation", None, None).into_iter().flatten().collect();
        let (m, _) = mean_se(&v);
        assert!(m <= 0.005, "{}: mean c degradation {m}", b.strategy);
    }
}

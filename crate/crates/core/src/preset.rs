//! Surrogate pre-eclampsia scenario: nine predictors in ten design columns,
//! with the published reference weights. The original synthetic case-mix is
//! not distributed, so predictors are drawn independently from plausible
//! marginals on the modelling scale (log-transformed where the model logs).

use crate::popgen::{Marginal, MarginalColumn, MarginalSpec};

pub const PREECLAMPSIA_INTERCEPT: f64 = 14.8246;
pub const PREECLAMPSIA_CSTAT: f64 = 0.76;
pub const PREECLAMPSIA_PREVALENCE: f64 = 0.68;
pub const PREECLAMPSIA_THRESHOLD: f64 = 0.5;
/// Sample sizes considered for this scenario.
pub const PREECLAMPSIA_N: [usize; 3] = [75, 335, 456];

const WEIGHTS: [(&str, f64); 10] = [
    ("age", -0.204),
    ("ln_gestational_age", -5.2265),
    ("history_1", -0.3243),
    ("history_2plus", -0.6236),
    ("ln_pcr", 0.1665),
    ("ln_urea", 0.4574),
    ("creatinine", -0.0038),
    ("sbp", 0.0232),
    ("antihypertensive", 0.4552),
    ("magnesium_sulphate", 1.1425),
];

pub fn preeclampsia_column_names() -> Vec<String> {
    WEIGHTS.iter().map(|(n, _)| n.to_string()).collect()
}

pub fn preeclampsia_weights() -> Vec<f64> {
    WEIGHTS.iter().map(|(_, w)| *w).collect()
}

pub fn preeclampsia_marginals() -> MarginalSpec {
    let col = |name: &str, dist| MarginalColumn {
        name: name.into(),
        dist,
    };
    let normal = |mean: f64, sd: f64| Marginal::Normal { mean, sd };
    MarginalSpec {
        columns: vec![
            col("age", normal(30.0, 6.0)),
            col("ln_gestational_age", normal(34f64.ln(), 0.10)),
            col(
                "history",
                Marginal::Categorical {
                    probs: vec![0.70, 0.20, 0.10],
                    dummies: vec!["history_1".into(), "history_2plus".into()],
                },
            ),
            col("ln_pcr", normal(60f64.ln(), 1.2)),
            col("ln_urea", normal(4f64.ln(), 0.35)),
            col("creatinine", normal(65.0, 18.0)),
            col("sbp", normal(155.0, 15.0)),
            col("antihypertensive", Marginal::Bernoulli { prob: 0.30 }),
            col("magnesium_sulphate", Marginal::Bernoulli { prob: 0.15 }),
        ],
        noise_extra: 0,
    }
}

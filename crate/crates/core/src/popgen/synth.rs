use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::casemix::{CaseMix, Column};
use crate::error::{Error, Result};
use crate::numeric::Matrix;
use crate::rng::{derive_seed, rng_from_seed, Role};

/// Marginal distribution of one synthesised predictor. Predictors are drawn
/// independently of each other.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Marginal {
    Normal { mean: f64, sd: f64 },
    Bernoulli { prob: f64 },
    /// Resampled with replacement from observed values.
    Empirical { values: Vec<f64> },
    /// A categorical predictor expanded into dummy columns. `probs[0]` is
    /// the reference level; `dummies[k]` names the indicator for level
    /// `k + 1`.
    Categorical { probs: Vec<f64>, dummies: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalColumn {
    pub name: String,
    pub dist: Marginal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalSpec {
    pub columns: Vec<MarginalColumn>,
    #[serde(default)]
    pub noise_extra: usize,
}

impl MarginalSpec {
    pub fn validate(&self) -> Result<()> {
        for c in &self.columns {
            let bad = |m: String| Err(Error::Config(format!("column `{}`: {m}", c.name)));
            match &c.dist {
                Marginal::Normal { mean, sd } => {
                    if !(*sd > 0.0 && sd.is_finite() && mean.is_finite()) {
                        return bad(format!("normal sd must be > 0 (got {sd})"));
                    }
                }
                Marginal::Bernoulli { prob } => {
                    if !(*prob > 0.0 && *prob < 1.0) {
                        return bad(format!("bernoulli prob must lie in (0,1) (got {prob})"));
                    }
                }
                Marginal::Empirical { values } => {
                    if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
                        return bad("empirical values must be non-empty and finite".into());
                    }
                }
                Marginal::Categorical { probs, dummies } => {
                    if probs.len() < 2 || dummies.len() + 1 != probs.len() {
                        return bad("categorical needs k >= 2 probs and k - 1 dummy names".into());
                    }
                    let total: f64 = probs.iter().sum();
                    if probs.iter().any(|p| *p <= 0.0) || (total - 1.0).abs() > 1e-9 {
                        return bad(format!("categorical probs must be positive and sum to 1 (sum {total})"));
                    }
                }
            }
        }
        Ok(())
    }
}

fn draw_column(dist: &Marginal, n: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    match dist {
        Marginal::Normal { mean, sd } => {
            let d = Normal::new(*mean, *sd).expect("validated normal");
            vec![(0..n).map(|_| d.sample(rng)).collect()]
        }
        Marginal::Bernoulli { prob } => {
            vec![(0..n)
                .map(|_| if rng.random::<f64>() < *prob { 1.0 } else { 0.0 })
                .collect()]
        }
        Marginal::Empirical { values } => {
            vec![(0..n)
                .map(|_| values[rng.random_range(0..values.len())])
                .collect()]
        }
        Marginal::Categorical { probs, dummies } => {
            let mut cols = vec![vec![0.0; n]; dummies.len()];
            for i in 0..n {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut level = probs.len() - 1;
                for (k, p) in probs.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        level = k;
                        break;
                    }
                }
                if level > 0 {
                    cols[level - 1][i] = 1.0;
                }
            }
            cols
        }
    }
}

/// Draws `n_rows` individuals with independent predictors. Each spec column
/// uses its own stream, so appending columns leaves earlier ones unchanged.
pub fn synthesize_casemix(spec: &MarginalSpec, n_rows: usize, rng_seed: u64) -> Result<CaseMix> {
    spec.validate()?;
    if n_rows == 0 {
        return Err(Error::InvalidArgument("n_rows must be at least 1".into()));
    }
    let mut columns = Vec::new();
    let mut values: Vec<Vec<f64>> = Vec::new();
    for (j, c) in spec.columns.iter().enumerate() {
        let mut rng = rng_from_seed(derive_seed(rng_seed, j as u64, Role::Synthesis));
        let drawn = draw_column(&c.dist, n_rows, &mut rng);
        match &c.dist {
            Marginal::Normal { .. } | Marginal::Empirical { .. } => {
                columns.push(Column::continuous(&c.name))
            }
            Marginal::Bernoulli { .. } => columns.push(Column::binary(&c.name)),
            Marginal::Categorical { dummies, .. } => {
                columns.extend(dummies.iter().map(|d| Column::dummy(d, &c.name)))
            }
        }
        values.extend(drawn);
    }
    let base = CaseMix::new(columns, Matrix::zeros(n_rows, 0).append_columns(&values), None)?;
    if spec.noise_extra > 0 {
        base.with_noise_columns(spec.noise_extra, rng_seed)
    } else {
        Ok(base)
    }
}

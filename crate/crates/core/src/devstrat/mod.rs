//! Model development strategies: unpenalised logistic regression, uniform
//! shrinkage, cross-validated ridge/lasso, Bayesian ridge/lasso via
//! Metropolis–Hastings, and random forests.

mod bayes;
mod forest;
pub mod glm;
pub mod mcmc;
mod mle;
mod penalized;
#[cfg(test)]
pub(crate) mod testutil;

use serde::{Deserialize, Serialize};

pub use bayes::{fit_bayes_penalized, sample_bayes_posterior, BayesPosterior, LambdaSqPrior, PriorSpec};
pub use forest::{fit_random_forest, Forest, ForestOptions, Tree, TreeNode};
pub use mcmc::{batch_means_se, McmcConfig};
pub use mle::{fit_mle_logistic, shrink_uniform, shrinkage_factor};
pub use penalized::{
    default_lambda_grid, fit_penalized, fit_penalized_cv, kkt_residual, lambda_max,
    penalized_objective, PenalizedFit, PenalizedOptions,
};

use crate::error::{Error, Result};
use crate::numeric::{clamp_prob, logistic, Matrix, PROB_CLAMP};
use crate::popgen::{CaseMix, DevelopmentSample};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    Mle,
    Shrunk,
    RidgeCv,
    LassoCv,
    BayesRidge,
    BayesLasso,
    Forest,
}

impl StrategyKind {
    pub fn as_str(self) -> &'static str {
        match self {
            StrategyKind::Mle => "mle",
            StrategyKind::Shrunk => "shrunk",
            StrategyKind::RidgeCv => "ridge_cv",
            StrategyKind::LassoCv => "lasso_cv",
            StrategyKind::BayesRidge => "bayes_ridge",
            StrategyKind::BayesLasso => "bayes_lasso",
            StrategyKind::Forest => "forest",
        }
    }
}

/// Ridge (squared) or lasso (absolute) penalty, or the matching prior.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PenaltyFamily {
    Ridge,
    Lasso,
}

/// Per-column standardisation recorded from the development sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColumnScale {
    pub mean: f64,
    pub sd: f64,
    /// False for constant columns, which are dropped from the fit.
    pub used: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficients {
    pub intercept: f64,
    /// One weight per case-mix column on the standardised scale; dropped
    /// columns carry 0.
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Diagnostics {
    pub converged: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub selected_lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shrinkage_factor: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mcmc_acceptance: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub split_chain_ok: Option<bool>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub dropped_columns: Vec<String>,
}

/// A trained prediction model: standardised-scale coefficients for the
/// regression strategies, or a forest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub kind: StrategyKind,
    pub columns: Vec<String>,
    pub standardisation: Vec<ColumnScale>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coefficients: Option<Coefficients>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub forest: Option<Forest>,
    pub diagnostics: Diagnostics,
}

/// Linear predictor on the original column scale.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub intercept: f64,
    pub weights: Vec<f64>,
}

impl LinearModel {
    /// From a coefficient vector `[intercept, w_1, .., w_P]`.
    pub fn from_vector(coefs: &[f64]) -> Self {
        Self {
            intercept: coefs[0],
            weights: coefs[1..].to_vec(),
        }
    }

    #[inline]
    pub fn eta(&self, row: &[f64]) -> f64 {
        let mut s = self.intercept;
        for (x, w) in row.iter().zip(&self.weights) {
            s += x * w;
        }
        s
    }

    pub fn predict(&self, casemix: &CaseMix) -> Vec<f64> {
        (0..casemix.n_rows())
            .map(|i| clamp_prob(logistic(self.eta(casemix.row(i))), PROB_CLAMP))
            .collect()
    }
}

impl FittedModel {
    /// Coefficients mapped back to the original column scale.
    pub fn linear_model(&self) -> Option<LinearModel> {
        let c = self.coefficients.as_ref()?;
        let mut intercept = c.intercept;
        let weights = c
            .weights
            .iter()
            .zip(&self.standardisation)
            .map(|(w, s)| {
                if s.used {
                    intercept -= w * s.mean / s.sd;
                    w / s.sd
                } else {
                    0.0
                }
            })
            .collect();
        Some(LinearModel { intercept, weights })
    }

    pub fn check_alignment(&self, casemix: &CaseMix) -> Result<()> {
        if casemix.column_names() != self.columns {
            return Err(Error::Alignment(format!(
                "model columns {:?} do not match case-mix columns {:?}",
                self.columns,
                casemix.column_names()
            )));
        }
        Ok(())
    }
}

/// Estimated risks for every row, clamped to `[1e-10, 1 − 1e-10]`.
pub fn predict_risks(model: &FittedModel, casemix: &CaseMix) -> Result<Vec<f64>> {
    model.check_alignment(casemix)?;
    if let Some(lin) = model.linear_model() {
        return Ok(lin.predict(casemix));
    }
    if let Some(forest) = &model.forest {
        return Ok((0..casemix.n_rows())
            .map(|i| clamp_prob(forest.predict_row(casemix.row(i)), PROB_CLAMP))
            .collect());
    }
    Err(Error::InvalidArgument("fitted model has neither coefficients nor a forest".into()))
}

/// Development-sample standardisation and the standardised design of the
/// used columns (no intercept column).
pub(crate) struct Standardised {
    pub scales: Vec<ColumnScale>,
    pub used: Vec<usize>,
    /// Column-major standardised values of the used columns.
    pub columns: Vec<Vec<f64>>,
    pub dropped: Vec<String>,
}

impl Standardised {
    pub fn new(casemix: &CaseMix) -> Self {
        let n = casemix.n_rows() as f64;
        let mut scales = Vec::with_capacity(casemix.n_cols());
        let mut used = Vec::new();
        let mut columns = Vec::new();
        let mut dropped = Vec::new();
        for j in 0..casemix.n_cols() {
            let col = casemix.values().column(j);
            let mean = col.iter().sum::<f64>() / n;
            let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
            let ok = sd > 1e-12 * (1.0 + mean.abs());
            scales.push(ColumnScale { mean, sd, used: ok });
            if ok {
                used.push(j);
                columns.push(col.iter().map(|v| (v - mean) / sd).collect());
            } else {
                dropped.push(casemix.columns()[j].name.clone());
            }
        }
        Self {
            scales,
            used,
            columns,
            dropped,
        }
    }

    /// Row-major design `[1, z_1, .., z_k]` over `n` rows.
    pub fn design_with_intercept(&self, n: usize) -> Matrix {
        let k = self.columns.len() + 1;
        let mut data = Vec::with_capacity(n * k);
        for i in 0..n {
            data.push(1.0);
            for c in &self.columns {
                data.push(c[i]);
            }
        }
        Matrix::new(n, k, data)
    }

    /// Expands weights over used columns to all case-mix columns.
    pub fn expand(&self, used_weights: &[f64]) -> Vec<f64> {
        let mut w = vec![0.0; self.scales.len()];
        for (&j, &v) in self.used.iter().zip(used_weights) {
            w[j] = v;
        }
        w
    }
}

pub(crate) fn require_both_classes(sample: &DevelopmentSample) -> Result<()> {
    if sample.is_degenerate() {
        return Err(Error::DegenerateOutcome(format!(
            "development sample has {} events out of {}",
            sample.events(),
            sample.len()
        )));
    }
    Ok(())
}

/// Configuration of one development strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StrategyConfig {
    Mle {
        #[serde(default = "default_irls_iter")]
        max_iter: usize,
        #[serde(default = "default_irls_tol")]
        tol: f64,
    },
    Shrunk {
        #[serde(default = "default_irls_iter")]
        max_iter: usize,
        #[serde(default = "default_irls_tol")]
        tol: f64,
    },
    RidgeCv(PenalizedOptions),
    LassoCv(PenalizedOptions),
    BayesRidge {
        #[serde(default = "default_intercept_variance")]
        intercept_variance: f64,
    },
    BayesLasso {
        #[serde(default = "default_intercept_variance")]
        intercept_variance: f64,
    },
    Forest(ForestOptions),
}

fn default_irls_iter() -> usize {
    50
}

fn default_irls_tol() -> f64 {
    1e-9
}

fn default_intercept_variance() -> f64 {
    1e6
}

impl StrategyConfig {
    pub fn mle() -> Self {
        StrategyConfig::Mle {
            max_iter: default_irls_iter(),
            tol: default_irls_tol(),
        }
    }

    pub fn kind(&self) -> StrategyKind {
        match self {
            StrategyConfig::Mle { .. } => StrategyKind::Mle,
            StrategyConfig::Shrunk { .. } => StrategyKind::Shrunk,
            StrategyConfig::RidgeCv(_) => StrategyKind::RidgeCv,
            StrategyConfig::LassoCv(_) => StrategyKind::LassoCv,
            StrategyConfig::BayesRidge { .. } => StrategyKind::BayesRidge,
            StrategyConfig::BayesLasso { .. } => StrategyKind::BayesLasso,
            StrategyConfig::Forest(_) => StrategyKind::Forest,
        }
    }

    /// Default report label, e.g. `mle` or `forest_d3`.
    pub fn default_label(&self) -> String {
        match self {
            StrategyConfig::Forest(o) => format!("forest_d{}", o.max_depth),
            other => other.kind().as_str().to_string(),
        }
    }

    /// Fits this strategy. `rng_seed` drives fold assignment, bootstrap and
    /// MCMC streams.
    pub fn fit(&self, sample: &DevelopmentSample, mcmc: &McmcConfig, rng_seed: u64) -> Result<FittedModel> {
        match self {
            StrategyConfig::Mle { max_iter, tol } => fit_mle_logistic(sample, *max_iter, *tol),
            StrategyConfig::Shrunk { max_iter, tol } => {
                let mle = fit_mle_logistic(sample, *max_iter, *tol)?;
                shrink_uniform(&mle, sample)
            }
            StrategyConfig::RidgeCv(o) => fit_penalized_cv(sample, PenaltyFamily::Ridge, o, rng_seed),
            StrategyConfig::LassoCv(o) => fit_penalized_cv(sample, PenaltyFamily::Lasso, o, rng_seed),
            StrategyConfig::BayesRidge { intercept_variance } => fit_bayes_penalized(
                sample,
                &PriorSpec::new(PenaltyFamily::Ridge).with_intercept_variance(*intercept_variance),
                mcmc,
                rng_seed,
            ),
            StrategyConfig::BayesLasso { intercept_variance } => fit_bayes_penalized(
                sample,
                &PriorSpec::new(PenaltyFamily::Lasso).with_intercept_variance(*intercept_variance),
                mcmc,
                rng_seed,
            ),
            StrategyConfig::Forest(o) => fit_random_forest(sample, o, rng_seed),
        }
    }
}

/// A labelled strategy as configured in a scenario. An empty label is
/// replaced by [`StrategyConfig::default_label`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Strategy {
    #[serde(default)]
    pub label: String,
    #[serde(flatten)]
    pub config: StrategyConfig,
}

impl Strategy {
    pub fn new(config: StrategyConfig) -> Self {
        Self {
            label: config.default_label(),
            config,
        }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn label(&self) -> String {
        if self.label.is_empty() {
            self.config.default_label()
        } else {
            self.label.clone()
        }
    }
}

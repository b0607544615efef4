use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::mcmc::{run_chain, Chain, LogLikelihood, McmcConfig};
use super::{
    require_both_classes, ColumnScale, Coefficients, Diagnostics, FittedModel, PenaltyFamily, Standardised,
    StrategyKind,
};
use crate::error::{Error, Result};
use crate::numeric::logit;
use crate::popgen::DevelopmentSample;
use crate::rng::{stream, Role};

const RIDGE_IG_SHAPE: f64 = 0.01;
const RIDGE_IG_SCALE: f64 = 0.01;
const LASSO_GAMMA_RATE: f64 = 1.0 / 1.78;

/// Prior on λ²: the family's hyperprior, or a point mass.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaSqPrior {
    /// Ridge: inverse-gamma(0.01, 0.01). Lasso: gamma(shape 1, rate 1/1.78).
    #[default]
    Hyper,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorSpec {
    pub family: PenaltyFamily,
    #[serde(default = "default_intercept_variance")]
    pub intercept_variance: f64,
    #[serde(default)]
    pub lambda_sq: LambdaSqPrior,
}

fn default_intercept_variance() -> f64 {
    1e6
}

impl PriorSpec {
    pub fn new(family: PenaltyFamily) -> Self {
        Self {
            family,
            intercept_variance: default_intercept_variance(),
            lambda_sq: LambdaSqPrior::Hyper,
        }
    }

    pub fn with_intercept_variance(mut self, v: f64) -> Self {
        self.intercept_variance = v;
        self
    }

    pub fn with_lambda_sq(mut self, prior: LambdaSqPrior) -> Self {
        self.lambda_sq = prior;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.intercept_variance > 0.0 && self.intercept_variance.is_finite()) {
            return Err(Error::Config("intercept_variance must be positive".into()));
        }
        if let LambdaSqPrior::Fixed(v) = self.lambda_sq {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config("fixed lambda_sq must be positive".into()));
            }
        }
        Ok(())
    }

    pub(crate) fn has_hyperprior(&self) -> bool {
        matches!(self.lambda_sq, LambdaSqPrior::Hyper)
    }

    pub(crate) fn initial_lambda_sq(&self) -> f64 {
        match self.lambda_sq {
            LambdaSqPrior::Hyper => 1.0,
            LambdaSqPrior::Fixed(v) => v,
        }
    }

    pub(crate) fn log_intercept(&self, b0: f64) -> f64 {
        -0.5 * b0 * b0 / self.intercept_variance
    }

    /// Log density of the slopes given λ², up to a constant.
    pub(crate) fn log_slopes(&self, w: &[f64], lambda_sq: f64) -> f64 {
        let k = w.len() as f64;
        match self.family {
            PenaltyFamily::Ridge => -0.5 * w.iter().map(|v| v * v).sum::<f64>() / lambda_sq - 0.5 * k * lambda_sq.ln(),
            // Laplace with scale 1/λ: density (λ/2)·exp(−λ|w|).
            PenaltyFamily::Lasso => 0.5 * k * lambda_sq.ln() - lambda_sq.sqrt() * w.iter().map(|v| v.abs()).sum::<f64>(),
        }
    }

    /// Log hyperprior density of λ², up to a constant.
    pub(crate) fn log_hyper(&self, lambda_sq: f64) -> f64 {
        match self.family {
            PenaltyFamily::Ridge => -(RIDGE_IG_SHAPE + 1.0) * lambda_sq.ln() - RIDGE_IG_SCALE / lambda_sq,
            PenaltyFamily::Lasso => -LASSO_GAMMA_RATE * lambda_sq,
        }
    }
}

struct LogisticTarget<'a> {
    columns: &'a [Vec<f64>],
    y: &'a [u8],
}

impl LogLikelihood for LogisticTarget<'_> {
    fn log_lik(&self, theta: &[f64]) -> f64 {
        let mut total = 0.0;
        for (i, &yi) in self.y.iter().enumerate() {
            let mut eta = theta[0];
            for (c, w) in self.columns.iter().zip(&theta[1..]) {
                eta += c[i] * w;
            }
            total += f64::from(yi) * eta - (eta.max(0.0) + (-eta.abs()).exp().ln_1p());
        }
        total
    }
}

/// Retained posterior draws on the standardised scale.
#[derive(Debug, Clone, PartialEq)]
pub struct BayesPosterior {
    /// One row per retained draw: intercept then slopes of the used columns.
    pub draws: Vec<Vec<f64>>,
    pub lambda_sq: Vec<f64>,
    pub acceptance: f64,
    pub low_acceptance: bool,
    pub split_chain_ok: bool,
    pub used_columns: Vec<usize>,
    pub standardisation: Vec<ColumnScale>,
}

fn chain_for(sample: &DevelopmentSample, prior: &PriorSpec, mcmc: &McmcConfig, seed: u64) -> Result<(Standardised, Chain)> {
    require_both_classes(sample)?;
    let n = sample.len();
    let std = Standardised::new(&sample.casemix);
    let k = std.columns.len();
    let prev = sample.events() as f64 / n as f64;
    let mut start = vec![0.0; k + 1];
    start[0] = logit(prev);

    // Likelihood Hessian at the start point, where every p_i = prevalence.
    let w = prev * (1.0 - prev);
    let mut h = DMatrix::<f64>::zeros(k + 1, k + 1);
    h[(0, 0)] = w * n as f64;
    for a in 0..k {
        let sa: f64 = std.columns[a].iter().sum();
        h[(0, a + 1)] = w * sa;
        h[(a + 1, 0)] = w * sa;
        for b in 0..=a {
            let v: f64 = std.columns[a].iter().zip(&std.columns[b]).map(|(x, y)| x * y).sum::<f64>() * w;
            h[(a + 1, b + 1)] = v;
            h[(b + 1, a + 1)] = v;
        }
    }
    let target = LogisticTarget {
        columns: &std.columns,
        y: &sample.outcome,
    };
    let mut rng = stream(seed, 0, Role::Mcmc);
    let chain = run_chain(&target, prior, &start, &h, mcmc, &mut rng)?;
    Ok((std, chain))
}

pub fn sample_bayes_posterior(
    sample: &DevelopmentSample,
    prior: &PriorSpec,
    mcmc: &McmcConfig,
    rng_seed: u64,
) -> Result<BayesPosterior> {
    let (std, chain) = chain_for(sample, prior, mcmc, rng_seed)?;
    Ok(BayesPosterior {
        draws: chain.draws,
        lambda_sq: chain.lambda_sq,
        acceptance: chain.acceptance,
        low_acceptance: chain.low_acceptance,
        split_chain_ok: chain.split_chain_ok,
        used_columns: std.used,
        standardisation: std.scales,
    })
}

/// Bayesian ridge or lasso logistic regression; the point model is the
/// posterior-mean coefficient vector.
pub fn fit_bayes_penalized(
    sample: &DevelopmentSample,
    prior: &PriorSpec,
    mcmc: &McmcConfig,
    rng_seed: u64,
) -> Result<FittedModel> {
    let (std, chain) = chain_for(sample, prior, mcmc, rng_seed)?;
    let mean = chain.posterior_mean();
    Ok(FittedModel {
        kind: match prior.family {
            PenaltyFamily::Ridge => StrategyKind::BayesRidge,
            PenaltyFamily::Lasso => StrategyKind::BayesLasso,
        },
        columns: sample.casemix.column_names(),
        standardisation: std.scales.clone(),
        coefficients: Some(Coefficients {
            intercept: mean[0],
            weights: std.expand(&mean[1..]),
        }),
        forest: None,
        diagnostics: Diagnostics {
            converged: !chain.low_acceptance,
            mcmc_acceptance: Some(chain.acceptance),
            split_chain_ok: Some(chain.split_chain_ok),
            dropped_columns: std.dropped.clone(),
            ..Diagnostics::default()
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::devstrat::mcmc::batch_means_se;
    use crate::devstrat::testutil::simulated;
    use crate::devstrat::fit_mle_logistic;

    // Self-normalised importance sampling from a widened Laplace
    // approximation; flat prior, so weights are likelihood / proposal.
    fn importance_posterior_mean(s: &DevelopmentSample, mode: &[f64]) -> Vec<f64> {
        use rand_distr::{Distribution, StandardNormal};
        let std = Standardised::new(&s.casemix);
        let target = LogisticTarget { columns: &std.columns, y: &s.outcome };
        let d = mode.len();
        let mut h = DMatrix::<f64>::zeros(d, d);
        for i in 0..s.len() {
            let x: Vec<f64> = std::iter::once(1.0).chain(std.columns.iter().map(|c| c[i])).collect();
            let eta: f64 = x.iter().zip(mode).map(|(a, b)| a * b).sum();
            let p = 1.0 / (1.0 + (-eta).exp());
            for a in 0..d {
                for b in 0..d {
                    h[(a, b)] += p * (1.0 - p) * x[a] * x[b];
                }
            }
        }
        let cov = h.try_inverse().unwrap() * 1.5f64.powi(2);
        let l = cov.clone().cholesky().unwrap().l();
        let prec = cov.try_inverse().unwrap();
        let ll_mode = target.log_lik(mode);
        let mut rng = stream(77, 0, Role::Noise);
        let (mut wsum, mut acc) = (0.0, vec![0.0; d]);
        for _ in 0..200_000 {
            let z = nalgebra::DVector::<f64>::from_fn(d, |_, _| StandardNormal.sample(&mut rng));
            let dev = &l * z;
            let theta: Vec<f64> = (0..d).map(|j| mode[j] + dev[j]).collect();
            let log_q = -0.5 * (dev.transpose() * &prec * &dev)[(0, 0)];
            let w = (target.log_lik(&theta) - ll_mode - log_q).exp();
            wsum += w;
            for j in 0..d {
                acc[j] += w * theta[j];
            }
        }
        acc.iter().map(|a| a / wsum).collect()
    }

    #[test]
    fn flat_prior_matches_exact_posterior_mean() {
        let s = simulated(500, &[-0.3, 1.5, -1.0], 17);
        let mle = fit_mle_logistic(&s, 50, 1e-10).unwrap();
        let c = mle.coefficients.unwrap();
        let mode = [c.intercept, c.weights[0], c.weights[1]];
        let want = importance_posterior_mean(&s, &mode);
        let prior = PriorSpec::new(PenaltyFamily::Ridge)
            .with_intercept_variance(1e12)
            .with_lambda_sq(LambdaSqPrior::Fixed(1e12));
        let post = sample_bayes_posterior(&s, &prior, &McmcConfig::default(), 3).unwrap();
        for (j, w) in want.iter().enumerate() {
            let series: Vec<f64> = post.draws.iter().map(|r| r[j]).collect();
            let m = series.iter().sum::<f64>() / series.len() as f64;
            let se = batch_means_se(&series);
            assert!((m - w).abs() < 3.0 * se, "coef {j}: {m} vs {w} (se {se})");
        }
    }

    #[test]
    fn tiny_fixed_variance_shrinks_slopes() {
        let s = simulated(300, &[0.0, 1.0, -1.0, 0.5], 2);
        let prior = PriorSpec::new(PenaltyFamily::Ridge).with_lambda_sq(LambdaSqPrior::Fixed(1e-6));
        let fit = fit_bayes_penalized(&s, &prior, &McmcConfig::default(), 4).unwrap();
        assert!(fit.coefficients.unwrap().weights.iter().all(|w| w.abs() < 0.01));
    }

    #[test]
    fn identical_seed_identical_draws() {
        let s = simulated(100, &[0.0, 0.8], 6);
        let cfg = McmcConfig {
            burn_in: 200,
            draws: 100,
            ..McmcConfig::default()
        };
        for family in [PenaltyFamily::Ridge, PenaltyFamily::Lasso] {
            let prior = PriorSpec::new(family);
            let a = sample_bayes_posterior(&s, &prior, &cfg, 10).unwrap();
            let b = sample_bayes_posterior(&s, &prior, &cfg, 10).unwrap();
            assert_eq!(a, b);
            let c = sample_bayes_posterior(&s, &prior, &cfg, 11).unwrap();
            assert_ne!(a.draws, c.draws);
        }
    }

    #[test]
    fn lasso_prior_density() {
        let p = PriorSpec::new(PenaltyFamily::Lasso);
        let exact = |lam: f64| -> f64 { [0.5f64, -1.0].iter().map(|w| (lam / 2.0).ln() - lam * w.abs()).sum() };
        let diff = p.log_slopes(&[0.5, -1.0], 4.0) - p.log_slopes(&[0.5, -1.0], 1.0);
        assert!((diff - (exact(2.0) - exact(1.0))).abs() < 1e-12);
    }

    #[test]
    fn invalid_prior_rejected() {
        let s = simulated(50, &[0.0, 0.8], 6);
        let prior = PriorSpec::new(PenaltyFamily::Ridge).with_intercept_variance(0.0);
        assert!(fit_bayes_penalized(&s, &prior, &McmcConfig::default(), 1).is_err());
    }
}

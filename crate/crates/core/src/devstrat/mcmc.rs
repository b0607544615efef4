//! Blockwise adaptive random-walk Metropolis–Hastings over
//! (intercept, slopes, log λ²).

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::bayes::PriorSpec;
use crate::error::{Error, Result};
use crate::numeric::cholesky_with_jitter;
use crate::rng::StreamRng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McmcConfig {
    pub burn_in: usize,
    pub thin: usize,
    pub draws: usize,
    /// Multiplier on the initial `2.38/√d` proposal scale of each block.
    pub initial_scale: f64,
    /// Sweeps per adaptation window during burn-in.
    pub adapt_window: usize,
    pub target_acceptance: f64,
}

impl Default for McmcConfig {
    fn default() -> Self {
        Self {
            burn_in: 5000,
            thin: 10,
            draws: 1000,
            initial_scale: 1.0,
            adapt_window: 50,
            target_acceptance: 0.30,
        }
    }
}

impl McmcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.thin < 1 || self.draws < 1 {
            return Err(Error::Config("mcmc thin and draws must be at least 1".into()));
        }
        if self.adapt_window < 1 {
            return Err(Error::Config("mcmc adapt_window must be at least 1".into()));
        }
        if !(self.initial_scale > 0.0 && self.initial_scale.is_finite()) {
            return Err(Error::Config("mcmc initial_scale must be positive".into()));
        }
        if !(self.target_acceptance > 0.0 && self.target_acceptance < 1.0) {
            return Err(Error::Config("mcmc target_acceptance must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// Acceptance below this after adaptation is flagged.
pub const LOW_ACCEPTANCE: f64 = 0.05;

/// Log-likelihood over `θ = (intercept, slopes…)`.
pub(crate) trait LogLikelihood {
    fn log_lik(&self, theta: &[f64]) -> f64;
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Chain {
    /// Retained draws of `θ`, one row per draw.
    pub draws: Vec<Vec<f64>>,
    pub lambda_sq: Vec<f64>,
    /// Post-burn-in acceptance of the slope block (intercept block if there
    /// are no slopes).
    pub acceptance: f64,
    pub low_acceptance: bool,
    pub split_chain_ok: bool,
}

impl Chain {
    pub fn posterior_mean(&self) -> Vec<f64> {
        let d = self.draws[0].len();
        let m = self.draws.len() as f64;
        (0..d)
            .map(|j| self.draws.iter().map(|r| r[j]).sum::<f64>() / m)
            .collect()
    }
}

struct Block {
    log_scale: f64,
    accepted: usize,
    tried: usize,
    window_accepted: usize,
    window_tried: usize,
}

impl Block {
    fn new(scale: f64) -> Self {
        Self {
            log_scale: scale.ln(),
            accepted: 0,
            tried: 0,
            window_accepted: 0,
            window_tried: 0,
        }
    }

    fn record(&mut self, accepted: bool, after_burn_in: bool) {
        if after_burn_in {
            self.tried += 1;
            self.accepted += usize::from(accepted);
        } else {
            self.window_tried += 1;
            self.window_accepted += usize::from(accepted);
        }
    }

    fn adapt(&mut self, window: usize, target: f64) {
        if self.window_tried == 0 {
            return;
        }
        let rate = self.window_accepted as f64 / self.window_tried as f64;
        let gain = (3.0 / (window as f64).sqrt()).min(1.0);
        self.log_scale += gain * (rate - target);
        self.window_accepted = 0;
        self.window_tried = 0;
    }

    fn rate(&self) -> Option<f64> {
        (self.tried > 0).then(|| self.accepted as f64 / self.tried as f64)
    }
}

fn accept(rng: &mut StreamRng, log_ratio: f64) -> bool {
    log_ratio >= 0.0 || rng.random::<f64>().ln() < log_ratio
}

/// Runs one chain from `start`. `precision` approximates the likelihood
/// Hessian and shapes the slope proposal.
pub(crate) fn run_chain(
    target: &impl LogLikelihood,
    prior: &PriorSpec,
    start: &[f64],
    precision: &DMatrix<f64>,
    config: &McmcConfig,
    rng: &mut StreamRng,
) -> Result<Chain> {
    config.validate()?;
    prior.validate()?;
    let d = start.len();
    let k = d - 1;

    let int_sd = 1.0 / (precision[(0, 0)] + 1.0 / prior.intercept_variance).sqrt();
    let slope_shape = if k > 0 {
        let h = precision.view((1, 1), (k, k)).into_owned();
        let (l, _) = cholesky_with_jitter(&h)
            .ok_or_else(|| Error::NotPositiveDefinite("slope proposal precision".into()))?;
        // H = L Lᵀ, so L⁻ᵀ z has covariance H⁻¹.
        let l_inv = l
            .solve_lower_triangular(&DMatrix::identity(k, k))
            .ok_or_else(|| Error::NotPositiveDefinite("slope proposal precision".into()))?;
        Some(l_inv.transpose())
    } else {
        None
    };

    let mut theta = start.to_vec();
    let mut log_lam = prior.initial_lambda_sq().ln();
    let mut ll = target.log_lik(&theta);
    let mut blocks = [
        Block::new(2.38 * config.initial_scale),
        Block::new(2.38 / (k.max(1) as f64).sqrt() * config.initial_scale),
        Block::new(config.initial_scale),
    ];
    let total = config.burn_in + config.thin * config.draws;
    let mut draws = Vec::with_capacity(config.draws);
    let mut lambda_sq = Vec::with_capacity(config.draws);
    let mut window = 0;
    let mut z = DVector::<f64>::zeros(k);

    for sweep in 0..total {
        let after = sweep >= config.burn_in;
        let lam_sq = log_lam.exp();

        let mut prop = theta.clone();
        prop[0] += blocks[0].log_scale.exp() * int_sd * rng.sample::<f64, _>(StandardNormal);
        let prop_ll = target.log_lik(&prop);
        let ratio = prop_ll - ll + prior.log_intercept(prop[0]) - prior.log_intercept(theta[0]);
        let ok = accept(rng, ratio);
        if ok {
            theta = prop;
            ll = prop_ll;
        }
        blocks[0].record(ok, after);

        if let Some(shape) = &slope_shape {
            for zi in z.iter_mut() {
                *zi = rng.sample(StandardNormal);
            }
            let step = shape * &z;
            let s = blocks[1].log_scale.exp();
            let mut prop = theta.clone();
            for j in 0..k {
                prop[j + 1] += s * step[j];
            }
            let prop_ll = target.log_lik(&prop);
            let ratio = prop_ll - ll + prior.log_slopes(&prop[1..], lam_sq) - prior.log_slopes(&theta[1..], lam_sq);
            let ok = accept(rng, ratio);
            if ok {
                theta = prop;
                ll = prop_ll;
            }
            blocks[1].record(ok, after);
        }

        if prior.has_hyperprior() && k > 0 {
            let prop = log_lam + blocks[2].log_scale.exp() * rng.sample::<f64, _>(StandardNormal);
            let (a, b) = (lam_sq, prop.exp());
            let ratio = prior.log_slopes(&theta[1..], b) - prior.log_slopes(&theta[1..], a)
                + prior.log_hyper(b)
                - prior.log_hyper(a)
                + (prop - log_lam);
            let ok = b.is_finite() && b > 0.0 && accept(rng, ratio);
            if ok {
                log_lam = prop;
            }
            blocks[2].record(ok, after);
        }

        if !after && (sweep + 1) % config.adapt_window == 0 {
            window += 1;
            for b in &mut blocks {
                b.adapt(window, config.target_acceptance);
            }
        }
        if after && (sweep + 1 - config.burn_in).is_multiple_of(config.thin) {
            draws.push(theta.clone());
            lambda_sq.push(log_lam.exp());
        }
    }

    let rates: Vec<f64> = blocks.iter().filter_map(Block::rate).collect();
    let acceptance = if k > 0 { blocks[1].rate() } else { blocks[0].rate() }.unwrap_or(0.0);
    let low_acceptance = rates.iter().any(|&r| r < LOW_ACCEPTANCE);
    let split_chain_ok = split_chain_ok(&draws);
    Ok(Chain {
        draws,
        lambda_sq,
        acceptance,
        low_acceptance,
        split_chain_ok,
    })
}

/// Monte-Carlo standard error of the mean by non-overlapping batch means
/// (20 batches; plain `sd/√n` for short series).
pub fn batch_means_se(series: &[f64]) -> f64 {
    let n = series.len();
    if n < 2 {
        return f64::INFINITY;
    }
    let batches = 20;
    if n < 2 * batches {
        let m = series.iter().sum::<f64>() / n as f64;
        let var = series.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1) as f64;
        return (var / n as f64).sqrt();
    }
    let size = n / batches;
    let means: Vec<f64> = (0..batches)
        .map(|b| series[b * size..(b + 1) * size].iter().sum::<f64>() / size as f64)
        .collect();
    let m = means.iter().sum::<f64>() / batches as f64;
    let var = means.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (batches - 1) as f64;
    (var / batches as f64).sqrt()
}

/// First and second halves agree to within 4 Monte-Carlo standard errors
/// for every coordinate.
fn split_chain_ok(draws: &[Vec<f64>]) -> bool {
    let half = draws.len() / 2;
    if half < 2 {
        return true;
    }
    (0..draws[0].len()).all(|j| {
        let a: Vec<f64> = draws[..half].iter().map(|r| r[j]).collect();
        let b: Vec<f64> = draws[half..2 * half].iter().map(|r| r[j]).collect();
        let ma = a.iter().sum::<f64>() / half as f64;
        let mb = b.iter().sum::<f64>() / half as f64;
        let se = (batch_means_se(&a).powi(2) + batch_means_se(&b).powi(2)).sqrt();
        (ma - mb).abs() <= 4.0 * se
    })
}

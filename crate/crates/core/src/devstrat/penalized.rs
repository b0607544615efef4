//! Penalised logistic regression by proximal Newton with coordinate descent,
//! tuned by stratified K-fold cross-validated deviance.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::glm::loglik_from_eta;
use super::{
    require_both_classes, Coefficients, Diagnostics, FittedModel, PenaltyFamily, Standardised, StrategyKind,
};
use crate::error::{Error, Result};
use crate::numeric::{bernoulli_loglik, clamp_prob, logistic, logit, PROB_CLAMP};
use crate::popgen::DevelopmentSample;
use crate::rng::{stream, Role};

/// Ratio of the smallest to the largest λ in the default grid.
const GRID_RATIO: f64 = 1e-4;
const GRID_SIZE: usize = 100;
/// Ridge λ_max relative to the lasso λ_max.
const RIDGE_LAMBDA_FACTOR: f64 = 1e3;
/// A path stops once the training deviance falls below this fraction of the
/// null deviance; smaller λ values are then excluded from selection.
const PATH_DEVIANCE_FLOOR: f64 = 1e-3;
const MIN_WEIGHT: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PenalizedOptions {
    pub folds: usize,
    /// Explicit grid; the default is 100 log-spaced values from λ_max.
    pub lambda_grid: Option<Vec<f64>>,
    /// KKT residual tolerance.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PenalizedOptions {
    fn default() -> Self {
        Self {
            folds: 10,
            lambda_grid: None,
            tol: 1e-7,
            max_iter: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PenalizedFit {
    pub intercept: f64,
    /// Weights on the used standardised columns.
    pub weights: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub kkt: f64,
}

struct Data<'a> {
    x: Vec<&'a [f64]>,
    y: Vec<f64>,
    y_u8: Vec<u8>,
}

impl<'a> Data<'a> {
    fn new(columns: &'a [Vec<f64>], y: &[u8]) -> Self {
        Self {
            x: columns.iter().map(Vec::as_slice).collect(),
            y: y.iter().map(|&v| f64::from(v)).collect(),
            y_u8: y.to_vec(),
        }
    }

    fn n(&self) -> usize {
        self.y.len()
    }

    fn eta(&self, b0: f64, w: &[f64]) -> Vec<f64> {
        let mut eta = vec![b0; self.n()];
        for (col, &wj) in self.x.iter().zip(w) {
            if wj != 0.0 {
                for (e, x) in eta.iter_mut().zip(col.iter()) {
                    *e += wj * x;
                }
            }
        }
        eta
    }

    fn objective(&self, eta: &[f64], w: &[f64], family: PenaltyFamily, lambda: f64) -> f64 {
        -loglik_from_eta(eta, &self.y_u8) + lambda * penalty(w, family)
    }

    fn kkt(&self, eta: &[f64], b0_w: &[f64], family: PenaltyFamily, lambda: f64) -> f64 {
        let resid: Vec<f64> = eta.iter().zip(&self.y).map(|(&e, &y)| y - logistic(e)).collect();
        let mut worst = resid.iter().sum::<f64>().abs();
        for (col, &wj) in self.x.iter().zip(b0_w) {
            let g: f64 = col.iter().zip(&resid).map(|(x, r)| x * r).sum();
            let r = match family {
                PenaltyFamily::Ridge => (g - lambda * wj).abs(),
                PenaltyFamily::Lasso if wj != 0.0 => (g - lambda * wj.signum()).abs(),
                PenaltyFamily::Lasso => (g.abs() - lambda).max(0.0),
            };
            worst = worst.max(r);
        }
        worst
    }
}

fn penalty(w: &[f64], family: PenaltyFamily) -> f64 {
    match family {
        PenaltyFamily::Ridge => 0.5 * w.iter().map(|v| v * v).sum::<f64>(),
        PenaltyFamily::Lasso => w.iter().map(|v| v.abs()).sum(),
    }
}

fn solve(
    data: &Data<'_>,
    family: PenaltyFamily,
    lambda: f64,
    start: Option<(f64, &[f64])>,
    tol: f64,
    max_iter: usize,
) -> PenalizedFit {
    let n = data.n();
    let p = data.x.len();
    let (mut b0, mut w) = match start {
        Some((a, s)) => (a, s.to_vec()),
        None => {
            let ybar = data.y.iter().sum::<f64>() / n as f64;
            (logit(clamp_prob(ybar, PROB_CLAMP)), vec![0.0; p])
        }
    };
    let mut eta = data.eta(b0, &w);
    let mut obj = data.objective(&eta, &w, family, lambda);
    let mut kkt = data.kkt(&eta, &w, family, lambda);
    let mut iterations = 0;
    let mut wt = vec![0.0; n];
    let mut r = vec![0.0; n];
    let mut xwx = vec![0.0; p];

    while kkt >= tol && iterations < max_iter {
        iterations += 1;
        for i in 0..n {
            let pi = logistic(eta[i]);
            wt[i] = (pi * (1.0 - pi)).max(MIN_WEIGHT);
            r[i] = (data.y[i] - pi) / wt[i];
        }
        let sw: f64 = wt.iter().sum();
        for (j, col) in data.x.iter().enumerate() {
            xwx[j] = col.iter().zip(&wt).map(|(x, v)| v * x * x).sum();
        }
        let (mut nb0, mut nw) = (b0, w.clone());
        for _ in 0..1000 {
            let mut max_change: f64 = 0.0;
            let d = wt.iter().zip(&r).map(|(v, ri)| v * ri).sum::<f64>() / sw;
            nb0 += d;
            r.iter_mut().for_each(|ri| *ri -= d);
            max_change = max_change.max(sw * d * d);
            for (j, col) in data.x.iter().enumerate() {
                if xwx[j] == 0.0 {
                    continue;
                }
                let g = col.iter().zip(&wt).zip(&r).map(|((x, v), ri)| v * x * ri).sum::<f64>() + xwx[j] * nw[j];
                let new = match family {
                    PenaltyFamily::Ridge => g / (xwx[j] + lambda),
                    PenaltyFamily::Lasso => (g.abs() - lambda).max(0.0).copysign(g) / xwx[j],
                };
                let delta = new - nw[j];
                if delta != 0.0 {
                    for (ri, x) in r.iter_mut().zip(col.iter()) {
                        *ri -= delta * x;
                    }
                    nw[j] = new;
                    max_change = max_change.max(xwx[j] * delta * delta);
                }
            }
            if max_change < 1e-22 * sw.max(1.0) {
                break;
            }
        }

        // Backtrack on the exact objective.
        let mut t = 1.0;
        loop {
            let cb0 = b0 + t * (nb0 - b0);
            let cw: Vec<f64> = w.iter().zip(&nw).map(|(a, b)| a + t * (b - a)).collect();
            let ceta = data.eta(cb0, &cw);
            let cobj = data.objective(&ceta, &cw, family, lambda);
            if cobj <= obj + 1e-12 * obj.abs().max(1.0) || t < 1e-8 {
                if cobj <= obj + 1e-12 * obj.abs().max(1.0) {
                    b0 = cb0;
                    w = cw;
                    eta = ceta;
                    obj = cobj;
                }
                break;
            }
            t *= 0.5;
        }
        let new_kkt = data.kkt(&eta, &w, family, lambda);
        let stalled = t < 1e-8;
        kkt = new_kkt;
        if stalled {
            break;
        }
    }
    PenalizedFit {
        intercept: b0,
        weights: w,
        converged: kkt < tol,
        iterations,
        kkt,
    }
}

/// Smallest lasso λ that zeroes every slope, `max_j |Σ (y − ȳ) z_j|`, over
/// standardised columns; the ridge analogue is scaled up by 10³.
pub fn lambda_max(columns: &[Vec<f64>], y: &[u8], family: PenaltyFamily) -> f64 {
    let n = y.len() as f64;
    let ybar = y.iter().map(|&v| f64::from(v)).sum::<f64>() / n;
    let lasso = columns
        .iter()
        .map(|c| c.iter().zip(y).map(|(x, &v)| x * (f64::from(v) - ybar)).sum::<f64>().abs())
        .fold(0.0, f64::max);
    match family {
        PenaltyFamily::Lasso => lasso,
        PenaltyFamily::Ridge => lasso * RIDGE_LAMBDA_FACTOR,
    }
}

/// 100 log-spaced values from `lambda_max` down to `1e-4 · lambda_max`.
pub fn default_lambda_grid(lambda_max: f64) -> Vec<f64> {
    let top = if lambda_max > 0.0 { lambda_max } else { 1.0 };
    let step = GRID_RATIO.ln() / (GRID_SIZE - 1) as f64;
    (0..GRID_SIZE).map(|k| top * (step * k as f64).exp()).collect()
}

fn kind_of(family: PenaltyFamily) -> StrategyKind {
    match family {
        PenaltyFamily::Ridge => StrategyKind::RidgeCv,
        PenaltyFamily::Lasso => StrategyKind::LassoCv,
    }
}

fn to_model(
    sample: &DevelopmentSample,
    std: &Standardised,
    family: PenaltyFamily,
    fit: &PenalizedFit,
    lambda: f64,
) -> FittedModel {
    FittedModel {
        kind: kind_of(family),
        columns: sample.casemix.column_names(),
        standardisation: std.scales.clone(),
        coefficients: Some(Coefficients {
            intercept: fit.intercept,
            weights: std.expand(&fit.weights),
        }),
        forest: None,
        diagnostics: Diagnostics {
            converged: fit.converged,
            iterations: Some(fit.iterations),
            selected_lambda: Some(lambda),
            dropped_columns: std.dropped.clone(),
            ..Diagnostics::default()
        },
    }
}

/// Penalised fit at a single λ on the sample's standardised predictors.
pub fn fit_penalized(
    sample: &DevelopmentSample,
    family: PenaltyFamily,
    lambda: f64,
    tol: f64,
) -> Result<FittedModel> {
    require_both_classes(sample)?;
    check_lambda(lambda)?;
    let std = Standardised::new(&sample.casemix);
    let data = Data::new(&std.columns, &sample.outcome);
    let fit = solve(&data, family, lambda, None, tol, PenalizedOptions::default().max_iter);
    Ok(to_model(sample, &std, family, &fit, lambda))
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::InvalidArgument(format!("penalty {lambda} must be finite and non-negative")));
    }
    Ok(())
}

fn standardised_coefficients(std: &Standardised, coefs: &Coefficients) -> Vec<f64> {
    std.used.iter().map(|&j| coefs.weights[j]).collect()
}

/// `−ℓ + λ·pen` for standardised-scale coefficients on `sample`, with
/// `pen = ½Σw²` (ridge) or `Σ|w|` (lasso).
pub fn penalized_objective(
    sample: &DevelopmentSample,
    coefs: &Coefficients,
    family: PenaltyFamily,
    lambda: f64,
) -> f64 {
    let std = Standardised::new(&sample.casemix);
    let data = Data::new(&std.columns, &sample.outcome);
    let w = standardised_coefficients(&std, coefs);
    let eta = data.eta(coefs.intercept, &w);
    data.objective(&eta, &w, family, lambda)
}

/// Largest violation of the optimality conditions at `coefs`.
pub fn kkt_residual(sample: &DevelopmentSample, coefs: &Coefficients, family: PenaltyFamily, lambda: f64) -> f64 {
    let std = Standardised::new(&sample.casemix);
    let data = Data::new(&std.columns, &sample.outcome);
    let w = standardised_coefficients(&std, coefs);
    let eta = data.eta(coefs.intercept, &w);
    data.kkt(&eta, &w, family, lambda)
}

/// Stratified fold labels: events and non-events are shuffled separately
/// and dealt round-robin.
fn fold_labels(y: &[u8], folds: usize, seed: u64) -> Vec<usize> {
    let mut rng = stream(seed, 0, Role::Split);
    let mut events: Vec<usize> = (0..y.len()).filter(|&i| y[i] == 1).collect();
    let mut non_events: Vec<usize> = (0..y.len()).filter(|&i| y[i] == 0).collect();
    events.shuffle(&mut rng);
    non_events.shuffle(&mut rng);
    let mut labels = vec![0; y.len()];
    for (k, &i) in events.iter().chain(&non_events).enumerate() {
        labels[i] = k % folds;
    }
    labels
}

fn deviance(data: &Data<'_>, b0: f64, w: &[f64]) -> f64 {
    let eta = data.eta(b0, w);
    -2.0 * eta
        .iter()
        .zip(&data.y_u8)
        .map(|(&e, &y)| bernoulli_loglik(clamp_prob(logistic(e), PROB_CLAMP), y))
        .sum::<f64>()
}

/// Ridge or lasso with λ chosen by K-fold cross-validated deviance, then
/// refitted on the full sample.
pub fn fit_penalized_cv(
    sample: &DevelopmentSample,
    family: PenaltyFamily,
    options: &PenalizedOptions,
    rng_seed: u64,
) -> Result<FittedModel> {
    require_both_classes(sample)?;
    let n = sample.len();
    if options.folds < 2 || n < options.folds {
        return Err(Error::InvalidArgument(format!(
            "{} folds need at least 2 folds and as many rows, got {n} rows",
            options.folds
        )));
    }
    let std = Standardised::new(&sample.casemix);
    let y = &sample.outcome;
    let mut grid = match &options.lambda_grid {
        Some(g) => {
            if g.is_empty() {
                return Err(Error::InvalidArgument("empty lambda grid".into()));
            }
            for &l in g {
                check_lambda(l)?;
            }
            g.clone()
        }
        None => default_lambda_grid(lambda_max(&std.columns, y, family)),
    };
    grid.sort_by(|a, b| b.total_cmp(a));

    let labels = fold_labels(y, options.folds, rng_seed);
    let mut cv_dev = vec![0.0; grid.len()];
    for f in 0..options.folds {
        let train: Vec<usize> = (0..n).filter(|&i| labels[i] != f).collect();
        let test: Vec<usize> = (0..n).filter(|&i| labels[i] == f).collect();
        let subset = |rows: &[usize]| -> (Vec<Vec<f64>>, Vec<u8>) {
            (
                std.columns.iter().map(|c| rows.iter().map(|&i| c[i]).collect()).collect(),
                rows.iter().map(|&i| y[i]).collect(),
            )
        };
        let (train_x, train_y) = subset(&train);
        let (test_x, test_y) = subset(&test);
        let train_data = Data::new(&train_x, &train_y);
        let test_data = Data::new(&test_x, &test_y);
        let null_dev = {
            let ybar = train_data.y.iter().sum::<f64>() / train.len() as f64;
            deviance(&train_data, logit(clamp_prob(ybar, PROB_CLAMP)), &vec![0.0; std.columns.len()])
        };

        let mut warm: Option<PenalizedFit> = None;
        let mut exhausted = false;
        for (k, &lambda) in grid.iter().enumerate() {
            if exhausted {
                cv_dev[k] = f64::INFINITY;
                continue;
            }
            let fit = solve(
                &train_data,
                family,
                lambda,
                warm.as_ref().map(|w| (w.intercept, w.weights.as_slice())),
                options.tol,
                options.max_iter,
            );
            cv_dev[k] += deviance(&test_data, fit.intercept, &fit.weights);
            if deviance(&train_data, fit.intercept, &fit.weights) < PATH_DEVIANCE_FLOOR * null_dev {
                exhausted = true;
            }
            warm = Some(fit);
        }
    }

    let best = cv_dev
        .iter()
        .enumerate()
        .fold(0, |b, (k, &d)| if d < cv_dev[b] { k } else { b });
    let data = Data::new(&std.columns, y);
    let mut warm: Option<PenalizedFit> = None;
    for &lambda in &grid[..=best] {
        let fit = solve(
            &data,
            family,
            lambda,
            warm.as_ref().map(|w| (w.intercept, w.weights.as_slice())),
            options.tol,
            options.max_iter,
        );
        warm = Some(fit);
    }
    let fit = warm.expect("grid is non-empty");
    Ok(to_model(sample, &std, family, &fit, grid[best]))
}

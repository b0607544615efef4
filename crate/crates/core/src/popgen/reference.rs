use rand::Rng;
use serde::{Deserialize, Serialize};

use super::casemix::CaseMix;
use crate::error::{Error, Result};
use crate::metrics::c_statistic;
use crate::numeric::{clamp_prob, logistic, logit, pairwise_sum, pairwise_sum_by};
use crate::rng::rng_from_seed;

/// Smallest distance of a true risk from 0 or 1.
const RISK_CLAMP: f64 = 1e-15;

/// Fixed seed for the outcome realisation used as the calibration objective.
const CALIBRATION_SEED: u64 = 0x00C0_FFEE_5EED;

/// Logistic reference ("true") model:
/// `logit(p_i) = intercept + scale * Σ_j weights[j] * x_ij`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceModel {
    pub intercept: f64,
    pub scale: f64,
    pub weights: Vec<f64>,
    pub column_names: Vec<String>,
}

impl ReferenceModel {
    pub fn new(intercept: f64, scale: f64, weights: Vec<f64>, column_names: Vec<String>) -> Result<Self> {
        if weights.len() != column_names.len() {
            return Err(Error::InvalidArgument(format!(
                "{} weights for {} columns",
                weights.len(),
                column_names.len()
            )));
        }
        if !(scale >= 0.0) || !intercept.is_finite() || weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::InvalidArgument(
                "reference model needs finite weights and intercept, and scale >= 0".into(),
            ));
        }
        Ok(Self {
            intercept,
            scale,
            weights,
            column_names,
        })
    }

    /// Intercept followed by `scale * weights`: the ordinary coefficient
    /// vector of the same linear predictor.
    pub fn effective_coefficients(&self) -> Vec<f64> {
        std::iter::once(self.intercept)
            .chain(self.weights.iter().map(|w| self.scale * w))
            .collect()
    }

    /// Same model with zero weights for any case-mix columns it does not
    /// mention (e.g. appended noise predictors).
    pub fn extended_to(&self, casemix: &CaseMix) -> Result<Self> {
        let names = casemix.column_names();
        if names.len() < self.column_names.len() || names[..self.column_names.len()] != self.column_names[..] {
            return Err(Error::Alignment(
                "case-mix must start with the reference model's columns".into(),
            ));
        }
        let mut weights = self.weights.clone();
        weights.resize(names.len(), 0.0);
        Self::new(self.intercept, self.scale, weights, names)
    }

    pub fn check_alignment(&self, casemix: &CaseMix) -> Result<()> {
        let names = casemix.column_names();
        if names != self.column_names {
            return Err(Error::Alignment(format!(
                "model columns {:?} do not match case-mix columns {:?}",
                self.column_names, names
            )));
        }
        Ok(())
    }

    /// Relative linear predictor `Σ_j weights[j] * x_ij` (before scaling).
    fn relative_predictor(&self, casemix: &CaseMix) -> Vec<f64> {
        (0..casemix.n_rows())
            .map(|i| {
                casemix
                    .row(i)
                    .iter()
                    .zip(&self.weights)
                    .map(|(x, w)| x * w)
                    .sum()
            })
            .collect()
    }
}

/// True risks `p_i = logistic(α + δ·Σ β_j x_ji)`, kept strictly inside (0, 1).
pub fn reference_risks(model: &ReferenceModel, casemix: &CaseMix) -> Result<Vec<f64>> {
    model.check_alignment(casemix)?;
    Ok(model
        .relative_predictor(casemix)
        .into_iter()
        .map(|lp| clamp_prob(logistic(model.intercept + model.scale * lp), RISK_CLAMP))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        Self {
            tol: 0.005,
            max_iter: 60,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibratedReference {
    pub model: ReferenceModel,
    pub achieved_cstat: f64,
    pub achieved_prevalence: f64,
    pub iterations: usize,
}

struct Objective {
    /// Relative predictor centred at its mean, so the intercept bracket does
    /// not depend on the location of the predictors.
    relative: Vec<f64>,
    centre: f64,
    spread: f64,
    uniforms: Vec<f64>,
    target_prevalence: f64,
    max_iter: usize,
}

impl Objective {
    fn prevalence(&self, alpha: f64, delta: f64) -> f64 {
        let n = self.relative.len();
        pairwise_sum_by(n, |i| logistic(alpha + delta * self.relative[i])) / n as f64
    }

    /// Inner bisection: centred intercept matching the target prevalence
    /// for `delta`.
    fn solve_alpha(&self, delta: f64) -> (f64, f64) {
        let half = 50.0 + delta * self.spread;
        let (mut lo, mut hi) = (-half, half);
        for _ in 0..self.max_iter {
            let mid = 0.5 * (lo + hi);
            if self.prevalence(mid, delta) < self.target_prevalence {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-13 {
                break;
            }
        }
        let alpha = 0.5 * (lo + hi);
        (alpha, self.prevalence(alpha, delta))
    }

    /// c-statistic of true risks against one fixed outcome realisation.
    fn cstat(&self, alpha: f64, delta: f64) -> f64 {
        let risks: Vec<f64> = self
            .relative
            .iter()
            .map(|lp| logistic(alpha + delta * lp))
            .collect();
        let outcomes: Vec<u8> = risks
            .iter()
            .zip(&self.uniforms)
            .map(|(p, u)| u8::from(u < p))
            .collect();
        c_statistic(&risks, &outcomes).unwrap_or(0.5)
    }

    fn evaluate(&self, delta: f64) -> (f64, f64, f64) {
        let (alpha, prev) = self.solve_alpha(delta);
        (alpha, prev, self.cstat(alpha, delta))
    }
}

/// Finds the intercept and scale for which the reference model reaches the
/// target c-statistic and prevalence on `casemix`, by nested bisection: an
/// outer loop on the scale for the c-statistic and an inner loop on the
/// intercept for the prevalence.
///
/// The c-statistic objective is the rank concordance of the true risks with
/// one outcome realisation drawn from fixed uniforms, so the objective is
/// deterministic across calls.
pub fn calibrate_reference(
    relative_weights: &[f64],
    column_names: &[String],
    casemix: &CaseMix,
    target_cstat: f64,
    target_prevalence: f64,
    options: CalibrationOptions,
) -> Result<CalibratedReference> {
    if !(0.5..1.0).contains(&target_cstat) {
        return Err(Error::InvalidArgument(format!(
            "target c-statistic must lie in [0.5, 1), got {target_cstat}"
        )));
    }
    if !(target_prevalence > 0.0 && target_prevalence < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "target prevalence must lie in (0, 1), got {target_prevalence}"
        )));
    }
    let template = ReferenceModel::new(0.0, 1.0, relative_weights.to_vec(), column_names.to_vec())?;
    template.check_alignment(casemix)?;

    if target_cstat == 0.5 {
        return Ok(CalibratedReference {
            model: ReferenceModel {
                intercept: logit(target_prevalence),
                scale: 0.0,
                ..template
            },
            achieved_cstat: 0.5,
            achieved_prevalence: target_prevalence,
            iterations: 0,
        });
    }
    if relative_weights.iter().all(|w| *w == 0.0) {
        return Err(Error::UnreachableTarget {
            target: target_cstat,
            achievable: 0.5,
        });
    }

    let mut rng = rng_from_seed(CALIBRATION_SEED);
    let relative = template.relative_predictor(casemix);
    let centre = pairwise_sum(&relative) / relative.len().max(1) as f64;
    let relative: Vec<f64> = relative.iter().map(|v| v - centre).collect();
    let spread = relative.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let obj = Objective {
        relative,
        centre,
        spread,
        uniforms: (0..casemix.n_rows()).map(|_| rng.random::<f64>()).collect(),
        target_prevalence,
        max_iter: options.max_iter.max(1),
    };

    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let mut iterations = 0usize;
    let mut c_hi = obj.evaluate(hi).2;
    while c_hi < target_cstat {
        iterations += 1;
        if hi >= 1e6 || iterations > options.max_iter {
            return Err(Error::UnreachableTarget {
                target: target_cstat,
                achievable: c_hi,
            });
        }
        lo = hi;
        hi *= 2.0;
        c_hi = obj.evaluate(hi).2;
    }
    for _ in 0..options.max_iter {
        iterations += 1;
        let mid = 0.5 * (lo + hi);
        if obj.evaluate(mid).2 < target_cstat {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-10 * hi.max(1.0) {
            break;
        }
    }

    let delta = 0.5 * (lo + hi);
    let (centred_alpha, prevalence, cstat) = obj.evaluate(delta);
    let alpha = centred_alpha - delta * obj.centre;
    if (cstat - target_cstat).abs() > options.tol || (prevalence - target_prevalence).abs() > options.tol {
        return Err(Error::CalibrationNonConvergence {
            iterations,
            achieved_cstat: cstat,
            achieved_prevalence: prevalence,
        });
    }
    Ok(CalibratedReference {
        model: ReferenceModel {
            intercept: alpha,
            scale: delta,
            ..template
        },
        achieved_cstat: cstat,
        achieved_prevalence: prevalence,
        iterations,
    })
}

use serde::{Deserialize, Serialize};

use crate::devstrat::glm::{fit_logistic, IrlsOptions};
use crate::error::{check_len, Error, Result};
use crate::numeric::{clamp_prob, logistic, logit, quantile_sorted, Matrix, PROB_CLAMP};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationFit {
    pub intercept: f64,
    pub slope: f64,
}

fn check_classes(outcomes: &[u8]) -> Result<()> {
    let events = outcomes.iter().filter(|&&y| y == 1).count();
    if events == 0 || events == outcomes.len() {
        return Err(Error::DegenerateOutcome(
            "recalibration needs both outcome classes".into(),
        ));
    }
    Ok(())
}

fn recalibration_options(n: usize) -> IrlsOptions {
    IrlsOptions {
        max_iter: 100,
        tol: 1e-9 * (n as f64).max(1.0),
    }
}

/// Calibration intercept and slope: the MLE of
/// `logit(p_i) = intercept + slope · logit(p̂_i)`.
pub fn calibration_fit(risks: &[f64], outcomes: &[u8]) -> Result<CalibrationFit> {
    check_len(risks.len(), outcomes.len())?;
    check_classes(outcomes)?;
    let lp: Vec<f64> = risks.iter().map(|&p| logit(clamp_prob(p, PROB_CLAMP))).collect();
    let (lo, hi) = lp
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if hi - lo < 1e-12 {
        return Err(Error::DegenerateRecalibration);
    }
    let mut data = Vec::with_capacity(2 * lp.len());
    for v in &lp {
        data.push(1.0);
        data.push(*v);
    }
    let design = Matrix::new(lp.len(), 2, data);
    let fit = fit_logistic(&design, outcomes, None, Some(&[0.0, 1.0]), recalibration_options(lp.len()))?;
    if !fit.converged {
        return Err(Error::NonConvergence(format!(
            "calibration fit after {} iterations (max |score| {:.3e})",
            fit.iterations, fit.max_abs_score
        )));
    }
    Ok(CalibrationFit {
        intercept: fit.coefficients[0],
        slope: fit.coefficients[1],
    })
}

/// Flexible calibration curve evaluated on a grid of estimated risks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationCurve {
    pub grid: Vec<f64>,
    pub observed: Vec<f64>,
    /// Spline knots on the logit scale.
    pub knots: Vec<f64>,
}

pub const CURVE_GRID_POINTS: usize = 100;

fn knot_quantiles(n_knots: usize) -> Result<&'static [f64]> {
    Ok(match n_knots {
        3 => &[0.10, 0.50, 0.90],
        4 => &[0.05, 0.35, 0.65, 0.95],
        5 => &[0.05, 0.275, 0.50, 0.725, 0.95],
        _ => {
            return Err(Error::InvalidArgument(format!(
                "calibration curve supports 3 to 5 knots, got {n_knots}"
            )))
        }
    })
}

/// Restricted (natural) cubic spline basis: `x` followed by `k − 2`
/// nonlinear terms, linear beyond the boundary knots.
pub(crate) fn natural_spline_basis(x: f64, knots: &[f64]) -> Vec<f64> {
    let k = knots.len();
    let mut out = Vec::with_capacity(k.saturating_sub(1));
    out.push(x);
    if k < 3 {
        return out;
    }
    let cube = |v: f64| if v > 0.0 { v * v * v } else { 0.0 };
    let (tk, tk1, t1) = (knots[k - 1], knots[k - 2], knots[0]);
    let norm = (tk - t1) * (tk - t1);
    for &tj in &knots[..k - 2] {
        let v = cube(x - tj) - cube(x - tk1) * (tk - tj) / (tk - tk1)
            + cube(x - tk) * (tk1 - tj) / (tk - tk1);
        out.push(v / norm);
    }
    out
}

/// Logistic regression of the outcome on a natural cubic spline of
/// `logit(p̂)`, with knots at fixed quantiles of `logit(p̂)`, evaluated on
/// [`CURVE_GRID_POINTS`] risks evenly spaced between the 1st and 99th
/// percentiles of the estimated risks.
pub fn calibration_curve(risks: &[f64], outcomes: &[u8], n_knots: usize) -> Result<CalibrationCurve> {
    check_len(risks.len(), outcomes.len())?;
    check_classes(outcomes)?;
    let quantiles = knot_quantiles(n_knots)?;
    let clamped: Vec<f64> = risks.iter().map(|&p| clamp_prob(p, PROB_CLAMP)).collect();
    let mut sorted = clamped.clone();
    sorted.sort_by(f64::total_cmp);
    let (g_lo, g_hi) = (quantile_sorted(&sorted, 0.01), quantile_sorted(&sorted, 0.99));
    if !(g_hi > g_lo) {
        return Err(Error::DegenerateRecalibration);
    }

    let mut knots: Vec<f64> = quantiles
        .iter()
        .map(|&q| logit(quantile_sorted(&sorted, q)))
        .collect();
    knots.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    if knots.len() < 3 {
        knots.clear();
    }

    let width = knots.len().saturating_sub(1).max(1) + 1;
    let mut data = Vec::with_capacity(width * clamped.len());
    for &p in &clamped {
        data.push(1.0);
        data.extend(natural_spline_basis(logit(p), &knots));
    }
    let design = Matrix::new(clamped.len(), width, data);
    let fit = fit_logistic(&design, outcomes, None, None, recalibration_options(clamped.len()))?;
    if !fit.converged {
        return Err(Error::NonConvergence("calibration curve fit".into()));
    }

    let step = (g_hi - g_lo) / (CURVE_GRID_POINTS - 1) as f64;
    let grid: Vec<f64> = (0..CURVE_GRID_POINTS)
        .map(|i| if i + 1 == CURVE_GRID_POINTS { g_hi } else { g_lo + step * i as f64 })
        .collect();
    let observed = grid
        .iter()
        .map(|&g| {
            let basis = natural_spline_basis(logit(g), &knots);
            let eta = fit.coefficients[0]
                + basis
                    .iter()
                    .zip(&fit.coefficients[1..])
                    .map(|(b, c)| b * c)
                    .sum::<f64>();
            clamp_prob(logistic(eta), PROB_CLAMP)
        })
        .collect();
    Ok(CalibrationCurve {
        grid,
        observed,
        knots,
    })
}

use super::glm::{fit_logistic, loglik_from_eta, null_loglik, IrlsOptions};
use super::{require_both_classes, Coefficients, Diagnostics, FittedModel, Standardised, StrategyKind};
use crate::error::{Error, Result};
use crate::numeric::logit;
use crate::popgen::DevelopmentSample;

/// Standardised slopes beyond this magnitude are taken as separation.
pub const SEPARATION_BOUND: f64 = 20.0;

/// Unpenalised logistic regression on standardised predictors.
pub fn fit_mle_logistic(sample: &DevelopmentSample, max_iter: usize, tol: f64) -> Result<FittedModel> {
    require_both_classes(sample)?;
    let n = sample.len();
    let std = Standardised::new(&sample.casemix);
    let design = std.design_with_intercept(n);
    let mut start = vec![0.0; design.cols()];
    start[0] = logit(sample.events() as f64 / n as f64);
    let fit = fit_logistic(&design, &sample.outcome, None, Some(&start), IrlsOptions { max_iter, tol })?;
    // Under separation the score still vanishes as coefficients diverge.
    let separated = fit.coefficients[1..].iter().any(|b| b.abs() > SEPARATION_BOUND);
    Ok(FittedModel {
        kind: StrategyKind::Mle,
        columns: sample.casemix.column_names(),
        standardisation: std.scales.clone(),
        coefficients: Some(Coefficients {
            intercept: fit.coefficients[0],
            weights: std.expand(&fit.coefficients[1..]),
        }),
        forest: None,
        diagnostics: Diagnostics {
            converged: fit.converged && !separated,
            iterations: Some(fit.iterations),
            dropped_columns: std.dropped,
            ..Diagnostics::default()
        },
    })
}

/// `(LR − P) / LR`; non-positive when the likelihood-ratio statistic does
/// not exceed the number of predictor parameters.
pub fn shrinkage_factor(lr_chi2: f64, n_params: usize) -> f64 {
    if lr_chi2 <= 0.0 {
        return 0.0;
    }
    (lr_chi2 - n_params as f64) / lr_chi2
}

/// Heuristic uniform shrinkage of a converged MLE fit, with the intercept
/// re-estimated so mean predicted risk matches the observed prevalence.
pub fn shrink_uniform(fitted: &FittedModel, sample: &DevelopmentSample) -> Result<FittedModel> {
    if fitted.kind != StrategyKind::Mle {
        return Err(Error::InvalidArgument(format!(
            "uniform shrinkage needs an mle fit, got {}",
            fitted.kind.as_str()
        )));
    }
    if !fitted.diagnostics.converged {
        return Err(Error::NonConvergence("uniform shrinkage of a non-converged fit".into()));
    }
    fitted.check_alignment(&sample.casemix)?;
    require_both_classes(sample)?;
    let coefs = fitted.coefficients.as_ref().expect("mle fit has coefficients");
    let n = sample.len();
    let std = Standardised::new(&sample.casemix);
    let used_w: Vec<f64> = std.used.iter().map(|&j| coefs.weights[j]).collect();

    let slope_part = |scale: f64| -> Vec<f64> {
        (0..n)
            .map(|i| scale * std.columns.iter().zip(&used_w).map(|(c, w)| c[i] * w).sum::<f64>())
            .collect()
    };
    let lp = slope_part(1.0);
    let eta: Vec<f64> = lp.iter().map(|v| v + coefs.intercept).collect();
    let lr = 2.0 * (loglik_from_eta(&eta, &sample.outcome) - null_loglik(&sample.outcome));
    let s = shrinkage_factor(lr, used_w.len());

    let prevalence = sample.events() as f64 / n as f64;
    let (intercept, weights) = if s <= 0.0 {
        (logit(prevalence), vec![0.0; coefs.weights.len()])
    } else {
        let offset = slope_part(s);
        let ones = crate::numeric::Matrix::new(n, 1, vec![1.0; n]);
        let refit = fit_logistic(
            &ones,
            &sample.outcome,
            Some(&offset),
            Some(&[coefs.intercept]),
            IrlsOptions { max_iter: 100, tol: 1e-10 * n as f64 },
        )?;
        if !refit.converged {
            return Err(Error::NonConvergence("intercept re-estimation after shrinkage".into()));
        }
        (refit.coefficients[0], coefs.weights.iter().map(|w| w * s).collect())
    };
    let mut diagnostics = fitted.diagnostics.clone();
    diagnostics.shrinkage_factor = Some(s.max(0.0));
    Ok(FittedModel {
        kind: StrategyKind::Shrunk,
        columns: fitted.columns.clone(),
        standardisation: fitted.standardisation.clone(),
        coefficients: Some(Coefficients { intercept, weights }),
        forest: None,
        diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::devstrat::testutil::{sample_from, simulated};

    // Plain Newton on the raw scale, written without the shared IRLS core.
    fn newton_oracle(rows: &[Vec<f64>], y: &[u8]) -> Vec<f64> {
        let k = rows[0].len() + 1;
        let mut b = vec![0.0; k];
        for _ in 0..100 {
            let mut g = nalgebra::DVector::<f64>::zeros(k);
            let mut h = nalgebra::DMatrix::<f64>::zeros(k, k);
            for (r, &yi) in rows.iter().zip(y) {
                let x: Vec<f64> = std::iter::once(1.0).chain(r.iter().copied()).collect();
                let eta: f64 = x.iter().zip(&b).map(|(a, c)| a * c).sum();
                let p = 1.0 / (1.0 + (-eta).exp());
                for a in 0..k {
                    g[a] += (f64::from(yi) - p) * x[a];
                    for c in 0..k {
                        h[(a, c)] += p * (1.0 - p) * x[a] * x[c];
                    }
                }
            }
            let step = h.lu().solve(&g).unwrap();
            for a in 0..k {
                b[a] += step[a];
            }
        }
        b
    }

    #[test]
    fn matches_independent_newton() {
        let s = simulated(50, &[-0.3, 0.8, -0.5], 3);
        let rows: Vec<Vec<f64>> = (0..50).map(|i| s.casemix.row(i).to_vec()).collect();
        let oracle = newton_oracle(&rows, &s.outcome);
        let fit = fit_mle_logistic(&s, 50, 1e-10).unwrap();
        assert!(fit.diagnostics.converged);
        let lin = fit.linear_model().unwrap();
        assert!((lin.intercept - oracle[0]).abs() < 1e-6);
        for j in 0..2 {
            assert!((lin.weights[j] - oracle[j + 1]).abs() < 1e-6);
        }
    }

    #[test]
    fn intercept_only_closed_form() {
        let rows = vec![vec![1.0]; 100];
        let y: Vec<u8> = (0..100).map(|i| u8::from(i < 30)).collect();
        let fit = fit_mle_logistic(&sample_from(rows, y), 50, 1e-10).unwrap();
        assert_eq!(fit.diagnostics.dropped_columns, vec!["x0".to_string()]);
        assert!((fit.coefficients.unwrap().intercept - logit(0.3)).abs() < 1e-10);
    }

    #[test]
    fn separation_is_flagged() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let y: Vec<u8> = (0..10).map(|i| u8::from(i >= 5)).collect();
        let fit = fit_mle_logistic(&sample_from(rows, y), 50, 1e-9).unwrap();
        assert!(!fit.diagnostics.converged);
    }

    #[test]
    fn degenerate_outcome_is_error() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let sample = sample_from(rows, vec![0; 10]);
        assert!(matches!(fit_mle_logistic(&sample, 50, 1e-9), Err(Error::DegenerateOutcome(_))));
    }

    #[test]
    fn score_equations_hold() {
        let s = simulated(300, &[0.2, 1.0, -0.7, 0.3], 11);
        let fit = fit_mle_logistic(&s, 50, 1e-9).unwrap();
        let risks = super::super::predict_risks(&fit, &s.casemix).unwrap();
        for j in 0..3 {
            let g: f64 = (0..300).map(|i| (f64::from(s.outcome[i]) - risks[i]) * s.casemix.row(i)[j]).sum();
            assert!(g.abs() < 1e-7, "score {g}");
        }
    }

    #[test]
    fn shrinkage_factor_arithmetic() {
        assert_eq!(shrinkage_factor(20.0, 10), 0.5);
        assert!(shrinkage_factor(1e12, 10) > 1.0 - 1e-10);
        assert!(shrinkage_factor(5.0, 10) < 0.0);
    }

    #[test]
    fn shrunk_model_matches_prevalence_and_shrinks() {
        let s = simulated(200, &[-0.5, 0.6, 0.4, 0.0, 0.0], 7);
        let mle = fit_mle_logistic(&s, 50, 1e-10).unwrap();
        let shrunk = shrink_uniform(&mle, &s).unwrap();
        assert_eq!(shrunk.kind, StrategyKind::Shrunk);
        let f = shrunk.diagnostics.shrinkage_factor.unwrap();
        assert!(f > 0.0 && f < 1.0);
        let risks = super::super::predict_risks(&shrunk, &s.casemix).unwrap();
        let mean = risks.iter().sum::<f64>() / 200.0;
        assert!((mean - s.events() as f64 / 200.0).abs() < 1e-6);
        let (a, b) = (mle.coefficients.unwrap(), shrunk.coefficients.unwrap());
        for (x, y) in a.weights.iter().zip(&b.weights) {
            assert!(y.abs() <= x.abs());
        }
    }

    #[test]
    fn weak_signal_shrinks_to_null() {
        let s = simulated(40, &[0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0], 5);
        let mle = fit_mle_logistic(&s, 50, 1e-10).unwrap();
        if !mle.diagnostics.converged {
            return;
        }
        let shrunk = shrink_uniform(&mle, &s).unwrap();
        if shrunk.diagnostics.shrinkage_factor == Some(0.0) {
            let c = shrunk.coefficients.unwrap();
            assert!(c.weights.iter().all(|w| *w == 0.0));
            assert!((c.intercept - logit(s.events() as f64 / 40.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn shrink_requires_mle() {
        let s = simulated(100, &[0.0, 1.0], 2);
        let mut fit = fit_mle_logistic(&s, 50, 1e-10).unwrap();
        fit.kind = StrategyKind::Shrunk;
        assert!(shrink_uniform(&fit, &s).is_err());
    }
}

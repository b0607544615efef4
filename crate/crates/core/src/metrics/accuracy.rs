use crate::devstrat::glm::null_loglik;
use crate::error::{check_len, Error, Result};
use crate::numeric::{bernoulli_loglik, pairwise_sum_by};

/// Mean absolute and root mean squared difference between estimated and
/// true risks.
pub fn prediction_error(est: &[f64], truth: &[f64]) -> Result<(f64, f64)> {
    check_len(truth.len(), est.len())?;
    if est.is_empty() {
        return Err(Error::InvalidArgument("empty risk vectors".into()));
    }
    let n = est.len() as f64;
    let mape = pairwise_sum_by(est.len(), |i| (est[i] - truth[i]).abs()) / n;
    let mse = pairwise_sum_by(est.len(), |i| (est[i] - truth[i]).powi(2)) / n;
    Ok((mape, mse.sqrt()))
}

/// Cox–Snell and Nagelkerke R² of the supplied risks relative to the
/// prevalence-only model.
pub fn r2_measures(risks: &[f64], outcomes: &[u8]) -> Result<(f64, f64)> {
    check_len(risks.len(), outcomes.len())?;
    let events = outcomes.iter().filter(|&&y| y == 1).count();
    if events == 0 || events == outcomes.len() {
        return Err(Error::DegenerateOutcome("R² needs both outcome classes".into()));
    }
    let n = risks.len() as f64;
    let ll_model = pairwise_sum_by(risks.len(), |i| bernoulli_loglik(risks[i], outcomes[i]));
    let ll_null = null_loglik(outcomes);
    let cox_snell = 1.0 - (-(2.0 / n) * (ll_model - ll_null)).exp();
    let max_r2 = 1.0 - ((2.0 / n) * ll_null).exp();
    Ok((cox_snell, cox_snell / max_r2))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prediction_error_arithmetic() {
        assert_eq!(prediction_error(&[0.1, 0.7], &[0.1, 0.7]).unwrap(), (0.0, 0.0));
        let (mape, rmspe) = prediction_error(&[0.2, 0.4], &[0.3, 0.5]).unwrap();
        assert!((mape - 0.1).abs() < 1e-15);
        assert!((rmspe - 0.1).abs() < 1e-15);
        assert!(prediction_error(&[0.2], &[0.3, 0.5]).is_err());
    }

    #[test]
    fn null_model_has_zero_r2() {
        let y = [1, 1, 0, 1, 0, 0, 0, 1];
        let (cs, nk) = r2_measures(&[0.5; 8], &y).unwrap();
        assert!(cs.abs() < 1e-12 && nk.abs() < 1e-12);
    }

    #[test]
    fn perfect_risks_reach_nagelkerke_one() {
        let y = [1, 0, 1, 0, 0, 1];
        let risks: Vec<f64> = y.iter().map(|&v| if v == 1 { 1.0 } else { 0.0 }).collect();
        let (_, nk) = r2_measures(&risks, &y).unwrap();
        assert!((nk - 1.0).abs() < 1e-3);
    }
}

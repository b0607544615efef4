use crate::error::{check_len, Result};
use crate::numeric::{quantile_sorted, Matrix};

/// Below this many draws per individual, percentile widths are unreliable.
pub const MIN_INTERVAL_DRAWS: usize = 40;

/// True when the estimate and the truth fall strictly on opposite sides of
/// the threshold. A risk exactly at the threshold is never misclassified.
#[inline]
pub fn is_misclassified(estimate: f64, truth: f64, threshold: f64) -> bool {
    (estimate - threshold) * (truth - threshold) < 0.0
}

/// Per individual, the fraction of draws classified on the opposite side of
/// the threshold from the true risk. `per_draw_risks` is draws × individuals.
pub fn misclassification_prob(per_draw_risks: &Matrix, true_risks: &[f64], threshold: f64) -> Result<Vec<f64>> {
    check_len(per_draw_risks.cols(), true_risks.len())?;
    let draws = per_draw_risks.rows();
    let mut counts = vec![0usize; true_risks.len()];
    for d in 0..draws {
        for (c, (&est, &truth)) in counts.iter_mut().zip(per_draw_risks.row(d).iter().zip(true_risks)) {
            if is_misclassified(est, truth, threshold) {
                *c += 1;
            }
        }
    }
    Ok(counts
        .into_iter()
        .map(|c| c as f64 / draws.max(1) as f64)
        .collect())
}

/// Width between the 2.5th and 97.5th percentiles (type 7) of each
/// individual's draws. `per_draw_risks` is draws × individuals.
pub fn interval_widths(per_draw_risks: &Matrix) -> Vec<f64> {
    (0..per_draw_risks.cols())
        .map(|j| {
            let mut col = per_draw_risks.column(j);
            col.sort_by(f64::total_cmp);
            quantile_sorted(&col, 0.975) - quantile_sorted(&col, 0.025)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_truth_is_never_misclassified() {
        let truth = [0.2, 0.5, 0.8];
        let draws = Matrix::from_rows(&[truth.to_vec(), truth.to_vec()]);
        assert_eq!(misclassification_prob(&draws, &truth, 0.5).unwrap(), vec![0.0; 3]);
        assert_eq!(interval_widths(&draws), vec![0.0; 3]);
    }

    #[test]
    fn single_opposite_draw() {
        let draws = Matrix::from_rows(&[vec![0.7]]);
        assert_eq!(misclassification_prob(&draws, &[0.3], 0.5).unwrap(), vec![1.0]);
    }
}

use serde::Serialize;

use crate::metrics::{interval_widths, is_misclassified, CalibrationCurve};
use crate::numeric::Matrix;

/// Per-individual prediction instability for one (n, strategy) block.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InstabilityData {
    /// Tracked population rows.
    pub tracked: Vec<usize>,
    /// True risks of the tracked rows under each reference model.
    pub truth: Vec<Vec<f64>>,
    /// Iteration of each successful draw.
    pub draw_ids: Vec<usize>,
    /// Reference model of each successful draw.
    pub draw_refs: Vec<usize>,
    /// Estimated risks, one row per draw, one column per tracked row.
    pub predictions: Vec<Vec<f64>>,
    /// `(iteration, curve)` for the first emitted calibration curves.
    pub curves: Vec<(usize, CalibrationCurve)>,
    /// 95% interval width per tracked row; empty when there are no draws.
    pub widths: Vec<f64>,
    /// `(threshold, probability per tracked row)`; each draw is compared
    /// with the truth of its own reference model.
    pub misclassification: Vec<(f64, Vec<f64>)>,
}

#[allow(clippy::too_many_arguments)]
pub fn emit_instability(
    tracked: &[usize],
    truth: &[Vec<f64>],
    draw_ids: &[usize],
    draw_refs: &[usize],
    predictions: &[Vec<f64>],
    mut curves: Vec<(usize, CalibrationCurve)>,
    thresholds: &[f64],
    curves_emitted: usize,
) -> InstabilityData {
    curves.truncate(curves_emitted);
    let draws = predictions.len();
    let widths = if draws == 0 {
        Vec::new()
    } else {
        let flat: Vec<f64> = predictions.iter().flatten().copied().collect();
        interval_widths(&Matrix::new(draws, tracked.len(), flat))
    };
    let misclassification = thresholds
        .iter()
        .map(|&t| {
            let probs = (0..tracked.len())
                .map(|j| {
                    if draws == 0 {
                        return f64::NAN;
                    }
                    let wrong = predictions
                        .iter()
                        .zip(draw_refs)
                        .filter(|(row, &r)| is_misclassified(row[j], truth[r][j], t))
                        .count();
                    wrong as f64 / draws as f64
                })
                .collect();
            (t, probs)
        })
        .collect();
    InstabilityData {
        tracked: tracked.to_vec(),
        truth: truth.to_vec(),
        draw_ids: draw_ids.to_vec(),
        draw_refs: draw_refs.to_vec(),
        predictions: predictions.to_vec(),
        curves,
        widths,
        misclassification,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::misclassification_prob;

    #[test]
    fn matches_metrics_for_single_reference() {
        let truth = vec![vec![0.2, 0.55, 0.7]];
        let preds = vec![vec![0.3, 0.45, 0.8], vec![0.6, 0.5, 0.4], vec![0.1, 0.6, 0.9]];
        let d = emit_instability(&[4, 8, 9], &truth, &[0, 1, 2], &[0, 0, 0], &preds, vec![], &[0.5], 200);
        let m = Matrix::from_rows(&preds);
        assert_eq!(d.widths, interval_widths(&m));
        assert_eq!(d.misclassification[0].1, misclassification_prob(&m, &truth[0], 0.5).unwrap());
    }

    #[test]
    fn curves_are_truncated() {
        let c = CalibrationCurve {
            grid: vec![0.5],
            observed: vec![0.5],
            knots: vec![],
        };
        let curves: Vec<_> = (0..1000).map(|k| (k, c.clone())).collect();
        let d = emit_instability(&[0], &[vec![0.5]], &[], &[], &[], curves, &[0.5], 200);
        assert_eq!(d.curves.len(), 200);
        assert!(d.widths.is_empty());
    }
}

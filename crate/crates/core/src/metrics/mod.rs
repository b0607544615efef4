//! Performance and degradation statistics of one fitted model in the target
//! population, overall and within subgroups.

mod accuracy;
mod calibration;
mod concordance;
mod decision;
mod instability;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use accuracy::{prediction_error, r2_measures};
pub use calibration::{calibration_curve, calibration_fit, CalibrationCurve, CalibrationFit, CURVE_GRID_POINTS};
pub use concordance::c_statistic;
pub use decision::{net_benefit, treat_all_net_benefit, value_of_information, ValueOfInformation, Winner};
pub use instability::{interval_widths, is_misclassified, misclassification_prob, MIN_INTERVAL_DRAWS};

use crate::error::{check_len, Error, Result};
use crate::popgen::Subgroups;

/// Names of threshold-independent metrics, in reporting order.
pub const SCALAR_METRICS: [&str; 8] = [
    "c_stat",
    "c_degradation",
    "cal_slope",
    "cal_intercept",
    "mape",
    "rmspe",
    "r2_cox_snell",
    "r2_nagelkerke",
];

/// Names of per-threshold metrics, in reporting order.
pub const THRESHOLD_METRICS: [&str; 11] = [
    "nb_model",
    "nb_max",
    "nb_treat_all",
    "nb_treat_none",
    "nb_degradation",
    "rvsi_model",
    "nb_winner",
    "rvsi_winner",
    "winner_is_model",
    "winner_is_treat_all",
    "winner_is_treat_none",
];

/// Decision-analytic metrics at one risk threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdMetrics {
    pub threshold: f64,
    pub nb_model: f64,
    pub nb_max: f64,
    pub nb_treat_all: f64,
    pub nb_treat_none: f64,
    /// `nb_max − nb_model` (the draw's contribution to EVSI).
    pub nb_degradation: f64,
    pub rvsi_model: Option<f64>,
    pub winner: Winner,
    pub nb_winner: f64,
    pub rvsi_winner: Option<f64>,
}

impl ThresholdMetrics {
    pub fn value(&self, metric: &str) -> Option<f64> {
        let indicator = |w: Winner| Some(if self.winner == w { 1.0 } else { 0.0 });
        match metric {
            "nb_model" => Some(self.nb_model),
            "nb_max" => Some(self.nb_max),
            "nb_treat_all" => Some(self.nb_treat_all),
            "nb_treat_none" => Some(self.nb_treat_none),
            "nb_degradation" => Some(self.nb_degradation),
            "rvsi_model" => self.rvsi_model,
            "nb_winner" => Some(self.nb_winner),
            "rvsi_winner" => self.rvsi_winner,
            "winner_is_model" => indicator(Winner::Model),
            "winner_is_treat_all" => indicator(Winner::TreatAll),
            "winner_is_treat_none" => indicator(Winner::TreatNone),
            _ => None,
        }
    }
}

/// All statistics of one fitted model evaluated on the target population.
/// `None` marks a metric that is undefined for this draw.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricDraw {
    pub c_stat: Option<f64>,
    pub c_degradation: Option<f64>,
    pub cal_slope: Option<f64>,
    pub cal_intercept: Option<f64>,
    pub mape: Option<f64>,
    pub rmspe: Option<f64>,
    pub r2_cox_snell: Option<f64>,
    pub r2_nagelkerke: Option<f64>,
    pub thresholds: Vec<ThresholdMetrics>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub subgroups: BTreeMap<String, MetricDraw>,
}

impl MetricDraw {
    pub fn scalar(&self, metric: &str) -> Option<f64> {
        match metric {
            "c_stat" => self.c_stat,
            "c_degradation" => self.c_degradation,
            "cal_slope" => self.cal_slope,
            "cal_intercept" => self.cal_intercept,
            "mape" => self.mape,
            "rmspe" => self.rmspe,
            "r2_cox_snell" => self.r2_cox_snell,
            "r2_nagelkerke" => self.r2_nagelkerke,
            _ => None,
        }
    }

    pub fn at_threshold(&self, threshold: f64) -> Option<&ThresholdMetrics> {
        self.thresholds.iter().find(|t| t.threshold == threshold)
    }
}

/// Reference-model performance needed for degradation metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferencePerformance {
    pub c_stat: Option<f64>,
    /// `(threshold, nb_max)` pairs.
    pub nb_max: Vec<(f64, f64)>,
}

impl ReferencePerformance {
    pub fn compute(true_risks: &[f64], outcomes: &[u8], thresholds: &[f64]) -> Self {
        Self {
            c_stat: c_statistic(true_risks, outcomes).ok(),
            nb_max: thresholds
                .iter()
                .map(|&t| (t, net_benefit(true_risks, outcomes, t)))
                .collect(),
        }
    }
}

/// Everything needed to evaluate one fitted model.
#[derive(Debug, Clone, Copy)]
pub struct EvaluationInputs<'a> {
    pub model_risks: &'a [f64],
    pub true_risks: &'a [f64],
    pub outcomes: &'a [u8],
    pub thresholds: &'a [f64],
    pub dev_outcomes: &'a [u8],
    pub dev_model_risks: &'a [f64],
}

impl EvaluationInputs<'_> {
    fn check(&self) -> Result<()> {
        check_len(self.outcomes.len(), self.model_risks.len())?;
        check_len(self.outcomes.len(), self.true_risks.len())?;
        check_len(self.dev_outcomes.len(), self.dev_model_risks.len())
    }
}

/// Evaluates all metrics overall. Winners are chosen on the development
/// sample and scored in the population.
pub fn evaluate(inputs: &EvaluationInputs<'_>, reference: &ReferencePerformance) -> Result<MetricDraw> {
    inputs.check()?;
    let winners: Vec<Winner> = inputs
        .thresholds
        .iter()
        .map(|&t| {
            Winner::select(
                net_benefit(inputs.dev_model_risks, inputs.dev_outcomes, t),
                treat_all_net_benefit(inputs.dev_outcomes, t),
            )
        })
        .collect();
    Ok(evaluate_with_winners(
        inputs.model_risks,
        inputs.true_risks,
        inputs.outcomes,
        inputs.thresholds,
        &winners,
        reference,
    ))
}

fn evaluate_with_winners(
    model_risks: &[f64],
    true_risks: &[f64],
    outcomes: &[u8],
    thresholds: &[f64],
    winners: &[Winner],
    reference: &ReferencePerformance,
) -> MetricDraw {
    let c_stat = c_statistic(model_risks, outcomes).ok();
    let calibration = calibration_fit(model_risks, outcomes).ok();
    let errors = prediction_error(model_risks, true_risks).ok();
    let r2 = r2_measures(model_risks, outcomes).ok();
    let thresholds = thresholds
        .iter()
        .zip(winners)
        .map(|(&t, &winner)| {
            let nb_model = net_benefit(model_risks, outcomes, t);
            let nb_max = reference
                .nb_max
                .iter()
                .find(|(rt, _)| *rt == t)
                .map_or_else(|| net_benefit(true_risks, outcomes, t), |(_, v)| *v);
            let nb_treat_all = treat_all_net_benefit(outcomes, t);
            let nb_winner = match winner {
                Winner::Model => nb_model,
                Winner::TreatAll => nb_treat_all,
                Winner::TreatNone => 0.0,
            };
            ThresholdMetrics {
                threshold: t,
                nb_model,
                nb_max,
                nb_treat_all,
                nb_treat_none: 0.0,
                nb_degradation: nb_max - nb_model,
                rvsi_model: decision::relative_value(nb_model, nb_max),
                winner,
                nb_winner,
                rvsi_winner: decision::relative_value(nb_winner, nb_max),
            }
        })
        .collect();
    MetricDraw {
        c_stat,
        c_degradation: c_stat.zip(reference.c_stat).map(|(m, r)| m - r),
        cal_slope: calibration.map(|c| c.slope),
        cal_intercept: calibration.map(|c| c.intercept),
        mape: errors.map(|e| e.0),
        rmspe: errors.map(|e| e.1),
        r2_cox_snell: r2.map(|r| r.0),
        r2_nagelkerke: r2.map(|r| r.1),
        thresholds,
        subgroups: BTreeMap::new(),
    }
}

/// Row indices of each subgroup level.
pub fn subgroup_partition(subgroups: &Subgroups) -> Result<Vec<Vec<usize>>> {
    let mut parts = vec![Vec::new(); subgroups.levels.len()];
    for (i, &code) in subgroups.codes.iter().enumerate() {
        parts
            .get_mut(code as usize)
            .ok_or_else(|| Error::UnknownSubgroup(code.to_string()))?
            .push(i);
    }
    Ok(parts)
}

/// Reference performance within each subgroup level.
pub fn subgroup_reference(
    true_risks: &[f64],
    outcomes: &[u8],
    thresholds: &[f64],
    subgroups: &Subgroups,
) -> Result<Vec<ReferencePerformance>> {
    Ok(subgroup_partition(subgroups)?
        .iter()
        .map(|rows| {
            let (t, y) = gather(rows, true_risks, outcomes);
            ReferencePerformance::compute(&t, &y, thresholds)
        })
        .collect())
}

fn gather(rows: &[usize], risks: &[f64], outcomes: &[u8]) -> (Vec<f64>, Vec<u8>) {
    (
        rows.iter().map(|&i| risks[i]).collect(),
        rows.iter().map(|&i| outcomes[i]).collect(),
    )
}

/// Recomputes every metric within each subgroup. Class-dependent metrics
/// are missing for subgroups with a single outcome class. The decision
/// winner is the one chosen on the whole development sample.
pub fn subgroup_report(
    inputs: &EvaluationInputs<'_>,
    subgroups: &Subgroups,
    reference: Option<&[ReferencePerformance]>,
) -> Result<BTreeMap<String, MetricDraw>> {
    inputs.check()?;
    check_len(inputs.outcomes.len(), subgroups.codes.len())?;
    let parts = subgroup_partition(subgroups)?;
    let computed;
    let reference = match reference {
        Some(r) => {
            check_len(parts.len(), r.len())?;
            r
        }
        None => {
            computed = subgroup_reference(inputs.true_risks, inputs.outcomes, inputs.thresholds, subgroups)?;
            &computed
        }
    };
    let winners: Vec<Winner> = evaluate(inputs, &ReferencePerformance { c_stat: None, nb_max: vec![] })?
        .thresholds
        .iter()
        .map(|t| t.winner)
        .collect();
    let mut out = BTreeMap::new();
    for ((level, rows), reference) in subgroups.levels.iter().zip(&parts).zip(reference) {
        if rows.is_empty() {
            continue;
        }
        let (model, y) = gather(rows, inputs.model_risks, inputs.outcomes);
        let truth: Vec<f64> = rows.iter().map(|&i| inputs.true_risks[i]).collect();
        out.insert(
            level.clone(),
            evaluate_with_winners(&model, &truth, &y, inputs.thresholds, &winners, reference),
        );
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_subgroup_equals_overall() {
        let model = [0.2, 0.6, 0.7, 0.4, 0.9, 0.1];
        let truth = [0.3, 0.5, 0.8, 0.3, 0.7, 0.2];
        let y = [0, 1, 1, 0, 1, 0];
        let inputs = EvaluationInputs {
            model_risks: &model,
            true_risks: &truth,
            outcomes: &y,
            thresholds: &[0.5],
            dev_outcomes: &y,
            dev_model_risks: &model,
        };
        let reference = ReferencePerformance::compute(&truth, &y, &[0.5]);
        let overall = evaluate(&inputs, &reference).unwrap();
        let sg = Subgroups::from_labels("all", &vec!["x".to_string(); 6]);
        let by_group = subgroup_report(&inputs, &sg, None).unwrap();
        assert_eq!(by_group["x"], overall);
    }

    #[test]
    fn unknown_code_is_an_error() {
        let sg = Subgroups {
            column: "g".into(),
            levels: vec!["a".into()],
            codes: vec![0, 3],
        };
        assert!(matches!(subgroup_partition(&sg), Err(Error::UnknownSubgroup(_))));
    }
}

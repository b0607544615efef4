use serde::{Deserialize, Serialize};

use crate::error::{check_len, Result};

/// `NB = TP/n − (FP/n)·t/(1−t)`, treating everyone with risk ≥ t.
pub fn net_benefit(risks: &[f64], outcomes: &[u8], threshold: f64) -> f64 {
    let (mut tp, mut fp) = (0usize, 0usize);
    for (&p, &y) in risks.iter().zip(outcomes) {
        if p >= threshold {
            if y == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
        }
    }
    nb_from_counts(tp, fp, outcomes.len(), threshold)
}

#[inline]
fn nb_from_counts(tp: usize, fp: usize, n: usize, threshold: f64) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let odds = threshold / (1.0 - threshold);
    (tp as f64 - fp as f64 * odds) / n as f64
}

/// Net benefit of treating everyone: `prevalence − (1 − prevalence)·t/(1−t)`.
pub fn treat_all_net_benefit(outcomes: &[u8], threshold: f64) -> f64 {
    let events = outcomes.iter().filter(|&&y| y == 1).count();
    nb_from_counts(events, outcomes.len() - events, outcomes.len(), threshold)
}

/// Decision strategy with the highest net benefit in the development sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Winner {
    Model,
    TreatAll,
    TreatNone,
}

impl Winner {
    pub fn as_str(self) -> &'static str {
        match self {
            Winner::Model => "model",
            Winner::TreatAll => "treat_all",
            Winner::TreatNone => "treat_none",
        }
    }

    /// Argmax over (model, treat all, treat none); ties resolve in that order.
    pub fn select(nb_model: f64, nb_treat_all: f64) -> Self {
        if nb_model >= nb_treat_all && nb_model >= 0.0 {
            Winner::Model
        } else if nb_treat_all >= 0.0 {
            Winner::TreatAll
        } else {
            Winner::TreatNone
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueOfInformation {
    pub nb_model: f64,
    pub nb_max: f64,
    pub nb_treat_all: f64,
    /// `100·nb_model/nb_max`; `None` when `nb_max ≤ 0`.
    pub rvsi_model: Option<f64>,
    pub winner: Winner,
    pub nb_winner: f64,
    pub rvsi_winner: Option<f64>,
}

pub(crate) fn relative_value(nb: f64, nb_max: f64) -> Option<f64> {
    (nb_max > 0.0).then(|| 100.0 * nb / nb_max)
}

/// Net benefit of the fitted model against the reference maximum, and of the
/// strategy that wins in the development sample.
pub fn value_of_information(
    model_risks: &[f64],
    true_risks: &[f64],
    outcomes: &[u8],
    dev_outcomes: &[u8],
    dev_model_risks: &[f64],
    threshold: f64,
) -> Result<ValueOfInformation> {
    check_len(outcomes.len(), model_risks.len())?;
    check_len(outcomes.len(), true_risks.len())?;
    check_len(dev_outcomes.len(), dev_model_risks.len())?;
    let nb_model = net_benefit(model_risks, outcomes, threshold);
    let nb_max = net_benefit(true_risks, outcomes, threshold);
    let nb_treat_all = treat_all_net_benefit(outcomes, threshold);
    let winner = Winner::select(
        net_benefit(dev_model_risks, dev_outcomes, threshold),
        treat_all_net_benefit(dev_outcomes, threshold),
    );
    let nb_winner = match winner {
        Winner::Model => nb_model,
        Winner::TreatAll => nb_treat_all,
        Winner::TreatNone => 0.0,
    };
    Ok(ValueOfInformation {
        nb_model,
        nb_max,
        nb_treat_all,
        rvsi_model: relative_value(nb_model, nb_max),
        winner,
        nb_winner,
        rvsi_winner: relative_value(nb_winner, nb_max),
    })
}

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{run_scenario, Scenario, ScenarioOutput, SummaryReport};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, Role};

/// A case-mix variant: the base case-mix plus `noise_columns` independent
/// standard-normal candidates with zero reference weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Variant {
    pub label: String,
    #[serde(default)]
    pub noise_columns: usize,
}

impl Variant {
    pub fn base() -> Self {
        Self {
            label: "base".into(),
            noise_columns: 0,
        }
    }
}

/// Smallest configured sample size meeting every criterion, per strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinimalN {
    pub variant: String,
    pub strategy: String,
    pub n: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct SweepOutput {
    pub runs: Vec<(Variant, ScenarioOutput)>,
    /// Empty when no criteria are configured.
    pub minimal_n: Vec<MinimalN>,
}

/// Per strategy, the smallest `n` in `n_values` whose overall assurance
/// criteria are all met; no interpolation between configured values.
pub fn minimal_n(report: &SummaryReport, n_values: &[usize], strategies: &[String]) -> Vec<MinimalN> {
    let mut sorted = n_values.to_vec();
    sorted.sort_unstable();
    strategies
        .iter()
        .map(|s| MinimalN {
            variant: report.variant.clone().unwrap_or_else(|| "base".into()),
            strategy: s.clone(),
            n: sorted
                .iter()
                .copied()
                .find(|&n| report.block(n, s).is_some_and(|b| b.meets_all())),
        })
        .collect()
}

pub fn sweep(scenario: &Scenario, variants: &[Variant]) -> Result<SweepOutput> {
    let base = [Variant::base()];
    let variants = if variants.is_empty() { &base[..] } else { variants };
    let mut labels: Vec<&str> = variants.iter().map(|v| v.label.as_str()).collect();
    labels.sort_unstable();
    if labels.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Config("variant labels must be unique".into()));
    }
    let strategies: Vec<String> = scenario.config.strategies.iter().map(|s| s.label()).collect();
    let mut runs = Vec::new();
    let mut verdicts = Vec::new();
    for v in variants {
        let s = if v.noise_columns == 0 {
            scenario.clone()
        } else {
            let casemix = scenario
                .casemix
                .with_noise_columns(v.noise_columns, derive_seed(scenario.config.master_seed, 0, Role::Noise))?;
            Scenario {
                config: scenario.config.clone(),
                reference: scenario.reference.extended_to(&casemix)?,
                casemix: Arc::new(casemix),
            }
        };
        let mut out = run_scenario(&s)?;
        out.report.variant = Some(v.label.clone());
        if !scenario.config.criteria.is_empty() {
            verdicts.extend(minimal_n(&out.report, &scenario.config.n_values, &strategies));
        }
        runs.push((v.clone(), out));
    }
    Ok(SweepOutput {
        runs,
        minimal_n: verdicts,
    })
}

use std::sync::Arc;

use rand::Rng;

use super::casemix::CaseMix;
use super::reference::{reference_risks, ReferenceModel};
use crate::error::{Error, Result};
use crate::rng::{child_seed, rng_from_seed};

/// Populations smaller than this are accepted with a warning.
pub const MIN_POPULATION_ROWS: usize = 100_000;

/// Large evaluation population: case-mix, true risks and one outcome
/// realisation.
#[derive(Debug, Clone)]
pub struct TargetPopulation {
    pub casemix: Arc<CaseMix>,
    pub true_risk: Vec<f64>,
    pub outcome: Vec<u8>,
    pub warnings: Vec<String>,
}

impl TargetPopulation {
    pub fn len(&self) -> usize {
        self.outcome.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcome.is_empty()
    }

    pub fn prevalence(&self) -> f64 {
        self.outcome.iter().map(|&y| y as usize).sum::<usize>() as f64 / self.len() as f64
    }
}

/// A development dataset of `n` individuals. May be degenerate (one outcome
/// class); fitting operations decide how to handle that.
#[derive(Debug, Clone)]
pub struct DevelopmentSample {
    pub casemix: CaseMix,
    pub outcome: Vec<u8>,
    pub seed_id: u64,
}

impl DevelopmentSample {
    pub fn new(casemix: CaseMix, outcome: Vec<u8>, seed_id: u64) -> Result<Self> {
        crate::error::check_len(casemix.n_rows(), outcome.len())?;
        if outcome.iter().any(|&y| y > 1) {
            return Err(Error::InvalidArgument("outcomes must be 0 or 1".into()));
        }
        Ok(Self {
            casemix,
            outcome,
            seed_id,
        })
    }

    pub fn len(&self) -> usize {
        self.outcome.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcome.is_empty()
    }

    pub fn events(&self) -> usize {
        self.outcome.iter().map(|&y| y as usize).sum()
    }

    pub fn is_degenerate(&self) -> bool {
        let e = self.events();
        e == 0 || e == self.len()
    }
}

/// Independent Bernoulli draws, one per risk.
pub fn sample_outcomes(risks: &[f64], rng_seed: u64) -> Vec<u8> {
    let mut rng = rng_from_seed(rng_seed);
    risks
        .iter()
        .map(|&p| u8::from(rng.random::<f64>() < p))
        .collect()
}

pub fn build_population(
    model: &ReferenceModel,
    casemix: impl Into<Arc<CaseMix>>,
    rng_seed: u64,
) -> Result<TargetPopulation> {
    let casemix = casemix.into();
    let true_risk = reference_risks(model, &casemix)?;
    let outcome = sample_outcomes(&true_risk, rng_seed);
    let mut warnings = Vec::new();
    if casemix.n_rows() < MIN_POPULATION_ROWS {
        warnings.push(format!(
            "target population has {} rows; at least {MIN_POPULATION_ROWS} are recommended",
            casemix.n_rows()
        ));
    }
    Ok(TargetPopulation {
        casemix,
        true_risk,
        outcome,
        warnings,
    })
}

/// Samples `n` rows without replacement from `source` and generates fresh
/// outcomes from the reference model.
pub fn draw_sample(
    source: &CaseMix,
    model: &ReferenceModel,
    n: usize,
    rng_seed: u64,
) -> Result<DevelopmentSample> {
    if n > source.n_rows() {
        return Err(Error::InvalidArgument(format!(
            "sample size {n} exceeds the {} source rows",
            source.n_rows()
        )));
    }
    if n < 2 {
        return Err(Error::InvalidArgument("sample size must be at least 2".into()));
    }
    let mut rng = rng_from_seed(child_seed(rng_seed, 0));
    let idx = rand::seq::index::sample(&mut rng, source.n_rows(), n).into_vec();
    let casemix = source.select_rows(&idx);
    let risks = reference_risks(model, &casemix)?;
    let outcome = sample_outcomes(&risks, child_seed(rng_seed, 1));
    DevelopmentSample::new(casemix, outcome, rng_seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::popgen::{synthesize_casemix, Marginal, MarginalColumn, MarginalSpec};

    fn casemix(n: usize) -> CaseMix {
        let spec = MarginalSpec {
            columns: vec![MarginalColumn {
                name: "x".into(),
                dist: Marginal::Normal { mean: 0.0, sd: 1.0 },
            }],
            noise_extra: 0,
        };
        synthesize_casemix(&spec, n, 11).unwrap()
    }

    #[test]
    fn near_certain_risks_give_all_events() {
        let y = sample_outcomes(&vec![1.0 - 1e-15; 10_000], 4);
        assert!(y.iter().all(|&v| v == 1));
    }

    #[test]
    fn event_fraction_near_risk_and_deterministic() {
        let y = sample_outcomes(&vec![0.68; 100_000], 8);
        let frac = y.iter().map(|&v| v as f64).sum::<f64>() / y.len() as f64;
        assert!((frac - 0.68).abs() < 0.006);
        assert_eq!(y, sample_outcomes(&vec![0.68; 100_000], 8));
    }

    #[test]
    fn population_is_composition_and_warns_when_small() {
        let cm = casemix(50_000);
        let m = ReferenceModel::new(0.2, 1.0, vec![0.7], cm.column_names()).unwrap();
        let pop = build_population(&m, cm.clone(), 21).unwrap();
        let risks = reference_risks(&m, &cm).unwrap();
        assert_eq!(pop.true_risk, risks);
        assert_eq!(pop.outcome, sample_outcomes(&risks, 21));
        assert_eq!(pop.warnings.len(), 1);
    }

    #[test]
    fn draw_sample_sizes_and_seed_dependence() {
        let cm = casemix(10_000);
        let m = ReferenceModel::new(0.75, 1.0, vec![0.5], cm.column_names()).unwrap();
        let a = draw_sample(&cm, &m, 456, 1).unwrap();
        let b = draw_sample(&cm, &m, 456, 2).unwrap();
        assert_eq!(a.len(), 456);
        assert_ne!(a.casemix.values(), b.casemix.values());
        assert!(draw_sample(&cm, &m, 10_001, 1).is_err());
    }
}

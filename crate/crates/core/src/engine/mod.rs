//! Scenario orchestration: repeated development samples, fits and
//! evaluations on a shared target population, with summaries, assurance
//! probabilities, instability outputs and sample-size sweeps.

mod instability;
mod output;
mod summary;
mod sweep;

use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use crate::metrics::MetricDraw;
pub use instability::{emit_instability, InstabilityData};
pub use output::{write_draws_csv, write_instability_csvs, write_report_json, write_summary_csv, OutputOptions};
pub(crate) use summary::ReportMeta;
pub use summary::{
    summarize, AssuranceSummary, BlockSummary, CriteriaSpec, Criterion, MetricSummary, SummaryReport,
};
pub use sweep::{minimal_n, sweep, MinimalN, SweepOutput, Variant};

use crate::devstrat::{predict_risks, McmcConfig, Strategy};
use crate::error::{Error, Result};
use crate::metrics::{
    calibration_curve, evaluate, subgroup_reference, subgroup_report, CalibrationCurve, EvaluationInputs,
    ReferencePerformance, SCALAR_METRICS, THRESHOLD_METRICS,
};
use crate::popgen::{build_population, draw_sample, CaseMix, ReferenceModel, TargetPopulation};
use crate::rng::{derive_seed, stream, Role};

/// Mixtures must have selection probabilities summing to 1 within this.
pub const MIXTURE_TOLERANCE: f64 = 1e-9;
/// Fewer iterations than this draw a warning.
pub const RECOMMENDED_ITERATIONS: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceMixture {
    pub models: Vec<ReferenceModel>,
    pub probabilities: Vec<f64>,
}

/// The working truth: one reference model, or a mixture sampled per
/// iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceSpec {
    Single(ReferenceModel),
    Mixture(ReferenceMixture),
}

impl ReferenceSpec {
    pub fn models(&self) -> &[ReferenceModel] {
        match self {
            ReferenceSpec::Single(m) => std::slice::from_ref(m),
            ReferenceSpec::Mixture(m) => &m.models,
        }
    }

    pub fn probabilities(&self) -> Vec<f64> {
        match self {
            ReferenceSpec::Single(_) => vec![1.0],
            ReferenceSpec::Mixture(m) => m.probabilities.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let ReferenceSpec::Mixture(m) = self {
            if m.models.is_empty() || m.models.len() != m.probabilities.len() {
                return Err(Error::Config(
                    "mixture needs one selection probability per reference model".into(),
                ));
            }
            if m.probabilities.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
                return Err(Error::Config("mixture probabilities must be non-negative".into()));
            }
            let total: f64 = m.probabilities.iter().sum();
            if (total - 1.0).abs() > MIXTURE_TOLERANCE {
                return Err(Error::Config(format!("mixture probabilities sum to {total}, not 1")));
            }
        }
        Ok(())
    }

    /// Index of the model selected by a uniform variate `u`.
    pub fn select(&self, u: f64) -> usize {
        let probs = self.probabilities();
        let mut acc = 0.0;
        for (i, p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        // Guard against rounding in the cumulative sum.
        probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
    }

    /// The same spec with zero weights for columns added to `casemix`.
    pub fn extended_to(&self, casemix: &CaseMix) -> Result<Self> {
        Ok(match self {
            ReferenceSpec::Single(m) => ReferenceSpec::Single(m.extended_to(casemix)?),
            ReferenceSpec::Mixture(m) => ReferenceSpec::Mixture(ReferenceMixture {
                models: m.models.iter().map(|r| r.extended_to(casemix)).collect::<Result<_>>()?,
                probabilities: m.probabilities.clone(),
            }),
        })
    }
}

fn default_iterations() -> usize {
    RECOMMENDED_ITERATIONS
}

fn default_thresholds() -> Vec<f64> {
    vec![0.5]
}

fn default_instability_sample() -> usize {
    2000
}

fn default_curves() -> usize {
    200
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub n_values: Vec<usize>,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    pub strategies: Vec<Strategy>,
    #[serde(default = "default_thresholds")]
    pub thresholds: Vec<f64>,
    pub master_seed: u64,
    #[serde(default)]
    pub criteria: CriteriaSpec,
    /// Individuals tracked for per-individual instability outputs.
    #[serde(default = "default_instability_sample")]
    pub instability_sample: usize,
    /// Calibration curves kept, in iteration order.
    #[serde(default = "default_curves")]
    pub curves_emitted: usize,
    #[serde(default)]
    pub mcmc: McmcConfig,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_values.is_empty() {
            return Err(Error::Config("at least one sample size is required".into()));
        }
        if let Some(n) = self.n_values.iter().find(|&&n| n < 2) {
            return Err(Error::Config(format!("sample size {n} is below 2")));
        }
        if self.iterations < 1 {
            return Err(Error::Config("iterations must be at least 1".into()));
        }
        if self.strategies.is_empty() {
            return Err(Error::Config("at least one strategy is required".into()));
        }
        let mut labels: Vec<String> = self.strategies.iter().map(Strategy::label).collect();
        labels.sort();
        if labels.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("strategy labels must be unique".into()));
        }
        if self.thresholds.is_empty() {
            return Err(Error::Config("at least one risk threshold is required".into()));
        }
        for (i, t) in self.thresholds.iter().enumerate() {
            if !(*t > 0.0 && *t < 1.0) {
                return Err(Error::Config(format!("threshold {t} must lie in (0, 1)")));
            }
            if self.thresholds[..i].contains(t) {
                return Err(Error::Config(format!("threshold {t} is repeated")));
            }
        }
        self.mcmc.validate()?;
        self.criteria.validate(&self.thresholds)
    }

    pub fn warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        if self.iterations < RECOMMENDED_ITERATIONS {
            w.push(format!(
                "{} iterations requested; at least {RECOMMENDED_ITERATIONS} are recommended",
                self.iterations
            ));
        }
        w
    }
}

/// A configured scenario with its case-mix and reference.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub casemix: Arc<CaseMix>,
    pub reference: ReferenceSpec,
}

/// Target populations and reference performance, one per reference model,
/// over a shared case-mix.
#[derive(Debug, Clone)]
pub struct PopulationContext {
    pub casemix: Arc<CaseMix>,
    pub reference: ReferenceSpec,
    pub populations: Vec<TargetPopulation>,
    pub performance: Vec<ReferencePerformance>,
    pub subgroup_performance: Vec<Option<Vec<ReferencePerformance>>>,
    /// Population rows tracked for instability outputs, ascending.
    pub tracked: Vec<usize>,
    pub thresholds: Vec<f64>,
    pub warnings: Vec<String>,
}

impl PopulationContext {
    pub fn build(
        casemix: Arc<CaseMix>,
        reference: ReferenceSpec,
        thresholds: &[f64],
        master_seed: u64,
        instability_sample: usize,
    ) -> Result<Self> {
        reference.validate()?;
        let populations: Vec<TargetPopulation> = reference
            .models()
            .iter()
            .enumerate()
            .map(|(m, model)| build_population(model, Arc::clone(&casemix), derive_seed(master_seed, m as u64, Role::Population)))
            .collect::<Result<_>>()?;
        let performance = populations
            .iter()
            .map(|p| ReferencePerformance::compute(&p.true_risk, &p.outcome, thresholds))
            .collect();
        let subgroup_performance = populations
            .iter()
            .map(|p| {
                casemix
                    .subgroups()
                    .map(|g| subgroup_reference(&p.true_risk, &p.outcome, thresholds, g))
                    .transpose()
            })
            .collect::<Result<_>>()?;
        let rows = casemix.n_rows();
        let tracked = if instability_sample >= rows {
            (0..rows).collect()
        } else {
            let mut rng = stream(master_seed, 0, Role::Tracking);
            let mut idx = rand::seq::index::sample(&mut rng, rows, instability_sample).into_vec();
            idx.sort_unstable();
            idx
        };
        let mut warnings: Vec<String> = populations.first().map(|p| p.warnings.clone()).unwrap_or_default();
        warnings.dedup();
        Ok(Self {
            casemix,
            reference,
            populations,
            performance,
            subgroup_performance,
            tracked,
            thresholds: thresholds.to_vec(),
            warnings,
        })
    }

    /// Reference model used in iteration `k`.
    pub fn reference_for(&self, master_seed: u64, k: usize) -> usize {
        match self.reference {
            ReferenceSpec::Single(_) => 0,
            ReferenceSpec::Mixture(_) => {
                let u: f64 = stream(master_seed, k as u64, Role::Mixture).random();
                self.reference.select(u)
            }
        }
    }
}

/// One fitted model's predictions in one iteration.
#[derive(Debug, Clone)]
pub struct Prediction {
    pub population_risks: Vec<f64>,
    pub dev_outcomes: Vec<u8>,
    pub dev_risks: Vec<f64>,
    pub converged: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DrawRecord {
    pub iteration: usize,
    pub reference_index: usize,
    /// Missing when the fit failed.
    pub metrics: Option<MetricDraw>,
    pub converged: Option<bool>,
    pub error: Option<String>,
}

/// Iteration-level metric draws of one strategy at one sample size.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricDraws {
    pub n: usize,
    pub strategy: String,
    pub records: Vec<DrawRecord>,
}

impl MetricDraws {
    /// Values of `metric` per record; `threshold` selects per-threshold
    /// metrics and `subgroup` a subgroup level.
    pub fn values(&self, metric: &str, threshold: Option<f64>, subgroup: Option<&str>) -> Vec<Option<f64>> {
        self.records
            .iter()
            .map(|r| {
                let draw = r.metrics.as_ref()?;
                let draw = match subgroup {
                    Some(level) => draw.subgroups.get(level)?,
                    None => draw,
                };
                match threshold {
                    Some(t) => draw.at_threshold(t)?.value(metric),
                    None => draw.scalar(metric),
                }
                .filter(|v| v.is_finite())
            })
            .collect()
    }

    pub fn thresholds(&self) -> Vec<f64> {
        self.records
            .iter()
            .find_map(|r| r.metrics.as_ref())
            .map(|m| m.thresholds.iter().map(|t| t.threshold).collect())
            .unwrap_or_default()
    }

    pub fn subgroup_levels(&self) -> Vec<String> {
        let mut levels = std::collections::BTreeSet::new();
        for r in &self.records {
            if let Some(m) = &r.metrics {
                levels.extend(m.subgroups.keys().cloned());
            }
        }
        levels.into_iter().collect()
    }
}

/// Evaluation of one prediction, with its tracked-individual risks and
/// optional calibration curve.
pub(crate) struct Evaluated {
    pub record: DrawRecord,
    pub tracked_risks: Option<Vec<f64>>,
    pub curve: Option<CalibrationCurve>,
}

pub(crate) fn evaluate_prediction(
    ctx: &PopulationContext,
    iteration: usize,
    reference_index: usize,
    prediction: Result<Prediction>,
    want_curve: bool,
) -> Evaluated {
    let failed = |e: Error| Evaluated {
        record: DrawRecord {
            iteration,
            reference_index,
            metrics: None,
            converged: None,
            error: Some(e.to_string()),
        },
        tracked_risks: None,
        curve: None,
    };
    let pred = match prediction {
        Ok(p) => p,
        Err(e) => return failed(e),
    };
    let population = &ctx.populations[reference_index];
    let inputs = EvaluationInputs {
        model_risks: &pred.population_risks,
        true_risks: &population.true_risk,
        outcomes: &population.outcome,
        thresholds: &ctx.thresholds,
        dev_outcomes: &pred.dev_outcomes,
        dev_model_risks: &pred.dev_risks,
    };
    let mut draw = match evaluate(&inputs, &ctx.performance[reference_index]) {
        Ok(d) => d,
        Err(e) => return failed(e),
    };
    if let Some(groups) = ctx.casemix.subgroups() {
        match subgroup_report(&inputs, groups, ctx.subgroup_performance[reference_index].as_deref()) {
            Ok(s) => draw.subgroups = s,
            Err(e) => return failed(e),
        }
    }
    let curve = if want_curve {
        calibration_curve(&pred.population_risks, &population.outcome, 4).ok()
    } else {
        None
    };
    Evaluated {
        record: DrawRecord {
            iteration,
            reference_index,
            metrics: Some(draw),
            converged: pred.converged,
            error: None,
        },
        tracked_risks: Some(ctx.tracked.iter().map(|&i| pred.population_risks[i]).collect()),
        curve,
    }
}

#[derive(Debug, Clone)]
pub struct BlockOutput {
    pub n: usize,
    pub strategy: String,
    pub draws: MetricDraws,
    pub instability: InstabilityData,
}

#[derive(Debug, Clone)]
pub struct ScenarioOutput {
    pub blocks: Vec<BlockOutput>,
    pub report: SummaryReport,
}

/// Collects per-iteration evaluations (outer: iteration, inner: strategy)
/// into one block per strategy.
pub(crate) fn assemble_blocks(
    ctx: &PopulationContext,
    n: usize,
    labels: &[String],
    per_iteration: Vec<Vec<Evaluated>>,
    curves_emitted: usize,
) -> Vec<BlockOutput> {
    let mut columns: Vec<Vec<Evaluated>> = labels.iter().map(|_| Vec::with_capacity(per_iteration.len())).collect();
    for row in per_iteration {
        for (s, e) in row.into_iter().enumerate() {
            columns[s].push(e);
        }
    }
    labels
        .iter()
        .zip(columns)
        .map(|(label, evals)| {
            let mut records = Vec::with_capacity(evals.len());
            let mut draw_ids = Vec::new();
            let mut draw_refs = Vec::new();
            let mut rows = Vec::new();
            let mut curves = Vec::new();
            for e in evals {
                if let Some(r) = e.tracked_risks {
                    draw_ids.push(e.record.iteration);
                    draw_refs.push(e.record.reference_index);
                    rows.push(r);
                }
                if let Some(c) = e.curve {
                    if curves.len() < curves_emitted {
                        curves.push((e.record.iteration, c));
                    }
                }
                records.push(e.record);
            }
            let truth: Vec<Vec<f64>> = ctx
                .populations
                .iter()
                .map(|p| ctx.tracked.iter().map(|&i| p.true_risk[i]).collect())
                .collect();
            let instability = emit_instability(
                &ctx.tracked,
                &truth,
                &draw_ids,
                &draw_refs,
                &rows,
                curves,
                &ctx.thresholds,
                curves_emitted,
            );
            BlockOutput {
                n,
                strategy: label.clone(),
                draws: MetricDraws {
                    n,
                    strategy: label.clone(),
                    records,
                },
                instability,
            }
        })
        .collect()
}

fn fit_and_predict(
    strategy: &Strategy,
    sample: &crate::popgen::DevelopmentSample,
    casemix: &CaseMix,
    mcmc: &McmcConfig,
    seed: u64,
) -> Result<Prediction> {
    let model = strategy.config.fit(sample, mcmc, seed)?;
    Ok(Prediction {
        population_risks: predict_risks(&model, casemix)?,
        dev_risks: predict_risks(&model, &sample.casemix)?,
        dev_outcomes: sample.outcome.clone(),
        converged: Some(model.diagnostics.converged),
    })
}

/// Runs every configured sample size. Output is independent of the rayon
/// worker count.
pub fn run_scenario(scenario: &Scenario) -> Result<ScenarioOutput> {
    let config = &scenario.config;
    config.validate()?;
    let ctx = PopulationContext::build(
        Arc::clone(&scenario.casemix),
        scenario.reference.clone(),
        &config.thresholds,
        config.master_seed,
        config.instability_sample,
    )?;
    for model in ctx.reference.models() {
        model.check_alignment(&ctx.casemix)?;
    }
    let labels: Vec<String> = config.strategies.iter().map(Strategy::label).collect();
    let seed = config.master_seed;
    let mut blocks = Vec::new();
    for &n in &config.n_values {
        if n > ctx.casemix.n_rows() {
            return Err(Error::Config(format!(
                "sample size {n} exceeds the {} case-mix rows",
                ctx.casemix.n_rows()
            )));
        }
        let per_iteration: Vec<Vec<Evaluated>> = (0..config.iterations)
            .into_par_iter()
            .map(|k| {
                let r = ctx.reference_for(seed, k);
                let sample = draw_sample(&ctx.casemix, &ctx.reference.models()[r], n, derive_seed(seed, k as u64, Role::Sample));
                let fit_seed = derive_seed(seed, k as u64, Role::Fit);
                config
                    .strategies
                    .iter()
                    .enumerate()
                    .map(|(s, strategy)| {
                        let prediction = match &sample {
                            Ok(sample) => fit_and_predict(
                                strategy,
                                sample,
                                &ctx.casemix,
                                &config.mcmc,
                                derive_seed(fit_seed, s as u64, Role::Fit),
                            ),
                            Err(e) => Err(Error::InvalidArgument(e.to_string())),
                        };
                        evaluate_prediction(&ctx, k, r, prediction, k < config.curves_emitted)
                    })
                    .collect()
            })
            .collect();
        blocks.extend(assemble_blocks(&ctx, n, &labels, per_iteration, config.curves_emitted));
    }
    let meta = ReportMeta {
        master_seed: config.master_seed,
        iterations: config.iterations,
        criteria: &config.criteria,
        warnings: config.warnings(),
    };
    let report = SummaryReport::from_blocks(&blocks, meta, &ctx, None);
    Ok(ScenarioOutput { blocks, report })
}

/// All metric names known to summaries and criteria.
pub fn metric_names() -> impl Iterator<Item = &'static str> {
    SCALAR_METRICS.iter().chain(THRESHOLD_METRICS.iter()).copied()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::devstrat::StrategyConfig;
    use crate::popgen::Column;

    pub(crate) fn toy_scenario(iterations: usize, rows: usize) -> Scenario {
        use rand_distr::{Distribution, StandardNormal};
        let mut rng = stream(5, 0, Role::Synthesis);
        let data: Vec<f64> = (0..rows * 2).map(|_| StandardNormal.sample(&mut rng)).collect();
        let casemix = CaseMix::new(
            vec![Column::continuous("a"), Column::continuous("b")],
            crate::numeric::Matrix::new(rows, 2, data),
            None,
        )
        .unwrap();
        let model = ReferenceModel::new(0.3, 1.0, vec![1.0, -0.7], vec!["a".into(), "b".into()]).unwrap();
        Scenario {
            config: ScenarioConfig {
                n_values: vec![200],
                iterations,
                strategies: vec![Strategy::new(StrategyConfig::mle())],
                thresholds: vec![0.5],
                master_seed: 11,
                criteria: CriteriaSpec::default(),
                instability_sample: 50,
                curves_emitted: 3,
                mcmc: McmcConfig::default(),
            },
            casemix: Arc::new(casemix),
            reference: ReferenceSpec::Single(model),
        }
    }

    #[test]
    fn reruns_are_identical() {
        let s = toy_scenario(2, 3000);
        let a = run_scenario(&s).unwrap();
        let b = run_scenario(&s).unwrap();
        assert_eq!(a.blocks[0].draws, b.blocks[0].draws);
        assert_eq!(a.report, b.report);
    }

    #[test]
    fn worker_count_does_not_matter() {
        let s = toy_scenario(8, 3000);
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| run_scenario(&s)).unwrap();
        let b = four.install(|| run_scenario(&s)).unwrap();
        assert_eq!(a.blocks[0].draws, b.blocks[0].draws);
    }

    #[test]
    fn mixture_selection_frequencies() {
        let s = toy_scenario(1, 3000);
        let ReferenceSpec::Single(m) = &s.reference else { unreachable!() };
        let mix = ReferenceSpec::Mixture(ReferenceMixture {
            models: vec![m.clone(); 4],
            probabilities: vec![0.1, 0.5, 0.3, 0.1],
        });
        let ctx = PopulationContext::build(Arc::clone(&s.casemix), mix, &[0.5], 3, 10).unwrap();
        let mut counts = [0usize; 4];
        for k in 0..1000 {
            counts[ctx.reference_for(3, k)] += 1;
        }
        let sd = (1000.0f64 * 0.25).sqrt();
        assert!((counts[1] as f64 - 500.0).abs() <= 4.0 * sd, "{counts:?}");
    }

    #[test]
    fn mixture_probabilities_must_sum_to_one() {
        let s = toy_scenario(1, 100);
        let ReferenceSpec::Single(m) = &s.reference else { unreachable!() };
        let mix = ReferenceSpec::Mixture(ReferenceMixture {
            models: vec![m.clone(); 2],
            probabilities: vec![0.5, 0.4],
        });
        assert!(mix.validate().is_err());
    }

    #[test]
    fn failed_fits_are_missing_not_fatal() {
        let mut s = toy_scenario(3, 3000);
        s.config.n_values = vec![2];
        let out = run_scenario(&s).unwrap();
        assert!(out.blocks[0].draws.records.iter().all(|r| r.metrics.is_none() || r.error.is_none()));
        assert_eq!(out.blocks[0].draws.records.len(), 3);
    }

    #[test]
    fn tracked_individuals_produce_one_row_per_draw() {
        let mut s = toy_scenario(3, 3000);
        s.config.instability_sample = 1;
        let out = run_scenario(&s).unwrap();
        let inst = &out.blocks[0].instability;
        assert_eq!(inst.tracked.len(), 1);
        assert_eq!(inst.predictions.len(), 3);
    }
}

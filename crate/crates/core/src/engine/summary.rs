use serde::{Deserialize, Serialize};

use super::{metric_names, BlockOutput, MetricDraws, PopulationContext};
use crate::error::{Error, Result};
use crate::metrics::{SCALAR_METRICS, THRESHOLD_METRICS};
use crate::numeric::{pairwise_sum, quantile_sorted};

/// Assurance criterion: `P(lower ≤ metric ≤ upper) ≥ target_probability`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Criterion {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub metric: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upper: Option<f64>,
    pub target_probability: f64,
    /// For per-threshold metrics; every configured threshold when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
}

impl Criterion {
    pub fn new(metric: impl Into<String>, lower: Option<f64>, upper: Option<f64>, target_probability: f64) -> Self {
        Self {
            name: None,
            metric: metric.into(),
            lower,
            upper,
            target_probability,
            threshold: None,
        }
    }

    pub fn label(&self) -> String {
        if let Some(name) = &self.name {
            return name.clone();
        }
        let mut s = match (self.lower, self.upper) {
            (Some(l), Some(u)) => format!("{} in [{l}, {u}]", self.metric),
            (Some(l), None) => format!("{} >= {l}", self.metric),
            (None, Some(u)) => format!("{} <= {u}", self.metric),
            (None, None) => format!("{} defined", self.metric),
        };
        if let Some(t) = self.threshold {
            s.push_str(&format!(" at t={t}"));
        }
        s
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lower.is_none_or(|l| v >= l) && self.upper.is_none_or(|u| v <= u)
    }

    pub fn is_threshold_metric(&self) -> bool {
        THRESHOLD_METRICS.contains(&self.metric.as_str())
    }

    fn validate(&self, thresholds: &[f64]) -> Result<()> {
        if !metric_names().any(|m| m == self.metric) {
            return Err(Error::Config(format!("unknown criterion metric {:?}", self.metric)));
        }
        if let (Some(l), Some(u)) = (self.lower, self.upper) {
            if l > u {
                return Err(Error::Config(format!("criterion {}: lower bound exceeds upper", self.label())));
            }
        }
        if !(self.target_probability > 0.0 && self.target_probability <= 1.0) {
            return Err(Error::Config(format!(
                "criterion {}: target probability must lie in (0, 1]",
                self.label()
            )));
        }
        if let Some(t) = self.threshold {
            if !self.is_threshold_metric() {
                return Err(Error::Config(format!("criterion {}: metric has no threshold", self.label())));
            }
            if !thresholds.contains(&t) {
                return Err(Error::Config(format!("criterion {}: threshold {t} is not configured", self.label())));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CriteriaSpec {
    pub criteria: Vec<Criterion>,
}

impl CriteriaSpec {
    pub fn new(criteria: Vec<Criterion>) -> Self {
        Self { criteria }
    }

    pub fn is_empty(&self) -> bool {
        self.criteria.is_empty()
    }

    pub fn validate(&self, thresholds: &[f64]) -> Result<()> {
        self.criteria.iter().try_for_each(|c| c.validate(thresholds))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub metric: String,
    pub threshold: Option<f64>,
    pub subgroup: Option<String>,
    pub mean: Option<f64>,
    pub p2_5: Option<f64>,
    pub p97_5: Option<f64>,
    pub n_missing: usize,
    pub n_draws: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssuranceSummary {
    pub criterion: String,
    pub metric: String,
    pub threshold: Option<f64>,
    pub subgroup: Option<String>,
    /// Share of non-missing draws inside the bounds.
    pub probability: Option<f64>,
    pub target_probability: f64,
    pub met: Option<bool>,
    pub n_used: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockSummary {
    pub n: usize,
    pub strategy: String,
    pub metrics: Vec<MetricSummary>,
    pub assurance: Vec<AssuranceSummary>,
    pub failed_fits: usize,
    pub nonconverged_fits: usize,
}

impl BlockSummary {
    pub fn metric(&self, metric: &str, threshold: Option<f64>, subgroup: Option<&str>) -> Option<&MetricSummary> {
        self.metrics
            .iter()
            .find(|m| m.metric == metric && m.threshold == threshold && m.subgroup.as_deref() == subgroup)
    }

    /// Whether every overall-scope assurance criterion is met.
    pub fn meets_all(&self) -> bool {
        self.assurance
            .iter()
            .filter(|a| a.subgroup.is_none())
            .all(|a| a.met == Some(true))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub variant: Option<String>,
    pub master_seed: u64,
    pub iterations: usize,
    pub criteria: CriteriaSpec,
    /// Iterations that used each reference model.
    pub reference_selection_counts: Vec<usize>,
    pub blocks: Vec<BlockSummary>,
    pub warnings: Vec<String>,
}

impl SummaryReport {
    pub fn block(&self, n: usize, strategy: &str) -> Option<&BlockSummary> {
        self.blocks.iter().find(|b| b.n == n && b.strategy == strategy)
    }

    pub(crate) fn from_blocks(
        blocks: &[BlockOutput],
        meta: ReportMeta<'_>,
        ctx: &PopulationContext,
        variant: Option<String>,
    ) -> Self {
        let mut warnings = ctx.warnings.clone();
        warnings.extend(meta.warnings);
        let summaries: Vec<BlockSummary> = blocks.iter().map(|b| summarize(&b.draws, meta.criteria)).collect();
        for s in &summaries {
            warnings.extend(block_warnings(s));
        }
        if meta.iterations < crate::metrics::MIN_INTERVAL_DRAWS {
            warnings.push(format!(
                "{} draws give unstable 95% interval widths; at least {} are recommended",
                meta.iterations,
                crate::metrics::MIN_INTERVAL_DRAWS
            ));
        }
        let mut counts = vec![0; ctx.reference.models().len()];
        if let Some(b) = blocks.first() {
            for r in &b.draws.records {
                counts[r.reference_index] += 1;
            }
        }
        Self {
            variant,
            master_seed: meta.master_seed,
            iterations: meta.iterations,
            criteria: meta.criteria.clone(),
            reference_selection_counts: counts,
            blocks: summaries,
            warnings,
        }
    }
}

pub(crate) struct ReportMeta<'a> {
    pub master_seed: u64,
    pub iterations: usize,
    pub criteria: &'a CriteriaSpec,
    pub warnings: Vec<String>,
}

fn block_warnings(s: &BlockSummary) -> Vec<String> {
    let mut w = Vec::new();
    let tag = format!("n={} strategy={}", s.n, s.strategy);
    if s.failed_fits > 0 {
        w.push(format!("{tag}: {} fits failed", s.failed_fits));
    }
    if s.nonconverged_fits > 0 {
        w.push(format!("{tag}: {} fits did not converge", s.nonconverged_fits));
    }
    for m in s.metrics.iter().filter(|m| m.subgroup.is_none()) {
        if 2 * m.n_missing > m.n_draws {
            let at = m.threshold.map_or(String::new(), |t| format!(" at t={t}"));
            w.push(format!("{tag}: {}{at} missing in {} of {} draws", m.metric, m.n_missing, m.n_draws));
        }
    }
    w
}

fn describe(metric: &str, threshold: Option<f64>, subgroup: Option<&str>, values: &[Option<f64>]) -> MetricSummary {
    let mut present: Vec<f64> = values.iter().flatten().copied().collect();
    // Sorting first makes the summary independent of iteration order.
    present.sort_by(f64::total_cmp);
    let (mean, lo, hi) = if present.is_empty() {
        (None, None, None)
    } else {
        (
            Some(pairwise_sum(&present) / present.len() as f64),
            Some(quantile_sorted(&present, 0.025)),
            Some(quantile_sorted(&present, 0.975)),
        )
    };
    MetricSummary {
        metric: metric.to_string(),
        threshold,
        subgroup: subgroup.map(str::to_string),
        mean,
        p2_5: lo,
        p97_5: hi,
        n_missing: values.len() - present.len(),
        n_draws: values.len(),
    }
}

fn assurance(c: &Criterion, threshold: Option<f64>, subgroup: Option<&str>, values: &[Option<f64>]) -> AssuranceSummary {
    let present: Vec<f64> = values.iter().flatten().copied().collect();
    let inside = present.iter().filter(|&&v| c.contains(v)).count();
    let probability = (!present.is_empty()).then(|| inside as f64 / present.len() as f64);
    AssuranceSummary {
        criterion: c.label(),
        metric: c.metric.clone(),
        threshold,
        subgroup: subgroup.map(str::to_string),
        probability,
        target_probability: c.target_probability,
        met: probability.map(|p| p >= c.target_probability),
        n_used: present.len(),
    }
}

/// Means, 95% ranges and missing counts for every metric, plus assurance
/// probabilities, overall and per subgroup.
pub fn summarize(draws: &MetricDraws, criteria: &CriteriaSpec) -> BlockSummary {
    let thresholds = draws.thresholds();
    let levels = draws.subgroup_levels();
    let scopes: Vec<Option<&str>> = std::iter::once(None).chain(levels.iter().map(|l| Some(l.as_str()))).collect();
    let mut metrics = Vec::new();
    let mut results = Vec::new();
    for &scope in &scopes {
        for m in SCALAR_METRICS {
            metrics.push(describe(m, None, scope, &draws.values(m, None, scope)));
        }
        for &t in &thresholds {
            for m in THRESHOLD_METRICS {
                metrics.push(describe(m, Some(t), scope, &draws.values(m, Some(t), scope)));
            }
        }
        for c in &criteria.criteria {
            if c.is_threshold_metric() {
                for &t in &thresholds {
                    if c.threshold.is_none_or(|ct| ct == t) {
                        results.push(assurance(c, Some(t), scope, &draws.values(&c.metric, Some(t), scope)));
                    }
                }
            } else {
                results.push(assurance(c, None, scope, &draws.values(&c.metric, None, scope)));
            }
        }
    }
    BlockSummary {
        n: draws.n,
        strategy: draws.strategy.clone(),
        metrics,
        assurance: results,
        failed_fits: draws.records.iter().filter(|r| r.metrics.is_none()).count(),
        nonconverged_fits: draws.records.iter().filter(|r| r.converged == Some(false)).count(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::DrawRecord;
    use crate::metrics::MetricDraw;

    fn draws_with_slopes(slopes: &[Option<f64>]) -> MetricDraws {
        MetricDraws {
            n: 10,
            strategy: "mle".into(),
            records: slopes
                .iter()
                .enumerate()
                .map(|(k, s)| DrawRecord {
                    iteration: k,
                    reference_index: 0,
                    metrics: Some(MetricDraw {
                        cal_slope: *s,
                        ..MetricDraw::default()
                    }),
                    converged: Some(true),
                    error: None,
                })
                .collect(),
        }
    }

    fn slope_criterion() -> CriteriaSpec {
        CriteriaSpec::new(vec![Criterion::new("cal_slope", Some(0.9), Some(1.1), 0.9)])
    }

    #[test]
    fn constant_draws() {
        let s = summarize(&draws_with_slopes(&[Some(1.0); 5]), &slope_criterion());
        let m = s.metric("cal_slope", None, None).unwrap();
        assert_eq!((m.mean, m.p2_5, m.p97_5), (Some(1.0), Some(1.0), Some(1.0)));
        assert_eq!(s.assurance[0].probability, Some(1.0));
        assert!(s.meets_all());
    }

    #[test]
    fn missing_draws_are_counted_and_excluded() {
        let s = summarize(&draws_with_slopes(&[Some(0.5), None, Some(1.0), None]), &slope_criterion());
        let m = s.metric("cal_slope", None, None).unwrap();
        assert_eq!(m.n_missing, 2);
        assert_eq!(m.mean, Some(0.75));
        assert_eq!(s.assurance[0].probability, Some(0.5));
        assert_eq!(s.assurance[0].n_used, 2);
    }

    #[test]
    fn all_missing_metric_is_reported_missing() {
        let s = summarize(&draws_with_slopes(&[None, None]), &slope_criterion());
        let m = s.metric("cal_slope", None, None).unwrap();
        assert_eq!(m.mean, None);
        assert_eq!(s.assurance[0].met, None);
        assert!(!s.meets_all());
    }

    #[test]
    fn criterion_validation() {
        assert!(CriteriaSpec::new(vec![Criterion::new("nonsense", None, None, 0.5)]).validate(&[0.5]).is_err());
        assert!(CriteriaSpec::new(vec![Criterion::new("mape", Some(1.0), Some(0.0), 0.5)]).validate(&[0.5]).is_err());
        assert!(CriteriaSpec::new(vec![Criterion::new("mape", None, Some(0.1), 0.0)]).validate(&[0.5]).is_err());
        let mut c = Criterion::new("rvsi_winner", Some(90.0), None, 0.9);
        c.threshold = Some(0.3);
        assert!(CriteriaSpec::new(vec![c]).validate(&[0.5]).is_err());
    }
}

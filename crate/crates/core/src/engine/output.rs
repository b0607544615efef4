//! CSV and JSON writers. Comma-separated, LF line endings, headers always
//! present, missing values written as `NA`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{BlockOutput, SummaryReport};
use crate::error::Result;
use crate::metrics::{SCALAR_METRICS, THRESHOLD_METRICS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputOptions {
    pub draws: bool,
    pub instability: bool,
}

impl Default for OutputOptions {
    fn default() -> Self {
        Self {
            draws: true,
            instability: true,
        }
    }
}

fn num(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else {
        "NA".to_string()
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), num)
}

fn writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    Ok(csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(BufWriter::new(File::create(path)?)))
}

/// One row per (n, strategy, threshold, subgroup, metric) with one
/// `P[criterion]` column per configured criterion.
pub fn write_summary_csv(path: &Path, report: &SummaryReport) -> Result<()> {
    let mut w = writer(path)?;
    let labels: Vec<String> = report.criteria.criteria.iter().map(|c| c.label()).collect();
    let mut header: Vec<String> = ["n", "strategy", "threshold", "subgroup", "metric", "mean", "p2.5", "p97.5", "n_missing"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend(labels.iter().map(|l| format!("P[{l}]")));
    w.write_record(&header)?;
    for b in &report.blocks {
        for m in &b.metrics {
            let mut row = vec![
                b.n.to_string(),
                b.strategy.clone(),
                opt(m.threshold),
                m.subgroup.clone().unwrap_or_else(|| "overall".into()),
                m.metric.clone(),
                opt(m.mean),
                opt(m.p2_5),
                opt(m.p97_5),
                m.n_missing.to_string(),
            ];
            for l in &labels {
                let p = b
                    .assurance
                    .iter()
                    .find(|a| &a.criterion == l && a.metric == m.metric && a.threshold == m.threshold && a.subgroup == m.subgroup)
                    .and_then(|a| a.probability);
                row.push(opt(p));
            }
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Metric names as written to `draws.csv`: `nb_model[t=0.5]` for
/// per-threshold metrics and a `{level}` suffix within subgroups.
fn draw_columns(thresholds: &[f64], levels: &[String]) -> Vec<(String, Option<f64>, Option<String>, &'static str)> {
    let mut out = Vec::new();
    let scopes = std::iter::once(None).chain(levels.iter().cloned().map(Some));
    for scope in scopes {
        let suffix = scope.as_ref().map_or(String::new(), |l| format!("{{{l}}}"));
        for m in SCALAR_METRICS {
            out.push((format!("{m}{suffix}"), None, scope.clone(), m));
        }
        for &t in thresholds {
            for m in THRESHOLD_METRICS {
                out.push((format!("{m}[t={t}]{suffix}"), Some(t), scope.clone(), m));
            }
        }
    }
    out
}

/// Long format: `n, strategy, iteration, metric, value`. Each iteration also
/// records `reference_model` and `fit_converged`.
pub fn write_draws_csv(path: &Path, blocks: &[BlockOutput], thresholds: &[f64]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["n", "strategy", "iteration", "metric", "value"])?;
    for b in blocks {
        let levels = b.draws.subgroup_levels();
        let columns = draw_columns(thresholds, &levels);
        let values: Vec<Vec<Option<f64>>> = columns
            .iter()
            .map(|(_, t, scope, m)| b.draws.values(m, *t, scope.as_deref()))
            .collect();
        let n = b.n.to_string();
        for (k, r) in b.draws.records.iter().enumerate() {
            let it = r.iteration.to_string();
            w.write_record([n.as_str(), &b.strategy, &it, "reference_model", &r.reference_index.to_string()])?;
            let conv = r.converged.map_or("NA".to_string(), |c| u8::from(c).to_string());
            w.write_record([n.as_str(), &b.strategy, &it, "fit_converged", &conv])?;
            for ((name, ..), v) in columns.iter().zip(&values) {
                w.write_record([n.as_str(), &b.strategy, &it, name, &opt(v[k])])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes `instability_predictions.csv`, `instability_curves.csv` and
/// `individual_uncertainty.csv` into `dir`.
pub fn write_instability_csvs(dir: &Path, blocks: &[BlockOutput]) -> Result<Vec<PathBuf>> {
    let pred_path = dir.join("instability_predictions.csv");
    let curve_path = dir.join("instability_curves.csv");
    let unc_path = dir.join("individual_uncertainty.csv");

    let mut w = writer(&pred_path)?;
    w.write_record(["n", "strategy", "individual_id", "true_risk", "draw_id", "estimated_risk"])?;
    for b in blocks {
        let d = &b.instability;
        let n = b.n.to_string();
        for (j, id) in d.tracked.iter().enumerate() {
            let id = id.to_string();
            for ((row, draw), r) in d.predictions.iter().zip(&d.draw_ids).zip(&d.draw_refs) {
                w.write_record([
                    n.as_str(),
                    &b.strategy,
                    &id,
                    &num(d.truth[*r][j]),
                    &draw.to_string(),
                    &num(row[j]),
                ])?;
            }
        }
    }
    w.flush()?;

    let mut w = writer(&curve_path)?;
    w.write_record(["n", "strategy", "draw_id", "point", "estimated_risk", "observed_risk"])?;
    for b in blocks {
        let n = b.n.to_string();
        for (draw, c) in &b.instability.curves {
            for (p, (g, o)) in c.grid.iter().zip(&c.observed).enumerate() {
                w.write_record([n.as_str(), &b.strategy, &draw.to_string(), &p.to_string(), &num(*g), &num(*o)])?;
            }
        }
    }
    w.flush()?;

    let mut w = writer(&unc_path)?;
    w.write_record(["n", "strategy", "individual_id", "true_risk", "interval_width", "threshold", "misclassification_prob"])?;
    for b in blocks {
        let d = &b.instability;
        let n = b.n.to_string();
        for (j, id) in d.tracked.iter().enumerate() {
            let width = d.widths.get(j).copied().map_or("NA".to_string(), num);
            for (t, probs) in &d.misclassification {
                w.write_record([
                    n.as_str(),
                    &b.strategy,
                    &id.to_string(),
                    &num(d.truth[0][j]),
                    &width,
                    &num(*t),
                    &num(probs[j]),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(vec![pred_path, curve_path, unc_path])
}

/// Pretty-printed JSON with a trailing newline.
pub fn write_report_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    f.flush()?;
    Ok(())
}

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Serialize;

use samplan::engine::{
    run_scenario, sweep, write_draws_csv, write_instability_csvs, write_report_json, write_summary_csv, BlockOutput,
    OutputOptions, SummaryReport,
};
use samplan::fisher::run_fisher;
use samplan::{Error, ReferenceSpec};

use crate::config::{calibrate, CliError, CliResult, Config, ReferenceConfig};
use crate::manifest::{write_manifest, Stopwatch};

/// What a finished command reports back to `main`.
pub struct Outcome {
    pub warnings: Vec<String>,
}

pub struct RunContext<'a> {
    pub config: &'a Config,
    pub out: &'a Path,
    pub threads: usize,
}

fn write_json(path: PathBuf, value: &impl Serialize, files: &mut Vec<PathBuf>) -> CliResult<()> {
    write_report_json(&path, value)?;
    files.push(path);
    Ok(())
}

fn write_outputs(
    dir: &Path,
    blocks: &[BlockOutput],
    report: &SummaryReport,
    thresholds: &[f64],
    options: &OutputOptions,
    files: &mut Vec<PathBuf>,
) -> CliResult<()> {
    fs::create_dir_all(dir)?;
    let summary = dir.join("summary.csv");
    write_summary_csv(&summary, report)?;
    files.push(summary);
    if options.draws {
        let draws = dir.join("draws.csv");
        write_draws_csv(&draws, blocks, thresholds)?;
        files.push(draws);
    }
    if options.instability {
        files.extend(write_instability_csvs(dir, blocks)?);
    }
    write_json(dir.join("report.json"), report, files)
}

fn write_reference(dir: &Path, reference: &ReferenceSpec, files: &mut Vec<PathBuf>) -> CliResult<()> {
    match reference {
        ReferenceSpec::Single(m) => write_json(dir.join("reference.json"), m, files),
        spec => write_json(dir.join("reference.json"), spec, files),
    }
}

#[derive(Serialize)]
struct CalibrationReport {
    converged: bool,
    target_cstat: f64,
    target_prevalence: f64,
    achieved_cstat: Option<f64>,
    achieved_prevalence: Option<f64>,
    iterations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

pub fn cmd_calibrate(ctx: &RunContext) -> CliResult<Outcome> {
    let ReferenceConfig::Calibrate(cal) = &ctx.config.reference else {
        return Err(CliError::Config("`reference.calibrate` is required for calibrate".into()));
    };
    let mut watch = Stopwatch::new();
    let casemix = watch.time("data", || ctx.config.load_casemix())?;
    fs::create_dir_all(ctx.out)?;
    let mut files = Vec::new();
    write_json(ctx.out.join("config.json"), ctx.config, &mut files)?;
    let result = watch.time("calibration", || calibrate(cal, &casemix));
    let mut report = CalibrationReport {
        converged: false,
        target_cstat: cal.target_cstat,
        target_prevalence: cal.target_prevalence,
        achieved_cstat: None,
        achieved_prevalence: None,
        iterations: None,
        error: None,
    };
    let outcome = match result {
        Ok(c) => {
            report.converged = true;
            report.achieved_cstat = Some(c.achieved_cstat);
            report.achieved_prevalence = Some(c.achieved_prevalence);
            report.iterations = Some(c.iterations);
            write_json(ctx.out.join("reference.json"), &c.model, &mut files)?;
            Ok(Outcome { warnings: Vec::new() })
        }
        Err(e) => {
            report.error = Some(e.to_string());
            Err(e)
        }
    };
    write_json(ctx.out.join("calibration_report.json"), &report, &mut files)?;
    write_manifest(ctx.out, "calibrate", ctx.config, &files, &watch, ctx.threads)?;
    outcome
}

pub fn cmd_simulate(ctx: &RunContext) -> CliResult<Outcome> {
    let mut watch = Stopwatch::new();
    let config = ctx.config;
    let scenario_config = config.scenario_config();
    scenario_config.validate()?;
    let casemix = Arc::new(watch.time("data", || config.load_casemix())?);
    let (reference, _) = watch.time("reference", || config.resolve_reference(&casemix))?;
    let scenario = config.scenario(casemix, reference.clone())?;
    let out = watch.time("simulation", || run_scenario(&scenario))?;
    let mut files = Vec::new();
    watch.time("outputs", || -> CliResult<()> {
        fs::create_dir_all(ctx.out)?;
        write_json(ctx.out.join("config.json"), config, &mut files)?;
        write_reference(ctx.out, &reference, &mut files)?;
        write_outputs(ctx.out, &out.blocks, &out.report, &scenario.config.thresholds, &config.outputs, &mut files)
    })?;
    write_manifest(ctx.out, "simulate", config, &files, &watch, ctx.threads)?;
    Ok(Outcome {
        warnings: out.report.warnings.clone(),
    })
}

pub fn cmd_fisher(ctx: &RunContext) -> CliResult<Outcome> {
    let mut watch = Stopwatch::new();
    let config = ctx.config;
    let casemix = Arc::new(watch.time("data", || config.load_casemix())?);
    let (reference, _) = watch.time("reference", || config.resolve_reference(&casemix))?;
    let scenario = config.fisher_scenario(casemix, reference.clone())?;
    let out = watch.time("approximation", || run_fisher(&scenario))?;
    let mut files = Vec::new();
    watch.time("outputs", || -> CliResult<()> {
        fs::create_dir_all(ctx.out)?;
        write_json(ctx.out.join("config.json"), config, &mut files)?;
        write_reference(ctx.out, &reference, &mut files)?;
        write_outputs(
            ctx.out,
            &out.output.blocks,
            &out.output.report,
            &scenario.config.thresholds,
            &config.outputs,
            &mut files,
        )?;
        let coef_dir = ctx.out.join("coefficients");
        fs::create_dir_all(&coef_dir)?;
        for (n, label, draws) in &out.coefficient_draws {
            let path = coef_dir.join(format!("n{n}_{label}.csv"));
            draws.write_csv(&path)?;
            files.push(path);
        }
        Ok(())
    })?;
    write_manifest(ctx.out, "fisher", config, &files, &watch, ctx.threads)?;
    Ok(Outcome {
        warnings: out.output.report.warnings.clone(),
    })
}

pub fn cmd_sweep(ctx: &RunContext) -> CliResult<Outcome> {
    let mut watch = Stopwatch::new();
    let config = ctx.config;
    config.scenario_config().validate()?;
    let casemix = Arc::new(watch.time("data", || config.load_casemix())?);
    let (reference, _) = watch.time("reference", || config.resolve_reference(&casemix))?;
    let scenario = config.scenario(casemix, reference.clone())?;
    let swept = watch.time("simulation", || sweep(&scenario, &config.scenario.variants))?;
    let mut files = Vec::new();
    let mut warnings = Vec::new();
    watch.time("outputs", || -> CliResult<()> {
        fs::create_dir_all(ctx.out)?;
        write_json(ctx.out.join("config.json"), config, &mut files)?;
        write_reference(ctx.out, &reference, &mut files)?;
        for (variant, out) in &swept.runs {
            let dir = ctx.out.join(&variant.label);
            write_outputs(&dir, &out.blocks, &out.report, &scenario.config.thresholds, &config.outputs, &mut files)?;
            warnings.extend(out.report.warnings.iter().map(|w| format!("{}: {w}", variant.label)));
        }
        let verdict = ctx.out.join("verdict.txt");
        let mut text = String::new();
        if config.criteria.is_empty() {
            text.push_str("no criteria configured\n");
        } else {
            for m in &swept.minimal_n {
                let n = m.n.map_or("none of the configured sizes".to_string(), |n| n.to_string());
                text.push_str(&format!("variant {} strategy {}: minimal n = {n}\n", m.variant, m.strategy));
            }
            let csv_path = ctx.out.join("verdict.csv");
            let mut w = csv::WriterBuilder::new()
                .terminator(csv::Terminator::Any(b'\n'))
                .from_path(&csv_path)
                .map_err(Error::from)?;
            w.write_record(["variant", "strategy", "minimal_n"]).map_err(Error::from)?;
            for m in &swept.minimal_n {
                let n = m.n.map_or("NA".to_string(), |n| n.to_string());
                w.write_record([m.variant.as_str(), &m.strategy, &n]).map_err(Error::from)?;
            }
            w.flush()?;
            files.push(csv_path);
        }
        fs::write(&verdict, text)?;
        files.push(verdict);
        Ok(())
    })?;
    write_manifest(ctx.out, "sweep", config, &files, &watch, ctx.threads)?;
    Ok(Outcome { warnings })
}

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use samplan::engine::{OutputOptions, ReferenceMixture, Variant};
use samplan::fisher::{onesample_mcmc, Approximation, FisherConfig, FisherScenario};
use samplan::popgen::{
    calibrate_reference, ingest_casemix, synthesize_casemix, CalibratedReference, CalibrationOptions, Subgroups,
};
use samplan::{
    CaseMix, Column, CriteriaSpec, Error, MarginalSpec, McmcConfig, ReferenceModel, ReferenceSpec, Scenario,
    ScenarioConfig, Strategy,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DataConfig {
    Synthetic {
        marginals: MarginalSpec,
        rows: usize,
        seed: u64,
        /// Column of the synthesised case-mix whose values label subgroups.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        subgroup: Option<String>,
    },
    Csv {
        path: PathBuf,
        schema: Vec<Column>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        subgroup: Option<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrateConfig {
    pub weights: Vec<f64>,
    /// Defaults to the case-mix columns.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub column_names: Option<Vec<String>>,
    pub target_cstat: f64,
    pub target_prevalence: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub options: Option<CalibrationOptions>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ReferenceConfig {
    Model(ReferenceModel),
    Mixture(ReferenceMixture),
    Calibrate(CalibrateConfig),
    /// A reference model JSON file, e.g. written by `calibrate`.
    File(PathBuf),
}

fn default_iterations() -> usize {
    samplan::engine::RECOMMENDED_ITERATIONS
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
pub struct ScenarioSection {
    #[serde(default)]
    pub n_values: Vec<usize>,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default = "default_thresholds")]
    pub thresholds: Vec<f64>,
    pub master_seed: u64,
    #[serde(default = "default_instability_sample")]
    pub instability_sample: usize,
    #[serde(default = "default_curves")]
    pub curves_emitted: usize,
    /// Case-mix variants for `sweep`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub variants: Vec<Variant>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FisherSection {
    pub approximations: Vec<Approximation>,
    #[serde(default = "onesample_mcmc")]
    pub mcmc: McmcConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub data: DataConfig,
    pub reference: ReferenceConfig,
    #[serde(default)]
    pub strategies: Vec<Strategy>,
    #[serde(default)]
    pub mcmc: McmcConfig,
    pub scenario: ScenarioSection,
    #[serde(default)]
    pub criteria: CriteriaSpec,
    #[serde(default)]
    pub outputs: OutputOptions,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fisher: Option<FisherSection>,
}

/// Failure classes mapped to exit codes.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Runtime(m) => write!(f, "error: {m}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_)
            | Error::Schema(_)
            | Error::Parse { .. }
            | Error::MissingValue { .. }
            | Error::InvalidValue { .. }
            | Error::Alignment(_)
            | Error::UnknownSubgroup(_)
            | Error::UnreachableTarget { .. } => CliError::Config(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl Config {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut config: Config =
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.resolve_paths(base);
        Ok(config)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let DataConfig::Csv { path, .. } = &mut self.data {
            fix(path);
        }
        if let ReferenceConfig::File(path) = &mut self.reference {
            fix(path);
        }
    }

    pub fn load_casemix(&self) -> CliResult<CaseMix> {
        Ok(match &self.data {
            DataConfig::Synthetic {
                marginals,
                rows,
                seed,
                subgroup,
            } => {
                let cm = synthesize_casemix(marginals, *rows, *seed)?;
                match subgroup {
                    None => cm,
                    Some(name) => {
                        let j = cm
                            .column_names()
                            .iter()
                            .position(|c| c == name)
                            .ok_or_else(|| CliError::Config(format!("subgroup column `{name}` is not synthesised")))?;
                        let labels: Vec<String> = (0..cm.n_rows()).map(|i| cm.row(i)[j].to_string()).collect();
                        cm.with_subgroups(Subgroups::from_labels(name.clone(), &labels))?
                    }
                }
            }
            DataConfig::Csv { path, schema, subgroup } => ingest_casemix(path, schema, subgroup.as_deref())?,
        })
    }

    /// The reference spec, calibrating first when asked to.
    pub fn resolve_reference(&self, casemix: &CaseMix) -> CliResult<(ReferenceSpec, Option<CalibratedReference>)> {
        Ok(match &self.reference {
            ReferenceConfig::Model(m) => (ReferenceSpec::Single(m.clone()), None),
            ReferenceConfig::Mixture(m) => (ReferenceSpec::Mixture(m.clone()), None),
            ReferenceConfig::File(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
                let m: ReferenceModel = serde_json::from_str(&text)
                    .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
                (ReferenceSpec::Single(m), None)
            }
            ReferenceConfig::Calibrate(c) => {
                let cal = calibrate(c, casemix)?;
                (ReferenceSpec::Single(cal.model.clone()), Some(cal))
            }
        })
    }

    pub fn scenario_config(&self) -> ScenarioConfig {
        let s = &self.scenario;
        ScenarioConfig {
            n_values: s.n_values.clone(),
            iterations: s.iterations,
            strategies: self.strategies.clone(),
            thresholds: s.thresholds.clone(),
            master_seed: s.master_seed,
            criteria: self.criteria.clone(),
            instability_sample: s.instability_sample,
            curves_emitted: s.curves_emitted,
            mcmc: self.mcmc.clone(),
        }
    }

    pub fn scenario(&self, casemix: Arc<CaseMix>, reference: ReferenceSpec) -> CliResult<Scenario> {
        let config = self.scenario_config();
        config.validate()?;
        Ok(Scenario {
            config,
            casemix,
            reference,
        })
    }

    pub fn fisher_scenario(&self, casemix: Arc<CaseMix>, reference: ReferenceSpec) -> CliResult<FisherScenario> {
        let f = self
            .fisher
            .as_ref()
            .ok_or_else(|| CliError::Config("the `fisher` section is required for this command".into()))?;
        let s = &self.scenario;
        let config = FisherConfig {
            n_values: s.n_values.clone(),
            draws: s.iterations,
            approximations: f.approximations.clone(),
            thresholds: s.thresholds.clone(),
            master_seed: s.master_seed,
            criteria: self.criteria.clone(),
            instability_sample: s.instability_sample,
            curves_emitted: s.curves_emitted,
            mcmc: f.mcmc.clone(),
        };
        config.validate()?;
        if matches!(reference, ReferenceSpec::Mixture(_)) {
            return Err(CliError::Config("the approximation path needs a single reference model".into()));
        }
        Ok(FisherScenario {
            config,
            casemix,
            reference,
        })
    }
}

pub fn calibrate(c: &CalibrateConfig, casemix: &CaseMix) -> CliResult<CalibratedReference> {
    let names = c.column_names.clone().unwrap_or_else(|| casemix.column_names());
    Ok(calibrate_reference(
        &c.weights,
        &names,
        casemix,
        c.target_cstat,
        c.target_prevalence,
        c.options.unwrap_or_default(),
    )?)
}

//! Fast approximation: unit Fisher information, multivariate-normal model
//! draws, and the one-sample Bayesian penalised approximation, evaluated with
//! the same metrics and summaries as the full simulation.

use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::devstrat::mcmc::{run_chain, LogLikelihood};
use crate::devstrat::{LinearModel, McmcConfig, PenaltyFamily, PriorSpec};
use crate::engine::{
    assemble_blocks, evaluate_prediction, BlockOutput, CriteriaSpec, Evaluated, PopulationContext, Prediction,
    ReferenceSpec, ReportMeta, ScenarioOutput, SummaryReport, RECOMMENDED_ITERATIONS,
};
use crate::error::{Error, Result};
use crate::numeric::{cholesky_with_jitter, logistic, Matrix};
use crate::popgen::{draw_sample, CaseMix, ReferenceModel};
use crate::rng::{derive_seed, stream, Role};

/// Relative pivot below which a design column counts as dependent.
const RANK_TOL: f64 = 1e-10;

/// Mean per-row information `E[p(1−p) x xᵀ]`, intercept first.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitInformation {
    pub matrix: DMatrix<f64>,
    pub source_rows: usize,
    pub column_names: Vec<String>,
    /// Case-mix column means and population sds, for the standardised
    /// one-sample path.
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
}

impl UnitInformation {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// `n⁻¹ I⁻¹`.
    pub fn covariance(&self, n: usize) -> Result<DMatrix<f64>> {
        let inv = self
            .matrix
            .clone()
            .cholesky()
            .ok_or_else(|| Error::NotPositiveDefinite(" (unit information)".into()))?
            .inverse();
        Ok(inv / n as f64)
    }

    /// Information of `γ = Aᵀβ`, the coefficients of standardised columns.
    fn standardised(&self) -> DMatrix<f64> {
        let a_inv = self.a_inverse();
        &a_inv * &self.matrix * a_inv.transpose()
    }

    /// Inverse of `A`, where `x_raw = A z` maps standardised rows back.
    fn a_inverse(&self) -> DMatrix<f64> {
        let d = self.dim();
        let mut m = DMatrix::<f64>::identity(d, d);
        for j in 1..d {
            m[(j, 0)] = -self.means[j - 1] / self.sds[j - 1];
            m[(j, j)] = 1.0 / self.sds[j - 1];
        }
        m
    }

    fn to_standardised(&self, beta: &[f64]) -> Vec<f64> {
        let mut g = beta.to_vec();
        for j in 1..beta.len() {
            g[0] += beta[j] * self.means[j - 1];
            g[j] = beta[j] * self.sds[j - 1];
        }
        g
    }

    fn original_coefficients(&self, gamma: &[f64]) -> Vec<f64> {
        let mut b = gamma.to_vec();
        for j in 1..gamma.len() {
            b[j] = gamma[j] / self.sds[j - 1];
            b[0] -= b[j] * self.means[j - 1];
        }
        b
    }
}

pub fn unit_information(casemix: &CaseMix, model: &ReferenceModel) -> Result<UnitInformation> {
    model.check_alignment(casemix)?;
    let rows = casemix.n_rows();
    if rows == 0 {
        return Err(Error::InvalidArgument("case-mix has no rows".into()));
    }
    let p = casemix.n_cols();
    let d = p + 1;
    let lm = LinearModel::from_vector(&model.effective_coefficients());
    let mut acc = DMatrix::<f64>::zeros(d, d);
    let mut x = vec![1.0; d];
    for i in 0..rows {
        let row = casemix.row(i);
        x[1..].copy_from_slice(row);
        let pr = logistic(lm.eta(row));
        let w = pr * (1.0 - pr);
        for a in 0..d {
            let wa = w * x[a];
            for b in 0..=a {
                acc[(a, b)] += wa * x[b];
            }
        }
    }
    for a in 0..d {
        for b in 0..a {
            acc[(b, a)] = acc[(a, b)];
        }
    }
    acc /= rows as f64;

    let mut names = vec!["intercept".to_string()];
    names.extend(casemix.column_names());
    let dependent = dependent_columns(&acc);
    if !dependent.is_empty() {
        return Err(Error::RankDeficient(dependent.into_iter().map(|j| names[j].clone()).collect()));
    }
    let mut means = Vec::with_capacity(p);
    let mut sds = Vec::with_capacity(p);
    for j in 0..p {
        let col = casemix.values().column(j);
        let m = col.iter().sum::<f64>() / rows as f64;
        let v = col.iter().map(|x| (x - m).powi(2)).sum::<f64>() / rows as f64;
        means.push(m);
        sds.push(v.sqrt());
    }
    Ok(UnitInformation {
        matrix: acc,
        source_rows: rows,
        column_names: casemix.column_names(),
        means,
        sds,
    })
}

/// Columns whose pivot in a sequential Cholesky is negligible relative to
/// their diagonal, given the columns kept before them.
fn dependent_columns(m: &DMatrix<f64>) -> Vec<usize> {
    let mut kept: Vec<usize> = Vec::new();
    let mut dependent = Vec::new();
    for j in 0..m.nrows() {
        let diag = m[(j, j)];
        let ok = diag > 0.0 && {
            let mut idx = kept.clone();
            idx.push(j);
            let sub = m.select_rows(&idx).select_columns(&idx);
            nalgebra::Cholesky::new(sub).is_some_and(|c| {
                let l = c.l();
                let last = idx.len() - 1;
                l[(last, last)].powi(2) > RANK_TOL * diag
            })
        };
        if ok {
            kept.push(j);
        } else {
            dependent.push(j);
        }
    }
    dependent
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Mvn,
    BayesOnesample,
}

/// One coefficient vector `[intercept, w_1, .., w_P]` per row.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientDraws {
    pub matrix: Matrix,
    pub provenance: Provenance,
    pub n_used: usize,
    pub column_names: Vec<String>,
    pub acceptance: Option<f64>,
    pub low_acceptance: bool,
    pub split_chain_ok: Option<bool>,
}

impl CoefficientDraws {
    pub fn len(&self) -> usize {
        self.matrix.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.matrix.rows() == 0
    }

    pub fn mean(&self) -> Vec<f64> {
        let m = self.len() as f64;
        (0..self.matrix.cols())
            .map(|j| (0..self.len()).map(|i| self.matrix.get(i, j)).sum::<f64>() / m)
            .collect()
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        let mean = self.mean();
        let d = mean.len();
        let m = self.len();
        let mut c = DMatrix::<f64>::zeros(d, d);
        for i in 0..m {
            let r = self.matrix.row(i);
            for a in 0..d {
                for b in 0..=a {
                    c[(a, b)] += (r[a] - mean[a]) * (r[b] - mean[b]);
                }
            }
        }
        for a in 0..d {
            for b in 0..a {
                c[(b, a)] = c[(a, b)];
            }
        }
        c / (m.max(2) - 1) as f64
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_path(path)?;
        let mut header = vec!["draw".to_string(), "intercept".to_string()];
        header.extend(self.column_names.iter().cloned());
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut rec = vec![i.to_string()];
            rec.extend(self.matrix.row(i).iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn check_info(model: &ReferenceModel, info: &UnitInformation) -> Result<()> {
    if model.column_names != info.column_names {
        return Err(Error::Alignment(
            "reference model columns differ from the unit information columns".into(),
        ));
    }
    Ok(())
}

/// Draws from `MVN(β, n⁻¹ I⁻¹)` with `β` the effective reference
/// coefficients.
pub fn draw_mvn_models(
    model: &ReferenceModel,
    info: &UnitInformation,
    n: usize,
    draws: usize,
    rng_seed: u64,
) -> Result<CoefficientDraws> {
    check_info(model, info)?;
    if n == 0 || draws == 0 {
        return Err(Error::InvalidArgument("n and the draw count must be positive".into()));
    }
    let cov = info.covariance(n)?;
    let (l, _) = cholesky_with_jitter(&cov).ok_or_else(|| Error::NotPositiveDefinite(" (coefficient covariance)".into()))?;
    let beta = DVector::from_vec(model.effective_coefficients());
    let d = beta.len();
    let mut rng = stream(rng_seed, 0, Role::Sample);
    let mut data = Vec::with_capacity(draws * d);
    let mut z = DVector::<f64>::zeros(d);
    for _ in 0..draws {
        for zi in z.iter_mut() {
            *zi = StandardNormal.sample(&mut rng);
        }
        data.extend((&beta + &l * &z).iter());
    }
    Ok(CoefficientDraws {
        matrix: Matrix::new(draws, d, data),
        provenance: Provenance::Mvn,
        n_used: n,
        column_names: model.column_names.clone(),
        acceptance: None,
        low_acceptance: false,
        split_chain_ok: None,
    })
}

/// Gaussian pseudo-likelihood of `γ` given the observed `γ̂`.
struct GaussianTarget {
    centre: DVector<f64>,
    precision: DMatrix<f64>,
}

impl LogLikelihood for GaussianTarget {
    fn log_lik(&self, theta: &[f64]) -> f64 {
        let r = DVector::from_column_slice(theta) - &self.centre;
        -0.5 * r.dot(&(&self.precision * &r))
    }
}

/// Default sampler settings for the one-sample path.
pub fn onesample_mcmc() -> McmcConfig {
    McmcConfig {
        burn_in: 10_000,
        ..McmcConfig::default()
    }
}

/// Posterior under the penalised prior with the likelihood replaced by
/// `MVN(β̂ | β, n⁻¹ I⁻¹)`, `β̂` the reference coefficients. Priors act on
/// standardised coefficients, as in the full Bayesian fits.
pub fn bayes_onesample(
    model: &ReferenceModel,
    info: &UnitInformation,
    n: usize,
    prior: &PriorSpec,
    mcmc: &McmcConfig,
    rng_seed: u64,
) -> Result<CoefficientDraws> {
    check_info(model, info)?;
    if n == 0 {
        return Err(Error::InvalidArgument("n must be positive".into()));
    }
    if let Some(j) = info.sds.iter().position(|&s| s <= 0.0) {
        return Err(Error::RankDeficient(vec![info.column_names[j].clone()]));
    }
    let gamma_hat = info.to_standardised(&model.effective_coefficients());
    let precision = info.standardised() * n as f64;
    let target = GaussianTarget {
        centre: DVector::from_vec(gamma_hat.clone()),
        precision: precision.clone(),
    };
    let mut rng = stream(rng_seed, 0, Role::Mcmc);
    let chain = run_chain(&target, prior, &gamma_hat, &precision, mcmc, &mut rng)?;
    let d = gamma_hat.len();
    let data: Vec<f64> = chain.draws.iter().flat_map(|g| info.original_coefficients(g)).collect();
    Ok(CoefficientDraws {
        matrix: Matrix::new(chain.draws.len(), d, data),
        provenance: Provenance::BayesOnesample,
        n_used: n,
        column_names: model.column_names.clone(),
        acceptance: Some(chain.acceptance),
        low_acceptance: chain.low_acceptance,
        split_chain_ok: Some(chain.split_chain_ok),
    })
}

fn single_reference(ctx: &PopulationContext) -> Result<&ReferenceModel> {
    match &ctx.reference {
        ReferenceSpec::Single(m) => Ok(m),
        ReferenceSpec::Mixture(_) => Err(Error::Config(
            "the approximation path needs a single reference model".into(),
        )),
    }
}

/// Evaluates each coefficient draw as one fitted model. The winner
/// comparison uses a surrogate development sample of size `n_used` per draw.
pub fn approx_block(
    draws: &CoefficientDraws,
    ctx: &PopulationContext,
    label: &str,
    master_seed: u64,
    curves_emitted: usize,
) -> Result<BlockOutput> {
    let reference = single_reference(ctx)?;
    if draws.column_names != ctx.casemix.column_names() {
        return Err(Error::Alignment("coefficient draws do not match the case-mix columns".into()));
    }
    if draws.is_empty() {
        return Err(Error::InvalidArgument("no coefficient draws".into()));
    }
    let n = draws.n_used.min(ctx.casemix.n_rows());
    let converged = draws.acceptance.map(|_| !draws.low_acceptance);
    let per_draw: Vec<Vec<Evaluated>> = (0..draws.len())
        .into_par_iter()
        .map(|k| {
            let lm = LinearModel::from_vector(draws.matrix.row(k));
            let prediction = draw_sample(&ctx.casemix, reference, n, derive_seed(master_seed, k as u64, Role::Surrogate))
                .map(|s| Prediction {
                    population_risks: lm.predict(&ctx.casemix),
                    dev_risks: lm.predict(&s.casemix),
                    dev_outcomes: s.outcome,
                    converged,
                });
            vec![evaluate_prediction(ctx, k, 0, prediction, k < curves_emitted)]
        })
        .collect();
    let mut blocks = assemble_blocks(ctx, draws.n_used, &[label.to_string()], per_draw, curves_emitted);
    Ok(blocks.remove(0))
}

/// One block from `draws`, summarised against `criteria`.
pub fn approx_scenario(
    draws: &CoefficientDraws,
    ctx: &PopulationContext,
    label: &str,
    criteria: &CriteriaSpec,
    master_seed: u64,
    curves_emitted: usize,
) -> Result<ScenarioOutput> {
    criteria.validate(&ctx.thresholds)?;
    let blocks = vec![approx_block(draws, ctx, label, master_seed, curves_emitted)?];
    let meta = ReportMeta {
        master_seed,
        iterations: draws.len(),
        criteria,
        warnings: Vec::new(),
    };
    let report = SummaryReport::from_blocks(&blocks, meta, ctx, None);
    Ok(ScenarioOutput { blocks, report })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ApproximationConfig {
    Mvn,
    BayesOnesample(PriorSpec),
}

impl ApproximationConfig {
    pub fn default_label(&self) -> String {
        match self {
            ApproximationConfig::Mvn => "mvn".into(),
            ApproximationConfig::BayesOnesample(p) => match p.family {
                PenaltyFamily::Ridge => "bayes_ridge_onesample".into(),
                PenaltyFamily::Lasso => "bayes_lasso_onesample".into(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Approximation {
    #[serde(default)]
    pub label: String,
    #[serde(flatten)]
    pub config: ApproximationConfig,
}

impl Approximation {
    pub fn new(config: ApproximationConfig) -> Self {
        Self {
            label: String::new(),
            config,
        }
    }

    pub fn label(&self) -> String {
        if self.label.is_empty() {
            self.config.default_label()
        } else {
            self.label.clone()
        }
    }
}

fn default_draws() -> usize {
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
pub struct FisherConfig {
    pub n_values: Vec<usize>,
    /// Coefficient draws per (n, approximation).
    #[serde(default = "default_draws")]
    pub draws: usize,
    pub approximations: Vec<Approximation>,
    #[serde(default = "default_thresholds")]
    pub thresholds: Vec<f64>,
    pub master_seed: u64,
    #[serde(default)]
    pub criteria: CriteriaSpec,
    #[serde(default = "default_instability_sample")]
    pub instability_sample: usize,
    #[serde(default = "default_curves")]
    pub curves_emitted: usize,
    #[serde(default = "onesample_mcmc")]
    pub mcmc: McmcConfig,
}

impl FisherConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_values.is_empty() || self.n_values.iter().any(|&n| n < 2) {
            return Err(Error::Config("sample sizes must be given and at least 2".into()));
        }
        if self.draws < 1 {
            return Err(Error::Config("draws must be at least 1".into()));
        }
        if self.approximations.is_empty() {
            return Err(Error::Config("at least one approximation is required".into()));
        }
        let mut labels: Vec<String> = self.approximations.iter().map(Approximation::label).collect();
        labels.sort();
        if labels.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("approximation labels must be unique".into()));
        }
        if self.thresholds.is_empty() || self.thresholds.iter().any(|t| !(*t > 0.0 && *t < 1.0)) {
            return Err(Error::Config("thresholds must be given and lie in (0, 1)".into()));
        }
        for a in &self.approximations {
            if let ApproximationConfig::BayesOnesample(p) = &a.config {
                p.validate()?;
            }
        }
        self.mcmc.validate()?;
        self.criteria.validate(&self.thresholds)
    }
}

#[derive(Debug, Clone)]
pub struct FisherScenario {
    pub config: FisherConfig,
    pub casemix: Arc<CaseMix>,
    pub reference: ReferenceSpec,
}

#[derive(Debug, Clone)]
pub struct FisherOutput {
    pub output: ScenarioOutput,
    pub information: UnitInformation,
    /// `(n, label, draws)` per block, in block order.
    pub coefficient_draws: Vec<(usize, String, CoefficientDraws)>,
}

pub fn run_fisher(scenario: &FisherScenario) -> Result<FisherOutput> {
    let config = &scenario.config;
    config.validate()?;
    let ctx = PopulationContext::build(
        Arc::clone(&scenario.casemix),
        scenario.reference.clone(),
        &config.thresholds,
        config.master_seed,
        config.instability_sample,
    )?;
    let reference = single_reference(&ctx)?.clone();
    let info = unit_information(&ctx.casemix, &reference)?;
    let seed = config.master_seed;
    let mut blocks = Vec::new();
    let mut coefficient_draws = Vec::new();
    for &n in &config.n_values {
        for (s, a) in config.approximations.iter().enumerate() {
            let draw_seed = derive_seed(derive_seed(seed, n as u64, Role::Fit), s as u64, Role::Fit);
            let draws = match &a.config {
                ApproximationConfig::Mvn => draw_mvn_models(&reference, &info, n, config.draws, draw_seed)?,
                ApproximationConfig::BayesOnesample(prior) => {
                    let mcmc = McmcConfig {
                        draws: config.draws,
                        ..config.mcmc.clone()
                    };
                    bayes_onesample(&reference, &info, n, prior, &mcmc, draw_seed)?
                }
            };
            let label = a.label();
            blocks.push(approx_block(&draws, &ctx, &label, seed, config.curves_emitted)?);
            coefficient_draws.push((n, label, draws));
        }
    }
    let mut warnings = Vec::new();
    if config.draws < RECOMMENDED_ITERATIONS {
        warnings.push(format!(
            "{} draws requested; at least {RECOMMENDED_ITERATIONS} are recommended",
            config.draws
        ));
    }
    for (n, label, d) in &coefficient_draws {
        if d.low_acceptance {
            warnings.push(format!("n={n} strategy={label}: MCMC acceptance collapsed"));
        }
        if d.split_chain_ok == Some(false) {
            warnings.push(format!("n={n} strategy={label}: split-chain means disagree"));
        }
    }
    let meta = ReportMeta {
        master_seed: seed,
        iterations: config.draws,
        criteria: &config.criteria,
        warnings,
    };
    let report = SummaryReport::from_blocks(&blocks, meta, &ctx, None);
    Ok(FisherOutput {
        output: ScenarioOutput { blocks, report },
        information: info,
        coefficient_draws,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::devstrat::mcmc::batch_means_se;
    use crate::devstrat::LambdaSqPrior;
    use crate::popgen::Column;

    fn normal_casemix(rows: usize, cols: usize, seed: u64) -> CaseMix {
        let mut rng = stream(seed, 0, Role::Synthesis);
        let data: Vec<f64> = (0..rows * cols).map(|_| StandardNormal.sample(&mut rng)).collect();
        let columns = (0..cols).map(|j| Column::continuous(format!("x{j}"))).collect();
        CaseMix::new(columns, Matrix::new(rows, cols, data), None).unwrap()
    }

    fn model(cm: &CaseMix, intercept: f64, weights: Vec<f64>) -> ReferenceModel {
        ReferenceModel::new(intercept, 1.0, weights, cm.column_names()).unwrap()
    }

    // Direct averaging of p(1−p) x xᵀ, element by element.
    fn direct_information(cm: &CaseMix, coefs: &[f64]) -> Vec<Vec<f64>> {
        let d = coefs.len();
        let mut out = vec![vec![0.0; d]; d];
        for i in 0..cm.n_rows() {
            let mut x = vec![1.0];
            x.extend_from_slice(cm.row(i));
            let eta: f64 = x.iter().zip(coefs).map(|(a, b)| a * b).sum();
            let p = 1.0 / (1.0 + (-eta).exp());
            for a in 0..d {
                for b in 0..d {
                    out[a][b] += p * (1.0 - p) * x[a] * x[b] / cm.n_rows() as f64;
                }
            }
        }
        out
    }

    #[test]
    fn intercept_only_half_risk() {
        let cm = CaseMix::new(vec![], Matrix::new(10, 0, vec![]), None).unwrap();
        let m = ReferenceModel::new(0.0, 1.0, vec![], vec![]).unwrap();
        let info = unit_information(&cm, &m).unwrap();
        assert_eq!(info.matrix.nrows(), 1);
        assert!((info.matrix[(0, 0)] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn null_predictor_gives_quarter_identity() {
        let cm = normal_casemix(100_000, 1, 3);
        let info = unit_information(&cm, &model(&cm, 0.0, vec![0.0])).unwrap();
        for a in 0..2 {
            for b in 0..2 {
                let expect = if a == b { 0.25 } else { 0.0 };
                assert!((info.matrix[(a, b)] - expect).abs() < 0.003);
            }
        }
    }

    #[test]
    fn matches_direct_average_and_is_symmetric() {
        let cm = normal_casemix(2000, 3, 5);
        let coefs = [0.4, 0.8, -0.5, 0.2];
        let info = unit_information(&cm, &model(&cm, 0.4, coefs[1..].to_vec())).unwrap();
        let direct = direct_information(&cm, &coefs);
        for a in 0..4 {
            for b in 0..4 {
                assert!((info.matrix[(a, b)] - direct[a][b]).abs() < 1e-12);
                assert!((info.matrix[(a, b)] - info.matrix[(b, a)]).abs() < 1e-12);
            }
        }
        assert!(info.matrix.clone().cholesky().is_some());
    }

    #[test]
    fn duplication_and_row_order_leave_information_unchanged() {
        let cm = normal_casemix(500, 2, 8);
        let m = model(&cm, -0.3, vec![1.0, 0.5]);
        let base = unit_information(&cm, &m).unwrap();
        let mut idx: Vec<usize> = (0..500).rev().collect();
        idx.extend(0..500);
        let doubled = unit_information(&cm.select_rows(&idx), &m).unwrap();
        assert!((&base.matrix - &doubled.matrix).amax() < 1e-12);
    }

    #[test]
    fn noise_columns_leave_original_block() {
        let cm = normal_casemix(100_000, 2, 9);
        let m = model(&cm, 0.2, vec![0.7, -0.4]);
        let base = unit_information(&cm, &m).unwrap();
        let noisy = cm.with_noise_columns(3, 77).unwrap();
        let ext = unit_information(&noisy, &m.extended_to(&noisy).unwrap()).unwrap();
        let sub = ext.matrix.view((0, 0), (3, 3));
        assert!((sub - &base.matrix).amax() < 1e-10);
        for a in 3..6 {
            for b in 0..3 {
                assert!(ext.matrix[(a, b)].abs() < 0.01);
            }
        }
    }

    #[test]
    fn rank_deficiency_names_column() {
        let base = normal_casemix(200, 1, 2);
        let vals: Vec<f64> = (0..200).flat_map(|i| [base.row(i)[0], 2.0 * base.row(i)[0]]).collect();
        let cm = CaseMix::new(
            vec![Column::continuous("a"), Column::continuous("b")],
            Matrix::new(200, 2, vals),
            None,
        )
        .unwrap();
        match unit_information(&cm, &model(&cm, 0.0, vec![0.1, 0.1])) {
            Err(Error::RankDeficient(cols)) => assert_eq!(cols, vec!["b".to_string()]),
            other => panic!("expected rank deficiency, got {other:?}"),
        }
    }

    #[test]
    fn huge_n_collapses_to_reference() {
        let cm = normal_casemix(5000, 3, 1);
        let m = model(&cm, 0.5, vec![0.3, -0.6, 0.9]);
        let info = unit_information(&cm, &m).unwrap();
        let d = draw_mvn_models(&m, &info, 1_000_000_000_000, 50, 4).unwrap();
        let beta = m.effective_coefficients();
        for i in 0..d.len() {
            for (a, b) in d.matrix.row(i).iter().zip(&beta) {
                assert!((a - b).abs() < 1e-4);
            }
        }
    }

    #[test]
    fn mvn_covariance_matches_inverse_information() {
        let cm = normal_casemix(20_000, 2, 6);
        let m = model(&cm, 0.8, vec![0.5, -0.3]);
        let info = unit_information(&cm, &m).unwrap();
        let d = draw_mvn_models(&m, &info, 456, 100_000, 12).unwrap();
        let emp = d.covariance();
        let exact = info.covariance(456).unwrap();
        for a in 0..3 {
            for b in 0..3 {
                let tol = 0.05 * (exact[(a, a)] * exact[(b, b)]).sqrt();
                assert!((emp[(a, b)] - exact[(a, b)]).abs() < tol, "({a},{b}) {} vs {}", emp[(a, b)], exact[(a, b)]);
            }
        }
        let doubled = info.covariance(912).unwrap();
        assert!((doubled * 2.0 - exact).amax() < 1e-15);
    }

    #[test]
    fn standardisation_round_trips() {
        let cm = normal_casemix(1000, 3, 2).select_rows(&(0..1000).collect::<Vec<_>>());
        let m = model(&cm, 0.1, vec![0.4, 0.2, -0.3]);
        let info = unit_information(&cm, &m).unwrap();
        let beta = m.effective_coefficients();
        let back = info.original_coefficients(&info.to_standardised(&beta));
        for (a, b) in back.iter().zip(&beta) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn flat_prior_onesample_matches_mvn() {
        let cm = normal_casemix(20_000, 2, 21);
        let m = model(&cm, 0.6, vec![0.8, -0.5]);
        let info = unit_information(&cm, &m).unwrap();
        let prior = PriorSpec::new(PenaltyFamily::Ridge)
            .with_intercept_variance(1e12)
            .with_lambda_sq(LambdaSqPrior::Fixed(1e12));
        let mcmc = McmcConfig {
            burn_in: 2000,
            thin: 5,
            draws: 4000,
            ..McmcConfig::default()
        };
        let d = bayes_onesample(&m, &info, 300, &prior, &mcmc, 5).unwrap();
        assert!(!d.low_acceptance);
        let beta = m.effective_coefficients();
        let exact = info.covariance(300).unwrap();
        let mean = d.mean();
        let cov = d.covariance();
        for j in 0..3 {
            let series: Vec<f64> = (0..d.len()).map(|i| d.matrix.get(i, j)).collect();
            let se = batch_means_se(&series);
            assert!((mean[j] - beta[j]).abs() < 4.0 * se, "mean {j}: {} vs {}", mean[j], beta[j]);
            assert!((cov[(j, j)] / exact[(j, j)] - 1.0).abs() < 0.15);
        }
    }

    #[test]
    fn ridge_onesample_shrinks_and_reproduces() {
        let cm = normal_casemix(20_000, 3, 31);
        let m = model(&cm, -0.2, vec![0.4, 0.1, -0.3]);
        let info = unit_information(&cm, &m).unwrap();
        let prior = PriorSpec::new(PenaltyFamily::Ridge).with_lambda_sq(LambdaSqPrior::Fixed(0.01));
        let mcmc = McmcConfig {
            burn_in: 1000,
            draws: 500,
            ..McmcConfig::default()
        };
        let a = bayes_onesample(&m, &info, 100, &prior, &mcmc, 9).unwrap();
        let b = bayes_onesample(&m, &info, 100, &prior, &mcmc, 9).unwrap();
        assert_eq!(a, b);
        let beta = m.effective_coefficients();
        let mean = a.mean();
        for j in 1..4 {
            assert!(mean[j].abs() < beta[j].abs());
        }
    }

    #[test]
    fn reference_draw_is_perfectly_calibrated() {
        let cm = Arc::new(normal_casemix(50_000, 2, 41));
        let m = model(&cm, 0.3, vec![1.0, -0.7]);
        let ctx = PopulationContext::build(Arc::clone(&cm), ReferenceSpec::Single(m.clone()), &[0.5], 7, 100).unwrap();
        let beta = m.effective_coefficients();
        let draws = CoefficientDraws {
            matrix: Matrix::new(1, 3, beta),
            provenance: Provenance::Mvn,
            n_used: 200,
            column_names: cm.column_names(),
            acceptance: None,
            low_acceptance: false,
            split_chain_ok: None,
        };
        let out = approx_scenario(&draws, &ctx, "ref", &CriteriaSpec::default(), 7, 1).unwrap();
        let b = &out.report.blocks[0];
        let slope = b.metric("cal_slope", None, None).unwrap().mean.unwrap();
        assert!((slope - 1.0).abs() < 0.05, "slope {slope}");
        let rvsi = b.metric("rvsi_model", Some(0.5), None).unwrap().mean.unwrap();
        assert!((rvsi - 100.0).abs() < 1e-9);
    }

    #[test]
    fn run_fisher_is_deterministic_and_rejects_mixtures() {
        let cm = Arc::new(normal_casemix(5000, 2, 51));
        let m = model(&cm, 0.3, vec![1.0, -0.7]);
        let config: FisherConfig = serde_json::from_str(
            r#"{"n_values":[100],"draws":20,"approximations":[{"kind":"mvn"},
                {"kind":"bayes_onesample","family":"ridge"}],"master_seed":3,
                "instability_sample":50,"mcmc":{"burn_in":200}}"#,
        )
        .unwrap();
        let s = FisherScenario {
            config,
            casemix: Arc::clone(&cm),
            reference: ReferenceSpec::Single(m.clone()),
        };
        let a = run_fisher(&s).unwrap();
        let b = run_fisher(&s).unwrap();
        assert_eq!(a.output.report, b.output.report);
        assert_eq!(a.output.blocks.len(), 2);
        assert_eq!(a.output.blocks[1].strategy, "bayes_ridge_onesample");

        let mut mixed = s.clone();
        mixed.reference = ReferenceSpec::Mixture(crate::engine::ReferenceMixture {
            models: vec![m.clone(), m],
            probabilities: vec![0.5, 0.5],
        });
        assert!(matches!(run_fisher(&mixed), Err(Error::Config(_))));
    }

    #[test]
    fn csv_export_has_header_and_rows() {
        let cm = normal_casemix(1000, 2, 61);
        let m = model(&cm, 0.1, vec![0.2, 0.3]);
        let info = unit_information(&cm, &m).unwrap();
        let d = draw_mvn_models(&m, &info, 100, 5, 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("coef.csv");
        d.write_csv(&p).unwrap();
        let text = std::fs::read_to_string(p).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "draw,intercept,x0,x1");
        assert_eq!(lines.len(), 6);
    }
}

//! Simulation-based sample size planning for clinical prediction models.
//!
//! Given a case-mix, a reference ("true") logistic model and a model
//! development strategy, the engine repeatedly draws development samples of
//! size `n`, fits the strategy, and evaluates every fitted model on a large
//! target population. The resulting draw distributions summarise expected
//! degradation, prediction instability and assurance probabilities.
//!
//! The [`fisher`] module provides the fast path: coefficient draws from the
//! unit-information decomposition of the sampling covariance, optionally
//! combined with shrinkage priors in a one-sample Bayesian analysis.

pub mod devstrat;
pub mod engine;
pub mod error;
pub mod fisher;
pub mod metrics;
pub mod numeric;
pub mod popgen;
pub mod preset;
pub mod rng;

pub use devstrat::{FittedModel, McmcConfig, PenaltyFamily, PriorSpec, Strategy, StrategyConfig, StrategyKind};
pub use engine::{
    CriteriaSpec, Criterion, MetricDraw, MetricDraws, ReferenceSpec, Scenario, ScenarioConfig,
    ScenarioOutput, SummaryReport,
};
pub use error::{Error, Result};
pub use fisher::{CoefficientDraws, FisherConfig, FisherScenario, UnitInformation};
pub use popgen::{
    CaseMix, Column, ColumnKind, DevelopmentSample, Marginal, MarginalSpec, ReferenceModel,
    TargetPopulation,
};

//! Case-mix ingestion and synthesis, reference-model calibration, and
//! generation of target populations and development samples.

mod casemix;
mod population;
mod reference;
mod synth;

pub use casemix::{ingest_casemix, read_casemix, CaseMix, Column, ColumnKind, Subgroups};
pub use population::{
    build_population, draw_sample, sample_outcomes, DevelopmentSample, TargetPopulation,
    MIN_POPULATION_ROWS,
};
pub use reference::{
    calibrate_reference, reference_risks, CalibratedReference, CalibrationOptions,
    ReferenceModel,
};
pub use synth::{synthesize_casemix, Marginal, MarginalColumn, MarginalSpec};

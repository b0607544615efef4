//! Shared fixtures for the benchmarks: the surrogate pre-eclampsia case-mix
//! with its calibrated reference model.

use samplan::popgen::{
    calibrate_reference, draw_sample, reference_risks, sample_outcomes, synthesize_casemix, CalibrationOptions,
};
use samplan::preset::{
    preeclampsia_column_names, preeclampsia_marginals, preeclampsia_weights, PREECLAMPSIA_CSTAT,
    PREECLAMPSIA_PREVALENCE,
};
use samplan::{CaseMix, DevelopmentSample, ReferenceModel};

pub struct Fixture {
    pub casemix: CaseMix,
    pub reference: ReferenceModel,
    pub risks: Vec<f64>,
    pub outcomes: Vec<u8>,
}

pub fn preeclampsia(rows: usize) -> Fixture {
    let casemix = synthesize_casemix(&preeclampsia_marginals(), rows, 1).expect("valid marginals");
    let reference = calibrate_reference(
        &preeclampsia_weights(),
        &preeclampsia_column_names(),
        &casemix,
        PREECLAMPSIA_CSTAT,
        PREECLAMPSIA_PREVALENCE,
        CalibrationOptions::default(),
    )
    .expect("reachable targets")
    .model;
    let risks = reference_risks(&reference, &casemix).expect("aligned");
    let outcomes = sample_outcomes(&risks, 2);
    Fixture {
        casemix,
        reference,
        risks,
        outcomes,
    }
}

impl Fixture {
    pub fn sample(&self, n: usize, seed: u64) -> DevelopmentSample {
        draw_sample(&self.casemix, &self.reference, n, seed).expect("n within the case-mix")
    }
}

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::numeric::{logistic, Matrix};
use crate::popgen::{CaseMix, Column, DevelopmentSample};
use crate::rng::{stream, Role};

pub fn sample_from(rows: Vec<Vec<f64>>, y: Vec<u8>) -> DevelopmentSample {
    let p = rows[0].len();
    let cols = (0..p).map(|j| Column::continuous(format!("x{j}"))).collect();
    let cm = CaseMix::new(cols, Matrix::from_rows(&rows), None).unwrap();
    DevelopmentSample::new(cm, y, 0).unwrap()
}

/// Standard-normal predictors with logistic outcomes; `beta[0]` is the
/// intercept.
pub fn simulated(n: usize, beta: &[f64], seed: u64) -> DevelopmentSample {
    let mut rng = stream(seed, 0, Role::Sample);
    let mut rows = Vec::new();
    let mut y = Vec::new();
    for _ in 0..n {
        let x: Vec<f64> = (1..beta.len()).map(|_| StandardNormal.sample(&mut rng)).collect();
        let eta = beta[0] + x.iter().zip(&beta[1..]).map(|(a, b)| a * b).sum::<f64>();
        y.push(u8::from(rng.random::<f64>() < logistic(eta)));
        rows.push(x);
    }
    sample_from(rows, y)
}

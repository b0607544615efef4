//! Newton/IRLS core for logistic regression, shared by model development
//! and recalibration.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_len, Error, Result};
use crate::numeric::{logistic, Matrix};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IrlsOptions {
    pub max_iter: usize,
    /// Convergence when `max_j |Σ_i (y_i − p_i) x_ij| < tol`.
    pub tol: f64,
}

impl Default for IrlsOptions {
    fn default() -> Self {
        Self {
            max_iter: 50,
            tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticFit {
    pub coefficients: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub log_likelihood: f64,
    pub max_abs_score: f64,
}

#[inline]
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn linear_predictor(design: &Matrix, beta: &[f64], offset: Option<&[f64]>, out: &mut [f64]) {
    for (i, eta) in out.iter_mut().enumerate() {
        let row = design.row(i);
        let mut s = offset.map_or(0.0, |o| o[i]);
        for (x, b) in row.iter().zip(beta) {
            s += x * b;
        }
        *eta = s;
    }
}

/// Exact Bernoulli log-likelihood of a logistic model at linear predictor `eta`.
pub fn loglik_from_eta(eta: &[f64], y: &[u8]) -> f64 {
    eta.iter()
        .zip(y)
        .map(|(&e, &yi)| f64::from(yi) * e - softplus(e))
        .sum()
}

/// Score `Xᵀ(y − p)` at the given coefficients.
pub fn score(design: &Matrix, y: &[u8], beta: &[f64], offset: Option<&[f64]>) -> Vec<f64> {
    let mut eta = vec![0.0; design.rows()];
    linear_predictor(design, beta, offset, &mut eta);
    let mut g = vec![0.0; design.cols()];
    for i in 0..design.rows() {
        let r = f64::from(y[i]) - logistic(eta[i]);
        for (gj, x) in g.iter_mut().zip(design.row(i)) {
            *gj += r * x;
        }
    }
    g
}

/// Log-likelihood, score and information at one linear predictor, from a
/// single pass over the rows.
struct Pass {
    ll: f64,
    g: DVector<f64>,
    h: DMatrix<f64>,
}

impl Pass {
    fn new(k: usize) -> Self {
        Self {
            ll: 0.0,
            g: DVector::zeros(k),
            h: DMatrix::zeros(k, k),
        }
    }

    fn evaluate(&mut self, design: &Matrix, y: &[u8], eta: &[f64]) {
        let k = design.cols();
        let mut g = vec![0.0; k];
        let mut h = vec![0.0; k * k];
        let mut ll = 0.0;
        for (i, (&e, &yi)) in eta.iter().zip(y).enumerate() {
            let z = (-e.abs()).exp();
            let p = if e >= 0.0 { 1.0 / (1.0 + z) } else { z / (1.0 + z) };
            let yf = f64::from(yi);
            ll += yf * e - (e.max(0.0) + z.ln_1p());
            let w = p * (1.0 - p);
            let r = yf - p;
            let row = design.row(i);
            for a in 0..k {
                g[a] += r * row[a];
                let wa = w * row[a];
                let ha = &mut h[a * k..a * k + a + 1];
                for (hb, xb) in ha.iter_mut().zip(row) {
                    *hb += wa * xb;
                }
            }
        }
        self.ll = ll;
        for a in 0..k {
            self.g[a] = g[a];
            for b in 0..=a {
                self.h[(a, b)] = h[a * k + b];
                self.h[(b, a)] = h[a * k + b];
            }
        }
    }
}

/// Maximum-likelihood logistic regression by Newton–Raphson with step
/// halving. `design` must contain any intercept column explicitly.
///
/// Non-convergence is reported through [`LogisticFit::converged`]; an error
/// is returned only for malformed input.
pub fn fit_logistic(
    design: &Matrix,
    y: &[u8],
    offset: Option<&[f64]>,
    start: Option<&[f64]>,
    options: IrlsOptions,
) -> Result<LogisticFit> {
    let (n, k) = (design.rows(), design.cols());
    check_len(n, y.len())?;
    if let Some(o) = offset {
        check_len(n, o.len())?;
    }
    let mut beta = match start {
        Some(s) => {
            check_len(k, s.len())?;
            s.to_vec()
        }
        None => vec![0.0; k],
    };
    let mut eta = vec![0.0; n];
    let mut cur = Pass::new(k);
    linear_predictor(design, &beta, offset, &mut eta);
    cur.evaluate(design, y, &eta);
    let mut max_abs_score = f64::INFINITY;
    let mut converged = false;
    let mut iterations = 0;
    let mut trial = vec![0.0; k];
    let mut trial_eta = vec![0.0; n];
    let mut next = Pass::new(k);

    while iterations <= options.max_iter {
        max_abs_score = cur.g.amax();
        if max_abs_score < options.tol {
            converged = true;
            break;
        }
        if iterations == options.max_iter {
            break;
        }
        iterations += 1;
        let Some(step) = solve_spd(cur.h.clone(), &cur.g) else {
            break;
        };

        let mut scale = 1.0;
        loop {
            for j in 0..k {
                trial[j] = beta[j] + scale * step[j];
            }
            linear_predictor(design, &trial, offset, &mut trial_eta);
            next.evaluate(design, y, &trial_eta);
            if next.ll >= cur.ll - 1e-12 * (1.0 + cur.ll.abs()) || scale < 1e-10 {
                beta.copy_from_slice(&trial);
                std::mem::swap(&mut eta, &mut trial_eta);
                std::mem::swap(&mut cur, &mut next);
                break;
            }
            scale *= 0.5;
        }
    }
    let ll = cur.ll;

    if beta.iter().any(|b| !b.is_finite()) {
        return Err(Error::NonConvergence("non-finite coefficients".into()));
    }
    Ok(LogisticFit {
        coefficients: beta,
        converged,
        iterations,
        log_likelihood: ll,
        max_abs_score,
    })
}

fn solve_spd(h: DMatrix<f64>, g: &DVector<f64>) -> Option<DVector<f64>> {
    if let Some(c) = h.clone().cholesky() {
        return Some(c.solve(g));
    }
    h.lu().solve(g)
}

/// Log-likelihood of the intercept-only model for outcomes `y`.
pub fn null_loglik(y: &[u8]) -> f64 {
    let n = y.len() as f64;
    let e = y.iter().map(|&v| f64::from(v)).sum::<f64>();
    let mut ll = 0.0;
    if e > 0.0 {
        ll += e * (e / n).ln();
    }
    if e < n {
        ll += (n - e) * ((n - e) / n).ln();
    }
    ll
}

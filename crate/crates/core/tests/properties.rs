use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use samplan::devstrat::{fit_mle_logistic, shrink_uniform};
use samplan::fisher::unit_information;
use samplan::metrics::{calibration_fit, interval_widths};
use samplan::numeric::{logistic, Matrix};
use samplan::popgen::reference_risks;
use samplan::{CaseMix, Column, DevelopmentSample, McmcConfig, ReferenceModel, Strategy};

fn normal_rows(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Vec<Vec<f64>> {
    (0..rows)
        .map(|_| (0..cols).map(|_| StandardNormal.sample(&mut *rng)).collect())
        .collect()
}

fn casemix(rows: &[Vec<f64>]) -> CaseMix {
    let cols = (0..rows[0].len()).map(|j| Column::continuous(format!("x{j}"))).collect();
    CaseMix::new(cols, Matrix::from_rows(rows), None).unwrap()
}

fn sample(seed: u64, n: usize, beta: &[f64]) -> DevelopmentSample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = normal_rows(&mut rng, n, beta.len() - 1);
    let y = rows
        .iter()
        .map(|x| {
            let eta = beta[0] + x.iter().zip(&beta[1..]).map(|(a, b)| a * b).sum::<f64>();
            u8::from(rng.random::<f64>() < logistic(eta))
        })
        .collect();
    DevelopmentSample::new(casemix(&rows), y, 0).unwrap()
}

fn permutation(rng: &mut ChaCha8Rng, n: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        idx.swap(i, rng.random_range(0..=i));
    }
    idx
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn reference_risks_follow_row_order(seed in 0u64..10_000, rows in 2usize..200) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = normal_rows(&mut rng, rows, 3);
        let cm = casemix(&data);
        let m = ReferenceModel::new(0.3, 0.8, vec![1.0, -0.5, 0.25], cm.column_names()).unwrap();
        let risks = reference_risks(&m, &cm).unwrap();
        let perm = permutation(&mut rng, rows);
        let permuted = reference_risks(&m, &cm.select_rows(&perm)).unwrap();
        for (k, &i) in perm.iter().enumerate() {
            prop_assert_eq!(permuted[k], risks[i]);
        }
    }

    #[test]
    fn unit_information_ignores_row_order(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = normal_rows(&mut rng, 300, 2);
        let cm = casemix(&data);
        let m = ReferenceModel::new(-0.2, 1.0, vec![0.6, 0.3], cm.column_names()).unwrap();
        let a = unit_information(&cm, &m).unwrap();
        let b = unit_information(&cm.select_rows(&permutation(&mut rng, 300)), &m).unwrap();
        for (x, y) in a.matrix.iter().zip(b.matrix.iter()) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn calibration_slope_ignores_logit_shift(seed in 0u64..10_000, shift in -2.0f64..2.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lp: Vec<f64> = (0..400).map(|_| StandardNormal.sample(&mut rng)).collect();
        let y: Vec<u8> = lp.iter().map(|&e| u8::from(rng.random::<f64>() < logistic(0.8 * e))).collect();
        let risks: Vec<f64> = lp.iter().map(|&e| logistic(e)).collect();
        let shifted: Vec<f64> = lp.iter().map(|&e| logistic(e + shift)).collect();
        let a = calibration_fit(&risks, &y).unwrap();
        let b = calibration_fit(&shifted, &y).unwrap();
        prop_assert!((a.slope - b.slope).abs() < 1e-6);
        prop_assert!((b.intercept - (a.intercept - shift * a.slope)).abs() < 1e-6);
    }

    #[test]
    fn interval_widths_follow_individuals(seed in 0u64..10_000, individuals in 1usize..30) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let draws: Vec<Vec<f64>> = (0..100)
            .map(|_| (0..individuals).map(|_| rng.random::<f64>()).collect())
            .collect();
        let perm = permutation(&mut rng, individuals);
        let permuted: Vec<Vec<f64>> = draws.iter().map(|d| perm.iter().map(|&i| d[i]).collect()).collect();
        let w = interval_widths(&Matrix::from_rows(&draws));
        let wp = interval_widths(&Matrix::from_rows(&permuted));
        for (k, &i) in perm.iter().enumerate() {
            prop_assert_eq!(wp[k], w[i]);
        }
    }

    #[test]
    fn uniform_shrinkage_never_grows_slopes(seed in 0u64..10_000, n in 80usize..400) {
        let s = sample(seed, n, &[-0.3, 0.7, -0.4, 0.1]);
        let mle = fit_mle_logistic(&s, 100, 1e-9).unwrap();
        prop_assume!(mle.diagnostics.converged);
        let shrunk = shrink_uniform(&mle, &s).unwrap();
        let a = mle.coefficients.unwrap();
        let b = shrunk.coefficients.unwrap();
        for (x, y) in a.weights.iter().zip(&b.weights) {
            prop_assert!(y.abs() <= x.abs() + 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn strategies_are_deterministic_given_seed(seed in 0u64..10_000, fit_seed in 0u64..1_000) {
        let s = sample(seed, 150, &[0.2, 0.9, -0.5]);
        let mcmc = McmcConfig { burn_in: 200, thin: 1, draws: 100, ..McmcConfig::default() };
        for json in [
            r#"{"kind": "mle"}"#,
            r#"{"kind": "shrunk"}"#,
            r#"{"kind": "lasso_cv", "folds": 5}"#,
            r#"{"kind": "bayes_ridge"}"#,
            r#"{"kind": "forest", "n_trees": 10, "max_depth": 3}"#,
        ] {
            let strategy: Strategy = serde_json::from_str(json).unwrap();
            let a = strategy.config.fit(&s, &mcmc, fit_seed);
            let b = strategy.config.fit(&s, &mcmc, fit_seed);
            prop_assert_eq!(a.ok(), b.ok(), "{}", json);
        }
    }
}

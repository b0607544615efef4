use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use samplan::metrics::{c_statistic, calibration_fit, net_benefit, prediction_error};
use samplan_bench::preeclampsia;

fn metrics(c: &mut Criterion) {
    let f = preeclampsia(100_000);
    let shifted: Vec<f64> = f.risks.iter().map(|p| (p * 0.9 + 0.05).min(1.0)).collect();
    let mut g = c.benchmark_group("metrics_100k");
    g.sample_size(20);
    g.bench_function("c_statistic", |b| b.iter(|| c_statistic(&shifted, &f.outcomes).unwrap()));
    g.bench_function("calibration_fit", |b| b.iter(|| calibration_fit(&shifted, &f.outcomes).unwrap()));
    g.bench_function("net_benefit", |b| b.iter(|| net_benefit(&shifted, &f.outcomes, 0.5)));
    g.bench_function("prediction_error", |b| b.iter(|| prediction_error(&shifted, &f.risks).unwrap()));
    g.finish();

    let mut g = c.benchmark_group("c_statistic_rows");
    for rows in [1_000, 10_000, 100_000] {
        g.bench_with_input(BenchmarkId::from_parameter(rows), &rows, |b, &rows| {
            b.iter(|| c_statistic(&shifted[..rows], &f.outcomes[..rows]).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, metrics);
criterion_main!(benches);

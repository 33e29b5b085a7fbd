use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use httq_core::limit::{cholesky, covariance_matrix};
use httq_core::*;

fn bench_simulate(c: &mut Criterion) {
    let mut group = c.benchmark_group("simulate");
    group.sample_size(20);
    for n in [100u64, 1600] {
        let config = SystemConfig::markovian(n, 1.0, 1.0, -1.0, 1.0, 10.0);
        group.bench_with_input(BenchmarkId::from_parameter(n), &config, |b, config| {
            let mut rep = 0;
            b.iter(|| {
                rep += 1;
                black_box(simulate_config(config, 1, rep).unwrap())
            })
        });
    }
    group.finish();
}

fn bench_renewal(c: &mut Criterion) {
    let erlang = Distribution::erlang(2, 2.0).unwrap();
    c.bench_function("renewal erlang-2 T=10", |b| {
        b.iter(|| RenewalTable::with_default_step(black_box(&erlang), 10.0).unwrap())
    });
}

fn bench_picard(c: &mut Criterion) {
    let h = 0.01;
    let table = RenewalTable::compute(&Distribution::erlang(2, 2.0).unwrap(), 5.0, h).unwrap();
    let times: Vec<f64> = (0..=500).map(|k| k as f64 * h).collect();
    let values: Vec<f64> = times.iter().map(|t| (3.0 * t).sin() - 0.2 * t).collect();
    let y = CadlagPath::linear(times, values).unwrap();
    let g = Drift::linear(1.0).unwrap();
    c.bench_function("phi_mg picard m=500", |b| {
        b.iter(|| {
            solve_phi_mg(&y, &table, &g, DriftSign::Minus, h, PicardOptions::default()).unwrap()
        })
    });
    c.bench_function("phi_mg forward m=500", |b| {
        b.iter(|| solve_phi_mg_forward(&y, &table, &g, DriftSign::Minus, h).unwrap())
    });
}

fn bench_cholesky(c: &mut Criterion) {
    let h = 0.01;
    let table = RenewalTable::compute(&Distribution::exponential(1.0).unwrap(), 5.0, h).unwrap();
    let times: Vec<f64> = (1..=500).map(|k| k as f64 * h).collect();
    let a = covariance_matrix(&times, &table);
    let mut group = c.benchmark_group("cholesky");
    group.sample_size(10);
    group.bench_function("m=500", |b| b.iter(|| cholesky(black_box(&a), times.len()).unwrap()));
    group.finish();
}

criterion_group!(benches, bench_simulate, bench_renewal, bench_picard, bench_cholesky);
criterion_main!(benches);

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use hhe_core::asymptotics;
use hhe_core::gontcharoff::susceptibility_pmf;
use hhe_core::simulator::run_batch;
use hhe_core::stats::{ks_statistic, major_fractions};
use hhe_core::verify::benchmark_models;
use hhe_core::{ContactModel, GlobalMixing, LocalMixing, MajorCutoff, PopulationSpec};

const MODE: LocalMixing = LocalMixing::WithReplacement;

fn poisson_spec(n: u32, seed: u64) -> PopulationSpec {
    PopulationSpec {
        model: ContactModel::IndependentPoisson { lambda_g: 1.0, lambda_l: 1.0 },
        n,
        h: 2,
        p: 0.0,
        m: 1,
        local_mode: MODE,
        global_mode: GlobalMixing::WithReplacement,
        seed,
    }
}

/// Full limit summary (outbreak probability, final size, spread) for each
/// benchmark model at h = 2.
fn bench_summary(c: &mut Criterion) {
    let mut group = c.benchmark_group("asymptotic_summary");
    for (name, model) in benchmark_models() {
        group.bench_with_input(BenchmarkId::from_parameter(name), &model, |b, m| {
            b.iter(|| asymptotics::summary(black_box(m), 2, 0.0, 1, MODE).unwrap());
        });
    }
    group.finish();
}

/// The within-household recursion alone, across household sizes. Cost grows
/// quadratically in h; h = 40 is the largest size the homogenization checks
/// use.
fn bench_susceptibility(c: &mut Criterion) {
    let model = ContactModel::IndependentPoisson { lambda_g: 1.0, lambda_l: 1.0 };
    let mut group = c.benchmark_group("susceptibility_pmf");
    for h in [5u32, 10, 20, 40] {
        group.bench_with_input(BenchmarkId::from_parameter(h), &h, |b, &h| {
            b.iter(|| susceptibility_pmf(black_box(&model), h, MODE).unwrap());
        });
    }
    group.finish();
}

/// Simulator throughput on the population size the consistency checks use.
fn bench_simulator(c: &mut Criterion) {
    let mut group = c.benchmark_group("simulator");
    for n in [250u32, 1000] {
        let spec = poisson_spec(n, 1);
        group.throughput(Throughput::Elements(100));
        group.bench_with_input(BenchmarkId::new("poisson_batch100", n * 2), &spec, |b, s| {
            b.iter(|| run_batch(black_box(s), 100).unwrap());
        });
    }
    group.finish();
}

/// Exact KS distance over a realistic batch of major-outbreak fractions.
fn bench_ks(c: &mut Criterion) {
    let spec = poisson_spec(1000, 3);
    let outcomes = run_batch(&spec, 10_000).unwrap();
    let fractions = major_fractions(&outcomes, spec.n, spec.h, MajorCutoff::Fraction(0.2));
    let limit = asymptotics::summary(&spec.model, 2, 0.0, 1, MODE).unwrap();
    let sigma2 = limit.sigma2.unwrap();
    c.bench_function("ks_statistic", |b| {
        b.iter(|| ks_statistic(black_box(&fractions), limit.z, sigma2, spec.population()).unwrap());
    });
}

criterion_group!(benches, bench_summary, bench_susceptibility, bench_simulator, bench_ks);
criterion_main!(benches);

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use garch_bk::bahadur::{bk_statistics, uniform_remainder, DEFAULT_INTERVAL};
use garch_bk::empirical::oscillation_uniform;
use garch_bk::{build_marginal, simulate, GarchParams, InnovationModel};

fn garch11() -> GarchParams {
    GarchParams::new(0.1, vec![0.8], vec![0.1]).unwrap()
}

fn bench_simulate(c: &mut Criterion) {
    let params = garch11();
    let h = InnovationModel::gaussian();
    let mut g = c.benchmark_group("simulate");
    for n in [4096usize, 65536] {
        g.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, &n| {
            b.iter(|| simulate(&params, &h, n, 1000, black_box(7)).unwrap())
        });
    }
    g.finish();
}

fn bench_remainders(c: &mut Criterion) {
    let params = garch11();
    let h = InnovationModel::gaussian();
    let m = build_marginal(&params, &h, 20_000, 10, 1).unwrap();
    let mut g = c.benchmark_group("remainders");
    g.sample_size(20);
    for n in [4096usize, 65536] {
        let path = simulate(&params, &h, n, 1000, 2).unwrap();
        let mut u: Vec<f64> = path.x.iter().map(|&x| m.cdf(x)).collect();
        u.sort_by(f64::total_cmp);
        g.bench_with_input(BenchmarkId::new("bk_statistics", n), &path.x, |b, x| {
            b.iter(|| bk_statistics(black_box(x), &m, DEFAULT_INTERVAL, 2).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("uniform_remainder", n), &u, |b, u| b.iter(|| uniform_remainder(black_box(u))));
        g.bench_with_input(BenchmarkId::new("oscillation", n), &u, |b, u| {
            b.iter(|| oscillation_uniform(black_box(u), u.len()).unwrap())
        });
    }
    g.finish();
}

fn bench_marginal(c: &mut Criterion) {
    let params = garch11();
    let h = InnovationModel::gaussian();
    let mut g = c.benchmark_group("marginal");
    g.sample_size(10);
    g.bench_function("build_m10000", |b| b.iter(|| build_marginal(&params, &h, 10_000, 10, black_box(3)).unwrap()));
    g.finish();
}

criterion_group!(benches, bench_simulate, bench_remainders, bench_marginal);
criterion_main!(benches);

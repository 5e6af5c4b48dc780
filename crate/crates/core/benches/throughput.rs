//! Criterion benches for the data-parallel hot paths: simplex quadrature,
//! the dual Newton solve, and batch density evaluation.
//!
//! Build with default features to exercise the rayon paths (with a
//! single-thread pool run for comparison), or with `--no-default-features`
//! to bench the sequential fallback. Bench names carry the mode.

use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use cme_core::cme::{solve_cme, ResidualModel, ToleranceSpec};
use cme_core::models::qrse::{qrse_distribution, QrseParams};
use cme_core::posterior::brute_force_log_evidence;
use cme_core::prob::{ObservedCounts, StateGrid};

fn mode() -> &'static str {
    if cme_core::par::is_parallel() {
        "parallel"
    } else {
        "sequential"
    }
}

fn bench_brute_force_evidence(c: &mut Criterion) {
    let counts = ObservedCounts::new(vec![400, 300, 200, 100]).unwrap();
    let model = ResidualModel::new(
        vec![vec![0.0, 1.0, 2.0, 3.0], vec![1.5, 0.5, -0.5, -1.5]],
        vec![],
    )
    .unwrap();
    let tol = ToleranceSpec::new(vec![1.0, 2.0]).unwrap();

    let mut group = c.benchmark_group("brute_force_evidence_k4_res80");
    group.bench_function(mode(), |b| {
        b.iter(|| {
            black_box(
                brute_force_log_evidence(
                    black_box(&counts),
                    Some((black_box(&model), black_box(&tol))),
                    80,
                )
                .unwrap()
                .log_evidence,
            )
        })
    });
    #[cfg(feature = "parallel")]
    {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        group.bench_function("parallel_one_thread", |b| {
            b.iter(|| {
                pool.install(|| {
                    black_box(
                        brute_force_log_evidence(
                            black_box(&counts),
                            Some((black_box(&model), black_box(&tol))),
                            80,
                        )
                        .unwrap()
                        .log_evidence,
                    )
                })
            })
        });
    }
    group.finish();
}

fn bench_dual_solve(c: &mut Criterion) {
    let k = 20_000;
    let xs: Vec<f64> = (0..k).map(|i| -5.0 + 10.0 * i as f64 / (k - 1) as f64).collect();
    let model = ResidualModel::new(vec![xs], vec![]).unwrap();

    let mut group = c.benchmark_group("dual_newton_solve_k20000");
    group.bench_function(mode(), |b| {
        b.iter(|| black_box(solve_cme(black_box(&model), &[1.0]).unwrap().lambda[0]))
    });
    group.finish();
}

fn bench_qrse_density(c: &mut Criterion) {
    let grid = StateGrid::regular_1d(-8.0, 8.0, 4096).unwrap();
    let params = QrseParams::new(0.1, 0.5, -0.1, 0.7).unwrap();

    let mut group = c.benchmark_group("qrse_density_k4096");
    group.bench_function(mode(), |b| {
        b.iter(|| {
            black_box(
                qrse_distribution(black_box(&grid), black_box(&params))
                    .unwrap()
                    .density
                    .get(0),
            )
        })
    });
    group.finish();
}

criterion_group!(
    benches,
    bench_brute_force_evidence,
    bench_dual_solve,
    bench_qrse_density
);
criterion_main!(benches);

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use std::hint::black_box;

use stencilpipe_bench::{stream_copy_on, update_on, FootprintTarget};
use stencilpipe_core::grid::{BlockSpec, FillRule, Grid3};
use stencilpipe_core::kernel::{reference_sweep, GridMode};
use stencilpipe_core::pipeline::{run_pipelined, GridSet, PipelineConfig};

const N: usize = 60;

fn sweeps(c: &mut Criterion) {
    let init = Grid3::new([N; 3], 0, FillRule::Random { seed: 1 }).unwrap();
    let mut g = c.benchmark_group("jacobi_60");
    g.throughput(Throughput::Elements((N * N * N) as u64));
    g.bench_function("reference_sweep", |b| {
        let mut dst = init.clone();
        b.iter(|| reference_sweep(black_box(&init), &mut dst).unwrap());
    });
    for mode in [GridMode::TwoGrid, GridMode::Compressed] {
        let cfg = PipelineConfig {
            team_size: 2,
            block: BlockSpec::new(60, 10, 10),
            grid_mode: mode,
            ..Default::default()
        };
        g.throughput(Throughput::Elements(
            (N * N * N * cfg.updates_per_pass() * 2) as u64,
        ));
        g.bench_with_input(BenchmarkId::new("pipelined_t2", mode), &cfg, |b, cfg| {
            let mut gs = GridSet::new(&init, cfg.grid_mode, cfg.updates_per_pass()).unwrap();
            b.iter(|| run_pipelined(&mut gs, cfg, 2).unwrap());
        });
    }
    g.finish();
}

fn streams(c: &mut Criterion) {
    let n = 1 << 16;
    let mut g = c.benchmark_group("streams");
    g.throughput(Throughput::Bytes(16 * n as u64));
    g.bench_function("update", |b| {
        let mut a = vec![0.0; n];
        b.iter(|| update_on(&mut a, 1, 1, FootprintTarget::Cache).unwrap());
    });
    g.throughput(Throughput::Bytes(24 * n as u64));
    g.bench_function("copy", |b| {
        let a = vec![1.0; n];
        let mut out = vec![0.0; n];
        b.iter(|| stream_copy_on(&a, &mut out, 1, 1).unwrap());
    });
    g.finish();
}

criterion_group!(benches, sweeps, streams);
criterion_main!(benches);

use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use backtest_verify::enumeration::{default_cap, enumerate_bfs, find_fixed_point};
use backtest_verify::harness::adapter::{BuiltinAdapter, BuiltinEngine};
use backtest_verify::harness::build_suites;
use backtest_verify::harness::catalog::{stop_entry_example, SetupCatalog};
use backtest_verify::harness::conformance::{run_conformance, RunConfig};
use backtest_verify::model_candles::GridLayout;
use backtest_verify::oracle::{LayoutSource, Oracle};
use backtest_verify::par::Exec;
use backtest_verify::price::TickSize;
use backtest_verify::types::BacktestMode;

fn execs() -> Vec<(&'static str, Exec)> {
    vec![
        ("sequential", Exec::Sequential),
        #[cfg(feature = "parallel")]
        ("parallel", Exec::Parallel),
    ]
}

fn bench_enumeration(c: &mut Criterion) {
    let layout = GridLayout::canonical(2);
    let grid = layout.level_grid();
    let setup = layout.place(&stop_entry_example()).unwrap();

    let mut group = c.benchmark_group("stop-entry");
    for (name, exec) in execs() {
        group.bench_with_input(BenchmarkId::new("naive-fixed-point", name), &exec, |b, &exec| {
            b.iter(|| find_fixed_point(&setup, &grid, default_cap(2), exec).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("bfs", name), &exec, |b, &exec| {
            b.iter(|| enumerate_bfs(&setup, &grid, exec).unwrap())
        });
    }
    group.finish();

    let catalog = SetupCatalog::default_catalog();
    let big = catalog.entries().iter().find(|e| e.setup.len() == 3).unwrap();
    let layout3 = GridLayout::canonical(3);
    let setup3 = layout3.place(&big.setup).unwrap();
    let grid3 = layout3.level_grid();
    let mut group = c.benchmark_group("three-orders");
    group.sample_size(10);
    for (name, exec) in execs() {
        group.bench_with_input(BenchmarkId::new("bfs", name), &exec, |b, &exec| {
            b.iter(|| enumerate_bfs(&setup3, &grid3, exec).unwrap())
        });
    }
    group.finish();
}

fn bench_harness(c: &mut Criterion) {
    let catalog = SetupCatalog::default_catalog();
    let modes = BacktestMode::ALL.to_vec();
    let mut group = c.benchmark_group("catalog");
    group.sample_size(10);
    for (name, exec) in execs() {
        group.bench_with_input(BenchmarkId::new("build-suites", name), &exec, |b, &exec| {
            b.iter(|| {
                let oracle = Oracle::new(LayoutSource::Canonical, exec);
                build_suites(&catalog, None, &oracle, exec).unwrap()
            })
        });

        let oracle = Arc::new(Oracle::new(LayoutSource::Canonical, exec));
        let suites = build_suites(&catalog, None, &oracle, exec).unwrap();
        let adapter = BuiltinAdapter::new(BuiltinEngine::Reference, TickSize::CENT, Arc::clone(&oracle));
        let jobs = match exec {
            Exec::Sequential => 1,
            #[cfg(feature = "parallel")]
            Exec::Parallel => std::thread::available_parallelism().map_or(1, |n| n.get()),
        };
        let config = RunConfig {
            modes: modes.clone(),
            tick: TickSize::CENT,
            jobs,
            stability: None,
        };
        group.bench_with_input(BenchmarkId::new("conformance", name), &exec, |b, _| {
            b.iter(|| run_conformance(&adapter, &suites, &config))
        });
    }
    group.finish();
}

criterion_group!(benches, bench_enumeration, bench_harness);
criterion_main!(benches);

use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use webmp::experiment::{build_design, preset, run_design, LevelsFile};
use webmp::workload::{generate_synthetic, SyntheticSpec};
use webmp::{run_simulation, PolicyKind, SimConfig, WorkloadPage};

fn mixed_page() -> WorkloadPage {
    let spec = SyntheticSpec::new(vec![(16, 1024), (8, 10 * 1024), (4, 100 * 1024)]);
    generate_synthetic(&spec, 0).unwrap()
}

fn single_run(c: &mut Criterion) {
    let page = mixed_page();
    let scenario = preset("asymmetric").unwrap();
    let config = SimConfig::default();
    let mut group = c.benchmark_group("mixed_page");
    for policy in PolicyKind::ALL {
        group.bench_with_input(BenchmarkId::from_parameter(policy), &policy, |b, &p| {
            b.iter(|| run_simulation(black_box(&page), &scenario, p, &config).unwrap())
        });
    }
    group.finish();
}

fn wide_page(c: &mut Criterion) {
    let mut spec = SyntheticSpec::new(vec![(120, 4 * 1024), (60, 40 * 1024), (20, 400 * 1024)]);
    spec.host_count = 12;
    let page = generate_synthetic(&spec, 1).unwrap();
    let scenario = preset("highly-asym").unwrap();
    let config = SimConfig::default();
    c.bench_function("wide_page_eaf_mptcp", |b| {
        b.iter(|| run_simulation(black_box(&page), &scenario, PolicyKind::EafMptcp, &config).unwrap())
    });
}

fn small_design(c: &mut Criterion) {
    let levels = LevelsFile {
        if1_bw_bps: vec![2e6, 20e6],
        if2_rtt_ms: vec![50.0],
        ..LevelsFile::full_grid()
    };
    let runs = build_design(&levels.with_pages(vec![Arc::new(mixed_page())])).unwrap();
    let config = SimConfig::default();
    c.bench_function("design_224_runs", |b| {
        b.iter(|| run_design(black_box(&runs), &config, 1, 0))
    });
}

criterion_group!(benches, single_run, wide_page, small_design);
criterion_main!(benches);

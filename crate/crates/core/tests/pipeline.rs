use std::fs;
use std::path::Path;
use std::sync::Arc;

use proptest::prelude::*;
use webmp::experiment::{
    build_design, category_by_factor, compute_speedups, emit_reports, preset, read_speedups_csv, run_design, FactorRow,
    LevelsFile, SpeedupCategory,
};
use webmp::workload::{derive_dependencies, generate_synthetic, parse_har, SyntheticSpec, DEFAULT_JITTER_MS};
use webmp::{
    run_simulation, validate_page, BandwidthEstimator, NetworkScenario, PolicyKind, SimConfig, TransferSpec,
    WorkloadPage,
};

fn sample_har() -> Vec<u8> {
    fs::read(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/sample.har")).unwrap()
}

#[test]
fn har_capture_replays_under_every_policy() {
    let entries = parse_har(&sample_har()).unwrap();
    let page = derive_dependencies(&entries, DEFAULT_JITTER_MS).unwrap();
    assert!(validate_page(&page).is_ok());
    assert_eq!(page.name, "www.example.org");
    let scenario = preset("highly-asym").unwrap();
    for policy in PolicyKind::ALL {
        let r = run_simulation(&page, &scenario, policy, &SimConfig::default()).unwrap();
        assert_eq!(r.per_transfer.len(), 5);
        let root = &r.per_transfer["e0"];
        assert_eq!(root.start_s, 0.0);
        for t in &page.transfers {
            for d in &t.deps {
                assert!(r.per_transfer[d].end_s <= r.per_transfer[&t.id].start_s);
            }
        }
    }
}

#[test]
fn reports_conserve_run_counts() {
    let pages: Vec<Arc<WorkloadPage>> = [vec![(4, 1024)], vec![(3, 50 * 1024), (2, 200 * 1024)]]
        .into_iter()
        .map(|g| Arc::new(generate_synthetic(&SyntheticSpec::new(g), 3).unwrap()))
        .collect();
    let levels = LevelsFile {
        policies: vec![
            PolicyKind::Interface(0),
            PolicyKind::Interface(1),
            PolicyKind::Eaf,
            PolicyKind::MptcpRnd,
        ],
        if1_rtt_ms: vec![10.0, 50.0],
        if1_bw_bps: vec![0.5e6, 20e6],
        if2_rtt_ms: vec![20.0, 200.0],
        if2_bw_bps: vec![5e6],
    };
    let runs = build_design(&levels.with_pages(pages)).unwrap();
    let records = run_design(&runs, &SimConfig::default(), 2, 11);
    assert_eq!(records.len(), 4 * 2 * 8);
    let speedups = compute_speedups(&records).unwrap();
    assert_eq!(speedups.len(), records.len());

    let rows = category_by_factor(&speedups);
    let mut factors: Vec<&str> = rows.iter().map(|r| r.factor).collect();
    factors.dedup();
    assert_eq!(factors.len(), 6);
    for f in factors {
        let total: usize = rows.iter().filter(|r| r.factor == f).map(FactorRow::total).sum();
        assert_eq!(total, speedups.len(), "{f}");
    }
    let equal = SpeedupCategory::Equal as usize;
    let if1_row = rows.iter().find(|r| r.factor == "policy" && r.level == "if1").unwrap();
    assert_eq!(if1_row.counts[equal], 16);

    let dir = tempfile::tempdir().unwrap();
    emit_reports(&speedups, dir.path()).unwrap();
    let back = read_speedups_csv(fs::File::open(dir.path().join("speedups.csv")).unwrap()).unwrap();
    assert_eq!(back.len(), speedups.len());
    for (a, b) in back.iter().zip(&speedups) {
        assert!((a.speedup - b.speedup).abs() <= 1e-8 * b.speedup);
        assert_eq!(a.category, b.category);
    }
    let ecdf = fs::read_to_string(dir.path().join("ecdf_mptcp_rnd.csv")).unwrap();
    assert_eq!(ecdf.lines().next(), Some("speedup,cum_fraction"));
    assert!(ecdf.trim_end().ends_with(",1"));
}

#[test]
fn online_estimator_runs_end_to_end() {
    let page = generate_synthetic(
        &SyntheticSpec::new(vec![(16, 1024), (8, 10 * 1024), (4, 100 * 1024)]),
        0,
    )
    .unwrap();
    let config = SimConfig {
        bandwidth_estimator: BandwidthEstimator::Online,
        ..SimConfig::default()
    };
    for name in ["symmetric", "asymmetric", "highly-asym"] {
        let scenario = preset(name).unwrap();
        for policy in [PolicyKind::Eaf, PolicyKind::EafMptcp] {
            let r = run_simulation(&page, &scenario, policy, &config).unwrap();
            assert!(r.page_load_time_s.is_finite() && r.page_load_time_s > 0.0);
        }
    }
}

#[test]
fn pipelining_never_slows_a_single_host_page() {
    let page = generate_synthetic(&SyntheticSpec::new(vec![(40, 3 * 1024)]), 2).unwrap();
    let scenario = NetworkScenario::two(50.0, 2.0, 100.0, 5.0);
    let piped = SimConfig {
        pipelining: true,
        ..SimConfig::default()
    };
    for policy in [PolicyKind::Interface(0), PolicyKind::RoundRobin] {
        let plain = run_simulation(&page, &scenario, policy, &SimConfig::default()).unwrap();
        let fast = run_simulation(&page, &scenario, policy, &piped).unwrap();
        assert!(fast.page_load_time_s <= plain.page_load_time_s, "{policy}");
    }
}

#[test]
fn three_interfaces() {
    let page = generate_synthetic(&SyntheticSpec::new(vec![(6, 300 * 1024)]), 0).unwrap();
    let scenario = NetworkScenario::new(vec![
        webmp::InterfaceSpec::new("a", 10.0, 2e6),
        webmp::InterfaceSpec::new("b", 40.0, 10e6),
        webmp::InterfaceSpec::new("c", 80.0, 30e6),
    ]);
    let config = SimConfig {
        max_interfaces: 3,
        ..SimConfig::default()
    };
    let if1 = run_simulation(&page, &scenario, PolicyKind::Interface(0), &config).unwrap();
    let eaf = run_simulation(&page, &scenario, PolicyKind::EafMptcp, &config).unwrap();
    assert!(eaf.page_load_time_s < if1.page_load_time_s);
    let rr = run_simulation(&page, &scenario, PolicyKind::RoundRobin, &config).unwrap();
    let used: std::collections::BTreeSet<usize> = rr.per_transfer.values().flat_map(|t| t.interfaces.clone()).collect();
    assert_eq!(used.len(), 3);
}

fn arb_page() -> impl Strategy<Value = WorkloadPage> {
    (1usize..40, 1usize..5).prop_flat_map(|(n, hosts)| {
        proptest::collection::vec(
            (
                0u64..600_000,
                0..hosts,
                any::<bool>(),
                proptest::collection::vec(any::<prop::sample::Index>(), 0..3),
            ),
            n,
        )
        .prop_map(|specs| {
            let transfers = specs
                .into_iter()
                .enumerate()
                .map(|(i, (size, host, tls, deps))| {
                    let deps: std::collections::BTreeSet<String> = if i == 0 {
                        Default::default()
                    } else {
                        deps.iter().map(|d| format!("t{}", d.index(i))).collect()
                    };
                    TransferSpec::new(format!("t{i}"), size, format!("h{host}"))
                        .with_tls(tls)
                        .with_deps(deps)
                })
                .collect();
            WorkloadPage::new("arb", transfers)
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Load time is never below the critical path's pure transfer time at
    /// the fastest link, and every policy finishes every transfer.
    #[test]
    fn plt_bounded_below_by_one_way_work(page in arb_page(), policy in 0usize..7) {
        let policy = PolicyKind::ALL[policy];
        let scenario = NetworkScenario::two(20.0, 6.0, 70.0, 13.0);
        let r = run_simulation(&page, &scenario, policy, &SimConfig::default()).unwrap();
        prop_assert_eq!(r.per_transfer.len(), page.transfers.len());
        let total_rate = (6e6 + 13e6) / 8.0;
        prop_assert!(r.page_load_time_s >= page.total_bytes() as f64 / total_rate - 1e-9);
        prop_assert!(r.page_load_time_s >= 0.04);
    }
}

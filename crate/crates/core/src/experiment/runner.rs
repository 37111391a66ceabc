use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use super::design::{RunDescriptor, ScenarioKey};
use crate::engine::run_simulation;
use crate::error::SimError;
use crate::model::{PolicyKind, SimConfig};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum RunStatus {
    Ok,
    Error(String),
}

impl RunStatus {
    pub fn is_ok(&self) -> bool {
        matches!(self, RunStatus::Ok)
    }

    pub fn tag(&self) -> &str {
        match self {
            RunStatus::Ok => "ok",
            RunStatus::Error(e) => e,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    pub page: String,
    pub policy: PolicyKind,
    pub scenario: ScenarioKey,
    /// Present iff the run succeeded.
    pub plt_s: Option<f64>,
    pub status: RunStatus,
}

/// Per-run RNG seed: a stable hash of the global seed and the descriptor.
pub fn run_seed(global_seed: u64, run: &RunDescriptor) -> u64 {
    let mut h = Sha256::new();
    h.update(global_seed.to_le_bytes());
    h.update(run.key().as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

fn execute(run: &RunDescriptor, config: &SimConfig, global_seed: u64) -> RunRecord {
    let config = SimConfig {
        rng_seed: run_seed(global_seed, run),
        ..config.clone()
    };
    let outcome = run_simulation(&run.page, &run.scenario.scenario(), run.policy, &config);
    let (plt_s, status) = match outcome {
        Ok(r) => (Some(r.page_load_time_s), RunStatus::Ok),
        Err(SimError::InvalidInput(report)) => (None, RunStatus::Error(format!("invalid input: {report}"))),
        Err(e) => (None, RunStatus::Error(e.to_string())),
    };
    RunRecord {
        page: run.page.name.clone(),
        policy: run.policy,
        scenario: run.scenario,
        plt_s,
        status,
    }
}

/// Runs every descriptor, at most `parallelism` at a time. Output order
/// matches `runs`, and results do not depend on `parallelism`.
pub fn run_design(runs: &[RunDescriptor], config: &SimConfig, parallelism: usize, global_seed: u64) -> Vec<RunRecord> {
    if parallelism <= 1 {
        return runs.iter().map(|r| execute(r, config, global_seed)).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism)
        .build()
        .expect("thread pool");
    pool.install(|| runs.par_iter().map(|r| execute(r, config, global_seed)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::{build_design, LevelsFile};
    use crate::model::{TransferSpec, WorkloadPage};
    use std::sync::Arc;

    fn small_design() -> Vec<RunDescriptor> {
        let page = Arc::new(WorkloadPage::new(
            "p",
            vec![
                TransferSpec::new("a", 20_000, "h"),
                TransferSpec::new("b", 300_000, "h").with_deps(["a"]),
                TransferSpec::new("c", 5_000, "g").with_deps(["a"]),
            ],
        ));
        let levels = LevelsFile {
            policies: vec![PolicyKind::Interface(0), PolicyKind::MptcpRnd],
            if1_rtt_ms: vec![10.0],
            if1_bw_bps: vec![2e6],
            if2_rtt_ms: vec![50.0, 100.0],
            if2_bw_bps: vec![20e6],
        };
        build_design(&levels.with_pages(vec![page])).unwrap()
    }

    #[test]
    fn parallelism_does_not_change_results() {
        let runs = small_design();
        assert_eq!(runs.len(), 4);
        let cfg = SimConfig::default();
        let a = run_design(&runs, &cfg, 1, 9);
        let b = run_design(&runs, &cfg, 4, 9);
        assert_eq!(a, b);
        assert!(a.iter().all(|r| r.status.is_ok() && r.plt_s.is_some()));
    }

    #[test]
    fn invalid_policy_is_recorded() {
        let mut runs = small_design();
        runs.truncate(1);
        runs[0].policy = PolicyKind::Interface(4);
        let out = run_design(&runs, &SimConfig::default(), 1, 0);
        assert!(out[0].plt_s.is_none());
        assert!(
            out[0].status.tag().contains("invalid interface"),
            "{}",
            out[0].status.tag()
        );
    }

    #[test]
    fn empty_design() {
        assert!(run_design(&[], &SimConfig::default(), 3, 0).is_empty());
    }

    #[test]
    fn seeds_depend_on_descriptor_and_global_seed() {
        let runs = small_design();
        assert_eq!(run_seed(1, &runs[0]), run_seed(1, &runs[0]));
        assert_ne!(run_seed(1, &runs[0]), run_seed(2, &runs[0]));
        assert_ne!(run_seed(1, &runs[0]), run_seed(1, &runs[1]));
    }
}

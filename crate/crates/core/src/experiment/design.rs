use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::ExperimentError;
use crate::model::{NetworkScenario, PolicyKind, WorkloadPage};

/// Network factor levels of one run: RTTs in ms, rates in bit/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioKey {
    pub if1_rtt_ms: f64,
    pub if1_bw_bps: f64,
    pub if2_rtt_ms: f64,
    pub if2_bw_bps: f64,
}

impl ScenarioKey {
    pub fn scenario(&self) -> NetworkScenario {
        NetworkScenario::two(
            self.if1_rtt_ms,
            self.if1_bw_bps / 1e6,
            self.if2_rtt_ms,
            self.if2_bw_bps / 1e6,
        )
    }

    /// Exact identity for grouping; levels come from the same literals.
    pub fn bits(&self) -> [u64; 4] {
        [
            self.if1_rtt_ms.to_bits(),
            self.if1_bw_bps.to_bits(),
            self.if2_rtt_ms.to_bits(),
            self.if2_bw_bps.to_bits(),
        ]
    }
}

impl fmt::Display for ScenarioKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}ms/{}bps + {}ms/{}bps",
            self.if1_rtt_ms, self.if1_bw_bps, self.if2_rtt_ms, self.if2_bw_bps
        )
    }
}

#[derive(Debug, Clone)]
pub struct FactorLevels {
    pub policies: Vec<PolicyKind>,
    pub pages: Vec<Arc<WorkloadPage>>,
    pub if1_rtts_ms: Vec<f64>,
    pub if1_bws_bps: Vec<f64>,
    pub if2_rtts_ms: Vec<f64>,
    pub if2_bws_bps: Vec<f64>,
}

impl FactorLevels {
    /// The network levels of the full factorial design with all seven
    /// policies.
    pub fn full_grid(pages: Vec<Arc<WorkloadPage>>) -> Self {
        LevelsFile::full_grid().with_pages(pages)
    }

    pub fn run_count(&self) -> usize {
        self.policies.len()
            * self.pages.len()
            * self.if1_rtts_ms.len()
            * self.if1_bws_bps.len()
            * self.if2_rtts_ms.len()
            * self.if2_bws_bps.len()
    }

    pub fn scenarios(&self) -> Vec<ScenarioKey> {
        let mut out = Vec::new();
        for &if1_rtt_ms in &self.if1_rtts_ms {
            for &if1_bw_bps in &self.if1_bws_bps {
                for &if2_rtt_ms in &self.if2_rtts_ms {
                    for &if2_bw_bps in &self.if2_bws_bps {
                        out.push(ScenarioKey {
                            if1_rtt_ms,
                            if1_bw_bps,
                            if2_rtt_ms,
                            if2_bw_bps,
                        });
                    }
                }
            }
        }
        out
    }
}

fn all_policies() -> Vec<PolicyKind> {
    PolicyKind::ALL.to_vec()
}

/// On-disk form of the factor levels; pages are supplied separately.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelsFile {
    #[serde(default = "all_policies")]
    pub policies: Vec<PolicyKind>,
    pub if1_rtt_ms: Vec<f64>,
    pub if1_bw_bps: Vec<f64>,
    pub if2_rtt_ms: Vec<f64>,
    pub if2_bw_bps: Vec<f64>,
}

impl LevelsFile {
    pub fn full_grid() -> Self {
        Self {
            policies: all_policies(),
            if1_rtt_ms: vec![10.0, 20.0, 30.0, 50.0],
            if1_bw_bps: vec![0.5e6, 2e6, 6e6, 12e6, 20e6, 50e6],
            if2_rtt_ms: vec![20.0, 50.0, 100.0, 200.0],
            if2_bw_bps: vec![0.5e6, 5e6, 20e6, 50e6],
        }
    }

    pub fn with_pages(self, pages: Vec<Arc<WorkloadPage>>) -> FactorLevels {
        FactorLevels {
            policies: self.policies,
            pages,
            if1_rtts_ms: self.if1_rtt_ms,
            if1_bws_bps: self.if1_bw_bps,
            if2_rtts_ms: self.if2_rtt_ms,
            if2_bws_bps: self.if2_bw_bps,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunDescriptor {
    pub page: Arc<WorkloadPage>,
    pub policy: PolicyKind,
    pub scenario: ScenarioKey,
}

impl RunDescriptor {
    /// Stable textual identity, used for seeding and sorting.
    pub fn key(&self) -> String {
        format!("{}|{}|{}", self.page.name, self.policy, self.scenario)
    }
}

/// Cartesian product of all levels, ordered by policy, page, then the four
/// network factors in table order.
pub fn build_design(levels: &FactorLevels) -> Result<Vec<RunDescriptor>, ExperimentError> {
    let checks = [
        ("policies", levels.policies.is_empty()),
        ("pages", levels.pages.is_empty()),
        ("if1_rtt_ms", levels.if1_rtts_ms.is_empty()),
        ("if1_bw_bps", levels.if1_bws_bps.is_empty()),
        ("if2_rtt_ms", levels.if2_rtts_ms.is_empty()),
        ("if2_bw_bps", levels.if2_bws_bps.is_empty()),
    ];
    if let Some((name, _)) = checks.iter().find(|(_, empty)| *empty) {
        return Err(ExperimentError::EmptyFactor(name));
    }
    let scenarios = levels.scenarios();
    let mut runs = Vec::with_capacity(levels.run_count());
    for &policy in &levels.policies {
        for page in &levels.pages {
            for &scenario in &scenarios {
                runs.push(RunDescriptor {
                    page: Arc::clone(page),
                    policy,
                    scenario,
                });
            }
        }
    }
    Ok(runs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::TransferSpec;

    fn page(name: &str) -> Arc<WorkloadPage> {
        Arc::new(WorkloadPage::new(name, vec![TransferSpec::new("a", 1, "h")]))
    }

    #[test]
    fn full_grid_cardinality() {
        let levels = FactorLevels::full_grid(vec![page("p")]);
        let runs = build_design(&levels).unwrap();
        assert_eq!(runs.len(), 2_688);
        assert_eq!(runs.len(), levels.run_count());
        assert_eq!(runs[0].policy, PolicyKind::Interface(0));
        assert_eq!(runs[0].scenario.if1_rtt_ms, 10.0);
        assert_eq!(runs[1].scenario.if2_bw_bps, 5e6);
    }

    #[test]
    fn degenerate_and_small_designs() {
        let single = LevelsFile {
            policies: vec![PolicyKind::Eaf],
            if1_rtt_ms: vec![10.0],
            if1_bw_bps: vec![1e6],
            if2_rtt_ms: vec![20.0],
            if2_bw_bps: vec![1e6],
        };
        assert_eq!(
            build_design(&single.clone().with_pages(vec![page("p")])).unwrap().len(),
            1
        );

        let two = LevelsFile {
            policies: vec![PolicyKind::Eaf, PolicyKind::Interface(0)],
            ..single.clone()
        };
        assert_eq!(
            build_design(&two.with_pages(vec![page("p"), page("q")])).unwrap().len(),
            4
        );

        let err = build_design(&single.with_pages(vec![])).unwrap_err();
        assert!(matches!(err, ExperimentError::EmptyFactor("pages")));
    }

    #[test]
    fn levels_file_defaults_to_all_policies() {
        let f: LevelsFile = serde_json::from_str(
            r#"{"if1_rtt_ms": [10], "if1_bw_bps": [1e6], "if2_rtt_ms": [20], "if2_bw_bps": [5e6]}"#,
        )
        .unwrap();
        assert_eq!(f.policies.len(), 7);
    }
}

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use super::design::ScenarioKey;
use super::runner::RunRecord;
use crate::error::ExperimentError;
use crate::model::PolicyKind;

/// Speedups within this distance of 1 count as equal.
pub const EQUAL_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum SpeedupCategory {
    Slower,
    Equal,
    UpTo2x,
    From2To5x,
    Over5x,
}

impl SpeedupCategory {
    pub const ALL: [SpeedupCategory; 5] = [
        SpeedupCategory::Slower,
        SpeedupCategory::Equal,
        SpeedupCategory::UpTo2x,
        SpeedupCategory::From2To5x,
        SpeedupCategory::Over5x,
    ];

    pub fn of(speedup: f64) -> Self {
        if (speedup - 1.0).abs() <= EQUAL_TOLERANCE {
            SpeedupCategory::Equal
        } else if speedup < 1.0 {
            SpeedupCategory::Slower
        } else if speedup <= 2.0 {
            SpeedupCategory::UpTo2x
        } else if speedup <= 5.0 {
            SpeedupCategory::From2To5x
        } else {
            SpeedupCategory::Over5x
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            SpeedupCategory::Slower => "slower",
            SpeedupCategory::Equal => "equal",
            SpeedupCategory::UpTo2x => "1-2x",
            SpeedupCategory::From2To5x => "2-5x",
            SpeedupCategory::Over5x => ">5x",
        }
    }
}

impl fmt::Display for SpeedupCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for SpeedupCategory {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|c| c.label() == s)
            .ok_or_else(|| format!("unknown speedup category {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpeedupRecord {
    pub page: String,
    pub policy: PolicyKind,
    pub scenario: ScenarioKey,
    pub plt_s: f64,
    /// Interface 1 PLT divided by this policy's PLT.
    pub speedup: f64,
    pub category: SpeedupCategory,
}

/// Speedup of every successful run against the Interface 1 run with the
/// same page and network scenario. Failed runs are skipped.
pub fn compute_speedups(records: &[RunRecord]) -> Result<Vec<SpeedupRecord>, ExperimentError> {
    let mut baseline: BTreeMap<(&str, [u64; 4]), f64> = BTreeMap::new();
    for r in records {
        if let (PolicyKind::Interface(0), Some(plt)) = (r.policy, r.plt_s) {
            baseline.insert((r.page.as_str(), r.scenario.bits()), plt);
        }
    }
    records
        .iter()
        .filter_map(|r| r.plt_s.map(|plt| (r, plt)))
        .map(|(r, plt)| {
            let base = baseline.get(&(r.page.as_str(), r.scenario.bits())).ok_or_else(|| {
                ExperimentError::MissingBaseline {
                    page: r.page.clone(),
                    scenario: r.scenario.to_string(),
                }
            })?;
            let speedup = base / plt;
            Ok(SpeedupRecord {
                page: r.page.clone(),
                policy: r.policy,
                scenario: r.scenario,
                plt_s: plt,
                speedup,
                category: SpeedupCategory::of(speedup),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::RunStatus;

    fn key() -> ScenarioKey {
        ScenarioKey {
            if1_rtt_ms: 10.0,
            if1_bw_bps: 1e6,
            if2_rtt_ms: 20.0,
            if2_bw_bps: 5e6,
        }
    }

    fn rec(policy: PolicyKind, plt: f64) -> RunRecord {
        RunRecord {
            page: "p".into(),
            policy,
            scenario: key(),
            plt_s: Some(plt),
            status: RunStatus::Ok,
        }
    }

    #[test]
    fn ratio_and_self_baseline() {
        let out = compute_speedups(&[rec(PolicyKind::Interface(0), 2.0), rec(PolicyKind::Eaf, 1.0)]).unwrap();
        assert_eq!(out[0].speedup, 1.0);
        assert_eq!(out[0].category, SpeedupCategory::Equal);
        assert_eq!(out[1].speedup, 2.0);
        assert_eq!(out[1].category, SpeedupCategory::UpTo2x);
    }

    #[test]
    fn penalty_case() {
        let out = compute_speedups(&[rec(PolicyKind::Interface(0), 1.0), rec(PolicyKind::MptcpRnd, 10.0)]).unwrap();
        assert!((out[1].speedup - 0.1).abs() < 1e-15);
        assert_eq!(out[1].category, SpeedupCategory::Slower);
    }

    #[test]
    fn missing_baseline() {
        let err = compute_speedups(&[rec(PolicyKind::Eaf, 1.0)]).unwrap_err();
        assert!(matches!(err, ExperimentError::MissingBaseline { .. }));
    }

    #[test]
    fn failed_runs_are_skipped() {
        let mut bad = rec(PolicyKind::Interface(3), 0.0);
        bad.plt_s = None;
        bad.status = RunStatus::Error("invalid interface".into());
        let out = compute_speedups(&[rec(PolicyKind::Interface(0), 1.0), bad]).unwrap();
        assert_eq!(out.len(), 1);
    }

    #[test]
    fn bin_edges() {
        assert_eq!(SpeedupCategory::of(1.0 + 1e-7), SpeedupCategory::Equal);
        assert_eq!(SpeedupCategory::of(0.99), SpeedupCategory::Slower);
        assert_eq!(SpeedupCategory::of(2.0), SpeedupCategory::UpTo2x);
        assert_eq!(SpeedupCategory::of(2.0001), SpeedupCategory::From2To5x);
        assert_eq!(SpeedupCategory::of(5.0), SpeedupCategory::From2To5x);
        assert_eq!(SpeedupCategory::of(5.1), SpeedupCategory::Over5x);
        for c in SpeedupCategory::ALL {
            assert_eq!(c.label().parse::<SpeedupCategory>().unwrap(), c);
        }
    }
}

//! Path and connection selection strategies.
//!
//! A policy looks at a read-only [`SimulationState`] and picks, for one
//! enabled transfer, a connection to reuse, an interface (or interface set)
//! to open a new connection on, or to postpone the transfer.

use std::cmp::Ordering;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::engine::{ConnId, InterfaceState, SimulationState};
use crate::error::SimError;
use crate::model::{BandwidthEstimator, PolicyKind};

/// Interface combinations for `eaf_mptcp` are enumerated exhaustively, so
/// the interface count is bounded.
pub const MAX_MPTCP_ENUM_INTERFACES: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum PolicyDecision {
    ReuseConnection(ConnId),
    NewTcp(usize),
    NewMptcp { interfaces: Vec<usize>, initial: usize },
    Postpone,
}

impl PolicyDecision {
    /// Interface the transfer's first bytes travel on; `None` for postpone.
    pub fn primary_iface(&self, view: &SimulationState) -> Option<usize> {
        match self {
            PolicyDecision::ReuseConnection(id) => Some(view.connection(*id).primary_iface()),
            PolicyDecision::NewTcp(k) => Some(*k),
            PolicyDecision::NewMptcp { initial, .. } => Some(*initial),
            PolicyDecision::Postpone => None,
        }
    }

    fn rank(&self) -> u8 {
        match self {
            PolicyDecision::ReuseConnection(_) => 0,
            PolicyDecision::NewMptcp { .. } => 1,
            PolicyDecision::NewTcp(_) => 2,
            PolicyDecision::Postpone => 3,
        }
    }
}

/// Mutable policy-side state owned by one simulation.
#[derive(Debug, Clone)]
pub struct PolicyCursor {
    pub rr_next: usize,
    pub rng: ChaCha8Rng,
}

impl PolicyCursor {
    pub fn new(seed: u64) -> Self {
        Self {
            rr_next: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PathEstimate {
    pub iface: usize,
    pub estimated_rtt: f64,
    pub estimated_available_bw: f64,
    pub basis: BandwidthEstimator,
}

/// Observed-maximum-rate estimate: the largest rate seen on the interface
/// divided by the objects currently scheduled on it. Before any traffic the
/// interface's configured capacity stands in for the observed maximum.
pub fn estimate_available_bandwidth_online(iface: &InterfaceState) -> f64 {
    let observed = if iface.max_observed_rate > 0.0 {
        iface.max_observed_rate
    } else {
        iface.capacity()
    };
    observed / iface.scheduled_object_count.max(1) as f64
}

/// Per-interface path estimates. The oracle basis splits capacity evenly
/// between the flows already receiving and one more.
pub fn path_estimates(view: &SimulationState, basis: BandwidthEstimator) -> Vec<PathEstimate> {
    view.interfaces()
        .iter()
        .enumerate()
        .map(|(k, iface)| {
            let bw = match basis {
                BandwidthEstimator::Online => estimate_available_bandwidth_online(iface),
                BandwidthEstimator::Oracle => {
                    let receiving = view
                        .connections()
                        .iter()
                        .flat_map(|c| &c.subflows)
                        .filter(|s| s.iface == k && s.receiving)
                        .count();
                    iface.capacity() / (receiving + 1) as f64
                }
            };
            PathEstimate {
                iface: k,
                estimated_rtt: iface.rtt(),
                estimated_available_bw: bw,
                basis,
            }
        })
        .collect()
}

/// Closed-form completion estimate used in online mode: wait for the
/// connection, add setup RTTs, then drain at the estimated available rate.
/// TLS is not accounted.
fn predict_online(view: &SimulationState, transfer: usize, option: &PolicyDecision) -> f64 {
    let cfg = view.config();
    let size = view.page().transfers[transfer].size as f64;
    let ifaces = view.interfaces();
    let est = |set: &[usize]| -> f64 {
        set.iter()
            .map(|&k| estimate_available_bandwidth_online(&ifaces[k]))
            .sum()
    };
    match option {
        PolicyDecision::ReuseConnection(id) => {
            let conn = view.connection(*id);
            let start = view.predicted_idle_at(*id).max(view.clock());
            start + f64::from(cfg.reuse_rtts) * ifaces[conn.primary_iface()].rtt() + size / est(&conn.interfaces())
        }
        PolicyDecision::NewTcp(k) => view.clock() + f64::from(cfg.new_conn_rtts) * ifaces[*k].rtt() + size / est(&[*k]),
        PolicyDecision::NewMptcp { interfaces, initial } => {
            view.clock() + f64::from(cfg.new_conn_rtts) * ifaces[*initial].rtt() + size / est(interfaces)
        }
        PolicyDecision::Postpone => f64::INFINITY,
    }
}

/// Predicted completion time of `transfer` under `option`, by state cloning
/// (oracle) or the closed-form estimate (online), as configured.
pub fn predict(view: &SimulationState, transfer: usize, option: &PolicyDecision) -> Result<f64, SimError> {
    match view.config().bandwidth_estimator {
        BandwidthEstimator::Oracle => view.predict_completion(transfer, option),
        BandwidthEstimator::Online => Ok(predict_online(view, transfer, option)),
    }
}

/// Non-empty subsets of size >= 2, in lexicographic order of index lists.
fn combinations(n: usize) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = (1u32..(1 << n))
        .filter(|m| m.count_ones() >= 2)
        .map(|m| (0..n).filter(|&i| m >> i & 1 == 1).collect())
        .collect();
    out.sort();
    out
}

/// Options an earliest-arrival policy considers for `transfer`: a reusable
/// connection and a new TCP connection per interface, plus (for
/// `EafMptcp`) every interface combination with every initial subflow.
pub fn candidate_options(policy: PolicyKind, view: &SimulationState, transfer: usize) -> Vec<PolicyDecision> {
    let host = view.page().transfers[transfer].host;
    let can_open = view.can_open(host);
    let n = view.interfaces().len();
    let mut out = Vec::new();
    for k in 0..n {
        if let Some(c) = view.find_reusable_connection(host, k) {
            out.push(PolicyDecision::ReuseConnection(c));
        }
        if can_open {
            out.push(PolicyDecision::NewTcp(k));
        }
    }
    if policy == PolicyKind::EafMptcp && can_open {
        for set in combinations(n) {
            for &initial in &set {
                out.push(PolicyDecision::NewMptcp {
                    interfaces: set.clone(),
                    initial,
                });
            }
        }
    }
    out
}

/// Predictions for every candidate option, in candidate order.
pub fn evaluate_candidates(
    policy: PolicyKind,
    view: &SimulationState,
    transfer: usize,
) -> Result<Vec<(PolicyDecision, f64)>, SimError> {
    candidate_options(policy, view, transfer)
        .into_iter()
        .map(|opt| predict(view, transfer, &opt).map(|t| (opt, t)))
        .collect()
}

/// Earliest prediction; ties go to the lowest initial interface, then reuse
/// before a new MPTCP connection before a new TCP connection, then candidate
/// order. A tied MPTCP option can later shift traffic to its other subflows.
pub fn pick_earliest(view: &SimulationState, scored: Vec<(PolicyDecision, f64)>) -> Option<(PolicyDecision, f64)> {
    let key = |d: &PolicyDecision| (d.primary_iface(view).unwrap_or(usize::MAX), d.rank());
    scored.into_iter().min_by(|(da, ta), (db, tb)| match ta.total_cmp(tb) {
        Ordering::Equal => key(da).cmp(&key(db)),
        other => other,
    })
}

fn reuse_or_new(view: &SimulationState, host: usize, iface: usize) -> PolicyDecision {
    if let Some(c) = view.find_reusable_connection(host, iface) {
        PolicyDecision::ReuseConnection(c)
    } else if view.can_open(host) {
        PolicyDecision::NewTcp(iface)
    } else {
        PolicyDecision::Postpone
    }
}

/// Chooses how to carry `transfer`, which must be enabled.
pub fn decide(
    policy: PolicyKind,
    view: &SimulationState,
    transfer: usize,
    cursor: &mut PolicyCursor,
) -> Result<PolicyDecision, SimError> {
    let host = view.page().transfers[transfer].host;
    let n = view.interfaces().len();
    let decision = match policy {
        PolicyKind::Interface(k) => reuse_or_new(view, host, k),
        PolicyKind::RoundRobin => {
            let d = reuse_or_new(view, host, cursor.rr_next % n);
            if d != PolicyDecision::Postpone {
                cursor.rr_next = (cursor.rr_next + 1) % n;
            }
            d
        }
        PolicyKind::MptcpIf1 | PolicyKind::MptcpRnd => {
            if let Some(c) = view.find_reusable_mptcp(host) {
                PolicyDecision::ReuseConnection(c)
            } else if view.can_open(host) {
                let initial = if policy == PolicyKind::MptcpRnd {
                    cursor.rng.random_range(0..n)
                } else {
                    0
                };
                PolicyDecision::NewMptcp {
                    interfaces: (0..n).collect(),
                    initial,
                }
            } else {
                PolicyDecision::Postpone
            }
        }
        PolicyKind::Eaf | PolicyKind::EafMptcp => {
            let scored = evaluate_candidates(policy, view, transfer)?;
            pick_earliest(view, scored).map_or(PolicyDecision::Postpone, |(d, _)| d)
        }
    };
    Ok(decision)
}

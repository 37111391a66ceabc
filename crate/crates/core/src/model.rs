//! Domain types shared by the engine, policies, workload tools and the
//! experiment harness, together with their validation rules and JSON forms.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use indexmap::IndexMap;
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::error::ModelError;

/// One Web object to download.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransferSpec {
    pub id: String,
    pub size_bytes: u64,
    pub host: String,
    #[serde(default)]
    pub tls: bool,
    #[serde(default)]
    pub deps: Vec<String>,
}

impl TransferSpec {
    pub fn new(id: impl Into<String>, size_bytes: u64, host: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            size_bytes,
            host: host.into(),
            tls: false,
            deps: Vec::new(),
        }
    }

    pub fn with_tls(mut self, tls: bool) -> Self {
        self.tls = tls;
        self
    }

    pub fn with_deps<I, S>(mut self, deps: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.deps = deps.into_iter().map(Into::into).collect();
        self
    }
}

/// A Web page: its objects and their dependency edges.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkloadPage {
    pub name: String,
    pub transfers: Vec<TransferSpec>,
}

impl WorkloadPage {
    pub fn new(name: impl Into<String>, transfers: Vec<TransferSpec>) -> Self {
        Self {
            name: name.into(),
            transfers,
        }
    }

    pub fn total_bytes(&self) -> u64 {
        self.transfers.iter().map(|t| t.size_bytes).sum()
    }

    pub fn edge_count(&self) -> usize {
        self.transfers.iter().map(|t| t.deps.len()).sum()
    }
}

/// Path characteristics of one access network, as seen from the client.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterfaceSpec {
    pub name: String,
    pub rtt_ms: f64,
    /// Downlink rate in bits per second.
    pub bandwidth_bps: f64,
}

impl InterfaceSpec {
    pub fn new(name: impl Into<String>, rtt_ms: f64, bandwidth_bps: f64) -> Self {
        Self {
            name: name.into(),
            rtt_ms,
            bandwidth_bps,
        }
    }

    /// Round-trip time in seconds.
    pub fn rtt(&self) -> f64 {
        self.rtt_ms / 1000.0
    }

    /// Downlink capacity in bytes per second.
    pub fn bytes_per_sec(&self) -> f64 {
        self.bandwidth_bps / 8.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkScenario {
    pub interfaces: Vec<InterfaceSpec>,
}

impl NetworkScenario {
    pub fn new(interfaces: Vec<InterfaceSpec>) -> Self {
        Self { interfaces }
    }

    /// Two-interface scenario named `if1`/`if2`, rates in Mbit/s.
    pub fn two(if1_rtt_ms: f64, if1_mbps: f64, if2_rtt_ms: f64, if2_mbps: f64) -> Self {
        Self::new(vec![
            InterfaceSpec::new("if1", if1_rtt_ms, if1_mbps * 1e6),
            InterfaceSpec::new("if2", if2_rtt_ms, if2_mbps * 1e6),
        ])
    }

    /// Single-interface scenario named `if1`, rate in Mbit/s.
    pub fn single(rtt_ms: f64, mbps: f64) -> Self {
        Self::new(vec![InterfaceSpec::new("if1", rtt_ms, mbps * 1e6)])
    }

    pub fn len(&self) -> usize {
        self.interfaces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.interfaces.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BandwidthEstimator {
    /// Predictions clone the simulator state and replay it.
    #[default]
    Oracle,
    /// Predictions use the observed-maximum-rate formula of a live client.
    Online,
}

/// Simulation knobs. Every field has a default so partial JSON files work.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub initial_cwnd_segments: u32,
    pub mss_bytes: u32,
    pub max_conns_per_server: usize,
    pub max_conns_total: usize,
    pub idle_timeout_s: f64,
    pub pipelining: bool,
    pub tls_handshake_rtts: u32,
    pub new_conn_rtts: u32,
    pub reuse_rtts: u32,
    pub rng_seed: u64,
    pub bandwidth_estimator: BandwidthEstimator,
    pub max_interfaces: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            initial_cwnd_segments: 10,
            mss_bytes: 1460,
            max_conns_per_server: 6,
            max_conns_total: 17,
            idle_timeout_s: 30.0,
            pipelining: false,
            tls_handshake_rtts: 2,
            new_conn_rtts: 2,
            reuse_rtts: 1,
            rng_seed: 0,
            bandwidth_estimator: BandwidthEstimator::Oracle,
            max_interfaces: 2,
        }
    }
}

impl SimConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.rng_seed = seed;
        self
    }

    /// Bytes in the initial congestion window.
    pub fn initial_window_bytes(&self) -> f64 {
        f64::from(self.initial_cwnd_segments) * f64::from(self.mss_bytes)
    }

    pub fn validate(&self) -> ValidationReport {
        let mut report = ValidationReport::default();
        let counts = [
            ("initial_cwnd_segments", self.initial_cwnd_segments as usize),
            ("mss_bytes", self.mss_bytes as usize),
            ("max_conns_per_server", self.max_conns_per_server),
            ("max_conns_total", self.max_conns_total),
            ("tls_handshake_rtts", self.tls_handshake_rtts as usize),
            ("new_conn_rtts", self.new_conn_rtts as usize),
            ("reuse_rtts", self.reuse_rtts as usize),
            ("max_interfaces", self.max_interfaces),
        ];
        for (field, value) in counts {
            if value == 0 {
                report.push(Some(field), "must be positive");
            }
        }
        if !(self.idle_timeout_s.is_finite() && self.idle_timeout_s > 0.0) {
            report.push(Some("idle_timeout_s"), "must be positive");
        }
        if self.reuse_rtts > self.new_conn_rtts {
            report.push(Some("reuse_rtts"), "must not exceed new_conn_rtts");
        }
        report
    }
}

/// Timing of one finished transfer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferTiming {
    /// When the transfer was handed to a connection.
    pub start_s: f64,
    pub end_s: f64,
    pub interfaces: Vec<usize>,
    pub connection: usize,
    pub reused: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub page_load_time_s: f64,
    /// Keyed by transfer id, in page order.
    pub per_transfer: IndexMap<String, TransferTiming>,
    pub events_processed: u64,
}

/// Path-selection strategy. Interface indices are zero-based; canonical
/// names (`if1`, `if2`, ...) are one-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum PolicyKind {
    Interface(usize),
    RoundRobin,
    MptcpIf1,
    MptcpRnd,
    Eaf,
    EafMptcp,
}

impl PolicyKind {
    /// The seven policies of the factorial design, for two interfaces.
    pub const ALL: [PolicyKind; 7] = [
        PolicyKind::Interface(0),
        PolicyKind::Interface(1),
        PolicyKind::RoundRobin,
        PolicyKind::MptcpIf1,
        PolicyKind::MptcpRnd,
        PolicyKind::Eaf,
        PolicyKind::EafMptcp,
    ];

    pub const CANONICAL_NAMES: &'static str = "if1, if2, rr, mptcp_if1, mptcp_rnd, eaf, eaf_mptcp";

    pub fn is_baseline(&self) -> bool {
        *self == PolicyKind::Interface(0)
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PolicyKind::Interface(k) => write!(f, "if{}", k + 1),
            PolicyKind::RoundRobin => f.write_str("rr"),
            PolicyKind::MptcpIf1 => f.write_str("mptcp_if1"),
            PolicyKind::MptcpRnd => f.write_str("mptcp_rnd"),
            PolicyKind::Eaf => f.write_str("eaf"),
            PolicyKind::EafMptcp => f.write_str("eaf_mptcp"),
        }
    }
}

impl FromStr for PolicyKind {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let kind = match s {
            "rr" => PolicyKind::RoundRobin,
            "mptcp_if1" => PolicyKind::MptcpIf1,
            "mptcp_rnd" => PolicyKind::MptcpRnd,
            "eaf" => PolicyKind::Eaf,
            "eaf_mptcp" => PolicyKind::EafMptcp,
            other => match other.strip_prefix("if").and_then(|n| n.parse::<usize>().ok()) {
                Some(n) if n >= 1 => PolicyKind::Interface(n - 1),
                _ => return Err(ModelError::UnknownPolicy(s.to_string())),
            },
        };
        Ok(kind)
    }
}

impl TryFrom<String> for PolicyKind {
    type Error = ModelError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        value.parse()
    }
}

impl From<PolicyKind> for String {
    fn from(value: PolicyKind) -> Self {
        value.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    /// Offending transfer id, interface name or config field.
    pub subject: Option<String>,
    pub rule: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.subject {
            Some(s) => write!(f, "{s}: {}", self.rule),
            None => f.write_str(&self.rule),
        }
    }
}

/// Outcome of a validation pass. Violations are data, not failures.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn push(&mut self, subject: Option<&str>, rule: impl Into<String>) {
        self.violations.push(Violation {
            subject: subject.map(str::to_string),
            rule: rule.into(),
        });
    }

    pub fn merge(&mut self, other: ValidationReport) {
        self.violations.extend(other.violations);
    }

    pub fn mentions(&self, needle: &str) -> bool {
        self.violations.iter().any(|v| v.to_string().contains(needle))
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_ok() {
            return f.write_str("ok");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

/// Checks ids, hosts, dependency references and acyclicity.
pub fn validate_page(page: &WorkloadPage) -> ValidationReport {
    let mut report = ValidationReport::default();
    if page.transfers.is_empty() {
        report.push(None, "page has no transfers");
        return report;
    }

    let mut index: BTreeMap<&str, usize> = BTreeMap::new();
    for (i, t) in page.transfers.iter().enumerate() {
        if t.id.is_empty() {
            report.push(None, format!("transfer #{i} has an empty id"));
        }
        if index.insert(t.id.as_str(), i).is_some() {
            report.push(Some(&t.id), "duplicate id");
        }
        if t.host.is_empty() {
            report.push(Some(&t.id), "host must be nonempty");
        }
    }

    let mut edges: Vec<Vec<usize>> = vec![Vec::new(); page.transfers.len()];
    for (i, t) in page.transfers.iter().enumerate() {
        let mut seen = BTreeSet::new();
        for dep in &t.deps {
            if !seen.insert(dep.as_str()) {
                report.push(Some(&t.id), format!("duplicate dep {dep}"));
                continue;
            }
            match index.get(dep.as_str()) {
                Some(&j) => edges[i].push(j),
                None => report.push(Some(&t.id), format!("dangling dep {dep}")),
            }
        }
    }

    if !page.transfers.iter().any(|t| t.deps.is_empty()) {
        report.push(None, "no root transfer (every transfer has deps)");
    }

    if let Some(cycle) = find_cycle(&edges) {
        let ids: Vec<&str> = cycle.iter().map(|&i| page.transfers[i].id.as_str()).collect();
        let rule = if ids.len() == 2 {
            format!("cycle: {}↔{}", ids[0], ids[1])
        } else {
            format!("cycle: {}→{}", ids.join("→"), ids[0])
        };
        report.push(Some(ids[0]), rule);
    }
    report
}

/// Returns the nodes of one cycle (in edge order) if the graph has any.
fn find_cycle(edges: &[Vec<usize>]) -> Option<Vec<usize>> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        White,
        Grey,
        Black,
    }
    let n = edges.len();
    let mut mark = vec![Mark::White; n];
    let mut path: Vec<usize> = Vec::new();
    for root in 0..n {
        if mark[root] != Mark::White {
            continue;
        }
        // Iterative DFS: (node, next edge index).
        let mut stack: Vec<(usize, usize)> = vec![(root, 0)];
        mark[root] = Mark::Grey;
        path.push(root);
        while let Some(&mut (node, ref mut next)) = stack.last_mut() {
            if let Some(&succ) = edges[node].get(*next) {
                *next += 1;
                match mark[succ] {
                    Mark::White => {
                        mark[succ] = Mark::Grey;
                        path.push(succ);
                        stack.push((succ, 0));
                    }
                    Mark::Grey => {
                        let start = path.iter().position(|&p| p == succ).unwrap_or(0);
                        return Some(path[start..].to_vec());
                    }
                    Mark::Black => {}
                }
            } else {
                mark[node] = Mark::Black;
                path.pop();
                stack.pop();
            }
        }
    }
    None
}

/// Checks interface parameters and the config they will be simulated with.
pub fn validate_scenario(scenario: &NetworkScenario, config: &SimConfig) -> ValidationReport {
    let mut report = config.validate();
    let n = scenario.interfaces.len();
    if n == 0 {
        report.push(None, "scenario needs at least one interface");
    }
    if n > config.max_interfaces {
        report.push(
            None,
            format!(
                "{n} interfaces exceed the configured maximum of {}",
                config.max_interfaces
            ),
        );
    }
    let mut names = BTreeSet::new();
    for iface in &scenario.interfaces {
        if !(iface.rtt_ms.is_finite() && iface.rtt_ms > 0.0) {
            report.push(Some(&iface.name), "rtt must be positive");
        }
        if !(iface.bandwidth_bps.is_finite() && iface.bandwidth_bps > 0.0) {
            report.push(Some(&iface.name), "bandwidth must be positive");
        }
        if !names.insert(iface.name.as_str()) {
            report.push(Some(&iface.name), "interface names must be unique");
        }
    }
    report
}

/// Range-checks a policy against the scenario it will run on.
pub fn validate_policy(policy: PolicyKind, scenario: &NetworkScenario) -> ValidationReport {
    let mut report = ValidationReport::default();
    match policy {
        PolicyKind::Interface(k) if k >= scenario.len() => {
            report.push(
                Some(&policy.to_string()),
                format!("invalid interface: scenario has {} interface(s)", scenario.len()),
            );
        }
        PolicyKind::EafMptcp if scenario.len() > crate::policies::MAX_MPTCP_ENUM_INTERFACES => {
            report.push(
                Some(&policy.to_string()),
                format!(
                    "interface combinations are enumerated for at most {} interfaces",
                    crate::policies::MAX_MPTCP_ENUM_INTERFACES
                ),
            );
        }
        _ => {}
    }
    report
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, ModelError> {
    let text = std::fs::read_to_string(path).map_err(|source| ModelError::Io {
        path: path.display().to_string(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| ModelError::Json {
        path: path.display().to_string(),
        source,
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), ModelError> {
    let mut text = serde_json::to_string_pretty(value).expect("model types serialize");
    text.push('\n');
    std::fs::write(path, text).map_err(|source| ModelError::Io {
        path: path.display().to_string(),
        source,
    })
}

impl WorkloadPage {
    pub fn from_json_file(path: &Path) -> Result<Self, ModelError> {
        read_json(path)
    }

    pub fn to_json_file(&self, path: &Path) -> Result<(), ModelError> {
        write_json(path, self)
    }
}

impl NetworkScenario {
    pub fn from_json_file(path: &Path) -> Result<Self, ModelError> {
        read_json(path)
    }

    pub fn to_json_file(&self, path: &Path) -> Result<(), ModelError> {
        write_json(path, self)
    }
}

impl SimConfig {
    pub fn from_json_file(path: &Path) -> Result<Self, ModelError> {
        read_json(path)
    }

    pub fn to_json_file(&self, path: &Path) -> Result<(), ModelError> {
        write_json(path, self)
    }
}

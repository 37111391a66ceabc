use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::sync::Arc;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::event::{Event, EventKind, EventQueue};
use super::flow::{cwnd_rate, water_fill};
use super::Observer;
use crate::error::SimError;
use crate::model::{InterfaceSpec, NetworkScenario, SimConfig, SimResult, TransferTiming, WorkloadPage};
use crate::policies::PolicyDecision;

/// Relative slack for the per-interface capacity check.
const CAPACITY_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ConnId(pub usize);

impl fmt::Display for ConnId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "c{}", self.0)
    }
}

/// A page with ids resolved to indices and hosts interned.
#[derive(Debug)]
pub struct PageIndex {
    pub name: String,
    pub hosts: Vec<String>,
    pub transfers: Vec<TransferNode>,
}

#[derive(Debug)]
pub struct TransferNode {
    pub id: String,
    pub size: u64,
    pub host: usize,
    pub tls: bool,
    pub deps: Vec<usize>,
    pub dependents: Vec<usize>,
}

impl PageIndex {
    /// Assumes the page passed `validate_page`.
    pub fn build(page: &WorkloadPage) -> Self {
        let mut hosts: Vec<String> = Vec::new();
        let mut host_ids: BTreeMap<&str, usize> = BTreeMap::new();
        let ids: BTreeMap<&str, usize> = page
            .transfers
            .iter()
            .enumerate()
            .map(|(i, t)| (t.id.as_str(), i))
            .collect();
        let mut transfers: Vec<TransferNode> = page
            .transfers
            .iter()
            .map(|t| {
                let host = *host_ids.entry(t.host.as_str()).or_insert_with(|| {
                    hosts.push(t.host.clone());
                    hosts.len() - 1
                });
                TransferNode {
                    id: t.id.clone(),
                    size: t.size_bytes,
                    host,
                    tls: t.tls,
                    deps: t.deps.iter().map(|d| ids[d.as_str()]).collect(),
                    dependents: Vec::new(),
                }
            })
            .collect();
        for i in 0..transfers.len() {
            for d in transfers[i].deps.clone() {
                transfers[d].dependents.push(i);
            }
        }
        Self {
            name: page.name.clone(),
            hosts,
            transfers,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Handshaking,
    TlsHandshaking,
    Requesting,
    Receiving,
    Idle,
    Closed,
}

/// One TCP flow. A plain TCP connection has exactly one; an MPTCP connection
/// has one per interface, the first being the initial subflow.
#[derive(Debug, Clone)]
pub struct Subflow {
    pub iface: usize,
    pub joined_at: Option<f64>,
    pub receiving: bool,
    pub slow_start: bool,
    pub round: u32,
    pub round_start: f64,
    pub rate: f64,
    epoch: u64,
}

impl Subflow {
    fn new(iface: usize) -> Self {
        Self {
            iface,
            joined_at: None,
            receiving: false,
            slow_start: false,
            round: 0,
            round_start: 0.0,
            rate: 0.0,
            epoch: 0,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct QueuedTransfer {
    pub transfer: usize,
    /// When the request would reach the server had it been sent right away.
    pub request_arrival: f64,
}

#[derive(Debug, Clone)]
pub struct Connection {
    pub id: ConnId,
    pub host: usize,
    pub tls: bool,
    pub mptcp: bool,
    pub subflows: Vec<Subflow>,
    pub phase: Phase,
    /// End of the current setup phase.
    pub phase_until: f64,
    pub current: Option<usize>,
    pub queued: Option<QueuedTransfer>,
    pub remaining: f64,
    /// Aggregate rate the pending completion event was computed with.
    pub rate: f64,
    pub completion_at: f64,
    completion_epoch: u64,
    pub idle_since: Option<f64>,
    idle_epoch: u64,
}

impl Connection {
    pub fn primary_iface(&self) -> usize {
        self.subflows[0].iface
    }

    pub fn is_open(&self) -> bool {
        self.phase != Phase::Closed
    }

    pub fn uses_iface(&self, iface: usize) -> bool {
        self.subflows.iter().any(|s| s.iface == iface)
    }

    pub fn interfaces(&self) -> Vec<usize> {
        self.subflows.iter().map(|s| s.iface).collect()
    }
}

#[derive(Debug, Clone)]
pub struct InterfaceState {
    pub spec: InterfaceSpec,
    /// Largest aggregate receive rate seen at an event boundary, bytes/s.
    pub max_observed_rate: f64,
    /// Transfers assigned to a connection with a flow on this interface and
    /// not yet finished.
    pub scheduled_object_count: usize,
}

impl InterfaceState {
    pub fn rtt(&self) -> f64 {
        self.spec.rtt()
    }

    pub fn capacity(&self) -> f64 {
        self.spec.bytes_per_sec()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TransferStatus {
    Pending,
    Enabled,
    Postponed,
    Queued(ConnId),
    Active(ConnId),
    Done,
}

#[derive(Debug, Clone)]
pub struct TransferRuntime {
    pub status: TransferStatus,
    pub deps_left: usize,
    pub start: Option<f64>,
    pub end: Option<f64>,
    pub conn: Option<ConnId>,
    pub reused: bool,
    pub ifaces_used: Vec<usize>,
}

/// Everything a running simulation knows. Cloned wholesale for predictions.
#[derive(Debug, Clone)]
pub struct SimulationState {
    page: Arc<PageIndex>,
    config: Arc<SimConfig>,
    clock: f64,
    queue: EventQueue,
    connections: Vec<Connection>,
    interfaces: Vec<InterfaceState>,
    transfers: Vec<TransferRuntime>,
    postponed: VecDeque<usize>,
    ready: Vec<usize>,
    retry_due: bool,
    done: usize,
    events_processed: u64,
    probe: Option<usize>,
}

impl SimulationState {
    /// Inputs must already be validated.
    pub fn new(page: Arc<PageIndex>, scenario: &NetworkScenario, config: Arc<SimConfig>) -> Self {
        let transfers = page
            .transfers
            .iter()
            .map(|t| TransferRuntime {
                status: TransferStatus::Pending,
                deps_left: t.deps.len(),
                start: None,
                end: None,
                conn: None,
                reused: false,
                ifaces_used: Vec::new(),
            })
            .collect();
        let interfaces = scenario
            .interfaces
            .iter()
            .map(|spec| InterfaceState {
                spec: spec.clone(),
                max_observed_rate: 0.0,
                scheduled_object_count: 0,
            })
            .collect();
        Self {
            page,
            config,
            clock: 0.0,
            queue: EventQueue::default(),
            connections: Vec::new(),
            interfaces,
            transfers,
            postponed: VecDeque::new(),
            ready: Vec::new(),
            retry_due: false,
            done: 0,
            events_processed: 0,
            probe: None,
        }
    }

    // ---- read-only view -------------------------------------------------

    pub fn clock(&self) -> f64 {
        self.clock
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn page(&self) -> &PageIndex {
        &self.page
    }

    pub fn interfaces(&self) -> &[InterfaceState] {
        &self.interfaces
    }

    pub fn connections(&self) -> &[Connection] {
        &self.connections
    }

    pub fn connection(&self, id: ConnId) -> &Connection {
        &self.connections[id.0]
    }

    pub fn transfers(&self) -> &[TransferRuntime] {
        &self.transfers
    }

    pub fn transfer_index(&self, id: &str) -> Option<usize> {
        self.page.transfers.iter().position(|t| t.id == id)
    }

    pub fn postponed(&self) -> impl Iterator<Item = usize> + '_ {
        self.postponed.iter().copied()
    }

    pub fn pending_events(&self) -> &EventQueue {
        &self.queue
    }

    pub fn events_processed(&self) -> u64 {
        self.events_processed
    }

    pub fn all_done(&self) -> bool {
        self.done == self.transfers.len()
    }

    pub fn host_id(&self, host: &str) -> Option<usize> {
        self.page.hosts.iter().position(|h| h == host)
    }

    pub fn open_connections(&self) -> usize {
        self.connections.iter().filter(|c| c.is_open()).count()
    }

    pub fn open_connections_to(&self, host: usize) -> usize {
        self.connections
            .iter()
            .filter(|c| c.is_open() && c.host == host)
            .count()
    }

    /// Whether a new connection to `host` fits within both limits.
    pub fn can_open(&self, host: usize) -> bool {
        self.open_connections_to(host) < self.config.max_conns_per_server
            && self.open_connections() < self.config.max_conns_total
    }

    /// Sum of current flow rates on an interface, bytes/s.
    pub fn interface_load(&self, iface: usize) -> f64 {
        self.connections
            .iter()
            .flat_map(|c| c.subflows.iter())
            .filter(|s| s.iface == iface && s.receiving)
            .map(|s| s.rate)
            .sum()
    }

    /// Ids of open connections with a flow on the interface.
    pub fn active_connections(&self, iface: usize) -> Vec<ConnId> {
        self.connections
            .iter()
            .filter(|c| c.is_open() && c.uses_iface(iface))
            .map(|c| c.id)
            .collect()
    }

    /// Best estimate of when a connection finishes its current work, using
    /// current rates. Infinite for closed connections or ones with a queued
    /// transfer.
    pub fn predicted_idle_at(&self, id: ConnId) -> f64 {
        let conn = &self.connections[id.0];
        if conn.queued.is_some() {
            return f64::INFINITY;
        }
        let cfg = &self.config;
        let iface = &self.interfaces[conn.primary_iface()];
        let rtt = iface.rtt();
        let first_byte = match conn.phase {
            Phase::Idle => return self.clock,
            Phase::Closed => return f64::INFINITY,
            Phase::Receiving => return conn.completion_at,
            Phase::Handshaking => {
                let tls = if conn.tls { cfg.tls_handshake_rtts } else { 0 };
                conn.phase_until + f64::from(tls + cfg.reuse_rtts) * rtt
            }
            Phase::TlsHandshaking => conn.phase_until + f64::from(cfg.reuse_rtts) * rtt,
            Phase::Requesting => conn.phase_until,
        };
        let size = conn.current.map_or(0, |t| self.page.transfers[t].size) as f64;
        let rate = cwnd_rate(0, rtt, cfg).min(iface.capacity());
        first_byte + size / rate
    }

    fn reuse_rank(&self, conn: &Connection, host: usize) -> Option<f64> {
        if !conn.is_open() || conn.host != host || conn.queued.is_some() {
            return None;
        }
        if conn.phase == Phase::Idle {
            return Some(self.clock);
        }
        let bound = self.clock + f64::from(self.config.new_conn_rtts) * self.interfaces[conn.primary_iface()].rtt();
        let at = self.predicted_idle_at(conn.id);
        (at <= bound).then_some(at)
    }

    fn best_reusable<'a>(&self, conns: impl Iterator<Item = &'a Connection>, host: usize) -> Option<ConnId> {
        let mut best: Option<(f64, ConnId)> = None;
        for conn in conns {
            if let Some(at) = self.reuse_rank(conn, host) {
                if best.is_none_or(|(b, _)| at < b) {
                    best = Some((at, conn.id));
                }
            }
        }
        best.map(|(_, id)| id)
    }

    /// A connection to `host` whose initial flow is on `iface` and that is
    /// idle, or predicted to become idle before a new connection could be
    /// set up. Idle connections win, then earliest predicted idle time,
    /// then lowest id.
    pub fn find_reusable_connection(&self, host: usize, iface: usize) -> Option<ConnId> {
        self.best_reusable(self.connections.iter().filter(|c| c.primary_iface() == iface), host)
    }

    /// As [`find_reusable_connection`](Self::find_reusable_connection) over
    /// all interfaces, restricted to MPTCP connections.
    pub fn find_reusable_mptcp(&self, host: usize) -> Option<ConnId> {
        self.best_reusable(self.connections.iter().filter(|c| c.mptcp), host)
    }

    /// Completion time of `transfer` if `option` were applied now, obtained
    /// by running a private copy of the state. Transfers not yet assigned
    /// are left out of the copy.
    pub fn predict_completion(&self, transfer: usize, option: &PolicyDecision) -> Result<f64, SimError> {
        debug_assert!(!matches!(option, PolicyDecision::Postpone));
        let mut probe = self.clone();
        probe.probe = Some(transfer);
        probe.postponed.clear();
        probe.ready.clear();
        probe.apply_decision(transfer, option);
        probe.refresh_rates();
        probe.run_until_done(transfer, &mut ())
    }

    // ---- mutation ------------------------------------------------------

    pub(crate) fn enable_roots(&mut self) {
        for (i, t) in self.transfers.iter_mut().enumerate() {
            if t.deps_left == 0 && t.status == TransferStatus::Pending {
                t.status = TransferStatus::Enabled;
                self.ready.push(i);
            }
        }
    }

    /// Transfers to hand to the policy now: postponed ones first (when a
    /// retry is due) in FIFO order, then newly enabled ones.
    pub(crate) fn take_decidable(&mut self) -> Vec<usize> {
        let mut out: Vec<usize> = Vec::new();
        if self.retry_due {
            out.extend(self.postponed.drain(..));
            self.retry_due = false;
        }
        out.append(&mut self.ready);
        out
    }

    pub(crate) fn postpone(&mut self, transfer: usize) {
        self.transfers[transfer].status = TransferStatus::Postponed;
        self.postponed.push_back(transfer);
    }

    fn rtt(&self, iface: usize) -> f64 {
        self.interfaces[iface].rtt()
    }

    fn count_scheduled(&mut self, conn: ConnId, delta: isize) {
        for s in 0..self.connections[conn.0].subflows.len() {
            let iface = self.connections[conn.0].subflows[s].iface;
            let slot = &mut self.interfaces[iface].scheduled_object_count;
            *slot = slot.checked_add_signed(delta).expect("scheduled count underflow");
        }
    }

    /// Hands `transfer` to a connection according to `decision`.
    pub fn apply_decision(&mut self, transfer: usize, decision: &PolicyDecision) {
        let node = &self.page.transfers[transfer];
        let (host, tls) = (node.host, node.tls);
        let cfg = Arc::clone(&self.config);
        let now = self.clock;
        let conn_id = match decision {
            PolicyDecision::Postpone => {
                self.postpone(transfer);
                return;
            }
            PolicyDecision::ReuseConnection(id) => {
                let request = f64::from(cfg.reuse_rtts) * self.rtt(self.connections[id.0].primary_iface());
                let conn = &mut self.connections[id.0];
                assert!(
                    conn.is_open() && conn.host == host,
                    "reuse of unsuitable connection {id}"
                );
                if conn.phase == Phase::Idle {
                    conn.idle_epoch += 1;
                    conn.idle_since = None;
                    conn.current = Some(transfer);
                    conn.phase = Phase::Requesting;
                    conn.phase_until = now + request;
                    self.queue.push(now + request, *id, EventKind::RequestArrives);
                    self.transfers[transfer].status = TransferStatus::Active(*id);
                } else {
                    assert!(conn.queued.is_none(), "connection {id} already has a queued transfer");
                    conn.queued = Some(QueuedTransfer {
                        transfer,
                        request_arrival: now + request,
                    });
                    self.transfers[transfer].status = TransferStatus::Queued(*id);
                }
                self.transfers[transfer].reused = true;
                *id
            }
            PolicyDecision::NewTcp(iface) => self.open(transfer, host, tls, &[*iface], false),
            PolicyDecision::NewMptcp { interfaces, initial } => {
                let mut order = vec![*initial];
                order.extend(interfaces.iter().copied().filter(|i| i != initial));
                self.open(transfer, host, tls, &order, true)
            }
        };
        let rt = &mut self.transfers[transfer];
        rt.start = Some(now);
        rt.conn = Some(conn_id);
        self.count_scheduled(conn_id, 1);
    }

    fn open(&mut self, transfer: usize, host: usize, tls: bool, ifaces: &[usize], mptcp: bool) -> ConnId {
        let id = ConnId(self.connections.len());
        let handshake = f64::from(self.config.new_conn_rtts - self.config.reuse_rtts) * self.rtt(ifaces[0]);
        let until = self.clock + handshake;
        self.connections.push(Connection {
            id,
            host,
            tls,
            mptcp,
            subflows: ifaces.iter().map(|&i| Subflow::new(i)).collect(),
            phase: Phase::Handshaking,
            phase_until: until,
            current: Some(transfer),
            queued: None,
            remaining: 0.0,
            rate: 0.0,
            completion_at: f64::INFINITY,
            completion_epoch: 0,
            idle_since: None,
            idle_epoch: 0,
        });
        self.queue.push(until, id, EventKind::HandshakeDone);
        self.transfers[transfer].status = TransferStatus::Active(id);
        id
    }

    fn is_stale(&self, ev: &Event) -> bool {
        let conn = &self.connections[ev.conn.0];
        match ev.kind {
            EventKind::RoundEnd { subflow, epoch } => {
                let s = &conn.subflows[subflow];
                s.epoch != epoch || !s.receiving || !s.slow_start
            }
            EventKind::TransferCompletes { epoch } => conn.completion_epoch != epoch,
            EventKind::IdleTimeout { epoch } => conn.idle_epoch != epoch || conn.phase != Phase::Idle,
            _ => false,
        }
    }

    /// Pops events until a live one is found.
    fn next_event(&mut self) -> Option<Event> {
        while let Some(ev) = self.queue.pop() {
            if !self.is_stale(&ev) {
                return Some(ev);
            }
        }
        None
    }

    /// Processes the next live event. Returns `Ok(false)` when the queue is
    /// exhausted.
    pub(crate) fn step(&mut self, observer: &mut dyn Observer) -> Result<bool, SimError> {
        let Some(ev) = self.next_event() else {
            return Ok(false);
        };
        debug_assert!(ev.time >= self.clock, "clock would run backwards");
        self.advance_to(ev.time);
        self.events_processed += 1;
        if observer.wants_events() {
            let subject = match self.connections[ev.conn.0].current {
                Some(t) => format!("{}:{}", ev.conn, self.page.transfers[t].id),
                None => ev.conn.to_string(),
            };
            observer.on_event(ev.time, ev.kind.name(), &subject);
        }
        self.handle(ev);
        self.refresh_rates();
        Ok(true)
    }

    /// Runs the event loop (without making decisions) until `transfer` is
    /// done, returning its completion time.
    pub fn run_until_done(&mut self, transfer: usize, observer: &mut dyn Observer) -> Result<f64, SimError> {
        while self.transfers[transfer].end.is_none() {
            if !self.step(observer)? {
                return Err(self.deadlock());
            }
        }
        Ok(self.transfers[transfer].end.expect("loop exits once done"))
    }

    pub(crate) fn deadlock(&self) -> SimError {
        SimError::Deadlock {
            clock: self.clock,
            remaining: self.transfers.len() - self.done,
        }
    }

    fn advance_to(&mut self, time: f64) {
        let dt = time - self.clock;
        if dt > 0.0 {
            for conn in &mut self.connections {
                if conn.phase == Phase::Receiving {
                    conn.remaining = (conn.remaining - dt * conn.rate).max(0.0);
                }
            }
        }
        self.clock = self.clock.max(time);
    }

    fn handle(&mut self, ev: Event) {
        let now = self.clock;
        let cfg = Arc::clone(&self.config);
        let id = ev.conn;
        match ev.kind {
            EventKind::HandshakeDone => {
                let primary_rtt = self.rtt(self.connections[id.0].primary_iface());
                let joins: Vec<(usize, f64)> = self.connections[id.0]
                    .subflows
                    .iter()
                    .enumerate()
                    .skip(1)
                    .map(|(i, s)| (i, now + self.rtt(s.iface)))
                    .collect();
                for (sub, at) in joins {
                    self.queue.push(at, id, EventKind::SubflowJoined { subflow: sub });
                }
                let conn = &mut self.connections[id.0];
                conn.subflows[0].joined_at = Some(now);
                if conn.tls {
                    conn.phase = Phase::TlsHandshaking;
                    conn.phase_until = now + f64::from(cfg.tls_handshake_rtts) * primary_rtt;
                    self.queue.push(conn.phase_until, id, EventKind::TlsDone);
                } else {
                    conn.phase = Phase::Requesting;
                    conn.phase_until = now + f64::from(cfg.reuse_rtts) * primary_rtt;
                    self.queue.push(conn.phase_until, id, EventKind::RequestArrives);
                }
            }
            EventKind::TlsDone => {
                let primary_rtt = self.rtt(self.connections[id.0].primary_iface());
                let conn = &mut self.connections[id.0];
                conn.phase = Phase::Requesting;
                conn.phase_until = now + f64::from(cfg.reuse_rtts) * primary_rtt;
                self.queue.push(conn.phase_until, id, EventKind::RequestArrives);
            }
            EventKind::RequestArrives => {
                let transfer = self.connections[id.0].current.expect("request without transfer");
                let size = self.page.transfers[transfer].size;
                if size == 0 {
                    self.complete_transfer(id);
                } else {
                    let conn = &mut self.connections[id.0];
                    conn.phase = Phase::Receiving;
                    conn.remaining = size as f64;
                    conn.rate = 0.0;
                    let joined: Vec<usize> = (0..conn.subflows.len())
                        .filter(|&s| conn.subflows[s].joined_at.is_some())
                        .collect();
                    for s in joined {
                        self.start_subflow(id, s);
                    }
                }
            }
            EventKind::SubflowJoined { subflow } => {
                let conn = &mut self.connections[id.0];
                conn.subflows[subflow].joined_at = Some(now);
                if conn.phase == Phase::Receiving {
                    self.start_subflow(id, subflow);
                }
            }
            EventKind::RoundEnd { subflow, epoch } => {
                let rtt = self.rtt(self.connections[id.0].subflows[subflow].iface);
                let s = &mut self.connections[id.0].subflows[subflow];
                s.round += 1;
                s.round_start = now;
                self.queue.push(now + rtt, id, EventKind::RoundEnd { subflow, epoch });
            }
            EventKind::TransferCompletes { .. } => self.complete_transfer(id),
            EventKind::IdleTimeout { .. } => {
                self.close_idle_connections();
            }
        }
    }

    fn start_subflow(&mut self, id: ConnId, sub: usize) {
        let now = self.clock;
        let iface = self.connections[id.0].subflows[sub].iface;
        let rtt = self.rtt(iface);
        let conn = &mut self.connections[id.0];
        let s = &mut conn.subflows[sub];
        s.receiving = true;
        s.slow_start = true;
        s.round = 0;
        s.round_start = now;
        s.rate = 0.0;
        s.epoch += 1;
        let epoch = s.epoch;
        if let Some(t) = conn.current {
            let used = &mut self.transfers[t].ifaces_used;
            if !used.contains(&iface) {
                used.push(iface);
                used.sort_unstable();
            }
        }
        self.queue
            .push(now + rtt, id, EventKind::RoundEnd { subflow: sub, epoch });
    }

    fn complete_transfer(&mut self, id: ConnId) {
        let now = self.clock;
        let cfg = Arc::clone(&self.config);
        let transfer = self.connections[id.0]
            .current
            .take()
            .expect("completion without transfer");
        self.count_scheduled(id, -1);
        {
            let rt = &mut self.transfers[transfer];
            rt.status = TransferStatus::Done;
            rt.end = Some(now);
        }
        self.done += 1;

        if self.probe.is_none() {
            let page = Arc::clone(&self.page);
            for &d in &page.transfers[transfer].dependents {
                let rt = &mut self.transfers[d];
                rt.deps_left -= 1;
                if rt.deps_left == 0 {
                    rt.status = TransferStatus::Enabled;
                    self.ready.push(d);
                }
            }
            self.retry_due = true;
        }

        let primary_rtt = self.rtt(self.connections[id.0].primary_iface());
        let conn = &mut self.connections[id.0];
        conn.completion_epoch += 1;
        conn.rate = 0.0;
        conn.remaining = 0.0;
        conn.completion_at = f64::INFINITY;
        for s in &mut conn.subflows {
            s.receiving = false;
            s.slow_start = false;
            s.rate = 0.0;
            s.epoch += 1;
        }
        if let Some(q) = conn.queued.take() {
            let arrival = if cfg.pipelining {
                q.request_arrival.max(now)
            } else {
                now + f64::from(cfg.reuse_rtts) * primary_rtt
            };
            conn.current = Some(q.transfer);
            conn.phase = Phase::Requesting;
            conn.phase_until = arrival;
            self.queue.push(arrival, id, EventKind::RequestArrives);
            self.transfers[q.transfer].status = TransferStatus::Active(id);
        } else {
            conn.phase = Phase::Idle;
            conn.idle_since = Some(now);
            conn.idle_epoch += 1;
            let epoch = conn.idle_epoch;
            self.queue
                .push(now + cfg.idle_timeout_s, id, EventKind::IdleTimeout { epoch });
        }
    }

    /// Closes every connection that has been idle for the configured timeout.
    pub fn close_idle_connections(&mut self) -> usize {
        let timeout = self.config.idle_timeout_s;
        let now = self.clock;
        let mut closed = 0;
        for conn in &mut self.connections {
            if conn.phase != Phase::Idle {
                continue;
            }
            if conn.idle_since.is_some_and(|since| since + timeout <= now) {
                conn.phase = Phase::Closed;
                conn.idle_since = None;
                conn.idle_epoch += 1;
                closed += 1;
            }
        }
        if closed > 0 && self.probe.is_none() {
            self.retry_due = true;
        }
        closed
    }

    /// Recomputes fair shares on one interface and applies them to its
    /// receiving flows. Returns the new rates keyed by (connection, subflow).
    pub fn recompute_fair_shares(&mut self, iface: usize) -> Vec<((ConnId, usize), f64)> {
        let rtt = self.rtt(iface);
        let capacity = self.interfaces[iface].capacity();
        let cfg = Arc::clone(&self.config);
        let mut flows: Vec<(usize, usize)> = Vec::new();
        let mut caps: Vec<f64> = Vec::new();
        for (c, conn) in self.connections.iter().enumerate() {
            for (s, sub) in conn.subflows.iter().enumerate() {
                if sub.iface == iface && sub.receiving {
                    flows.push((c, s));
                    caps.push(if sub.slow_start {
                        cwnd_rate(sub.round, rtt, &cfg)
                    } else {
                        f64::INFINITY
                    });
                }
            }
        }
        let (rates, level) = water_fill(capacity, &caps);
        let total: f64 = rates.iter().sum();
        assert!(
            total <= capacity * (1.0 + CAPACITY_SLACK),
            "interface {iface} oversubscribed: {total} > {capacity}"
        );
        let state = &mut self.interfaces[iface];
        state.max_observed_rate = state.max_observed_rate.max(total);

        flows
            .into_iter()
            .zip(caps.into_iter().zip(rates))
            .map(|((c, s), (cap, rate))| {
                let sub = &mut self.connections[c].subflows[s];
                sub.rate = rate;
                if sub.slow_start && cap >= level {
                    sub.slow_start = false;
                }
                ((ConnId(c), s), rate)
            })
            .collect()
    }

    /// Recomputes all shares and reschedules completions whose rate changed.
    pub(crate) fn refresh_rates(&mut self) {
        for iface in 0..self.interfaces.len() {
            self.recompute_fair_shares(iface);
        }
        let now = self.clock;
        for c in 0..self.connections.len() {
            let conn = &mut self.connections[c];
            if conn.phase != Phase::Receiving {
                continue;
            }
            let rate: f64 = conn.subflows.iter().filter(|s| s.receiving).map(|s| s.rate).sum();
            if rate != conn.rate {
                assert!(rate > 0.0, "receiving connection {} has no rate", conn.id);
                conn.rate = rate;
                conn.completion_epoch += 1;
                conn.completion_at = now + conn.remaining / rate;
                let epoch = conn.completion_epoch;
                self.queue
                    .push(conn.completion_at, conn.id, EventKind::TransferCompletes { epoch });
            }
        }
    }

    pub(crate) fn result(&self) -> SimResult {
        let mut per_transfer = IndexMap::new();
        let mut plt: f64 = 0.0;
        for (node, rt) in self.page.transfers.iter().zip(&self.transfers) {
            let end = rt.end.expect("all transfers done");
            plt = plt.max(end);
            let conn = rt.conn.expect("done transfers have a connection");
            let interfaces = if rt.ifaces_used.is_empty() {
                vec![self.connections[conn.0].primary_iface()]
            } else {
                rt.ifaces_used.clone()
            };
            per_transfer.insert(
                node.id.clone(),
                TransferTiming {
                    start_s: rt.start.expect("done transfers were started"),
                    end_s: end,
                    interfaces,
                    connection: conn.0,
                    reused: rt.reused,
                },
            );
        }
        SimResult {
            page_load_time_s: plt,
            per_transfer,
            events_processed: self.events_processed,
        }
    }

    /// Deterministic textual snapshot for structural comparisons.
    pub fn fingerprint(&self) -> String {
        format!(
            "{:?}|{:?}|{:?}|{:?}|{:?}|{:?}|{}|{}|{}",
            self.clock.to_bits(),
            self.queue.sorted(),
            self.connections,
            self.interfaces,
            self.transfers,
            self.postponed,
            self.ready.len(),
            self.done,
            self.events_processed,
        )
    }
}

//! Heap-based discrete-event simulation of a page download.
//!
//! Connections go through handshake, optional TLS handshake and request
//! phases before receiving. While receiving, each flow follows a fluid
//! slow-start model in RTT-length rounds and is capped by its water-filled
//! share of the interface. MPTCP connections are modeled as one such flow
//! per interface draining a single transfer.

mod event;
mod flow;
mod state;

use std::io::Write;
use std::sync::Arc;

pub use event::{Event, EventKind, EventQueue};
pub use flow::{cwnd_rate, slow_start_rate, transfer_setup_latency, water_fill};
pub use state::{
    ConnId, Connection, InterfaceState, PageIndex, Phase, QueuedTransfer, SimulationState, Subflow, TransferNode,
    TransferRuntime, TransferStatus,
};

use crate::error::SimError;
use crate::model::{
    validate_page, validate_policy, validate_scenario, NetworkScenario, PolicyKind, SimConfig, SimResult, WorkloadPage,
};
use crate::policies::{self, PolicyCursor, PolicyDecision};

/// Hooks into a running simulation. All methods default to no-ops.
pub trait Observer {
    /// Whether `on_event` should be called; skips formatting when not.
    fn wants_events(&self) -> bool {
        false
    }

    fn on_event(&mut self, _time: f64, _kind: &str, _subject: &str) {}

    /// Called with the state the policy saw, before the decision is applied.
    fn on_decision(&mut self, _state: &SimulationState, _transfer: usize, _decision: &PolicyDecision) {}

    /// Called after every processed event once rates and decisions settled.
    fn on_boundary(&mut self, _state: &SimulationState) {}
}

impl Observer for () {}

/// Writes one tab-separated line per processed event: time, kind, subject.
pub struct TraceWriter<W: Write>(pub W);

impl<W: Write> Observer for TraceWriter<W> {
    fn wants_events(&self) -> bool {
        true
    }

    fn on_event(&mut self, time: f64, kind: &str, subject: &str) {
        // Trace output is best effort.
        let _ = writeln!(self.0, "{time:.9}\t{kind}\t{subject}");
    }
}

/// A validated simulation ready to run.
pub struct Simulation {
    state: SimulationState,
    policy: PolicyKind,
    cursor: PolicyCursor,
}

impl Simulation {
    pub fn new(
        page: &WorkloadPage,
        scenario: &NetworkScenario,
        policy: PolicyKind,
        config: &SimConfig,
    ) -> Result<Self, SimError> {
        let mut report = validate_page(page);
        report.merge(validate_scenario(scenario, config));
        report.merge(validate_policy(policy, scenario));
        if !report.is_ok() {
            return Err(SimError::InvalidInput(report));
        }
        let index = Arc::new(PageIndex::build(page));
        let state = SimulationState::new(index, scenario, Arc::new(config.clone()));
        Ok(Self {
            state,
            policy,
            cursor: PolicyCursor::new(config.rng_seed),
        })
    }

    pub fn state(&self) -> &SimulationState {
        &self.state
    }

    pub fn run(mut self, observer: &mut dyn Observer) -> Result<SimResult, SimError> {
        self.state.enable_roots();
        self.decide_ready(observer)?;
        observer.on_boundary(&self.state);
        while !self.state.all_done() {
            if !self.state.step(observer)? {
                return Err(self.state.deadlock());
            }
            self.decide_ready(observer)?;
            observer.on_boundary(&self.state);
        }
        Ok(self.state.result())
    }

    fn decide_ready(&mut self, observer: &mut dyn Observer) -> Result<(), SimError> {
        for transfer in self.state.take_decidable() {
            let decision = policies::decide(self.policy, &self.state, transfer, &mut self.cursor)?;
            observer.on_decision(&self.state, transfer, &decision);
            self.state.apply_decision(transfer, &decision);
        }
        Ok(())
    }
}

/// Simulates downloading `page` over `scenario` with `policy`.
pub fn run_simulation(
    page: &WorkloadPage,
    scenario: &NetworkScenario,
    policy: PolicyKind,
    config: &SimConfig,
) -> Result<SimResult, SimError> {
    Simulation::new(page, scenario, policy, config)?.run(&mut ())
}

pub fn run_simulation_observed(
    page: &WorkloadPage,
    scenario: &NetworkScenario,
    policy: PolicyKind,
    config: &SimConfig,
    observer: &mut dyn Observer,
) -> Result<SimResult, SimError> {
    Simulation::new(page, scenario, policy, config)?.run(observer)
}

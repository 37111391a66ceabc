//! Flow-level simulation of Web page downloads over multiple network
//! interfaces, with path selection policies, workload construction and a
//! factorial experiment harness.

pub mod engine;
pub mod error;
pub mod experiment;
pub mod model;
pub mod policies;
pub mod workload;

pub use engine::{run_simulation, run_simulation_observed, Observer, Simulation, SimulationState, TraceWriter};
pub use error::{ExperimentError, ModelError, SimError, WorkloadError};
pub use model::{
    validate_page, validate_policy, validate_scenario, BandwidthEstimator, InterfaceSpec, NetworkScenario, PolicyKind,
    SimConfig, SimResult, TransferSpec, TransferTiming, ValidationReport, Violation, WorkloadPage,
};
pub use policies::PolicyDecision;

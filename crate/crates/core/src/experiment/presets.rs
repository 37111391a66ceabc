use crate::error::ModelError;
use crate::model::NetworkScenario;

pub const PRESET_NAMES: [&str; 3] = ["symmetric", "asymmetric", "highly-asym"];

/// Downlink RTT/rate pairs of the emulated testbed scenarios. Uplink limits
/// are not modeled.
pub fn preset(name: &str) -> Result<NetworkScenario, ModelError> {
    match name {
        "symmetric" => Ok(NetworkScenario::two(45.0, 10.0, 45.0, 10.0)),
        "asymmetric" => Ok(NetworkScenario::two(20.0, 6.0, 70.0, 13.0)),
        "highly-asym" => Ok(NetworkScenario::two(10.0, 3.0, 100.0, 20.0)),
        other => Err(ModelError::UnknownPreset(other.to_string())),
    }
}

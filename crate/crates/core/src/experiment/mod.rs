//! Full factorial experiments: design construction, parallel execution,
//! speedups against the Interface 1 baseline, and CSV reports.

mod design;
mod presets;
mod report;
mod runner;
mod speedup;

pub use design::{build_design, FactorLevels, LevelsFile, RunDescriptor, ScenarioKey};
pub use presets::{preset, PRESET_NAMES};
pub use report::{category_by_factor, ecdf, emit_reports, format_number, read_speedups_csv, write_runs_csv, FactorRow};
pub use runner::{run_design, run_seed, RunRecord, RunStatus};
pub use speedup::{compute_speedups, SpeedupCategory, SpeedupRecord, EQUAL_TOLERANCE};

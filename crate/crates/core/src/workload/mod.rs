//! Sources of [`WorkloadPage`](crate::model::WorkloadPage) values: recorded
//! HAR captures and generated handcrafted pages.

mod deps;
mod har;
mod synthetic;

pub use deps::{derive_dependencies, transitive_reduction, DEFAULT_JITTER_MS};
pub use har::{parse_har, HarEntry};
pub use synthetic::{generate_synthetic, parse_size, SyntheticSpec, ROOT_SIZE_BYTES};

//! Configuration parsing, CSV records, and binary field snapshots.

pub mod config;
pub mod records;
pub mod snapshot;

pub use config::{parse_config, CouplingSpec, RunConfig};
pub use records::{read_records, write_records};
pub use snapshot::{read_field, read_orbitals, write_field, write_orbitals};

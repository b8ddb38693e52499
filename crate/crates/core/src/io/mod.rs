//! Configuration, diagnostics CSV and binary snapshots. Everything here
//! works on strings, byte buffers and `Read`/`Write`; opening files is left
//! to the command-line front end.

pub mod config;
pub mod csv;
pub mod snapshot;

pub use config::{parse_config, parse_config_with, InitialSpec, Outputs, RunConfig};
pub use csv::{read_csv, write_csv};
pub use snapshot::Snapshot;

//! Batch front end for ergodelab: config parsing, task dispatch and report
//! emission.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod run;

pub use config::{defaults_toml, parse_config, parse_config_str, Diagnostic, ParseError, RunConfig};
pub use run::{emit_plotdata, execute, write_artifacts, Artifact, Outcome, RunError};

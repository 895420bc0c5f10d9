//! File formats and command implementations behind the `tracelab` binary.
//!
//! Split out as a library so integration tests can drive the exact code
//! paths the binary runs; `main` only parses arguments and maps errors to
//! exit codes.

pub mod commands;
pub mod output;
pub mod scenario;

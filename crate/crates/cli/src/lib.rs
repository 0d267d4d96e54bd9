//! File formats, configuration parsing and the command implementations
//! behind the `stpod` binary.
//!
//! Everything numeric lives in `stpod-core`; this crate only moves bytes:
//! snapshot files (text or binary), ROM database directories with a
//! human-readable manifest, forging configuration files, error reports and
//! run logs. All file writes are atomic (write to a temporary sibling, then
//! rename).

pub mod commands;
pub mod config;
pub mod formats;
pub mod log;

//! Command implementations behind the `stackdenoise` binary.

pub mod commands;
pub mod config;
pub mod files;
pub mod workers;

//! Command-line and HTTP shell around the `registerdex` library.

pub mod commands;
pub mod config;
pub mod runtime;
pub mod server;
pub mod state;

//! Library half of the `ldphh` binary, split out so the integration tests
//! can reach the configuration and CSV code directly.

pub mod commands;
pub mod config;

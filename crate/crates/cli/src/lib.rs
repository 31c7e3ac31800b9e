//! Command line and HTTP gateway for the casealot distribution engine.

pub mod commands;
pub mod gateway;

pub use commands::{execute, Cli, CliError};
pub use gateway::{router, ApiError, AppState};

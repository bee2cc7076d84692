//! Command line interface and HTTP review service.

pub mod cli;
pub mod server;

//! Command-line pipeline: every analysis as a subcommand writing CSV and
//! markdown tables.

pub mod args;
pub mod commands;
pub mod inputs;
pub mod report;

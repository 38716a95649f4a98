//! Command-line driver: argument and config-file parsing plus subcommand execution.

pub mod config;
pub mod run;

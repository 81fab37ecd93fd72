//! Command-line front end: run configuration, checkpoints and the
//! subcommands that drive data generation, training and evaluation.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod features;

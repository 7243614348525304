//! Command-line front end: workspace layout, configuration and subcommands.

pub mod cli;
pub mod commands;
pub mod config;
pub mod exit;
pub mod trials;
pub mod workspace;

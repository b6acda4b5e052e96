//! Configuration, output and verification for the `conic-scatter` command.

pub mod commands;
pub mod config;
pub mod exit;
pub mod output;
pub mod verify;

//! Library surface of the experiment runner; the binary in `main.rs` is a
//! thin argument parser over these commands.

pub mod commands;
pub mod config;

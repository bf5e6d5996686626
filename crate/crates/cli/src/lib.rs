//! Command-line experiment runner and acceptance suite for `youngbsde`.

pub mod acceptance;
pub mod config;
pub mod error;
pub mod manifest;
pub mod registry;
pub mod runner;

//! HTTP API and command-line front end for step-level explanation
//! verification.

pub mod app;
pub mod config;
pub mod error;
pub mod workflow;

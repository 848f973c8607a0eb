//! Workbench around the `tsattn-core` numeric crate: experiment configs,
//! the batch pipeline, the `tsattn` command line and an HTTP service for
//! interactive exploration.

pub mod cli;
pub mod config;
pub mod error;
pub mod pipeline;
pub mod prepare;
pub mod service;

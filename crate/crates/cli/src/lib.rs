//! Command-line front end and HTTP service for `sqseg-core`.

pub mod args;
pub mod commands;
pub mod error;
pub mod export;
pub mod rle;
pub mod segment;
pub mod service;

pub use error::{exit, exit_code, Failure};

//! File formats, command line and streaming service around `airwrite-core`.

pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod export;
pub mod io;
pub mod service;

pub use error::{AppError, AppResult, ErrorKind};

//! Runner, configuration, file formats and command-line plumbing for
//! [`pdml_core`].

pub mod checkpoint;
pub mod compare;
pub mod config;
pub mod error;
pub mod metrics;
pub mod run;
pub mod verify;

pub use error::{AppError, Result};

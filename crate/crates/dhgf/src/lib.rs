//! Input/output, benchmark protocols and the command line for
//! [`dhgf_core`] networks.

pub mod bench;
pub mod config;
pub mod error;
pub mod idx;
pub mod metrics;
pub mod model;
pub mod plot;
pub mod snapshot;
pub mod verify;

pub use dhgf_core as core;

//! Deep hierarchical Gaussian filter (HGF) networks.
//!
//! A layered belief network in which every continuous unit carries a posterior
//! mean and precision. A training step is a single top-down prediction sweep,
//! a bottom-up sweep of closed-form posterior updates driven by
//! precision-weighted prediction errors, and a local Hebbian weight update.
//! No iterative relaxation and no automatic differentiation are involved.
//!
//! The crate is `no_std` and only needs `alloc`; the `std` feature swaps in
//! the vectorizable hardware square root. File formats, timing and the
//! command line live in the `dhgf` companion crate.
//!
//! - [`math`]: activations, the logistic sigmoid, He initialisation, [`Rng`]
//! - [`hgf`]: the network, its prediction/error/posterior sweeps, volatility parents
//! - [`plasticity`]: the three Hebbian rules and the single-sample training step
//! - [`baselines`]: backprop MLP with Adam and an iterative predictive-coding network
//! - [`data`]: datasets, the spiral generator, subsets and the drift schedule
#![cfg_attr(not(any(test, feature = "std")), no_std)]

extern crate alloc;

pub mod baselines;
pub mod data;
mod error;
pub mod hgf;
pub mod math;
pub mod plasticity;

pub use error::{Error, Result};
pub use hgf::{HgfConfig, HgfNetwork, LayerBeliefs, OutputKind, PrecisionMode};
pub use math::{ActivationKind, Rng};
pub use plasticity::{RatioPrecision, TrainDiagnostics, WeightRule, WeightRuleKind};

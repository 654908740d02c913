//! Energy-efficient joint subchannel and power allocation for OFDM
//! heterogeneous networks.
//!
//! The crate covers the whole pipeline: the system model and its metrics
//! ([`system`]), channel realizations ([`channel`]), an exhaustive-search oracle
//! with heuristic baselines ([`solver`]), labeled datasets ([`dataset`]), a small
//! neural-network engine with CNN and DNN allocators ([`nn`]), and evaluation
//! utilities ([`eval`]).

// Range checks are written `!(x >= lo)` on purpose so that NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod config;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod nn;
pub mod solver;
pub mod system;

pub use config::{BsKind, NetworkConfig, RateFormula};
pub use error::{Error, Result};
pub use system::{Allocation, ChannelTensor, Metrics, Violation};

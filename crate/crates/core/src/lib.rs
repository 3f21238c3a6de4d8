//! Sparse superposition codes over the AWGN channel.
//!
//! A message of `L` sections, each a one-hot vector of size `B`, is encoded
//! by a linear operator `F` and decoded with approximate message passing.
//! The crate also carries the asymptotic analysis of the decoder: state
//! evolution, the replica potential, threshold finders and power allocation.

pub mod allocation;
pub mod amp;
pub mod channel;
pub mod error;
pub mod experiment;
pub mod message;
pub mod metrics;
pub mod operators;
pub mod params;
pub mod replica;
pub mod rng;
pub mod state_evolution;

pub use allocation::{
    decodability_condition, exponential_groups, exponential_power_allocation, PowerAllocation,
};
pub use channel::{transmit, ChannelRealization};
pub use error::{Error, Result};
pub use message::{random_message, SparseMessage};
pub use metrics::{mse_per_section, section_error_rate};
pub use operators::{
    build_coupled_gaussian, build_coupled_hadamard, build_dense_gaussian, build_hadamard,
    CoupledEnsembleParams, Operator, OperatorKind, OperatorManifest, VarianceProfile,
};
pub use params::{derive_dimensions, CodeParams};
pub use replica::{capacity, find_r_bp, find_r_opt, r_bp_infinity, Threshold, ThresholdConfig};
pub use state_evolution::{se_run, SEParams, SeMode, StateEvolution};

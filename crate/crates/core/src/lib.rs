//! Process tensor tomography for a qubit coupled to an environment.
//!
//! The crate simulates multi-time open-system dynamics, reconstructs the
//! process tensor by linear inversion or constrained maximum likelihood,
//! builds finite-memory models from overlapping blocks, and optimizes
//! control sequences against fitted models.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN.

pub mod algebra;
pub mod basis_design;
pub mod channels;
pub mod cli;
pub mod control;
pub mod error;
pub mod io;
pub mod markov_order;
pub mod mle;
pub mod optim;
pub mod process_tensor;
pub mod projection;
pub mod random;
pub mod simulator;

pub use error::{Error, Result};

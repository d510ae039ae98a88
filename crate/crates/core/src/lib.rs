//! Generalized contrastive loss (GCL).
//!
//! One ratio loss, parameterized by an affinity matrix and a similarity
//! kernel, covers prototypical episode losses, NT-Xent, and a semi-supervised
//! mixture of both. The crate also carries a small synthetic speaker
//! verification harness that trains an MLP encoder in supervised,
//! semi-supervised, and unsupervised modes with that single loss.

pub mod affinity;
pub mod batch;
pub mod commands;
pub mod config;
pub mod error;
pub mod eval;
pub mod io;
pub mod kernel;
pub mod loss;
pub mod rng;
pub mod train;
pub mod verify;

pub use error::{GclError, Result};

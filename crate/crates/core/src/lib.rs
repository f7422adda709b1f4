//! Finite-horizon regret-optimal measurement-feedback control.
//!
//! The crate lifts a time-varying linear system over a finite horizon into
//! dense operators, computes the H₂-optimal clairvoyant (noncausal)
//! controller, and synthesizes the causal controller minimizing worst-case
//! regret against it through a Nehari problem solved by block-triangular
//! norm completion and bisection. A step simulator and disturbance
//! generators cross-check everything in the time domain.
//!
//! The crate is `no_std` and needs only `alloc`.
#![no_std]
// `!(x > 0.0)` is used on purpose: it also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
#[macro_use]
extern crate std;

pub mod benchmark;
pub mod blockops;
pub mod error;
pub mod lifting;
pub mod nehari;
pub mod regret;
pub mod sim;

pub use benchmark::{Causality, Controller, Origin};
pub use blockops::{BlockMatrix, BlockPartition};
pub use error::{Error, Result};
pub use lifting::{Instance, LiftedSystem, SystemInstance};

pub use nalgebra;

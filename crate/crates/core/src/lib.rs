//! Core numerics for optimal-transport trained 1-Lipschitz networks.
//!
//! Everything here is pure computation over `alloc` containers: dense
//! tensors and orthogonalization kernels, the network and its reverse-mode
//! gradients, hinge-Kantorovich-Rubinstein losses, Adam with projection,
//! synthetic datasets, gradient attributions, explanation metrics and the
//! geometric checks on trained classifiers. File formats, dataset IO and the
//! command line live in the `otxai` crate.
#![no_std]
#![forbid(unsafe_op_in_unsafe_fn)]
// `!(x > 0.0)` style guards deliberately reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod attribution;
pub mod contour;
pub mod data;
mod error;
pub mod linalg;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod rng;
pub mod stats;
pub mod tensor;
pub mod verify;

pub use error::{Error, Result};
pub use model::{LipNet, Score};
pub use rng::Rng;
pub use tensor::Tensor;

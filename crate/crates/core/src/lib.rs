//! Phase retrieval for off-axis quantitative phase imaging, with the
//! decoder connectivity found by differentiable architecture search.
//!
//! The crate has two halves. [`classical`] synthesizes interferograms and
//! retrieves phase the conventional way (Fourier demodulation, Goldstein
//! unwrapping, aberration compensation). [`supernet`] and [`nas`] build an
//! encoder–decoder super-network whose candidate skip connections carry
//! relaxed weights, train it with a sparsity-aware loss, prune it and
//! materialize the sparse network. [`harness`] holds datasets, training
//! and evaluation.

pub mod autodiff;
pub mod classical;
pub mod error;
pub mod harness;
pub mod nas;
pub mod optim;
pub mod param;
pub mod supernet;
pub mod tensor;

pub use autodiff::{Gradients, Tape, Var};
pub use error::{Error, Result};
pub use param::{ParamId, ParamStore, Parameter};
pub use tensor::{Shape, Tensor};

//! Spatial false discovery rate control for voxel-wise tests.
//!
//! A fully connected binary hidden Markov random field couples every pair of
//! voxels through Gaussian appearance and smoothness kernels. Mean-field
//! inference runs in linear time on the permutohedral lattice, EM fits the
//! non-null density and the field weights, and the resulting local indices
//! of significance drive a step-up procedure.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod em;
pub mod error;
pub mod io;
pub mod lattice;
pub mod meanfield;
pub mod oracle;
pub mod pipeline;
pub mod seed;
pub mod sim;
pub mod stats;
pub mod testing;
pub mod volume;

pub use error::{Error, Result};

//! Zero-shot prediction of kernel classifiers.
//!
//! Seen classes get ordinary one-vs-all kernel SVMs. A transfer matrix `T`
//! is then learned so that `T^T g(e)` maps a class's side-information
//! kernel vector `g(e)` to the coefficients of its visual classifier. For an
//! unseen class, the predicted classifier is `T^T g(e)` itself, optionally
//! refined by a small QP that treats every seen sample as a negative.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod io;
pub mod kernels;
pub mod pipeline;
pub mod predict;
pub mod qp;
pub mod rng;
pub mod side;
pub mod svm;
pub mod synth;
pub mod text;
pub mod transfer;

pub use error::{Error, ErrorKind, Result};

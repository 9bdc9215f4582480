//! Numerical core for time-lagged analysis of dynamical systems: covariance
//! estimation, Koopman and transfer-operator approximations, Markov and hidden
//! Markov models, sparse regression of governing equations, clustering and
//! synthetic data generators.
//!
//! Data layout is the same everywhere: a trajectory is a matrix with one frame
//! per row and one feature per column.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

mod prelude {
    #[allow(unused_imports)]
    pub use alloc::{boxed::Box, format, string::String, vec, vec::Vec};
    #[allow(unused_imports)]
    pub use num_traits::Float;
}

pub mod error;
pub mod linalg;
#[cfg(feature = "serde")]
pub(crate) mod serde_matrix;

pub mod basis;
pub mod clustering;
pub mod covariance;
pub mod datasets;
pub mod decomposition;
pub mod hmm;
pub mod markov;
pub mod sindy;
pub mod kernels;

pub use error::{Error, Result};

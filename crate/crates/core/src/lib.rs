//! Selected inversion of sparse GMRF precision matrices: exact Takahashi
//! recursions, Monte Carlo and Rao-Blackwellized estimators, and the
//! iterative interface method.

pub mod bench;
pub mod chol;
pub mod error;
pub mod estimators;
pub mod interface;
pub mod lattice;
pub mod models;
pub mod mtx;
pub mod ordering;
pub mod pcg;
pub mod rng;
pub mod sampler;
pub mod selcov;
pub mod sparse;
pub mod stats;
pub mod takahashi;

pub use error::{Error, Result};

//! Covariance estimators: plain Monte Carlo, Hutchinson, simple and block
//! Rao-Blackwellized Monte Carlo, their analytic uncertainty, and linear
//! constraint corrections.

mod analytic;
mod block;
mod constraints;
mod hutchinson;
mod mc;
mod quadform;
mod rbmc;

pub use analytic::{ar1_analytic_rmse, mc_analytic_rmse};
pub use block::{block_rbmc, BlockPartition, BlockRbmcPlan, BlockStats};
pub use constraints::{constrain_samples, constraint_correct, ConstraintSpec};
pub use hutchinson::hutchinson_diagonal;
pub use mc::mc_estimate;
pub use quadform::{quadratic_form_variance, trace_product};
pub use rbmc::{rbmc_uncertainty, simple_rbmc, simple_rbmc_diagonal, EstimateWithCI, DEFAULT_CONFIDENCE};

use crate::error::{Error, Result};

/// Relative RMSE of RBMC for the AR(1) variance with a centered enclosure
/// of `m` nodes: `(2φ^{M+1}/(1+φ^{M+1}))·√(2/N_s)`.
pub fn ar1_analytic_rmse(phi: f64, m: usize, n_s: usize) -> Result<f64> {
    if !(phi.abs() < 1.0) {
        return Err(Error::InvalidParameter(format!("|phi| must be < 1, got {phi}")));
    }
    if m == 0 || m % 2 == 0 {
        return Err(Error::InvalidParameter(format!("window size must be odd, got {m}")));
    }
    let p = phi.abs().powi(m as i32 + 1);
    Ok(2.0 * p / (1.0 + p) * mc_analytic_rmse(n_s)?)
}

/// Relative RMSE of the plain MC variance: `√(2/N_s)`.
pub fn mc_analytic_rmse(n_s: usize) -> Result<f64> {
    if n_s == 0 {
        return Err(Error::InvalidParameter("sample count must be at least 1".into()));
    }
    Ok((2.0 / n_s as f64).sqrt())
}

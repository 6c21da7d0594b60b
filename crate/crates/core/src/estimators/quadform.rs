use crate::error::{Error, Result};
use crate::selcov::SelectedCov;
use crate::sparse::SparseSymMatrix;

/// `Var(aᵀx) = Σ a_i a_j Σ_ij` for a sparse `a` given as `(index, value)`.
pub fn quadratic_form_variance(cov: &SelectedCov, a: &[(usize, f64)]) -> Result<f64> {
    let mut total = 0.0;
    for &(i, ai) in a {
        for &(j, aj) in a {
            total += ai * aj * cov.get(i, j).ok_or(Error::MissingEntry(i, j))?;
        }
    }
    Ok(total)
}

/// `tr(RΣ) = Σ R_ij Σ_ij` over the full symmetric pattern of `R`.
pub fn trace_product(cov: &SelectedCov, r: &SparseSymMatrix) -> Result<f64> {
    let mut total = 0.0;
    for (i, j, v) in r.triplets() {
        let s = cov.get(i, j).ok_or(Error::MissingEntry(i, j))?;
        total += if i == j { v * s } else { 2.0 * v * s };
    }
    Ok(total)
}

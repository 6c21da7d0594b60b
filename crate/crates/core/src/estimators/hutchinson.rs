use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::pcg::{pcg_solve_with, PcgConfig, PreparedPreconditioner};
use crate::sampler::SampleMatrix;
use crate::selcov::SelectedCov;
use crate::sparse::{IndexSet, SparseSymMatrix};

/// `[Σ v ⊙ Q⁻¹v] ⊘ [Σ v ⊙ v]` with PCG solves. Negative entries are kept
/// and flagged.
pub fn hutchinson_diagonal(q: &SparseSymMatrix, v: &SampleMatrix, cfg: &PcgConfig) -> Result<SelectedCov> {
    let n = q.n();
    if v.n() != n {
        return Err(Error::DimensionMismatch { expected: n, got: v.n() });
    }
    let pre = PreparedPreconditioner::new(q, cfg.preconditioner)?;
    let solved: Vec<Vec<f64>> = (0..v.n_s())
        .into_par_iter()
        .map(|j| pcg_solve_with(q, v.column(j), cfg, &pre, None).map(|s| s.x))
        .collect::<Result<_>>()?;
    let mut num = vec![0.0; n];
    let mut den = vec![0.0; n];
    for (j, z) in solved.iter().enumerate() {
        let col = v.column(j);
        for i in 0..n {
            num[i] += col[i] * z[i];
            den[i] += col[i] * col[i];
        }
    }
    if let Some(i) = den.iter().position(|&d| d == 0.0) {
        return Err(Error::ZeroProbeWeight(i));
    }
    let values = num.iter().zip(&den).map(|(a, b)| a / b).collect();
    let mut out = SelectedCov::new(IndexSet::diagonal(n), values, "hutchinson");
    out.set_n_s(v.n_s());
    out.flag_negative_diagonal();
    Ok(out)
}

use crate::error::{Error, Result};
use crate::sampler::SampleMatrix;
use crate::selcov::{EntryUncertainty, SelectedCov};
use crate::sparse::{IndexSet, SparseSymMatrix};
use crate::stats::chi2_quantile;

pub const DEFAULT_CONFIDENCE: f64 = 0.95;

/// A Rao-Blackwellized variance estimate `exact_part + (1/N_s) Σ κ²` with
/// its plug-in uncertainty.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimateWithCI {
    pub value: f64,
    pub exact_part: f64,
    pub est_variance: f64,
    pub ci: (f64, f64),
    pub confidence: f64,
    pub n_s: usize,
}

impl From<EstimateWithCI> for EntryUncertainty {
    fn from(e: EstimateWithCI) -> Self {
        EntryUncertainty { exact_part: e.exact_part, est_variance: e.est_variance, ci: Some(e.ci) }
    }
}

/// Plug-in variance `(2/N_s)(value - exact)²` and the interval
/// `exact + (value - exact)/N_s · [χ²_{(1-α)/2}, χ²_{(1+α)/2}]`.
pub fn rbmc_uncertainty(value: f64, exact_part: f64, n_s: usize, confidence: f64) -> Result<EstimateWithCI> {
    if n_s == 0 {
        return Err(Error::InvalidParameter("sample count must be at least 1".into()));
    }
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::InvalidParameter(format!("confidence must be in (0,1), got {confidence}")));
    }
    let c = value - exact_part;
    if c < 0.0 {
        return Err(Error::InvalidParameter(format!("estimate {value} below its exact part {exact_part}")));
    }
    let nf = n_s as f64;
    let lo = chi2_quantile((1.0 - confidence) / 2.0, n_s)?;
    let hi = chi2_quantile((1.0 + confidence) / 2.0, n_s)?;
    Ok(EstimateWithCI {
        value,
        exact_part,
        est_variance: 2.0 / nf * c * c,
        ci: (exact_part + c / nf * lo, exact_part + c / nf * hi),
        confidence,
        n_s,
    })
}

/// Per-node RBMC given all other nodes:
/// `1/Q_ii + (1/N_s) Σ_j ((Q - D)x⁽ʲ⁾)_i² / Q_ii²`.
pub fn simple_rbmc_diagonal(q: &SparseSymMatrix, x: &SampleMatrix, confidence: f64) -> Result<Vec<EstimateWithCI>> {
    let n = q.n();
    if x.n() != n {
        return Err(Error::DimensionMismatch { expected: n, got: x.n() });
    }
    let d = q.diagonal();
    let mut acc = vec![0.0; n];
    let mut y = vec![0.0; n];
    for col in x.columns() {
        q.spmv_into(col, &mut y);
        for i in 0..n {
            let m = (y[i] - d[i] * col[i]) / d[i];
            acc[i] += m * m;
        }
    }
    let nf = x.n_s() as f64;
    (0..n)
        .map(|i| {
            let exact = 1.0 / d[i];
            rbmc_uncertainty(exact + acc[i] / nf, exact, x.n_s(), confidence)
        })
        .collect()
}

/// [`simple_rbmc_diagonal`] packed as a diagonal [`SelectedCov`].
pub fn simple_rbmc(q: &SparseSymMatrix, x: &SampleMatrix, confidence: f64) -> Result<SelectedCov> {
    let est = simple_rbmc_diagonal(q, x, confidence)?;
    let mut out = SelectedCov::new(IndexSet::diagonal(q.n()), est.iter().map(|e| e.value).collect(), "simple-rbmc");
    out.set_n_s(x.n_s());
    out.set_confidence(confidence);
    for (k, e) in est.into_iter().enumerate() {
        out.set_uncertainty(k, e.into());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampler::rademacher_probes;

    #[test]
    fn uncertainty_arithmetic() {
        let e = rbmc_uncertainty(2.0, 2.0, 10, 0.95).unwrap();
        assert_eq!((e.est_variance, e.ci), (0.0, (2.0, 2.0)));
        let e = rbmc_uncertainty(1.5, 0.5, 50, 0.95).unwrap();
        assert!((e.est_variance - 0.04).abs() < 1e-15);
        assert!((e.ci.0 - (0.5 + 32.357 / 50.0)).abs() < 1e-4);
        assert!((e.ci.1 - (0.5 + 71.420 / 50.0)).abs() < 1e-4);
        assert!(rbmc_uncertainty(0.1, 0.2, 5, 0.95).is_err());
    }

    #[test]
    fn diagonal_precision_is_exact() {
        let t: Vec<_> = (0..5).map(|i| (i, i, 2.0 + i as f64)).collect();
        let q = SparseSymMatrix::from_triplets(5, &t).unwrap();
        let x = rademacher_probes(5, 7, 1).unwrap();
        for (i, e) in simple_rbmc_diagonal(&q, &x, 0.95).unwrap().iter().enumerate() {
            assert_eq!(e.value, 1.0 / (2.0 + i as f64));
            assert_eq!(e.est_variance, 0.0);
        }
    }
}

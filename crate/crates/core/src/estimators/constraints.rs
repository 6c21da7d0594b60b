use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::pcg::{pcg_solve_with, PcgConfig, PreparedPreconditioner};
use crate::sampler::{Provenance, SampleMatrix};
use crate::selcov::{Flags, SelectedCov};
use crate::sparse::{SparseRectMatrix, SparseSymMatrix};

use super::mc::mc_estimate;

/// Linear constraints `A x = e` with `A` of full row rank `k`.
#[derive(Debug, Clone)]
pub struct ConstraintSpec {
    a: SparseRectMatrix,
    e: Vec<f64>,
}

impl ConstraintSpec {
    pub fn new(a: SparseRectMatrix, e: Vec<f64>) -> Result<Self> {
        if e.len() != a.rows() {
            return Err(Error::DimensionMismatch { expected: a.rows(), got: e.len() });
        }
        let dense = a.to_dense();
        let rank = dense.rank(1e-12 * dense.norm().max(1.0));
        if rank < a.rows() {
            return Err(Error::RankDeficient);
        }
        Ok(Self { a, e })
    }

    /// `𝟙ᵀ x = 0`.
    pub fn sum_to_zero(n: usize) -> Self {
        let t: Vec<_> = (0..n).map(|j| (0, j, 1.0)).collect();
        Self::new(SparseRectMatrix::from_triplets(1, n, &t).expect("valid"), vec![0.0]).expect("full rank")
    }

    pub fn a(&self) -> &SparseRectMatrix {
        &self.a
    }

    pub fn e(&self) -> &[f64] {
        &self.e
    }

    pub fn k(&self) -> usize {
        self.a.rows()
    }
}

/// `W = Q⁻¹Aᵀ` (columns) and the inverse of `AW`.
struct Projection {
    w: Vec<Vec<f64>>,
    aw_inv: DMatrix<f64>,
}

impl Projection {
    fn new(q: &SparseSymMatrix, spec: &ConstraintSpec, cfg: &PcgConfig) -> Result<Self> {
        let n = q.n();
        if spec.a.cols() != n {
            return Err(Error::DimensionMismatch { expected: n, got: spec.a.cols() });
        }
        let k = spec.k();
        let pre = PreparedPreconditioner::new(q, cfg.preconditioner)?;
        let at = spec.a.to_dense().transpose();
        let w: Vec<Vec<f64>> = (0..k)
            .into_par_iter()
            .map(|r| {
                let col: Vec<f64> = at.column(r).iter().copied().collect();
                pcg_solve_with(q, &col, cfg, &pre, None).map(|s| s.x)
            })
            .collect::<Result<_>>()?;
        let mut aw = DMatrix::zeros(k, k);
        for (c, wc) in w.iter().enumerate() {
            for (r, v) in spec.a.mul_vec(wc)?.into_iter().enumerate() {
                aw[(r, c)] = v;
            }
        }
        let aw = (&aw + aw.transpose()) * 0.5;
        let aw_inv = aw.cholesky().ok_or(Error::RankDeficient)?.inverse();
        Ok(Self { w, aw_inv })
    }

    fn w_row(&self, i: usize) -> DVector<f64> {
        DVector::from_iterator(self.w.len(), self.w.iter().map(|c| c[i]))
    }

    /// `C_ij = W_i (AW)⁻¹ W_jᵀ`.
    fn correction(&self, i: usize, j: usize) -> f64 {
        let wi = self.w_row(i);
        let wj = self.w_row(j);
        (wi.transpose() * &self.aw_inv * wj)[(0, 0)]
    }
}

/// `Σ* = Σ - W(AW)⁻¹Wᵀ` on the index set of `est`. A negative corrected
/// variance is replaced by the MC estimate from the constrained version of
/// `x` (when given) and flagged.
pub fn constraint_correct(
    est: &SelectedCov,
    q: &SparseSymMatrix,
    spec: &ConstraintSpec,
    x: Option<&SampleMatrix>,
    cfg: &PcgConfig,
) -> Result<SelectedCov> {
    let proj = Projection::new(q, spec, cfg)?;
    let mut out = est.clone();
    out.set_method(format!("{}+constrained", est.method()));
    let pairs = est.index().pairs().to_vec();
    for (k, &(i, j)) in pairs.iter().enumerate() {
        out.values_mut()[k] -= proj.correction(i, j);
    }
    let negative: Vec<usize> =
        pairs.iter().enumerate().filter(|(k, &(i, j))| i == j && out.values()[*k] < 0.0).map(|(k, _)| k).collect();
    if negative.is_empty() {
        return Ok(out);
    }
    let replacement = match x {
        Some(x) => {
            let xs = project(x, spec, &proj)?;
            Some(mc_estimate(&xs, est.index())?)
        }
        None => None,
    };
    for k in negative {
        out.flag(k, Flags::NEGATIVE);
        if let Some(mc) = &replacement {
            out.values_mut()[k] = mc.values()[k];
            out.flag(k, Flags::MC_REPLACED);
        }
    }
    Ok(out)
}

fn project(x: &SampleMatrix, spec: &ConstraintSpec, proj: &Projection) -> Result<SampleMatrix> {
    let n = x.n();
    let mut data = x.data().to_vec();
    for col in data.chunks_exact_mut(n) {
        let ax = DVector::from_vec(spec.a.mul_vec(col)?);
        let coef = &proj.aw_inv * ax;
        for (wc, c) in proj.w.iter().zip(coef.iter()) {
            for (xi, wi) in col.iter_mut().zip(wc) {
                *xi -= wi * c;
            }
        }
    }
    SampleMatrix::from_columns(n, x.n_s(), data, Provenance::Constrained, x.seed())
}

/// `X* = X - W(AW)⁻¹AX`, samples of the field conditioned on `A x = 0`.
pub fn constrain_samples(
    x: &SampleMatrix,
    q: &SparseSymMatrix,
    spec: &ConstraintSpec,
    cfg: &PcgConfig,
) -> Result<SampleMatrix> {
    if x.n() != q.n() {
        return Err(Error::DimensionMismatch { expected: q.n(), got: x.n() });
    }
    project(x, spec, &Projection::new(q, spec, cfg)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::IndexSet;

    fn exchangeable() -> SparseSymMatrix {
        SparseSymMatrix::from_triplets(2, &[(0, 0, 2.0), (1, 1, 2.0), (1, 0, -1.0)]).unwrap()
    }

    fn exact(q: &SparseSymMatrix) -> SelectedCov {
        let n = q.n();
        let d = q.to_dense().try_inverse().unwrap();
        let pairs: Vec<_> = (0..n).flat_map(|j| (j..n).map(move |i| (i, j))).collect();
        let idx = IndexSet::explicit(n, &pairs).unwrap();
        let v = idx.pairs().iter().map(|&(i, j)| d[(i, j)]).collect();
        SelectedCov::new(idx, v, "exact")
    }

    fn tight() -> PcgConfig {
        PcgConfig::with_delta(1e-14)
    }

    #[test]
    fn pinning_a_coordinate() {
        let q = exchangeable();
        let a = SparseRectMatrix::from_triplets(1, 2, &[(0, 1, 1.0)]).unwrap();
        let spec = ConstraintSpec::new(a, vec![0.0]).unwrap();
        let c = constraint_correct(&exact(&q), &q, &spec, None, &tight()).unwrap();
        assert!(c.get(1, 1).unwrap().abs() < 1e-14);
        assert!(c.get(1, 0).unwrap().abs() < 1e-14);
        assert!((c.get(0, 0).unwrap() - 0.5).abs() < 1e-14);
    }

    #[test]
    fn sum_to_zero_matches_schur_complement() {
        let q = exchangeable();
        let c = constraint_correct(&exact(&q), &q, &ConstraintSpec::sum_to_zero(2), None, &tight()).unwrap();
        // Σ - Σ𝟙(𝟙ᵀΣ𝟙)⁻¹𝟙ᵀΣ with Σ = [[2,1],[1,2]]/3, Σ𝟙 = (1,1), 𝟙ᵀΣ𝟙 = 2
        assert!((c.get(0, 0).unwrap() - 1.0 / 6.0).abs() < 1e-14);
        assert!((c.get(1, 0).unwrap() + 1.0 / 6.0).abs() < 1e-14);
    }

    #[test]
    fn correction_is_deterministic_shift() {
        let q = exchangeable();
        let a = exact(&q);
        let mut b = a.clone();
        b.values_mut().iter_mut().for_each(|v| *v += 0.25);
        let spec = ConstraintSpec::sum_to_zero(2);
        let ca = constraint_correct(&a, &q, &spec, None, &tight()).unwrap();
        let cb = constraint_correct(&b, &q, &spec, None, &tight()).unwrap();
        for k in 0..3 {
            assert!((cb.values()[k] - ca.values()[k] - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn samples_satisfy_constraint_and_projection_is_idempotent() {
        let q = exchangeable();
        let spec = ConstraintSpec::sum_to_zero(2);
        let x = SampleMatrix::from_columns(2, 2, vec![1.0, 2.0, -3.0, 0.5], Provenance::External, 0).unwrap();
        let xs = constrain_samples(&x, &q, &spec, &tight()).unwrap();
        for c in xs.columns() {
            assert!((c[0] + c[1]).abs() < 1e-14);
        }
        let again = constrain_samples(&xs, &q, &spec, &tight()).unwrap();
        for (a, b) in again.data().iter().zip(xs.data()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn rank_deficiency() {
        let a = SparseRectMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (1, 0, 2.0)]).unwrap();
        assert!(matches!(ConstraintSpec::new(a, vec![0.0, 0.0]), Err(Error::RankDeficient)));
    }

    #[test]
    fn negative_variance_is_replaced_and_flagged() {
        let q = exchangeable();
        let mut est = exact(&q);
        let k = est.index().position(0, 0).unwrap();
        est.values_mut()[k] = 0.1;
        let x = SampleMatrix::from_columns(2, 2, vec![1.0, 0.0, 0.0, 1.0], Provenance::External, 0).unwrap();
        let c = constraint_correct(&est, &q, &ConstraintSpec::sum_to_zero(2), Some(&x), &tight()).unwrap();
        assert!(c.flags()[k].contains(Flags::NEGATIVE) && c.flags()[k].contains(Flags::MC_REPLACED));
        // constrained samples (0.5,-0.5) and (-0.5,0.5)
        assert!((c.values()[k] - 0.25).abs() < 1e-14);
    }
}

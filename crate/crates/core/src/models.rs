//! Generators for the lattice test models: stationary AR(1) chains, RW1
//! posteriors `diag(λ) + GᵀG` and a K-variate Kronecker lattice.

use nalgebra::DMatrix;
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::Lattice;
use crate::sparse::{SparseRectMatrix, SparseSymMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Ar1,
    Rw1Posterior,
    Kvariate,
}

/// Description of a generated lattice model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LatticeModel {
    pub kind: ModelKind,
    pub dims: Vec<usize>,
    pub k: usize,
    /// Per-voxel noise precisions.
    pub lambda: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi: Option<f64>,
}

impl LatticeModel {
    pub fn lattice(&self) -> Result<Lattice> {
        Lattice::new(&self.dims, self.k)
    }

    pub fn n(&self) -> usize {
        self.dims.iter().product::<usize>() * self.k
    }
}

/// Exact stationary AR(1) precision: tridiagonal with `1 + φ²` inside,
/// `1` in the two corners and `-φ` off the diagonal, so every marginal
/// variance equals `1 / (1 - φ²)`.
pub fn ar1_precision(n: usize, phi: f64) -> Result<SparseSymMatrix> {
    if n < 2 {
        return Err(Error::InvalidParameter("AR(1) chain needs at least 2 nodes".into()));
    }
    if !(phi.abs() < 1.0) {
        return Err(Error::InvalidParameter(format!("|phi| must be < 1, got {phi}")));
    }
    let mut trip = Vec::with_capacity(2 * n);
    for i in 0..n {
        let d = if i == 0 || i == n - 1 { 1.0 } else { 1.0 + phi * phi };
        trip.push((i, i, d));
        if i + 1 < n && phi != 0.0 {
            trip.push((i + 1, i, -phi));
        }
    }
    SparseSymMatrix::from_triplets(n, &trip)
}

/// Noise precisions drawn uniformly on `(lo, hi)` from a seeded stream.
pub fn uniform_lambda(n: usize, lo: f64, hi: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let u = ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64);
            lo + (hi - lo) * u
        })
        .collect()
}

/// First-order difference operator: one row per adjacent voxel pair with
/// `1` in the lower-index column and `-1` in the other.
pub fn rw1_difference_operator(lattice: &Lattice) -> SparseRectMatrix {
    let edges = lattice.edges();
    let mut trip = Vec::with_capacity(2 * edges.len());
    for (r, &(i, j)) in edges.iter().enumerate() {
        trip.push((r, i, 1.0));
        trip.push((r, j, -1.0));
    }
    SparseRectMatrix::from_triplets(edges.len(), lattice.n_voxels(), &trip)
        .expect("edge indices are in range")
}

/// RW1 posterior precision `Q = GᵀG + HᵀH` with `H = diag(√λ)`.
///
/// `Q` is assembled from exactly the products `GᵀG` and `HᵀH` so the
/// factorization identity used by the perturbation sampler holds bitwise.
pub fn rw1_posterior_precision(
    dims: &[usize],
    lambda: &[f64],
) -> Result<(SparseSymMatrix, SparseRectMatrix, SparseRectMatrix)> {
    if dims.iter().any(|&d| d < 2) {
        return Err(Error::InvalidParameter("every lattice extent must be at least 2".into()));
    }
    let lat = Lattice::new(dims, 1)?;
    let n = lat.n_voxels();
    if lambda.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: lambda.len() });
    }
    if let Some(bad) = lambda.iter().position(|&l| !(l > 0.0)) {
        return Err(Error::InvalidParameter(format!("lambda[{bad}] must be positive")));
    }
    let g = rw1_difference_operator(&lat);
    let h_trip: Vec<_> = lambda.iter().enumerate().map(|(i, &l)| (i, i, l.sqrt())).collect();
    let h = SparseRectMatrix::from_triplets(n, n, &h_trip)?;
    let mut trip = g.gram_triplets();
    trip.extend(h.gram_triplets());
    let q = SparseSymMatrix::from_triplets(n, &trip)?;
    Ok((q, g, h))
}

/// Block precision `kron(GᵀG + diag(λ), I_K) + kron(I_N, C)`.
pub fn kvariate_lattice_precision(
    dims: &[usize],
    k: usize,
    coupling: &DMatrix<f64>,
    lambda: &[f64],
) -> Result<SparseSymMatrix> {
    if coupling.nrows() != k || coupling.ncols() != k {
        return Err(Error::DimensionMismatch { expected: k, got: coupling.nrows() });
    }
    if (coupling - coupling.transpose()).abs().max() > 0.0
        || coupling.clone().cholesky().is_none()
    {
        return Err(Error::InvalidParameter("coupling block must be symmetric positive definite".into()));
    }
    let (spatial, _, _) = rw1_posterior_precision(dims, lambda)?;
    let nv = spatial.n();
    let mut trip = Vec::with_capacity(spatial.nnz() * k + nv * k * k);
    for (i, j, v) in spatial.triplets() {
        for a in 0..k {
            trip.push((i * k + a, j * k + a, v));
        }
    }
    for vox in 0..nv {
        for a in 0..k {
            for b in 0..=a {
                let c = coupling[(a, b)];
                if c != 0.0 || a == b {
                    trip.push((vox * k + a, vox * k + b, c));
                }
            }
        }
    }
    SparseSymMatrix::from_triplets(nv * k, &trip)
}

/// Coupling block with unit diagonal and constant off-diagonal `rho`.
pub fn equicorrelated_coupling(k: usize, rho: f64) -> DMatrix<f64> {
    DMatrix::from_fn(k, k, |a, b| if a == b { 1.0 } else { rho })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn min_eig(q: &SparseSymMatrix) -> f64 {
        q.to_dense().symmetric_eigen().eigenvalues.min()
    }

    #[test]
    fn ar1_cases() {
        let q = ar1_precision(3, 0.0).unwrap();
        assert_eq!(q.to_dense(), DMatrix::identity(3, 3));
        let q = ar1_precision(4, 0.5).unwrap();
        assert_eq!(q.diagonal(), vec![1.0, 1.25, 1.25, 1.0]);
        assert_eq!(q.get(1, 0), Some(-0.5));
        let inv = q.to_dense().try_inverse().unwrap();
        for i in 0..4 {
            assert!((inv[(i, i)] - 4.0 / 3.0).abs() < 1e-12);
        }
        assert!(ar1_precision(4, 1.0).is_err());
        assert!(ar1_precision(1, 0.5).is_err());
    }

    #[test]
    fn ar1_lag_one_ratio() {
        let inv = ar1_precision(100, 0.9).unwrap().to_dense().try_inverse().unwrap();
        for i in 1..98 {
            assert!((inv[(i, i + 1)] / inv[(i, i)] - 0.9).abs() < 1e-10);
        }
    }

    #[test]
    fn rw1_small_cases() {
        let (q, _, _) = rw1_posterior_precision(&[2], &[1.0, 1.0]).unwrap();
        assert_eq!(q.to_dense(), DMatrix::from_row_slice(2, 2, &[2.0, -1.0, -1.0, 2.0]));
        let (q, _, _) = rw1_posterior_precision(&[2, 2], &[0.1; 4]).unwrap();
        let sums = q.spmv(&[1.0; 4]).unwrap();
        for s in sums {
            assert!((s - 0.1).abs() < 1e-15);
        }
        assert!(rw1_posterior_precision(&[2], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn rw1_is_spd_with_stencil_and_factor_identity() {
        let lam = uniform_lambda(9, 0.1, 0.2, 3);
        let (q, g, h) = rw1_posterior_precision(&[3, 3], &lam).unwrap();
        assert!(min_eig(&q) >= 0.1 - 1e-12);
        let lat = Lattice::new(&[3, 3], 1).unwrap();
        for v in 0..9 {
            let (rows, _) = q.column(v);
            let mut expect: Vec<usize> =
                lat.neighbors(v).into_iter().filter(|&u| u > v).collect();
            expect.push(v);
            expect.sort();
            assert_eq!(rows, &expect[..]);
        }
        let dense = g.to_dense().transpose() * g.to_dense() + h.to_dense().transpose() * h.to_dense();
        assert_eq!(q.to_dense(), dense);
    }

    #[test]
    fn kvariate_cases() {
        let lam = uniform_lambda(4, 0.1, 0.2, 1);
        let one = DMatrix::from_element(1, 1, 1.0);
        let qk = kvariate_lattice_precision(&[2, 2], 1, &one, &lam).unwrap();
        let (q, _, _) = rw1_posterior_precision(&[2, 2], &lam).unwrap();
        assert_eq!(qk.to_dense(), q.to_dense() + DMatrix::identity(4, 4));

        let c = equicorrelated_coupling(2, 0.4);
        let q2 = kvariate_lattice_precision(&[2, 2], 2, &c, &lam).unwrap();
        assert_eq!(q2.n(), 8);
        let d = q2.to_dense();
        // voxels 0 and 3 are diagonal neighbors on the 2x2 lattice: no coupling
        for a in 0..2 {
            for b in 0..2 {
                assert_eq!(d[(a, 6 + b)], 0.0);
                assert!(d[(a, 2 + b)] != 0.0 || a != b);
            }
        }

        let lam = uniform_lambda(48, 0.1, 0.2, 2);
        let q3 = kvariate_lattice_precision(&[4, 4, 3], 3, &equicorrelated_coupling(3, 0.4), &lam)
            .unwrap();
        assert!(q3.to_dense().cholesky().is_some());

        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(kvariate_lattice_precision(&[2, 2], 2, &bad, &lam[..4]).is_err());
    }
}

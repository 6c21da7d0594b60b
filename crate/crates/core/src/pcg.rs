//! Preconditioned conjugate gradients for SPD systems.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::SparseSymMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Preconditioner {
    None,
    #[default]
    Jacobi,
    /// Zero-fill incomplete Cholesky on the pattern of `Q`.
    Ichol0,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PcgConfig {
    /// Relative residual tolerance `‖Qz - b‖ / ‖b‖`.
    pub delta: f64,
    /// `None` means `10·√n + 100`.
    pub max_iter: Option<usize>,
    pub preconditioner: Preconditioner,
}

impl Default for PcgConfig {
    fn default() -> Self {
        Self { delta: 1e-9, max_iter: None, preconditioner: Preconditioner::Jacobi }
    }
}

impl PcgConfig {
    pub fn with_delta(delta: f64) -> Self {
        Self { delta, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidParameter(format!("delta must be in (0,1), got {}", self.delta)));
        }
        if self.max_iter == Some(0) {
            return Err(Error::InvalidParameter("max_iter must be at least 1".into()));
        }
        Ok(())
    }

    pub fn max_iter_for(&self, n: usize) -> usize {
        self.max_iter.unwrap_or(10 * (n as f64).sqrt().ceil() as usize + 100)
    }
}

#[derive(Debug, Clone)]
pub struct PcgSolution {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

/// Preconditioner prepared once for a matrix and reused across solves.
#[derive(Debug, Clone)]
pub enum PreparedPreconditioner {
    None,
    Jacobi(Vec<f64>),
    Ichol0(IncompleteCholesky),
}

impl PreparedPreconditioner {
    pub fn new(q: &SparseSymMatrix, kind: Preconditioner) -> Result<Self> {
        Ok(match kind {
            Preconditioner::None => Self::None,
            Preconditioner::Jacobi => Self::Jacobi(q.diagonal().iter().map(|d| 1.0 / d).collect()),
            Preconditioner::Ichol0 => Self::Ichol0(IncompleteCholesky::new(q)?),
        })
    }

    fn apply(&self, r: &[f64], z: &mut [f64]) {
        match self {
            Self::None => z.copy_from_slice(r),
            Self::Jacobi(inv) => {
                for ((zi, ri), di) in z.iter_mut().zip(r).zip(inv) {
                    *zi = ri * di;
                }
            }
            Self::Ichol0(ic) => ic.apply(r, z),
        }
    }
}

/// `L Lᵀ ≈ Q` with `L` restricted to the lower pattern of `Q`.
#[derive(Debug, Clone)]
pub struct IncompleteCholesky {
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<f64>,
}

impl IncompleteCholesky {
    pub fn new(q: &SparseSymMatrix) -> Result<Self> {
        let n = q.n();
        let col_ptr = q.col_ptr().to_vec();
        let row_idx = q.row_idx().to_vec();
        let mut values = q.values().to_vec();
        // row_list[j]: (k, position of (j,k)) for k < j
        let mut row_list: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
        for k in 0..n {
            for p in col_ptr[k]..col_ptr[k + 1] {
                let i = row_idx[p];
                if i > k {
                    row_list[i].push((k, p));
                }
            }
        }
        let mut slot = vec![usize::MAX; n];
        for j in 0..n {
            for p in col_ptr[j]..col_ptr[j + 1] {
                slot[row_idx[p]] = p;
            }
            for &(k, pjk) in &row_list[j] {
                let ljk = values[pjk];
                for p in pjk..col_ptr[k + 1] {
                    let i = row_idx[p];
                    let t = slot[i];
                    if t != usize::MAX && t >= col_ptr[j] && t < col_ptr[j + 1] {
                        values[t] -= values[p] * ljk;
                    }
                }
            }
            let pd = col_ptr[j];
            if row_idx[pd] != j || !(values[pd] > 0.0) {
                return Err(Error::NotPositiveDefinite { column: j, pivot: j, value: values[pd] });
            }
            let d = values[pd].sqrt();
            values[pd] = d;
            for p in pd + 1..col_ptr[j + 1] {
                values[p] /= d;
            }
            for p in col_ptr[j]..col_ptr[j + 1] {
                slot[row_idx[p]] = usize::MAX;
            }
        }
        Ok(Self { col_ptr, row_idx, values })
    }

    fn apply(&self, r: &[f64], z: &mut [f64]) {
        let n = r.len();
        z.copy_from_slice(r);
        for j in 0..n {
            let p0 = self.col_ptr[j];
            z[j] /= self.values[p0];
            let zj = z[j];
            for p in p0 + 1..self.col_ptr[j + 1] {
                z[self.row_idx[p]] -= self.values[p] * zj;
            }
        }
        for j in (0..n).rev() {
            let p0 = self.col_ptr[j];
            let mut acc = z[j];
            for p in p0 + 1..self.col_ptr[j + 1] {
                acc -= self.values[p] * z[self.row_idx[p]];
            }
            z[j] = acc / self.values[p0];
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solves `Q z = b` to relative residual `cfg.delta`.
pub fn pcg_solve(q: &SparseSymMatrix, b: &[f64], cfg: &PcgConfig) -> Result<PcgSolution> {
    let pre = PreparedPreconditioner::new(q, cfg.preconditioner)?;
    pcg_solve_with(q, b, cfg, &pre, None)
}

/// PCG with a prepared preconditioner. `monitor`, if given, is called with
/// the iteration count and the current iterate after every step.
pub fn pcg_solve_with(
    q: &SparseSymMatrix,
    b: &[f64],
    cfg: &PcgConfig,
    pre: &PreparedPreconditioner,
    mut monitor: Option<&mut dyn FnMut(usize, &[f64])>,
) -> Result<PcgSolution> {
    cfg.validate()?;
    let n = q.n();
    if b.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: b.len() });
    }
    let bnorm = dot(b, b).sqrt();
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok(PcgSolution { x, iterations: 0, residual: 0.0 });
    }
    let max_iter = cfg.max_iter_for(n);
    let mut r = b.to_vec();
    let mut z = vec![0.0; n];
    pre.apply(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut qp = vec![0.0; n];
    let mut rel = 1.0;
    for it in 1..=max_iter {
        q.spmv_into(&p, &mut qp);
        let pqp = dot(&p, &qp);
        if !(pqp > 0.0) {
            return Err(Error::NotPositiveDefinite { column: 0, pivot: 0, value: pqp });
        }
        let alpha = rz / pqp;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * qp[i];
        }
        if let Some(m) = monitor.as_mut() {
            m(it, &x);
        }
        rel = dot(&r, &r).sqrt() / bnorm;
        if rel <= cfg.delta {
            return Ok(PcgSolution { x, iterations: it, residual: rel });
        }
        pre.apply(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::NotConverged { iterations: max_iter, residual: rel })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{rw1_posterior_precision, uniform_lambda};

    #[test]
    fn identity_one_iteration() {
        let q = SparseSymMatrix::identity(4);
        let s = pcg_solve(&q, &[1.0, -2.0, 3.0, 0.5], &PcgConfig::default()).unwrap();
        assert_eq!(s.iterations, 1);
        assert_eq!(s.x, vec![1.0, -2.0, 3.0, 0.5]);
    }

    #[test]
    fn two_by_two_finite_termination() {
        let q = SparseSymMatrix::from_triplets(2, &[(0, 0, 2.0), (1, 1, 2.0), (1, 0, -1.0)]).unwrap();
        let cfg = PcgConfig { delta: 1e-14, max_iter: Some(50), preconditioner: Preconditioner::None };
        let s = pcg_solve(&q, &[1.0, 0.0], &cfg).unwrap();
        assert!(s.iterations <= 2);
        assert!((s.x[0] - 2.0 / 3.0).abs() < 1e-14 && (s.x[1] - 1.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn zero_rhs() {
        let q = SparseSymMatrix::identity(3);
        let s = pcg_solve(&q, &[0.0; 3], &PcgConfig::default()).unwrap();
        assert_eq!(s.iterations, 0);
        assert_eq!(s.x, vec![0.0; 3]);
    }

    #[test]
    fn matches_dense_column_for_every_preconditioner() {
        let lam = uniform_lambda(512, 0.1, 0.2, 1);
        let (q, _, _) = rw1_posterior_precision(&[8, 8, 8], &lam).unwrap();
        let inv = q.to_dense().try_inverse().unwrap();
        let j = 137;
        let mut e = vec![0.0; 512];
        e[j] = 1.0;
        for pre in [Preconditioner::None, Preconditioner::Jacobi, Preconditioner::Ichol0] {
            let cfg = PcgConfig { delta: 1e-9, max_iter: None, preconditioner: pre };
            let s = pcg_solve(&q, &e, &cfg).unwrap();
            for i in 0..512 {
                assert!((s.x[i] - inv[(i, j)]).abs() < 1e-7, "{pre:?}");
            }
        }
    }

    #[test]
    fn non_convergence_is_reported() {
        let lam = uniform_lambda(400, 0.1, 0.2, 1);
        let (q, _, _) = rw1_posterior_precision(&[20, 20], &lam).unwrap();
        let cfg = PcgConfig { delta: 1e-12, max_iter: Some(2), preconditioner: Preconditioner::Jacobi };
        let b = vec![1.0; 400];
        assert!(matches!(pcg_solve(&q, &b, &cfg), Err(Error::NotConverged { iterations: 2, .. })));
        assert!(PcgConfig::with_delta(1.5).validate().is_err());
    }

    #[test]
    fn energy_norm_error_is_monotone() {
        let lam = uniform_lambda(144, 0.1, 0.2, 3);
        let (q, _, _) = rw1_posterior_precision(&[12, 12], &lam).unwrap();
        let b: Vec<f64> = (0..144).map(|i| (i as f64 * 0.37).sin()).collect();
        let exact = crate::chol::cholesky(&q).unwrap().solve(&b).unwrap();
        for kind in [Preconditioner::None, Preconditioner::Jacobi, Preconditioner::Ichol0] {
            let cfg = PcgConfig { delta: 1e-11, max_iter: None, preconditioner: kind };
            let pre = PreparedPreconditioner::new(&q, kind).unwrap();
            let mut errs = Vec::new();
            let mut mon = |_: usize, x: &[f64]| {
                let e: Vec<f64> = x.iter().zip(&exact).map(|(a, b)| a - b).collect();
                errs.push(dot(&e, &q.spmv(&e).unwrap()).sqrt());
            };
            pcg_solve_with(&q, &b, &cfg, &pre, Some(&mut mon)).unwrap();
            for w in errs.windows(2) {
                assert!(w[1] <= w[0] * (1.0 + 1e-9) + 1e-14, "{kind:?}: {} > {}", w[1], w[0]);
            }
        }
    }
}

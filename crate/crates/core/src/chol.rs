//! Up-looking numeric Cholesky factorization on a precomputed fill pattern.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::ordering::{amd_order, camd_order, symbolic_cholesky, SymbolicFactor};
use crate::sparse::SparseSymMatrix;

/// Lower-triangular factor with `L Lᵀ = P Q Pᵀ`, stored column-major on the
/// symbolic pattern (diagonal first in every column).
#[derive(Debug, Clone)]
pub struct CholFactor {
    symbolic: SymbolicFactor,
    values: Vec<f64>,
}

impl CholFactor {
    pub fn n(&self) -> usize {
        self.symbolic.n()
    }

    pub fn symbolic(&self) -> &SymbolicFactor {
        &self.symbolic
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Rows and values of factor column `j`.
    pub fn column(&self, j: usize) -> (&[usize], &[f64]) {
        let cp = self.symbolic.col_ptr();
        (self.symbolic.column(j), &self.values[cp[j]..cp[j + 1]])
    }

    pub fn diag(&self, j: usize) -> f64 {
        self.values[self.symbolic.col_ptr()[j]]
    }

    /// Bytes held by the numeric factor (values plus row indices).
    pub fn storage_bytes(&self) -> usize {
        self.symbolic.fill_count() * (std::mem::size_of::<f64>() + std::mem::size_of::<usize>())
    }

    /// Forward substitution `L z = b` in factor order.
    pub fn solve_lower_in_place(&self, b: &mut [f64]) {
        for j in 0..self.n() {
            let (rows, vals) = self.column(j);
            let zj = b[j] / vals[0];
            b[j] = zj;
            if zj != 0.0 {
                for (&r, &v) in rows[1..].iter().zip(&vals[1..]) {
                    b[r] -= v * zj;
                }
            }
        }
    }

    /// Backward substitution `Lᵀ x = z` in factor order.
    pub fn solve_upper_in_place(&self, b: &mut [f64]) {
        self.solve_upper_trailing_in_place(b, self.n());
    }

    /// Backward substitution restricted to the last `trailing` unknowns.
    /// Those entries of the result are exact; the leading ones are left
    /// untouched. Used when only a trailing block of `L⁻ᵀ z` is needed.
    pub fn solve_upper_trailing_in_place(&self, b: &mut [f64], trailing: usize) {
        let n = self.n();
        for j in (n - trailing.min(n)..n).rev() {
            let (rows, vals) = self.column(j);
            let mut acc = b[j];
            for (&r, &v) in rows[1..].iter().zip(&vals[1..]) {
                acc -= v * b[r];
            }
            b[j] = acc / vals[0];
        }
    }

    pub fn solve_lower(&self, b: &[f64]) -> Vec<f64> {
        let mut z = b.to_vec();
        self.solve_lower_in_place(&mut z);
        z
    }

    pub fn solve_upper(&self, b: &[f64]) -> Vec<f64> {
        let mut z = b.to_vec();
        self.solve_upper_in_place(&mut z);
        z
    }

    /// Solves `Q x = b` in the original ordering.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        if b.len() != self.n() {
            return Err(Error::DimensionMismatch { expected: self.n(), got: b.len() });
        }
        let p = self.symbolic.perm();
        let mut y = p.apply(b);
        self.solve_lower_in_place(&mut y);
        self.solve_upper_in_place(&mut y);
        Ok(p.apply_inverse(&y))
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.n();
        let mut l = DMatrix::zeros(n, n);
        for j in 0..n {
            let (rows, vals) = self.column(j);
            for (&r, &v) in rows.iter().zip(vals) {
                l[(r, j)] = v;
            }
        }
        l
    }
}

/// Numeric factorization of `Q` on a symbolic analysis of its pattern (or
/// of an augmented pattern containing it).
pub fn factorize(q: &SparseSymMatrix, symbolic: &SymbolicFactor) -> Result<CholFactor> {
    let n = q.n();
    if symbolic.n() != n {
        return Err(Error::DimensionMismatch { expected: n, got: symbolic.n() });
    }
    let perm = symbolic.perm();
    let inv = perm.inv();
    let full = q.to_full();
    let col_ptr = symbolic.col_ptr();
    let row_idx = symbolic.row_idx();
    // rows[k]: columns i < k with L_ki in the symbolic pattern, ascending.
    // Taken from the pattern rather than the etree reach of Q so that an
    // augmented pattern keeps the column cursors aligned.
    let mut rows_of: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        for &r in &row_idx[col_ptr[i] + 1..col_ptr[i + 1]] {
            rows_of[r].push(i);
        }
    }

    let mut values = vec![0.0; symbolic.fill_count()];
    let mut next: Vec<usize> = (0..n).map(|j| col_ptr[j] + 1).collect();
    let mut x = vec![0.0; n];
    for k in 0..n {
        let (rows, vals) = full.column(perm.perm()[k]);
        for (&o, &v) in rows.iter().zip(vals) {
            let i = inv[o];
            if i <= k {
                x[i] = v;
            }
        }
        let pattern = &rows_of[k];
        let mut d = x[k];
        x[k] = 0.0;
        for &i in pattern {
            let lki = x[i] / values[col_ptr[i]];
            x[i] = 0.0;
            for p in col_ptr[i] + 1..next[i] {
                x[row_idx[p]] -= values[p] * lki;
            }
            d -= lki * lki;
            let p = next[i];
            debug_assert_eq!(row_idx[p], k);
            values[p] = lki;
            next[i] += 1;
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::NotPositiveDefinite { column: k, pivot: perm.perm()[k], value: d });
        }
        values[col_ptr[k]] = d.sqrt();
    }
    Ok(CholFactor { symbolic: symbolic.clone(), values })
}

/// AMD ordering, symbolic analysis and numeric factorization in one call.
pub fn cholesky(q: &SparseSymMatrix) -> Result<CholFactor> {
    let perm = amd_order(q);
    factorize(q, &symbolic_cholesky(q, &perm)?)
}

/// Factorization with the nodes in `last` ordered at the end (CAMD). When
/// `extra_pairs` is non-empty the symbolic pattern is augmented with them so
/// those covariances can be recovered by the Takahashi recursion.
pub fn cholesky_constrained(
    q: &SparseSymMatrix,
    last: &[usize],
    extra_pairs: &[(usize, usize)],
) -> Result<CholFactor> {
    let pattern = if extra_pairs.is_empty() {
        None
    } else {
        Some(q.with_extra_pattern(extra_pairs)?)
    };
    let pat = pattern.as_ref().unwrap_or(q);
    let perm = camd_order(pat, last)?;
    factorize(q, &symbolic_cholesky(pat, &perm)?)
}

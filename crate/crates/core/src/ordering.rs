//! Fill-reducing orderings and symbolic Cholesky analysis.
//!
//! The minimum degree ordering works on a quotient graph: eliminated nodes
//! become elements, elements adjacent to a pivot are absorbed into it, and
//! degrees are updated with the approximate external degree bound
//! `|A_i| + |L_p \ i| + Σ_e |L_e \ L_p|`. No supervariables are detected.
//! Ties are broken by the lowest original index, so orderings are
//! deterministic.
//!
//! The constrained variant eliminates all unconstrained nodes before any
//! constrained node; the constrained suffix is itself ordered by minimum
//! degree on the graph left after the prefix has been eliminated.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::sparse::SparseSymMatrix;

/// Bijection between factor order and original order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Permutation {
    perm: Vec<usize>,
    inv: Vec<usize>,
}

impl Permutation {
    pub fn identity(n: usize) -> Self {
        Self { perm: (0..n).collect(), inv: (0..n).collect() }
    }

    /// `perm[k]` is the original index placed at position `k`.
    pub fn from_perm(perm: Vec<usize>) -> Result<Self> {
        let n = perm.len();
        let mut inv = vec![usize::MAX; n];
        for (k, &p) in perm.iter().enumerate() {
            if p >= n || inv[p] != usize::MAX {
                return Err(Error::InvalidParameter("not a permutation".into()));
            }
            inv[p] = k;
        }
        Ok(Self { perm, inv })
    }

    pub fn len(&self) -> usize {
        self.perm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perm.is_empty()
    }

    pub fn perm(&self) -> &[usize] {
        &self.perm
    }

    pub fn inv(&self) -> &[usize] {
        &self.inv
    }

    /// `y[k] = x[perm[k]]`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.perm.iter().map(|&p| x[p]).collect()
    }

    /// `x[perm[k]] = y[k]`.
    pub fn apply_inverse(&self, y: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; y.len()];
        for (k, &p) in self.perm.iter().enumerate() {
            x[p] = y[k];
        }
        x
    }
}

fn adjacency(pattern: &SparseSymMatrix) -> Vec<Vec<usize>> {
    let n = pattern.n();
    let mut adj = vec![Vec::new(); n];
    for j in 0..n {
        for &i in pattern.column(j).0 {
            if i != j {
                adj[i].push(j);
                adj[j].push(i);
            }
        }
    }
    adj
}

/// Approximate minimum degree ordering.
pub fn amd_order(pattern: &SparseSymMatrix) -> Permutation {
    minimum_degree(pattern, &vec![false; pattern.n()])
}

/// Constrained minimum degree: nodes in `constraint` occupy the last
/// `constraint.len()` positions.
pub fn camd_order(pattern: &SparseSymMatrix, constraint: &[usize]) -> Result<Permutation> {
    let n = pattern.n();
    let mut last = vec![false; n];
    for &c in constraint {
        if c >= n {
            return Err(Error::IndexOutOfRange { row: c, col: 0, n });
        }
        last[c] = true;
    }
    Ok(minimum_degree(pattern, &last))
}

fn minimum_degree(pattern: &SparseSymMatrix, last: &[bool]) -> Permutation {
    let n = pattern.n();
    let mut adj_vars = adjacency(pattern);
    let mut adj_elems: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut elem_vars: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut elem_alive = vec![false; n];
    let mut eliminated = vec![false; n];
    let mut degree: Vec<usize> = adj_vars.iter().map(|a| a.len()).collect();
    let mut queue: BTreeSet<(bool, usize, usize)> =
        (0..n).map(|v| (last[v], degree[v], v)).collect();

    // Stamped markers avoid clearing arrays between pivots.
    let mut in_lp = vec![0usize; n];
    let mut w_stamp = vec![0usize; n];
    let mut w = vec![0usize; n];
    let mut stamp = 0usize;

    let mut order = Vec::with_capacity(n);
    let mut live = n;
    while let Some((_, _, p)) = queue.pop_first() {
        stamp += 1;
        order.push(p);
        eliminated[p] = true;
        live -= 1;

        let mut lp = Vec::new();
        in_lp[p] = stamp;
        for &v in &adj_vars[p] {
            if !eliminated[v] && in_lp[v] != stamp {
                in_lp[v] = stamp;
                lp.push(v);
            }
        }
        for &e in &std::mem::take(&mut adj_elems[p]) {
            if !elem_alive[e] {
                continue;
            }
            for &v in &elem_vars[e] {
                if v != p && in_lp[v] != stamp {
                    in_lp[v] = stamp;
                    lp.push(v);
                }
            }
            elem_alive[e] = false;
            elem_vars[e] = Vec::new();
        }
        adj_vars[p] = Vec::new();
        lp.sort_unstable();

        for &i in &lp {
            adj_elems[i].retain(|&e| elem_alive[e]);
            adj_elems[i].push(p);
            adj_vars[i].retain(|&v| !eliminated[v] && in_lp[v] != stamp);
        }
        elem_vars[p] = lp;
        elem_alive[p] = true;

        let lp = &elem_vars[p];
        for &i in lp {
            for &e in &adj_elems[i] {
                if e == p {
                    continue;
                }
                if w_stamp[e] != stamp {
                    w_stamp[e] = stamp;
                    w[e] = elem_vars[e].len();
                }
                w[e] -= 1;
            }
        }
        let lp_ext = lp.len().saturating_sub(1);
        for &i in lp {
            let mut bound = adj_vars[i].len() + lp_ext;
            for &e in &adj_elems[i] {
                if e != p {
                    bound += w[e];
                }
            }
            let d = bound.min(live.saturating_sub(1)).min(degree[i] + lp_ext);
            if d != degree[i] {
                queue.remove(&(last[i], degree[i], i));
                degree[i] = d;
                queue.insert((last[i], d, i));
            }
        }
    }
    Permutation::from_perm(order).expect("elimination visits every node once")
}

/// Pattern of the Cholesky factor of `P A Pᵀ` together with its
/// elimination tree.
#[derive(Debug, Clone)]
pub struct SymbolicFactor {
    perm: Permutation,
    parent: Vec<Option<usize>>,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
}

impl SymbolicFactor {
    pub fn n(&self) -> usize {
        self.perm.len()
    }

    pub fn perm(&self) -> &Permutation {
        &self.perm
    }

    /// Elimination tree parent of each factor column.
    pub fn etree(&self) -> &[Option<usize>] {
        &self.parent
    }

    pub fn col_ptr(&self) -> &[usize] {
        &self.col_ptr
    }

    pub fn row_idx(&self) -> &[usize] {
        &self.row_idx
    }

    /// Row indices of factor column `j`, diagonal first.
    pub fn column(&self, j: usize) -> &[usize] {
        &self.row_idx[self.col_ptr[j]..self.col_ptr[j + 1]]
    }

    /// Stored entries of L, including the diagonal.
    pub fn fill_count(&self) -> usize {
        self.row_idx.len()
    }

    /// Position of `(row, col)` with `row >= col` (factor order) in the
    /// value arrays, if it is in the pattern.
    pub fn position(&self, row: usize, col: usize) -> Option<usize> {
        let start = self.col_ptr[col];
        self.column(col).binary_search(&row).ok().map(|k| start + k)
    }
}

/// Up-looking symbolic factorization of `P A Pᵀ`.
pub fn symbolic_cholesky(pattern: &SparseSymMatrix, perm: &Permutation) -> Result<SymbolicFactor> {
    let n = pattern.n();
    if perm.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: perm.len() });
    }
    let adj = adjacency(pattern);
    let inv = perm.inv();
    // upper[k]: positions i < k with C(i, k) != 0 in the permuted matrix
    let upper: Vec<Vec<usize>> = (0..n)
        .map(|k| adj[perm.perm()[k]].iter().map(|&o| inv[o]).filter(|&i| i < k).collect())
        .collect();

    let mut parent: Vec<Option<usize>> = vec![None; n];
    let mut ancestor: Vec<Option<usize>> = vec![None; n];
    for k in 0..n {
        for &i0 in &upper[k] {
            let mut i = Some(i0);
            while let Some(r) = i {
                if r >= k {
                    break;
                }
                let next = ancestor[r];
                ancestor[r] = Some(k);
                if next.is_none() {
                    parent[r] = Some(k);
                }
                i = next;
            }
        }
    }

    let mut cols: Vec<Vec<usize>> = (0..n).map(|j| vec![j]).collect();
    let mut mark = vec![usize::MAX; n];
    for k in 0..n {
        mark[k] = k;
        for &i0 in &upper[k] {
            let mut i = i0;
            while mark[i] != k {
                mark[i] = k;
                cols[i].push(k);
                match parent[i] {
                    Some(p) => i = p,
                    None => break,
                }
            }
        }
    }
    let mut col_ptr = Vec::with_capacity(n + 1);
    col_ptr.push(0);
    let total: usize = cols.iter().map(|c| c.len()).sum();
    let mut row_idx = Vec::with_capacity(total);
    for c in cols {
        row_idx.extend(c);
        col_ptr.push(row_idx.len());
    }
    Ok(SymbolicFactor { perm: perm.clone(), parent, col_ptr, row_idx })
}

//! Compressed sparse column storage for symmetric and rectangular matrices,
//! plus the index sets that describe which covariance entries are wanted.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Symmetric matrix stored as its lower triangle in CSC form.
///
/// Row indices are strictly increasing within each column and every stored
/// entry satisfies `row >= col`. The upper triangle is implied.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSymMatrix {
    n: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<f64>,
}

/// Sums duplicates and sorts `(row, col, value)` triplets into CSC arrays.
/// Triplets must already be range-checked.
fn csc_from_triplets(
    ncols: usize,
    mut trip: Vec<(usize, usize, f64)>,
) -> (Vec<usize>, Vec<usize>, Vec<f64>) {
    trip.sort_by(|a, b| (a.1, a.0).cmp(&(b.1, b.0)));
    let mut col_ptr = vec![0usize; ncols + 1];
    let mut row_idx = Vec::with_capacity(trip.len());
    let mut values: Vec<f64> = Vec::with_capacity(trip.len());
    let mut last: Option<(usize, usize)> = None;
    for (r, c, v) in trip {
        if last == Some((r, c)) {
            *values.last_mut().unwrap() += v;
            continue;
        }
        last = Some((r, c));
        row_idx.push(r);
        values.push(v);
        col_ptr[c + 1] += 1;
    }
    for c in 0..ncols {
        col_ptr[c + 1] += col_ptr[c];
    }
    (col_ptr, row_idx, values)
}

impl SparseSymMatrix {
    /// Builds a symmetric positive-definite candidate from triplets. Entries
    /// in the upper triangle are mirrored into the lower one and duplicates
    /// are summed. Every diagonal entry must end up strictly positive.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let m = Self::from_triplets_general(n, triplets)?;
        for j in 0..n {
            match m.get(j, j) {
                Some(v) if v > 0.0 => {}
                _ => return Err(Error::MissingDiagonal(j)),
            }
        }
        Ok(m)
    }

    /// Like [`from_triplets`](Self::from_triplets) but without the diagonal
    /// requirement; used for patterns such as `R` in `tr(R Σ)`.
    pub fn from_triplets_general(n: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut trip = Vec::with_capacity(triplets.len());
        for &(i, j, v) in triplets {
            if i >= n || j >= n {
                return Err(Error::IndexOutOfRange { row: i, col: j, n });
            }
            if !v.is_finite() {
                return Err(Error::NonFinite { row: i, col: j });
            }
            let (r, c) = if i >= j { (i, j) } else { (j, i) };
            trip.push((r, c, v));
        }
        let (col_ptr, row_idx, values) = csc_from_triplets(n, trip);
        Ok(Self { n, col_ptr, row_idx, values })
    }

    /// Wraps raw lower-triangular CSC arrays, validating the layout.
    pub fn from_csc(
        n: usize,
        col_ptr: Vec<usize>,
        row_idx: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if col_ptr.len() != n + 1 {
            return Err(Error::DimensionMismatch { expected: n + 1, got: col_ptr.len() });
        }
        if row_idx.len() != values.len() || col_ptr[n] != row_idx.len() {
            return Err(Error::DimensionMismatch { expected: col_ptr[n], got: row_idx.len() });
        }
        for j in 0..n {
            if col_ptr[j] > col_ptr[j + 1] {
                return Err(Error::InvalidParameter("col_ptr not monotone".into()));
            }
            let rows = &row_idx[col_ptr[j]..col_ptr[j + 1]];
            for (k, &r) in rows.iter().enumerate() {
                if r < j || r >= n || (k > 0 && rows[k - 1] >= r) {
                    return Err(Error::InvalidParameter(format!(
                        "bad row index {r} in column {j}"
                    )));
                }
            }
        }
        Ok(Self { n, col_ptr, row_idx, values })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            n,
            col_ptr: (0..=n).collect(),
            row_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of stored lower-triangle entries.
    pub fn nnz(&self) -> usize {
        self.row_idx.len()
    }

    pub fn col_ptr(&self) -> &[usize] {
        &self.col_ptr
    }

    pub fn row_idx(&self) -> &[usize] {
        &self.row_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Stored rows and values of lower-triangle column `j`.
    pub fn column(&self, j: usize) -> (&[usize], &[f64]) {
        let r = self.col_ptr[j]..self.col_ptr[j + 1];
        (&self.row_idx[r.clone()], &self.values[r])
    }

    /// Entry `(i, j)` if structurally present (either triangle).
    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        let (rows, vals) = self.column(c);
        rows.binary_search(&r).ok().map(|k| vals[k])
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.get(j, j).unwrap_or(0.0)).collect()
    }

    /// `y = A v` using the implied upper triangle.
    pub fn spmv(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, got: v.len() });
        }
        let mut y = vec![0.0; self.n];
        self.spmv_into(v, &mut y);
        Ok(y)
    }

    /// Unchecked `y = A v`; both slices must have length `n`.
    pub fn spmv_into(&self, v: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|e| *e = 0.0);
        for j in 0..self.n {
            let vj = v[j];
            let mut acc = 0.0;
            for p in self.col_ptr[j]..self.col_ptr[j + 1] {
                let i = self.row_idx[p];
                let a = self.values[p];
                if i == j {
                    acc += a * vj;
                } else {
                    y[i] += a * vj;
                    acc += a * v[i];
                }
            }
            y[j] += acc;
        }
    }

    /// Full (both-triangle) column storage for row/column access.
    pub fn to_full(&self) -> FullSymCsc {
        let n = self.n;
        let mut counts = vec![0usize; n + 1];
        for j in 0..n {
            for &i in &self.row_idx[self.col_ptr[j]..self.col_ptr[j + 1]] {
                counts[j + 1] += 1;
                if i != j {
                    counts[i + 1] += 1;
                }
            }
        }
        for j in 0..n {
            counts[j + 1] += counts[j];
        }
        let col_ptr = counts.clone();
        let mut next = counts;
        let nnz = col_ptr[n];
        let mut row_idx = vec![0usize; nnz];
        let mut values = vec![0.0; nnz];
        // Column j of the full matrix gets, in increasing row order, first the
        // upper part (rows < j, found in lower columns i < j at row j), then
        // the lower part. Iterating columns in order produces sorted output.
        for j in 0..n {
            for p in self.col_ptr[j]..self.col_ptr[j + 1] {
                let i = self.row_idx[p];
                let v = self.values[p];
                if i != j {
                    let q = next[i];
                    row_idx[q] = j;
                    values[q] = v;
                    next[i] += 1;
                }
            }
            for p in self.col_ptr[j]..self.col_ptr[j + 1] {
                let q = next[j];
                row_idx[q] = self.row_idx[p];
                values[q] = self.values[p];
                next[j] += 1;
            }
        }
        FullSymCsc { n, col_ptr, row_idx, values }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.n, self.n);
        for j in 0..self.n {
            let (rows, vals) = self.column(j);
            for (&i, &v) in rows.iter().zip(vals) {
                d[(i, j)] = v;
                d[(j, i)] = v;
            }
        }
        d
    }

    /// Triplets of the stored lower triangle.
    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::with_capacity(self.nnz());
        for j in 0..self.n {
            let (rows, vals) = self.column(j);
            out.extend(rows.iter().zip(vals).map(|(&i, &v)| (i, j, v)));
        }
        out
    }

    /// Structural union `|A| + |B|` with the values of `self` (new entries are
    /// zero). Used to augment a precision pattern with requested pairs.
    pub fn with_extra_pattern(&self, pairs: &[(usize, usize)]) -> Result<Self> {
        let mut trip = self.triplets();
        trip.extend(pairs.iter().map(|&(i, j)| (i, j, 0.0)));
        Self::from_triplets_general(self.n, &trip)
    }
}

/// Both triangles of a symmetric matrix in CSC form.
#[derive(Debug, Clone)]
pub struct FullSymCsc {
    n: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<f64>,
}

impl FullSymCsc {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn column(&self, j: usize) -> (&[usize], &[f64]) {
        let r = self.col_ptr[j]..self.col_ptr[j + 1];
        (&self.row_idx[r.clone()], &self.values[r])
    }

    /// Neighbors of node `j` in the graph of the matrix (excluding `j`).
    pub fn neighbors(&self, j: usize) -> impl Iterator<Item = usize> + '_ {
        self.column(j).0.iter().copied().filter(move |&i| i != j)
    }

    /// Principal submatrix on `nodes`; local index `k` corresponds to
    /// `nodes[k]`.
    pub fn submatrix(&self, nodes: &[usize]) -> SparseSymMatrix {
        let lookup = LocalIndex::new(nodes);
        let mut col_ptr = Vec::with_capacity(nodes.len() + 1);
        col_ptr.push(0);
        let mut row_idx = Vec::new();
        let mut values = Vec::new();
        let mut buf: Vec<(usize, f64)> = Vec::new();
        for (c, &g) in nodes.iter().enumerate() {
            buf.clear();
            let (rows, vals) = self.column(g);
            for (&r, &v) in rows.iter().zip(vals) {
                if let Some(lr) = lookup.get(r) {
                    if lr >= c {
                        buf.push((lr, v));
                    }
                }
            }
            buf.sort_by_key(|e| e.0);
            for &(lr, v) in &buf {
                row_idx.push(lr);
                values.push(v);
            }
            col_ptr.push(row_idx.len());
        }
        SparseSymMatrix { n: nodes.len(), col_ptr, row_idx, values }
    }
}

/// Sorted global-to-local index map for a node subset.
#[derive(Debug, Clone)]
pub struct LocalIndex {
    sorted: Vec<(usize, usize)>,
}

impl LocalIndex {
    pub fn new(nodes: &[usize]) -> Self {
        let mut sorted: Vec<(usize, usize)> =
            nodes.iter().enumerate().map(|(k, &g)| (g, k)).collect();
        sorted.sort_unstable();
        Self { sorted }
    }

    pub fn get(&self, global: usize) -> Option<usize> {
        self.sorted
            .binary_search_by_key(&global, |e| e.0)
            .ok()
            .map(|k| self.sorted[k].1)
    }

    pub fn contains(&self, global: usize) -> bool {
        self.get(global).is_some()
    }
}

/// General rectangular matrix in CSC form.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseRectMatrix {
    rows: usize,
    cols: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseRectMatrix {
    pub fn from_triplets(rows: usize, cols: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut trip = Vec::with_capacity(triplets.len());
        for &(i, j, v) in triplets {
            if i >= rows || j >= cols {
                return Err(Error::IndexOutOfRange { row: i, col: j, n: rows.max(cols) });
            }
            if !v.is_finite() {
                return Err(Error::NonFinite { row: i, col: j });
            }
            trip.push((i, j, v));
        }
        let (col_ptr, row_idx, values) = csc_from_triplets(cols, trip);
        Ok(Self { rows, cols, col_ptr, row_idx, values })
    }

    pub fn empty(rows: usize, cols: usize) -> Self {
        Self { rows, cols, col_ptr: vec![0; cols + 1], row_idx: vec![], values: vec![] }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.row_idx.len()
    }

    pub fn column(&self, j: usize) -> (&[usize], &[f64]) {
        let r = self.col_ptr[j]..self.col_ptr[j + 1];
        (&self.row_idx[r.clone()], &self.values[r])
    }

    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::with_capacity(self.nnz());
        for j in 0..self.cols {
            let (rows, vals) = self.column(j);
            out.extend(rows.iter().zip(vals).map(|(&i, &v)| (i, j, v)));
        }
        out
    }

    /// `A x`.
    pub fn mul_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return Err(Error::DimensionMismatch { expected: self.cols, got: x.len() });
        }
        let mut y = vec![0.0; self.rows];
        for j in 0..self.cols {
            let xj = x[j];
            let (rows, vals) = self.column(j);
            for (&i, &v) in rows.iter().zip(vals) {
                y[i] += v * xj;
            }
        }
        Ok(y)
    }

    /// `Aᵀ y`.
    pub fn mul_t_vec(&self, y: &[f64]) -> Result<Vec<f64>> {
        if y.len() != self.rows {
            return Err(Error::DimensionMismatch { expected: self.rows, got: y.len() });
        }
        Ok((0..self.cols)
            .map(|j| {
                let (rows, vals) = self.column(j);
                rows.iter().zip(vals).map(|(&i, &v)| v * y[i]).sum()
            })
            .collect())
    }

    /// Lower triangle of `AᵀA` as triplets, accumulated in a fixed order.
    pub fn gram_triplets(&self) -> Vec<(usize, usize, f64)> {
        // Row-wise view: for every row, each pair of its columns contributes.
        let mut by_row: Vec<Vec<(usize, f64)>> = vec![Vec::new(); self.rows];
        for j in 0..self.cols {
            let (rows, vals) = self.column(j);
            for (&i, &v) in rows.iter().zip(vals) {
                by_row[i].push((j, v));
            }
        }
        let mut out = Vec::new();
        for row in &by_row {
            for (a, &(ca, va)) in row.iter().enumerate() {
                for &(cb, vb) in &row[..=a] {
                    out.push((ca.max(cb), ca.min(cb), va * vb));
                }
            }
        }
        out
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.rows, self.cols);
        for (i, j, v) in self.triplets() {
            d[(i, j)] = v;
        }
        d
    }
}

/// Which family of index pairs an [`IndexSet`] was built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IndexKind {
    Diagonal,
    PatternOfMatrix,
    OuterProductSupport,
    Explicit,
}

/// Deduplicated set of lower-triangle index pairs `(i, j)` with `i >= j`,
/// sorted lexicographically.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexSet {
    n: usize,
    pairs: Vec<(usize, usize)>,
    kind: IndexKind,
}

impl IndexSet {
    pub fn diagonal(n: usize) -> Self {
        Self { n, pairs: (0..n).map(|i| (i, i)).collect(), kind: IndexKind::Diagonal }
    }

    /// Diagonal entries of a node subset.
    pub fn diagonal_of(n: usize, nodes: &[usize]) -> Result<Self> {
        let pairs: Vec<_> = nodes.iter().map(|&i| (i, i)).collect();
        let mut s = Self::explicit(n, &pairs)?;
        s.kind = IndexKind::Diagonal;
        Ok(s)
    }

    /// `S_A`: the structural pattern of a symmetric matrix.
    pub fn pattern_of(a: &SparseSymMatrix) -> Self {
        let mut pairs: Vec<_> = a.triplets().into_iter().map(|(i, j, _)| (i, j)).collect();
        pairs.sort_unstable();
        Self { n: a.n(), pairs, kind: IndexKind::PatternOfMatrix }
    }

    /// `S_{aaᵀ}` for a sparse vector given as `(index, value)` entries.
    pub fn outer_product_support(n: usize, a: &[(usize, f64)]) -> Result<Self> {
        let idx: Vec<usize> = a.iter().filter(|e| e.1 != 0.0).map(|e| e.0).collect();
        let mut pairs = Vec::new();
        for &p in &idx {
            for &q in &idx {
                if p >= q {
                    pairs.push((p, q));
                }
            }
        }
        let mut s = Self::explicit(n, &pairs)?;
        s.kind = IndexKind::OuterProductSupport;
        Ok(s)
    }

    pub fn explicit(n: usize, pairs: &[(usize, usize)]) -> Result<Self> {
        let mut out = Vec::with_capacity(pairs.len());
        for &(i, j) in pairs {
            if i >= n || j >= n {
                return Err(Error::IndexOutOfRange { row: i, col: j, n });
            }
            out.push((i.max(j), i.min(j)));
        }
        out.sort_unstable();
        out.dedup();
        Ok(Self { n, pairs: out, kind: IndexKind::Explicit })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn kind(&self) -> IndexKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    /// Position of `(i, j)` (either orientation).
    pub fn position(&self, i: usize, j: usize) -> Option<usize> {
        self.pairs.binary_search(&(i.max(j), i.min(j))).ok()
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.position(i, j).is_some()
    }

    pub fn is_diagonal_only(&self) -> bool {
        self.pairs.iter().all(|&(i, j)| i == j)
    }

    pub fn union(&self, other: &IndexSet) -> Result<IndexSet> {
        let mut all = self.pairs.clone();
        all.extend_from_slice(&other.pairs);
        IndexSet::explicit(self.n.max(other.n), &all)
    }
}

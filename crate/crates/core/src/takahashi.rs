//! Selected inversion by the Takahashi recursions.
//!
//! Working in factor order, for column `i` of `L` with off-diagonal rows
//! `r_1 < … < r_m`:
//!
//! ```text
//! Σ_{r_t, i} = -(1/L_ii) Σ_u L_{r_u, i} Σ_{r_u, r_t}
//! Σ_{i, i}   = 1/L_ii² - (1/L_ii) Σ_u L_{r_u, i} Σ_{r_u, i}
//! ```
//!
//! Columns are processed from `n - 1` down to the lowest requested column.
//! Every `Σ_{r_u, r_t}` needed lies on the fill pattern, so the working
//! inverse is held on the pattern only. A column of it is released as soon
//! as the last column that reads it has been processed.

use nalgebra::DMatrix;

use crate::chol::CholFactor;
use crate::error::{Error, Result};
use crate::selcov::SelectedCov;
use crate::sparse::IndexSet;

/// Result of a recursion: requested values plus bookkeeping.
#[derive(Debug, Clone)]
pub struct Recursion {
    pub values: Vec<f64>,
    /// Peak number of live working-inverse entries.
    pub peak_entries: usize,
}

struct Wanted {
    /// `(factor row, output slot)` grouped per factor column.
    by_col: Vec<Vec<(usize, usize)>>,
    count: usize,
}

/// Maps requested pairs (original indices) to factor positions and checks
/// that they lie on the pattern and at or above `lowest`.
fn locate(l: &CholFactor, s: &IndexSet, lowest: usize) -> Result<Wanted> {
    let n = l.n();
    if s.n() > n {
        return Err(Error::DimensionMismatch { expected: n, got: s.n() });
    }
    let inv = l.symbolic().perm().inv();
    let mut by_col = vec![Vec::new(); n];
    for (slot, &(i, j)) in s.pairs().iter().enumerate() {
        let (a, b) = (inv[i], inv[j]);
        let (row, col) = (a.max(b), a.min(b));
        if col < lowest || l.symbolic().position(row, col).is_none() {
            return Err(Error::PairOutsidePattern(i, j));
        }
        by_col[col].push((row, slot));
    }
    Ok(Wanted { by_col, count: s.len() })
}

/// Core recursion over columns `lowest..n`. If `frame` is given, the
/// trailing `frame.nrows()` columns are seeded from it instead of computed.
fn run(l: &CholFactor, lowest: usize, frame: Option<&DMatrix<f64>>, wanted: &Wanted) -> Recursion {
    let n = l.n();
    let sym = l.symbolic();
    let mut out = vec![0.0; wanted.count];

    // last_use[c]: lowest column whose pattern contains c.
    let mut last_use: Vec<usize> = (0..n).collect();
    for i in lowest..n {
        for &r in &sym.column(i)[1..] {
            if last_use[r] == r {
                last_use[r] = i;
            }
        }
    }
    let mut releases: Vec<Vec<usize>> = vec![Vec::new(); n];
    for c in lowest..n {
        releases[last_use[c]].push(c);
    }

    let mut sigma: Vec<Vec<f64>> = vec![Vec::new(); n];
    let mut live = 0usize;
    let mut peak = 0usize;

    let seeded_from = match frame {
        Some(f) => {
            let t = f.nrows();
            let base = n - t;
            for c in base..n {
                let rows = sym.column(c);
                sigma[c] = rows.iter().map(|&r| f[(r - base, c - base)]).collect();
                live += rows.len();
            }
            base
        }
        None => n,
    };
    peak = peak.max(live);

    let mut acc: Vec<f64> = Vec::new();
    // slot[r]: position of row r in the column being read.
    let mut slot = vec![0usize; n];
    for i in (lowest..n).rev() {
        if i < seeded_from {
            let (rows, lv) = l.column(i);
            let m = rows.len() - 1;
            let off_rows = &rows[1..];
            let off_l = &lv[1..];
            acc.clear();
            acc.resize(m, 0.0);
            for a in 0..m {
                let j = off_rows[a];
                let col_rows = sym.column(j);
                let col_sig = &sigma[j];
                // col_rows[0] == j, the diagonal Σ_jj
                acc[a] += off_l[a] * col_sig[0];
                if m - a > 1 {
                    for (k, &r) in col_rows.iter().enumerate() {
                        slot[r] = k;
                    }
                }
                for b in a + 1..m {
                    let q = slot[off_rows[b]];
                    debug_assert_eq!(col_rows[q], off_rows[b]);
                    let v = col_sig[q];
                    acc[a] += off_l[b] * v;
                    acc[b] += off_l[a] * v;
                }
            }
            let lii = lv[0];
            let mut col = Vec::with_capacity(m + 1);
            col.push(0.0);
            let mut diag_sum = 0.0;
            for a in 0..m {
                let v = -acc[a] / lii;
                diag_sum += off_l[a] * v;
                col.push(v);
            }
            col[0] = 1.0 / (lii * lii) - diag_sum / lii;
            live += col.len();
            sigma[i] = col;
            peak = peak.max(live);
        }
        let rows = sym.column(i);
        for &(row, slot) in &wanted.by_col[i] {
            let k = rows.binary_search(&row).expect("located on pattern");
            out[slot] = sigma[i][k];
        }
        for &c in &releases[i] {
            live -= sigma[c].len();
            sigma[c] = Vec::new();
        }
    }
    Recursion { values: out, peak_entries: peak }
}

/// Exact `Σ_S` for `S` on the fill pattern.
pub fn takahashi_selected_inverse(l: &CholFactor, s: &IndexSet) -> Result<SelectedCov> {
    let r = takahashi_recursion(l, l.n(), s)?;
    Ok(SelectedCov::new(s.clone(), r.values, "takahashi"))
}

/// Recursion limited to the last `trailing` factor columns. All pairs in
/// `s` must map into that trailing block.
pub fn partial_takahashi(l: &CholFactor, trailing: usize, s: &IndexSet) -> Result<SelectedCov> {
    let r = takahashi_recursion(l, trailing, s)?;
    Ok(SelectedCov::new(s.clone(), r.values, "takahashi"))
}

/// Recursion over the trailing block with bookkeeping exposed.
pub fn takahashi_recursion(l: &CholFactor, trailing: usize, s: &IndexSet) -> Result<Recursion> {
    let n = l.n();
    if trailing > n {
        return Err(Error::InvalidParameter(format!("trailing {trailing} exceeds dimension {n}")));
    }
    let lowest = n - trailing;
    let wanted = locate(l, s, lowest)?;
    Ok(run(l, lowest, None, &wanted))
}

/// Takahashi recursion on a factor of `Q_{U,U}` whose last `frame.nrows()`
/// columns are the frame `V`, with `Σ_{V,V}` treated as known. `frame` is
/// indexed in factor order of the trailing block (see [`frame_nodes`]).
pub fn takahashi_with_known_frame(
    l: &CholFactor,
    frame: &DMatrix<f64>,
    s: &IndexSet,
) -> Result<SelectedCov> {
    let r = takahashi_with_known_frame_recursion(l, frame, s)?;
    Ok(SelectedCov::new(s.clone(), r.values, "takahashi-frame"))
}

pub fn takahashi_with_known_frame_recursion(
    l: &CholFactor,
    frame: &DMatrix<f64>,
    s: &IndexSet,
) -> Result<Recursion> {
    let n = l.n();
    let t = frame.nrows();
    if frame.ncols() != t || t > n {
        return Err(Error::DimensionMismatch { expected: t, got: frame.ncols() });
    }
    let wanted = locate(l, s, 0)?;
    Ok(run(l, 0, Some(frame), &wanted))
}

/// Original (local) indices of the last `trailing` factor positions, in
/// factor order.
pub fn frame_nodes(l: &CholFactor, trailing: usize) -> Vec<usize> {
    let n = l.n();
    l.symbolic().perm().perm()[n - trailing..].to_vec()
}

/// Estimated bytes for an exact selected inversion with this factor: the
/// factor itself plus a working inverse on the same pattern.
pub fn exact_memory_estimate(fill_count: usize) -> usize {
    fill_count * (2 * std::mem::size_of::<f64>() + std::mem::size_of::<usize>())
}

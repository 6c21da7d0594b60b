//! Iterative interface method on lattice domain decompositions.
//!
//! Geometry per axis of length `d` with `b` blocks: for `b = 1` there is
//! no cut and a single window spans the axis. For `b ≥ 2` there are `b`
//! one-node-thick cut lines separating `b + 1` cells; window `k` holds cells
//! `k` and `k + 1` with line `k` between them, and is framed by lines `k - 1`
//! and `k + 1` where those exist. Windows of a multi-axis lattice are the
//! products of axis windows, numbered with the first axis fastest.
//!
//! Per window `i`: `I(W_i)` is the box strictly inside the frame, `V_i` the
//! stencil neighbors of that box outside it, `W_i` the interface voxels in
//! the box, and `Z_i ⊆ W_i` the interface voxels owned by `i`. Every voxel is
//! owned by the window containing it whose frame is farthest away (ties to
//! the lowest index). All variables of a voxel travel together.

use std::collections::HashMap;
use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::chol::{cholesky, cholesky_constrained, CholFactor};
use crate::error::{Error, Result};
use crate::estimators::BlockPartition;
use crate::lattice::Lattice;
use crate::sampler::SampleMatrix;
use crate::selcov::SelectedCov;
use crate::sparse::{FullSymCsc, IndexSet, LocalIndex, SparseSymMatrix};
use crate::takahashi::{frame_nodes, takahashi_with_known_frame};

/// Smallest admissible window interior along a cut axis.
pub const MIN_WINDOW_WIDTH: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct AxisWindow {
    lo: usize,
    /// Exclusive.
    hi: usize,
    lower: Option<usize>,
    upper: Option<usize>,
}

#[derive(Debug, Clone)]
struct AxisSplit {
    lines: Vec<usize>,
    windows: Vec<AxisWindow>,
}

fn split_axis(d: usize, b: usize) -> Result<AxisSplit> {
    if b == 0 {
        return Err(Error::InvalidParameter("blocks per axis must be positive".into()));
    }
    if b == 1 {
        return Ok(AxisSplit { lines: vec![], windows: vec![AxisWindow { lo: 0, hi: d, lower: None, upper: None }] });
    }
    if d < 2 * b + 1 {
        return Err(Error::Decomposition(format!("axis of length {d} cannot host {b} cut lines")));
    }
    let cells = b + 1;
    let (base, extra) = ((d - b) / cells, (d - b) % cells);
    let mut lines = Vec::with_capacity(b);
    let mut pos = 0;
    for c in 0..b {
        pos += base + usize::from(c < extra);
        lines.push(pos);
        pos += 1;
    }
    let windows: Vec<AxisWindow> = (0..b)
        .map(|k| AxisWindow {
            lo: if k == 0 { 0 } else { lines[k - 1] + 1 },
            hi: if k + 1 < b { lines[k + 1] } else { d },
            lower: (k >= 1).then(|| lines[k - 1]),
            upper: (k + 1 < b).then(|| lines[k + 1]),
        })
        .collect();
    for w in &windows {
        if w.hi - w.lo < MIN_WINDOW_WIDTH {
            return Err(Error::Decomposition(format!(
                "window [{}, {}) is narrower than {MIN_WINDOW_WIDTH} lattice steps",
                w.lo, w.hi
            )));
        }
    }
    Ok(AxisSplit { lines, windows })
}

/// Node sets of one window. All lists are sorted variable indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct InterfaceBlock {
    /// `I(W)`: every node strictly inside the frame.
    pub interior: Vec<usize>,
    /// Interface nodes inside the frame.
    pub w: Vec<usize>,
    /// Frame nodes.
    pub v: Vec<usize>,
    /// Interface nodes owned by this block.
    pub z: Vec<usize>,
    /// `I(W) ∪ V`.
    pub u: Vec<usize>,
    /// All nodes owned by this block.
    pub owned: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct InterfaceDecomposition {
    lattice: Lattice,
    blocks_per_dim: Vec<usize>,
    blocks: Vec<InterfaceBlock>,
    interface: Vec<usize>,
    owner: Vec<usize>,
}

#[derive(Serialize)]
struct DecompositionDump<'a> {
    dims: &'a [usize],
    k: usize,
    blocks_per_dim: &'a [usize],
    interface: &'a [usize],
    owner: &'a [usize],
    blocks: &'a [InterfaceBlock],
}

/// Builds the decomposition of a `dims` lattice with `k` variables per
/// voxel into `Π blocks_per_dim` framed windows.
pub fn build_interface_decomposition(
    dims: &[usize],
    k: usize,
    blocks_per_dim: &[usize],
) -> Result<InterfaceDecomposition> {
    InterfaceDecomposition::new(&Lattice::new(dims, k)?, blocks_per_dim)
}

impl InterfaceDecomposition {
    pub fn new(lattice: &Lattice, blocks_per_dim: &[usize]) -> Result<Self> {
        let dims = lattice.dims();
        let nd = dims.len();
        if blocks_per_dim.len() != nd {
            return Err(Error::DimensionMismatch { expected: nd, got: blocks_per_dim.len() });
        }
        let splits: Vec<AxisSplit> =
            dims.iter().zip(blocks_per_dim).map(|(&d, &b)| split_axis(d, b)).collect::<Result<_>>()?;
        let n_blocks: usize = blocks_per_dim.iter().product();
        let windows: Vec<Vec<AxisWindow>> = (0..n_blocks)
            .map(|id| {
                let mut rest = id;
                (0..nd)
                    .map(|a| {
                        let t = rest % blocks_per_dim[a];
                        rest /= blocks_per_dim[a];
                        splits[a].windows[t]
                    })
                    .collect()
            })
            .collect();

        let nv = lattice.n_voxels();
        let is_line = |c: &[usize; 3]| (0..nd).any(|a| splits[a].lines.binary_search(&c[a]).is_ok());
        let inside = |w: &[AxisWindow], c: &[usize; 3]| (0..nd).all(|a| c[a] >= w[a].lo && c[a] < w[a].hi);
        let dist = |w: &[AxisWindow], c: &[usize; 3]| {
            let mut m = usize::MAX;
            for a in 0..nd {
                if let Some(l) = w[a].lower {
                    m = m.min(c[a] - l);
                }
                if let Some(u) = w[a].upper {
                    m = m.min(u - c[a]);
                }
            }
            m
        };

        let mut owner_vox = vec![usize::MAX; nv];
        let mut interior: Vec<Vec<usize>> = vec![Vec::new(); n_blocks];
        let mut w_sets: Vec<Vec<usize>> = vec![Vec::new(); n_blocks];
        let mut interface_vox = Vec::new();
        for vox in 0..nv {
            let c = lattice.coords(vox);
            let line = is_line(&c);
            if line {
                interface_vox.push(vox);
            }
            let mut best: Option<(usize, usize)> = None;
            for (i, w) in windows.iter().enumerate() {
                if !inside(w, &c) {
                    continue;
                }
                interior[i].push(vox);
                if line {
                    w_sets[i].push(vox);
                }
                let d = dist(w, &c);
                if best.is_none_or(|(_, bd)| d > bd) {
                    best = Some((i, d));
                }
            }
            owner_vox[vox] = best.expect("windows cover the lattice").0;
        }

        let mut blocks = Vec::with_capacity(n_blocks);
        for i in 0..n_blocks {
            let mut in_box = vec![false; nv];
            for &v in &interior[i] {
                in_box[v] = true;
            }
            let mut frame: Vec<usize> = interior[i]
                .iter()
                .flat_map(|&v| lattice.neighbors(v))
                .filter(|&u| !in_box[u])
                .collect();
            frame.sort_unstable();
            frame.dedup();
            let z: Vec<usize> = w_sets[i].iter().copied().filter(|&v| owner_vox[v] == i).collect();
            if !interface_vox.is_empty() && z.is_empty() {
                return Err(Error::Decomposition(format!("block {i} owns no interface node")));
            }
            let owned: Vec<usize> = interior[i].iter().copied().filter(|&v| owner_vox[v] == i).collect();
            let mut u: Vec<usize> = interior[i].iter().chain(&frame).copied().collect();
            u.sort_unstable();
            let vars = |vs: &[usize]| -> Vec<usize> { vs.iter().flat_map(|&v| lattice.vars_of(v)).collect() };
            blocks.push(InterfaceBlock {
                interior: vars(&interior[i]),
                w: vars(&w_sets[i]),
                v: vars(&frame),
                z: vars(&z),
                u: vars(&u),
                owned: vars(&owned),
            });
        }
        let interface = interface_vox.iter().flat_map(|&v| lattice.vars_of(v)).collect();
        let owner = (0..lattice.n_vars()).map(|var| owner_vox[lattice.voxel_of_var(var)]).collect();
        Ok(Self { lattice: lattice.clone(), blocks_per_dim: blocks_per_dim.to_vec(), blocks, interface, owner })
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn n(&self) -> usize {
        self.lattice.n_vars()
    }

    pub fn blocks_per_dim(&self) -> &[usize] {
        &self.blocks_per_dim
    }

    pub fn blocks(&self) -> &[InterfaceBlock] {
        &self.blocks
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// Sorted interface nodes (variables on some cut line).
    pub fn interface_nodes(&self) -> &[usize] {
        &self.interface
    }

    /// Block owning `node`; for interface nodes this is the Z-owner.
    pub fn owner(&self, node: usize) -> usize {
        self.owner[node]
    }

    /// Every `Q`-neighbor of `I(W_i)` lies in `U_i`.
    pub fn check_separation(&self, q: &SparseSymMatrix) -> Result<()> {
        if q.n() != self.n() {
            return Err(Error::DimensionMismatch { expected: self.n(), got: q.n() });
        }
        let full = q.to_full();
        self.check_separation_full(&full)
    }

    fn check_separation_full(&self, full: &FullSymCsc) -> Result<()> {
        for (i, b) in self.blocks.iter().enumerate() {
            let u = LocalIndex::new(&b.u);
            for &p in &b.interior {
                if let Some(r) = full.neighbors(p).find(|&r| !u.contains(r)) {
                    return Err(Error::Decomposition(format!(
                        "block {i}: edge ({p}, {r}) leaves the frame"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Block RBMC partition with `Y_i` the nodes owned by block `i` and
    /// `I(Y_i) = I(W_i)`.
    pub fn block_partition(&self) -> Result<BlockPartition> {
        BlockPartition::new(
            self.n(),
            self.blocks.iter().map(|b| b.owned.clone()).collect(),
            self.blocks.iter().map(|b| b.interior.clone()).collect(),
        )
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&DecompositionDump {
            dims: self.lattice.dims(),
            k: self.lattice.k(),
            blocks_per_dim: &self.blocks_per_dim,
            interface: &self.interface,
            owner: &self.owner,
            blocks: &self.blocks,
        })?)
    }
}

#[inline]
fn key(i: usize, j: usize) -> (usize, usize) {
    (i.max(j), i.min(j))
}

/// Current covariance estimates on interface pairs. Stored once per
/// unordered pair, so symmetric by construction.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct InterfaceState {
    values: HashMap<(usize, usize), f64>,
    iterations: usize,
}

impl InterfaceState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.values.get(&key(i, j)).copied()
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.values.insert(key(i, j), v);
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Completed phase-2 sweeps.
    pub fn iterations(&self) -> usize {
        self.iterations
    }

    /// Approximate bytes held.
    pub fn storage_bytes(&self) -> usize {
        self.values.len() * (2 * std::mem::size_of::<usize>() + std::mem::size_of::<f64>())
    }

    /// State holding `f(i, j)` on every pair `W_k × W_k` and `V_k × V_k`.
    pub fn from_fn(dec: &InterfaceDecomposition, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut s = Self::new();
        for b in dec.blocks() {
            for set in [&b.w, &b.v] {
                for (a, &i) in set.iter().enumerate() {
                    for &j in &set[..=a] {
                        if !s.values.contains_key(&key(i, j)) {
                            s.set(i, j, f(i, j));
                        }
                    }
                }
            }
        }
        s
    }

    /// State seeded with exact covariances, from one solve per interface
    /// node against a full factorization of `q`.
    pub fn from_exact(q: &SparseSymMatrix, dec: &InterfaceDecomposition) -> Result<Self> {
        let n = q.n();
        if n != dec.n() {
            return Err(Error::DimensionMismatch { expected: dec.n(), got: n });
        }
        let l = cholesky(q)?;
        let cols: Vec<Vec<f64>> = dec
            .interface_nodes()
            .par_iter()
            .map(|&j| {
                let mut e = vec![0.0; n];
                e[j] = 1.0;
                l.solve(&e)
            })
            .collect::<Result<_>>()?;
        let pos = LocalIndex::new(dec.interface_nodes());
        Ok(Self::from_fn(dec, |i, j| cols[pos.get(j).expect("interface node")][i]))
    }

    fn frame_matrix(&self, nodes: &[usize]) -> Result<DMatrix<f64>> {
        let t = nodes.len();
        let mut m = DMatrix::zeros(t, t);
        for a in 0..t {
            for b in 0..=a {
                let v = match self.get(nodes[a], nodes[b]) {
                    Some(v) => v,
                    None if a == b => return Err(Error::MissingEntry(nodes[a], nodes[a])),
                    // Never co-resident in a block: taken as zero.
                    None => 0.0,
                };
                m[(a, b)] = v;
                m[(b, a)] = v;
            }
        }
        Ok(m)
    }
}

/// Per-block quantities for phases 1 and 2.
struct InnerBlock {
    /// Global node at each trailing factor position of `W`.
    w_order: Vec<usize>,
    in_z: Vec<bool>,
    v: Vec<usize>,
    /// `L_W⁻ᵀ M_W`, `|W| × |V|`.
    g: DMatrix<f64>,
    /// `L_W⁻ᵀ L_W⁻¹`.
    e: DMatrix<f64>,
    factor_bytes: usize,
}

impl InnerBlock {
    fn new(full: &FullSymCsc, block: &InterfaceBlock) -> Result<Self> {
        let nodes = &block.interior;
        let m = nodes.len();
        let local = LocalIndex::new(nodes);
        let w_local: Vec<usize> = block.w.iter().map(|&g| local.get(g).expect("W inside I(W)")).collect();
        let t = w_local.len();
        let l = cholesky_constrained(&full.submatrix(nodes), &w_local, &[])?;
        let inv = l.symbolic().perm().inv();
        let base = m - t;
        let w_order: Vec<usize> = frame_nodes(&l, t).into_iter().map(|p| nodes[p]).collect();
        let z = LocalIndex::new(&block.z);
        let in_z = w_order.iter().map(|&g| z.contains(g)).collect();

        // Dense trailing block L_W and its inverse.
        let mut lw = DMatrix::zeros(t, t);
        for c in base..m {
            let (rows, vals) = l.column(c);
            for (&r, &v) in rows.iter().zip(vals) {
                lw[(r - base, c - base)] = v;
            }
        }
        let lw_inv = lw
            .solve_lower_triangular(&DMatrix::identity(t, t))
            .ok_or(Error::NotPositiveDefinite { column: base, pivot: base, value: 0.0 })?;
        let e = lw_inv.transpose() * &lw_inv;

        let vl = LocalIndex::new(&block.v);
        let mut g = DMatrix::zeros(t, block.v.len());
        let mut rhs = vec![0.0; m];
        for (c, &vg) in block.v.iter().enumerate() {
            rhs.iter_mut().for_each(|x| *x = 0.0);
            let (rows, vals) = full.column(vg);
            for (&r, &val) in rows.iter().zip(vals) {
                if let Some(pl) = local.get(r) {
                    rhs[inv[pl]] = val;
                }
            }
            debug_assert!(vl.contains(vg));
            l.solve_lower_in_place(&mut rhs);
            l.solve_upper_trailing_in_place(&mut rhs, t);
            for a in 0..t {
                g[(a, c)] = rhs[base + a];
            }
        }
        Ok(Self { w_order, in_z, v: block.v.clone(), g, e, factor_bytes: l.storage_bytes() })
    }

    fn bytes(&self) -> usize {
        self.factor_bytes + (self.g.len() + self.e.len()) * std::mem::size_of::<f64>()
    }

    /// `E + (1/N_s) Σ_j κ_j κ_jᵀ` with `κ_j = G x_V⁽ʲ⁾`.
    fn start(&self, x: &SampleMatrix) -> DMatrix<f64> {
        let (t, nv, ns) = (self.g.nrows(), self.v.len(), x.n_s());
        let mut out = self.e.clone();
        if nv == 0 || t == 0 {
            return out;
        }
        let mut xv = DMatrix::zeros(nv, ns);
        for (j, col) in x.columns().enumerate() {
            for (a, &vg) in self.v.iter().enumerate() {
                xv[(a, j)] = col[vg];
            }
        }
        let kappa = &self.g * xv;
        out.gemm(1.0 / ns as f64, &kappa, &kappa.transpose(), 1.0);
        out
    }

    /// `E + G Σ_VV Gᵀ`.
    fn update(&self, sigma_vv: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = self.e.clone();
        if !self.v.is_empty() {
            let gs = &self.g * sigma_vv;
            out.gemm(1.0, &gs, &self.g.transpose(), 1.0);
        }
        out
    }
}

/// Per-block quantities for phase 3.
struct OuterBlock {
    factor: CholFactor,
    /// Global nodes of the trailing `V` positions in factor order.
    frame: Vec<usize>,
    /// `(slot, local pair)` of the assigned `S` entries.
    targets: Vec<(usize, (usize, usize))>,
}

/// Wall time of each phase in seconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct PhaseTimings {
    pub setup: f64,
    pub phase1: f64,
    pub phase2: f64,
    pub phase3: f64,
}

#[derive(Debug, Clone)]
pub struct InterfaceRun {
    pub estimate: SelectedCov,
    pub state: InterfaceState,
    pub n_iter: usize,
    pub timings: PhaseTimings,
    /// Largest per-block local factor plus dense blocks, plus the state.
    pub peak_bytes: usize,
}

/// Model-dependent setup of all three phases, reusable across sample
/// matrices.
pub struct InterfacePlan<'a> {
    dec: &'a InterfaceDecomposition,
    s: IndexSet,
    inner: Vec<InnerBlock>,
    outer: Vec<OuterBlock>,
    setup_seconds: f64,
}

impl<'a> InterfacePlan<'a> {
    /// Fails on a separation violation or an `S` pair not contained in a
    /// single `U_i`.
    pub fn new(q: &SparseSymMatrix, dec: &'a InterfaceDecomposition, s: &IndexSet) -> Result<Self> {
        let t0 = Instant::now();
        if q.n() != dec.n() {
            return Err(Error::DimensionMismatch { expected: dec.n(), got: q.n() });
        }
        if s.n() > q.n() {
            return Err(Error::DimensionMismatch { expected: q.n(), got: s.n() });
        }
        let full = q.to_full();
        dec.check_separation_full(&full)?;

        let u_sets: Vec<LocalIndex> = dec.blocks().iter().map(|b| LocalIndex::new(&b.u)).collect();
        let in_u = |b: usize, p: usize, r: usize| u_sets[b].contains(p) && u_sets[b].contains(r);
        let mut by_block: Vec<Vec<usize>> = vec![Vec::new(); dec.len()];
        for (slot, &(p, r)) in s.pairs().iter().enumerate() {
            let (op, or) = (dec.owner(p), dec.owner(r));
            let b = if in_u(op, p, r) {
                op
            } else if in_u(or, p, r) {
                or
            } else {
                (0..dec.len()).find(|&b| in_u(b, p, r)).ok_or(Error::PairSpansBlocks(p, r))?
            };
            by_block[b].push(slot);
        }

        let inner: Vec<InnerBlock> =
            dec.blocks().par_iter().map(|b| InnerBlock::new(&full, b)).collect::<Result<_>>()?;
        let outer: Vec<OuterBlock> = dec
            .blocks()
            .par_iter()
            .zip(&by_block)
            .map(|(b, slots)| {
                let local = LocalIndex::new(&b.u);
                let v_local: Vec<usize> = b.v.iter().map(|&g| local.get(g).expect("V inside U")).collect();
                let targets: Vec<(usize, (usize, usize))> = slots
                    .iter()
                    .map(|&k| {
                        let (i, j) = s.pairs()[k];
                        (k, (local.get(i).expect("in U"), local.get(j).expect("in U")))
                    })
                    .collect();
                let extra: Vec<(usize, usize)> =
                    targets.iter().map(|&(_, pr)| pr).filter(|(i, j)| i != j).collect();
                let factor = cholesky_constrained(&full.submatrix(&b.u), &v_local, &extra)?;
                let frame = frame_nodes(&factor, v_local.len()).into_iter().map(|p| b.u[p]).collect();
                Ok(OuterBlock { factor, frame, targets })
            })
            .collect::<Result<_>>()?;
        Ok(Self { dec, s: s.clone(), inner, outer, setup_seconds: t0.elapsed().as_secs_f64() })
    }

    pub fn decomposition(&self) -> &InterfaceDecomposition {
        self.dec
    }

    /// Starting matrix `Σ̂^start_{W,W}` of block `b` in the order of
    /// [`Self::w_order`].
    pub fn start_block(&self, b: usize, x: &SampleMatrix) -> DMatrix<f64> {
        self.inner[b].start(x)
    }

    /// `L_W⁻ᵀ L_W⁻¹` of block `b`.
    pub fn exact_part(&self, b: usize) -> &DMatrix<f64> {
        &self.inner[b].e
    }

    /// Global `W` nodes of block `b` in trailing factor order.
    pub fn w_order(&self, b: usize) -> &[usize] {
        &self.inner[b].w_order
    }

    /// Phase 1: RBMC starting values, each stored from the block where at
    /// least one of the two nodes is owned.
    pub fn phase1(&self, x: &SampleMatrix) -> Result<InterfaceState> {
        if x.n() != self.dec.n() {
            return Err(Error::DimensionMismatch { expected: self.dec.n(), got: x.n() });
        }
        let parts: Vec<Vec<((usize, usize), f64)>> = self
            .inner
            .par_iter()
            .map(|blk| {
                let st = blk.start(x);
                let mut out = Vec::new();
                for a in 0..blk.w_order.len() {
                    for b in 0..=a {
                        if blk.in_z[a] || blk.in_z[b] {
                            out.push((key(blk.w_order[a], blk.w_order[b]), st[(a, b)]));
                        }
                    }
                }
                out
            })
            .collect();
        let mut state = InterfaceState::new();
        // Later blocks overwrite earlier ones on doubly anchored pairs.
        for part in parts {
            state.values.extend(part);
        }
        Ok(state)
    }

    /// Phase 2: `n_iter` Gauss-Seidel sweeps in block order.
    pub fn phase2(&self, state: &mut InterfaceState, n_iter: usize) -> Result<()> {
        for _ in 0..n_iter {
            for blk in &self.inner {
                let svv = state.frame_matrix(&blk.v)?;
                let sww = blk.update(&svv);
                for a in 0..blk.w_order.len() {
                    for b in 0..=a {
                        state.set(blk.w_order[a], blk.w_order[b], sww[(a, b)]);
                    }
                }
            }
            state.iterations += 1;
        }
        Ok(())
    }

    /// Phase 3: frame-conditioned Takahashi per block on the requested set.
    pub fn phase3(&self, state: &InterfaceState) -> Result<SelectedCov> {
        let parts: Vec<Vec<(usize, usize, f64)>> = self
            .outer
            .par_iter()
            .enumerate()
            .filter(|(_, o)| !o.targets.is_empty())
            .map(|(b, o)| {
                let frame = state.frame_matrix(&o.frame)?;
                let m = o.factor.n();
                let pairs: Vec<(usize, usize)> = o.targets.iter().map(|&(_, pr)| pr).collect();
                let local_s = IndexSet::explicit(m, &pairs)?;
                let r = takahashi_with_known_frame(&o.factor, &frame, &local_s)?;
                Ok(o.targets.iter().map(|&(slot, (i, j))| (slot, b, r.get(i, j).expect("computed"))).collect())
            })
            .collect::<Result<_>>()?;
        let mut out = SelectedCov::new(self.s.clone(), vec![0.0; self.s.len()], "interface");
        for part in parts {
            for (slot, b, v) in part {
                out.values_mut()[slot] = v;
                out.set_block_id(slot, b);
            }
        }
        Ok(out)
    }

    /// Largest per-block working set in bytes.
    pub fn peak_block_bytes(&self) -> usize {
        self.inner
            .iter()
            .map(InnerBlock::bytes)
            .chain(self.outer.iter().map(|o| o.factor.storage_bytes()))
            .max()
            .unwrap_or(0)
    }

    /// Phases 1 to 3 on one sample matrix.
    pub fn run(&self, x: &SampleMatrix, n_iter: usize) -> Result<InterfaceRun> {
        let t1 = Instant::now();
        let state = self.phase1(x)?;
        let phase1 = t1.elapsed().as_secs_f64();
        let mut r = self.run_from(state, n_iter)?;
        r.timings.phase1 = phase1;
        r.estimate.set_n_s(x.n_s());
        Ok(r)
    }

    /// Phases 2 and 3 from a given state.
    pub fn run_from(&self, mut state: InterfaceState, n_iter: usize) -> Result<InterfaceRun> {
        let t2 = Instant::now();
        self.phase2(&mut state, n_iter)?;
        let phase2 = t2.elapsed().as_secs_f64();
        let t3 = Instant::now();
        let estimate = self.phase3(&state)?;
        let phase3 = t3.elapsed().as_secs_f64();
        let peak_bytes = self.peak_block_bytes() + state.storage_bytes();
        Ok(InterfaceRun {
            estimate,
            state,
            n_iter,
            timings: PhaseTimings { setup: self.setup_seconds, phase1: 0.0, phase2, phase3 },
            peak_bytes,
        })
    }
}

/// Phase 1 for a one-off call.
pub fn interface_phase1_start(
    q: &SparseSymMatrix,
    x: &SampleMatrix,
    dec: &InterfaceDecomposition,
) -> Result<InterfaceState> {
    InterfacePlan::new(q, dec, &IndexSet::explicit(dec.n(), &[])?)?.phase1(x)
}

/// Phase 2 for a one-off call.
pub fn interface_phase2_iterate(
    q: &SparseSymMatrix,
    dec: &InterfaceDecomposition,
    mut state: InterfaceState,
    n_iter: usize,
) -> Result<InterfaceState> {
    InterfacePlan::new(q, dec, &IndexSet::explicit(dec.n(), &[])?)?.phase2(&mut state, n_iter)?;
    Ok(state)
}

/// Phase 3 for a one-off call.
pub fn interface_phase3_finalize(
    q: &SparseSymMatrix,
    dec: &InterfaceDecomposition,
    state: &InterfaceState,
    s: &IndexSet,
) -> Result<SelectedCov> {
    InterfacePlan::new(q, dec, s)?.phase3(state)
}

/// The full method on one sample matrix.
pub fn run_interface_method(
    q: &SparseSymMatrix,
    x: &SampleMatrix,
    dec: &InterfaceDecomposition,
    n_iter: usize,
    s: &IndexSet,
) -> Result<InterfaceRun> {
    InterfacePlan::new(q, dec, s)?.run(x, n_iter)
}

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::chol::cholesky_constrained;
use crate::error::{Error, Result};
use crate::lattice::Lattice;
use crate::sampler::SampleMatrix;
use crate::selcov::{EntryUncertainty, SelectedCov};
use crate::sparse::{FullSymCsc, IndexSet, LocalIndex, SparseSymMatrix};
use crate::takahashi::partial_takahashi;

use super::rbmc::rbmc_uncertainty;

/// Disjoint blocks `Y_i` covering `0..n`, each with an enclosure
/// `I(Y_i) ⊇ Y_i`. Node lists are sorted.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockPartition {
    n: usize,
    blocks: Vec<Vec<usize>>,
    enclosures: Vec<Vec<usize>>,
    owner: Vec<usize>,
}

impl BlockPartition {
    pub fn new(n: usize, mut blocks: Vec<Vec<usize>>, mut enclosures: Vec<Vec<usize>>) -> Result<Self> {
        if blocks.len() != enclosures.len() {
            return Err(Error::DimensionMismatch { expected: blocks.len(), got: enclosures.len() });
        }
        let mut owner = vec![usize::MAX; n];
        for (b, (y, enc)) in blocks.iter_mut().zip(enclosures.iter_mut()).enumerate() {
            y.sort_unstable();
            y.dedup();
            enc.sort_unstable();
            enc.dedup();
            if y.is_empty() {
                return Err(Error::InvalidParameter(format!("block {b} is empty")));
            }
            for &v in y.iter() {
                if v >= n {
                    return Err(Error::IndexOutOfRange { row: v, col: v, n });
                }
                if owner[v] != usize::MAX {
                    return Err(Error::InvalidParameter(format!("node {v} is in blocks {} and {b}", owner[v])));
                }
                owner[v] = b;
                if enc.binary_search(&v).is_err() {
                    return Err(Error::InvalidParameter(format!("node {v} of block {b} is outside its enclosure")));
                }
            }
            if let Some(&v) = enc.last().filter(|&&v| v >= n) {
                return Err(Error::IndexOutOfRange { row: v, col: v, n });
            }
        }
        if let Some(v) = owner.iter().position(|&o| o == usize::MAX) {
            return Err(Error::InvalidParameter(format!("node {v} belongs to no block")));
        }
        Ok(Self { n, blocks, enclosures, owner })
    }

    /// One block holding everything.
    pub fn whole_domain(n: usize) -> Self {
        let all: Vec<usize> = (0..n).collect();
        Self::new(n, vec![all.clone()], vec![all]).expect("valid partition")
    }

    /// `Y_i = I(Y_i) = {i}`.
    pub fn singletons(n: usize) -> Self {
        let b: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
        Self::new(n, b.clone(), b).expect("valid partition")
    }

    /// Per-node blocks on a chain with centered enclosures of `m` nodes,
    /// clipped at the ends.
    pub fn centered_windows(n: usize, m: usize) -> Result<Self> {
        if m == 0 || m % 2 == 0 {
            return Err(Error::InvalidParameter(format!("window size must be odd, got {m}")));
        }
        let h = m / 2;
        let blocks = (0..n).map(|i| vec![i]).collect();
        let enc = (0..n).map(|i| (i.saturating_sub(h)..(i + h + 1).min(n)).collect()).collect();
        Self::new(n, blocks, enc)
    }

    /// Regular tiling of the voxel grid into `blocks_per_dim` boxes per
    /// axis, each enclosed by the box grown `margin` steps per side. All
    /// variables of a voxel travel together.
    pub fn regular_tiling(lattice: &Lattice, blocks_per_dim: &[usize], margin: usize) -> Result<Self> {
        let dims = lattice.dims();
        if blocks_per_dim.len() != dims.len() {
            return Err(Error::DimensionMismatch { expected: dims.len(), got: blocks_per_dim.len() });
        }
        for (&b, &d) in blocks_per_dim.iter().zip(dims) {
            if b == 0 || b > d {
                return Err(Error::InvalidParameter(format!("{b} blocks along an axis of length {d}")));
            }
        }
        let cuts: Vec<Vec<usize>> =
            blocks_per_dim.iter().zip(dims).map(|(&b, &d)| (0..=b).map(|t| t * d / b).collect()).collect();
        let n_blocks: usize = blocks_per_dim.iter().product();
        let mut blocks = Vec::with_capacity(n_blocks);
        let mut enclosures = Vec::with_capacity(n_blocks);
        for id in 0..n_blocks {
            let mut t = [0usize; 3];
            let mut rest = id;
            for (a, &b) in blocks_per_dim.iter().enumerate() {
                t[a] = rest % b;
                rest /= b;
            }
            let inner: Vec<(usize, usize)> = (0..dims.len()).map(|a| (cuts[a][t[a]], cuts[a][t[a] + 1])).collect();
            let outer: Vec<(usize, usize)> = inner
                .iter()
                .zip(dims)
                .map(|(&(lo, hi), &d)| (lo.saturating_sub(margin), (hi + margin).min(d)))
                .collect();
            blocks.push(box_vars(lattice, &inner));
            enclosures.push(box_vars(lattice, &outer));
        }
        Self::new(lattice.n_vars(), blocks, enclosures)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn enclosures(&self) -> &[Vec<usize>] {
        &self.enclosures
    }

    pub fn owner(&self, node: usize) -> usize {
        self.owner[node]
    }
}

/// Variables of all voxels in a half-open box.
pub(crate) fn box_vars(lattice: &Lattice, ranges: &[(usize, usize)]) -> Vec<usize> {
    let mut out = Vec::new();
    for v in 0..lattice.n_voxels() {
        let c = lattice.coords(v);
        if ranges.iter().enumerate().all(|(a, &(lo, hi))| c[a] >= lo && c[a] < hi) {
            out.extend(lattice.vars_of(v));
        }
    }
    out
}

/// Size bookkeeping of a block RBMC run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BlockStats {
    pub n_blocks: usize,
    pub max_enclosure: usize,
    /// Largest single local factor plus its dense sample map, in bytes.
    pub peak_factor_bytes: usize,
    pub total_fill: usize,
}

struct Target {
    slot: usize,
    /// Trailing positions (factor order) of the two nodes.
    a: usize,
    b: usize,
    exact: f64,
}

struct BlockOutput {
    block: usize,
    /// Per replication: `(slot, value, uncertainty)`.
    entries: Vec<Vec<(usize, f64, EntryUncertainty)>>,
    fill: usize,
    bytes: usize,
    size: usize,
}

/// Block RBMC on a fixed model, partition and index set. Each block is
/// factorized once and applied to every sample matrix in a batch.
pub struct BlockRbmcPlan<'a> {
    q: &'a SparseSymMatrix,
    full: FullSymCsc,
    partition: &'a BlockPartition,
    s: &'a IndexSet,
    by_block: Vec<Vec<usize>>,
    confidence: f64,
}

impl<'a> BlockRbmcPlan<'a> {
    /// Fails if an `s` pair has its two nodes in different blocks.
    pub fn new(q: &'a SparseSymMatrix, partition: &'a BlockPartition, s: &'a IndexSet, confidence: f64) -> Result<Self> {
        if partition.n() != q.n() {
            return Err(Error::DimensionMismatch { expected: q.n(), got: partition.n() });
        }
        if s.n() > q.n() {
            return Err(Error::DimensionMismatch { expected: q.n(), got: s.n() });
        }
        let mut by_block = vec![Vec::new(); partition.len()];
        for (slot, &(i, j)) in s.pairs().iter().enumerate() {
            let b = partition.owner(i);
            if partition.owner(j) != b {
                return Err(Error::PairSpansBlocks(i, j));
            }
            by_block[b].push(slot);
        }
        Ok(Self { q, full: q.to_full(), partition, s, by_block, confidence })
    }

    pub fn run(&self, x: &SampleMatrix) -> Result<SelectedCov> {
        Ok(self.run_batch(&[x])?.0.pop().expect("one replication"))
    }

    /// Estimates for every sample matrix in `xs`, plus size statistics.
    pub fn run_batch(&self, xs: &[&SampleMatrix]) -> Result<(Vec<SelectedCov>, BlockStats)> {
        for x in xs {
            if x.n() != self.q.n() {
                return Err(Error::DimensionMismatch { expected: self.q.n(), got: x.n() });
            }
        }
        let outputs: Vec<BlockOutput> = (0..self.partition.len())
            .into_par_iter()
            .filter(|&b| !self.by_block[b].is_empty())
            .map(|b| self.run_block(b, xs))
            .collect::<Result<_>>()?;

        let mut stats = BlockStats { n_blocks: self.partition.len(), ..BlockStats::default() };
        let mut covs: Vec<SelectedCov> = xs
            .iter()
            .map(|x| {
                let mut c = SelectedCov::new(self.s.clone(), vec![0.0; self.s.len()], "block-rbmc");
                c.set_n_s(x.n_s());
                c.set_confidence(self.confidence);
                c
            })
            .collect();
        for out in outputs {
            stats.max_enclosure = stats.max_enclosure.max(out.size);
            stats.peak_factor_bytes = stats.peak_factor_bytes.max(out.bytes);
            stats.total_fill += out.fill;
            for (cov, entries) in covs.iter_mut().zip(out.entries) {
                for (slot, v, u) in entries {
                    cov.values_mut()[slot] = v;
                    cov.set_uncertainty(slot, u);
                    cov.set_block_id(slot, out.block);
                }
            }
        }
        Ok((covs, stats))
    }

    fn run_block(&self, b: usize, xs: &[&SampleMatrix]) -> Result<BlockOutput> {
        let nodes = &self.partition.enclosures()[b];
        let y = &self.partition.blocks()[b];
        let local = LocalIndex::new(nodes);
        let m = nodes.len();
        let t = y.len();
        let sub = self.full.submatrix(nodes);
        let y_local: Vec<usize> = y.iter().map(|&g| local.get(g).expect("Y inside enclosure")).collect();

        let slots = &self.by_block[b];
        let local_pairs: Vec<(usize, usize)> = slots
            .iter()
            .map(|&k| {
                let (i, j) = self.s.pairs()[k];
                (local.get(i).unwrap(), local.get(j).unwrap())
            })
            .collect();
        let extra: Vec<(usize, usize)> = local_pairs.iter().copied().filter(|(i, j)| i != j).collect();
        let l = cholesky_constrained(&sub, &y_local, &extra)?;
        let local_s = IndexSet::explicit(m, &local_pairs)?;
        let exact = partial_takahashi(&l, t, &local_s)?;
        let inv = l.symbolic().perm().inv();
        let base = m - t;
        let targets: Vec<Target> = slots
            .iter()
            .zip(&local_pairs)
            .map(|(&slot, &(i, j))| Target {
                slot,
                a: inv[i] - base,
                b: inv[j] - base,
                exact: exact.get(i, j).expect("computed"),
            })
            .collect();

        // Outside nodes coupled to the enclosure, and the couplings in
        // factor order.
        let mut outside: Vec<usize> = Vec::new();
        let mut coupling: Vec<(usize, usize, f64)> = Vec::new();
        for (k, &g) in nodes.iter().enumerate() {
            let (rows, vals) = self.full.column(g);
            for (&r, &v) in rows.iter().zip(vals) {
                if !local.contains(r) {
                    coupling.push((inv[k], r, v));
                    outside.push(r);
                }
            }
        }
        outside.sort_unstable();
        outside.dedup();
        let out_idx = LocalIndex::new(&outside);

        // κ = -(Q_II⁻¹ Q_{I,B} x_B)_Y; G holds (Q_II⁻¹)_{Y,I} Q_{I,B} with
        // rows in trailing factor order. Only products of κ are used.
        let mut g: DMatrix<f64> = DMatrix::zeros(t, outside.len());
        if !outside.is_empty() {
            let mut z = vec![0.0; m];
            for a in 0..t {
                z.iter_mut().for_each(|v| *v = 0.0);
                z[base + a] = 1.0;
                l.solve_lower_in_place(&mut z);
                l.solve_upper_in_place(&mut z);
                for &(p, r, v) in &coupling {
                    g[(a, out_idx.get(r).expect("collected"))] += z[p] * v;
                }
            }
        }

        let mut entries = Vec::with_capacity(xs.len());
        for x in xs {
            let ns = x.n_s();
            let mut cross = vec![0.0; targets.len()];
            let mut sq = vec![0.0; t];
            if !outside.is_empty() {
                let mut xb: DMatrix<f64> = DMatrix::zeros(outside.len(), ns);
                for (j, col) in x.columns().enumerate() {
                    for (c, &r) in outside.iter().enumerate() {
                        xb[(c, j)] = col[r];
                    }
                }
                let kappa = &g * xb;
                for (c, tg) in cross.iter_mut().zip(&targets) {
                    *c = kappa.row(tg.a).dot(&kappa.row(tg.b));
                }
                for (a, s) in sq.iter_mut().enumerate() {
                    *s = kappa.row(a).norm_squared();
                }
            }
            let nf = ns as f64;
            let mut out = Vec::with_capacity(targets.len());
            for (tg, c) in targets.iter().zip(&cross) {
                let value = tg.exact + c / nf;
                let u = if tg.a == tg.b {
                    rbmc_uncertainty(value, tg.exact, ns, self.confidence)?.into()
                } else {
                    let (caa, cbb, cab) = (sq[tg.a] / nf, sq[tg.b] / nf, c / nf);
                    EntryUncertainty { exact_part: tg.exact, est_variance: (cab * cab + caa * cbb) / nf, ci: None }
                };
                out.push((tg.slot, value, u));
            }
            entries.push(out);
        }
        let bytes = l.storage_bytes() + g.len() * std::mem::size_of::<f64>();
        Ok(BlockOutput { block: b, entries, fill: l.symbolic().fill_count(), bytes, size: m })
    }
}

/// Block RBMC estimate on `s` from one sample matrix.
pub fn block_rbmc(
    q: &SparseSymMatrix,
    x: &SampleMatrix,
    partition: &BlockPartition,
    s: &IndexSet,
    confidence: f64,
) -> Result<SelectedCov> {
    BlockRbmcPlan::new(q, partition, s, confidence)?.run(x)
}

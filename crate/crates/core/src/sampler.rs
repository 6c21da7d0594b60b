//! Exact GMRF samples and Hutchinson probe vectors.

use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chol::CholFactor;
use crate::error::{Error, Result};
use crate::pcg::{pcg_solve_with, PcgConfig, PreparedPreconditioner};
use crate::rng::ColumnStream;
use crate::sparse::{SparseRectMatrix, SparseSymMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    GmrfPcg,
    GmrfChol,
    Rademacher,
    /// Identity basis `V_s = I`.
    Identity,
    /// Samples projected onto a linear constraint.
    Constrained,
    /// Supplied by the caller.
    External,
}

impl Provenance {
    fn code(self) -> u64 {
        match self {
            Self::GmrfPcg => 0,
            Self::GmrfChol => 1,
            Self::Rademacher => 2,
            Self::Identity => 3,
            Self::Constrained => 4,
            Self::External => 5,
        }
    }

    fn from_code(c: u64) -> Result<Self> {
        Ok(match c {
            0 => Self::GmrfPcg,
            1 => Self::GmrfChol,
            2 => Self::Rademacher,
            3 => Self::Identity,
            4 => Self::Constrained,
            5 => Self::External,
            _ => return Err(Error::Parse(format!("unknown provenance code {c}"))),
        })
    }
}

/// `n × n_s` block of column vectors, stored column-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleMatrix {
    n: usize,
    n_s: usize,
    data: Vec<f64>,
    provenance: Provenance,
    seed: u64,
}

const MAGIC: &[u8; 8] = b"CVSLSMP1";

impl SampleMatrix {
    /// Column-major data of length `n·n_s`; all entries finite, `n_s ≥ 1`.
    pub fn from_columns(n: usize, n_s: usize, data: Vec<f64>, provenance: Provenance, seed: u64) -> Result<Self> {
        if n_s == 0 {
            return Err(Error::InvalidParameter("sample count must be at least 1".into()));
        }
        if data.len() != n * n_s {
            return Err(Error::DimensionMismatch { expected: n * n_s, got: data.len() });
        }
        if let Some(p) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { row: p % n.max(1), col: p / n.max(1) });
        }
        Ok(Self { n, n_s, data, provenance, seed })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn n_s(&self) -> usize {
        self.n_s
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.data[j * self.n..(j + 1) * self.n]
    }

    pub fn columns(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.n.max(1)).take(self.n_s)
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        for v in [self.n as u64, self.n_s as u64, self.seed, self.provenance.code()] {
            w.write_all(&v.to_le_bytes())?;
        }
        for v in &self.data {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Parse("not a sample matrix file".into()));
        }
        let mut word = [0u8; 8];
        let mut header = [0u64; 4];
        for h in &mut header {
            r.read_exact(&mut word)?;
            *h = u64::from_le_bytes(word);
        }
        let (n, n_s) = (header[0] as usize, header[1] as usize);
        let mut data = vec![0.0; n * n_s];
        for v in &mut data {
            r.read_exact(&mut word)?;
            *v = f64::from_le_bytes(word);
        }
        Self::from_columns(n, n_s, data, Provenance::from_code(header[3])?, header[2])
    }

    pub fn write_file(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_to(std::io::BufWriter::new(std::fs::File::create(path)?))
    }

    pub fn read_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

/// Checks `Q = GᵀG + HᵀH` entrywise to `1e-12` relative to the largest
/// entry of `Q`.
pub fn check_factorization(g: &SparseRectMatrix, h: &SparseRectMatrix, q: &SparseSymMatrix) -> Result<()> {
    let n = q.n();
    if g.cols() != n || h.cols() != n {
        return Err(Error::DimensionMismatch { expected: n, got: g.cols().max(h.cols()) });
    }
    let mut t = g.gram_triplets();
    t.extend(h.gram_triplets());
    let sum = SparseSymMatrix::from_triplets_general(n, &t)?;
    let scale = q.values().iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    let mut worst = 0.0f64;
    for (i, j, v) in q.triplets() {
        worst = worst.max((v - sum.get(i, j).unwrap_or(0.0)).abs());
    }
    for (i, j, v) in sum.triplets() {
        if q.get(i, j).is_none() {
            worst = worst.max(v.abs());
        }
    }
    if worst > 1e-12 * scale {
        return Err(Error::InvalidParameter(format!("Q differs from GᵀG + HᵀH by {worst:e}")));
    }
    Ok(())
}

/// Draws `x = Q⁻¹(Gᵀz₁ + Hᵀz₂)` per column with PCG. With `verify`, the
/// identity `Q = GᵀG + HᵀH` is checked first.
pub fn sample_gmrf_pcg(
    g: &SparseRectMatrix,
    h: &SparseRectMatrix,
    q: &SparseSymMatrix,
    n_s: usize,
    seed: u64,
    cfg: &PcgConfig,
    verify: bool,
) -> Result<SampleMatrix> {
    let n = q.n();
    if verify {
        check_factorization(g, h, q)?;
    } else if g.cols() != n || h.cols() != n {
        return Err(Error::DimensionMismatch { expected: n, got: g.cols().max(h.cols()) });
    }
    cfg.validate()?;
    let pre = PreparedPreconditioner::new(q, cfg.preconditioner)?;
    let cols: Vec<Vec<f64>> = (0..n_s)
        .into_par_iter()
        .map(|j| {
            let mut s = ColumnStream::new(seed, j as u64);
            let mut z1 = vec![0.0; g.rows()];
            let mut z2 = vec![0.0; h.rows()];
            s.fill_normal(&mut z1);
            s.fill_normal(&mut z2);
            let mut b = g.mul_t_vec(&z1)?;
            for (bi, v) in b.iter_mut().zip(h.mul_t_vec(&z2)?) {
                *bi += v;
            }
            Ok(pcg_solve_with(q, &b, cfg, &pre, None)?.x)
        })
        .collect::<Result<_>>()?;
    SampleMatrix::from_columns(n, n_s, cols.concat(), Provenance::GmrfPcg, seed)
}

/// Draws `x = Pᵀ L⁻ᵀ z` per column, exact `N(0, Q⁻¹)` samples.
pub fn sample_gmrf_chol(l: &CholFactor, n_s: usize, seed: u64) -> Result<SampleMatrix> {
    let n = l.n();
    let perm = l.symbolic().perm();
    let cols: Vec<Vec<f64>> = (0..n_s)
        .into_par_iter()
        .map(|j| {
            let mut s = ColumnStream::new(seed, j as u64);
            let mut z = vec![0.0; n];
            s.fill_normal(&mut z);
            l.solve_upper_in_place(&mut z);
            perm.apply_inverse(&z)
        })
        .collect();
    SampleMatrix::from_columns(n, n_s, cols.concat(), Provenance::GmrfChol, seed)
}

/// Independent ±1 probes.
pub fn rademacher_probes(n: usize, n_s: usize, seed: u64) -> Result<SampleMatrix> {
    let cols: Vec<Vec<f64>> = (0..n_s)
        .into_par_iter()
        .map(|j| {
            let mut s = ColumnStream::new(seed, j as u64);
            (0..n).map(|_| s.rademacher()).collect()
        })
        .collect();
    SampleMatrix::from_columns(n, n_s, cols.concat(), Provenance::Rademacher, seed)
}

/// The identity basis `e_1, …, e_n` as probes; Hutchinson is exact on it.
pub fn identity_probes(n: usize) -> Result<SampleMatrix> {
    let mut data = vec![0.0; n * n];
    for j in 0..n {
        data[j * n + j] = 1.0;
    }
    SampleMatrix::from_columns(n, n, data, Provenance::Identity, 0)
}

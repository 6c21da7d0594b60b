//! Selected covariance estimates and their CSV representation.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::IndexSet;

/// Per-entry status bits.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct Flags(u8);

impl Flags {
    pub const NONE: Flags = Flags(0);
    /// The estimate is negative (Hutchinson, or a constraint correction).
    pub const NEGATIVE: Flags = Flags(1);
    /// A negative constrained variance was replaced by the MC estimate from
    /// constrained samples.
    pub const MC_REPLACED: Flags = Flags(2);

    pub fn contains(self, other: Flags) -> bool {
        self.0 & other.0 == other.0 && other.0 != 0
    }

    pub fn insert(&mut self, other: Flags) {
        self.0 |= other.0;
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    fn parse(s: &str) -> Result<Flags> {
        let mut f = Flags::NONE;
        for part in s.split('|').filter(|p| !p.is_empty()) {
            match part {
                "negative" => f.insert(Flags::NEGATIVE),
                "mc-replaced" => f.insert(Flags::MC_REPLACED),
                other => return Err(Error::Parse(format!("unknown flag {other}"))),
            }
        }
        Ok(f)
    }
}

impl fmt::Display for Flags {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        if self.contains(Flags::NEGATIVE) {
            parts.push("negative");
        }
        if self.contains(Flags::MC_REPLACED) {
            parts.push("mc-replaced");
        }
        write!(f, "{}", parts.join("|"))
    }
}

/// Analytic uncertainty attached to one estimated entry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntryUncertainty {
    /// The part of the estimate computed exactly (`[Q⁻¹_{I,I}]_{ij}`).
    pub exact_part: f64,
    /// Variance of the estimator.
    pub est_variance: f64,
    /// Confidence interval, available for diagonal entries.
    pub ci: Option<(f64, f64)>,
}

/// Covariance values on an index set, with optional uncertainty records.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectedCov {
    index: IndexSet,
    values: Vec<f64>,
    uncertainty: Vec<Option<EntryUncertainty>>,
    block_id: Vec<Option<usize>>,
    flags: Vec<Flags>,
    method: String,
    n_s: Option<usize>,
    confidence: Option<f64>,
}

impl SelectedCov {
    pub fn new(index: IndexSet, values: Vec<f64>, method: impl Into<String>) -> Self {
        assert_eq!(index.len(), values.len());
        let len = values.len();
        Self {
            index,
            values,
            uncertainty: vec![None; len],
            block_id: vec![None; len],
            flags: vec![Flags::NONE; len],
            method: method.into(),
            n_s: None,
            confidence: None,
        }
    }

    pub fn index(&self) -> &IndexSet {
        &self.index
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn method(&self) -> &str {
        &self.method
    }

    pub fn set_method(&mut self, method: impl Into<String>) {
        self.method = method.into();
    }

    pub fn n_s(&self) -> Option<usize> {
        self.n_s
    }

    pub fn set_n_s(&mut self, n_s: usize) {
        self.n_s = Some(n_s);
    }

    pub fn confidence(&self) -> Option<f64> {
        self.confidence
    }

    pub fn set_confidence(&mut self, alpha: f64) {
        self.confidence = Some(alpha);
    }

    pub fn uncertainty(&self) -> &[Option<EntryUncertainty>] {
        &self.uncertainty
    }

    pub fn set_uncertainty(&mut self, k: usize, u: EntryUncertainty) {
        self.uncertainty[k] = Some(u);
    }

    pub fn block_ids(&self) -> &[Option<usize>] {
        &self.block_id
    }

    pub fn set_block_id(&mut self, k: usize, block: usize) {
        self.block_id[k] = Some(block);
    }

    pub fn flags(&self) -> &[Flags] {
        &self.flags
    }

    pub fn flag(&mut self, k: usize, f: Flags) {
        self.flags[k].insert(f);
    }

    /// Value of `(i, j)` in either orientation.
    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.index.position(i, j).map(|k| self.values[k])
    }

    /// Iterates `((i, j), value)` in index order.
    pub fn iter(&self) -> impl Iterator<Item = ((usize, usize), f64)> + '_ {
        self.index.pairs().iter().copied().zip(self.values.iter().copied())
    }

    /// Diagonal values for nodes `0..n`, if every one is present.
    pub fn diagonal(&self, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|i| self.get(i, i).ok_or(Error::MissingEntry(i, i))).collect()
    }

    /// Flags every negative diagonal value.
    pub fn flag_negative_diagonal(&mut self) {
        for (k, &(i, j)) in self.index.pairs().iter().enumerate() {
            if i == j && self.values[k] < 0.0 {
                self.flags[k].insert(Flags::NEGATIVE);
            }
        }
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        for (k, &(i, j)) in self.index.pairs().iter().enumerate() {
            let u = self.uncertainty[k];
            wr.serialize(CsvRow {
                i,
                j,
                estimate: self.values[k],
                exact_part: u.map(|u| u.exact_part),
                est_variance: u.map(|u| u.est_variance),
                ci_lo: u.and_then(|u| u.ci).map(|c| c.0),
                ci_hi: u.and_then(|u| u.ci).map(|c| c.1),
                method: self.method.clone(),
                n_s: self.n_s,
                block_id: self.block_id[k],
                flags: self.flags[k].to_string(),
            })?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn write_csv_file(&self, path: impl AsRef<Path>) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    /// Reads a CSV produced by [`write_csv`](Self::write_csv). `n` is the
    /// matrix dimension; when `None` it is inferred from the largest index.
    pub fn read_csv<R: Read>(r: R, n: Option<usize>) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let rows: Vec<CsvRow> = rd.deserialize().collect::<std::result::Result<_, _>>()?;
        let dim = n.unwrap_or_else(|| rows.iter().map(|r| r.i.max(r.j) + 1).max().unwrap_or(0));
        let pairs: Vec<_> = rows.iter().map(|r| (r.i, r.j)).collect();
        let index = IndexSet::explicit(dim, &pairs)?;
        if index.len() != rows.len() {
            return Err(Error::Parse("duplicate index pairs in CSV".into()));
        }
        let method = rows.first().map(|r| r.method.clone()).unwrap_or_default();
        let mut out = SelectedCov::new(index, vec![0.0; rows.len()], method);
        out.n_s = rows.first().and_then(|r| r.n_s);
        for row in rows {
            let k = out.index.position(row.i, row.j).expect("pair was inserted");
            out.values[k] = row.estimate;
            if let (Some(e), Some(v)) = (row.exact_part, row.est_variance) {
                let ci = match (row.ci_lo, row.ci_hi) {
                    (Some(a), Some(b)) => Some((a, b)),
                    _ => None,
                };
                out.uncertainty[k] = Some(EntryUncertainty { exact_part: e, est_variance: v, ci });
            }
            out.block_id[k] = row.block_id;
            out.flags[k] = Flags::parse(&row.flags)?;
        }
        Ok(out)
    }

    pub fn read_csv_file(path: impl AsRef<Path>, n: Option<usize>) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?, n)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    i: usize,
    j: usize,
    estimate: f64,
    exact_part: Option<f64>,
    est_variance: Option<f64>,
    ci_lo: Option<f64>,
    ci_hi: Option<f64>,
    method: String,
    n_s: Option<usize>,
    block_id: Option<usize>,
    flags: String,
}

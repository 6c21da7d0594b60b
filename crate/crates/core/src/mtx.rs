//! Matrix Market coordinate format (real, symmetric or general).

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::sparse::{SparseRectMatrix, SparseSymMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Symmetry {
    General,
    Symmetric,
}

struct Parsed {
    rows: usize,
    cols: usize,
    symmetry: Symmetry,
    entries: Vec<(usize, usize, f64)>,
}

fn parse<R: BufRead>(reader: R) -> Result<Parsed> {
    let mut lines = reader.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("empty Matrix Market file".into()))??;
    let tokens: Vec<String> = header.split_whitespace().map(|t| t.to_ascii_lowercase()).collect();
    if tokens.len() < 5 || tokens[0] != "%%matrixmarket" || tokens[1] != "matrix" {
        return Err(Error::Parse(format!("bad header: {header}")));
    }
    if tokens[2] != "coordinate" {
        return Err(Error::Parse("only coordinate format is supported".into()));
    }
    if tokens[3] != "real" && tokens[3] != "integer" {
        return Err(Error::Parse(format!("unsupported field type {}", tokens[3])));
    }
    let symmetry = match tokens[4].as_str() {
        "general" => Symmetry::General,
        "symmetric" => Symmetry::Symmetric,
        other => return Err(Error::Parse(format!("unsupported symmetry {other}"))),
    };
    let mut size: Option<(usize, usize, usize)> = None;
    let mut entries = Vec::new();
    for line in lines {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('%') {
            continue;
        }
        let mut it = t.split_whitespace();
        let mut next_usize = |what: &str| -> Result<usize> {
            it.next()
                .ok_or_else(|| Error::Parse(format!("missing {what} in line '{t}'")))?
                .parse::<usize>()
                .map_err(|e| Error::Parse(format!("{what}: {e}")))
        };
        match size {
            None => {
                let r = next_usize("rows")?;
                let c = next_usize("cols")?;
                let nnz = next_usize("nnz")?;
                size = Some((r, c, nnz));
                entries.reserve(nnz);
            }
            Some((r, c, _)) => {
                let i = next_usize("row")?;
                let j = next_usize("col")?;
                let v: f64 = it
                    .next()
                    .ok_or_else(|| Error::Parse(format!("missing value in line '{t}'")))?
                    .parse()
                    .map_err(|e| Error::Parse(format!("value: {e}")))?;
                if i == 0 || j == 0 || i > r || j > c {
                    return Err(Error::Parse(format!("entry ({i}, {j}) out of range")));
                }
                entries.push((i - 1, j - 1, v));
            }
        }
    }
    let (rows, cols, nnz) = size.ok_or_else(|| Error::Parse("missing size line".into()))?;
    if entries.len() != nnz {
        return Err(Error::Parse(format!("expected {nnz} entries, found {}", entries.len())));
    }
    Ok(Parsed { rows, cols, symmetry, entries })
}

/// Reads a symmetric matrix. A `general` file must list both triangles;
/// only its lower triangle is used.
pub fn read_sym(path: impl AsRef<Path>) -> Result<SparseSymMatrix> {
    read_sym_from(BufReader::new(File::open(path)?))
}

pub fn read_sym_from<R: BufRead>(reader: R) -> Result<SparseSymMatrix> {
    let p = parse(reader)?;
    if p.rows != p.cols {
        return Err(Error::Parse(format!("matrix is {}x{}, not square", p.rows, p.cols)));
    }
    let entries: Vec<_> = match p.symmetry {
        Symmetry::Symmetric => p.entries,
        Symmetry::General => p.entries.into_iter().filter(|e| e.0 >= e.1).collect(),
    };
    SparseSymMatrix::from_triplets_general(p.rows, &entries)
}

pub fn read_rect(path: impl AsRef<Path>) -> Result<SparseRectMatrix> {
    let p = parse(BufReader::new(File::open(path)?))?;
    let mut entries = p.entries;
    if p.symmetry == Symmetry::Symmetric {
        let mirrored: Vec<_> =
            entries.iter().filter(|e| e.0 != e.1).map(|&(i, j, v)| (j, i, v)).collect();
        entries.extend(mirrored);
    }
    SparseRectMatrix::from_triplets(p.rows, p.cols, &entries)
}

pub fn write_sym_to<W: Write>(m: &SparseSymMatrix, w: &mut W) -> Result<()> {
    writeln!(w, "%%MatrixMarket matrix coordinate real symmetric")?;
    writeln!(w, "{} {} {}", m.n(), m.n(), m.nnz())?;
    for (i, j, v) in m.triplets() {
        writeln!(w, "{} {} {:e}", i + 1, j + 1, v)?;
    }
    Ok(())
}

pub fn write_sym(m: &SparseSymMatrix, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_sym_to(m, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn write_rect(m: &SparseRectMatrix, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
    writeln!(w, "{} {} {}", m.rows(), m.cols(), m.nnz())?;
    for (i, j, v) in m.triplets() {
        writeln!(w, "{} {} {:e}", i + 1, j + 1, v)?;
    }
    w.flush()?;
    Ok(())
}

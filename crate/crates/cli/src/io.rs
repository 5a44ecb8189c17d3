//! Dataset loaders and writers.
//!
//! Three layouts are supported, all plain text and all 1-based on disk:
//! MatrixMarket coordinate files (`mm`), UCI bag-of-words docword files
//! (`bow`), and vector update streams (`stream`: a header line with the
//! universe size, then `index value` update lines; `#` starts a comment).

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use residual_sketch::{Error, Result};

pub const MM_HEADER: &str = "%%MatrixMarket matrix coordinate real general";

/// Sparse matrix in triplet form; indices are 0-based in memory.
#[derive(Debug, Clone)]
pub struct SparseMatrix {
    pub rows: usize,
    pub cols: usize,
    pub triplets: Vec<(usize, usize, f64)>,
}

/// Vector turnstile stream over a fixed universe; 0-based in memory.
#[derive(Debug, Clone)]
pub struct VectorStream {
    pub n: usize,
    pub updates: Vec<(usize, f64)>,
}

impl VectorStream {
    /// Dense replay of the stream, the ground-truth companion.
    pub fn replay(&self) -> Vec<f64> {
        let mut x = vec![0.0; self.n];
        for &(i, v) in &self.updates {
            x[i] += v;
        }
        x
    }
}

fn open_lines(path: &Path) -> Result<impl Iterator<Item = std::io::Result<String>>> {
    Ok(BufReader::new(File::open(path)?).lines())
}

fn parse_usize(line: usize, field: &str, token: &str) -> Result<usize> {
    token
        .parse()
        .map_err(|_| Error::parse(line, format!("bad {field} {token:?}")))
}

fn parse_f64(line: usize, field: &str, token: &str) -> Result<f64> {
    let v: f64 = token
        .parse()
        .map_err(|_| Error::parse(line, format!("bad {field} {token:?}")))?;
    if !v.is_finite() {
        return Err(Error::parse(line, format!("non-finite {field} {token:?}")));
    }
    Ok(v)
}

fn to_zero_based(line: usize, field: &str, idx: usize, limit: usize) -> Result<usize> {
    if idx == 0 || idx > limit {
        return Err(Error::parse(
            line,
            format!("{field} {idx} outside 1..={limit}"),
        ));
    }
    Ok(idx - 1)
}

pub fn load_matrixmarket(path: &Path) -> Result<SparseMatrix> {
    let mut lines = open_lines(path)?;
    let header = lines
        .next()
        .ok_or_else(|| Error::parse(1, "empty file"))??;
    if header.trim_end() != MM_HEADER {
        return Err(Error::parse(1, format!("expected {MM_HEADER:?} header")));
    }

    let mut lineno = 1usize;
    let mut size: Option<(usize, usize, usize)> = None;
    let mut triplets = Vec::new();
    for line in lines {
        lineno += 1;
        let line = line?;
        let text = line.trim();
        if text.is_empty() || text.starts_with('%') {
            continue;
        }
        let fields: Vec<&str> = text.split_whitespace().collect();
        match size {
            None => {
                if fields.len() != 3 {
                    return Err(Error::parse(lineno, "size line needs rows cols nnz"));
                }
                let rows = parse_usize(lineno, "row count", fields[0])?;
                let cols = parse_usize(lineno, "column count", fields[1])?;
                let nnz = parse_usize(lineno, "nonzero count", fields[2])?;
                size = Some((rows, cols, nnz));
                triplets.reserve(nnz);
            }
            Some((rows, cols, nnz)) => {
                if triplets.len() == nnz {
                    return Err(Error::parse(
                        lineno,
                        format!("more than the declared {nnz} entries"),
                    ));
                }
                if fields.len() != 3 {
                    return Err(Error::parse(lineno, "entry needs i j value"));
                }
                let i = to_zero_based(
                    lineno,
                    "row index",
                    parse_usize(lineno, "row index", fields[0])?,
                    rows,
                )?;
                let j = to_zero_based(
                    lineno,
                    "column index",
                    parse_usize(lineno, "column index", fields[1])?,
                    cols,
                )?;
                triplets.push((i, j, parse_f64(lineno, "value", fields[2])?));
            }
        }
    }
    let (rows, cols, nnz) =
        size.ok_or_else(|| Error::parse(lineno, "missing size line"))?;
    if triplets.len() != nnz {
        return Err(Error::parse(
            lineno,
            format!("declared {nnz} entries, found {}", triplets.len()),
        ));
    }
    Ok(SparseMatrix { rows, cols, triplets })
}

pub fn write_matrixmarket(path: &Path, m: &SparseMatrix) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{MM_HEADER}")?;
    writeln!(w, "{} {} {}", m.rows, m.cols, m.triplets.len())?;
    for &(i, j, v) in &m.triplets {
        writeln!(w, "{} {} {}", i + 1, j + 1, v)?;
    }
    Ok(())
}

/// UCI bag-of-words docword layout: three header lines D, W, NNZ, then
/// `docID wordID count` with 1-based ids. The entry count must match NNZ.
pub fn load_uci_bow(path: &Path) -> Result<SparseMatrix> {
    let mut lines = open_lines(path)?;
    let mut header = [0usize; 3];
    let mut lineno = 0usize;
    for (slot, name) in header.iter_mut().zip(["D", "W", "NNZ"]) {
        lineno += 1;
        let line = lines
            .next()
            .ok_or_else(|| Error::parse(lineno, format!("missing {name} header line")))??;
        *slot = parse_usize(lineno, name, line.trim())?;
    }
    let [rows, cols, nnz] = header;

    let mut triplets = Vec::with_capacity(nnz);
    for line in lines {
        lineno += 1;
        let line = line?;
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        let fields: Vec<&str> = text.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(Error::parse(lineno, "entry needs docID wordID count"));
        }
        let i = to_zero_based(
            lineno,
            "docID",
            parse_usize(lineno, "docID", fields[0])?,
            rows,
        )?;
        let j = to_zero_based(
            lineno,
            "wordID",
            parse_usize(lineno, "wordID", fields[1])?,
            cols,
        )?;
        triplets.push((i, j, parse_f64(lineno, "count", fields[2])?));
    }
    if triplets.len() != nnz {
        return Err(Error::parse(
            lineno,
            format!("NNZ header says {nnz}, found {} entries", triplets.len()),
        ));
    }
    Ok(SparseMatrix { rows, cols, triplets })
}

pub fn load_vector_stream(path: &Path) -> Result<VectorStream> {
    let mut lineno = 0usize;
    let mut n: Option<usize> = None;
    let mut updates = Vec::new();
    for line in open_lines(path)? {
        lineno += 1;
        let line = line?;
        let text = line.trim();
        if text.is_empty() || text.starts_with('#') {
            continue;
        }
        match n {
            None => n = Some(parse_usize(lineno, "universe size", text)?),
            Some(n) => {
                let fields: Vec<&str> = text.split_whitespace().collect();
                if fields.len() != 2 {
                    return Err(Error::parse(lineno, "update needs index value"));
                }
                let i = to_zero_based(
                    lineno,
                    "index",
                    parse_usize(lineno, "index", fields[0])?,
                    n,
                )?;
                updates.push((i, parse_f64(lineno, "value", fields[1])?));
            }
        }
    }
    let n = n.ok_or_else(|| Error::parse(lineno.max(1), "missing universe size line"))?;
    Ok(VectorStream { n, updates })
}

pub fn write_vector_stream(path: &Path, stream: &VectorStream) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{}", stream.n)?;
    for &(i, v) in &stream.updates {
        writeln!(w, "{} {}", i + 1, v)?;
    }
    Ok(())
}

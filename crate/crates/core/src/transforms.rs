//! Oblivious sketching matrices: CountSketch, dense JL, OSNAP and a dense
//! Gaussian baseline, plus two-stage compositions (JL ∘ CountSketch).
//!
//! A sketch is never stored explicitly. Each column's support is regenerated
//! on demand from a counter-based RNG keyed by (seed, column index), so
//! streaming updates get random access to single columns and two sketches
//! built from the same spec agree bit for bit regardless of query order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::hash::{derive_seed, splitmix64};
use crate::linalg::DenseMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SketchFamily {
    /// One ±1 per column in a random row.
    CountSketch,
    /// Dense ±1/√m Rademacher entries.
    DenseJL,
    /// s distinct rows per column with ±1/√s entries.
    Osnap(usize),
    /// Dense i.i.d. N(0, 1/m) entries; the classical baseline.
    Gaussian,
}

impl SketchFamily {
    fn token(&self) -> &'static str {
        match self {
            SketchFamily::CountSketch => "countsketch",
            SketchFamily::DenseJL => "jl",
            SketchFamily::Osnap(_) => "osnap",
            SketchFamily::Gaussian => "gaussian",
        }
    }
}

/// Everything needed to reconstruct a sketch: family, shape and seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SketchSpec {
    pub family: SketchFamily,
    /// Target (sketched) dimension m.
    pub out_dim: usize,
    /// Input dimension n.
    pub in_dim: usize,
    pub seed: u64,
}

impl SketchSpec {
    pub fn new(family: SketchFamily, out_dim: usize, in_dim: usize, seed: u64) -> Self {
        SketchSpec {
            family,
            out_dim,
            in_dim,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.out_dim == 0 || self.in_dim == 0 {
            return Err(Error::InvalidSpec(format!(
                "dimensions must be positive, got {}x{}",
                self.out_dim, self.in_dim
            )));
        }
        if let SketchFamily::Osnap(s) = self.family {
            if s == 0 || s > self.out_dim {
                return Err(Error::InvalidSpec(format!(
                    "osnap sparsity {s} outside [1, m={}]",
                    self.out_dim
                )));
            }
        }
        Ok(())
    }

    /// Parses the textual record `family,m,n,s,seed`; `line` is used in errors.
    pub fn parse_record(line: usize, s: &str) -> Result<Self> {
        let fields: Vec<&str> = s.trim().split(',').collect();
        if fields.len() != 5 {
            return Err(Error::parse(
                line,
                format!("expected family,m,n,s,seed, got {} fields", fields.len()),
            ));
        }
        let num = |field: &str, what: &str| -> Result<usize> {
            field
                .trim()
                .parse()
                .map_err(|_| Error::parse(line, format!("bad {what}: {field:?}")))
        };
        let m = num(fields[1], "out dim")?;
        let n = num(fields[2], "in dim")?;
        let s_param = num(fields[3], "sparsity")?;
        let seed: u64 = fields[4]
            .trim()
            .parse()
            .map_err(|_| Error::parse(line, format!("bad seed: {:?}", fields[4])))?;
        let family = match fields[0].trim() {
            "countsketch" => SketchFamily::CountSketch,
            "jl" => SketchFamily::DenseJL,
            "osnap" => SketchFamily::Osnap(s_param),
            "gaussian" => SketchFamily::Gaussian,
            other => {
                return Err(Error::parse(line, format!("unknown family {other:?}")));
            }
        };
        let spec = SketchSpec::new(family, m, n, seed);
        spec.validate()?;
        Ok(spec)
    }

    /// Inverse of [`SketchSpec::parse_record`].
    pub fn record(&self) -> String {
        let s = match self.family {
            SketchFamily::Osnap(s) => s,
            _ => 0,
        };
        format!(
            "{},{},{},{},{}",
            self.family.token(),
            self.out_dim,
            self.in_dim,
            s,
            self.seed
        )
    }
}

impl std::str::FromStr for SketchSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SketchSpec::parse_record(0, s)
    }
}

impl std::fmt::Display for SketchSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.record())
    }
}

/// A materializable sketch; columns are regenerated lazily from the key.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeededSketch {
    spec: SketchSpec,
    key: [u8; 32],
}

/// Deterministic construction of a sketch from its spec.
pub fn build_sketch(spec: SketchSpec) -> Result<SeededSketch> {
    spec.validate()?;
    let mut state = derive_seed(spec.seed, 0x736b6574);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    Ok(SeededSketch { spec, key })
}

impl SeededSketch {
    pub fn spec(&self) -> &SketchSpec {
        &self.spec
    }

    pub fn out_dim(&self) -> usize {
        self.spec.out_dim
    }

    pub fn in_dim(&self) -> usize {
        self.spec.in_dim
    }

    /// Support of column `i` as (row, value) pairs, written into `out`.
    ///
    /// Each column draws from its own RNG stream, so access order is free.
    pub fn column_into(&self, i: usize, out: &mut Vec<(usize, f64)>) {
        debug_assert!(i < self.spec.in_dim, "column {i} out of range");
        out.clear();
        let mut rng = ChaCha8Rng::from_seed(self.key);
        rng.set_stream(i as u64);
        let m = self.spec.out_dim;
        match self.spec.family {
            SketchFamily::CountSketch => {
                let r = rng.random_range(0..m);
                let v = if rng.random::<bool>() { 1.0 } else { -1.0 };
                out.push((r, v));
            }
            SketchFamily::DenseJL => {
                let w = 1.0 / (m as f64).sqrt();
                for r in 0..m {
                    let v = if rng.random::<bool>() { w } else { -w };
                    out.push((r, v));
                }
            }
            SketchFamily::Osnap(s) => {
                let w = 1.0 / (s as f64).sqrt();
                let mut rows = rand::seq::index::sample(&mut rng, m, s).into_vec();
                rows.sort_unstable();
                for r in rows {
                    let v = if rng.random::<bool>() { w } else { -w };
                    out.push((r, v));
                }
            }
            SketchFamily::Gaussian => {
                let scale = 1.0 / (m as f64).sqrt();
                for r in 0..m {
                    let z: f64 = rng.sample(StandardNormal);
                    out.push((r, z * scale));
                }
            }
        }
    }

    pub fn column(&self, i: usize) -> Vec<(usize, f64)> {
        let mut out = Vec::new();
        self.column_into(i, &mut out);
        out
    }

    /// Dense m×n form; intended for oracles and small cases only.
    pub fn materialize(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.spec.out_dim, self.spec.in_dim);
        let mut col = Vec::new();
        for i in 0..self.spec.in_dim {
            self.column_into(i, &mut col);
            for &(r, v) in &col {
                out.set(r, i, v);
            }
        }
        out
    }

    /// S·A. Cost is (column support)·nnz(A) for sparse families; rows of A
    /// that are mostly zero are scattered rather than swept.
    pub fn apply_left(&self, a: &DenseMatrix) -> Result<DenseMatrix> {
        if self.spec.in_dim != a.rows() {
            return Err(Error::InvalidInput(format!(
                "sketch expects {} input rows, matrix has {}",
                self.spec.in_dim,
                a.rows()
            )));
        }
        let d = a.cols();
        let mut out = DenseMatrix::zeros(self.spec.out_dim, d);
        let mut col = Vec::new();
        let mut nz: Vec<(usize, f64)> = Vec::new();
        for i in 0..a.rows() {
            let row = a.row(i);
            nz.clear();
            nz.extend(
                row.iter()
                    .enumerate()
                    .filter(|&(_, &v)| v != 0.0)
                    .map(|(j, &v)| (j, v)),
            );
            if nz.is_empty() {
                continue;
            }
            self.column_into(i, &mut col);
            if nz.len() * 4 <= d {
                for &(r, w) in &col {
                    for &(j, v) in &nz {
                        out.add_at(r, j, w * v);
                    }
                }
            } else {
                for &(r, w) in &col {
                    let orow = out.row_mut(r);
                    for (o, &v) in orow.iter_mut().zip(row) {
                        *o += w * v;
                    }
                }
            }
        }
        Ok(out)
    }

    /// A·Tᵀ where T is this sketch materialized (out_dim × in_dim); the
    /// result has shape (A.rows × out_dim).
    pub fn apply_right(&self, a: &DenseMatrix) -> Result<DenseMatrix> {
        if self.spec.in_dim != a.cols() {
            return Err(Error::InvalidInput(format!(
                "sketch expects {} input columns, matrix has {}",
                self.spec.in_dim,
                a.cols()
            )));
        }
        Ok(self.apply_left(&a.transpose())?.transpose())
    }
}

/// Two-stage sketch S = outer · inner, applied inner-first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComposedSketch {
    outer: SeededSketch,
    inner: SeededSketch,
}

/// Chains two sketches; `outer.in_dim` must equal `inner.out_dim`.
pub fn compose(outer: SeededSketch, inner: SeededSketch) -> Result<ComposedSketch> {
    if outer.in_dim() != inner.out_dim() {
        return Err(Error::InvalidSpec(format!(
            "outer input dim {} does not match inner output dim {}",
            outer.in_dim(),
            inner.out_dim()
        )));
    }
    Ok(ComposedSketch { outer, inner })
}

/// The default composition used by the low-rank estimator: a dense JL outer
/// stage of size `m × inner_dim` over a CountSketch inner stage of size
/// `inner_dim × n`. Stage seeds are derived independently from `seed`.
pub fn build_composed(m: usize, inner_dim: usize, n: usize, seed: u64) -> Result<ComposedSketch> {
    let outer = build_sketch(SketchSpec::new(
        SketchFamily::DenseJL,
        m,
        inner_dim,
        derive_seed(seed, 1),
    ))?;
    let inner = build_sketch(SketchSpec::new(
        SketchFamily::CountSketch,
        inner_dim,
        n,
        derive_seed(seed, 2),
    ))?;
    compose(outer, inner)
}

impl ComposedSketch {
    pub fn outer(&self) -> &SeededSketch {
        &self.outer
    }

    pub fn inner(&self) -> &SeededSketch {
        &self.inner
    }

    pub fn out_dim(&self) -> usize {
        self.outer.out_dim()
    }

    pub fn in_dim(&self) -> usize {
        self.inner.in_dim()
    }

    pub fn apply_left(&self, a: &DenseMatrix) -> Result<DenseMatrix> {
        self.outer.apply_left(&self.inner.apply_left(a)?)
    }

    pub fn apply_right(&self, a: &DenseMatrix) -> Result<DenseMatrix> {
        self.outer.apply_right(&self.inner.apply_right(a)?)
    }
}

/// Either a single-stage or a composed sketch, as used by the estimators.
#[derive(Debug, Clone, PartialEq)]
pub enum SketchOperator {
    Plain(SeededSketch),
    Composed(ComposedSketch),
}

impl From<SeededSketch> for SketchOperator {
    fn from(s: SeededSketch) -> Self {
        SketchOperator::Plain(s)
    }
}

impl From<ComposedSketch> for SketchOperator {
    fn from(c: ComposedSketch) -> Self {
        SketchOperator::Composed(c)
    }
}

impl SketchOperator {
    pub fn out_dim(&self) -> usize {
        match self {
            SketchOperator::Plain(s) => s.out_dim(),
            SketchOperator::Composed(c) => c.out_dim(),
        }
    }

    pub fn in_dim(&self) -> usize {
        match self {
            SketchOperator::Plain(s) => s.in_dim(),
            SketchOperator::Composed(c) => c.in_dim(),
        }
    }

    /// The stage hit by every stream update: the sketch itself, or the
    /// sparse inner stage of a composition.
    pub fn stream_stage(&self) -> &SeededSketch {
        match self {
            SketchOperator::Plain(s) => s,
            SketchOperator::Composed(c) => c.inner(),
        }
    }

    /// The dense stage deferred to estimation time, if any.
    pub fn outer_stage(&self) -> Option<&SeededSketch> {
        match self {
            SketchOperator::Plain(_) => None,
            SketchOperator::Composed(c) => Some(c.outer()),
        }
    }

    pub fn apply_left(&self, a: &DenseMatrix) -> Result<DenseMatrix> {
        match self {
            SketchOperator::Plain(s) => s.apply_left(a),
            SketchOperator::Composed(c) => c.apply_left(a),
        }
    }

    pub fn apply_right(&self, a: &DenseMatrix) -> Result<DenseMatrix> {
        match self {
            SketchOperator::Plain(s) => s.apply_right(a),
            SketchOperator::Composed(c) => c.apply_right(a),
        }
    }

    /// One-line descriptor used in snapshot headers.
    pub fn descriptor(&self) -> String {
        match self {
            SketchOperator::Plain(s) => format!("plain {}", s.spec().record()),
            SketchOperator::Composed(c) => format!(
                "composed {} {}",
                c.outer().spec().record(),
                c.inner().spec().record()
            ),
        }
    }

    /// Parses [`SketchOperator::descriptor`] output; `line` is used in errors.
    pub fn parse_descriptor(line: usize, s: &str) -> Result<Self> {
        let mut parts = s.trim().split_whitespace();
        match parts.next() {
            Some("plain") => {
                let rec = parts
                    .next()
                    .ok_or_else(|| Error::parse(line, "missing sketch record"))?;
                if parts.next().is_some() {
                    return Err(Error::parse(line, "trailing fields after plain record"));
                }
                Ok(build_sketch(SketchSpec::parse_record(line, rec)?)?.into())
            }
            Some("composed") => {
                let outer_rec = parts
                    .next()
                    .ok_or_else(|| Error::parse(line, "missing outer record"))?;
                let inner_rec = parts
                    .next()
                    .ok_or_else(|| Error::parse(line, "missing inner record"))?;
                if parts.next().is_some() {
                    return Err(Error::parse(line, "trailing fields after composed record"));
                }
                let outer = build_sketch(SketchSpec::parse_record(line, outer_rec)?)?;
                let inner = build_sketch(SketchSpec::parse_record(line, inner_rec)?)?;
                Ok(compose(outer, inner)?.into())
            }
            other => Err(Error::parse(
                line,
                format!("expected plain/composed, got {other:?}"),
            )),
        }
    }
}

/// S·A for any operator kind.
pub fn apply_left(sk: &SketchOperator, a: &DenseMatrix) -> Result<DenseMatrix> {
    sk.apply_left(a)
}

/// A·Tᵀ (T materialized as out_dim × in_dim) for any operator kind.
pub fn apply_right(a: &DenseMatrix, sk: &SketchOperator) -> Result<DenseMatrix> {
    sk.apply_right(a)
}

//! Turnstile maintenance of the bilinear sketch S·A·T and the rank-k
//! residual estimator ‖SAT − [SAT]_k‖_F.
//!
//! Each update (i, j, v) scatters v through column i of the left sketch and
//! column j of the right sketch into a small accumulator. For composed
//! sketches only the sparse inner stages run per update; the dense outer
//! stages are applied once at estimation time, keeping updates O(s²) and the
//! total cost at nnz(A) plus a polynomial in the sketch size.

use std::io::{BufRead, Write};
use std::time::{Duration, Instant};

use crate::error::{Error, Result};
use crate::hash::derive_seed;
use crate::linalg::{rank_k_residual, DenseMatrix};
use crate::transforms::{build_composed, build_sketch, SketchFamily, SketchOperator, SketchSpec};

/// Target dimension policy m = ceil(c_m · k/ε²) with c_m = 1.
pub fn sketch_dim(k: usize, eps: f64) -> Result<usize> {
    sketch_dim_with(k, eps, 1.0)
}

pub fn sketch_dim_with(k: usize, eps: f64, c_m: f64) -> Result<usize> {
    check_policy_params(k, eps, c_m)?;
    Ok(ceil_guarded(c_m * k as f64 / (eps * eps)))
}

/// Inner CountSketch dimension ceil(c_in · k²/ε²) for the (k, ε) policy.
pub fn inner_dim(k: usize, eps: f64) -> Result<usize> {
    inner_dim_with(k, eps, 1.0)
}

pub fn inner_dim_with(k: usize, eps: f64, c_in: f64) -> Result<usize> {
    check_policy_params(k, eps, c_in)?;
    Ok(ceil_guarded(c_in * (k * k) as f64 / (eps * eps)))
}

/// Inner dimension when m is chosen directly: m² capped at 4096.
pub fn default_inner_dim(m: usize) -> usize {
    m.saturating_mul(m).min(4096).max(m)
}

fn check_policy_params(k: usize, eps: f64, c: f64) -> Result<()> {
    if k == 0 {
        return Err(Error::InvalidInput("need k ≥ 1".into()));
    }
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::InvalidInput(format!("need ε ∈ (0,1], got {eps}")));
    }
    if !(c > 0.0) {
        return Err(Error::InvalidInput(format!("need a positive constant, got {c}")));
    }
    Ok(())
}

fn ceil_guarded(raw: f64) -> usize {
    ((raw * (1.0 - 1e-12)).ceil() as usize).max(1)
}

/// The sketch S·A·T accumulated from single-entry updates.
///
/// The state is linear in the update multiset: update order, sharding and
/// merging cannot change the result beyond f64 rounding.
#[derive(Debug, Clone)]
pub struct BilinearSketchState {
    left: SketchOperator,
    right: SketchOperator,
    /// Inner-stage accumulator, left stream dim × right stream dim.
    acc: DenseMatrix,
    lbuf: Vec<(usize, f64)>,
    rbuf: Vec<(usize, f64)>,
}

impl BilinearSketchState {
    /// State over two single-stage sketches built from their specs.
    pub fn init(left_spec: SketchSpec, right_spec: SketchSpec) -> Result<Self> {
        Self::with_operators(
            build_sketch(left_spec)?.into(),
            build_sketch(right_spec)?.into(),
        )
    }

    pub fn with_operators(left: SketchOperator, right: SketchOperator) -> Result<Self> {
        let acc = DenseMatrix::zeros(
            left.stream_stage().out_dim(),
            right.stream_stage().out_dim(),
        );
        Ok(BilinearSketchState {
            left,
            right,
            acc,
            lbuf: Vec::new(),
            rbuf: Vec::new(),
        })
    }

    /// JL∘CountSketch state for an n×d input with target dimension m per
    /// side and the default inner dimension; stage seeds derive from `seed`.
    pub fn composed(n: usize, d: usize, m: usize, seed: u64) -> Result<Self> {
        let inner = default_inner_dim(m);
        let left = build_composed(m, inner, n, derive_seed(seed, 0xa))?;
        let right = build_composed(m, inner, d, derive_seed(seed, 0xb))?;
        Self::with_operators(left.into(), right.into())
    }

    /// Single-family state for an n×d input, same family both sides.
    pub fn plain(family: SketchFamily, n: usize, d: usize, m: usize, seed: u64) -> Result<Self> {
        let left = build_sketch(SketchSpec::new(family, m, n, derive_seed(seed, 0xa)))?;
        let right = build_sketch(SketchSpec::new(family, m, d, derive_seed(seed, 0xb)))?;
        Self::with_operators(left.into(), right.into())
    }

    pub fn left(&self) -> &SketchOperator {
        &self.left
    }

    pub fn right(&self) -> &SketchOperator {
        &self.right
    }

    /// The raw accumulator (inner stages only for composed sketches).
    pub fn acc(&self) -> &DenseMatrix {
        &self.acc
    }

    /// Input shape (n, d) this state sketches.
    pub fn input_dims(&self) -> (usize, usize) {
        (self.left.in_dim(), self.right.in_dim())
    }

    /// Applies the turnstile update A[i, j] += v.
    pub fn update(&mut self, i: usize, j: usize, v: f64) -> Result<()> {
        if i >= self.left.in_dim() || j >= self.right.in_dim() {
            return Err(Error::InvalidInput(format!(
                "entry ({i}, {j}) outside {}x{}",
                self.left.in_dim(),
                self.right.in_dim()
            )));
        }
        if !v.is_finite() {
            return Err(Error::InvalidInput(format!("non-finite update value {v}")));
        }
        if v == 0.0 {
            return Ok(());
        }
        self.left.stream_stage().column_into(i, &mut self.lbuf);
        self.right.stream_stage().column_into(j, &mut self.rbuf);
        for &(r, wl) in &self.lbuf {
            let scaled = v * wl;
            let row = self.acc.row_mut(r);
            for &(c, wr) in &self.rbuf {
                row[c] += scaled * wr;
            }
        }
        Ok(())
    }

    /// Adds a peer state built from identical specs and seeds.
    pub fn merge_from(&mut self, other: &Self) -> Result<()> {
        if self.left != other.left || self.right != other.right {
            return Err(Error::Incompatible(
                "bilinear states have different sketch specs or seeds".into(),
            ));
        }
        self.acc = self.acc.add(&other.acc)?;
        Ok(())
    }

    /// merge_from as a pure combinator.
    pub fn merge(a: &Self, b: &Self) -> Result<Self> {
        let mut out = a.clone();
        out.merge_from(b)?;
        Ok(out)
    }

    /// S·A·T with any deferred outer stages applied.
    pub fn finalized(&self) -> Result<DenseMatrix> {
        let mut cur = match self.left.outer_stage() {
            Some(outer) => outer.apply_left(&self.acc)?,
            None => self.acc.clone(),
        };
        if let Some(outer) = self.right.outer_stage() {
            cur = outer.apply_right(&cur)?;
        }
        Ok(cur)
    }

    /// ‖SAT − [SAT]_k‖_F, the estimator for ‖A − A_k‖_F.
    pub fn estimate_residual(&self, k: usize) -> Result<f64> {
        rank_k_residual(&self.finalized()?, k)
    }

    /// Text header (operators, accumulator shape) followed by the
    /// accumulator as little-endian f64.
    pub fn write_snapshot<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "bilinear-sketch v1")?;
        writeln!(w, "left {}", self.left.descriptor())?;
        writeln!(w, "right {}", self.right.descriptor())?;
        writeln!(w, "acc {} {}", self.acc.rows(), self.acc.cols())?;
        for &v in self.acc.data() {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    /// Inverse of [`BilinearSketchState::write_snapshot`].
    pub fn read_snapshot<R: BufRead>(r: &mut R) -> Result<Self> {
        let mut read_line = |line_no: usize| -> Result<String> {
            let mut s = String::new();
            if r.read_line(&mut s)? == 0 {
                return Err(Error::parse(line_no, "unexpected end of snapshot"));
            }
            Ok(s.trim_end().to_string())
        };
        let magic = read_line(1)?;
        if magic != "bilinear-sketch v1" {
            return Err(Error::parse(1, format!("bad magic {magic:?}")));
        }
        let left_line = read_line(2)?;
        let left = SketchOperator::parse_descriptor(
            2,
            left_line
                .strip_prefix("left ")
                .ok_or_else(|| Error::parse(2, "expected 'left <descriptor>'"))?,
        )?;
        let right_line = read_line(3)?;
        let right = SketchOperator::parse_descriptor(
            3,
            right_line
                .strip_prefix("right ")
                .ok_or_else(|| Error::parse(3, "expected 'right <descriptor>'"))?,
        )?;
        let acc_line = read_line(4)?;
        let dims: Vec<&str> = acc_line
            .strip_prefix("acc ")
            .ok_or_else(|| Error::parse(4, "expected 'acc <rows> <cols>'"))?
            .split_whitespace()
            .collect();
        if dims.len() != 2 {
            return Err(Error::parse(4, "expected 'acc <rows> <cols>'"));
        }
        let rows: usize = dims[0]
            .parse()
            .map_err(|_| Error::parse(4, format!("bad row count {:?}", dims[0])))?;
        let cols: usize = dims[1]
            .parse()
            .map_err(|_| Error::parse(4, format!("bad col count {:?}", dims[1])))?;
        if rows != left.stream_stage().out_dim() || cols != right.stream_stage().out_dim() {
            return Err(Error::parse(
                4,
                format!(
                    "accumulator {rows}x{cols} does not match sketch dims {}x{}",
                    left.stream_stage().out_dim(),
                    right.stream_stage().out_dim()
                ),
            ));
        }
        let mut bytes = vec![0u8; rows * cols * 8];
        r.read_exact(&mut bytes)?;
        let data: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::parse(5, "non-finite accumulator value"));
        }
        let acc = DenseMatrix::from_row_major(rows, cols, data)?;
        Ok(BilinearSketchState {
            left,
            right,
            acc,
            lbuf: Vec::new(),
            rbuf: Vec::new(),
        })
    }
}

/// Result of a one-shot batch run: the estimate plus phase timings.
#[derive(Debug, Clone)]
pub struct BatchEstimate {
    pub estimate: f64,
    /// Wall time of the update loop over all nonzeros.
    pub sketch_time: Duration,
    /// Wall time of outer-stage application plus the small SVD.
    pub finalize_time: Duration,
}

/// Streams `triplets` through a fresh state and estimates the rank-k
/// residual, timing the two phases separately.
pub fn batch_estimate<I>(
    triplets: I,
    k: usize,
    left: SketchOperator,
    right: SketchOperator,
) -> Result<BatchEstimate>
where
    I: IntoIterator<Item = (usize, usize, f64)>,
{
    let mut st = BilinearSketchState::with_operators(left, right)?;
    let t0 = Instant::now();
    for (i, j, v) in triplets {
        st.update(i, j, v)?;
    }
    let sketch_time = t0.elapsed();
    let t1 = Instant::now();
    let estimate = st.estimate_residual(k)?;
    Ok(BatchEstimate {
        estimate,
        sketch_time,
        finalize_time: t1.elapsed(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transforms::{apply_left, apply_right};
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DenseMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
    }

    fn stream_all(st: &mut BilinearSketchState, a: &DenseMatrix, order_seed: Option<u64>) {
        let mut entries: Vec<(usize, usize, f64)> = a.iter_nonzero().collect();
        if let Some(seed) = order_seed {
            entries.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        }
        for (i, j, v) in entries {
            st.update(i, j, v).unwrap();
        }
    }

    #[test]
    fn fresh_state_estimates_zero() {
        let st = BilinearSketchState::plain(SketchFamily::CountSketch, 20, 30, 8, 1).unwrap();
        assert_eq!(st.estimate_residual(0).unwrap(), 0.0);
        assert_eq!(st.estimate_residual(5).unwrap(), 0.0);
    }

    #[test]
    fn init_is_deterministic_in_seeds() {
        let spec_l = SketchSpec::new(SketchFamily::Osnap(2), 8, 20, 4);
        let spec_r = SketchSpec::new(SketchFamily::CountSketch, 8, 30, 5);
        let mut a = BilinearSketchState::init(spec_l, spec_r).unwrap();
        let mut b = BilinearSketchState::init(spec_l, spec_r).unwrap();
        let m = random_matrix(20, 30, 7);
        stream_all(&mut a, &m, None);
        stream_all(&mut b, &m, None);
        assert_eq!(a.acc().data(), b.acc().data());
    }

    #[test]
    fn merge_of_twin_states_doubles() {
        let mut a = BilinearSketchState::plain(SketchFamily::CountSketch, 15, 15, 6, 3).unwrap();
        let m = random_matrix(15, 15, 2);
        stream_all(&mut a, &m, None);
        let b = a.clone();
        let merged = BilinearSketchState::merge(&a, &b).unwrap();
        assert_eq!(merged.acc().data(), a.acc().scale(2.0).data());
    }

    #[test]
    fn single_countsketch_update_is_one_signed_cell() {
        let mut st = BilinearSketchState::plain(SketchFamily::CountSketch, 40, 50, 8, 11).unwrap();
        st.update(13, 29, 2.5).unwrap();
        let nonzero: Vec<f64> = st
            .acc()
            .data()
            .iter()
            .copied()
            .filter(|&v| v != 0.0)
            .collect();
        assert_eq!(nonzero.len(), 1);
        assert_eq!(nonzero[0].abs(), 2.5);
    }

    #[test]
    fn zero_update_is_a_noop() {
        let mut st = BilinearSketchState::plain(SketchFamily::Gaussian, 10, 10, 4, 9).unwrap();
        let before = st.acc().clone();
        st.update(3, 3, 0.0).unwrap();
        assert_eq!(st.acc(), &before);
    }

    #[test]
    fn update_validates_inputs() {
        let mut st = BilinearSketchState::plain(SketchFamily::CountSketch, 10, 12, 4, 1).unwrap();
        assert!(st.update(10, 0, 1.0).is_err());
        assert!(st.update(0, 12, 1.0).is_err());
        assert!(st.update(0, 0, f64::INFINITY).is_err());
    }

    #[test]
    fn streaming_matches_offline_product() {
        let a = random_matrix(30, 20, 6);
        for family in [
            SketchFamily::CountSketch,
            SketchFamily::DenseJL,
            SketchFamily::Osnap(2),
            SketchFamily::Gaussian,
        ] {
            let mut st = BilinearSketchState::plain(family, 30, 20, 7, 17).unwrap();
            stream_all(&mut st, &a, Some(99));
            let offline =
                apply_left(st.left(), &apply_right(&a, st.right()).unwrap()).unwrap();
            assert!(
                st.acc().max_abs_diff(&offline) < 1e-10,
                "{family:?} diverges from offline product"
            );
        }
    }

    #[test]
    fn composed_streaming_matches_offline_product() {
        let a = random_matrix(40, 25, 8);
        let mut st = BilinearSketchState::composed(40, 25, 6, 23).unwrap();
        stream_all(&mut st, &a, Some(3));
        let offline = apply_left(st.left(), &apply_right(&a, st.right()).unwrap()).unwrap();
        assert!(st.finalized().unwrap().max_abs_diff(&offline) < 1e-10);
    }

    #[test]
    fn merge_identity_and_commutativity() {
        let mut a = BilinearSketchState::plain(SketchFamily::Osnap(2), 12, 12, 5, 31).unwrap();
        let zero = BilinearSketchState::plain(SketchFamily::Osnap(2), 12, 12, 5, 31).unwrap();
        stream_all(&mut a, &random_matrix(12, 12, 4), None);
        let via_zero = BilinearSketchState::merge(&a, &zero).unwrap();
        assert_eq!(via_zero.acc().data(), a.acc().data());

        let mut b = zero.clone();
        stream_all(&mut b, &random_matrix(12, 12, 5), None);
        let ab = BilinearSketchState::merge(&a, &b).unwrap();
        let ba = BilinearSketchState::merge(&b, &a).unwrap();
        assert!(ab.acc().max_abs_diff(ba.acc()) < 1e-12);
    }

    #[test]
    fn merge_rejects_mismatched_seeds() {
        let a = BilinearSketchState::plain(SketchFamily::CountSketch, 10, 10, 4, 1).unwrap();
        let b = BilinearSketchState::plain(SketchFamily::CountSketch, 10, 10, 4, 2).unwrap();
        assert!(BilinearSketchState::merge(&a, &b).is_err());
    }

    #[test]
    fn split_stream_merge_equals_whole() {
        let a = random_matrix(25, 18, 12);
        let build =
            || BilinearSketchState::plain(SketchFamily::DenseJL, 25, 18, 6, 77).unwrap();
        let mut whole = build();
        stream_all(&mut whole, &a, None);
        let mut first = build();
        let mut second = build();
        for (t, (i, j, v)) in a.iter_nonzero().enumerate() {
            if t % 2 == 0 {
                first.update(i, j, v).unwrap();
            } else {
                second.update(i, j, v).unwrap();
            }
        }
        first.merge_from(&second).unwrap();
        assert!(first.acc().max_abs_diff(whole.acc()) < 1e-10);
    }

    #[test]
    fn exact_low_rank_input_has_negligible_residual() {
        let k = 3;
        let factor_l = random_matrix(30, k, 1);
        let factor_r = random_matrix(k, 20, 2);
        let a = factor_l.matmul(&factor_r).unwrap();
        for seed in [5, 6, 7] {
            let mut st = BilinearSketchState::composed(30, 20, 10, seed).unwrap();
            stream_all(&mut st, &a, None);
            let est = st.estimate_residual(k).unwrap();
            assert!(est <= 1e-6 * a.frobenius_norm(), "est {est} too large");
        }
    }

    #[test]
    fn k_beyond_sketch_dims_gives_zero() {
        let mut st = BilinearSketchState::plain(SketchFamily::CountSketch, 20, 20, 5, 3).unwrap();
        stream_all(&mut st, &random_matrix(20, 20, 9), None);
        assert_eq!(st.estimate_residual(5).unwrap(), 0.0);
        assert_eq!(st.estimate_residual(50).unwrap(), 0.0);
    }

    #[test]
    fn estimate_is_repeatable() {
        let mut st = BilinearSketchState::composed(20, 20, 6, 41).unwrap();
        stream_all(&mut st, &random_matrix(20, 20, 3), None);
        let e1 = st.estimate_residual(2).unwrap();
        let e2 = st.estimate_residual(2).unwrap();
        assert_eq!(e1, e2);
    }

    #[test]
    fn snapshot_roundtrip() {
        let mut st = BilinearSketchState::composed(30, 25, 6, 13).unwrap();
        stream_all(&mut st, &random_matrix(30, 25, 21), None);
        let mut buf = Vec::new();
        st.write_snapshot(&mut buf).unwrap();
        let restored =
            BilinearSketchState::read_snapshot(&mut std::io::Cursor::new(&buf)).unwrap();
        assert_eq!(restored.acc().data(), st.acc().data());
        assert_eq!(restored.left(), st.left());
        assert_eq!(restored.right(), st.right());
        assert_eq!(
            restored.estimate_residual(4).unwrap(),
            st.estimate_residual(4).unwrap()
        );
    }

    #[test]
    fn snapshot_rejects_garbage() {
        let mut bad = std::io::Cursor::new(b"not a snapshot\n".to_vec());
        assert!(matches!(
            BilinearSketchState::read_snapshot(&mut bad),
            Err(Error::Parse { line: 1, .. })
        ));

        let mut st = BilinearSketchState::plain(SketchFamily::CountSketch, 5, 5, 3, 1).unwrap();
        st.update(2, 2, 4.0).unwrap();
        let mut buf = Vec::new();
        st.write_snapshot(&mut buf).unwrap();
        buf.truncate(buf.len() - 4); // chop the binary payload
        assert!(BilinearSketchState::read_snapshot(&mut std::io::Cursor::new(&buf)).is_err());
    }

    #[test]
    fn batch_equals_manual_streaming() {
        let a = random_matrix(30, 20, 15);
        let mut st = BilinearSketchState::plain(SketchFamily::Osnap(2), 30, 20, 8, 5).unwrap();
        stream_all(&mut st, &a, None);
        let manual = st.estimate_residual(3).unwrap();
        let batch = batch_estimate(
            a.iter_nonzero(),
            3,
            st.left().clone(),
            st.right().clone(),
        )
        .unwrap();
        assert_eq!(batch.estimate, manual);
    }

    #[test]
    fn batch_of_zero_matrix_is_zero() {
        let st = BilinearSketchState::plain(SketchFamily::Gaussian, 10, 10, 4, 2).unwrap();
        let batch = batch_estimate(
            std::iter::empty(),
            2,
            st.left().clone(),
            st.right().clone(),
        )
        .unwrap();
        assert_eq!(batch.estimate, 0.0);
    }

    #[test]
    fn dim_policies() {
        assert_eq!(sketch_dim(5, 0.5).unwrap(), 20);
        assert_eq!(inner_dim(5, 0.5).unwrap(), 100);
        assert_eq!(default_inner_dim(100), 4096);
        assert_eq!(default_inner_dim(10), 100);
        assert_eq!(default_inner_dim(5000), 5000);
        assert!(sketch_dim(0, 0.5).is_err());
        assert!(sketch_dim(5, 0.0).is_err());
    }
}

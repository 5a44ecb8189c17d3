//! Streaming k-residual ℓ_p estimation for vectors.
//!
//! A CountSketch table of ℓ rows × b buckets answers point queries by a
//! median over rows; the k largest point estimates form a candidate set J,
//! which is subtracted from a parallel ℓ_p backend to approximate
//! ‖x − x_k‖_p^p for p > 2. The subtracted k-sparse vector x̂_J doubles as a
//! sparse recovery of x.

use crate::error::{Error, Result};
use crate::hash::{derive_seed, HashFamily};
use crate::lp::{ExactLpBackend, LpEstimator};

/// Bucket sizing b = ceil(c_b · ε^{−2p/(p−1)} · k^{2/p} · n^{1−2/p}),
/// clamped to [1, n].
pub fn bucket_count(n: usize, k: usize, p: f64, eps: f64) -> Result<usize> {
    bucket_count_with(n, k, p, eps, 1.0)
}

/// [`bucket_count`] with an explicit leading constant c_b.
pub fn bucket_count_with(n: usize, k: usize, p: f64, eps: f64, c_b: f64) -> Result<usize> {
    if !p.is_finite() || p <= 2.0 {
        return Err(Error::UnsupportedP(p));
    }
    if k == 0 || k > n {
        return Err(Error::InvalidInput(format!("need 1 ≤ k ≤ n, got k={k}, n={n}")));
    }
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::InvalidInput(format!("need ε ∈ (0,1], got {eps}")));
    }
    if !(c_b > 0.0) {
        return Err(Error::InvalidInput(format!("need c_b > 0, got {c_b}")));
    }
    let raw = c_b
        * eps.powf(-2.0 * p / (p - 1.0))
        * (k as f64).powf(2.0 / p)
        * (n as f64).powf(1.0 - 2.0 / p);
    // Nudge below the exact value so powf noise cannot push an integral
    // result over the next ceiling.
    let b = (raw * (1.0 - 1e-12)).ceil() as usize;
    Ok(b.clamp(1, n))
}

/// Row count ℓ = ceil(c_ℓ · log₂ n), with the default c_ℓ = 3; at least 1.
pub fn row_count(n: usize) -> usize {
    row_count_with(n, 3.0)
}

pub fn row_count_with(n: usize, c_l: f64) -> usize {
    let l = (c_l * (n.max(2) as f64).log2()).ceil() as usize;
    l.max(1)
}

/// CountSketch table for a vector universe [0, n).
#[derive(Debug, Clone, PartialEq)]
pub struct VectorCountSketch {
    n: usize,
    rows: usize,
    buckets: usize,
    /// rows × buckets, row-major.
    table: Vec<f64>,
    hashes: Vec<HashFamily>,
    signs: Vec<HashFamily>,
    seed: u64,
}

impl VectorCountSketch {
    pub fn new(n: usize, rows: usize, buckets: usize, seed: u64) -> Result<Self> {
        if n == 0 || rows == 0 || buckets == 0 {
            return Err(Error::InvalidInput(format!(
                "need positive dims, got n={n}, rows={rows}, buckets={buckets}"
            )));
        }
        let hashes = (0..rows)
            .map(|j| HashFamily::pairwise(derive_seed(seed, 2 * j as u64)))
            .collect();
        let signs = (0..rows)
            .map(|j| HashFamily::fourwise(derive_seed(seed, 2 * j as u64 + 1)))
            .collect();
        Ok(VectorCountSketch {
            n,
            rows,
            buckets,
            table: vec![0.0; rows * buckets],
            hashes,
            signs,
            seed,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn buckets(&self) -> usize {
        self.buckets
    }

    pub fn table(&self) -> &[f64] {
        &self.table
    }

    /// Bucket row `j` hashes index `i` into.
    pub fn bucket_of(&self, j: usize, i: usize) -> usize {
        self.hashes[j].bucket(i as u64, self.buckets)
    }

    /// Sign row `j` assigns to index `i`.
    pub fn sign_of(&self, j: usize, i: usize) -> f64 {
        self.signs[j].sign(i as u64)
    }

    /// Turnstile update x_i ← x_i + v across all rows.
    pub fn update(&mut self, i: usize, v: f64) -> Result<()> {
        if i >= self.n {
            return Err(Error::InvalidInput(format!(
                "index {i} outside universe of size {}",
                self.n
            )));
        }
        if v == 0.0 {
            return Ok(());
        }
        for j in 0..self.rows {
            let b = self.hashes[j].bucket(i as u64, self.buckets);
            self.table[j * self.buckets + b] += v * self.signs[j].sign(i as u64);
        }
        Ok(())
    }

    fn estimates_into(&self, i: usize, buf: &mut Vec<f64>) {
        buf.clear();
        for j in 0..self.rows {
            let b = self.hashes[j].bucket(i as u64, self.buckets);
            buf.push(self.signs[j].sign(i as u64) * self.table[j * self.buckets + b]);
        }
    }

    /// Median point estimate x̂_i (lower median when the row count is even).
    pub fn point_estimate(&self, i: usize) -> f64 {
        let mut buf = Vec::with_capacity(self.rows);
        self.estimates_into(i, &mut buf);
        lower_median(&mut buf)
    }

    /// The k indices with the largest |x̂_i|, ties broken toward lower index.
    pub fn top_k_candidates(&self, k: usize) -> TopKCandidates {
        let k = k.min(self.n);
        let mut all: Vec<(usize, f64)> = Vec::with_capacity(self.n);
        let mut buf = Vec::with_capacity(self.rows);
        for i in 0..self.n {
            self.estimates_into(i, &mut buf);
            all.push((i, lower_median(&mut buf)));
        }
        all.sort_by(|a, b| {
            b.1.abs()
                .partial_cmp(&a.1.abs())
                .expect("non-finite estimate")
                .then(a.0.cmp(&b.0))
        });
        all.truncate(k);
        TopKCandidates { entries: all }
    }

    /// Entrywise table merge; the peer must share every parameter and seed.
    pub fn merge_from(&mut self, other: &Self) -> Result<()> {
        if self.n != other.n
            || self.rows != other.rows
            || self.buckets != other.buckets
            || self.seed != other.seed
        {
            return Err(Error::Incompatible(
                "CountSketch tables differ in shape or seed".into(),
            ));
        }
        for (a, b) in self.table.iter_mut().zip(&other.table) {
            *a += b;
        }
        Ok(())
    }
}

/// Lower median: element (len−1)/2 of the sorted buffer. Sorts in place.
fn lower_median(buf: &mut [f64]) -> f64 {
    debug_assert!(!buf.is_empty());
    let mid = (buf.len() - 1) / 2;
    *buf.select_nth_unstable_by(mid, |a, b| a.partial_cmp(b).expect("non-finite estimate"))
        .1
}

/// The candidate set J with its estimated values x̂_J, ordered by
/// |estimate| descending (ties toward lower index).
#[derive(Debug, Clone, PartialEq)]
pub struct TopKCandidates {
    entries: Vec<(usize, f64)>,
}

impl TopKCandidates {
    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn indices(&self) -> Vec<usize> {
        self.entries.iter().map(|&(i, _)| i).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// The recovered k-sparse vector as a dense length-n buffer.
    pub fn to_dense(&self, n: usize) -> Vec<f64> {
        let mut x = vec![0.0; n];
        for &(i, v) in &self.entries {
            if i < n {
                x[i] = v;
            }
        }
        x
    }
}

/// Streaming estimator for ‖x − x_k‖_p^p with a pluggable ℓ_p backend.
#[derive(Debug, Clone)]
pub struct ResidualPipeline<B: LpEstimator> {
    cs: VectorCountSketch,
    lp: B,
    k: usize,
    p: f64,
    eps: f64,
}

impl ResidualPipeline<ExactLpBackend> {
    /// Pipeline with the exact reference backend and default table sizing.
    pub fn exact(n: usize, k: usize, p: f64, eps: f64, seed: u64) -> Result<Self> {
        Self::with_backend(n, k, p, eps, seed, ExactLpBackend::new(n))
    }
}

impl<B: LpEstimator> ResidualPipeline<B> {
    /// Table sized by [`bucket_count`] and [`row_count`] under c_b = c_ℓ
    /// defaults; the backend must cover the same universe.
    pub fn with_backend(
        n: usize,
        k: usize,
        p: f64,
        eps: f64,
        seed: u64,
        backend: B,
    ) -> Result<Self> {
        let b = bucket_count(n, k.max(1), p, eps)?;
        let l = row_count(n);
        Self::with_dimensions(n, k, p, eps, l, b, seed, backend)
    }

    /// Fully explicit construction; `rows`/`buckets` override the defaults.
    #[allow(clippy::too_many_arguments)]
    pub fn with_dimensions(
        n: usize,
        k: usize,
        p: f64,
        eps: f64,
        rows: usize,
        buckets: usize,
        seed: u64,
        backend: B,
    ) -> Result<Self> {
        if !p.is_finite() || p <= 2.0 {
            return Err(Error::UnsupportedP(p));
        }
        if k > n {
            return Err(Error::InvalidInput(format!("k={k} exceeds n={n}")));
        }
        if backend.universe() != n {
            return Err(Error::Incompatible(format!(
                "backend universe {} does not match n={n}",
                backend.universe()
            )));
        }
        Ok(ResidualPipeline {
            cs: VectorCountSketch::new(n, rows, buckets, derive_seed(seed, 0x6373))?,
            lp: backend,
            k,
            p,
            eps,
        })
    }

    pub fn n(&self) -> usize {
        self.cs.n()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn countsketch(&self) -> &VectorCountSketch {
        &self.cs
    }

    pub fn backend(&self) -> &B {
        &self.lp
    }

    /// Feeds one turnstile update to the sketch and the backend.
    pub fn update(&mut self, i: usize, v: f64) -> Result<()> {
        self.cs.update(i, v)?;
        self.lp.update(i, v)
    }

    /// The candidate set J and its estimates x̂_J.
    pub fn sparse_recover(&self) -> TopKCandidates {
        self.cs.top_k_candidates(self.k)
    }

    /// Estimate of ‖x − x_k‖_p^p: subtract x̂_J from a copy of the backend
    /// state and finalize. The live state is left untouched, so streaming
    /// may resume afterwards.
    pub fn residual_estimate(&self) -> Result<f64> {
        let candidates = self.sparse_recover();
        let mut backend = self.lp.clone();
        for &(j, xhat) in candidates.entries() {
            backend.update(j, -xhat)?;
        }
        backend.finalize(self.p)
    }

    /// Merges a shard with identical parameters and seeds.
    pub fn merge_from(&mut self, other: &Self) -> Result<()> {
        if self.k != other.k || self.p != other.p || self.eps != other.eps {
            return Err(Error::Incompatible(
                "pipeline parameters differ".into(),
            ));
        }
        self.cs.merge_from(&other.cs)?;
        self.lp.merge_from(&other.lp)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn bucket_count_formula_values() {
        // 2^{8/3}·4·1024 = 26007.98…, so the ceiling is 26008.
        assert_eq!(bucket_count(1 << 20, 16, 4.0, 0.5).unwrap(), 26008);
        // k^{2/3} = 1 and n^{1/3} = 100 at ε = 1.
        assert_eq!(bucket_count(1_000_000, 1, 3.0, 1.0).unwrap(), 100);
    }

    #[test]
    fn bucket_count_clamps_to_n() {
        assert_eq!(bucket_count(64, 64, 3.0, 0.5).unwrap(), 64);
        assert_eq!(bucket_count(64, 64, 7.5, 0.1).unwrap(), 64);
    }

    #[test]
    fn bucket_count_rejects_bad_params() {
        assert!(matches!(
            bucket_count(100, 5, 2.0, 0.5),
            Err(Error::UnsupportedP(_))
        ));
        assert!(bucket_count(100, 0, 3.0, 0.5).is_err());
        assert!(bucket_count(100, 101, 3.0, 0.5).is_err());
        assert!(bucket_count(100, 5, 3.0, 0.0).is_err());
    }

    #[test]
    fn row_count_scales_with_log() {
        assert_eq!(row_count(1 << 10), 30);
        assert_eq!(row_count(10_000), 40); // 3·log₂(10⁴) = 39.86…
        assert!(row_count(1) >= 1);
    }

    #[test]
    fn zero_update_leaves_table_unchanged() {
        let mut cs = VectorCountSketch::new(100, 5, 16, 9).unwrap();
        let before = cs.table().to_vec();
        cs.update(17, 0.0).unwrap();
        assert_eq!(cs.table(), &before[..]);
    }

    #[test]
    fn single_update_lands_in_hashed_buckets() {
        let mut cs = VectorCountSketch::new(64, 4, 8, 3).unwrap();
        cs.update(9, 5.0).unwrap();
        for j in 0..4 {
            let b = cs.bucket_of(j, 9);
            assert_eq!(cs.table()[j * 8 + b], 5.0 * cs.sign_of(j, 9));
        }
        assert_eq!(cs.point_estimate(9), 5.0);
    }

    #[test]
    fn buckets_match_direct_recomputation() {
        let n = 200;
        let mut cs = VectorCountSketch::new(n, 6, 32, 11).unwrap();
        let mut x = vec![0.0f64; n];
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let i = rng.random_range(0..n);
            let v = rng.random_range(-10..=10) as f64;
            cs.update(i, v).unwrap();
            x[i] += v;
        }
        for j in 0..cs.rows() {
            for b in 0..cs.buckets() {
                let direct: f64 = (0..n)
                    .filter(|&i| cs.bucket_of(j, i) == b)
                    .map(|i| cs.sign_of(j, i) * x[i])
                    .sum();
                assert_eq!(cs.table()[j * cs.buckets() + b], direct);
            }
        }
    }

    #[test]
    fn point_estimates_of_zero_vector_are_zero() {
        let cs = VectorCountSketch::new(50, 5, 8, 21).unwrap();
        for i in 0..50 {
            assert_eq!(cs.point_estimate(i), 0.0);
        }
    }

    #[test]
    fn out_of_range_index_rejected() {
        let mut cs = VectorCountSketch::new(10, 3, 4, 1).unwrap();
        assert!(cs.update(10, 1.0).is_err());
    }

    #[test]
    fn median_is_sign_covariant() {
        // Negating the stream must negate every estimate exactly. An odd row
        // count makes the lower median the true median, so the negated
        // buffer's median is the mirror element.
        let n = 300;
        let mut pos = VectorCountSketch::new(n, 7, 16, 13).unwrap();
        let mut neg = VectorCountSketch::new(n, 7, 16, 13).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..500 {
            let i = rng.random_range(0..n);
            let v: f64 = rng.random_range(-3.0..3.0);
            pos.update(i, v).unwrap();
            neg.update(i, -v).unwrap();
        }
        for i in 0..n {
            assert_eq!(pos.point_estimate(i), -neg.point_estimate(i));
        }
    }

    #[test]
    fn turnstile_cancellation_is_exact_for_integers() {
        let mut cs = VectorCountSketch::new(40, 5, 8, 7).unwrap();
        let zero = cs.clone();
        cs.update(3, 12.0).unwrap();
        cs.update(3, -12.0).unwrap();
        assert_eq!(cs, zero);
    }

    #[test]
    fn stream_order_does_not_matter() {
        let n = 80;
        let mut updates: Vec<(usize, f64)> = Vec::new();
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..300 {
            updates.push((rng.random_range(0..n), rng.random_range(-9..=9) as f64));
        }
        let mut a = VectorCountSketch::new(n, 5, 16, 99).unwrap();
        for &(i, v) in &updates {
            a.update(i, v).unwrap();
        }
        updates.shuffle(&mut rng);
        let mut b = VectorCountSketch::new(n, 5, 16, 99).unwrap();
        for &(i, v) in &updates {
            b.update(i, v).unwrap();
        }
        assert_eq!(a, b);
    }

    #[test]
    fn well_separated_support_is_recovered() {
        let n = 400;
        let k = 6;
        let mut cs = VectorCountSketch::new(n, 9, 128, 17).unwrap();
        for t in 0..k {
            cs.update(t * 50, 100.0).unwrap();
        }
        let top = cs.top_k_candidates(k);
        let mut got = top.indices();
        got.sort_unstable();
        assert_eq!(got, (0..k).map(|t| t * 50).collect::<Vec<_>>());
        for &(_, v) in top.entries() {
            assert_eq!(v, 100.0);
        }
    }

    #[test]
    fn top_n_returns_every_index() {
        let mut cs = VectorCountSketch::new(12, 5, 8, 23).unwrap();
        cs.update(4, 2.0).unwrap();
        let top = cs.top_k_candidates(12);
        assert_eq!(top.len(), 12);
        let mut idx = top.indices();
        idx.sort_unstable();
        assert_eq!(idx, (0..12).collect::<Vec<_>>());
        // Oversized k clamps to n.
        assert_eq!(cs.top_k_candidates(50).len(), 12);
    }

    #[test]
    fn ties_break_toward_lower_index() {
        let mut cs = VectorCountSketch::new(64, 5, 64, 41).unwrap();
        // Equal-magnitude entries; sparse table makes collisions unlikely,
        // but the tie rule is what matters: equal |x̂| sorts by index.
        cs.update(30, 7.0).unwrap();
        cs.update(10, -7.0).unwrap();
        cs.update(50, 7.0).unwrap();
        let top = cs.top_k_candidates(2);
        assert_eq!(top.indices(), vec![10, 30]);
    }

    #[test]
    fn pipeline_zero_stream_estimates_zero() {
        let pipe = ResidualPipeline::exact(500, 5, 3.0, 0.5, 1).unwrap();
        assert_eq!(pipe.residual_estimate().unwrap(), 0.0);
        assert!(pipe.sparse_recover().entries().iter().all(|&(_, v)| v == 0.0));
    }

    #[test]
    fn pipeline_recovers_exactly_sparse_vector() {
        let n = 2000;
        let k = 8;
        let mut pipe = ResidualPipeline::exact(n, k, 3.0, 0.5, 77).unwrap();
        let support: Vec<(usize, f64)> = (0..k).map(|t| (37 * t + 5, 50.0 + t as f64)).collect();
        for &(i, v) in &support {
            pipe.update(i, v).unwrap();
        }
        assert!(pipe.residual_estimate().unwrap() < 1e-9);
        let mut got = pipe.sparse_recover().entries().to_vec();
        got.sort_by_key(|&(i, _)| i);
        assert_eq!(got, support);
    }

    #[test]
    fn pipeline_with_k_zero_returns_full_norm() {
        let mut pipe =
            ResidualPipeline::with_dimensions(100, 0, 3.0, 0.5, 9, 32, 3, ExactLpBackend::new(100))
                .unwrap();
        pipe.update(7, 2.0).unwrap();
        pipe.update(50, -3.0).unwrap();
        assert!(pipe.sparse_recover().is_empty());
        assert_eq!(pipe.residual_estimate().unwrap(), 8.0 + 27.0);
    }

    #[test]
    fn pipeline_rejects_small_p() {
        assert!(matches!(
            ResidualPipeline::exact(10, 2, 2.0, 0.5, 1),
            Err(Error::UnsupportedP(_))
        ));
    }

    #[test]
    fn pipeline_merge_matches_whole_stream() {
        let n = 300;
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let updates: Vec<(usize, f64)> = (0..600)
            .map(|_| (rng.random_range(0..n), rng.random_range(-20..=20) as f64))
            .collect();
        let mut whole = ResidualPipeline::exact(n, 5, 3.0, 0.5, 8).unwrap();
        let mut shard_a = ResidualPipeline::exact(n, 5, 3.0, 0.5, 8).unwrap();
        let mut shard_b = ResidualPipeline::exact(n, 5, 3.0, 0.5, 8).unwrap();
        for (t, &(i, v)) in updates.iter().enumerate() {
            whole.update(i, v).unwrap();
            if t % 2 == 0 {
                shard_a.update(i, v).unwrap();
            } else {
                shard_b.update(i, v).unwrap();
            }
        }
        shard_a.merge_from(&shard_b).unwrap();
        assert_eq!(shard_a.countsketch(), whole.countsketch());
        assert_eq!(
            shard_a.residual_estimate().unwrap(),
            whole.residual_estimate().unwrap()
        );
    }
}

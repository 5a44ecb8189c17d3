//! Brute-force oracles and adversarial instance generators.
//!
//! The matrix oracle uses a hand-written one-sided Jacobi SVD so that
//! estimator checks never share a decomposition route with
//! [`crate::linalg`]. Generators cover Zipf-like turnstile streams,
//! planted-spike ("gap") vectors, the synthetic low-rank-plus-noise family
//! and the two-distribution hard instance pair used to probe one-sided
//! estimators.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::hash::derive_seed;
use crate::linalg::DenseMatrix;
use crate::lp::abs_pow;

/// Indices of the k largest |x_i|, ties broken toward lower index.
pub fn exact_top_k(x: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| {
        x[b].abs()
            .partial_cmp(&x[a].abs())
            .expect("non-finite entry")
            .then(a.cmp(&b))
    });
    idx.truncate(k.min(x.len()));
    idx
}

/// Σ_{i ∉ top-k} |x_i|^p, the exact k-residual ℓ_p^p mass.
pub fn exact_vector_residual(x: &[f64], k: usize, p: f64) -> f64 {
    let mut mags: Vec<f64> = x.iter().map(|v| v.abs()).collect();
    mags.sort_by(|a, b| b.partial_cmp(a).expect("non-finite entry"));
    // Smallest-first summation keeps the many tiny tail terms from being
    // swallowed by the large ones.
    mags.iter().skip(k).rev().map(|&a| abs_pow(a, p)).sum()
}

/// Σ_{i ∈ idx} |x_i|^p for a candidate index set.
pub fn subset_lp_mass(x: &[f64], idx: &[usize], p: f64) -> f64 {
    idx.iter().map(|&i| abs_pow(x[i], p)).sum()
}

const JACOBI_MAX_SWEEPS: usize = 60;
const JACOBI_TOL: f64 = 1e-14;

pub(crate) struct JacobiSvd {
    /// Nonincreasing singular values.
    pub sigma: Vec<f64>,
    /// Left singular vectors, one column per singular value.
    pub u: Vec<Vec<f64>>,
    /// Right singular vectors, present when requested.
    pub v: Option<Vec<Vec<f64>>>,
}

/// One-sided Jacobi SVD: rotates column pairs until mutual orthogonality.
/// Requires rows ≥ cols.
pub(crate) fn one_sided_jacobi(a: &DenseMatrix, want_v: bool) -> Result<JacobiSvd> {
    let (rows, cols) = (a.rows(), a.cols());
    assert!(rows >= cols, "one-sided Jacobi wants a tall matrix");
    let mut w: Vec<Vec<f64>> = (0..cols)
        .map(|j| (0..rows).map(|i| a.get(i, j)).collect())
        .collect();
    let mut v: Option<Vec<Vec<f64>>> = want_v.then(|| {
        (0..cols)
            .map(|j| {
                let mut e = vec![0.0; cols];
                e[j] = 1.0;
                e
            })
            .collect()
    });
    let mut norms2: Vec<f64> = w.iter().map(|c| c.iter().map(|x| x * x).sum()).collect();

    let mut converged = false;
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..cols.saturating_sub(1) {
            for q in p + 1..cols {
                let (alpha, beta) = (norms2[p], norms2[q]);
                let gamma: f64 = w[p].iter().zip(&w[q]).map(|(x, y)| x * y).sum();
                let bound = JACOBI_TOL * (alpha * beta).sqrt();
                if gamma.abs() <= bound || bound == 0.0 {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                let (wp, wq) = split_pair(&mut w, p, q);
                rotate(wp, wq, c, s);
                if let Some(v) = v.as_mut() {
                    let (vp, vq) = split_pair(v, p, q);
                    rotate(vp, vq, c, s);
                }
                norms2[p] = c * c * alpha - 2.0 * c * s * gamma + s * s * beta;
                norms2[q] = s * s * alpha + 2.0 * c * s * gamma + c * c * beta;
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Numerical(format!(
            "Jacobi SVD did not converge in {JACOBI_MAX_SWEEPS} sweeps"
        )));
    }

    let mut order: Vec<usize> = (0..cols).collect();
    let exact_norms: Vec<f64> = w
        .iter()
        .map(|c| c.iter().map(|x| x * x).sum::<f64>().sqrt())
        .collect();
    order.sort_by(|&i, &j| exact_norms[j].partial_cmp(&exact_norms[i]).unwrap());

    let mut sigma = Vec::with_capacity(cols);
    let mut u = Vec::with_capacity(cols);
    for &j in &order {
        let norm = exact_norms[j];
        sigma.push(norm);
        let mut col = w[j].clone();
        if norm > 0.0 {
            for x in &mut col {
                *x /= norm;
            }
        }
        u.push(col);
    }
    let v = v.map(|v| order.iter().map(|&j| v[j].clone()).collect());
    Ok(JacobiSvd { sigma, u, v })
}

fn split_pair<T>(cols: &mut [T], p: usize, q: usize) -> (&mut T, &mut T) {
    debug_assert!(p < q);
    let (head, tail) = cols.split_at_mut(q);
    (&mut head[p], &mut tail[0])
}

fn rotate(x: &mut [f64], y: &mut [f64], c: f64, s: f64) {
    for (a, b) in x.iter_mut().zip(y.iter_mut()) {
        let (na, nb) = (c * *a - s * *b, s * *a + c * *b);
        *a = na;
        *b = nb;
    }
}

/// Full singular spectrum by one-sided Jacobi; independent of the
/// decomposition used in [`crate::linalg`].
pub fn jacobi_singular_values(a: &DenseMatrix) -> Result<Vec<f64>> {
    a.check_finite()?;
    if a.rows() == 0 || a.cols() == 0 {
        return Err(Error::InvalidInput("empty matrix".into()));
    }
    let svd = if a.rows() >= a.cols() {
        one_sided_jacobi(a, false)?
    } else {
        one_sided_jacobi(&a.transpose(), false)?
    };
    Ok(svd.sigma)
}

/// ‖A − A_k‖_F from the Jacobi spectrum; the matrix ground truth used by
/// every estimator check.
pub fn exact_matrix_residual(a: &DenseMatrix, k: usize) -> Result<f64> {
    if k >= a.rows().min(a.cols()) {
        return Ok(0.0);
    }
    let sigma = jacobi_singular_values(a)?;
    let mut sum = 0.0;
    for &s in sigma.iter().skip(k).rev() {
        sum += s * s;
    }
    Ok(sum.sqrt())
}

/// Standard normal matrix under a fixed seed.
pub fn gaussian_matrix(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DenseMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// Rank-k planted signal plus dense Gaussian noise. The k signal directions
/// have singular values near `signal`; the noise matrix is `noise`·N(0,1).
pub fn gen_lowrank_plus_noise(
    rows: usize,
    cols: usize,
    k: usize,
    signal: f64,
    noise: f64,
    seed: u64,
) -> DenseMatrix {
    let mut m = gaussian_matrix(rows, cols, derive_seed(seed, 0x6e6f6973)).scale(noise);
    let coeff = signal / ((rows * cols) as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0x7369676e));
    for _ in 0..k {
        let u: Vec<f64> = (0..rows).map(|_| rng.sample(StandardNormal)).collect();
        let v: Vec<f64> = (0..cols).map(|_| rng.sample(StandardNormal)).collect();
        for (i, &ui) in u.iter().enumerate() {
            let c = coeff * ui;
            for (j, &vj) in v.iter().enumerate() {
                m.add_at(i, j, c * vj);
            }
        }
    }
    m
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HardKind {
    /// G + c√ε·B with B the top k−1 singular triplets of a Gaussian H.
    D1,
    /// D1 plus the k-th triplet as well; totals a fresh Gaussian with
    /// entrywise variance 1 + c²ε.
    D2,
}

#[derive(Debug, Clone, Copy)]
pub struct HardInstanceSpec {
    pub k: usize,
    pub eps: f64,
    /// Signal amplification; "sufficiently large" in the analysis.
    pub c: f64,
    pub seed: u64,
    pub which: HardKind,
}

impl HardInstanceSpec {
    pub fn new(k: usize, eps: f64, seed: u64, which: HardKind) -> Self {
        HardInstanceSpec {
            k,
            eps,
            c: 10.0,
            seed,
            which,
        }
    }
}

/// A generated hard instance with the quantities tests condition on.
#[derive(Debug, Clone)]
pub struct HardInstance {
    pub matrix: DenseMatrix,
    /// The k-th singular value of the planted Gaussian H.
    pub alpha: f64,
    /// Largest singular value of the fresh Gaussian G in the mix.
    pub sigma_max_g: f64,
}

/// Samples from the D1/D2 pair: one Gaussian H is split at its k-th
/// singular triplet, giving the joint law of (B, α, u, v) directly without
/// rejection; a fresh Gaussian G is added on top.
pub fn gen_hard_pair(spec: &HardInstanceSpec) -> Result<HardInstance> {
    if spec.k <= 1 {
        return Err(Error::InvalidSpec(format!(
            "hard instances need k ≥ 2, got {}",
            spec.k
        )));
    }
    if !(spec.eps > 0.0 && spec.eps < 1.0) {
        return Err(Error::InvalidSpec(format!("need ε ∈ (0,1), got {}", spec.eps)));
    }
    if !(spec.c > 0.0) {
        return Err(Error::InvalidSpec(format!("need c > 0, got {}", spec.c)));
    }
    let cols = spec.k;
    let rows = ((spec.k as f64 / (spec.eps * spec.eps)) * (1.0 - 1e-12)).ceil() as usize;
    let h = gaussian_matrix(rows, cols, derive_seed(spec.seed, 0x68));
    let g = gaussian_matrix(rows, cols, derive_seed(spec.seed, 0x67));

    let svd = one_sided_jacobi(&h, true)?;
    let v = svd.v.as_ref().expect("vectors requested");
    let scale = spec.c * spec.eps.sqrt();
    let take = match spec.which {
        HardKind::D1 => cols - 1,
        HardKind::D2 => cols,
    };
    let mut m = g.clone();
    for t in 0..take {
        let coeff = scale * svd.sigma[t];
        for (i, &ui) in svd.u[t].iter().enumerate() {
            let c = coeff * ui;
            for (j, &vj) in v[t].iter().enumerate() {
                m.add_at(i, j, c * vj);
            }
        }
    }
    let sigma_max_g = jacobi_singular_values(&g)?[0];
    Ok(HardInstance {
        matrix: m,
        alpha: svd.sigma[cols - 1],
        sigma_max_g,
    })
}

#[derive(Debug, Clone)]
pub struct ZipfStreamSpec {
    pub n: usize,
    /// Zipf decay exponent; magnitudes fall off as rank^(−exponent).
    pub exponent: f64,
    /// Magnitude of the rank-1 coordinate before rounding.
    pub scale: f64,
    /// Sizing knob for turnstile churn; see [`gen_zipf_stream`].
    pub update_count: usize,
    /// Share used to size churn pairs; 0 disables negative updates.
    pub turnstile_fraction: f64,
    pub seed: u64,
}

/// A reproducible turnstile stream with its exact final vector.
///
/// One positive update per nonzero Zipf coordinate (magnitude
/// round(scale/rank^exponent) placed on a seeded permutation), plus
/// round(update_count·turnstile_fraction/2) canceling (+u, −u) pairs on
/// random coordinates; the whole stream is then shuffled. All magnitudes
/// are integers, so replay reproduces the companion vector exactly.
pub fn gen_zipf_stream(spec: &ZipfStreamSpec) -> (Vec<(usize, f64)>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, 0x7a697066));
    let mut perm: Vec<usize> = (0..spec.n).collect();
    perm.shuffle(&mut rng);

    let mut x = vec![0.0; spec.n];
    let mut updates: Vec<(usize, f64)> = Vec::new();
    for r in 1..=spec.n {
        let w = (spec.scale / (r as f64).powf(spec.exponent)).round();
        if w < 1.0 {
            break; // magnitudes are nonincreasing in rank
        }
        let i = perm[r - 1];
        x[i] = w;
        updates.push((i, w));
    }

    let pairs = (spec.update_count as f64 * spec.turnstile_fraction / 2.0).round() as usize;
    let max_mag = spec.scale.max(1.0) as u64;
    for _ in 0..pairs {
        let i = rng.random_range(0..spec.n);
        let u = rng.random_range(1..=max_mag) as f64;
        updates.push((i, u));
        updates.push((i, -u));
    }
    updates.shuffle(&mut rng);
    (updates, x)
}

/// A planted-spike vector: k blocks of `block` entries drawn uniformly from
/// {−1, 0, 1}; each block independently receives, with probability 1/2, one
/// spike of magnitude `s` (random sign) overwriting a random position.
#[derive(Debug, Clone)]
pub struct GapVector {
    pub x: Vec<f64>,
    /// Positions holding a planted spike, one per spiked block.
    pub planted: Vec<usize>,
}

pub fn gen_gap_vector(k: usize, block: usize, s: f64, seed: u64) -> GapVector {
    let n = k * block;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0x676170));
    let mut x: Vec<f64> = (0..n).map(|_| rng.random_range(-1..=1) as f64).collect();
    let mut planted = Vec::new();
    for b in 0..k {
        if rng.random::<bool>() {
            let pos = b * block + rng.random_range(0..block);
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            x[pos] = sign * s;
            planted.push(pos);
        }
    }
    GapVector { x, planted }
}

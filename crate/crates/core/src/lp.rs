//! Pluggable ‖·‖_p^p estimation backends.
//!
//! The residual pipeline treats its moment estimator as a black box behind
//! [`LpEstimator`]; the exact dense backend below is the reference
//! implementation. A sublinear-space sketch satisfying the same contract can
//! be slotted in without touching the pipeline.

use crate::error::{Error, Result};

/// Streaming ℓ_p^p estimator contract.
///
/// Implementations must be linear in the update stream — the final state may
/// depend only on the accumulated vector — and mergeable by state addition.
/// `finalize` must land within `(1 ± error_factor())·‖x‖_p^p` with the
/// backend's advertised probability.
pub trait LpEstimator: Clone {
    /// Size of the index universe [0, n).
    fn universe(&self) -> usize;

    /// Applies the turnstile update x_i ← x_i + v.
    fn update(&mut self, i: usize, v: f64) -> Result<()>;

    /// Estimate of Σ_i |x_i|^p for the accumulated x.
    fn finalize(&self, p: f64) -> Result<f64>;

    /// Entrywise state merge; both operands must share a universe.
    fn merge_from(&mut self, other: &Self) -> Result<()>;

    /// Advertised multiplicative error ε_backend (0 for exact backends).
    fn error_factor(&self) -> f64;
}

/// Exact dense accumulator: ε_backend = 0, Θ(n) space.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactLpBackend {
    acc: Vec<f64>,
}

impl ExactLpBackend {
    pub fn new(n: usize) -> Self {
        ExactLpBackend { acc: vec![0.0; n] }
    }

    pub fn accumulator(&self) -> &[f64] {
        &self.acc
    }
}

/// |x|^p, with an exact-exponent fast path for small integer p.
pub(crate) fn abs_pow(x: f64, p: f64) -> f64 {
    let a = x.abs();
    if p.fract() == 0.0 && (1.0..=64.0).contains(&p) {
        a.powi(p as i32)
    } else {
        a.powf(p)
    }
}

impl LpEstimator for ExactLpBackend {
    fn universe(&self) -> usize {
        self.acc.len()
    }

    fn update(&mut self, i: usize, v: f64) -> Result<()> {
        match self.acc.get_mut(i) {
            Some(slot) => {
                *slot += v;
                Ok(())
            }
            None => Err(Error::InvalidInput(format!(
                "index {i} outside universe of size {}",
                self.acc.len()
            ))),
        }
    }

    fn finalize(&self, p: f64) -> Result<f64> {
        if !(p >= 1.0) || !p.is_finite() {
            return Err(Error::InvalidInput(format!("norm order p = {p} < 1")));
        }
        Ok(self
            .acc
            .iter()
            .filter(|&&x| x != 0.0)
            .map(|&x| abs_pow(x, p))
            .sum())
    }

    fn merge_from(&mut self, other: &Self) -> Result<()> {
        if self.acc.len() != other.acc.len() {
            return Err(Error::Incompatible(format!(
                "universe {} vs {}",
                self.acc.len(),
                other.acc.len()
            )));
        }
        for (a, b) in self.acc.iter_mut().zip(&other.acc) {
            *a += b;
        }
        Ok(())
    }

    fn error_factor(&self) -> f64 {
        0.0
    }
}

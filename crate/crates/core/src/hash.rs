//! Seeded hash families over the Mersenne prime field 2^61 − 1.
//!
//! Pairwise-independent bucket hashes and 4-wise independent sign hashes,
//! both realized as random polynomials over the field. Everything is a pure
//! function of the seed, so sketches sharing a seed agree bit for bit.

/// Field modulus: the Mersenne prime 2^61 − 1.
pub const MERSENNE_PRIME: u64 = (1 << 61) - 1;

/// SplitMix64 step; the standard seed expander.
#[inline]
pub(crate) fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E3779B97F4A7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Derives an independent sub-seed from a root seed and a salt.
///
/// Used to give each sketch stage, hash row and trial its own stream
/// without correlated randomness.
pub fn derive_seed(seed: u64, salt: u64) -> u64 {
    let mut state = seed ^ salt.wrapping_mul(0x9E3779B97F4A7C15).rotate_left(17);
    let a = splitmix64(&mut state);
    let b = splitmix64(&mut state);
    a ^ b.rotate_left(32)
}

#[inline]
fn reduce(x: u128) -> u64 {
    // Fold 2^61 ≡ 1 (mod P) twice; input < 2^122.
    let mut r = (x & MERSENNE_PRIME as u128) as u64 + ((x >> 61) as u64 & MERSENNE_PRIME)
        + (x >> 122) as u64;
    while r >= MERSENNE_PRIME {
        r -= MERSENNE_PRIME;
    }
    r
}

#[inline]
fn mul_mod(a: u64, b: u64) -> u64 {
    reduce(a as u128 * b as u128)
}

#[inline]
fn add_mod(a: u64, b: u64) -> u64 {
    let s = a + b;
    if s >= MERSENNE_PRIME {
        s - MERSENNE_PRIME
    } else {
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HashKind {
    /// Degree-1 polynomial: pairwise independent, used for bucket placement.
    Pairwise,
    /// Degree-3 polynomial: 4-wise independent, used for signs.
    Fourwise,
}

/// A random polynomial over GF(2^61 − 1), fixed by a seed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HashFamily {
    kind: HashKind,
    /// coeffs[d] multiplies x^d; pairwise uses only degrees 0..=1.
    coeffs: [u64; 4],
    seed: u64,
}

impl HashFamily {
    /// h(i) = (a·i + b mod P) with a ∈ [1, P), b ∈ [0, P).
    pub fn pairwise(seed: u64) -> Self {
        let mut state = derive_seed(seed, 0x70616972);
        let a = 1 + splitmix64(&mut state) % (MERSENNE_PRIME - 1);
        let b = splitmix64(&mut state) % MERSENNE_PRIME;
        HashFamily {
            kind: HashKind::Pairwise,
            coeffs: [b, a, 0, 0],
            seed,
        }
    }

    /// Uniform degree-≤3 polynomial; evaluations are 4-wise independent.
    pub fn fourwise(seed: u64) -> Self {
        let mut state = derive_seed(seed, 0x7369676e);
        let mut coeffs = [0u64; 4];
        for c in &mut coeffs {
            *c = splitmix64(&mut state) % MERSENNE_PRIME;
        }
        HashFamily {
            kind: HashKind::Fourwise,
            coeffs,
            seed,
        }
    }

    pub fn kind(&self) -> HashKind {
        self.kind
    }

    pub fn modulus(&self) -> u64 {
        MERSENNE_PRIME
    }

    /// Polynomial value at `i`, in [0, P). Horner evaluation.
    #[inline]
    pub fn eval(&self, i: u64) -> u64 {
        debug_assert!(i < MERSENNE_PRIME);
        let mut acc = 0u64;
        for &c in self.coeffs.iter().rev() {
            acc = add_mod(mul_mod(acc, i), c);
        }
        acc
    }

    /// Bucket index in [0, buckets).
    #[inline]
    pub fn bucket(&self, i: u64, buckets: usize) -> usize {
        (self.eval(i) % buckets as u64) as usize
    }

    /// ±1 from the evaluation's parity.
    #[inline]
    pub fn sign(&self, i: u64) -> f64 {
        if self.eval(i) & 1 == 0 {
            1.0
        } else {
            -1.0
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reduce_matches_plain_remainder() {
        let cases: [u128; 6] = [
            0,
            1,
            MERSENNE_PRIME as u128,
            MERSENNE_PRIME as u128 + 5,
            (MERSENNE_PRIME as u128 - 1) * (MERSENNE_PRIME as u128 - 1),
            u128::MAX >> 6,
        ];
        for &x in &cases {
            assert_eq!(reduce(x) as u128, x % MERSENNE_PRIME as u128, "x = {x}");
        }
    }

    #[test]
    fn mul_mod_small_values() {
        assert_eq!(mul_mod(3, 7), 21);
        assert_eq!(
            mul_mod(MERSENNE_PRIME - 1, 2),
            MERSENNE_PRIME - 2 // (P−1)·2 = 2P−2 ≡ P−2
        );
    }

    #[test]
    fn deterministic_under_seed() {
        let h1 = HashFamily::pairwise(99);
        let h2 = HashFamily::pairwise(99);
        let g1 = HashFamily::fourwise(99);
        let g2 = HashFamily::fourwise(99);
        for i in 0..1000 {
            assert_eq!(h1.bucket(i, 64), h2.bucket(i, 64));
            assert_eq!(g1.sign(i), g2.sign(i));
        }
    }

    #[test]
    fn different_seeds_differ() {
        let h1 = HashFamily::pairwise(1);
        let h2 = HashFamily::pairwise(2);
        let same = (0..256).filter(|&i| h1.bucket(i, 1024) == h2.bucket(i, 1024)).count();
        assert!(same < 32, "seeds look correlated: {same}/256 collisions");
    }

    #[test]
    fn signs_are_roughly_balanced() {
        let g = HashFamily::fourwise(7);
        let pos = (0..10_000).filter(|&i| g.sign(i) > 0.0).count();
        assert!((4500..5500).contains(&pos), "positive share {pos}/10000");
    }

    #[test]
    fn buckets_are_roughly_uniform() {
        let h = HashFamily::pairwise(13);
        let b = 16;
        let mut counts = vec![0usize; b];
        for i in 0..16_000 {
            counts[h.bucket(i, b)] += 1;
        }
        for &c in &counts {
            assert!((800..1200).contains(&c), "bucket load {c}");
        }
    }

    #[test]
    fn pairwise_collision_rate_near_uniform() {
        // Pr over seeds of h(i) = h(j) should be ≈ 1/b for every fixed i ≠ j.
        let b = 64;
        let mut collisions = 0usize;
        let mut pairs = 0usize;
        for seed in 0..2000 {
            let h = HashFamily::pairwise(seed);
            for i in 0..5u64 {
                for j in (i + 1)..5 {
                    pairs += 1;
                    if h.bucket(i, b) == h.bucket(j, b) {
                        collisions += 1;
                    }
                }
            }
        }
        let rate = collisions as f64 / pairs as f64;
        assert!(
            rate < 3.0 / b as f64,
            "collision rate {rate} far above 1/{b}"
        );
    }

    #[test]
    fn derive_seed_changes_with_salt() {
        let s = 12345;
        assert_ne!(derive_seed(s, 0), derive_seed(s, 1));
        assert_ne!(derive_seed(s, 1), derive_seed(s, 2));
    }
}

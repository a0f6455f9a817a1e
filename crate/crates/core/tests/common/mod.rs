#![allow(dead_code)]

use quantlap_core::linalg::{hermitian_part, CMatrix, C64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Hermitian matrix with entries uniform in the unit square.
pub fn random_hermitian(n: usize, rng: &mut ChaCha8Rng) -> CMatrix {
    let m = CMatrix::from_fn(n, n, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
    hermitian_part(&m)
}

pub fn random_frame(r: usize, n: usize, rng: &mut ChaCha8Rng) -> CMatrix {
    CMatrix::from_fn(r, n, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
}

/// Positive definite `B B* + n Id`-type perturbation of a multiple of the identity.
pub fn random_pd(n: usize, spread: f64, rng: &mut ChaCha8Rng) -> CMatrix {
    let b = CMatrix::from_fn(n, n, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
    CMatrix::identity(n, n) + (&b * b.adjoint()) * C64::new(spread / n as f64, 0.0)
}

pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0f64, |a, z| a.max(z.norm_sqr().sqrt()))
}

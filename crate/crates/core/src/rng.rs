//! Seeded random streams.
//!
//! All randomness comes from ChaCha20 (`rand_chacha`), seeded with
//! `seed_from_u64(seed)`. Independent substreams are selected with
//! `set_stream(stream)`, so item `i` of a batch draws from stream `i`
//! regardless of evaluation order.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::linalg::{Matrix, Vector};

/// Identifier written into every output file.
pub const PRNG_ID: &str = "chacha20-rand_chacha-0.9/seed_from_u64+set_stream";

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn randn(rng: &mut ChaCha20Rng) -> f64 {
    StandardNormal.sample(rng)
}

pub fn randn_vector(rng: &mut ChaCha20Rng, n: usize) -> Vector {
    Vector::from_fn(n, |_, _| randn(rng))
}

/// Column-major fill, matching the storage order of the instance payload.
pub fn randn_matrix(rng: &mut ChaCha20Rng, rows: usize, cols: usize) -> Matrix {
    let data: Vec<f64> = (0..rows * cols).map(|_| randn(rng)).collect();
    Matrix::from_vec(rows, cols, data)
}

/// Uniform direction scaled to a uniform draw in the ball of `radius`
/// restricted to the coordinates `coords`.
pub fn ball_sample(rng: &mut ChaCha20Rng, n: usize, coords: &[usize], radius: f64) -> Vector {
    use rand::Rng;
    let mut d = Vector::zeros(n);
    if coords.is_empty() || radius == 0.0 {
        return d;
    }
    for &i in coords {
        d[i] = randn(rng);
    }
    let norm = d.norm();
    if norm == 0.0 {
        return d;
    }
    let u: f64 = rng.random();
    let scale = radius * u.powf(1.0 / coords.len() as f64) / norm;
    d * scale
}

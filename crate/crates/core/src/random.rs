//! Seeded random plants and signals for property checks.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::Result;
use crate::linalg::{self, Mat, Vector};
use crate::model::{LtiPlant, LtvPlant, Stage};

/// Stream used for plant matrices; disturbance streams start above it.
const PLANT_STREAM: u64 = 1 << 32;

pub fn rng(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut r = ChaCha20Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

pub fn gaussian_mat(rng: &mut ChaCha20Rng, rows: usize, cols: usize) -> Mat {
    // row-major draw order
    let mut m = Mat::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            m[(i, j)] = StandardNormal.sample(rng);
        }
    }
    m
}

pub fn gaussian_vec(rng: &mut ChaCha20Rng, len: usize) -> Vector {
    Vector::from_iterator(len, (0..len).map(|_| StandardNormal.sample(rng)))
}

/// `len` i.i.d. standard normal vectors of dimension `dim`.
pub fn gaussian_sequence(rng: &mut ChaCha20Rng, dim: usize, len: usize) -> Vec<Vector> {
    (0..len).map(|_| gaussian_vec(rng, dim)).collect()
}

/// Plant with Gaussian `B_u`, `B_w`, `A` rescaled to a spectral radius drawn
/// from `[0.3, 1.2]`, and `Q = C'C + 0.1 I` with Gaussian `C`.
pub fn random_stage(rng: &mut ChaCha20Rng, n: usize, m: usize, p: usize) -> Result<Stage> {
    let mut a = gaussian_mat(rng, n, n);
    let radius = linalg::spectral_radius(&a)?;
    let target: f64 = rng.random_range(0.3..1.2);
    if radius > 1e-9 {
        a *= target / radius;
    }
    let b_u = gaussian_mat(rng, n, m);
    let b_w = gaussian_mat(rng, n, p);
    let c = gaussian_mat(rng, n, n);
    let q = c.transpose() * c + Mat::identity(n, n) * 0.1;
    Stage::new(a, b_u, b_w, q)
}

pub fn random_plant(seed: u64, n: usize, m: usize, p: usize) -> Result<LtiPlant> {
    let mut r = rng(seed, PLANT_STREAM);
    let s = random_stage(&mut r, n, m, p)?;
    LtiPlant::new(s.a, s.b_u, s.b_w, s.q)
}

/// Time-varying plant with independently drawn stages.
pub fn random_ltv(seed: u64, n: usize, m: usize, p: usize, horizon: usize) -> Result<LtvPlant> {
    let mut r = rng(seed, PLANT_STREAM);
    let stages = (0..horizon).map(|_| random_stage(&mut r, n, m, p)).collect::<Result<Vec<_>>>()?;
    LtvPlant::new(stages, None)
}

/// Dimensions `(n, m, p)` with `n <= max_n` and `m, p <= n`, derived from `seed`.
pub fn random_dims(seed: u64, max_n: usize) -> (usize, usize, usize) {
    let mut r = rng(seed, 0);
    let n = r.random_range(1..=max_n);
    (n, r.random_range(1..=n), r.random_range(1..=n))
}

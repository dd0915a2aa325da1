#![allow(dead_code)]

use gtf_hsr::{DenseMatrix, DenseTensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rmat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DenseMatrix {
    DenseMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
}

pub fn rten(rng: &mut ChaCha8Rng, dims: &[usize]) -> DenseTensor {
    DenseTensor::from_fn(dims, |_| rng.random_range(-1.0..1.0))
}

pub fn rel(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
    a.sub(b).frobenius_norm() / b.frobenius_norm().max(f64::MIN_POSITIVE)
}

pub fn rel_t(a: &DenseTensor, b: &DenseTensor) -> f64 {
    a.sub(b).frobenius_norm() / b.frobenius_norm().max(f64::MIN_POSITIVE)
}

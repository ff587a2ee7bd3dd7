#![allow(dead_code)]

use nalgebra::DMatrix;
use ompt::linalg::normalize_columns;
use ompt::{Dictionary, SparseSignal, SupportSet};
use rand::Rng;
use rand_distr::StandardNormal;

pub fn gaussian_matrix<R: Rng>(n: usize, d: usize, rng: &mut R) -> DMatrix<f64> {
    DMatrix::from_fn(n, d, |_, _| rng.sample(StandardNormal))
}

pub fn random_dictionary<R: Rng>(n: usize, d: usize, rng: &mut R) -> Dictionary {
    normalize_columns(&gaussian_matrix(n, d, rng)).unwrap()
}

/// Orthonormal columns plus a small Gaussian perturbation, renormalized.
/// Requires `d <= n`.
pub fn near_orthonormal_dictionary<R: Rng>(
    n: usize,
    d: usize,
    sigma: f64,
    rng: &mut R,
) -> Dictionary {
    assert!(d <= n);
    let q = gaussian_matrix(n, d, rng).qr().q();
    let g = gaussian_matrix(n, d, rng);
    normalize_columns(&(q + g * sigma)).unwrap()
}

/// `k`-sparse signal with magnitudes uniform on `[lo, hi]` and random signs.
pub fn planted_signal<R: Rng>(d: usize, k: usize, lo: f64, hi: f64, rng: &mut R) -> SparseSignal {
    let support = rand::seq::index::sample(rng, d, k).into_vec();
    let values = (0..k)
        .map(|_| {
            let m = rng.random_range(lo..=hi);
            if rng.random_bool(0.5) {
                m
            } else {
                -m
            }
        })
        .collect();
    SparseSignal::new(SupportSet::new(support, d).unwrap(), values).unwrap()
}

pub fn relative_error(estimate: &[f64], truth: &[f64]) -> f64 {
    let num: f64 = estimate
        .iter()
        .zip(truth)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let den: f64 = truth.iter().map(|x| x * x).sum::<f64>().sqrt();
    num / den
}

pub fn squared_error(estimate: &[f64], truth: &[f64]) -> f64 {
    estimate
        .iter()
        .zip(truth)
        .map(|(a, b)| (a - b) * (a - b))
        .sum()
}

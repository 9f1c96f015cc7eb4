#![allow(dead_code)]

use authsim_core::linalg::{c, diag, CMat};
use authsim_core::statespace::StateSpaceModel;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_complex(rows: usize, cols: usize, r: &mut impl Rng) -> CMat {
    CMat::from_fn(rows, cols, |_, _| Complex64::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)))
}

/// `B Bᴴ + floor·I`
pub fn random_psd(n: usize, floor: f64, r: &mut impl Rng) -> CMat {
    let b = random_complex(n, n, r);
    &b * b.adjoint() + CMat::identity(n, n).scale(floor)
}

/// Stable diagonalizable `A = W Λ W⁻¹` with a well-conditioned `W`.
pub fn random_stable(n: usize, r: &mut impl Rng) -> CMat {
    let w = CMat::identity(n, n) + random_complex(n, n, r).scale(0.3 / n as f64);
    let lam = CMat::from_fn(n, n, |i, j| {
        if i == j {
            Complex64::new(-r.random_range(0.2..2.0), r.random_range(-1.0..1.0))
        } else {
            c(0.0)
        }
    });
    &w * lam * w.try_inverse().unwrap()
}

pub fn random_model(n: usize, m: usize, sensors: usize, r: &mut impl Rng) -> StateSpaceModel {
    let a = random_stable(n, r);
    let u = random_psd(n, 0.1, r);
    let outputs = (0..sensors).map(|_| random_complex(m, n, r)).collect();
    let noise = diag(&(0..m).map(|_| r.random_range(0.1..1.0)).collect::<Vec<_>>());
    StateSpaceModel::new(a, u, outputs, noise).unwrap()
}

/// Mean and standard error of a sample.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

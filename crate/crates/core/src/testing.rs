//! Random instances for unit tests.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::problem::QProblem;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_matrix(rng: &mut impl Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

pub fn normal_vector(rng: &mut impl Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

/// Strictly convex, strictly feasible problem with `n_eq` equality rows
/// followed by `m - n_eq` two-sided inequality rows.
pub fn random_problem(rng: &mut impl Rng, n: usize, m: usize, n_eq: usize) -> QProblem {
    let a = normal_matrix(rng, n, n);
    let h = a.transpose() * &a / n as f64 + DMatrix::identity(n, n) * 0.5;
    let h = (&h + h.transpose()) * 0.5;
    let g = normal_vector(rng, n);
    let gmat = normal_matrix(rng, m, n);
    let y0 = normal_vector(rng, n);
    let gy = &gmat * y0;
    let mut c = gy.clone();
    let mut d = gy;
    for i in n_eq..m {
        c[i] -= rng.random::<f64>() + 0.1;
        d[i] += rng.random::<f64>() + 0.1;
    }
    QProblem::new(h, g, gmat, c, d).unwrap()
}

/// `min ½·h·y² + g·y  s.t.  c ≤ y ≤ d` in one variable.
pub fn scalar_problem(h: f64, g: f64, c: f64, d: f64) -> QProblem {
    QProblem::new(
        DMatrix::from_element(1, 1, h),
        DVector::from_element(1, g),
        DMatrix::from_element(1, 1, 1.0),
        DVector::from_element(1, c),
        DVector::from_element(1, d),
    )
    .unwrap()
}

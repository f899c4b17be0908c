#![allow(dead_code)]

use ddl_core::spectral::SpectralTransform;
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_matrix(n: usize, d: usize, seed: u64) -> DMatrix<f64> {
    let mut r = rng(seed);
    DMatrix::from_fn(n, d, |_, _| StandardNormal.sample(&mut r))
}

pub fn gaussian_vector(n: usize, seed: u64) -> DVector<f64> {
    let mut r = rng(seed);
    DVector::from_fn(n, |_, _| StandardNormal.sample(&mut r))
}

/// `P = I - Σ_l (1 - s_l) u_l u_lᵀ`, materialised from the stored factors.
pub fn dense_p(t: &SpectralTransform<f64>) -> DMatrix<f64> {
    let mut p = DMatrix::identity(t.n(), t.n());
    for l in 0..t.shrink_factors().len() {
        let u = t.u().column(l);
        p -= (1.0 - t.shrink_factors()[l]) * &u * u.transpose();
    }
    p
}

/// `P` built from scratch out of a full SVD: singular values above the
/// `⌊ρm⌋`-th largest are capped at it.
pub fn dense_trim_oracle(x: &DMatrix<f64>, rho: f64) -> DMatrix<f64> {
    let n = x.nrows();
    let m = n.min(x.ncols());
    let t = (rho * m as f64).floor() as usize;
    let svd = x.clone().svd(true, false);
    let u = svd.u.unwrap();
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let mut p = DMatrix::identity(n, n);
    if t == 0 {
        return p;
    }
    let tau = svd.singular_values[order[t - 1]];
    for &l in &order {
        let s = svd.singular_values[l];
        if s > tau {
            let col = u.column(l);
            p -= (1.0 - tau / s) * &col * col.transpose();
        }
    }
    p
}

pub fn sorted_singular_values(x: &DMatrix<f64>) -> Vec<f64> {
    let mut v: Vec<f64> = x.singular_values().iter().copied().collect();
    v.sort_by(|a, b| b.total_cmp(a));
    v
}

pub fn centre(x: &DMatrix<f64>) -> DMatrix<f64> {
    let mut c = x.clone();
    for mut col in c.column_iter_mut() {
        let m = col.mean();
        col.add_scalar_mut(-m);
    }
    c
}

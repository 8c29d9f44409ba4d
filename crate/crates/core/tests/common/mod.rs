#![allow(dead_code)]

use bssanova::{forward_select, GpModel, Hyperparameters, SelectionConfig};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub fn quick_config(tolerance: usize, max_stage: usize, seed: u64) -> SelectionConfig {
    SelectionConfig {
        tolerance,
        max_stage,
        hyperparameters: Hyperparameters { n_draws: 400, burn_in: 150, seed, ..Default::default() },
        ..Default::default()
    }
}

/// `n` uniform points in `[0, 1]^d` and `f(x) + noise * N(0, 1)`.
pub fn sample(
    n: usize,
    d: usize,
    noise: f64,
    seed: u64,
    f: impl Fn(&[f64]) -> f64,
) -> (DMatrix<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let std = Normal::new(0.0, 1.0).unwrap();
    let x = DMatrix::from_fn(n, d, |_, _| rng.random::<f64>());
    let z = (0..n)
        .map(|i| {
            let row: Vec<f64> = x.row(i).iter().copied().collect();
            f(&row) + noise * std.sample(&mut rng)
        })
        .collect();
    (x, z)
}

pub fn small_model(seed: u64) -> (GpModel, DMatrix<f64>, Vec<f64>) {
    let (x, z) = sample(120, 2, 0.05, seed, |r| (6.0 * r[0]).sin() + r[1] * r[1]);
    let sel = forward_select(&x, &z, &quick_config(2, 4, seed)).unwrap();
    (GpModel::from_selected(sel).unwrap(), x, z)
}

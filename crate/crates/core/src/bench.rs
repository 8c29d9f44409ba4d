//! Wall-clock scaling of design-matrix construction and sampling.

use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::basis::{kl_decompose, DEFAULT_GRID_SIZE};
use crate::design::{build_design_columns, integer_compositions, term_rows, MAX_INTERACTION_ORDER};
use crate::error::Result;
use crate::gibbs::{gibbs_fit, Criterion, Hyperparameters};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScalingConfig {
    pub sizes: Vec<usize>,
    pub n_terms: usize,
    pub n_inputs: usize,
    /// Timing repetitions; the minimum is reported.
    pub repeats: usize,
    pub gibbs_draws: usize,
    pub seed: u64,
}

impl Default for ScalingConfig {
    fn default() -> Self {
        Self {
            sizes: vec![2000, 4000, 8000, 16000],
            n_terms: 40,
            n_inputs: 3,
            repeats: 15,
            gibbs_draws: 100,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub n: usize,
    pub p: usize,
    pub x_seconds: f64,
    pub gibbs_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub config: ScalingConfig,
    /// Fixed P, growing N.
    pub n_sweep: Vec<ScalingRow>,
    /// `x_seconds[i + 1] / x_seconds[i]` over `n_sweep`.
    pub n_ratios: Vec<f64>,
    /// Fixed N (first size), P then 2P.
    pub p_sweep: Vec<ScalingRow>,
    pub p_ratio: f64,
}

/// First `p` terms of the forward-selection order on `n_inputs` inputs.
pub fn leading_terms(n_inputs: usize, p: usize) -> Vec<Vec<usize>> {
    let mut rows = vec![vec![0; n_inputs]];
    let mut ind = 1;
    while rows.len() < p {
        for comp in integer_compositions(ind, MAX_INTERACTION_ORDER) {
            rows.extend(term_rows(&comp, n_inputs));
        }
        ind += 1;
    }
    rows.truncate(p);
    rows
}

fn time_design(norm: &DMatrix<f64>, rows: &[Vec<usize>], repeats: usize) -> Result<(f64, DMatrix<f64>)> {
    let n_basis = rows.iter().flatten().copied().max().unwrap_or(0);
    let bs = kl_decompose(n_basis, DEFAULT_GRID_SIZE)?;
    let mut best = f64::INFINITY;
    let mut x = DMatrix::zeros(0, 0);
    for _ in 0..repeats.max(1) {
        let t0 = Instant::now();
        x = build_design_columns(norm, rows, &bs)?;
        best = best.min(t0.elapsed().as_secs_f64());
    }
    Ok((best, x))
}

fn measure(cfg: &ScalingConfig, n: usize, rows: &[Vec<usize>], rng: &mut ChaCha8Rng) -> Result<ScalingRow> {
    let norm = DMatrix::from_fn(n, cfg.n_inputs, |_, _| rng.random::<f64>());
    let (x_seconds, x) = time_design(&norm, rows, cfg.repeats)?;
    let z: Vec<f64> = (0..n).map(|e| norm.row(e).sum() + 0.1 * rng.random::<f64>()).collect();
    let h = Hyperparameters {
        n_draws: cfg.gibbs_draws.max(2),
        burn_in: cfg.gibbs_draws.max(2) / 2,
        seed: cfg.seed,
        ..Hyperparameters::default()
    };
    let t0 = Instant::now();
    gibbs_fit(&x, &z, &h, Criterion::Bic)?;
    Ok(ScalingRow {
        n,
        p: rows.len(),
        x_seconds,
        gibbs_seconds: t0.elapsed().as_secs_f64(),
    })
}

pub fn bench_scaling(cfg: &ScalingConfig) -> Result<ScalingReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let rows = leading_terms(cfg.n_inputs, cfg.n_terms);
    let n_sweep = cfg
        .sizes
        .iter()
        .map(|&n| measure(cfg, n, &rows, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    let n_ratios = n_sweep.windows(2).map(|w| w[1].x_seconds / w[0].x_seconds).collect();

    let n0 = cfg.sizes.first().copied().unwrap_or(2000);
    let rows2 = leading_terms(cfg.n_inputs, 2 * cfg.n_terms);
    let p_sweep = vec![
        measure(cfg, n0, &rows, &mut rng)?,
        measure(cfg, n0, &rows2, &mut rng)?,
    ];
    let p_ratio = p_sweep[1].x_seconds / p_sweep[0].x_seconds;
    Ok(ScalingReport {
        config: cfg.clone(),
        n_sweep,
        n_ratios,
        p_sweep,
        p_ratio,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn leading_terms_count_and_order() {
        let rows = leading_terms(3, 10);
        assert_eq!(rows.len(), 10);
        assert_eq!(rows[0], vec![0, 0, 0]);
        assert_eq!(rows[1], vec![1, 0, 0]);
        assert_eq!(rows[4], vec![1, 1, 0]);
    }
}

//! Main-effect BSS-ANOVA covariance kernel.
//!
//! `K(s, t) = B1(s)B1(t) + B2(s)B2(t) - B4(|s - t|) / 24` on `[0, 1]^2`: a
//! quadratic response surface plus a stationary deviation. The stationary
//! part carries a minus sign; with a plus sign the Gram matrix is indefinite.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Sign applied to the `B4(|s - t|) / 24` term. Part of the basis cache key.
pub const STATIONARY_SIGN: f64 = -1.0;

/// Bernoulli polynomial of order 1, 2 or 4.
pub fn bernoulli_poly(k: u32, x: f64) -> Result<f64> {
    match k {
        1 => Ok(b1(x)),
        2 => Ok(b2(x)),
        4 => Ok(b4(x)),
        _ => Err(Error::invalid(format!(
            "Bernoulli polynomial order {k} is not supported (expected 1, 2 or 4)"
        ))),
    }
}

#[inline]
fn b1(x: f64) -> f64 {
    x - 0.5
}

#[inline]
fn b2(x: f64) -> f64 {
    x * x - x + 1.0 / 6.0
}

#[inline]
fn b4(x: f64) -> f64 {
    let x2 = x * x;
    x2 * x2 - 2.0 * x2 * x + x2 - 1.0 / 30.0
}

/// Kernel value for `s, t` in `[0, 1]`.
pub fn main_effect_kernel(s: f64, t: f64) -> Result<f64> {
    for (name, v) in [("s", s), ("t", t)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::Domain(format!(
                "kernel argument {name} = {v} lies outside [0, 1]"
            )));
        }
    }
    Ok(kernel_unchecked(s, t))
}

#[inline]
pub(crate) fn kernel_unchecked(s: f64, t: f64) -> f64 {
    b1(s) * b1(t) + b2(s) * b2(t) + STATIONARY_SIGN * b4((s - t).abs()) / 24.0
}

/// Uniform grid of `grid_size` points spanning `[0, 1]`.
pub fn uniform_grid(grid_size: usize) -> Vec<f64> {
    let denom = (grid_size - 1) as f64;
    (0..grid_size).map(|i| i as f64 / denom).collect()
}

/// Gram matrix of the kernel on `grid`. The upper triangle is mirrored so
/// the result is exactly symmetric.
pub fn gram_matrix(grid: &[f64]) -> DMatrix<f64> {
    let n = grid.len();
    let mut k = DMatrix::zeros(n, n);
    for j in 0..n {
        for i in 0..=j {
            let v = kernel_unchecked(grid[i], grid[j]);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};

    #[test]
    fn bernoulli_values() {
        assert_eq!(bernoulli_poly(1, 0.5).unwrap(), 0.0);
        assert_abs_diff_eq!(bernoulli_poly(2, 0.0).unwrap(), 1.0 / 6.0, epsilon = 1e-15);
        assert_abs_diff_eq!(bernoulli_poly(4, 0.0).unwrap(), -1.0 / 30.0, epsilon = 1e-15);
        // B4(1) = B4(0), B2(1) = B2(0)
        assert_abs_diff_eq!(bernoulli_poly(4, 1.0).unwrap(), -1.0 / 30.0, epsilon = 1e-15);
        assert_abs_diff_eq!(bernoulli_poly(2, 1.0).unwrap(), 1.0 / 6.0, epsilon = 1e-15);
    }

    #[test]
    fn bernoulli_rejects_unsupported_order() {
        for k in [0, 3, 5] {
            assert!(matches!(
                bernoulli_poly(k, 0.2),
                Err(Error::InvalidArgument(_))
            ));
        }
    }

    #[test]
    fn kernel_at_center() {
        assert_abs_diff_eq!(main_effect_kernel(0.5, 0.5).unwrap(), 1.0 / 120.0, epsilon = 1e-15);
    }

    #[test]
    fn kernel_symmetric() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let s: f64 = rng.random();
            let t: f64 = rng.random();
            assert_eq!(main_effect_kernel(s, t).unwrap(), main_effect_kernel(t, s).unwrap());
        }
    }

    #[test]
    fn kernel_domain_error() {
        assert!(matches!(main_effect_kernel(-0.1, 0.5), Err(Error::Domain(_))));
        assert!(matches!(main_effect_kernel(0.5, 1.01), Err(Error::Domain(_))));
        assert!(main_effect_kernel(f64::NAN, 0.5).is_err());
    }

    #[test]
    fn gram_exactly_symmetric() {
        let g = uniform_grid(51);
        let k = gram_matrix(&g);
        assert_eq!(k, k.transpose());
        assert_eq!(g[0], 0.0);
        assert_eq!(g[50], 1.0);
    }
}

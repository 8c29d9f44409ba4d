//! Blocked Gibbs sampler for the linear-in-coefficients BSS-ANOVA model.
//!
//! Model: `Z = X beta + eps`, `eps ~ N(0, sigma2)`, `beta ~ N(0, sigma2 tau2 I)`,
//! `sigma2 ~ IG(a, b)`, `tau2 ~ IG(a_tau, b_tau)`. Each sweep draws
//! `beta | sigma2, tau2`, then `sigma2 | beta, tau2`, then `tau2 | beta, sigma2`.

use std::fmt;

use log::warn;
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Floor on the plug-in noise variance for perfect fits.
const SIGMA2_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyperparameters {
    /// IG shape for `sigma2`.
    pub a: f64,
    /// IG scale for `sigma2`.
    pub b: f64,
    pub a_tau: f64,
    pub b_tau: f64,
    pub n_draws: usize,
    pub burn_in: usize,
    pub seed: u64,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Self {
            a: 4.0,
            b: 1.0,
            a_tau: 4.0,
            b_tau: 10.0,
            n_draws: 2000,
            burn_in: 1000,
            seed: 0,
        }
    }
}

impl Hyperparameters {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        for (name, v) in [("a", self.a), ("b", self.b), ("a_tau", self.a_tau), ("b_tau", self.b_tau)] {
            if !(v > 0.0 && v.is_finite()) {
                problems.push(format!("{name} must be positive and finite (got {v})"));
            }
        }
        if self.burn_in >= self.n_draws {
            problems.push(format!(
                "burn_in ({}) must be smaller than n_draws ({})",
                self.burn_in, self.n_draws
            ));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::invalid(problems.join("; ")))
        }
    }

    fn initial_sigma2(&self) -> f64 {
        if self.a > 1.0 {
            self.b / (self.a - 1.0)
        } else {
            1.0
        }
    }

    fn initial_tau2(&self) -> f64 {
        if self.a_tau > 1.0 {
            self.b_tau / (self.a_tau - 1.0)
        } else {
            1.0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    Bic,
    Aic,
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Criterion::Bic => "bic",
            Criterion::Aic => "aic",
        })
    }
}

impl std::str::FromStr for Criterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bic" => Ok(Criterion::Bic),
            "aic" => Ok(Criterion::Aic),
            other => Err(Error::invalid(format!("unknown criterion '{other}' (bic|aic)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriterionValue {
    pub kind: Criterion,
    pub value: f64,
}

/// Retained post-burn-in draws and their summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Posterior {
    /// One retained draw per entry, each of length P.
    pub beta_draws: Vec<Vec<f64>>,
    pub sigma2_draws: Vec<f64>,
    pub tau2_draws: Vec<f64>,
    pub beta_mean: Vec<f64>,
    pub criterion: CriterionValue,
}

impl Posterior {
    pub fn n_terms(&self) -> usize {
        self.beta_mean.len()
    }

    /// Per-coefficient posterior standard deviation of the retained draws.
    pub fn beta_sd(&self) -> Vec<f64> {
        let p = self.beta_mean.len();
        let n = self.beta_draws.len() as f64;
        (0..p)
            .map(|j| {
                let m = self.beta_mean[j];
                let ss: f64 = self.beta_draws.iter().map(|d| (d[j] - m).powi(2)).sum();
                (ss / (n - 1.0).max(1.0)).sqrt()
            })
            .collect()
    }
}

pub fn sigma2_mean(p: &Posterior) -> f64 {
    p.sigma2_draws.iter().sum::<f64>() / p.sigma2_draws.len() as f64
}

/// Sufficient statistics of one regression problem, computed once per fit.
pub struct Suffstats {
    pub xtx: DMatrix<f64>,
    pub xtz: DVector<f64>,
    pub ztz: f64,
    pub n: usize,
}

impl Suffstats {
    pub fn new(x: &DMatrix<f64>, z: &[f64]) -> Result<Self> {
        if x.nrows() != z.len() {
            return Err(Error::invalid(format!(
                "design has {} rows but target has {} entries",
                x.nrows(),
                z.len()
            )));
        }
        if let Some(i) = z.iter().position(|v| !v.is_finite()) {
            return Err(Error::data(format!("non-finite target at index {i}")));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::data("non-finite entry in design matrix"));
        }
        let zv = DVector::from_column_slice(z);
        Ok(Self {
            xtx: x.tr_mul(x),
            xtz: x.tr_mul(&zv),
            ztz: zv.dot(&zv),
            n: z.len(),
        })
    }

    pub fn p(&self) -> usize {
        self.xtx.nrows()
    }
}

/// `X'X + I / tau2`, its Cholesky factor, and `mu = (X'X + I/tau2)^{-1} X'Z`.
pub struct RidgeSystem {
    pub ridge: DMatrix<f64>,
    pub chol: Cholesky<f64, Dyn>,
    pub mu: DVector<f64>,
}

impl RidgeSystem {
    pub fn new(xtx: &DMatrix<f64>, xtz: &DVector<f64>, tau2: f64) -> Result<Self> {
        if !(tau2 > 0.0 && tau2.is_finite()) {
            return Err(Error::numerical(format!("tau2 must be positive and finite, got {tau2}")));
        }
        let p = xtx.nrows();
        let mut ridge = xtx.clone();
        for i in 0..p {
            ridge[(i, i)] += 1.0 / tau2;
        }
        let chol = match Cholesky::new(ridge.clone()) {
            Some(c) => c,
            None => {
                let jitter = 1e-10 * ridge.trace() / p as f64;
                warn!("Cholesky of the ridge system failed; retrying with jitter {jitter:e}");
                for i in 0..p {
                    ridge[(i, i)] += jitter;
                }
                Cholesky::new(ridge.clone()).ok_or_else(|| {
                    Error::numerical("Cholesky factorization of X'X + I/tau2 failed")
                })?
            }
        };
        let mu = chol.solve(xtz);
        Ok(Self { ridge, chol, mu })
    }

    /// `mu + sqrt(sigma2) L^{-T} w` with `w ~ N(0, I)`, i.e. a draw from
    /// `MVN(mu, sigma2 (X'X + I/tau2)^{-1})`.
    pub fn draw<R: Rng + ?Sized>(&self, sigma2: f64, rng: &mut R) -> DVector<f64> {
        let p = self.mu.len();
        let w = DVector::from_fn(p, |_, _| StandardNormal.sample(rng));
        let v = self
            .chol
            .l_dirty()
            .tr_solve_lower_triangular(&w)
            .expect("Cholesky factor has a positive diagonal");
        &self.mu + v * sigma2.sqrt()
    }
}

/// One draw of `beta` from its full conditional.
pub fn draw_beta<R: Rng + ?Sized>(
    xtx: &DMatrix<f64>,
    xtz: &DVector<f64>,
    sigma2: f64,
    tau2: f64,
    rng: &mut R,
) -> Result<DVector<f64>> {
    if !(sigma2 > 0.0 && sigma2.is_finite()) {
        return Err(Error::numerical(format!("sigma2 must be positive and finite, got {sigma2}")));
    }
    Ok(RidgeSystem::new(xtx, xtz, tau2)?.draw(sigma2, rng))
}

/// Shape and scale `(a*, b*)` of the `sigma2` conditional:
/// `a* = a + 1 + N/2 + P/2`,
/// `b* = b + [(mu - beta)' R (mu - beta) + Z'Z - mu' X'Z] / 2` with `R = X'X + I/tau2`.
#[allow(clippy::too_many_arguments)]
pub fn sigma2_conditional(
    mu: &DVector<f64>,
    beta: &DVector<f64>,
    xtx_ridge: &DMatrix<f64>,
    ztz: f64,
    xtz: &DVector<f64>,
    h: &Hyperparameters,
    n: usize,
    p: usize,
) -> Result<(f64, f64)> {
    let shape = h.a + 1.0 + n as f64 / 2.0 + p as f64 / 2.0;
    let d = mu - beta;
    let quad = d.dot(&(xtx_ridge * &d));
    let resid = ztz - mu.dot(xtz);
    let scale = h.b + 0.5 * (quad + resid);
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::numerical(format!(
            "sigma2 conditional scale b* = {scale} is not positive \
             (b = {}, quadratic form = {quad}, Z'Z - mu'X'Z = {resid}, N = {n}, P = {p})",
            h.b
        )));
    }
    Ok((shape, scale))
}

#[allow(clippy::too_many_arguments)]
pub fn draw_sigma2<R: Rng + ?Sized>(
    mu: &DVector<f64>,
    beta: &DVector<f64>,
    xtx_ridge: &DMatrix<f64>,
    ztz: f64,
    xtz: &DVector<f64>,
    h: &Hyperparameters,
    n: usize,
    p: usize,
    rng: &mut R,
) -> Result<f64> {
    let (shape, scale) = sigma2_conditional(mu, beta, xtx_ridge, ztz, xtz, h, n, p)?;
    inverse_gamma(shape, scale, rng)
}

/// `a*_tau = a_tau + (P - 1)/2`, `b*_tau = b_tau + beta'beta / (2 sigma2)`.
pub fn tau2_conditional(
    beta: &DVector<f64>,
    sigma2: f64,
    h: &Hyperparameters,
    p: usize,
) -> Result<(f64, f64)> {
    if !(sigma2 > 0.0 && sigma2.is_finite()) {
        return Err(Error::numerical(format!("sigma2 must be positive and finite, got {sigma2}")));
    }
    let shape = h.a_tau + (p as f64 - 1.0) / 2.0;
    let scale = h.b_tau + beta.dot(beta) / (2.0 * sigma2);
    if !(shape > 0.0 && scale.is_finite()) {
        return Err(Error::numerical(format!(
            "tau2 conditional IG({shape}, {scale}) is invalid"
        )));
    }
    Ok((shape, scale))
}

pub fn draw_tau2<R: Rng + ?Sized>(
    beta: &DVector<f64>,
    sigma2: f64,
    h: &Hyperparameters,
    p: usize,
    rng: &mut R,
) -> Result<f64> {
    let (shape, scale) = tau2_conditional(beta, sigma2, h, p)?;
    inverse_gamma(shape, scale, rng)
}

/// `IG(shape, scale)` as the reciprocal of `Gamma(shape, rate = scale)`.
pub fn inverse_gamma<R: Rng + ?Sized>(shape: f64, scale: f64, rng: &mut R) -> Result<f64> {
    let g = Gamma::new(shape, 1.0 / scale)
        .map_err(|e| Error::numerical(format!("invalid IG({shape}, {scale}): {e}")))?;
    let v = 1.0 / g.sample(rng);
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::numerical(format!("IG({shape}, {scale}) produced {v}")))
    }
}

/// Run the sampler on design `x` and targets `z`.
pub fn gibbs_fit(
    x: &DMatrix<f64>,
    z: &[f64],
    h: &Hyperparameters,
    kind: Criterion,
) -> Result<Posterior> {
    h.validate()?;
    let stats = Suffstats::new(x, z)?;
    let (n, p) = (stats.n, stats.p());
    if n < p {
        warn!("fitting {p} terms to only {n} instances");
    }

    let mut rng = ChaCha8Rng::seed_from_u64(h.seed);
    let mut sigma2 = h.initial_sigma2();
    let mut tau2 = h.initial_tau2();
    let keep = h.n_draws - h.burn_in;
    let mut beta_draws = Vec::with_capacity(keep);
    let mut sigma2_draws = Vec::with_capacity(keep);
    let mut tau2_draws = Vec::with_capacity(keep);
    // Rao-Blackwellized: average the conditional means rather than the draws.
    // Draws carry sigma2 * tau2 variance along directions X cannot see, which
    // would otherwise leak into predictions away from the training inputs.
    let mut mu_sum = DVector::zeros(p);

    for it in 0..h.n_draws {
        let sys = RidgeSystem::new(&stats.xtx, &stats.xtz, tau2)?;
        let beta = sys.draw(sigma2, &mut rng);
        sigma2 = draw_sigma2(
            &sys.mu, &beta, &sys.ridge, stats.ztz, &stats.xtz, h, n, p, &mut rng,
        )?;
        tau2 = draw_tau2(&beta, sigma2, h, p, &mut rng)?;
        if it >= h.burn_in {
            mu_sum += &sys.mu;
            beta_draws.push(beta.as_slice().to_vec());
            sigma2_draws.push(sigma2);
            tau2_draws.push(tau2);
        }
    }

    let beta_mean: Vec<f64> = mu_sum.iter().map(|m| m / keep as f64).collect();

    let value = information_criterion(x, z, &beta_mean, kind);
    Ok(Posterior {
        beta_draws,
        sigma2_draws,
        tau2_draws,
        beta_mean,
        criterion: CriterionValue { kind, value },
    })
}

/// Plug-in Gaussian log-likelihood with `sigma2_hat = SSE / N`.
pub fn plug_in_log_likelihood(n: usize, sse: f64) -> f64 {
    let nf = n as f64;
    let mut s2 = sse / nf;
    if s2 < SIGMA2_FLOOR {
        warn!("residual variance {s2:e} floored at {SIGMA2_FLOOR:e}");
        s2 = SIGMA2_FLOOR;
    }
    -0.5 * nf * (2.0 * std::f64::consts::PI * s2).ln() - sse / (2.0 * s2)
}

/// `BIC = P ln N - 2 ln L`, `AIC = 2P - 2 ln L`.
pub fn criterion_from_sse(n: usize, p: usize, sse: f64, kind: Criterion) -> f64 {
    let ll = plug_in_log_likelihood(n, sse);
    match kind {
        Criterion::Bic => p as f64 * (n as f64).ln() - 2.0 * ll,
        Criterion::Aic => 2.0 * p as f64 - 2.0 * ll,
    }
}

/// Criterion of the fit `beta` on `(x, z)`.
pub fn information_criterion(x: &DMatrix<f64>, z: &[f64], beta: &[f64], kind: Criterion) -> f64 {
    let fitted = x * DVector::from_column_slice(beta);
    let sse: f64 = fitted.iter().zip(z).map(|(f, z)| (z - f).powi(2)).sum();
    criterion_from_sse(z.len(), beta.len(), sse, kind)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn hyper(seed: u64) -> Hyperparameters {
        Hyperparameters {
            a: 2.0,
            b: 0.01,
            a_tau: 2.0,
            b_tau: 10.0,
            n_draws: 600,
            burn_in: 200,
            seed,
        }
    }

    #[test]
    fn validate_lists_all_problems() {
        let h = Hyperparameters {
            a: -1.0,
            b_tau: 0.0,
            burn_in: 5,
            n_draws: 5,
            ..Hyperparameters::default()
        };
        let msg = h.validate().unwrap_err().to_string();
        assert!(msg.contains("a must") && msg.contains("b_tau") && msg.contains("burn_in"));
    }

    #[test]
    fn intercept_only_recovers_constant() {
        let n = 200;
        let x = DMatrix::from_element(n, 1, 1.0);
        let c = 3.7;
        let z: Vec<f64> = (0..n).map(|i| c + 1e-6 * ((i % 7) as f64 - 3.0)).collect();
        let post = gibbs_fit(&x, &z, &hyper(1), Criterion::Bic).unwrap();
        assert!((post.beta_mean[0] - c).abs() < 1e-3 * c);
    }

    #[test]
    fn seeded_runs_identical() {
        let x = DMatrix::from_fn(50, 2, |i, j| if j == 0 { 1.0 } else { (i as f64 * 0.1).sin() });
        let z: Vec<f64> = (0..50).map(|i| 1.0 + (i as f64 * 0.1).sin() + 0.01 * (i % 3) as f64).collect();
        let a = gibbs_fit(&x, &z, &hyper(9), Criterion::Aic).unwrap();
        let b = gibbs_fit(&x, &z, &hyper(9), Criterion::Aic).unwrap();
        assert_eq!(a, b);
        let c = gibbs_fit(&x, &z, &hyper(10), Criterion::Aic).unwrap();
        assert_ne!(a.beta_draws, c.beta_draws);
    }

    #[test]
    fn non_finite_target_rejected() {
        let x = DMatrix::from_element(3, 1, 1.0);
        let err = gibbs_fit(&x, &[1.0, f64::NAN, 2.0], &hyper(0), Criterion::Bic).unwrap_err();
        assert!(matches!(err, Error::Data(_)));
    }

    #[test]
    fn vanishing_ridge_gives_least_squares() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 1.0, 1.0, 1.0, 2.0, 1.0, 3.0]);
        let z = DVector::from_vec(vec![1.0, 2.9, 5.1, 7.0]);
        let sys = RidgeSystem::new(&x.tr_mul(&x), &x.tr_mul(&z), 1e12).unwrap();
        let ols = (x.tr_mul(&x)).try_inverse().unwrap() * x.tr_mul(&z);
        assert_relative_eq!(sys.mu, ols, epsilon = 1e-8);
    }

    #[test]
    fn degenerate_covariance_draw_is_mean() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 0.2, 1.0, 0.5, 1.0, 0.9]);
        let z = DVector::from_vec(vec![0.3, 0.1, -0.4]);
        let (xtx, xtz) = (x.tr_mul(&x), x.tr_mul(&z));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let beta = draw_beta(&xtx, &xtz, 1e-12, 1.0, &mut rng).unwrap();
        let mu = RidgeSystem::new(&xtx, &xtz, 1.0).unwrap().mu;
        assert!((beta - mu).amax() < 1e-4);
    }

    #[test]
    fn sigma2_scale_at_exact_fit() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 1.0, 1.0, 1.0, 2.0]);
        let z = DVector::from_vec(vec![1.0, 3.0, 5.0]);
        let (xtx, xtz) = (x.tr_mul(&x), x.tr_mul(&z));
        let sys = RidgeSystem::new(&xtx, &xtz, 10.0).unwrap();
        let h = hyper(0);
        let (shape, scale) =
            sigma2_conditional(&sys.mu, &sys.mu, &sys.ridge, z.dot(&z), &xtz, &h, 3, 2).unwrap();
        assert_eq!(shape, h.a + 1.0 + 1.5 + 1.0);
        let expected = h.b + 0.5 * (z.dot(&z) - sys.mu.dot(&xtz));
        assert_relative_eq!(scale, expected, epsilon = 1e-12);
        assert!(scale >= h.b);
    }

    #[test]
    fn nonpositive_scale_is_numerical_error() {
        let h = Hyperparameters { b: 1e-9, ..hyper(0) };
        let mu = DVector::from_vec(vec![1.0]);
        let r = DMatrix::from_element(1, 1, 1.0);
        let xtz = DVector::from_vec(vec![10.0]);
        let err = sigma2_conditional(&mu, &mu, &r, 1.0, &xtz, &h, 1, 1).unwrap_err();
        assert!(matches!(err, Error::Numerical(_)));
    }

    #[test]
    fn tau2_conditional_forms() {
        let h = hyper(0);
        let zero = DVector::zeros(5);
        assert_eq!(tau2_conditional(&zero, 0.3, &h, 5).unwrap(), (h.a_tau + 2.0, h.b_tau));
        let beta = DVector::from_vec(vec![1.0, -2.0, 0.5, 0.0, 3.0]);
        let (_, s1) = tau2_conditional(&beta, 0.5, &h, 5).unwrap();
        let (_, s2) = tau2_conditional(&beta, 1.0, &h, 5).unwrap();
        assert_relative_eq!(s2 - h.b_tau, 0.5 * (s1 - h.b_tau), epsilon = 1e-12);
    }

    #[test]
    fn criterion_arithmetic() {
        let n = 100;
        let aic = criterion_from_sse(n, 5, 1.0, Criterion::Aic);
        let bic = criterion_from_sse(n, 5, 1.0, Criterion::Bic);
        assert_relative_eq!(aic - bic, 10.0 - 5.0 * (n as f64).ln(), epsilon = 1e-9);
        let b1 = criterion_from_sse(n, 1, 0.0, Criterion::Bic);
        let b2 = criterion_from_sse(n, 2, 0.0, Criterion::Bic);
        assert_relative_eq!(b2 - b1, (n as f64).ln(), epsilon = 1e-9);
    }
}

//! Natural cubic splines on a uniform grid.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Interpolating cubic spline with zero second derivative at both ends.
///
/// Knots are `lo + i * (hi - lo) / (n - 1)`. Evaluation outside `[lo, hi]`
/// clamps to the nearest end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NaturalCubicSpline {
    lo: f64,
    hi: f64,
    values: Vec<f64>,
    second_derivs: Vec<f64>,
}

impl NaturalCubicSpline {
    pub fn uniform(lo: f64, hi: f64, values: Vec<f64>) -> Result<Self> {
        let n = values.len();
        if n < 2 {
            return Err(Error::invalid("a spline needs at least two knots"));
        }
        if !(hi > lo) {
            return Err(Error::invalid(format!("spline range [{lo}, {hi}] is empty")));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::data("spline knot values must be finite"));
        }
        let h = (hi - lo) / (n - 1) as f64;
        let second_derivs = natural_second_derivatives(&values, h);
        Ok(Self {
            lo,
            hi,
            values,
            second_derivs,
        })
    }

    /// Rebuild from stored parts (cache loading).
    pub(crate) fn from_parts(lo: f64, hi: f64, values: Vec<f64>, second_derivs: Vec<f64>) -> Self {
        Self {
            lo,
            hi,
            values,
            second_derivs,
        }
    }

    pub fn knot_values(&self) -> &[f64] {
        &self.values
    }

    pub fn second_derivatives(&self) -> &[f64] {
        &self.second_derivs
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        let n = self.values.len();
        let last = (n - 1) as f64;
        let h = (self.hi - self.lo) / last;
        let u = ((x - self.lo) / h).clamp(0.0, last);
        let nearest = u.round();
        // Knot hits return the stored sample exactly.
        if (u - nearest).abs() <= 1e-9 {
            return self.values[nearest as usize];
        }
        let i = (u.floor() as usize).min(n - 2);
        let b = u - i as f64;
        let a = 1.0 - b;
        let (y0, y1) = (self.values[i], self.values[i + 1]);
        let (m0, m1) = (self.second_derivs[i], self.second_derivs[i + 1]);
        a * y0 + b * y1 + ((a * a * a - a) * m0 + (b * b * b - b) * m1) * h * h / 6.0
    }
}

/// Thomas algorithm for `M[i-1] + 4 M[i] + M[i+1] = 6 / h^2 * (y[i+1] - 2 y[i] + y[i-1])`.
fn natural_second_derivatives(y: &[f64], h: f64) -> Vec<f64> {
    let n = y.len();
    let mut m = vec![0.0; n];
    if n < 3 {
        return m;
    }
    let interior = n - 2;
    let scale = 6.0 / (h * h);
    let mut c_prime = vec![0.0; interior];
    let mut d_prime = vec![0.0; interior];
    for k in 0..interior {
        let i = k + 1;
        let rhs = scale * (y[i + 1] - 2.0 * y[i] + y[i - 1]);
        if k == 0 {
            c_prime[0] = 1.0 / 4.0;
            d_prime[0] = rhs / 4.0;
        } else {
            let denom = 4.0 - c_prime[k - 1];
            c_prime[k] = 1.0 / denom;
            d_prime[k] = (rhs - d_prime[k - 1]) / denom;
        }
    }
    m[interior] = d_prime[interior - 1];
    for k in (0..interior - 1).rev() {
        m[k + 1] = d_prime[k] - c_prime[k] * m[k + 2];
    }
    m
}

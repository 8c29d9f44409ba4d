//! Trained model container: prediction, ensembles and model files.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::basis::{BasisDescriptor, BasisSet};
use crate::design::{FactorCache, NormalizationBounds, TermMatrix};
use crate::error::{Error, Result};
use crate::gibbs::{CriterionValue, Hyperparameters};
use crate::selection::SelectedModel;

pub const MODEL_FORMAT: &str = "bssanova-model";
pub const MODEL_VERSION: u32 = 1;
/// Curves drawn for uncertainty bands unless told otherwise.
pub const DEFAULT_CURVES: usize = 40;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarSummary {
    pub mean: f64,
    pub sd: f64,
}

impl ScalarSummary {
    fn of(v: &[f64]) -> Self {
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
        Self {
            mean,
            sd: var.sqrt(),
        }
    }
}

/// Retained coefficient draws with their noise and prior variances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetainedDraws {
    pub beta: Vec<Vec<f64>>,
    pub sigma2: Vec<f64>,
    pub tau2: Vec<f64>,
}

/// On-disk model document (also the in-memory model minus the basis).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    #[serde(default)]
    input_names: Vec<String>,
    term_matrix: TermMatrix,
    bounds: NormalizationBounds,
    basis: BasisDescriptor,
    beta_mean: Vec<f64>,
    sigma2: ScalarSummary,
    tau2: ScalarSummary,
    criterion: CriterionValue,
    hyperparameters: Hyperparameters,
    best_substage: usize,
    draws: Option<RetainedDraws>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GpModel {
    /// Optional column names of the raw inputs, in order.
    pub input_names: Vec<String>,
    pub term_matrix: TermMatrix,
    pub bounds: NormalizationBounds,
    pub basis_descriptor: BasisDescriptor,
    pub beta_mean: Vec<f64>,
    pub sigma2: ScalarSummary,
    pub tau2: ScalarSummary,
    pub criterion: CriterionValue,
    pub hyperparameters: Hyperparameters,
    pub best_substage: usize,
    pub draws: Option<RetainedDraws>,
    basis: Arc<BasisSet>,
}

/// Ensemble prediction: one column per curve plus per-row 95% bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct DrawPrediction {
    pub curves: DMatrix<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl GpModel {
    pub fn from_selected(sel: SelectedModel) -> Result<Self> {
        let p = sel.posterior;
        let model = Self {
            basis: Arc::new(BasisSet::from_descriptor(sel.basis)?),
            input_names: Vec::new(),
            term_matrix: sel.term_matrix,
            bounds: sel.bounds,
            basis_descriptor: sel.basis,
            sigma2: ScalarSummary::of(&p.sigma2_draws),
            tau2: ScalarSummary::of(&p.tau2_draws),
            beta_mean: p.beta_mean,
            criterion: p.criterion,
            hyperparameters: sel.hyperparameters,
            best_substage: sel.best_substage,
            draws: Some(RetainedDraws {
                beta: p.beta_draws,
                sigma2: p.sigma2_draws,
                tau2: p.tau2_draws,
            }),
        };
        model.check()?;
        Ok(model)
    }

    /// Same model without retained draws.
    pub fn without_draws(&self) -> Self {
        Self {
            draws: None,
            ..self.clone()
        }
    }

    /// Copy with `beta_mean` replaced (dimension-checked).
    pub fn with_coefficients(&self, beta: Vec<f64>) -> Result<Self> {
        let m = Self {
            beta_mean: beta,
            ..self.clone()
        };
        m.check()?;
        Ok(m)
    }

    fn check(&self) -> Result<()> {
        let p = self.term_matrix.n_terms();
        if self.term_matrix.n_inputs() != self.bounds.n_inputs() {
            return Err(Error::Format(format!(
                "term matrix has {} inputs, bounds have {}",
                self.term_matrix.n_inputs(),
                self.bounds.n_inputs()
            )));
        }
        if !self.input_names.is_empty() && self.input_names.len() != self.n_inputs() {
            return Err(Error::Format(format!(
                "{} input names for {} inputs",
                self.input_names.len(),
                self.n_inputs()
            )));
        }
        if self.beta_mean.len() != p {
            return Err(Error::Format(format!(
                "{} coefficients for {p} terms",
                self.beta_mean.len()
            )));
        }
        if self.term_matrix.max_order() > self.basis.n_basis() {
            return Err(Error::Format(format!(
                "terms use basis order {} but only {} functions are available",
                self.term_matrix.max_order(),
                self.basis.n_basis()
            )));
        }
        if let Some(d) = &self.draws {
            if d.beta.iter().any(|b| b.len() != p)
                || d.sigma2.len() != d.beta.len()
                || d.tau2.len() != d.beta.len()
            {
                return Err(Error::Format("retained draws have inconsistent shapes".into()));
            }
        }
        Ok(())
    }

    pub fn n_inputs(&self) -> usize {
        self.term_matrix.n_inputs()
    }

    pub fn n_terms(&self) -> usize {
        self.term_matrix.n_terms()
    }

    pub fn basis(&self) -> &BasisSet {
        &self.basis
    }

    pub fn retained_draws(&self) -> usize {
        self.draws.as_ref().map_or(0, |d| d.beta.len())
    }

    /// Design matrix of `raw_inputs` for this model's terms.
    pub fn design(&self, raw_inputs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let norm = self.bounds.normalize(raw_inputs)?;
        FactorCache::new(&norm).columns(self.term_matrix.rows(), &self.basis)
    }

    /// `X beta_mean` at each row of `raw_inputs`.
    pub fn predict_mean(&self, raw_inputs: &DMatrix<f64>) -> Result<Vec<f64>> {
        let x = self.design(raw_inputs)?;
        Ok((x * DVector::from_column_slice(&self.beta_mean)).as_slice().to_vec())
    }

    /// Prediction at a single raw point with arbitrary coefficients.
    pub fn eval_point(&self, x: &[f64], coeffs: &[f64]) -> f64 {
        let n = self.n_inputs();
        let k_max = self.basis.n_basis();
        let mut theta = vec![0.0; n];
        self.bounds.normalize_point(x, &mut theta);
        // table[i * k_max + (k - 1)] = phi_k(theta_i)
        let mut table = vec![0.0; n * k_max];
        for (i, &t) in theta.iter().enumerate() {
            for k in 1..=k_max {
                table[i * k_max + k - 1] = self.basis.eval_unchecked(k, t);
            }
        }
        let mut acc = 0.0;
        for (row, &c) in self.term_matrix.rows().iter().zip(coeffs) {
            let mut v = c;
            for (i, &m) in row.iter().enumerate() {
                if m > 0 {
                    v *= table[i * k_max + m - 1];
                }
            }
            acc += v;
        }
        acc
    }

    /// Evenly spaced indices into the retained draws.
    pub fn draw_indices(&self, n_curves: usize) -> Result<Vec<usize>> {
        let r = self.retained_draws();
        if self.draws.is_none() {
            return Err(Error::Capability(
                "model was saved without coefficient draws".into(),
            ));
        }
        if n_curves == 0 || n_curves > r {
            return Err(Error::invalid(format!(
                "n_curves must be in 1..={r}, got {n_curves}"
            )));
        }
        Ok((0..n_curves).map(|j| j * r / n_curves).collect())
    }

    /// Coefficient vector of retained draw `idx`.
    pub fn draw(&self, idx: usize) -> Option<&[f64]> {
        self.draws.as_ref().and_then(|d| d.beta.get(idx)).map(|b| b.as_slice())
    }

    /// `n_curves` evenly spaced draw predictions and their 2.5/97.5 percentiles.
    pub fn predict_draws(&self, raw_inputs: &DMatrix<f64>, n_curves: usize) -> Result<DrawPrediction> {
        let idx = self.draw_indices(n_curves)?;
        let draws = self.draws.as_ref().expect("checked by draw_indices");
        let x = self.design(raw_inputs)?;
        let p = self.n_terms();
        let mut b = DMatrix::zeros(p, n_curves);
        for (c, &i) in idx.iter().enumerate() {
            b.column_mut(c).copy_from_slice(&draws.beta[i]);
        }
        let curves = x * b;
        let mut lower = Vec::with_capacity(curves.nrows());
        let mut upper = Vec::with_capacity(curves.nrows());
        for row in curves.row_iter() {
            let v: Vec<f64> = row.iter().copied().collect();
            let (lo, hi) = percentile_band(&v);
            lower.push(lo);
            upper.push(hi);
        }
        Ok(DrawPrediction {
            curves,
            lower,
            upper,
        })
    }

    pub fn to_json(&self) -> Result<Vec<u8>> {
        let file = ModelFile {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            input_names: self.input_names.clone(),
            term_matrix: self.term_matrix.clone(),
            bounds: self.bounds.clone(),
            basis: self.basis_descriptor,
            beta_mean: self.beta_mean.clone(),
            sigma2: self.sigma2.clone(),
            tau2: self.tau2.clone(),
            criterion: self.criterion,
            hyperparameters: self.hyperparameters,
            best_substage: self.best_substage,
            draws: self.draws.clone(),
        };
        serde_json::to_vec_pretty(&file).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let file: ModelFile =
            serde_json::from_slice(bytes).map_err(|e| Error::Format(format!("unreadable model: {e}")))?;
        if file.format != MODEL_FORMAT {
            return Err(Error::Format(format!("unexpected format tag '{}'", file.format)));
        }
        if file.version != MODEL_VERSION {
            return Err(Error::Format(format!(
                "model version {} is not supported (expected {MODEL_VERSION})",
                file.version
            )));
        }
        let model = Self {
            basis: Arc::new(BasisSet::from_descriptor(file.basis)?),
            input_names: file.input_names,
            term_matrix: file.term_matrix,
            bounds: file.bounds,
            basis_descriptor: file.basis,
            beta_mean: file.beta_mean,
            sigma2: file.sigma2,
            tau2: file.tau2,
            criterion: file.criterion,
            hyperparameters: file.hyperparameters,
            best_substage: file.best_substage,
            draws: file.draws,
        };
        model.check()?;
        Ok(model)
    }
}

pub fn save_model(model: &GpModel, path: &Path) -> Result<()> {
    fs::write(path, model.to_json()?)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<GpModel> {
    GpModel::from_json(&fs::read(path)?)
}

/// Linear-interpolated percentile of already sorted data, `q` in `[0, 1]`.
pub fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Empirical 2.5% and 97.5% percentiles.
pub fn percentile_band(values: &[f64]) -> (f64, f64) {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    (percentile_sorted(&v, 0.025), percentile_sorted(&v, 0.975))
}

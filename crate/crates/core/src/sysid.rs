//! Model-free dynamic system identification.
//!
//! State derivatives are estimated by finite differences and each one is
//! regressed on the concurrent states and forcing with forward selection.
//! The fitted right-hand side is integrated with classical RK4; uncertainty
//! comes from re-integrating whole trajectories under coefficient draws.

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::datasets::{kfold, FoldSpec};
use crate::design::NormalizationBounds;
use crate::error::{Error, Result};
use crate::model::{percentile_band, GpModel, DEFAULT_CURVES};
use crate::selection::{forward_select_with_bounds, SelectionConfig};

/// Relative tolerance on sample spacing within an episode.
const SPACING_RTOL: f64 = 1e-6;

/// One contiguous recording: `states` is `T x d`, `forcing` is `T x f`.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub t: Vec<f64>,
    pub states: DMatrix<f64>,
    pub forcing: DMatrix<f64>,
}

impl Episode {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Uniform sample spacing; fails on non-uniform or non-increasing time.
    pub fn dt(&self) -> Result<f64> {
        if self.t.len() < 2 {
            return Err(Error::data("episode needs at least two samples to define a step"));
        }
        let dt = self.t[1] - self.t[0];
        if !(dt > 0.0) {
            return Err(Error::data("time must be strictly increasing"));
        }
        for (k, w) in self.t.windows(2).enumerate() {
            let step = w[1] - w[0];
            if !(step > 0.0) || (step - dt).abs() > SPACING_RTOL * dt {
                return Err(Error::data(format!(
                    "non-uniform time step at sample {} ({step} vs {dt})",
                    k + 1
                )));
            }
        }
        Ok(dt)
    }

    /// Contiguous sub-range `[start, end)`.
    pub fn slice(&self, start: usize, end: usize) -> Episode {
        Episode {
            t: self.t[start..end].to_vec(),
            states: self.states.rows(start, end - start).into_owned(),
            forcing: self.forcing.rows(start, end - start).into_owned(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesData {
    pub state_names: Vec<String>,
    pub forcing_names: Vec<String>,
    pub episodes: Vec<Episode>,
}

impl TimeSeriesData {
    pub fn n_states(&self) -> usize {
        self.state_names.len()
    }

    pub fn n_forcing(&self) -> usize {
        self.forcing_names.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.episodes.is_empty() {
            return Err(Error::data("time series has no episodes"));
        }
        for (e, ep) in self.episodes.iter().enumerate() {
            if ep.states.nrows() != ep.len() || ep.forcing.nrows() != ep.len() {
                return Err(Error::data(format!("episode {e}: row counts disagree with time")));
            }
            if ep.states.ncols() != self.n_states() || ep.forcing.ncols() != self.n_forcing() {
                return Err(Error::data(format!("episode {e}: column counts disagree with names")));
            }
            if ep.t.iter().chain(ep.states.iter()).chain(ep.forcing.iter()).any(|v| !v.is_finite()) {
                return Err(Error::data(format!("episode {e}: non-finite values")));
            }
            ep.dt().map_err(|err| Error::data(format!("episode {e}: {err}")))?;
        }
        Ok(())
    }
}

/// Regression problems derived from a time series: concurrent inputs
/// `[states | forcing]` and one derivative target per state.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeSet {
    pub inputs: DMatrix<f64>,
    pub targets: Vec<Vec<f64>>,
    /// Episode index of each instance.
    pub episode: Vec<usize>,
}

impl DerivativeSet {
    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.nrows() == 0
    }

    pub fn select(&self, idx: &[usize]) -> DerivativeSet {
        DerivativeSet {
            inputs: self.inputs.select_rows(idx),
            targets: self
                .targets
                .iter()
                .map(|t| idx.iter().map(|&i| t[i]).collect())
                .collect(),
            episode: idx.iter().map(|&i| self.episode[i]).collect(),
        }
    }
}

/// Central differences inside each episode, one-sided at its ends.
pub fn estimate_derivatives(data: &TimeSeriesData) -> Result<DerivativeSet> {
    data.validate()?;
    let d = data.n_states();
    let f = data.n_forcing();
    let total: usize = data.episodes.iter().map(|e| e.len()).sum();
    let mut inputs = DMatrix::zeros(total, d + f);
    let mut targets = vec![Vec::with_capacity(total); d];
    let mut episode = Vec::with_capacity(total);
    let mut row = 0;
    for (e, ep) in data.episodes.iter().enumerate() {
        let t_len = ep.len();
        if t_len < 3 {
            return Err(Error::data(format!("episode {e} has {t_len} samples; at least 3 needed")));
        }
        let dt = ep.dt()?;
        for k in 0..t_len {
            for s in 0..d {
                let x = |i: usize| ep.states[(i, s)];
                let deriv = if k == 0 {
                    (x(1) - x(0)) / dt
                } else if k == t_len - 1 {
                    (x(k) - x(k - 1)) / dt
                } else {
                    (x(k + 1) - x(k - 1)) / (2.0 * dt)
                };
                targets[s].push(deriv);
                inputs[(row, s)] = x(k);
            }
            for u in 0..f {
                inputs[(row, d + u)] = ep.forcing[(k, u)];
            }
            episode.push(e);
            row += 1;
        }
    }
    Ok(DerivativeSet {
        inputs,
        targets,
        episode,
    })
}

/// Right-hand side `x' = f(x, u)`.
pub trait Dynamics {
    fn n_states(&self) -> usize;
    fn derivative(&self, x: &[f64], u: &[f64], out: &mut [f64]);
}

/// Closure-backed dynamics.
pub struct FnDynamics<F> {
    pub n_states: usize,
    pub f: F,
}

impl<F: Fn(&[f64], &[f64], &mut [f64])> Dynamics for FnDynamics<F> {
    fn n_states(&self) -> usize {
        self.n_states
    }

    fn derivative(&self, x: &[f64], u: &[f64], out: &mut [f64]) {
        (self.f)(x, u, out)
    }
}

/// One fitted regressor per state derivative over shared normalization bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpaceModel {
    pub state_names: Vec<String>,
    pub forcing_names: Vec<String>,
    pub models: Vec<GpModel>,
    pub bounds: NormalizationBounds,
    pub dt: f64,
}

#[derive(Serialize, Deserialize)]
struct StateSpaceManifest {
    format: String,
    state_names: Vec<String>,
    forcing_names: Vec<String>,
    dt: f64,
    model_files: Vec<String>,
}

/// Which coefficients drive each state's regressor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coefficients {
    Mean,
    /// Retained draw index, applied to every state model.
    Draw(usize),
}

pub struct ModelDynamics<'a> {
    model: &'a StateSpaceModel,
    coeffs: Vec<&'a [f64]>,
}

impl Dynamics for ModelDynamics<'_> {
    fn n_states(&self) -> usize {
        self.model.models.len()
    }

    fn derivative(&self, x: &[f64], u: &[f64], out: &mut [f64]) {
        let mut input = Vec::with_capacity(x.len() + u.len());
        input.extend_from_slice(x);
        input.extend_from_slice(u);
        for (k, m) in self.model.models.iter().enumerate() {
            out[k] = m.eval_point(&input, self.coeffs[k]);
        }
    }
}

impl StateSpaceModel {
    pub fn n_states(&self) -> usize {
        self.models.len()
    }

    pub fn n_forcing(&self) -> usize {
        self.forcing_names.len()
    }

    pub fn dynamics(&self, which: Coefficients) -> Result<ModelDynamics<'_>> {
        let coeffs = self
            .models
            .iter()
            .enumerate()
            .map(|(k, m)| match which {
                Coefficients::Mean => Ok(m.beta_mean.as_slice()),
                Coefficients::Draw(i) => m.draw(i).ok_or_else(|| {
                    Error::Capability(format!("state {k} model has no retained draw {i}"))
                }),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ModelDynamics {
            model: self,
            coeffs,
        })
    }

    /// Write one model file per state plus `statespace.json`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut files = Vec::new();
        for (name, m) in self.state_names.iter().zip(&self.models) {
            let file = format!("model_{name}.json");
            fs::write(dir.join(&file), m.to_json()?)?;
            files.push(file);
        }
        let manifest = StateSpaceManifest {
            format: "bssanova-statespace".into(),
            state_names: self.state_names.clone(),
            forcing_names: self.forcing_names.clone(),
            dt: self.dt,
            model_files: files,
        };
        let bytes = serde_json::to_vec_pretty(&manifest).map_err(|e| Error::Format(e.to_string()))?;
        fs::write(dir.join("statespace.json"), bytes)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest: StateSpaceManifest = serde_json::from_slice(&fs::read(dir.join("statespace.json"))?)
            .map_err(|e| Error::Format(format!("unreadable state-space manifest: {e}")))?;
        let models = manifest
            .model_files
            .iter()
            .map(|f| GpModel::from_json(&fs::read(dir.join(f))?))
            .collect::<Result<Vec<_>>>()?;
        let bounds = models
            .first()
            .map(|m| m.bounds.clone())
            .ok_or_else(|| Error::Format("state-space model without state models".into()))?;
        let ssm = Self {
            state_names: manifest.state_names,
            forcing_names: manifest.forcing_names,
            models,
            bounds,
            dt: manifest.dt,
        };
        ssm.check()?;
        Ok(ssm)
    }

    fn check(&self) -> Result<()> {
        let width = self.state_names.len() + self.forcing_names.len();
        if self.models.len() != self.state_names.len() {
            return Err(Error::Format("one model per state is required".into()));
        }
        if self.models.iter().any(|m| m.n_inputs() != width) {
            return Err(Error::Format(format!("every state model must take {width} inputs")));
        }
        Ok(())
    }
}

/// Fit one regressor per state derivative.
pub fn fit_dynamics(data: &TimeSeriesData, per_state_cfg: &[SelectionConfig]) -> Result<StateSpaceModel> {
    let derivs = estimate_derivatives(data)?;
    let dt = data.episodes[0].dt()?;
    fit_dynamics_from_derivatives(data, &derivs, per_state_cfg, dt)
}

/// Fit from precomputed derivative samples (e.g. one cross-validation fold).
pub fn fit_dynamics_from_derivatives(
    data: &TimeSeriesData,
    derivs: &DerivativeSet,
    per_state_cfg: &[SelectionConfig],
    dt: f64,
) -> Result<StateSpaceModel> {
    let d = data.n_states();
    if per_state_cfg.len() != d {
        return Err(Error::invalid(format!(
            "{} selection configs for {d} states",
            per_state_cfg.len()
        )));
    }
    let bounds = NormalizationBounds::from_data(&derivs.inputs)?;
    let mut models = Vec::with_capacity(d);
    for (s, cfg) in per_state_cfg.iter().enumerate() {
        let wrap = |e| Error::State {
            state: s,
            source: Box::new(e),
        };
        let sel = forward_select_with_bounds(&derivs.inputs, &derivs.targets[s], bounds.clone(), cfg)
            .map_err(wrap)?;
        let mut model = GpModel::from_selected(sel).map_err(wrap)?;
        model.input_names = data.state_names.iter().chain(&data.forcing_names).cloned().collect();
        models.push(model);
    }
    Ok(StateSpaceModel {
        state_names: data.state_names.clone(),
        forcing_names: data.forcing_names.clone(),
        models,
        bounds,
        dt,
    })
}

fn rk4_raw<D: Dynamics + ?Sized>(
    dynamics: &D,
    x: &[f64],
    u_now: &[f64],
    u_mid: &[f64],
    u_next: &[f64],
    dt: f64,
) -> Vec<f64> {
    let d = x.len();
    let mut k1 = vec![0.0; d];
    let mut k2 = vec![0.0; d];
    let mut k3 = vec![0.0; d];
    let mut k4 = vec![0.0; d];
    let mut tmp = vec![0.0; d];
    dynamics.derivative(x, u_now, &mut k1);
    for i in 0..d {
        tmp[i] = x[i] + 0.5 * dt * k1[i];
    }
    dynamics.derivative(&tmp, u_mid, &mut k2);
    for i in 0..d {
        tmp[i] = x[i] + 0.5 * dt * k2[i];
    }
    dynamics.derivative(&tmp, u_mid, &mut k3);
    for i in 0..d {
        tmp[i] = x[i] + dt * k3[i];
    }
    dynamics.derivative(&tmp, u_next, &mut k4);
    (0..d)
        .map(|i| x[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect()
}

/// One classical RK4 step with forcing at the start, midpoint and end.
pub fn rk4_step<D: Dynamics + ?Sized>(
    dynamics: &D,
    x: &[f64],
    u_now: &[f64],
    u_mid: &[f64],
    u_next: &[f64],
    dt: f64,
) -> Result<Vec<f64>> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::invalid(format!("dt must be positive, got {dt}")));
    }
    let next = rk4_raw(dynamics, x, u_now, u_mid, u_next, dt);
    if let Some(s) = next.iter().position(|v| !v.is_finite()) {
        return Err(Error::numerical(format!("state {s} became non-finite")));
    }
    Ok(next)
}

/// Integrated trajectory; curves are indexed `[state][time]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub mean: Vec<Vec<f64>>,
    pub lower: Option<Vec<Vec<f64>>>,
    pub upper: Option<Vec<Vec<f64>>>,
    /// `[curve][state][time]`.
    pub ensemble: Option<Vec<Vec<Vec<f64>>>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// CSV with `t` then `<state>_mean[,<state>_lower,<state>_upper]` columns.
    pub fn write_csv<W: Write>(&self, state_names: &[String], out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["t".to_string()];
        for name in state_names {
            header.push(format!("{name}_mean"));
            if self.lower.is_some() {
                header.push(format!("{name}_lower"));
                header.push(format!("{name}_upper"));
            }
        }
        w.write_record(&header).map_err(|e| Error::Io(std::io::Error::other(e)))?;
        for k in 0..self.t.len() {
            let mut rec = vec![self.t[k].to_string()];
            for s in 0..self.mean.len() {
                rec.push(self.mean[s][k].to_string());
                if let (Some(lo), Some(hi)) = (&self.lower, &self.upper) {
                    rec.push(lo[s][k].to_string());
                    rec.push(hi[s][k].to_string());
                }
            }
            w.write_record(&rec).map_err(|e| Error::Io(std::io::Error::other(e)))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Integrate `dynamics` from `x0` across the rows of `forcing` (`T x f`),
/// one RK4 step per row gap. Midpoint forcing is the average of the
/// neighbouring rows. Returns `[state][time]`.
pub fn integrate_with<D: Dynamics + ?Sized>(
    dynamics: &D,
    x0: &[f64],
    forcing: &DMatrix<f64>,
    t0: f64,
    dt: f64,
) -> Result<Vec<Vec<f64>>> {
    let d = dynamics.n_states();
    if x0.len() != d {
        return Err(Error::invalid(format!("x0 has {} entries for {d} states", x0.len())));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::invalid(format!("dt must be positive, got {dt}")));
    }
    let steps = forcing.nrows();
    if steps == 0 {
        return Err(Error::invalid("forcing series is empty"));
    }
    let mut curves: Vec<Vec<f64>> = x0.iter().map(|&v| {
        let mut c = Vec::with_capacity(steps);
        c.push(v);
        c
    }).collect();
    let mut x = x0.to_vec();
    let row = |k: usize| -> Vec<f64> { forcing.row(k).iter().copied().collect() };
    for k in 0..steps - 1 {
        let (u0, u1) = (row(k), row(k + 1));
        let um: Vec<f64> = u0.iter().zip(&u1).map(|(a, b)| 0.5 * (a + b)).collect();
        let next = rk4_raw(dynamics, &x, &u0, &um, &u1, dt);
        if let Some(s) = next.iter().position(|v| !v.is_finite()) {
            let t: Vec<f64> = (0..=k).map(|i| t0 + i as f64 * dt).collect();
            return Err(Error::Divergence {
                t: t0 + (k + 1) as f64 * dt,
                state: s,
                partial: Box::new(Trajectory {
                    t,
                    mean: curves,
                    lower: None,
                    upper: None,
                    ensemble: None,
                }),
            });
        }
        for (c, v) in curves.iter_mut().zip(&next) {
            c.push(*v);
        }
        x = next;
    }
    Ok(curves)
}

/// Integrate the fitted model; with uncertainty, also `n_curves` whole
/// trajectories under evenly spaced coefficient draws and their 95% band.
pub fn integrate(
    model: &StateSpaceModel,
    x0: &[f64],
    forcing: &DMatrix<f64>,
    dt: f64,
    with_uncertainty: bool,
    n_curves: usize,
) -> Result<Trajectory> {
    if forcing.ncols() != model.n_forcing() {
        return Err(Error::invalid(format!(
            "forcing has {} columns, model expects {}",
            forcing.ncols(),
            model.n_forcing()
        )));
    }
    let t: Vec<f64> = (0..forcing.nrows()).map(|k| k as f64 * dt).collect();
    let mean = integrate_with(&model.dynamics(Coefficients::Mean)?, x0, forcing, 0.0, dt)?;
    if !with_uncertainty {
        return Ok(Trajectory {
            t,
            mean,
            lower: None,
            upper: None,
            ensemble: None,
        });
    }
    let per_model: Vec<Vec<usize>> = model
        .models
        .iter()
        .map(|m| m.draw_indices(n_curves))
        .collect::<Result<_>>()?;
    let mut ensemble = Vec::with_capacity(n_curves);
    for j in 0..n_curves {
        let coeffs: Vec<&[f64]> = model
            .models
            .iter()
            .zip(&per_model)
            .map(|(m, idx)| m.draw(idx[j]).expect("index from draw_indices"))
            .collect();
        let dynamics = ModelDynamics { model, coeffs };
        match integrate_with(&dynamics, x0, forcing, 0.0, dt) {
            Ok(c) => ensemble.push(c),
            Err(Error::Divergence { t: td, state, .. }) => {
                return Err(Error::Divergence {
                    t: td,
                    state,
                    partial: Box::new(Trajectory {
                        t: t.clone(),
                        mean,
                        lower: None,
                        upper: None,
                        ensemble: Some(ensemble),
                    }),
                })
            }
            Err(e) => return Err(e),
        }
    }
    let d = model.n_states();
    let mut lower = vec![Vec::with_capacity(t.len()); d];
    let mut upper = vec![Vec::with_capacity(t.len()); d];
    let mut buf = Vec::with_capacity(n_curves);
    for s in 0..d {
        for k in 0..t.len() {
            buf.clear();
            buf.extend(ensemble.iter().map(|c| c[s][k]));
            let (lo, hi) = percentile_band(&buf);
            lower[s].push(lo);
            upper[s].push(hi);
        }
    }
    Ok(Trajectory {
        t,
        mean,
        lower: Some(lower),
        upper: Some(upper),
        ensemble: Some(ensemble),
    })
}

/// Integrate over a recorded episode: same start state and forcing.
pub fn replay(model: &StateSpaceModel, ep: &Episode, with_uncertainty: bool) -> Result<Trajectory> {
    let dt = ep.dt()?;
    let x0: Vec<f64> = ep.states.row(0).iter().copied().collect();
    let mut tr = integrate(model, &x0, &ep.forcing, dt, with_uncertainty, DEFAULT_CURVES)?;
    let t0 = ep.t[0];
    tr.t.iter_mut().for_each(|t| *t += t0);
    Ok(tr)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mae: Vec<f64>,
    pub mape: Vec<f64>,
}

/// MAE and MAPE per state after dropping the first `skip_initial` points.
/// MAPE ignores points with `|truth| <= 1e-6 * max |truth|`.
pub fn metrics(pred: &Trajectory, truth: &Episode, skip_initial: usize) -> Result<Metrics> {
    let t_len = truth.len();
    if pred.len() != t_len || pred.mean.len() != truth.states.ncols() {
        return Err(Error::invalid(format!(
            "prediction ({} x {}) and truth ({} x {}) are not aligned",
            pred.len(),
            pred.mean.len(),
            t_len,
            truth.states.ncols()
        )));
    }
    if skip_initial >= t_len {
        return Err(Error::invalid(format!(
            "skip_initial {skip_initial} leaves no points out of {t_len}"
        )));
    }
    let mut mae = Vec::new();
    let mut mape = Vec::new();
    for s in 0..truth.states.ncols() {
        let col = truth.states.column(s);
        let window = skip_initial..t_len;
        let floor = 1e-6 * window.clone().map(|k| col[k].abs()).fold(0.0, f64::max);
        let mut abs_sum = 0.0;
        let mut pct_sum = 0.0;
        let mut pct_n = 0usize;
        for k in window.clone() {
            let err = (pred.mean[s][k] - col[k]).abs();
            abs_sum += err;
            if col[k].abs() > floor {
                pct_sum += err / col[k].abs() * 100.0;
                pct_n += 1;
            }
        }
        mae.push(abs_sum / window.len() as f64);
        mape.push(if pct_n > 0 { pct_sum / pct_n as f64 } else { f64::NAN });
    }
    Ok(Metrics { mae, mape })
}

/// Outcome of replaying one held-out episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveResult {
    pub label: String,
    pub metrics: Option<Metrics>,
    /// Set when integration failed; the batch continues.
    pub error: Option<String>,
}

/// Replay every labelled episode and score it; divergence is recorded per
/// episode instead of aborting.
pub fn evaluate_episodes(
    model: &StateSpaceModel,
    episodes: &[(String, Episode)],
    skip_initial: usize,
    with_uncertainty: bool,
) -> Result<(Vec<CurveResult>, Vec<Option<Trajectory>>)> {
    let mut results = Vec::with_capacity(episodes.len());
    let mut trajectories = Vec::with_capacity(episodes.len());
    for (label, ep) in episodes {
        match replay(model, ep, with_uncertainty) {
            Ok(tr) => {
                results.push(CurveResult {
                    label: label.clone(),
                    metrics: Some(metrics(&tr, ep, skip_initial)?),
                    error: None,
                });
                trajectories.push(Some(tr));
            }
            Err(e @ Error::Divergence { .. }) => {
                log::warn!("{label}: {e}");
                results.push(CurveResult {
                    label: label.clone(),
                    metrics: None,
                    error: Some(e.to_string()),
                });
                trajectories.push(None);
            }
            Err(e) => return Err(e),
        }
    }
    Ok((results, trajectories))
}

/// Mean and sample standard deviation per state of a metric across curves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mae_mean: Vec<f64>,
    pub mae_sd: Vec<f64>,
    pub mape_mean: Vec<f64>,
    pub mape_sd: Vec<f64>,
    pub n_scored: usize,
    pub n_failed: usize,
}

pub fn summarize(results: &[CurveResult], n_states: usize) -> MetricSummary {
    let scored: Vec<&Metrics> = results.iter().filter_map(|r| r.metrics.as_ref()).collect();
    let stat = |get: &dyn Fn(&Metrics) -> f64| -> (f64, f64) {
        let v: Vec<f64> = scored.iter().map(|m| get(m)).filter(|x| x.is_finite()).collect();
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
        (mean, var.sqrt())
    };
    let mut out = MetricSummary {
        mae_mean: Vec::new(),
        mae_sd: Vec::new(),
        mape_mean: Vec::new(),
        mape_sd: Vec::new(),
        n_scored: scored.len(),
        n_failed: results.len() - scored.len(),
    };
    for s in 0..n_states {
        let (m, sd) = stat(&|x: &Metrics| x.mae[s]);
        out.mae_mean.push(m);
        out.mae_sd.push(sd);
        let (m, sd) = stat(&|x: &Metrics| x.mape[s]);
        out.mape_mean.push(m);
        out.mape_sd.push(sd);
    }
    out
}

/// Per-fold, per-state MAE of static derivative prediction under
/// contiguous k-fold splits of the derivative instances.
pub fn derivative_cv(
    data: &TimeSeriesData,
    per_state_cfg: &[SelectionConfig],
    spec: &FoldSpec,
) -> Result<Vec<Vec<f64>>> {
    let derivs = estimate_derivatives(data)?;
    let dt = data.episodes[0].dt()?;
    let mut out = Vec::new();
    for fold in kfold(derivs.len(), spec)? {
        let train = derivs.select(&fold.train);
        let test = derivs.select(&fold.test);
        let model = fit_dynamics_from_derivatives(data, &train, per_state_cfg, dt)?;
        let mut row = Vec::new();
        for (s, m) in model.models.iter().enumerate() {
            let pred = m.predict_mean(&test.inputs)?;
            let mae = pred.iter().zip(&test.targets[s]).map(|(p, t)| (p - t).abs()).sum::<f64>()
                / pred.len() as f64;
            row.push(mae);
        }
        out.push(row);
    }
    Ok(out)
}

/// Timeseries cross-validation on a single-episode record: each contiguous
/// test block is integrated from its first recorded state with its own
/// forcing, using a model trained on the remaining derivative instances.
pub fn timeseries_cv(
    data: &TimeSeriesData,
    per_state_cfg: &[SelectionConfig],
    spec: &FoldSpec,
    skip_initial: usize,
) -> Result<Vec<Metrics>> {
    if data.episodes.len() != 1 {
        return Err(Error::invalid("timeseries cross-validation needs exactly one episode"));
    }
    let derivs = estimate_derivatives(data)?;
    let ep = &data.episodes[0];
    let dt = ep.dt()?;
    let mut out = Vec::new();
    for fold in kfold(ep.len(), spec)? {
        let train = derivs.select(&fold.train);
        let model = fit_dynamics_from_derivatives(data, &train, per_state_cfg, dt)?;
        let (start, end) = (fold.test[0], fold.test[fold.test.len() - 1] + 1);
        let block = ep.slice(start, end);
        let tr = replay(&model, &block, false)?;
        out.push(metrics(&tr, &block, skip_initial)?);
    }
    Ok(out)
}

//! Staged forward variable selection.
//!
//! Starting from the intercept-only model, stage `ind = 1, 2, ...` walks the
//! integer compositions of `ind` (lowest maximum part first). Each
//! composition is one substage: all of its placements onto the inputs are
//! appended as new columns, the sampler is rerun and the information
//! criterion recorded. A new strict minimum saves the model and resets the
//! patience counter; otherwise the counter grows. The search stops once the
//! counter reaches the tolerance or the stage cap is passed, and the saved
//! model is returned.

use std::io::Write;
use std::time::Instant;

use log::{debug, info};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::basis::{BasisDescriptor, KernelSpectrum, DEFAULT_GRID_SIZE, DEFAULT_MAX_BASIS};
use crate::design::{
    integer_compositions, term_rows, FactorCache, NormalizationBounds, TermMatrix,
    MAX_INTERACTION_ORDER,
};
use crate::error::{Error, Result};
use crate::gibbs::{gibbs_fit, Criterion, Hyperparameters, Posterior};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectionConfig {
    /// Consecutive non-improving substages allowed before stopping.
    pub tolerance: usize,
    pub criterion: Criterion,
    pub max_interaction_order: usize,
    pub hyperparameters: Hyperparameters,
    /// Largest stage index visited.
    pub max_stage: usize,
    pub grid_size: usize,
    /// Ceiling on basis order per input.
    pub max_basis: usize,
    /// Drop terms whose order in some input reaches that input's count of
    /// distinct training values; such columns are aliased with lower orders.
    pub cap_order_by_levels: bool,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            tolerance: 3,
            criterion: Criterion::Bic,
            max_interaction_order: MAX_INTERACTION_ORDER,
            hyperparameters: Hyperparameters::default(),
            max_stage: 10,
            grid_size: DEFAULT_GRID_SIZE,
            max_basis: DEFAULT_MAX_BASIS,
            cap_order_by_levels: true,
        }
    }
}

impl SelectionConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.tolerance < 1 {
            problems.push("tolerance must be at least 1".to_string());
        }
        if self.max_stage < 1 {
            problems.push("max_stage must be at least 1".to_string());
        }
        if !(1..=MAX_INTERACTION_ORDER).contains(&self.max_interaction_order) {
            problems.push(format!(
                "max_interaction_order must be in 1..={MAX_INTERACTION_ORDER}"
            ));
        }
        if self.grid_size < 2 {
            problems.push("grid_size must be at least 2".to_string());
        }
        if let Err(e) = self.hyperparameters.validate() {
            problems.push(e.to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::invalid(problems.join("; ")))
        }
    }
}

/// One fitted substage. `ind = 0` is the intercept-only start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub substage: usize,
    pub ind: usize,
    pub composition: String,
    pub n_terms: usize,
    pub criterion: f64,
    pub elapsed_minutes: f64,
    pub is_min: bool,
}

impl TraceEntry {
    /// Same entry with the wall-clock field zeroed, for replay comparisons.
    pub fn untimed(&self) -> Self {
        Self {
            elapsed_minutes: 0.0,
            ..self.clone()
        }
    }
}

/// Write a trace as CSV: `substage,ind,multiset,P,criterion,minutes,is_min`.
pub fn write_trace_csv<W: Write>(trace: &[TraceEntry], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["substage", "ind", "multiset", "P", "criterion", "minutes", "is_min"])
        .map_err(csv_err)?;
    for e in trace {
        w.write_record([
            e.substage.to_string(),
            e.ind.to_string(),
            e.composition.clone(),
            e.n_terms.to_string(),
            e.criterion.to_string(),
            format!("{:.6}", e.elapsed_minutes),
            e.is_min.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn distinct_count(values: impl Iterator<Item = f64>) -> usize {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v.len()
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectedModel {
    pub term_matrix: TermMatrix,
    pub posterior: Posterior,
    pub bounds: NormalizationBounds,
    pub basis: BasisDescriptor,
    pub trace: Vec<TraceEntry>,
    /// Base hyperparameters; substage `s` sampled with `seed + s`.
    pub hyperparameters: Hyperparameters,
    pub best_substage: usize,
}

impl SelectedModel {
    pub fn n_terms(&self) -> usize {
        self.term_matrix.n_terms()
    }
}

/// Forward selection with bounds taken from `raw_inputs`.
pub fn forward_select(
    raw_inputs: &DMatrix<f64>,
    z: &[f64],
    cfg: &SelectionConfig,
) -> Result<SelectedModel> {
    let bounds = NormalizationBounds::from_data(raw_inputs)?;
    forward_select_with_bounds(raw_inputs, z, bounds, cfg)
}

/// Forward selection with externally supplied normalization bounds.
pub fn forward_select_with_bounds(
    raw_inputs: &DMatrix<f64>,
    z: &[f64],
    bounds: NormalizationBounds,
    cfg: &SelectionConfig,
) -> Result<SelectedModel> {
    cfg.validate()?;
    let (n_obs, n_inputs) = raw_inputs.shape();
    if n_inputs == 0 {
        return Err(Error::invalid("at least one input column is required"));
    }
    if z.len() != n_obs {
        return Err(Error::invalid(format!(
            "{n_obs} input rows but {} targets",
            z.len()
        )));
    }
    if n_obs < 10 {
        log::warn!("forward selection on only {n_obs} instances");
    }
    let norm = bounds.normalize(raw_inputs)?;
    let spectrum = KernelSpectrum::shared(cfg.grid_size)?;
    let mut basis = spectrum.basis(0)?;
    let mut factors = FactorCache::new(&norm);
    let level_cap: Vec<usize> = (0..n_inputs)
        .map(|j| {
            if cfg.cap_order_by_levels {
                distinct_count(raw_inputs.column(j).iter().copied()) - 1
            } else {
                usize::MAX
            }
        })
        .collect();
    for (j, &cap) in level_cap.iter().enumerate() {
        if cap < cfg.max_basis {
            info!("input {j} has {} distinct values; basis order capped at {cap}", cap + 1);
        }
    }
    let start = Instant::now();

    let base = cfg.hyperparameters;
    let fit = |x: &DMatrix<f64>, substage: usize| {
        let h = Hyperparameters {
            seed: base.seed.wrapping_add(substage as u64),
            ..base
        };
        gibbs_fit(x, z, &h, cfg.criterion)
    };

    let mut terms = TermMatrix::intercept(n_inputs);
    let mut columns: Vec<f64> = vec![1.0; n_obs];
    let x0 = DMatrix::from_column_slice(n_obs, 1, &columns);
    let mut trace = Vec::new();
    let post = fit(&x0, 0).map_err(|e| Error::Selection {
        substage: 0,
        source: Box::new(e),
        trace: Vec::new(),
    })?;
    trace.push(TraceEntry {
        substage: 0,
        ind: 0,
        composition: "0".into(),
        n_terms: 1,
        criterion: post.criterion.value,
        elapsed_minutes: start.elapsed().as_secs_f64() / 60.0,
        is_min: true,
    });
    let mut best = (terms.clone(), post, 0usize);

    let mut substage = 0usize;
    let mut count = 0usize;
    let mut ind = 1usize;
    'stages: while count < cfg.tolerance && ind <= cfg.max_stage {
        for comp in integer_compositions(ind, cfg.max_interaction_order) {
            if count >= cfg.tolerance {
                break 'stages;
            }
            let rows: Vec<Vec<usize>> = term_rows(&comp, n_inputs)
                .into_iter()
                .filter(|r| r.iter().zip(&level_cap).all(|(&o, &cap)| o <= cap))
                .collect();
            if rows.is_empty() {
                continue;
            }
            if comp.max_part() > cfg.max_basis {
                debug!("composition {comp} exceeds the basis ceiling {}; skipped", cfg.max_basis);
                continue;
            }
            if comp.max_part() > basis.n_basis() {
                basis = spectrum.basis(comp.max_part())?;
            }
            let block = factors.columns(&rows, &basis)?;
            terms.extend(rows)?;
            columns.extend_from_slice(block.as_slice());
            let x = DMatrix::from_column_slice(n_obs, terms.n_terms(), &columns);

            substage += 1;
            let post = fit(&x, substage).map_err(|e| Error::Selection {
                substage,
                source: Box::new(e),
                trace: trace.clone(),
            })?;
            let value = post.criterion.value;
            let is_min = value < best.1.criterion.value;
            debug!(
                "substage {substage}: ind {ind}, {comp}, P = {}, {} = {value}",
                terms.n_terms(),
                cfg.criterion
            );
            trace.push(TraceEntry {
                substage,
                ind,
                composition: comp.to_string(),
                n_terms: terms.n_terms(),
                criterion: value,
                elapsed_minutes: start.elapsed().as_secs_f64() / 60.0,
                is_min,
            });
            if is_min {
                best = (terms.clone(), post, substage);
                count = 0;
            } else {
                count += 1;
            }
        }
        ind += 1;
    }

    let (term_matrix, posterior, best_substage) = best;
    info!(
        "forward selection kept {} terms after {} substages ({} = {})",
        term_matrix.n_terms(),
        substage,
        cfg.criterion,
        posterior.criterion.value
    );
    Ok(SelectedModel {
        basis: BasisDescriptor {
            grid_size: cfg.grid_size,
            n_basis: term_matrix.max_order(),
        },
        term_matrix,
        posterior,
        bounds,
        trace,
        hyperparameters: base,
        best_substage,
    })
}

//! Scalable Gaussian-process regression with the BSS-ANOVA kernel.
//!
//! The main-effect kernel is built from Bernoulli polynomials and expanded
//! in its Karhunen–Loève eigenbasis, which turns GP regression into a linear
//! model fit by Gibbs sampling. Terms are added by staged forward selection
//! under BIC/AIC, and the resulting static regressors double as derivative
//! models for model-free dynamic system identification.
//!
//! Module map:
//! - [`kernel`] / [`spline`] / [`basis`]: kernel, splines, KL eigenbasis
//! - [`design`]: normalization, term enumeration, design matrices
//! - [`gibbs`]: blocked Gibbs sampler and information criteria
//! - [`selection`]: forward variable selection
//! - [`model`]: trained model container, prediction, model files
//! - [`sysid`]: derivative estimation, dynamics fitting, RK4 integration
//! - [`datasets`]: SIR corpora, cascaded-tanks loader, k-fold splits
//! - [`cli`]: command-line driver

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod basis;
pub mod bench;
pub mod cli;
pub mod datasets;
pub mod design;
pub mod error;
pub mod gibbs;
pub mod kernel;
pub mod model;
pub mod presets;
pub mod selection;
pub mod spline;
pub mod sysid;

pub use basis::{kl_decompose, BasisDescriptor, BasisSet, KernelSpectrum};
pub use design::{
    build_design_columns, integer_compositions, term_rows, Composition, NormalizationBounds,
    TermMatrix,
};
pub use error::{Error, Result};
pub use gibbs::{gibbs_fit, Criterion, CriterionValue, Hyperparameters, Posterior};
pub use model::GpModel;
pub use selection::{forward_select, SelectedModel, SelectionConfig, TraceEntry};
pub use sysid::{StateSpaceModel, TimeSeriesData, Trajectory};

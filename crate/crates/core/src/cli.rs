//! Command-line front end. Configuration resolves as defaults, then the
//! `--config` JSON file, then flags; the resolved config is echoed into
//! every manifest.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::basis::{BasisSet, DEFAULT_GRID_SIZE, DEFAULT_MAX_BASIS};
use crate::bench::{bench_scaling, ScalingConfig};
use crate::datasets::{
    generate_sir_test, generate_sir_training, load_cascaded_tanks, read_numeric_csv, read_sir_corpus,
    sir_timeseries, write_sir_corpus, FoldSpec, SirConfig,
};
use crate::error::{Error, Result};
use crate::gibbs::Criterion;
use crate::model::{load_model, save_model, GpModel, DEFAULT_CURVES};
use crate::presets;
use crate::selection::{forward_select, write_trace_csv, SelectionConfig};
use crate::sysid::{
    derivative_cv, evaluate_episodes, fit_dynamics, summarize, timeseries_cv, Episode, StateSpaceModel,
};

#[derive(Parser, Debug)]
#[command(name = "bssanova", version, about = "BSS-ANOVA Gaussian process regression and system identification")]
pub struct Cli {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Root seed; every component seed derives from it.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Emit 95% bounds from retained draws.
    #[arg(long, global = true)]
    pub uncertainty: bool,
    #[arg(long, global = true)]
    pub criterion: Option<Criterion>,
    #[arg(long, global = true)]
    pub tolerance: Option<usize>,
    #[arg(long, global = true, value_parser = clap::value_parser!(u8).range(1..=3))]
    pub max_order: Option<u8>,
    /// Retained Gibbs draws.
    #[arg(long, global = true)]
    pub draws: Option<usize>,
    #[arg(long, global = true)]
    pub burn_in: Option<usize>,
    /// Points dropped from the start of each scored trajectory.
    #[arg(long, global = true)]
    pub skip_initial: Option<usize>,
    /// Number of posterior curves for uncertainty bands.
    #[arg(long, global = true)]
    pub curves: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Precompute the KL basis and write it as a binary cache.
    Basis {
        #[arg(long)]
        n_basis: Option<usize>,
        #[arg(long)]
        grid_size: Option<usize>,
    },
    /// Forward-select and fit a regressor for one target column.
    Fit {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        target: Option<String>,
        /// Comma-separated input columns; defaults to every other column.
        #[arg(long, value_delimiter = ',')]
        inputs: Option<Vec<String>>,
    },
    /// Predict with a saved model.
    Predict {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Fit derivative models and integrate held-out trajectories.
    Sysid {
        /// SIR corpus directory; generated on the fly when absent.
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Cascaded-tanks CSV; switches to the tanks problem.
        #[arg(long)]
        tanks: Option<PathBuf>,
        /// Run derivative and timeseries k-fold cross-validation.
        #[arg(long)]
        cv: bool,
        #[arg(long)]
        folds: Option<usize>,
    },
    /// Write the SIR training and test corpus.
    GenerateSir,
    /// Time design-matrix construction and sampling against N and P.
    BenchScaling {
        #[arg(long, value_delimiter = ',')]
        sizes: Option<Vec<usize>>,
        #[arg(long)]
        n_terms: Option<usize>,
        #[arg(long)]
        repeats: Option<usize>,
    },
}

/// Fully resolved settings for one invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub data: Option<PathBuf>,
    pub target: Option<String>,
    pub inputs: Vec<String>,
    pub model: Option<PathBuf>,
    pub corpus: Option<PathBuf>,
    pub tanks: Option<PathBuf>,
    pub uncertainty: bool,
    pub curves: usize,
    pub skip_initial: usize,
    pub cv: bool,
    pub folds: usize,
    pub n_basis: usize,
    pub grid_size: usize,
    /// Used by `fit`.
    pub selection: SelectionConfig,
    /// Per-state settings for `sysid`; empty selects the problem preset.
    pub states: Vec<SelectionConfig>,
    pub sir: SirConfig,
    pub bench: ScalingConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out: PathBuf::from("bssanova-out"),
            data: None,
            target: None,
            inputs: Vec::new(),
            model: None,
            corpus: None,
            tanks: None,
            uncertainty: false,
            curves: DEFAULT_CURVES,
            skip_initial: 0,
            cv: false,
            folds: 5,
            n_basis: DEFAULT_MAX_BASIS,
            grid_size: DEFAULT_GRID_SIZE,
            selection: SelectionConfig::default(),
            states: Vec::new(),
            sir: SirConfig::default(),
            bench: ScalingConfig::default(),
        }
    }
}

/// Per-state seeds are spaced this far apart from the root seed.
const STATE_SEED_STRIDE: u64 = 1_000_000;

impl RunConfig {
    /// Defaults, then the config file, then flags.
    pub fn resolve(cli: &Cli) -> Result<Self> {
        let mut cfg = match &cli.config {
            Some(path) => {
                let bytes = fs::read(path)?;
                serde_json::from_slice(&bytes)
                    .map_err(|e| Error::invalid(format!("config {}: {e}", path.display())))?
            }
            None => RunConfig::default(),
        };
        if let Some(s) = cli.seed {
            cfg.seed = s;
        }
        if let Some(o) = &cli.out {
            cfg.out = o.clone();
        }
        cfg.uncertainty |= cli.uncertainty;
        if let Some(n) = cli.curves {
            cfg.curves = n;
        }
        if let Some(n) = cli.skip_initial {
            cfg.skip_initial = n;
        }
        match &cli.command {
            Command::Basis { n_basis, grid_size } => {
                if let Some(n) = n_basis {
                    cfg.n_basis = *n;
                }
                if let Some(g) = grid_size {
                    cfg.grid_size = *g;
                }
            }
            Command::Fit { data, target, inputs } => {
                if data.is_some() {
                    cfg.data = data.clone();
                }
                if target.is_some() {
                    cfg.target = target.clone();
                }
                if let Some(i) = inputs {
                    cfg.inputs = i.clone();
                }
            }
            Command::Predict { model, data } => {
                if model.is_some() {
                    cfg.model = model.clone();
                }
                if data.is_some() {
                    cfg.data = data.clone();
                }
            }
            Command::Sysid { corpus, tanks, cv, folds } => {
                if corpus.is_some() {
                    cfg.corpus = corpus.clone();
                }
                if tanks.is_some() {
                    cfg.tanks = tanks.clone();
                }
                cfg.cv |= *cv;
                if let Some(k) = folds {
                    cfg.folds = *k;
                }
                if cfg.states.is_empty() {
                    cfg.states = if cfg.tanks.is_some() {
                        presets::tanks(cfg.seed)
                    } else {
                        presets::sir(cfg.seed)
                    };
                }
            }
            Command::GenerateSir => {}
            Command::BenchScaling { sizes, n_terms, repeats } => {
                if let Some(s) = sizes {
                    cfg.bench.sizes = s.clone();
                }
                if let Some(p) = n_terms {
                    cfg.bench.n_terms = *p;
                }
                if let Some(r) = repeats {
                    cfg.bench.repeats = *r;
                }
            }
        }
        let apply = |s: &mut SelectionConfig| {
            if let Some(c) = cli.criterion {
                s.criterion = c;
            }
            if let Some(t) = cli.tolerance {
                s.tolerance = t;
            }
            if let Some(o) = cli.max_order {
                s.max_interaction_order = o as usize;
            }
            if let Some(d) = cli.draws {
                s.hyperparameters.n_draws = d;
            }
            if let Some(b) = cli.burn_in {
                s.hyperparameters.burn_in = b;
            }
        };
        apply(&mut cfg.selection);
        cfg.states.iter_mut().for_each(apply);
        cfg.split_seeds();
        cfg.validate(&cli.command)?;
        Ok(cfg)
    }

    fn split_seeds(&mut self) {
        let root = self.seed;
        self.selection.hyperparameters.seed = root;
        for (k, s) in self.states.iter_mut().enumerate() {
            s.hyperparameters.seed = root.wrapping_add(k as u64 * STATE_SEED_STRIDE);
        }
        self.sir.seed = root;
        self.bench.seed = root;
    }

    /// Every problem at once, or `InvalidArgument`.
    pub fn validate(&self, command: &Command) -> Result<()> {
        let mut problems = Vec::new();
        let mut check = |label: &str, r: Result<()>| {
            if let Err(e) = r {
                problems.push(format!("{label}: {e}"));
            }
        };
        match command {
            Command::Basis { .. } => {
                if self.grid_size < 2 {
                    check("grid_size", Err(Error::invalid("must be at least 2")));
                }
                if self.n_basis < 1 || self.n_basis > self.grid_size {
                    check("n_basis", Err(Error::invalid("must be in 1..=grid_size")));
                }
            }
            Command::Fit { .. } => {
                if self.data.is_none() {
                    check("data", Err(Error::invalid("an input CSV is required")));
                }
                if self.target.is_none() {
                    check("target", Err(Error::invalid("a target column is required")));
                }
                check("selection", self.selection.validate());
            }
            Command::Predict { .. } => {
                if self.model.is_none() {
                    check("model", Err(Error::invalid("a model file is required")));
                }
                if self.data.is_none() {
                    check("data", Err(Error::invalid("an input CSV is required")));
                }
                if self.uncertainty && self.curves < 2 {
                    check("curves", Err(Error::invalid("at least 2 curves are needed for bounds")));
                }
            }
            Command::Sysid { .. } => {
                // Both built-in problems have two states.
                let want = 2;
                if self.states.len() != want {
                    check(
                        "states",
                        Err(Error::invalid(format!("expected {want} per-state settings, got {}", self.states.len()))),
                    );
                }
                for (k, s) in self.states.iter().enumerate() {
                    check(&format!("states[{k}]"), s.validate());
                }
                if self.tanks.is_none() {
                    check("sir", self.sir.validate());
                }
                if self.cv && self.folds < 2 {
                    check("folds", Err(Error::invalid("at least 2 folds are required")));
                }
                if self.cv && self.tanks.is_none() {
                    check("cv", Err(Error::invalid("cross-validation applies to the tanks record")));
                }
                if self.uncertainty && self.curves < 2 {
                    check("curves", Err(Error::invalid("at least 2 curves are needed for bounds")));
                }
            }
            Command::GenerateSir => check("sir", self.sir.validate()),
            Command::BenchScaling { .. } => {
                if self.bench.sizes.is_empty() || self.bench.sizes.contains(&0) {
                    check("bench.sizes", Err(Error::invalid("need positive sizes")));
                }
                if self.bench.n_terms < 1 || self.bench.repeats < 1 {
                    check("bench", Err(Error::invalid("n_terms and repeats must be positive")));
                }
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "invalid configuration:\n  {}",
                problems.join("\n  ")
            )))
        }
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let bytes = serde_json::to_vec_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
    fs::write(path, bytes)?;
    Ok(())
}

/// Deterministic manifest plus a separate wall-clock file.
fn write_manifest(
    out: &Path,
    command: &str,
    cfg: &RunConfig,
    results: serde_json::Value,
    timings: serde_json::Value,
) -> Result<()> {
    write_json(
        &out.join("manifest.json"),
        &json!({
            "command": command,
            "version": env!("CARGO_PKG_VERSION"),
            "config": cfg,
            "results": results,
        }),
    )?;
    write_json(&out.join("timings.json"), &timings)
}

pub fn run(cli: &Cli) -> Result<()> {
    let cfg = RunConfig::resolve(cli)?;
    fs::create_dir_all(&cfg.out)?;
    match &cli.command {
        Command::Basis { .. } => cmd_basis(&cfg),
        Command::Fit { .. } => cmd_fit(&cfg),
        Command::Predict { .. } => cmd_predict(&cfg),
        Command::Sysid { .. } => cmd_sysid(&cfg),
        Command::GenerateSir => cmd_generate_sir(&cfg),
        Command::BenchScaling { .. } => cmd_bench_scaling(&cfg),
    }
}

fn cmd_basis(cfg: &RunConfig) -> Result<()> {
    let start = Instant::now();
    let path = cfg.out.join("basis.bin");
    let bs = BasisSet::load_or_compute(&path, cfg.n_basis, cfg.grid_size)?;
    write_manifest(
        &cfg.out,
        "basis",
        cfg,
        json!({ "file": "basis.bin", "eigenvalues": bs.eigenvalues() }),
        json!({ "seconds": start.elapsed().as_secs_f64() }),
    )
}

/// Columns `names` of a table as an `N x names.len()` matrix.
fn columns(table: &crate::datasets::NumericTable, names: &[String], path: &Path) -> Result<DMatrix<f64>> {
    let idx = names
        .iter()
        .map(|n| {
            table.column(n).ok_or_else(|| {
                Error::invalid(format!("column '{n}' not found in {}", path.display()))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DMatrix::from_fn(table.rows.len(), idx.len(), |r, c| table.rows[r][idx[c]]))
}

pub fn cmd_fit(cfg: &RunConfig) -> Result<()> {
    let data = cfg.data.as_deref().expect("validated");
    let target = cfg.target.as_deref().expect("validated");
    let table = read_numeric_csv(data)?;
    let tj = table
        .column(target)
        .ok_or_else(|| Error::invalid(format!("target column '{target}' not found in {}", data.display())))?;
    let inputs: Vec<String> = if cfg.inputs.is_empty() {
        table
            .headers
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != tj)
            .map(|(_, h)| h.trim().to_string())
            .collect()
    } else {
        cfg.inputs.clone()
    };
    if inputs.is_empty() {
        return Err(Error::invalid("no input columns besides the target"));
    }
    let x = columns(&table, &inputs, data)?;
    let z = table.column_values(tj);

    let start = Instant::now();
    let selected = forward_select(&x, &z, &cfg.selection)?;
    let fit_seconds = start.elapsed().as_secs_f64();
    let trace = selected.trace.clone();
    let mut model = GpModel::from_selected(selected)?;
    model.input_names = inputs;

    save_model(&model, &cfg.out.join("model.json"))?;
    write_trace_csv(&trace, fs::File::create(cfg.out.join("trace.csv"))?)?;
    log::info!("{} terms, {} = {}", model.n_terms(), model.criterion.kind, model.criterion.value);
    write_manifest(
        &cfg.out,
        "fit",
        cfg,
        json!({
            "model": "model.json",
            "trace": "trace.csv",
            "n_terms": model.n_terms(),
            "criterion": model.criterion,
            "best_substage": model.best_substage,
            "substages": trace.len(),
        }),
        json!({
            "fit_seconds": fit_seconds,
            "substage_minutes": trace.iter().map(|e| e.elapsed_minutes).collect::<Vec<_>>(),
        }),
    )
}

pub fn cmd_predict(cfg: &RunConfig) -> Result<()> {
    let model_path = cfg.model.as_deref().expect("validated");
    let data = cfg.data.as_deref().expect("validated");
    let model = load_model(model_path)?;
    let table = read_numeric_csv(data)?;
    let x = if model.input_names.is_empty() {
        if table.headers.len() != model.n_inputs() {
            return Err(Error::invalid(format!(
                "model takes {} inputs but {} has {} columns",
                model.n_inputs(),
                data.display(),
                table.headers.len()
            )));
        }
        DMatrix::from_fn(table.rows.len(), model.n_inputs(), |r, c| table.rows[r][c])
    } else {
        columns(&table, &model.input_names, data)?
    };
    let mean = model.predict_mean(&x)?;
    let bands = if cfg.uncertainty {
        Some(model.predict_draws(&x, cfg.curves)?)
    } else {
        None
    };
    let mut w = csv::Writer::from_path(cfg.out.join("predictions.csv"))
        .map_err(|e| Error::Io(std::io::Error::other(e)))?;
    let header: &[&str] = if bands.is_some() { &["mean", "lower", "upper"] } else { &["mean"] };
    w.write_record(header).map_err(|e| Error::Io(std::io::Error::other(e)))?;
    for (r, m) in mean.iter().enumerate() {
        let mut rec = vec![m.to_string()];
        if let Some(b) = &bands {
            rec.push(b.lower[r].to_string());
            rec.push(b.upper[r].to_string());
        }
        w.write_record(&rec).map_err(|e| Error::Io(std::io::Error::other(e)))?;
    }
    w.flush()?;
    write_manifest(
        &cfg.out,
        "predict",
        cfg,
        json!({ "predictions": "predictions.csv", "rows": mean.len() }),
        json!({}),
    )
}

fn write_trajectories(
    dir: &Path,
    model: &StateSpaceModel,
    labels: &[(String, Episode)],
    trajectories: &[Option<crate::sysid::Trajectory>],
) -> Result<Vec<Option<String>>> {
    fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    for (k, ((_, _), tr)) in labels.iter().zip(trajectories).enumerate() {
        files.push(match tr {
            Some(tr) => {
                let name = format!("trajectory_{k:03}.csv");
                tr.write_csv(&model.state_names, fs::File::create(dir.join(&name))?)?;
                Some(name)
            }
            None => None,
        });
    }
    Ok(files)
}

pub fn cmd_sysid(cfg: &RunConfig) -> Result<()> {
    match &cfg.tanks {
        Some(path) => sysid_tanks(cfg, path),
        None => sysid_sir(cfg),
    }
}

fn sysid_sir(cfg: &RunConfig) -> Result<()> {
    let (sir_cfg, train, test) = match &cfg.corpus {
        Some(dir) => read_sir_corpus(dir)?,
        None => (cfg.sir, generate_sir_training(&cfg.sir)?, generate_sir_test(&cfg.sir)?),
    };
    let data = sir_timeseries(&train);
    let start = Instant::now();
    let ssm = fit_dynamics(&data, &cfg.states)?;
    let fit_seconds = start.elapsed().as_secs_f64();
    ssm.save(&cfg.out.join("model"))?;

    let episodes: Vec<(String, Episode)> = test.iter().map(|c| (c.label.clone(), c.episode())).collect();
    let start = Instant::now();
    let (results, trajectories) = evaluate_episodes(&ssm, &episodes, cfg.skip_initial, cfg.uncertainty)?;
    let integrate_seconds = start.elapsed().as_secs_f64();
    let files = write_trajectories(&cfg.out.join("trajectories"), &ssm, &episodes, &trajectories)?;
    let summary = summarize(&results, ssm.n_states());
    let report = json!({
        "problem": "sir",
        "states": ssm.state_names,
        "n_terms": ssm.models.iter().map(GpModel::n_terms).collect::<Vec<_>>(),
        "sir": sir_cfg,
        "curves": results,
        "trajectory_files": files,
        "summary": summary,
    });
    write_json(&cfg.out.join("metrics.json"), &report)?;
    for (s, name) in ssm.state_names.iter().enumerate() {
        log::info!(
            "{name}: MAPE {:.2} +/- {:.2} %",
            summary.mape_mean[s],
            summary.mape_sd[s]
        );
    }
    write_manifest(
        &cfg.out,
        "sysid",
        cfg,
        json!({ "model_dir": "model", "report": "metrics.json", "failed_curves": summary.n_failed }),
        json!({ "fit_seconds": fit_seconds, "integrate_seconds": integrate_seconds }),
    )
}

fn sysid_tanks(cfg: &RunConfig, path: &Path) -> Result<()> {
    let data = load_cascaded_tanks(path)?;
    let start = Instant::now();
    let report = if cfg.cv {
        let spec = FoldSpec {
            k: cfg.folds,
            shuffle: false,
            seed: cfg.seed,
        };
        let deriv = derivative_cv(&data, &cfg.states, &spec)?;
        let ts = timeseries_cv(&data, &cfg.states, &spec, cfg.skip_initial)?;
        json!({
            "problem": "tanks",
            "states": data.state_names,
            "derivative_mae": deriv,
            "timeseries": ts,
        })
    } else {
        let ssm = fit_dynamics(&data, &cfg.states)?;
        ssm.save(&cfg.out.join("model"))?;
        let episodes: Vec<(String, Episode)> = data
            .episodes
            .iter()
            .enumerate()
            .map(|(k, e)| (format!("episode_{k}"), e.clone()))
            .collect();
        let (results, trajectories) = evaluate_episodes(&ssm, &episodes, cfg.skip_initial, cfg.uncertainty)?;
        let files = write_trajectories(&cfg.out.join("trajectories"), &ssm, &episodes, &trajectories)?;
        json!({
            "problem": "tanks",
            "states": ssm.state_names,
            "n_terms": ssm.models.iter().map(GpModel::n_terms).collect::<Vec<_>>(),
            "curves": results,
            "trajectory_files": files,
        })
    };
    write_json(&cfg.out.join("metrics.json"), &report)?;
    write_manifest(
        &cfg.out,
        "sysid",
        cfg,
        json!({ "report": "metrics.json" }),
        json!({ "seconds": start.elapsed().as_secs_f64() }),
    )
}

pub fn cmd_generate_sir(cfg: &RunConfig) -> Result<()> {
    let train = generate_sir_training(&cfg.sir)?;
    let test = generate_sir_test(&cfg.sir)?;
    let dir = cfg.out.join("corpus");
    write_sir_corpus(&dir, &cfg.sir, &train, &test)?;
    write_manifest(
        &cfg.out,
        "generate-sir",
        cfg,
        json!({
            "corpus": "corpus",
            "train": train.len(),
            "test": test.len(),
            "schedules": train.iter().chain(&test).map(|c| json!({"label": c.label, "schedule": c.schedule})).collect::<Vec<_>>(),
        }),
        json!({}),
    )
}

pub fn cmd_bench_scaling(cfg: &RunConfig) -> Result<()> {
    let report = bench_scaling(&cfg.bench)?;
    write_json(&cfg.out.join("scaling.json"), &report)?;
    let mut manifest_cfg = cfg.clone();
    manifest_cfg.bench = report.config.clone();
    write_manifest(
        &cfg.out,
        "bench-scaling",
        &manifest_cfg,
        json!({ "report": "scaling.json" }),
        json!({}),
    )
}

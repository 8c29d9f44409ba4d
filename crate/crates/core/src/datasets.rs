//! SIR training/test corpora, the cascaded-tanks loader and k-fold splits.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sysid::{Episode, TimeSeriesData};

/// Transmissibility levels of the training curves: 0.5 to 9 in steps of 1.7.
pub const TRAIN_B: [f64; 6] = [0.5, 2.2, 3.9, 5.6, 7.3, 9.0];
/// Initial-condition count per training level (58 in total).
pub const TRAIN_PER_B: [usize; 6] = [10, 10, 10, 10, 9, 9];
/// Starting transmissibility of the test curves.
pub const TEST_B0: [f64; 3] = [1.35, 4.75, 8.15];
pub const TEST_PER_CELL: usize = 4;
/// Sinusoid amplitudes, capped at `B0` so that `B(t) >= 0`.
pub const SINE_AMPLITUDES: [f64; 3] = [0.5, 1.75, 3.0];
pub const RAMP_END: f64 = 4.0;
pub const SINE_PERIOD: f64 = 1.0;

const DESIGN_I0: [f64; 5] = [10.0, 50.0, 100.0, 200.0, 400.0];
const DESIGN_R0: [f64; 3] = [0.0, 200.0, 400.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SirConfig {
    pub population: f64,
    pub gamma: f64,
    /// Simulation step.
    pub dt: f64,
    pub horizon: f64,
    /// Keep every `record_stride`-th simulated sample.
    pub record_stride: usize,
    pub seed: u64,
}

impl Default for SirConfig {
    fn default() -> Self {
        Self {
            population: 1000.0,
            gamma: 0.5,
            dt: 0.01,
            horizon: 10.0,
            record_stride: 3,
            seed: 0,
        }
    }
}

impl SirConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !(self.population > 0.0) {
            problems.push("population must be positive");
        }
        if !(self.gamma > 0.0) {
            problems.push("gamma must be positive");
        }
        if !(self.dt > 0.0) {
            problems.push("dt must be positive");
        }
        if !(self.horizon > self.dt) {
            problems.push("horizon must exceed dt");
        }
        if self.record_stride == 0 {
            problems.push("record_stride must be at least 1");
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::invalid(problems.join("; ")))
        }
    }

    /// Spacing of recorded samples.
    pub fn record_dt(&self) -> f64 {
        self.dt * self.record_stride as f64
    }
}

/// `(dS, dI, dR)` of the SIR system with transmissibility `b`.
pub fn sir_rhs(s: f64, i: f64, r: f64, b: f64, cfg: &SirConfig) -> Result<(f64, f64, f64)> {
    for (name, v) in [("S", s), ("I", i), ("R", r)] {
        if v < -1e-9 {
            return Err(Error::data(format!("{name} = {v} is negative")));
        }
    }
    if !(b >= 0.0) {
        return Err(Error::data(format!("transmissibility {b} is negative")));
    }
    let total = s + i + r;
    if (total - cfg.population).abs() > 1e-6 * cfg.population {
        return Err(Error::invalid(format!(
            "S + I + R = {total} differs from the population {}",
            cfg.population
        )));
    }
    Ok(sir_rhs_unchecked(s, i, b, cfg))
}

#[inline]
fn sir_rhs_unchecked(s: f64, i: f64, b: f64, cfg: &SirConfig) -> (f64, f64, f64) {
    let infection = b * i * s / cfg.population;
    let recovery = cfg.gamma * i;
    (-infection, infection - recovery, recovery)
}

/// Transmissibility over time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BSchedule {
    Constant { b: f64 },
    /// `b0 + slope * min(t, t_end)`.
    Ramp { b0: f64, slope: f64, t_end: f64 },
    /// `b0 + amplitude * sin(2 pi t / period)`.
    Sinusoid { b0: f64, amplitude: f64, period: f64 },
}

impl BSchedule {
    pub fn value(&self, t: f64) -> f64 {
        match *self {
            BSchedule::Constant { b } => b,
            BSchedule::Ramp { b0, slope, t_end } => b0 + slope * t.min(t_end),
            BSchedule::Sinusoid {
                b0,
                amplitude,
                period,
            } => b0 + amplitude * (2.0 * std::f64::consts::PI * t / period).sin(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SirCurve {
    pub label: String,
    pub schedule: BSchedule,
    /// `(S0, I0, R0)`.
    pub initial: [f64; 3],
    pub t: Vec<f64>,
    pub s: Vec<f64>,
    pub i: Vec<f64>,
    pub r: Vec<f64>,
    pub b: Vec<f64>,
}

impl SirCurve {
    /// Episode with states `(I, R)` and forcing `B`.
    pub fn episode(&self) -> Episode {
        let n = self.t.len();
        let states = DMatrix::from_fn(n, 2, |k, c| if c == 0 { self.i[k] } else { self.r[k] });
        Episode {
            t: self.t.clone(),
            states,
            forcing: DMatrix::from_column_slice(n, 1, &self.b),
        }
    }
}

/// Simulate with RK4, sampling `B(t)` analytically at stage times. The step
/// is halved if any recorded state dips below `-1e-9`.
pub fn simulate_sir(
    label: &str,
    initial: [f64; 3],
    schedule: BSchedule,
    cfg: &SirConfig,
) -> Result<SirCurve> {
    cfg.validate()?;
    let (s0, i0, r0) = (initial[0], initial[1], initial[2]);
    sir_rhs(s0, i0, r0, schedule.value(0.0).max(0.0), cfg)?;
    let record_dt = cfg.record_dt();
    let n_rec = (cfg.horizon / record_dt).round() as usize + 1;
    for refine in 0..6u32 {
        let sub = cfg.record_stride << refine;
        let h = record_dt / sub as f64;
        let mut x = [s0, i0, r0];
        let mut curve = SirCurve {
            label: label.to_string(),
            schedule,
            initial,
            t: Vec::with_capacity(n_rec),
            s: Vec::with_capacity(n_rec),
            i: Vec::with_capacity(n_rec),
            r: Vec::with_capacity(n_rec),
            b: Vec::with_capacity(n_rec),
        };
        let mut ok = true;
        for k in 0..n_rec {
            let t = k as f64 * record_dt;
            if x.iter().any(|&v| v < -1e-9) {
                ok = false;
                break;
            }
            curve.t.push(t);
            curve.s.push(x[0]);
            curve.i.push(x[1]);
            curve.r.push(x[2]);
            curve.b.push(schedule.value(t));
            if k + 1 == n_rec {
                break;
            }
            for j in 0..sub {
                let ts = t + j as f64 * h;
                x = sir_step(x, ts, h, &schedule, cfg);
            }
        }
        if ok {
            return Ok(curve);
        }
        log::warn!("{label}: negative state at step {h}; refining");
    }
    Err(Error::numerical(format!("{label}: SIR simulation stays negative after refinement")))
}

fn sir_step(x: [f64; 3], t: f64, h: f64, schedule: &BSchedule, cfg: &SirConfig) -> [f64; 3] {
    let f = |x: [f64; 3], t: f64| {
        let (ds, di, dr) = sir_rhs_unchecked(x[0], x[1], schedule.value(t).max(0.0), cfg);
        [ds, di, dr]
    };
    let add = |x: [f64; 3], k: [f64; 3], c: f64| [x[0] + c * k[0], x[1] + c * k[1], x[2] + c * k[2]];
    let k1 = f(x, t);
    let k2 = f(add(x, k1, 0.5 * h), t + 0.5 * h);
    let k3 = f(add(x, k2, 0.5 * h), t + 0.5 * h);
    let k4 = f(add(x, k3, h), t + h);
    [
        x[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
        x[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
        x[2] + h / 6.0 * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2]),
    ]
}

/// Stratified `(I0, R0)` grid; `S0` fills the population.
fn design_grid(cfg: &SirConfig) -> Vec<[f64; 3]> {
    let mut out = Vec::new();
    for &r0 in &DESIGN_R0 {
        for &i0 in &DESIGN_I0 {
            let s0 = cfg.population - i0 - r0;
            if s0 > 0.0 {
                out.push([s0, i0, r0]);
            }
        }
    }
    out
}

/// `count` grid points chosen by a seeded shuffle, kept in grid order.
fn pick_initial(grid: &[[f64; 3]], count: usize, rng: &mut ChaCha8Rng) -> Vec<[f64; 3]> {
    let mut idx: Vec<usize> = (0..grid.len()).collect();
    idx.shuffle(rng);
    let mut chosen: Vec<usize> = idx.into_iter().take(count).collect();
    chosen.sort_unstable();
    chosen.into_iter().map(|i| grid[i]).collect()
}

/// 58 constant-transmissibility curves.
pub fn generate_sir_training(cfg: &SirConfig) -> Result<Vec<SirCurve>> {
    cfg.validate()?;
    let grid = design_grid(cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut curves = Vec::new();
    for (bi, (&b, &count)) in TRAIN_B.iter().zip(&TRAIN_PER_B).enumerate() {
        for (j, ic) in pick_initial(&grid, count, &mut rng).into_iter().enumerate() {
            let label = format!("train_b{bi}_{j}");
            curves.push(simulate_sir(&label, ic, BSchedule::Constant { b }, cfg)?);
        }
    }
    Ok(curves)
}

/// 24 curves with time-varying transmissibility: for each `B0`, four ramps
/// and four sinusoids.
pub fn generate_sir_test(cfg: &SirConfig) -> Result<Vec<SirCurve>> {
    cfg.validate()?;
    let grid = design_grid(cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x7e57_7e57);
    let mut curves = Vec::new();
    for (gi, &b0) in TEST_B0.iter().enumerate() {
        let slope = if b0 > 8.0 { -1.0 } else { 1.0 };
        for (j, ic) in pick_initial(&grid, TEST_PER_CELL, &mut rng).into_iter().enumerate() {
            let sched = BSchedule::Ramp {
                b0,
                slope,
                t_end: RAMP_END,
            };
            curves.push(simulate_sir(&format!("test_b{gi}_ramp_{j}"), ic, sched, cfg)?);
        }
        for (j, ic) in pick_initial(&grid, TEST_PER_CELL, &mut rng).into_iter().enumerate() {
            let sched = BSchedule::Sinusoid {
                b0,
                amplitude: SINE_AMPLITUDES[j % SINE_AMPLITUDES.len()].min(b0),
                period: SINE_PERIOD,
            };
            curves.push(simulate_sir(&format!("test_b{gi}_sine_{j}"), ic, sched, cfg)?);
        }
    }
    Ok(curves)
}

/// Bundle curves as `(I, R)` states with `B` forcing.
pub fn sir_timeseries(curves: &[SirCurve]) -> TimeSeriesData {
    TimeSeriesData {
        state_names: vec!["I".into(), "R".into()],
        forcing_names: vec!["B".into()],
        episodes: curves.iter().map(SirCurve::episode).collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusEntry {
    pub file: String,
    pub split: String,
    pub label: String,
    pub schedule: BSchedule,
    pub initial: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub config: SirConfig,
    pub curves: Vec<CorpusEntry>,
}

/// One CSV per curve (`t,S,I,R,B`) plus `manifest.json`.
pub fn write_sir_corpus(dir: &Path, cfg: &SirConfig, train: &[SirCurve], test: &[SirCurve]) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut entries = Vec::new();
    for (split, curves) in [("train", train), ("test", test)] {
        for (k, c) in curves.iter().enumerate() {
            let file = format!("{split}_{k:03}.csv");
            let mut w = csv::Writer::from_path(dir.join(&file)).map_err(csv_io)?;
            w.write_record(["t", "S", "I", "R", "B"]).map_err(csv_io)?;
            for j in 0..c.t.len() {
                w.write_record([
                    c.t[j].to_string(),
                    c.s[j].to_string(),
                    c.i[j].to_string(),
                    c.r[j].to_string(),
                    c.b[j].to_string(),
                ])
                .map_err(csv_io)?;
            }
            w.flush()?;
            entries.push(CorpusEntry {
                file,
                split: split.into(),
                label: c.label.clone(),
                schedule: c.schedule,
                initial: c.initial,
            });
        }
    }
    let manifest = CorpusManifest {
        config: *cfg,
        curves: entries,
    };
    let bytes = serde_json::to_vec_pretty(&manifest).map_err(|e| Error::Format(e.to_string()))?;
    fs::write(dir.join("manifest.json"), bytes)?;
    Ok(())
}

/// Read a corpus written by [`write_sir_corpus`]: `(config, train, test)`.
pub fn read_sir_corpus(dir: &Path) -> Result<(SirConfig, Vec<SirCurve>, Vec<SirCurve>)> {
    let manifest: CorpusManifest = serde_json::from_slice(&fs::read(dir.join("manifest.json"))?)
        .map_err(|e| Error::Format(format!("unreadable corpus manifest: {e}")))?;
    let mut train = Vec::new();
    let mut test = Vec::new();
    for e in &manifest.curves {
        let table = read_numeric_csv(&dir.join(&e.file))?;
        let col = |name: &str| -> Result<Vec<f64>> {
            let j = table.column(name).ok_or_else(|| Error::Parse {
                line: 1,
                column: name.into(),
                message: format!("{} lacks column {name}", e.file),
            })?;
            Ok(table.rows.iter().map(|r| r[j]).collect())
        };
        let curve = SirCurve {
            label: e.label.clone(),
            schedule: e.schedule,
            initial: e.initial,
            t: col("t")?,
            s: col("S")?,
            i: col("I")?,
            r: col("R")?,
            b: col("B")?,
        };
        match e.split.as_str() {
            "train" => train.push(curve),
            "test" => test.push(curve),
            other => return Err(Error::Format(format!("unknown split '{other}'"))),
        }
    }
    Ok((manifest.config, train, test))
}

fn csv_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// Header plus rows of finite numbers.
#[derive(Debug, Clone, PartialEq)]
pub struct NumericTable {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl NumericTable {
    /// Index of a column, matched case-insensitively.
    pub fn column(&self, name: &str) -> Option<usize> {
        self.headers.iter().position(|h| h.trim().eq_ignore_ascii_case(name))
    }

    pub fn column_values(&self, j: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[j]).collect()
    }
}

/// Parse a headered CSV of numbers; errors name the line and column.
pub fn read_numeric_csv(path: &Path) -> Result<NumericTable> {
    let file = fs::File::open(path)?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Parse {
            line: 1,
            column: String::new(),
            message: e.to_string(),
        })?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line()),
            column: String::new(),
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        let mut row = Vec::with_capacity(headers.len());
        for (j, cell) in rec.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                line,
                column: headers.get(j).cloned().unwrap_or_else(|| j.to_string()),
                message: format!("'{cell}' is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line,
                    column: headers[j].clone(),
                    message: format!("'{cell}' is not finite"),
                });
            }
            row.push(v);
        }
        rows.push(row);
    }
    Ok(NumericTable { headers, rows })
}

/// Load the cascaded-tanks record: columns `u`, `h1`, `h2`, optional `t`
/// (sample index when absent) and optional `episode` id.
pub fn load_cascaded_tanks(path: &Path) -> Result<TimeSeriesData> {
    let table = read_numeric_csv(path)?;
    let need = |name: &str| {
        table.column(name).ok_or_else(|| Error::Parse {
            line: 1,
            column: name.into(),
            message: format!("required column '{name}' is missing"),
        })
    };
    let (ju, jh1, jh2) = (need("u")?, need("h1")?, need("h2")?);
    let jt = table.column("t").or_else(|| table.column("time"));
    let je = table.column("episode");
    if table.rows.is_empty() {
        return Err(Error::data("tanks file has no data rows"));
    }

    let mut episodes = Vec::new();
    let mut start = 0;
    while start < table.rows.len() {
        let id = je.map(|j| table.rows[start][j]);
        let mut end = start + 1;
        while end < table.rows.len() && je.map(|j| table.rows[end][j]) == id {
            end += 1;
        }
        let rows = &table.rows[start..end];
        let n = rows.len();
        let t: Vec<f64> = match jt {
            Some(j) => rows.iter().map(|r| r[j]).collect(),
            None => (0..n).map(|k| k as f64).collect(),
        };
        let states = DMatrix::from_fn(n, 2, |k, c| rows[k][if c == 0 { jh1 } else { jh2 }]);
        let forcing = DMatrix::from_fn(n, 1, |k, _| rows[k][ju]);
        episodes.push(Episode { t, states, forcing });
        start = end;
    }
    let data = TimeSeriesData {
        state_names: vec!["h1".into(), "h2".into()],
        forcing_names: vec!["u".into()],
        episodes,
    };
    data.validate()?;
    Ok(data)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FoldSpec {
    pub k: usize,
    /// Contiguous blocks when false, preserving time order.
    pub shuffle: bool,
    pub seed: u64,
}

impl Default for FoldSpec {
    fn default() -> Self {
        Self {
            k: 5,
            shuffle: false,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Partition `0..n` into `k` test folds whose sizes differ by at most one.
pub fn kfold(n: usize, spec: &FoldSpec) -> Result<Vec<Fold>> {
    if spec.k < 2 {
        return Err(Error::invalid("k-fold needs k >= 2"));
    }
    if n < spec.k {
        return Err(Error::invalid(format!("{n} instances cannot fill {} folds", spec.k)));
    }
    let mut order: Vec<usize> = (0..n).collect();
    if spec.shuffle {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    }
    let (base, extra) = (n / spec.k, n % spec.k);
    let mut folds = Vec::with_capacity(spec.k);
    let mut start = 0;
    for f in 0..spec.k {
        let size = base + usize::from(f < extra);
        let mut test = order[start..start + size].to_vec();
        test.sort_unstable();
        let mut train: Vec<usize> = order[..start].iter().chain(&order[start + size..]).copied().collect();
        train.sort_unstable();
        folds.push(Fold { train, test });
        start += size;
    }
    Ok(folds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn sir_rhs_examples() {
        let cfg = SirConfig::default();
        assert_eq!(sir_rhs(1000.0, 0.0, 0.0, 3.0, &cfg).unwrap(), (-0.0, 0.0, 0.0));
        let (ds, di, dr) = sir_rhs(900.0, 100.0, 0.0, 2.0, &cfg).unwrap();
        assert_abs_diff_eq!(ds, -180.0, epsilon = 1e-12);
        assert_abs_diff_eq!(di, 130.0, epsilon = 1e-12);
        assert_abs_diff_eq!(dr, 50.0, epsilon = 1e-12);
        assert!((ds + di + dr).abs() <= 1e-12);
        assert!(matches!(sir_rhs(1001.0, -1.0, 0.0, 1.0, &cfg), Err(Error::Data(_))));
        assert!(sir_rhs(900.0, 50.0, 0.0, 1.0, &cfg).is_err());
    }

    #[test]
    fn schedule_values() {
        let ramp = BSchedule::Ramp {
            b0: 8.15,
            slope: -1.0,
            t_end: 4.0,
        };
        assert_abs_diff_eq!(ramp.value(4.0), 4.15, epsilon = 1e-12);
        assert_abs_diff_eq!(ramp.value(7.5), 4.15, epsilon = 1e-12);
        assert_abs_diff_eq!(ramp.value(1.0), 7.15, epsilon = 1e-12);
    }

    #[test]
    fn sinusoids_nonnegative() {
        for &b0 in &TEST_B0 {
            for &a in &SINE_AMPLITUDES {
                assert!(a.min(b0) <= b0);
            }
        }
    }

    #[test]
    fn kfold_contiguous() {
        let folds = kfold(10, &FoldSpec::default()).unwrap();
        let tests: Vec<Vec<usize>> = folds.iter().map(|f| f.test.clone()).collect();
        assert_eq!(tests, vec![vec![0, 1], vec![2, 3], vec![4, 5], vec![6, 7], vec![8, 9]]);
        assert_eq!(folds[0].train, (2..10).collect::<Vec<_>>());
        assert!(kfold(4, &FoldSpec::default()).is_err());
    }

    #[test]
    fn kfold_large_sizes() {
        let folds = kfold(10000, &FoldSpec::default()).unwrap();
        assert!(folds.iter().all(|f| f.test.len() == 2000 && f.train.len() == 8000));
    }

    #[test]
    fn tanks_loader_round_trip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let good = dir.path().join("tanks.csv");
        fs::write(&good, "t,u,h1,h2\n0,1.5,2.0,3.0\n4,1.6,2.1,3.05\n8,1.7,2.3,3.2\n").unwrap();
        let d = load_cascaded_tanks(&good).unwrap();
        assert_eq!(d.episodes.len(), 1);
        let ep = &d.episodes[0];
        assert_eq!(ep.t, vec![0.0, 4.0, 8.0]);
        assert_eq!(ep.states[(1, 0)], 2.1);
        assert_eq!(ep.states[(2, 1)], 3.2);
        assert_eq!(ep.forcing[(2, 0)], 1.7);

        let bad = dir.path().join("bad.csv");
        fs::write(&bad, "u,h1,h2\n1,2,3\n1,oops,3\n").unwrap();
        match load_cascaded_tanks(&bad).unwrap_err() {
            Error::Parse { line, column, .. } => {
                assert_eq!(line, 3);
                assert_eq!(column, "h1");
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            load_cascaded_tanks(&dir.path().join("missing.csv")),
            Err(Error::Io(_))
        ));
    }
}

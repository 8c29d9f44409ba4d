//! Karhunen–Loève eigenbasis of the main-effect kernel.
//!
//! The Gram matrix on a uniform grid is eigendecomposed and Nyström
//! normalized: with `G` grid points and unit eigenvectors `v_k`, the
//! eigenfunctions are `phi_k = sqrt(G) v_k` and the eigenvalues are
//! `lambda_k = mu_k / G`, so that `(1/G) sum_i phi_j(x_i) phi_k(x_i) = delta_jk`.
//! Stored basis functions are scaled by `sqrt(lambda_k)`, which makes the
//! coefficients of the expansion iid under the GP prior.

use std::collections::HashMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::{Arc, Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{gram_matrix, uniform_grid, STATIONARY_SIGN};
use crate::spline::NaturalCubicSpline;

pub const DEFAULT_GRID_SIZE: usize = 501;
/// Default per-input ceiling on basis order.
pub const DEFAULT_MAX_BASIS: usize = 25;

const CACHE_MAGIC: &[u8; 4] = b"BSSB";
const CACHE_VERSION: u32 = 1;

/// Full eigendecomposition of the kernel Gram matrix on one grid.
#[derive(Debug, Clone)]
pub struct KernelSpectrum {
    grid: Vec<f64>,
    /// `lambda_k`, descending.
    eigenvalues: Vec<f64>,
    /// Unscaled, sign-fixed eigenfunction samples on the grid.
    eigenfunctions: Vec<Vec<f64>>,
    n_positive: usize,
}

impl KernelSpectrum {
    pub fn compute(grid_size: usize) -> Result<Self> {
        if grid_size < 2 {
            return Err(Error::invalid(format!("grid_size must be at least 2, got {grid_size}")));
        }
        let grid = uniform_grid(grid_size);
        let gram = gram_matrix(&grid);
        let eig = nalgebra::SymmetricEigen::try_new(gram, f64::EPSILON, 0)
            .ok_or_else(|| Error::numerical("symmetric eigendecomposition did not converge"))?;

        let mut order: Vec<usize> = (0..grid_size).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));

        let g = grid_size as f64;
        let root_g = g.sqrt();
        let mut eigenvalues = Vec::with_capacity(grid_size);
        let mut eigenfunctions = Vec::with_capacity(grid_size);
        for &idx in &order {
            eigenvalues.push(eig.eigenvalues[idx] / g);
            let mut phi: Vec<f64> = eig.eigenvectors.column(idx).iter().map(|v| v * root_g).collect();
            fix_sign(&mut phi);
            eigenfunctions.push(phi);
        }
        let max = eigenvalues[0];
        let threshold = max * g * f64::EPSILON;
        let n_positive = eigenvalues.iter().take_while(|&&l| l > threshold).count();
        Ok(Self {
            grid,
            eigenvalues,
            eigenfunctions,
            n_positive,
        })
    }

    /// Memoized spectrum for `grid_size`; the decomposition runs once per process.
    pub fn shared(grid_size: usize) -> Result<Arc<Self>> {
        static SPECTRA: OnceLock<Mutex<HashMap<usize, Arc<KernelSpectrum>>>> = OnceLock::new();
        let map = SPECTRA.get_or_init(|| Mutex::new(HashMap::new()));
        let mut guard = map.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(s) = guard.get(&grid_size) {
            return Ok(Arc::clone(s));
        }
        let s = Arc::new(Self::compute(grid_size)?);
        guard.insert(grid_size, Arc::clone(&s));
        Ok(s)
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Unscaled eigenfunction `k` (1-based) on the grid.
    pub fn eigenfunction(&self, k: usize) -> &[f64] {
        &self.eigenfunctions[k - 1]
    }

    pub fn n_positive(&self) -> usize {
        self.n_positive
    }

    /// Truncate to the leading `n_basis` modes, scale by `sqrt(lambda_k)`
    /// and fit splines.
    pub fn basis(&self, n_basis: usize) -> Result<BasisSet> {
        if n_basis > self.grid.len() {
            return Err(Error::invalid(format!(
                "n_basis {n_basis} exceeds grid size {}",
                self.grid.len()
            )));
        }
        if n_basis > self.n_positive {
            return Err(Error::invalid(format!(
                "n_basis {n_basis} exceeds the {} numerically positive eigenvalues",
                self.n_positive
            )));
        }
        let mut splines = Vec::with_capacity(n_basis);
        for k in 0..n_basis {
            let scale = self.eigenvalues[k].sqrt();
            let samples: Vec<f64> = self.eigenfunctions[k].iter().map(|v| v * scale).collect();
            splines.push(NaturalCubicSpline::uniform(0.0, 1.0, samples)?);
        }
        Ok(BasisSet {
            grid: self.grid.clone(),
            eigenvalues: self.eigenvalues[..n_basis].to_vec(),
            splines,
        })
    }
}

/// Largest-magnitude sample positive; ties go to the smallest index.
fn fix_sign(phi: &mut [f64]) {
    let mut best = 0;
    for (i, v) in phi.iter().enumerate() {
        if v.abs() > phi[best].abs() {
            best = i;
        }
    }
    if phi[best] < 0.0 {
        phi.iter_mut().for_each(|v| *v = -*v);
    }
}

/// Eigenvalue-scaled KL basis functions stored as natural cubic splines.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisSet {
    grid: Vec<f64>,
    eigenvalues: Vec<f64>,
    splines: Vec<NaturalCubicSpline>,
}

/// What is needed to rebuild a [`BasisSet`] deterministically.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BasisDescriptor {
    pub grid_size: usize,
    pub n_basis: usize,
}

/// Build the leading `n_basis` scaled eigenfunctions on a `grid_size` grid.
pub fn kl_decompose(n_basis: usize, grid_size: usize) -> Result<BasisSet> {
    if grid_size < 2 {
        return Err(Error::invalid(format!("grid_size must be at least 2, got {grid_size}")));
    }
    if n_basis > grid_size {
        return Err(Error::invalid(format!(
            "n_basis {n_basis} exceeds grid size {grid_size}"
        )));
    }
    KernelSpectrum::shared(grid_size)?.basis(n_basis)
}

impl BasisSet {
    pub fn from_descriptor(d: BasisDescriptor) -> Result<Self> {
        kl_decompose(d.n_basis, d.grid_size)
    }

    pub fn descriptor(&self) -> BasisDescriptor {
        BasisDescriptor {
            grid_size: self.grid.len(),
            n_basis: self.splines.len(),
        }
    }

    pub fn n_basis(&self) -> usize {
        self.splines.len()
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Scaled grid samples of basis function `k` (1-based).
    pub fn samples(&self, k: usize) -> Result<&[f64]> {
        self.check_index(k)?;
        Ok(self.splines[k - 1].knot_values())
    }

    /// Evaluate basis function `k` (1-based) at `clamp(x, 0, 1)`.
    pub fn eval(&self, k: usize, x: f64) -> Result<f64> {
        self.check_index(k)?;
        Ok(self.splines[k - 1].eval(x))
    }

    #[inline]
    pub(crate) fn eval_unchecked(&self, k: usize, x: f64) -> f64 {
        self.splines[k - 1].eval(x)
    }

    /// Largest `|phi_k(x)|` over all retained functions and grid samples.
    pub fn max_abs(&self) -> f64 {
        self.splines
            .iter()
            .flat_map(|s| s.knot_values().iter())
            .fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    fn check_index(&self, k: usize) -> Result<()> {
        if k == 0 || k > self.splines.len() {
            return Err(Error::invalid(format!(
                "basis index {k} out of range 1..={}",
                self.splines.len()
            )));
        }
        Ok(())
    }

    /// Write the binary cache: magic, version, kernel sign, sizes,
    /// eigenvalues, then knot values and second derivatives per function.
    pub fn write_cache(&self, path: &Path) -> Result<()> {
        let g = self.grid.len();
        let mut buf = Vec::with_capacity(32 + 8 * self.splines.len() * (2 * g + 1));
        buf.extend_from_slice(CACHE_MAGIC);
        buf.extend_from_slice(&CACHE_VERSION.to_le_bytes());
        buf.extend_from_slice(&STATIONARY_SIGN.to_le_bytes());
        buf.extend_from_slice(&(g as u64).to_le_bytes());
        buf.extend_from_slice(&(self.splines.len() as u64).to_le_bytes());
        for l in &self.eigenvalues {
            buf.extend_from_slice(&l.to_le_bytes());
        }
        for s in &self.splines {
            for v in s.knot_values().iter().chain(s.second_derivatives()) {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        let mut f = fs::File::create(path)?;
        f.write_all(&buf)?;
        Ok(())
    }

    /// Read a cache written by [`BasisSet::write_cache`]. Fails if the file
    /// was produced for another grid size, kernel sign or format version.
    pub fn read_cache(path: &Path, grid_size: usize) -> Result<Self> {
        let mut bytes = Vec::new();
        fs::File::open(path)?.read_to_end(&mut bytes)?;
        let mut r = ByteReader { bytes: &bytes, pos: 0 };
        if r.take(4)? != CACHE_MAGIC {
            return Err(Error::Format("not a basis cache file".into()));
        }
        let version = u32::from_le_bytes(r.take(4)?.try_into().unwrap());
        if version != CACHE_VERSION {
            return Err(Error::Format(format!(
                "basis cache version {version}, expected {CACHE_VERSION}"
            )));
        }
        let sign = r.f64()?;
        if sign != STATIONARY_SIGN {
            return Err(Error::Format("basis cache built with a different kernel sign".into()));
        }
        let g = r.u64()? as usize;
        if g != grid_size {
            return Err(Error::Format(format!(
                "basis cache grid size {g}, expected {grid_size}"
            )));
        }
        let n = r.u64()? as usize;
        if n > g {
            return Err(Error::Format("corrupt basis cache header".into()));
        }
        let eigenvalues = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        let mut splines = Vec::with_capacity(n);
        for _ in 0..n {
            let values = (0..g).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
            let m = (0..g).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
            splines.push(NaturalCubicSpline::from_parts(0.0, 1.0, values, m));
        }
        if r.pos != bytes.len() {
            return Err(Error::Format("trailing bytes in basis cache".into()));
        }
        Ok(Self {
            grid: uniform_grid(g),
            eigenvalues,
            splines,
        })
    }

    /// Use a valid cache at `path` holding at least `n_basis` functions, or
    /// recompute and rewrite it.
    pub fn load_or_compute(path: &Path, n_basis: usize, grid_size: usize) -> Result<Self> {
        match Self::read_cache(path, grid_size) {
            Ok(bs) if bs.n_basis() >= n_basis => {
                let mut bs = bs;
                bs.truncate(n_basis);
                Ok(bs)
            }
            Ok(_) | Err(_) => {
                let bs = kl_decompose(n_basis, grid_size)?;
                bs.write_cache(path)?;
                Ok(bs)
            }
        }
    }

    fn truncate(&mut self, n: usize) {
        self.eigenvalues.truncate(n);
        self.splines.truncate(n);
    }
}

struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(Error::Format("basis cache truncated".into()));
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

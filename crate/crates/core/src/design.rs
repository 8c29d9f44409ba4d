//! Input normalization, term enumeration and design-matrix construction.
//!
//! A term is a row of non-negative basis orders, one per input; zero means
//! the input is absent and the all-zero row is the intercept. Terms are
//! generated in stages: stage `ind` walks the multisets of positive integers
//! summing to `ind` and, for each, emits every placement of that multiset
//! onto the inputs.

use std::collections::{HashMap, HashSet};
use std::fmt;

use log::debug;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::basis::BasisSet;
use crate::error::{Error, Result};

/// Maximum number of inputs a single term may involve.
pub const MAX_INTERACTION_ORDER: usize = 3;

/// Per-input `(min, max)` ranges from the training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationBounds {
    pub mins: Vec<f64>,
    pub maxs: Vec<f64>,
}

impl NormalizationBounds {
    pub fn new(mins: Vec<f64>, maxs: Vec<f64>) -> Result<Self> {
        if mins.len() != maxs.len() {
            return Err(Error::invalid("bounds: mins and maxs differ in length"));
        }
        for (i, (lo, hi)) in mins.iter().zip(&maxs).enumerate() {
            if !lo.is_finite() || !hi.is_finite() {
                return Err(Error::data(format!("bounds for input {i} are not finite")));
            }
            if hi <= lo {
                return Err(Error::data(format!(
                    "input {i} is constant or inverted (min {lo}, max {hi})"
                )));
            }
        }
        Ok(Self { mins, maxs })
    }

    /// Column ranges of `raw` (rows are instances).
    pub fn from_data(raw: &DMatrix<f64>) -> Result<Self> {
        if raw.nrows() == 0 {
            return Err(Error::data("cannot compute bounds of an empty dataset"));
        }
        check_finite(raw)?;
        let mins = raw.column_iter().map(|c| c.min()).collect();
        let maxs = raw.column_iter().map(|c| c.max()).collect();
        Self::new(mins, maxs)
    }

    pub fn n_inputs(&self) -> usize {
        self.mins.len()
    }

    /// Map each column to `[0, 1]`, clamping values outside the training range.
    pub fn normalize(&self, raw: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if raw.ncols() != self.n_inputs() {
            return Err(Error::invalid(format!(
                "expected {} input columns, got {}",
                self.n_inputs(),
                raw.ncols()
            )));
        }
        check_finite(raw)?;
        let mut out = raw.clone();
        for (j, mut col) in out.column_iter_mut().enumerate() {
            let (lo, span) = (self.mins[j], self.maxs[j] - self.mins[j]);
            col.iter_mut().for_each(|v| *v = ((*v - lo) / span).clamp(0.0, 1.0));
        }
        Ok(out)
    }

    /// Normalize one point in place of `out`. No finiteness check.
    #[inline]
    pub fn normalize_point(&self, x: &[f64], out: &mut [f64]) {
        for j in 0..x.len() {
            out[j] = ((x[j] - self.mins[j]) / (self.maxs[j] - self.mins[j])).clamp(0.0, 1.0);
        }
    }

    pub fn denormalize(&self, norm: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = norm.clone();
        for (j, mut col) in out.column_iter_mut().enumerate() {
            let (lo, span) = (self.mins[j], self.maxs[j] - self.mins[j]);
            col.iter_mut().for_each(|v| *v = lo + *v * span);
        }
        out
    }
}

fn check_finite(raw: &DMatrix<f64>) -> Result<()> {
    if let Some(pos) = raw.iter().position(|v| !v.is_finite()) {
        let (r, c) = (pos % raw.nrows(), pos / raw.nrows());
        return Err(Error::data(format!("non-finite input at row {r}, column {c}")));
    }
    Ok(())
}

/// Multiset of positive basis orders, stored in descending order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Composition(Vec<usize>);

impl Composition {
    pub fn new(mut parts: Vec<usize>) -> Result<Self> {
        if parts.is_empty() || parts.contains(&0) {
            return Err(Error::invalid("a composition needs at least one positive part"));
        }
        parts.sort_unstable_by(|a, b| b.cmp(a));
        Ok(Self(parts))
    }

    pub fn parts(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn max_part(&self) -> usize {
        self.0[0]
    }

    pub fn sum(&self) -> usize {
        self.0.iter().sum()
    }
}

impl fmt::Display for Composition {
    /// Ascending, `+`-joined: `{1,1,2}` prints as `1+1+2`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().rev().map(|p| p.to_string()).collect();
        f.write_str(&parts.join("+"))
    }
}

/// All multisets of `1..=max_parts` positive integers summing to `ind`,
/// lowest maximum first; equal maxima are ordered by their descending-sorted
/// parts, lexicographically ascending.
pub fn integer_compositions(ind: usize, max_parts: usize) -> Vec<Composition> {
    let mut out = Vec::new();
    if ind == 0 || max_parts == 0 {
        return out;
    }
    let mut current = Vec::new();
    partitions(ind, ind, max_parts, &mut current, &mut out);
    // Descending storage makes plain lexicographic order equal to
    // (max part, then descending vector).
    out.sort();
    out
}

fn partitions(
    remaining: usize,
    cap: usize,
    slots: usize,
    current: &mut Vec<usize>,
    out: &mut Vec<Composition>,
) {
    if remaining == 0 {
        out.push(Composition(current.clone()));
        return;
    }
    if slots == 0 {
        return;
    }
    for part in (1..=cap.min(remaining)).rev() {
        current.push(part);
        partitions(remaining - part, part, slots - 1, current, out);
        current.pop();
    }
}

/// Every placement of `comp` onto `n_inputs` inputs.
///
/// Input subsets are visited in lexicographic order; within a subset the
/// distinct orderings of the parts follow ascending lexicographic order.
/// Returns nothing when the composition has more parts than there are inputs.
pub fn term_rows(comp: &Composition, n_inputs: usize) -> Vec<Vec<usize>> {
    let k = comp.len();
    if k > n_inputs {
        debug!("composition {comp} needs {k} inputs but only {n_inputs} exist; skipped");
        return Vec::new();
    }
    let mut orderings = Vec::new();
    let mut perm: Vec<usize> = comp.parts().iter().rev().copied().collect();
    loop {
        orderings.push(perm.clone());
        if !next_permutation(&mut perm) {
            break;
        }
    }

    let mut rows = Vec::new();
    let mut subset: Vec<usize> = (0..k).collect();
    loop {
        for ord in &orderings {
            let mut row = vec![0; n_inputs];
            for (&pos, &order) in subset.iter().zip(ord) {
                row[pos] = order;
            }
            rows.push(row);
        }
        if !next_combination(&mut subset, n_inputs) {
            break;
        }
    }
    rows
}

fn next_permutation(v: &mut [usize]) -> bool {
    if v.len() < 2 {
        return false;
    }
    let mut i = v.len() - 1;
    while i > 0 && v[i - 1] >= v[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = v.len() - 1;
    while v[j] <= v[i - 1] {
        j -= 1;
    }
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

fn next_combination(c: &mut [usize], n: usize) -> bool {
    let k = c.len();
    if k == 0 {
        return false;
    }
    let mut i = k;
    while i > 0 {
        i -= 1;
        if c[i] < n - k + i {
            c[i] += 1;
            for j in i + 1..k {
                c[j] = c[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Ordered list of terms. Row 0 is always the intercept.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "TermMatrixRepr", into = "TermMatrixRepr")]
pub struct TermMatrix {
    n_inputs: usize,
    rows: Vec<Vec<usize>>,
}

#[derive(Serialize, Deserialize)]
struct TermMatrixRepr {
    n_inputs: usize,
    rows: Vec<Vec<usize>>,
}

impl From<TermMatrix> for TermMatrixRepr {
    fn from(t: TermMatrix) -> Self {
        Self {
            n_inputs: t.n_inputs,
            rows: t.rows,
        }
    }
}

impl TryFrom<TermMatrixRepr> for TermMatrix {
    type Error = Error;

    fn try_from(r: TermMatrixRepr) -> Result<Self> {
        TermMatrix::from_rows(r.n_inputs, r.rows)
    }
}

impl TermMatrix {
    /// Intercept-only term matrix.
    pub fn intercept(n_inputs: usize) -> Self {
        Self {
            n_inputs,
            rows: vec![vec![0; n_inputs]],
        }
    }

    pub fn from_rows(n_inputs: usize, rows: Vec<Vec<usize>>) -> Result<Self> {
        let mut iter = rows.into_iter();
        match iter.next() {
            Some(first) if first.len() == n_inputs && first.iter().all(|&m| m == 0) => {}
            _ => return Err(Error::invalid("term matrix must start with the intercept row")),
        }
        let mut tm = Self::intercept(n_inputs);
        tm.extend(iter.collect())?;
        Ok(tm)
    }

    /// Append rows, enforcing width, uniqueness and interaction order.
    pub fn extend(&mut self, rows: Vec<Vec<usize>>) -> Result<()> {
        let mut seen: HashSet<&[usize]> = self.rows.iter().map(|r| r.as_slice()).collect();
        for r in &rows {
            if r.len() != self.n_inputs {
                return Err(Error::invalid(format!(
                    "term row has {} entries, expected {}",
                    r.len(),
                    self.n_inputs
                )));
            }
            let nonzero = r.iter().filter(|&&m| m > 0).count();
            if nonzero == 0 {
                return Err(Error::invalid("only the first term may be the intercept"));
            }
            if nonzero > MAX_INTERACTION_ORDER {
                return Err(Error::invalid(format!(
                    "term {r:?} involves {nonzero} inputs (limit {MAX_INTERACTION_ORDER})"
                )));
            }
            if !seen.insert(r.as_slice()) {
                return Err(Error::invalid(format!("duplicate term {r:?}")));
            }
        }
        self.rows.extend(rows);
        Ok(())
    }

    pub fn n_inputs(&self) -> usize {
        self.n_inputs
    }

    pub fn n_terms(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[Vec<usize>] {
        &self.rows
    }

    pub fn contains(&self, row: &[usize]) -> bool {
        self.rows.iter().any(|r| r == row)
    }

    /// Highest basis order used by any term.
    pub fn max_order(&self) -> usize {
        self.rows.iter().flatten().copied().max().unwrap_or(0)
    }

    /// Largest number of inputs in any single term.
    pub fn interaction_order(&self) -> usize {
        self.rows
            .iter()
            .map(|r| r.iter().filter(|&&m| m > 0).count())
            .max()
            .unwrap_or(0)
    }

    /// One comma-separated line of integers per term, no header.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        for r in &self.rows {
            let line: Vec<String> = r.iter().map(|m| m.to_string()).collect();
            s.push_str(&line.join(","));
            s.push('\n');
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut rows = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let row = line
                .split(',')
                .enumerate()
                .map(|(col, cell)| {
                    cell.trim().parse::<usize>().map_err(|e| Error::Parse {
                        line: lineno as u64 + 1,
                        column: col.to_string(),
                        message: e.to_string(),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        let n_inputs = rows.first().map(|r| r.len()).unwrap_or(0);
        Self::from_rows(n_inputs, rows)
    }
}

/// Evaluated basis factors `phi_k(theta_i)` per (input, order), shared
/// across columns and across calls.
pub struct FactorCache<'a> {
    norm: &'a DMatrix<f64>,
    factors: HashMap<(usize, usize), Vec<f64>>,
}

impl<'a> FactorCache<'a> {
    pub fn new(norm: &'a DMatrix<f64>) -> Self {
        Self {
            norm,
            factors: HashMap::new(),
        }
    }

    /// Design columns for `rows`, column-major `N x rows.len()`.
    pub fn columns(&mut self, rows: &[Vec<usize>], bs: &BasisSet) -> Result<DMatrix<f64>> {
        let n = self.norm.nrows();
        let mut out = DMatrix::from_element(n, rows.len(), 1.0);
        for (j, row) in rows.iter().enumerate() {
            if row.len() != self.norm.ncols() {
                return Err(Error::invalid(format!(
                    "term row has {} entries but inputs have {} columns",
                    row.len(),
                    self.norm.ncols()
                )));
            }
            for (input, &order) in row.iter().enumerate() {
                if order == 0 {
                    continue;
                }
                if order > bs.n_basis() {
                    return Err(Error::invalid(format!(
                        "term order {order} exceeds the {} available basis functions",
                        bs.n_basis()
                    )));
                }
                let norm = self.norm;
                let factor = self.factors.entry((input, order)).or_insert_with(|| {
                    norm.column(input).iter().map(|&x| bs.eval_unchecked(order, x)).collect()
                });
                let mut col = out.column_mut(j);
                for (v, f) in col.iter_mut().zip(factor.iter()) {
                    *v *= f;
                }
            }
        }
        Ok(out)
    }
}

/// Design matrix for normalized inputs `norm` (`N x n`) and term `rows`:
/// entry `(e, j)` is the product over active inputs of `phi_{m_j[i]}(theta_ei)`.
pub fn build_design_columns(
    norm: &DMatrix<f64>,
    rows: &[Vec<usize>],
    bs: &BasisSet,
) -> Result<DMatrix<f64>> {
    FactorCache::new(norm).columns(rows, bs)
}

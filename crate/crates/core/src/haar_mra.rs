//! Tensor-product Haar multiresolution analysis on `[0,1]^d`.
//!
//! A [`DyadicFunction`] stores one value per cell of the regular dyadic grid
//! with `2^L` cells per axis. Cells (and wavelet translates `k`) are ordered
//! lexicographically on their per-axis indices, axis 0 most significant.
//!
//! Wavelets are indexed by level `j`, orientation `o` and cell `k`. The
//! orientation is a nonzero `d`-bit pattern: bit `a` set means the mother
//! factor `+1 / -1` (left half / right half) is used on axis `a`, bit clear
//! means the father factor (indicator). Every basis function at level `j`
//! has magnitude `2^{jd/2}` on its support cell.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

/// Largest supported `d * L`; keeps grids addressable and allocations sane.
pub const MAX_GRID_BITS: u32 = 32;

/// Number of cells of the level-`level` grid in dimension `dim`.
pub fn cell_count(dim: usize, level: u32) -> usize {
    1usize << (dim as u32 * level)
}

/// Number of detail orientations per cell, `2^d - 1`.
pub fn orientation_count(dim: usize) -> usize {
    (1usize << dim) - 1
}

/// Linear index of a cell from its per-axis indices.
pub fn linear_index(cell: &[usize], level: u32) -> usize {
    cell.iter().fold(0usize, |acc, &c| (acc << level) | c)
}

/// Per-axis indices of a cell, written into `out` (length `d`).
pub fn multi_index(mut index: usize, level: u32, out: &mut [usize]) {
    let mask = (1usize << level) - 1;
    for slot in out.iter_mut().rev() {
        *slot = index & mask;
        index >>= level;
    }
}

/// Cell index along one axis for a coordinate in `[0,1]`; `x = 1` falls in
/// the last cell.
pub(crate) fn axis_cell(x: f64, level: u32) -> usize {
    let side = 1usize << level;
    ((x * side as f64) as usize).min(side - 1)
}

pub(crate) fn check_point(x: &[f64]) -> Result<()> {
    for (a, &v) in x.iter().enumerate() {
        if !(0.0..=1.0).contains(&v) {
            return domain(format!("coordinate {a} = {v} is outside [0, 1]"));
        }
    }
    Ok(())
}

fn check_grid(dim: usize, level: u32) -> Result<()> {
    if dim == 0 {
        return domain("dimension must be positive");
    }
    if dim as u64 * level as u64 > MAX_GRID_BITS as u64 {
        return domain(format!("grid with d = {dim}, L = {level} exceeds 2^{MAX_GRID_BITS} cells"));
    }
    Ok(())
}

/// Piecewise-constant function on the dyadic grid of `[0,1]^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DyadicFunctionRepr")]
pub struct DyadicFunction {
    dim: usize,
    level: u32,
    values: Vec<f64>,
}

#[derive(Deserialize)]
struct DyadicFunctionRepr {
    dim: usize,
    level: u32,
    values: Vec<f64>,
}

impl TryFrom<DyadicFunctionRepr> for DyadicFunction {
    type Error = Error;

    fn try_from(r: DyadicFunctionRepr) -> Result<Self> {
        DyadicFunction::new(r.dim, r.level, r.values)
    }
}

impl DyadicFunction {
    pub fn new(dim: usize, level: u32, values: Vec<f64>) -> Result<Self> {
        check_grid(dim, level)?;
        let expected = cell_count(dim, level);
        if values.len() != expected {
            return Err(Error::Shape(format!(
                "expected {expected} cell values for d = {dim}, L = {level}, got {}",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return domain(format!("cell value {i} is not finite"));
        }
        Ok(Self { dim, level, values })
    }

    pub fn constant(dim: usize, level: u32, value: f64) -> Result<Self> {
        check_grid(dim, level)?;
        Self::new(dim, level, vec![value; cell_count(dim, level)])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Integral over `[0,1]^d`, i.e. the mean cell value.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Value at a point of `[0,1]^d`.
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim {
            return Err(Error::Shape(format!(
                "point has {} coordinates, function has dimension {}",
                x.len(),
                self.dim
            )));
        }
        check_point(x)?;
        let idx = x.iter().fold(0usize, |acc, &v| (acc << self.level) | axis_cell(v, self.level));
        Ok(self.values[idx])
    }
}

/// A [`DyadicFunction`] that is a probability density: nonnegative with
/// unit integral.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DyadicFunction", into = "DyadicFunction")]
pub struct DyadicDensity(DyadicFunction);

/// Tolerance on `|integral - 1|` for a density.
pub const DENSITY_MASS_TOL: f64 = 1e-12;

impl DyadicDensity {
    pub fn new(f: DyadicFunction) -> Result<Self> {
        if let Some(i) = f.values.iter().position(|&v| v < 0.0) {
            return domain(format!("density value at cell {i} is negative ({})", f.values[i]));
        }
        let mass = f.integral();
        if (mass - 1.0).abs() > DENSITY_MASS_TOL {
            return domain(format!("density integrates to {mass}, not 1"));
        }
        Ok(Self(f))
    }

    pub fn uniform(dim: usize, level: u32) -> Result<Self> {
        Self::new(DyadicFunction::constant(dim, level, 1.0)?)
    }

    pub fn as_function(&self) -> &DyadicFunction {
        &self.0
    }

    pub fn into_function(self) -> DyadicFunction {
        self.0
    }
}

impl std::ops::Deref for DyadicDensity {
    type Target = DyadicFunction;

    fn deref(&self) -> &DyadicFunction {
        &self.0
    }
}

impl TryFrom<DyadicFunction> for DyadicDensity {
    type Error = Error;

    fn try_from(f: DyadicFunction) -> Result<Self> {
        Self::new(f)
    }
}

impl From<DyadicDensity> for DyadicFunction {
    fn from(d: DyadicDensity) -> Self {
        d.0
    }
}

/// Haar coefficient tree: the scaling coefficient on the constant function
/// plus one detail per `(j, o, k)` for levels `j < max_level`.
///
/// Details are stored flat in `(j, o, k)` order; level `j` starts at offset
/// `2^{dj} - 1`, so a full tree has `2^{dL} - 1` details.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "WaveletCoeffsRepr")]
pub struct WaveletCoeffs {
    dim: usize,
    max_level: u32,
    pub scaling: f64,
    detail: Vec<f64>,
}

#[derive(Deserialize)]
struct WaveletCoeffsRepr {
    dim: usize,
    max_level: u32,
    scaling: f64,
    detail: Vec<f64>,
}

impl TryFrom<WaveletCoeffsRepr> for WaveletCoeffs {
    type Error = Error;

    fn try_from(r: WaveletCoeffsRepr) -> Result<Self> {
        WaveletCoeffs::from_parts(r.dim, r.max_level, r.scaling, r.detail)
    }
}

impl WaveletCoeffs {
    pub fn zeros(dim: usize, max_level: u32) -> Result<Self> {
        check_grid(dim, max_level)?;
        Ok(Self { dim, max_level, scaling: 0.0, detail: vec![0.0; cell_count(dim, max_level) - 1] })
    }

    pub fn from_parts(dim: usize, max_level: u32, scaling: f64, detail: Vec<f64>) -> Result<Self> {
        check_grid(dim, max_level)?;
        let expected = cell_count(dim, max_level) - 1;
        if detail.len() != expected {
            return Err(Error::Shape(format!(
                "expected {expected} detail coefficients for d = {dim}, L = {max_level}, got {}",
                detail.len()
            )));
        }
        Ok(Self { dim, max_level, scaling, detail })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn max_level(&self) -> u32 {
        self.max_level
    }

    /// All details in `(j, o, k)` order.
    pub fn details(&self) -> &[f64] {
        &self.detail
    }

    pub fn details_mut(&mut self) -> &mut [f64] {
        &mut self.detail
    }

    /// Offset of level `j` in the flat detail vector.
    pub fn level_offset(&self, j: u32) -> usize {
        cell_count(self.dim, j) - 1
    }

    /// Details of level `j`, all orientations, `(o, k)` order.
    pub fn level(&self, j: u32) -> &[f64] {
        let start = self.level_offset(j);
        let end = self.level_offset(j + 1);
        &self.detail[start..end]
    }

    pub fn level_mut(&mut self, j: u32) -> &mut [f64] {
        let start = self.level_offset(j);
        let end = self.level_offset(j + 1);
        &mut self.detail[start..end]
    }

    fn index(&self, j: u32, o: usize, k: usize) -> Result<usize> {
        check_basis_index(self.dim, j, o, k)?;
        if j >= self.max_level {
            return domain(format!("level {j} not below max level {}", self.max_level));
        }
        Ok(self.level_offset(j) + (o - 1) * cell_count(self.dim, j) + k)
    }

    pub fn detail(&self, j: u32, o: usize, k: usize) -> Result<f64> {
        Ok(self.detail[self.index(j, o, k)?])
    }

    pub fn set_detail(&mut self, j: u32, o: usize, k: usize, value: f64) -> Result<()> {
        let i = self.index(j, o, k)?;
        self.detail[i] = value;
        Ok(())
    }

    /// Scaling coefficient followed by every detail.
    pub fn iter_all(&self) -> impl Iterator<Item = f64> + '_ {
        std::iter::once(self.scaling).chain(self.detail.iter().copied())
    }

    /// The same tree with levels `>= level` dropped, or zero details
    /// appended up to `level`.
    pub fn with_max_level(&self, level: u32) -> Result<Self> {
        check_grid(self.dim, level)?;
        let mut detail = self.detail.clone();
        detail.resize(cell_count(self.dim, level) - 1, 0.0);
        Ok(Self { dim: self.dim, max_level: level, scaling: self.scaling, detail })
    }

    pub(crate) fn same_shape(&self, other: &Self) -> Result<()> {
        if self.dim != other.dim || self.max_level != other.max_level {
            return Err(Error::Shape(format!(
                "coefficient trees differ: (d = {}, L = {}) vs (d = {}, L = {})",
                self.dim, self.max_level, other.dim, other.max_level
            )));
        }
        Ok(())
    }
}

fn check_basis_index(dim: usize, j: u32, o: usize, k: usize) -> Result<()> {
    if o == 0 || o > orientation_count(dim) {
        return domain(format!("orientation {o} not in [1, {}]", orientation_count(dim)));
    }
    if dim as u64 * j as u64 >= MAX_GRID_BITS as u64 {
        return domain(format!("level {j} too fine for d = {dim}"));
    }
    if k >= cell_count(dim, j) {
        return domain(format!("cell {k} not below 2^(d j) = {}", cell_count(dim, j)));
    }
    Ok(())
}

/// Unnormalized in-place Walsh–Hadamard over the `d` axis bits of a block of
/// `2^d` entries: slot with bit `a` clear gets `x + y`, bit set gets `x - y`.
fn hadamard(block: &mut [f64], dim: usize) {
    for a in 0..dim {
        let bit = 1usize << a;
        for e in 0..block.len() {
            if e & bit == 0 {
                let (x, y) = (block[e], block[e | bit]);
                block[e] = x + y;
                block[e | bit] = x - y;
            }
        }
    }
}

/// Linear index at level `j + 1` of child `e` of the level-`j` cell `parent`.
fn child_index(parent: &[usize], e: usize, j: u32) -> usize {
    parent.iter().enumerate().fold(0usize, |acc, (a, &c)| (acc << (j + 1)) | (2 * c + ((e >> a) & 1)))
}

/// Orthonormal Haar analysis of a piecewise-constant function.
///
/// Works on cell averages level by level: each parent block of `2^d`
/// children is Hadamard-transformed and divided by `2^d`, giving the parent
/// average and the mean differences `D_o`; the orthonormal detail is
/// `2^{-jd/2} D_o`.
pub fn analyze(f: &DyadicFunction) -> WaveletCoeffs {
    let d = f.dim;
    let nblock = 1usize << d;
    let mut out = WaveletCoeffs::zeros(d, f.level).expect("valid grid");
    let mut averages = f.values.clone();
    let mut block = vec![0.0; nblock];
    let mut parent = vec![0usize; d];
    for j in (0..f.level).rev() {
        let ncells = cell_count(d, j);
        let norm = 2f64.powf(-(d as f64) * j as f64 / 2.0) / nblock as f64;
        let mut coarse = vec![0.0; ncells];
        let offset = out.level_offset(j);
        for (k, slot) in coarse.iter_mut().enumerate() {
            multi_index(k, j, &mut parent);
            for (e, b) in block.iter_mut().enumerate() {
                *b = averages[child_index(&parent, e, j)];
            }
            hadamard(&mut block, d);
            *slot = block[0] / nblock as f64;
            for o in 1..nblock {
                out.detail[offset + (o - 1) * ncells + k] = block[o] * norm;
            }
        }
        averages = coarse;
    }
    out.scaling = averages[0];
    out
}

/// Inverse of [`analyze`]; the output has level `c.max_level()`.
pub fn synthesize(c: &WaveletCoeffs) -> DyadicFunction {
    let d = c.dim;
    let nblock = 1usize << d;
    let mut averages = vec![c.scaling];
    let mut block = vec![0.0; nblock];
    let mut parent = vec![0usize; d];
    for j in 0..c.max_level {
        let ncells = cell_count(d, j);
        let inv_norm = 2f64.powf(d as f64 * j as f64 / 2.0);
        let offset = c.level_offset(j);
        let mut fine = vec![0.0; cell_count(d, j + 1)];
        for (k, &avg) in averages.iter().enumerate() {
            block[0] = avg;
            for o in 1..nblock {
                block[o] = c.detail[offset + (o - 1) * ncells + k] * inv_norm;
            }
            hadamard(&mut block, d);
            multi_index(k, j, &mut parent);
            for (e, &b) in block.iter().enumerate() {
                fine[child_index(&parent, e, j)] = b;
            }
        }
        averages = fine;
    }
    DyadicFunction { dim: d, level: c.max_level, values: averages }
}

/// Pointwise value of the basis function `h_{j,o,k}` at `x ∈ [0,1]^d`.
pub fn eval_basis(dim: usize, j: u32, o: usize, k: usize, x: &[f64]) -> Result<f64> {
    check_basis_index(dim, j, o, k)?;
    if x.len() != dim {
        return Err(Error::Shape(format!("point has {} coordinates, expected {dim}", x.len())));
    }
    check_point(x)?;
    let mut cell = vec![0usize; dim];
    multi_index(k, j, &mut cell);
    let mut sign = 1.0;
    for (a, (&xa, &ca)) in x.iter().zip(&cell).enumerate() {
        if axis_cell(xa, j) != ca {
            return Ok(0.0);
        }
        if (o >> a) & 1 == 1 && axis_cell(xa, j + 1) % 2 == 1 {
            sign = -sign;
        }
    }
    Ok(sign * 2f64.powf(dim as f64 * j as f64 / 2.0))
}

/// The basis function `h_{j,o,k}` as a piecewise-constant function at
/// resolution `level > j`.
pub fn basis_function(dim: usize, level: u32, j: u32, o: usize, k: usize) -> Result<DyadicFunction> {
    let mut c = WaveletCoeffs::zeros(dim, level)?;
    c.set_detail(j, o, k, 1.0)?;
    Ok(synthesize(&c))
}

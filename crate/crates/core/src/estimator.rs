//! Smoothed empirical measures, the plug-in IPM estimator and the
//! un-smoothed empirical baseline.

use std::io::{Read, Write};
use std::path::Path;

use crate::besov_ipm::ipm_closed_form;
use crate::error::{domain, Error, Result};
use crate::haar_mra::{
    analyze, axis_cell, cell_count, check_point, linear_index, DyadicFunction, WaveletCoeffs, MAX_GRID_BITS,
};

/// Sample points in `[0,1]^d`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Points {
    dim: usize,
    coords: Vec<f64>,
}

impl Points {
    pub fn new(dim: usize, coords: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return domain("dimension must be positive");
        }
        if !coords.len().is_multiple_of(dim) {
            return Err(Error::Shape(format!("{} coordinates do not split into rows of {dim}", coords.len())));
        }
        for (i, p) in coords.chunks_exact(dim).enumerate() {
            check_point(p).map_err(|e| Error::Domain(format!("point {i}: {e}")))?;
        }
        Ok(Self { dim, coords })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> std::slice::ChunksExact<'_, f64> {
        self.coords.chunks_exact(self.dim)
    }

    /// Reads headerless CSV, one point per row.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(reader);
        let mut dim = 0;
        let mut coords = Vec::new();
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if row == 0 {
                dim = rec.len();
            } else if rec.len() != dim {
                return Err(Error::Shape(format!("row {row} has {} columns, expected {dim}", rec.len())));
            }
            for field in rec.iter() {
                let v: f64 =
                    field.parse().map_err(|_| Error::Domain(format!("row {row}: '{field}' is not a number")))?;
                coords.push(v);
            }
        }
        if dim == 0 {
            return domain("no points in input");
        }
        Self::new(dim, coords)
    }

    /// Writes headerless CSV with shortest round-trip float formatting.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
        for p in self.iter() {
            w.write_record(p.iter().map(|v| v.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }

    pub fn write_path(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

/// `J = round(log2(n) / (d + 2β))`, ties rounded down, at least zero.
pub fn choose_truncation(n: u64, beta: f64, d: usize) -> u32 {
    if n <= 1 || beta.is_infinite() {
        return 0;
    }
    let x = (n as f64).log2() / (d as f64 + 2.0 * beta);
    let j = (x - 0.5).ceil().max(0.0) as u32;
    j.min(MAX_GRID_BITS / d as u32)
}

/// Wavelet coefficients of an empirical measure truncated below level `J`.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothedMeasure {
    coeffs: WaveletCoeffs,
    sample_count: usize,
}

impl SmoothedMeasure {
    pub fn coeffs(&self) -> &WaveletCoeffs {
        &self.coeffs
    }

    pub fn sample_count(&self) -> usize {
        self.sample_count
    }

    pub fn truncation(&self) -> u32 {
        self.coeffs.max_level()
    }
}

fn cell_of(p: &[f64], level: u32, scratch: &mut [usize]) -> usize {
    for (c, &x) in scratch.iter_mut().zip(p) {
        *c = axis_cell(x, level);
    }
    linear_index(scratch, level)
}

/// Sample averages of every basis function at levels `j < J`.
pub fn empirical_coeffs(points: &Points, j: u32, d: usize) -> Result<SmoothedMeasure> {
    if points.dim != d {
        return Err(Error::Shape(format!("points have dimension {}, expected {d}", points.dim)));
    }
    if points.is_empty() {
        return domain("empirical coefficients need at least one point");
    }
    let mut coeffs = if j == 0 {
        WaveletCoeffs::zeros(d, 0)?
    } else {
        let cells = cell_count(d, j);
        let mut counts = vec![0u64; cells];
        let mut scratch = vec![0usize; d];
        for p in points.iter() {
            counts[cell_of(p, j, &mut scratch)] += 1;
        }
        let scale = cells as f64 / points.len() as f64;
        let hist = DyadicFunction::new(d, j, counts.iter().map(|&c| c as f64 * scale).collect())?;
        analyze(&hist)
    };
    coeffs.scaling = 1.0;
    Ok(SmoothedMeasure { coeffs, sample_count: points.len() })
}

/// Plug-in estimate with an explicit truncation level.
pub fn plugin_ipm_at_level(x: &Points, y: &Points, gamma: f64, j: u32) -> Result<f64> {
    if x.dim != y.dim {
        return Err(Error::Shape(format!("samples have dimensions {} and {}", x.dim, y.dim)));
    }
    let u = empirical_coeffs(x, j, x.dim)?;
    let v = empirical_coeffs(y, j, y.dim)?;
    ipm_closed_form(&u.coeffs, &v.coeffs, gamma)
}

/// Plug-in estimate of `d_{F_γ}(μ, ν)` with `J` chosen from `min(m, n)`.
pub fn plugin_ipm(x: &Points, y: &Points, beta: f64, gamma: f64, d: usize) -> Result<f64> {
    if x.dim != d || y.dim != d {
        return Err(Error::Shape(format!("samples have dimensions {} and {}, expected {d}", x.dim, y.dim)));
    }
    if x.is_empty() || y.is_empty() {
        return domain("both samples must be nonempty");
    }
    let j = choose_truncation(x.len().min(y.len()) as u64, beta, d);
    plugin_ipm_at_level(x, y, gamma, j)
}

/// Interleaves the per-axis cell bits, coarsest level first; within a level
/// axis `a` sits at bit `a`.
fn morton(p: &[f64], level: u32) -> u64 {
    let d = p.len() as u32;
    let mut code = 0u64;
    for b in (0..level).rev() {
        let mut group = 0u64;
        for (a, &x) in p.iter().enumerate() {
            group |= (((axis_cell(x, level) >> b) & 1) as u64) << a;
        }
        code = (code << d) | group;
    }
    code
}

/// `Σ_{j < L} 2^{-jγ} Σ_{o,k} |H(mass)_{j,o,k}|` for an integer-weighted
/// point set, divided by `denom`. `H(mass)` is the Hadamard transform of
/// child masses, so each level term is the unnormalized detail sum.
fn sparse_detail_ipm(mut entries: Vec<(u64, i64)>, d: usize, gamma: f64, l_max: u32, denom: f64) -> f64 {
    entries.sort_unstable_by_key(|e| e.0);
    let mut merged: Vec<(u64, i64)> = Vec::with_capacity(entries.len());
    for (code, w) in entries {
        match merged.last_mut() {
            Some(last) if last.0 == code => last.1 += w,
            _ => merged.push((code, w)),
        }
    }
    merged.retain(|e| e.1 != 0);

    let nblock = 1usize << d;
    let mask = (nblock - 1) as u64;
    let mut block = vec![0i64; nblock];
    let mut total = 0.0;
    for j in 0..l_max {
        let parent_shift = d as u32 * (l_max - j);
        let child_shift = parent_shift - d as u32;
        let mut level_sum: u128 = 0;
        let mut i = 0;
        while i < merged.len() {
            let parent = merged[i].0 >> parent_shift;
            block.iter_mut().for_each(|b| *b = 0);
            while i < merged.len() && merged[i].0 >> parent_shift == parent {
                block[((merged[i].0 >> child_shift) & mask) as usize] += merged[i].1;
                i += 1;
            }
            for a in 0..d {
                let bit = 1usize << a;
                for e in 0..nblock {
                    if e & bit == 0 {
                        let (x, y) = (block[e], block[e | bit]);
                        block[e] = x + y;
                        block[e | bit] = x - y;
                    }
                }
            }
            level_sum += block[1..].iter().map(|b| b.unsigned_abs() as u128).sum::<u128>();
        }
        total += 2f64.powf(-(j as f64) * gamma) * level_sum as f64;
    }
    total / denom
}

fn check_sparse_level(d: usize, l_max: u32) -> Result<()> {
    if l_max == 0 {
        return domain("L_max must be at least 1");
    }
    if d as u64 * l_max as u64 > 63 {
        return domain(format!("d * L_max = {} exceeds 63 bits", d as u64 * l_max as u64));
    }
    Ok(())
}

/// IPM between two raw empirical measures, truncated below level `L_max`.
///
/// Uses exact integer cell masses, so identical samples give exactly zero.
pub fn empirical_measure_ipm(x: &Points, y: &Points, gamma: f64, d: usize, l_max: u32) -> Result<f64> {
    check_sparse_level(d, l_max)?;
    if x.dim != d || y.dim != d {
        return Err(Error::Shape(format!("samples have dimensions {} and {}, expected {d}", x.dim, y.dim)));
    }
    if x.is_empty() || y.is_empty() {
        return domain("both samples must be nonempty");
    }
    let (m, n) = (x.len() as i64, y.len() as i64);
    let mut entries: Vec<(u64, i64)> = x.iter().map(|p| (morton(p, l_max), n)).collect();
    entries.extend(y.iter().map(|p| (morton(p, l_max), -m)));
    Ok(sparse_detail_ipm(entries, d, gamma, l_max, (m * n) as f64))
}

/// IPM between a raw empirical measure and the uniform distribution,
/// truncated below level `L_max`.
pub fn empirical_measure_ipm_to_uniform(x: &Points, gamma: f64, l_max: u32) -> Result<f64> {
    check_sparse_level(x.dim, l_max)?;
    if x.is_empty() {
        return domain("sample must be nonempty");
    }
    let entries = x.iter().map(|p| (morton(p, l_max), 1)).collect();
    Ok(sparse_detail_ipm(entries, x.dim, gamma, l_max, x.len() as f64))
}

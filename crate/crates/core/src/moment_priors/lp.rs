//! Dense two-phase tableau simplex for small equality-form programs
//! `max c·x  s.t.  A x = b, x >= 0`.
//!
//! Sized for the moment-matching program: a handful of rows and a few
//! thousand columns. The final basis is re-solved against the original
//! matrix so the returned point carries no accumulated tableau error.

use crate::error::{Error, Result};

const PIVOT_TOL: f64 = 1e-11;
const FEAS_TOL: f64 = 1e-9;
/// Degenerate pivots tolerated under Dantzig's rule before switching to
/// Bland's rule for good.
const STALL_LIMIT: usize = 64;
const MAX_ITERATIONS: usize = 100_000;

#[derive(Debug, Clone)]
pub struct LinearProgram {
    /// Row-major constraint matrix, `rows x cols`.
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    /// Dual values, one per constraint row (zero for redundant rows).
    pub duals: Vec<f64>,
    /// Basic column per kept row.
    pub basis: Vec<usize>,
    pub iterations: usize,
}

struct Tableau {
    /// `rows x (width + 1)`; last column is the right-hand side.
    t: Vec<Vec<f64>>,
    /// Reduced-cost row, same width; last entry is minus the objective.
    z: Vec<f64>,
    basis: Vec<usize>,
    /// Columns allowed to enter.
    active: Vec<bool>,
    iterations: usize,
}

impl Tableau {
    fn width(&self) -> usize {
        self.z.len() - 1
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let p = self.t[row][col];
        for v in self.t[row].iter_mut() {
            *v /= p;
        }
        let pivot_row = self.t[row].clone();
        for (r, line) in self.t.iter_mut().enumerate() {
            if r == row {
                continue;
            }
            let f = line[col];
            if f != 0.0 {
                for (v, pv) in line.iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
                line[col] = 0.0;
            }
        }
        let f = self.z[col];
        if f != 0.0 {
            for (v, pv) in self.z.iter_mut().zip(&pivot_row) {
                *v -= f * pv;
            }
            self.z[col] = 0.0;
        }
        self.basis[row] = col;
    }

    fn set_objective(&mut self, cost: &[f64]) {
        let w = self.width();
        self.z = vec![0.0; w + 1];
        self.z[..cost.len()].copy_from_slice(cost);
        for r in 0..self.t.len() {
            let cb = cost.get(self.basis[r]).copied().unwrap_or(0.0);
            if cb != 0.0 {
                for (zv, tv) in self.z.iter_mut().zip(&self.t[r]) {
                    *zv -= cb * tv;
                }
            }
        }
    }

    /// Maximizes the current objective row.
    fn optimize(&mut self) -> Result<()> {
        let w = self.width();
        let mut bland = false;
        let mut stall = 0usize;
        loop {
            if self.iterations >= MAX_ITERATIONS {
                return Err(Error::Solver { iterations: self.iterations, reason: "iteration limit reached".into() });
            }
            let entering = if bland {
                (0..w).find(|&j| self.active[j] && self.z[j] > PIVOT_TOL)
            } else {
                let mut best = None;
                let mut best_val = PIVOT_TOL;
                for j in 0..w {
                    if self.active[j] && self.z[j] > best_val {
                        best_val = self.z[j];
                        best = Some(j);
                    }
                }
                best
            };
            let Some(col) = entering else { return Ok(()) };

            let mut leave: Option<(usize, f64)> = None;
            for (r, line) in self.t.iter().enumerate() {
                let a = line[col];
                if a > PIVOT_TOL {
                    let ratio = line[w].max(0.0) / a;
                    leave = match leave {
                        None => Some((r, ratio)),
                        Some((lr, lratio)) => {
                            if ratio < lratio - 1e-14 || (ratio <= lratio + 1e-14 && self.basis[r] < self.basis[lr]) {
                                Some((r, ratio))
                            } else {
                                Some((lr, lratio))
                            }
                        }
                    };
                }
            }
            let Some((row, ratio)) = leave else {
                return Err(Error::Solver { iterations: self.iterations, reason: "unbounded".into() });
            };
            if ratio <= 1e-14 {
                stall += 1;
                if stall > STALL_LIMIT {
                    bland = true;
                }
            } else {
                stall = 0;
            }
            self.pivot(row, col);
            self.iterations += 1;
        }
    }
}

/// Gaussian elimination with partial pivoting; `m` is row-major square.
pub(crate) fn solve_dense(mut m: Vec<Vec<f64>>, mut rhs: Vec<f64>) -> Option<Vec<f64>> {
    let n = rhs.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))?;
        if m[piv][col].abs() < 1e-300 {
            return None;
        }
        m.swap(col, piv);
        rhs.swap(col, piv);
        for r in col + 1..n {
            let f = m[r][col] / m[col][col];
            if f != 0.0 {
                for c in col..n {
                    m[r][c] -= f * m[col][c];
                }
                rhs[r] -= f * rhs[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| m[r][c] * x[c]).sum();
        x[r] = (rhs[r] - s) / m[r][r];
    }
    Some(x)
}

pub fn solve(lp: &LinearProgram) -> Result<LpSolution> {
    let rows = lp.a.len();
    let cols = lp.c.len();
    if lp.b.len() != rows || lp.a.iter().any(|r| r.len() != cols) {
        return Err(Error::Shape("LP matrix, rhs and cost lengths disagree".into()));
    }
    let width = cols + rows;
    let mut t = Vec::with_capacity(rows);
    for (r, row) in lp.a.iter().enumerate() {
        let flip = if lp.b[r] < 0.0 { -1.0 } else { 1.0 };
        let mut line = vec![0.0; width + 1];
        for (v, a) in line.iter_mut().zip(row) {
            *v = flip * a;
        }
        line[cols + r] = 1.0;
        line[width] = flip * lp.b[r];
        t.push(line);
    }
    let mut active = vec![true; width];
    let mut tab =
        Tableau { t, z: vec![0.0; width + 1], basis: (cols..width).collect(), active: active.clone(), iterations: 0 };

    // Phase I: maximize minus the artificial sum.
    let mut phase1 = vec![0.0; width];
    for v in phase1.iter_mut().skip(cols) {
        *v = -1.0;
    }
    tab.set_objective(&phase1);
    tab.optimize()?;
    let infeasibility: f64 =
        tab.basis.iter().zip(&tab.t).filter(|(&bv, _)| bv >= cols).map(|(_, line)| line[width]).sum();
    if infeasibility > FEAS_TOL {
        return Err(Error::Solver {
            iterations: tab.iterations,
            reason: format!("infeasible (phase I residual {infeasibility:e})"),
        });
    }

    // Drive remaining artificials out; rows where that is impossible are
    // redundant and get dropped.
    let mut keep = vec![true; rows];
    for r in 0..rows {
        if tab.basis[r] >= cols {
            let candidate = (0..cols)
                .filter(|&j| tab.t[r][j].abs() > 1e-9)
                .max_by(|&a, &b| tab.t[r][a].abs().total_cmp(&tab.t[r][b].abs()));
            match candidate {
                Some(j) => {
                    tab.pivot(r, j);
                    tab.iterations += 1;
                }
                None => keep[r] = false,
            }
        }
    }
    for v in active.iter_mut().skip(cols) {
        *v = false;
    }
    tab.active = active;
    let kept_rows: Vec<usize> = (0..rows).filter(|&r| keep[r]).collect();
    tab.t = kept_rows.iter().map(|&r| tab.t[r].clone()).collect();
    tab.basis = kept_rows.iter().map(|&r| tab.basis[r]).collect();

    // Phase II.
    let mut cost = lp.c.clone();
    cost.resize(width, 0.0);
    tab.set_objective(&cost);
    tab.optimize()?;

    // Re-solve the basic system on the original data.
    let basis = tab.basis.clone();
    let bmat: Vec<Vec<f64>> = kept_rows.iter().map(|&r| basis.iter().map(|&j| lp.a[r][j]).collect()).collect();
    let rhs: Vec<f64> = kept_rows.iter().map(|&r| lp.b[r]).collect();
    let xb = solve_dense(bmat.clone(), rhs)
        .ok_or_else(|| Error::Solver { iterations: tab.iterations, reason: "singular final basis".into() })?;
    let mut x = vec![0.0; cols];
    for (&j, &v) in basis.iter().zip(&xb) {
        if v < -FEAS_TOL {
            return Err(Error::Solver {
                iterations: tab.iterations,
                reason: format!("refined basic value {v:e} is negative"),
            });
        }
        x[j] = v.max(0.0);
    }
    let bt: Vec<Vec<f64>> = (0..basis.len()).map(|i| bmat.iter().map(|row| row[i]).collect()).collect();
    let cb: Vec<f64> = basis.iter().map(|&j| lp.c[j]).collect();
    let y = solve_dense(bt, cb)
        .ok_or_else(|| Error::Solver { iterations: tab.iterations, reason: "singular final basis".into() })?;
    let mut duals = vec![0.0; rows];
    for (&r, &v) in kept_rows.iter().zip(&y) {
        duals[r] = v;
    }
    let objective = x.iter().zip(&lp.c).map(|(a, b)| a * b).sum();
    Ok(LpSolution { x, objective, duals, basis, iterations: tab.iterations })
}

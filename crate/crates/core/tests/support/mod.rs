#![allow(dead_code)]

//! Independent oracle for the moment-matching program: the full symmetric
//! grid (no folding), raw monomial constraints for every order `1..=2K`,
//! and an exact simplex over integer data. A floating-point revised simplex
//! only supplies the starting basis; optimality is decided in exact
//! arithmetic.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

/// `max c·x  s.t.  A x = b, x >= 0` with integer data and `b >= 0`.
pub struct IntProgram {
    pub a: Vec<Vec<BigInt>>,
    pub b: Vec<BigInt>,
    pub c: Vec<BigInt>,
    /// Floating copy of the same program with rows rescaled for conditioning.
    pub a_f: Vec<Vec<f64>>,
    pub b_f: Vec<f64>,
    pub c_f: Vec<f64>,
}

/// Grid `t_i = (i - h)/h`, `h = (G-1)/2` for odd `G`. Row `l` is scaled by
/// `h^l`, the objective by `h`, so every entry is an integer.
pub fn moment_program(k: usize, grid_size: usize) -> IntProgram {
    assert!(grid_size % 2 == 1, "oracle grid must contain 0");
    let h = (grid_size as i64 - 1) / 2;
    let n = grid_size;
    let num: Vec<i64> = (0..n as i64).map(|i| i - h).collect();
    let mut a = Vec::new();
    let mut a_f = Vec::new();
    let mass = |first: bool| {
        let row: Vec<BigInt> = (0..2 * n).map(|j| BigInt::from(((j < n) == first) as i64)).collect();
        let row_f = row.iter().map(|v| v.to_f64().unwrap()).collect();
        (row, row_f)
    };
    for first in [true, false] {
        let (r, rf) = mass(first);
        a.push(r);
        a_f.push(rf);
    }
    for l in 1..=2 * k as u32 {
        let mut row = Vec::with_capacity(2 * n);
        let mut row_f = Vec::with_capacity(2 * n);
        for sign in [-1i64, 1] {
            for &m in &num {
                row.push(BigInt::from(sign) * BigInt::from(m).pow(l));
                row_f.push(sign as f64 * (m as f64 / h as f64).powi(l as i32));
            }
        }
        a.push(row);
        a_f.push(row_f);
    }
    let rows = a.len();
    let mut b = vec![BigInt::zero(); rows];
    b[0] = BigInt::one();
    b[1] = BigInt::one();
    let b_f = b.iter().map(|v| v.to_f64().unwrap()).collect();
    let mut c = Vec::with_capacity(2 * n);
    for sign in [-1i64, 1] {
        for &m in &num {
            c.push(BigInt::from(sign * m.abs()));
        }
    }
    let c_f = c.iter().map(|v| v.to_f64().unwrap() / h as f64).collect();
    IntProgram { a, b, c, a_f, b_f, c_f }
}

fn lu_solve(mut m: Vec<Vec<f64>>, mut rhs: Vec<f64>) -> Vec<f64> {
    let n = rhs.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&x, &y| m[x][col].abs().total_cmp(&m[y][col].abs())).unwrap();
        m.swap(col, piv);
        rhs.swap(col, piv);
        for r in col + 1..n {
            let f = m[r][col] / m[col][col];
            if f != 0.0 {
                for cc in col..n {
                    m[r][cc] -= f * m[col][cc];
                }
                rhs[r] -= f * rhs[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|cc| m[r][cc] * x[cc]).sum();
        x[r] = (rhs[r] - s) / m[r][r];
    }
    x
}

/// Revised simplex in floating point, refactorizing every iteration.
/// Columns `>= cols` are artificials. Returns the final basis.
fn float_basis(p: &IntProgram) -> Vec<usize> {
    let rows = p.a_f.len();
    let cols = p.c_f.len();
    let column = |j: usize| -> Vec<f64> {
        if j < cols {
            p.a_f.iter().map(|r| r[j]).collect()
        } else {
            (0..rows).map(|r| if r == j - cols { 1.0 } else { 0.0 }).collect()
        }
    };
    let mut basis: Vec<usize> = (cols..cols + rows).collect();
    for phase in 0..2 {
        let cost = |j: usize| -> f64 {
            match (phase, j >= cols) {
                (0, true) => -1.0,
                (0, false) => 0.0,
                (_, true) => 0.0,
                (_, false) => p.c_f[j],
            }
        };
        let allowed = if phase == 0 { cols + rows } else { cols };
        for _ in 0..20_000 {
            let bt: Vec<Vec<f64>> = (0..rows).map(|r| basis.iter().map(|&j| column(j)[r]).collect()).collect();
            let x = lu_solve(bt.clone(), p.b_f.clone());
            let btt: Vec<Vec<f64>> = (0..rows).map(|i| (0..rows).map(|r| bt[r][i]).collect()).collect();
            let y = lu_solve(btt, basis.iter().map(|&j| cost(j)).collect());
            let mut enter = None;
            let mut best = 1e-9;
            for j in 0..allowed {
                if basis.contains(&j) {
                    continue;
                }
                let col = column(j);
                let d = cost(j) - y.iter().zip(&col).map(|(a, b)| a * b).sum::<f64>();
                if d > best {
                    best = d;
                    enter = Some(j);
                }
            }
            let Some(q) = enter else { break };
            let w = lu_solve(bt, column(q));
            let mut leave: Option<(usize, f64)> = None;
            for r in 0..rows {
                if w[r] > 1e-11 {
                    let ratio = x[r].max(0.0) / w[r];
                    if leave.is_none_or(|(_, v)| ratio < v) {
                        leave = Some((r, ratio));
                    }
                }
            }
            let Some((r, _)) = leave else { break };
            basis[r] = q;
        }
    }
    basis
}

fn rational_solve(mut m: Vec<Vec<BigRational>>, mut rhs: Vec<BigRational>) -> Option<Vec<BigRational>> {
    let n = rhs.len();
    for col in 0..n {
        let piv = (col..n).find(|&r| !m[r][col].is_zero())?;
        m.swap(col, piv);
        rhs.swap(col, piv);
        for r in col + 1..n {
            if m[r][col].is_zero() {
                continue;
            }
            let f = &m[r][col] / &m[col][col];
            for cc in col..n {
                let v = &f * &m[col][cc];
                m[r][cc] -= v;
            }
            let v = &f * &rhs[col];
            rhs[r] -= v;
        }
    }
    let mut x = vec![BigRational::zero(); n];
    for r in (0..n).rev() {
        let mut s = rhs[r].clone();
        for cc in r + 1..n {
            s -= &m[r][cc] * &x[cc];
        }
        x[r] = s / &m[r][r];
    }
    Some(x)
}

/// Exact optimum of the program, starting from the floating-point basis and
/// pivoting with Bland's rule in rational arithmetic until no column prices
/// out. Panics if the starting basis is not exactly primal feasible.
pub fn exact_optimum(p: &IntProgram) -> BigRational {
    let rows = p.a.len();
    let cols = p.c.len();
    let mut basis = float_basis(p);
    assert!(basis.iter().all(|&j| j < cols), "artificial left in the floating basis");
    let rat = |v: &BigInt| BigRational::from_integer(v.clone());
    loop {
        let bm: Vec<Vec<BigRational>> = (0..rows).map(|r| basis.iter().map(|&j| rat(&p.a[r][j])).collect()).collect();
        let x = rational_solve(bm.clone(), p.b.iter().map(rat).collect()).expect("nonsingular basis");
        assert!(x.iter().all(|v| !v.is_negative()), "basis is not primal feasible");
        let bmt: Vec<Vec<BigRational>> = (0..rows).map(|i| (0..rows).map(|r| bm[r][i].clone()).collect()).collect();
        let y = rational_solve(bmt, basis.iter().map(|&j| rat(&p.c[j])).collect()).expect("nonsingular basis");
        // Clear denominators so pricing is integer arithmetic.
        let den = y.iter().fold(BigInt::one(), |acc, v| num_integer::Integer::lcm(&acc, v.denom()));
        let yi: Vec<BigInt> = y.iter().map(|v| v.numer() * (&den / v.denom())).collect();
        let entering = (0..cols).find(|&j| {
            if basis.contains(&j) {
                return false;
            }
            let dot: BigInt = (0..rows).map(|r| &yi[r] * &p.a[r][j]).sum();
            &p.c[j] * &den - dot > BigInt::zero()
        });
        let Some(q) = entering else {
            return basis.iter().zip(&x).map(|(&j, v)| rat(&p.c[j]) * v).fold(BigRational::zero(), |a, b| a + b);
        };
        let w = rational_solve(bm, (0..rows).map(|r| rat(&p.a[r][q])).collect()).expect("nonsingular basis");
        let mut leave: Option<(usize, BigRational)> = None;
        for r in 0..rows {
            if w[r].is_positive() {
                let ratio = &x[r] / &w[r];
                let better = match &leave {
                    None => true,
                    Some((lr, lv)) => ratio < *lv || (ratio == *lv && basis[r] < basis[*lr]),
                };
                if better {
                    leave = Some((r, ratio));
                }
            }
        }
        let (r, _) = leave.expect("bounded program");
        basis[r] = q;
    }
}

/// Optimal `E_{q1}|t| - E_{q0}|t|` on the grid of `grid_size` points in
/// `[-τ, τ]`, as an `f64`.
pub fn unfolded_gap_oracle(k: usize, tau: f64, grid_size: usize) -> f64 {
    let p = moment_program(k, grid_size);
    let h = BigInt::from((grid_size as i64 - 1) / 2);
    let opt = exact_optimum(&p) / BigRational::from_integer(h);
    tau * opt.to_f64().unwrap()
}

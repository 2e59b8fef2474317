//! Symmetric priors on `[-τ, τ]` that agree on every moment up to `2K` but
//! differ as much as possible in `E|t|`.
//!
//! The pair is the optimum of a finite linear program over a symmetric
//! grid. Weights are optimized on the folded grid `[0, τ]` and mirrored, so
//! odd moments vanish by construction and only the even moments
//! `2, 4, …, 2K` need constraints. The constraints are written in the
//! even Chebyshev polynomials `T_{2l}(t/τ)`, which span the same space as
//! `t^2, …, t^{2K}` together with the mass constraint but keep the program
//! well conditioned.

pub mod lp;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use lp::{LinearProgram, LpSolution};

/// Weights below this are treated as zero after solving.
pub const PRUNE_TOL: f64 = 1e-12;
/// Largest tolerated moment mismatch of a constructed pair.
pub const MOMENT_TOL: f64 = 1e-9;
const SYMMETRY_TOL: f64 = 1e-12;
const MASS_TOL: f64 = 1e-12;

/// A finitely supported probability measure on `[-τ, τ]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretePrior {
    tau: f64,
    support: Vec<f64>,
    weights: Vec<f64>,
}

impl DiscretePrior {
    /// A symmetric prior; rejects supports that are not mirror images.
    pub fn new(tau: f64, support: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        let p = Self::general(tau, support, weights)?;
        if !p.is_symmetric() {
            return domain("prior is not symmetric under t -> -t");
        }
        Ok(p)
    }

    /// Any finitely supported probability measure on `[-τ, τ]`, symmetric
    /// or not.
    pub fn general(tau: f64, support: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if !(tau > 0.0) || !tau.is_finite() {
            return domain(format!("tau = {tau} must be positive and finite"));
        }
        if support.len() != weights.len() || support.is_empty() {
            return Err(Error::Shape(format!("support has {} points, weights has {}", support.len(), weights.len())));
        }
        if support.windows(2).any(|w| !(w[0] < w[1])) {
            return domain("support must be strictly increasing");
        }
        if let Some(s) = support.iter().find(|s| !(s.abs() <= tau)) {
            return domain(format!("support point {s} outside [-{tau}, {tau}]"));
        }
        if let Some(w) = weights.iter().find(|w| !(**w >= 0.0)) {
            return domain(format!("weight {w} is negative"));
        }
        let mass = neumaier_sum(weights.iter().copied());
        if (mass - 1.0).abs() > MASS_TOL {
            return domain(format!("weights sum to {mass}, not 1"));
        }
        Ok(Self { tau, support, weights })
    }

    /// Point mass at the origin.
    pub fn dirac_zero(tau: f64) -> Result<Self> {
        Self::new(tau, vec![0.0], vec![1.0])
    }

    /// `½(δ_{-a} + δ_a)`.
    pub fn two_point(tau: f64, a: f64) -> Result<Self> {
        Self::new(tau, vec![-a, a], vec![0.5, 0.5])
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn support(&self) -> &[f64] {
        &self.support
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn is_symmetric(&self) -> bool {
        let n = self.support.len();
        (0..n).all(|i| {
            let j = n - 1 - i;
            (self.support[i] + self.support[j]).abs() <= SYMMETRY_TOL
                && (self.weights[i] - self.weights[j]).abs() <= SYMMETRY_TOL
        })
    }

    /// Same weights on the support scaled by `factor > 0`.
    pub fn dilate(&self, factor: f64) -> Result<Self> {
        let support = self.support.iter().map(|s| s * factor).collect();
        Self::general(self.tau * factor, support, self.weights.clone())
    }

    /// Standard deviation of `|t|`.
    pub fn abs_sd(&self) -> f64 {
        let m1 = mean_abs(self);
        (moment(self, 2) - m1 * m1).max(0.0).sqrt()
    }
}

/// Neumaier-compensated sum.
pub(crate) fn neumaier_sum<I: IntoIterator<Item = f64>>(xs: I) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for x in xs {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// `E_p[t^l]`.
pub fn moment(p: &DiscretePrior, l: u32) -> f64 {
    neumaier_sum(p.support.iter().zip(&p.weights).map(|(s, w)| w * s.powi(l as i32)))
}

/// `E_p|t|`.
pub fn mean_abs(p: &DiscretePrior) -> f64 {
    neumaier_sum(p.support.iter().zip(&p.weights).map(|(s, w)| w * s.abs()))
}

/// `K = ceil((c/2) ln n / ln ln n)`, at least one.
pub fn choose_k(n: u64, c: f64) -> Result<usize> {
    if n < 16 {
        return domain(format!("choose_K needs n >= 16, got {n}"));
    }
    if !(c > 0.0) || !c.is_finite() {
        return domain(format!("c = {c} must be positive and finite"));
    }
    let ln = (n as f64).ln();
    let k = (c / 2.0 * ln / ln.ln()).ceil();
    Ok((k as usize).max(1))
}

/// Moment-matched pair with its `E|t|` gap and `κ = gap·K/(2τ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorPair {
    pub q0: DiscretePrior,
    pub q1: DiscretePrior,
    pub k: usize,
    pub gap: f64,
    pub kappa: f64,
}

impl PriorPair {
    pub fn tau(&self) -> f64 {
        self.q0.tau
    }

    /// Largest `|E_{q1} t^l - E_{q0} t^l|` over `l = 0..=2K`.
    pub fn max_moment_residual(&self) -> f64 {
        (0..=2 * self.k as u32).map(|l| (moment(&self.q1, l) - moment(&self.q0, l)).abs()).fold(0.0, f64::max)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PriorRepr {
    support: Vec<f64>,
    weights: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PriorPairRepr {
    tau: f64,
    #[serde(rename = "K")]
    k: usize,
    gap: f64,
    kappa: f64,
    q0: PriorRepr,
    q1: PriorRepr,
}

impl Serialize for PriorPair {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        PriorPairRepr {
            tau: self.tau(),
            k: self.k,
            gap: self.gap,
            kappa: self.kappa,
            q0: PriorRepr { support: self.q0.support.clone(), weights: self.q0.weights.clone() },
            q1: PriorRepr { support: self.q1.support.clone(), weights: self.q1.weights.clone() },
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for PriorPair {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let r = PriorPairRepr::deserialize(d)?;
        let q0 = DiscretePrior::new(r.tau, r.q0.support, r.q0.weights).map_err(D::Error::custom)?;
        let q1 = DiscretePrior::new(r.tau, r.q1.support, r.q1.weights).map_err(D::Error::custom)?;
        let pair = PriorPair { q0, q1, k: r.k, gap: r.gap, kappa: r.kappa };
        if pair.max_moment_residual() > MOMENT_TOL {
            return Err(D::Error::custom("priors do not match moments up to 2K"));
        }
        let gap = mean_abs(&pair.q1) - mean_abs(&pair.q0);
        if (gap - r.gap).abs() > 1e-9 {
            return Err(D::Error::custom(format!("stored gap {} disagrees with priors ({gap})", r.gap)));
        }
        Ok(pair)
    }
}

/// Nonnegative half of the symmetric grid `{-1 + 2i/(G-1)}` on `[-1, 1]`.
pub fn folded_grid(grid_size: usize) -> Vec<f64> {
    let g = grid_size - 1;
    (0..grid_size).filter(|&i| 2 * i >= g).map(|i| (2 * i - g) as f64 / g as f64).collect()
}

/// Even Chebyshev values `T_2(s), T_4(s), …, T_{2K}(s)`.
fn even_chebyshev(s: f64, k: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(k);
    let (mut prev, mut cur) = (1.0, s);
    for n in 2..=2 * k {
        let next = 2.0 * s * cur - prev;
        prev = cur;
        cur = next;
        if n % 2 == 0 {
            out.push(cur);
        }
    }
    out
}

/// The moment-matching program on a folded grid in `[0, 1]`.
///
/// Columns `0..h` are the folded `q0` weights, `h..2h` the `q1` weights.
pub(crate) fn prior_program(k: usize, folded: &[f64]) -> LinearProgram {
    let h = folded.len();
    let cheb: Vec<Vec<f64>> = folded.iter().map(|&s| even_chebyshev(s, k)).collect();
    let mut a = Vec::with_capacity(k + 2);
    let mut mass0 = vec![0.0; 2 * h];
    let mut mass1 = vec![0.0; 2 * h];
    for i in 0..h {
        mass0[i] = 1.0;
        mass1[h + i] = 1.0;
    }
    a.push(mass0);
    a.push(mass1);
    for l in 0..k {
        let mut row = vec![0.0; 2 * h];
        for i in 0..h {
            row[i] = -cheb[i][l];
            row[h + i] = cheb[i][l];
        }
        a.push(row);
    }
    let mut b = vec![0.0; k + 2];
    b[0] = 1.0;
    b[1] = 1.0;
    let mut c = vec![0.0; 2 * h];
    for (i, &s) in folded.iter().enumerate() {
        c[i] = -s;
        c[h + i] = s;
    }
    LinearProgram { a, b, c }
}

fn unfold(tau: f64, folded: &[f64], weights: &[f64]) -> Result<DiscretePrior> {
    let mut kept: Vec<(f64, f64)> =
        folded.iter().zip(weights).filter(|(_, &w)| w >= PRUNE_TOL).map(|(&s, &w)| (s, w)).collect();
    let mass = neumaier_sum(kept.iter().map(|(_, w)| *w));
    for (_, w) in kept.iter_mut() {
        *w /= mass;
    }
    let mut support = Vec::with_capacity(2 * kept.len());
    let mut probs = Vec::with_capacity(2 * kept.len());
    for &(s, w) in kept.iter().rev() {
        if s > 0.0 {
            support.push(-tau * s);
            probs.push(w / 2.0);
        }
    }
    for &(s, w) in &kept {
        if s == 0.0 {
            support.push(0.0);
            probs.push(w);
        } else {
            support.push(tau * s);
            probs.push(w / 2.0);
        }
    }
    DiscretePrior::new(tau, support, probs)
}

/// Solves the program on a given folded grid, without size preconditions.
pub(crate) fn solve_prior_program(k: usize, tau: f64, folded: &[f64]) -> Result<(PriorPair, LpSolution)> {
    let program = prior_program(k, folded);
    let sol = lp::solve(&program)?;
    let h = folded.len();
    let q0 = unfold(tau, folded, &sol.x[..h])?;
    let q1 = unfold(tau, folded, &sol.x[h..])?;
    let gap = (mean_abs(&q1) - mean_abs(&q0)).max(0.0);
    let pair = PriorPair { q0, q1, k, gap, kappa: gap * k as f64 / (2.0 * tau) };
    let residual = pair.max_moment_residual();
    if residual > MOMENT_TOL {
        return Err(Error::Solver {
            iterations: sol.iterations,
            reason: format!("moment residual {residual:e} exceeds {MOMENT_TOL:e}"),
        });
    }
    Ok((pair, sol))
}

/// Builds the moment-matched pair on the symmetric grid of `grid_size`
/// points in `[-τ, τ]`.
pub fn construct_prior_pair(k: usize, tau: f64, grid_size: usize) -> Result<PriorPair> {
    if k == 0 {
        return domain("K must be positive");
    }
    if !(tau > 0.0) || !tau.is_finite() {
        return domain(format!("tau = {tau} must be positive and finite"));
    }
    if grid_size < 4 * k + 4 {
        return domain(format!("grid size {grid_size} is below 4K + 4 = {}", 4 * k + 4));
    }
    Ok(solve_prior_program(k, tau, &folded_grid(grid_size))?.0)
}

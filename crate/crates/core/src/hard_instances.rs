//! Perturbed-uniform densities `1 + n^{-1/2} Σ_k θ_k h_{J,k}` used as the
//! composite alternatives of the lower bound.
//!
//! Only the all-mother orientation at level `J` is perturbed, so the
//! perturbations have disjoint supports and the density is a product of
//! per-cell factors.

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::estimator::{choose_truncation, Points};
use crate::haar_mra::{cell_count, multi_index, orientation_count, DyadicDensity, DyadicFunction, MAX_GRID_BITS};
use crate::moment_priors::DiscretePrior;

const BUDGET_TOL: f64 = 1e-12;

/// Radius that keeps every `θ ∈ [-τ, τ]^{2^{dJ}}` inside the smoothness
/// budget when `J = choose_truncation(n, β, d)`.
///
/// Nearest rounding gives `2^{J(2β+d)} ≤ n·2^{(2β+d)/2}`, hence the factor.
pub fn default_radius(tau: f64, beta: f64, d: usize) -> f64 {
    tau * 2f64.powf((2.0 * beta + d as f64) / 4.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "HardInstanceRepr")]
pub struct HardInstance {
    dim: usize,
    j: u32,
    beta: f64,
    gamma: f64,
    n: u64,
    radius: f64,
    theta: Vec<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct HardInstanceRepr {
    dim: usize,
    j: u32,
    beta: f64,
    gamma: f64,
    n: u64,
    radius: f64,
    theta: Vec<f64>,
}

impl TryFrom<HardInstanceRepr> for HardInstance {
    type Error = Error;

    fn try_from(r: HardInstanceRepr) -> Result<Self> {
        HardInstance::new(r.dim, r.j, r.beta, r.gamma, r.n, r.radius, r.theta)
    }
}

impl HardInstance {
    /// Checks the shape, the smoothness budget and nonnegativity.
    pub fn new(dim: usize, j: u32, beta: f64, gamma: f64, n: u64, radius: f64, theta: Vec<f64>) -> Result<Self> {
        if dim == 0 || dim as u64 * (j as u64 + 1) > MAX_GRID_BITS as u64 {
            return domain(format!("level J = {j} is out of range for d = {dim}"));
        }
        if n == 0 {
            return domain("n must be positive");
        }
        if !(beta >= 0.0) || !(gamma >= 0.0) || !(radius > 0.0) {
            return domain("beta and gamma must be nonnegative and the radius positive");
        }
        if theta.len() != cell_count(dim, j) {
            return Err(Error::Shape(format!(
                "theta has {} entries, expected 2^(dJ) = {}",
                theta.len(),
                cell_count(dim, j)
            )));
        }
        if let Some(k) = theta.iter().position(|t| !t.is_finite()) {
            return domain(format!("theta[{k}] is not finite"));
        }
        let h = Self { dim, j, beta, gamma, n, radius, theta };
        let a = h.amplitude();
        let budget = 2f64.powf(-(j as f64) * (beta + dim as f64 / 2.0)) * radius;
        for (k, t) in h.theta.iter().enumerate() {
            if a * t.abs() > budget * (1.0 + BUDGET_TOL) {
                return domain(format!(
                    "theta[{k}] = {t} exceeds the smoothness budget: a|theta| = {} > {budget}",
                    a * t.abs()
                ));
            }
        }
        h.check_validity()?;
        Ok(h)
    }

    /// Instance at `J = choose_truncation(n, β, d)` with the default radius
    /// for the prior's `τ` and `θ` drawn i.i.d. from `prior`.
    pub fn from_prior<R: Rng + ?Sized>(
        prior: &DiscretePrior,
        dim: usize,
        beta: f64,
        gamma: f64,
        n: u64,
        rng: &mut R,
    ) -> Result<Self> {
        let j = choose_truncation(n, beta, dim);
        let theta = draw_theta(prior, cell_count(dim, j), rng);
        Self::new(dim, j, beta, gamma, n, default_radius(prior.tau(), beta, dim), theta)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn j(&self) -> u32 {
        self.j
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    /// `a = n^{-1/2}`.
    pub fn amplitude(&self) -> f64 {
        1.0 / (self.n as f64).sqrt()
    }

    fn check_validity(&self) -> Result<()> {
        let peak = self.amplitude() * 2f64.powf(self.dim as f64 * self.j as f64 / 2.0);
        for (k, t) in self.theta.iter().enumerate() {
            if peak * t.abs() > 1.0 {
                return domain(format!(
                    "density is negative on cell {k}: a |theta_k| 2^(Jd/2) = {} > 1",
                    peak * t.abs()
                ));
            }
        }
        Ok(())
    }
}

/// The density `1 + a Σ_k θ_k h_{J,k}` at resolution `J + 1`.
pub fn build_density(h: &HardInstance) -> Result<DyadicDensity> {
    h.check_validity()?;
    let d = h.dim;
    let fine = h.j + 1;
    let peak = h.amplitude() * 2f64.powf(d as f64 * h.j as f64 / 2.0);
    let mut values = vec![0.0; cell_count(d, fine)];
    let mut idx = vec![0usize; d];
    let mut parent = vec![0usize; d];
    for (c, v) in values.iter_mut().enumerate() {
        multi_index(c, fine, &mut idx);
        let mut odd = 0;
        for (p, &i) in parent.iter_mut().zip(&idx) {
            *p = i >> 1;
            odd += i & 1;
        }
        let k = crate::haar_mra::linear_index(&parent, h.j);
        let sign = if odd % 2 == 0 { 1.0 } else { -1.0 };
        *v = 1.0 + sign * peak * h.theta[k];
    }
    DyadicDensity::new(DyadicFunction::new(d, fine, values)?)
}

/// Orientation index of the all-mother wavelet, `2^d - 1`.
pub fn all_mother(dim: usize) -> usize {
    orientation_count(dim)
}

/// Exact `d_{F_γ}(uniform, ν_θ) = 2^{-J(γ + d/2)} a Σ_k |θ_k|`.
pub fn true_ipm(h: &HardInstance) -> f64 {
    let sum: f64 = h.theta.iter().map(|t| t.abs()).sum();
    2f64.powf(-(h.j as f64) * (h.gamma + h.dim as f64 / 2.0)) * h.amplitude() * sum
}

/// `count` i.i.d. draws from `p` by inverse CDF.
pub fn draw_theta<R: Rng + ?Sized>(p: &DiscretePrior, count: usize, rng: &mut R) -> Vec<f64> {
    let mut cdf = Vec::with_capacity(p.weights().len());
    let mut acc = 0.0;
    for w in p.weights() {
        acc += w;
        cdf.push(acc);
    }
    let last = cdf.len() - 1;
    (0..count)
        .map(|_| {
            let u: f64 = rng.gen::<f64>() * acc;
            p.support()[cdf.partition_point(|&c| c <= u).min(last)]
        })
        .collect()
}

/// `n` i.i.d. points from a piecewise-constant density: a cell drawn by
/// mass, then a uniform point inside it.
pub fn sample<R: Rng + ?Sized>(density: &DyadicDensity, n: usize, rng: &mut R) -> Result<Points> {
    let dist =
        WeightedIndex::new(density.values()).map_err(|e| Error::Domain(format!("density cannot be sampled: {e}")))?;
    Ok(sample_with(&dist, density.dim(), density.level(), n, rng))
}

/// Like [`sample`] with a prebuilt cell distribution, for repeated draws.
pub fn sample_with<R: Rng + ?Sized>(
    cells: &WeightedIndex<f64>,
    dim: usize,
    level: u32,
    n: usize,
    rng: &mut R,
) -> Points {
    let side = (1u64 << level) as f64;
    let mut idx = vec![0usize; dim];
    let mut coords = Vec::with_capacity(n * dim);
    for _ in 0..n {
        multi_index(cells.sample(rng), level, &mut idx);
        for &i in &idx {
            coords.push((i as f64 + rng.gen::<f64>()) / side);
        }
    }
    Points::new(dim, coords).expect("cell points lie in the unit cube")
}

//! Monte Carlo rate sweeps, log-log slope fits and certificate sweeps.
//!
//! Every replicate draws from its own generator seeded by
//! `(master_seed, n, replicate)`, and results are gathered in key order, so
//! reports do not depend on the thread count.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::distributions::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::besov_ipm::ipm_closed_form;
use crate::error::{Error, Result};
use crate::estimator::{
    choose_truncation, empirical_measure_ipm, empirical_measure_ipm_to_uniform, plugin_ipm, Points,
};
use crate::haar_mra::{
    analyze, cell_count, orientation_count, synthesize, DyadicDensity, WaveletCoeffs, MAX_GRID_BITS,
};
use crate::hard_instances::{build_density, sample_with, true_ipm, HardInstance};
use crate::lecam::{certificate_for_pair, tv_upper_bound, LowerBoundCertificate};
use crate::moment_priors::{choose_k, construct_prior_pair, PriorPair};

/// Generator for one replicate; the 32-byte seed is
/// `master || n || replicate || 0` in little-endian, so distinct triples
/// never share a stream.
pub fn seed_for(master_seed: u64, n: u64, replicate: u64) -> ChaCha8Rng {
    let mut seed = [0u8; 32];
    seed[..8].copy_from_slice(&master_seed.to_le_bytes());
    seed[8..16].copy_from_slice(&n.to_le_bytes());
    seed[16..24].copy_from_slice(&replicate.to_le_bytes());
    ChaCha8Rng::from_seed(seed)
}

/// Geometric sample-size grid `start, start·f, …` up to `stop`, written
/// `start:stop:factor`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NGrid {
    pub start: u64,
    pub stop: u64,
    pub factor: u64,
}

impl NGrid {
    pub fn values(&self) -> Vec<u64> {
        let mut out = vec![];
        let mut n = self.start;
        while n <= self.stop {
            out.push(n);
            match n.checked_mul(self.factor) {
                Some(next) => n = next,
                None => break,
            }
        }
        out
    }
}

impl Default for NGrid {
    fn default() -> Self {
        NGrid { start: 1 << 8, stop: 1 << 14, factor: 2 }
    }
}

impl FromStr for NGrid {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let bad = || Error::Config(format!("n-grid '{s}' is not of the form start:stop:factor"));
        if parts.len() != 3 {
            return Err(bad());
        }
        let nums: Vec<u64> =
            parts.iter().map(|p| p.trim().parse::<u64>()).collect::<std::result::Result<_, _>>().map_err(|_| bad())?;
        let g = NGrid { start: nums[0], stop: nums[1], factor: nums[2] };
        if g.start == 0 || g.factor < 2 || g.stop < g.start {
            return Err(Error::Config(format!("n-grid '{s}' needs 0 < start <= stop and factor >= 2")));
        }
        Ok(g)
    }
}

impl fmt::Display for NGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.start, self.stop, self.factor)
    }
}

impl Serialize for NGrid {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for NGrid {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// Which pair of measures a rate sweep estimates the distance between.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    /// Both samples uniform; the true distance is zero.
    Null,
    /// Uniform against a density whose details sit on the Hölder boundary
    /// at every level.
    Boundary,
    /// Uniform against `ν_θ` with `θ` drawn from the moment-matched priors.
    Hard,
    /// Raw empirical measure against the known uniform distribution.
    Dudley,
}

impl FromStr for Target {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "null" => Ok(Target::Null),
            "boundary" => Ok(Target::Boundary),
            "hard" => Ok(Target::Hard),
            "dudley" => Ok(Target::Dudley),
            other => Err(Error::Config(format!("unknown target '{other}' (null, boundary, hard, dudley)"))),
        }
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Target::Null => "null",
            Target::Boundary => "boundary",
            Target::Hard => "hard",
            Target::Dudley => "dudley",
        };
        f.write_str(s)
    }
}

fn default_d() -> usize {
    1
}
fn default_reps() -> usize {
    50
}
fn default_tau() -> f64 {
    1.0
}
fn default_c() -> f64 {
    2.0
}
fn default_grid() -> usize {
    2001
}
fn default_amplitude() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateConfig {
    pub target: Target,
    #[serde(default = "default_d")]
    pub d: usize,
    pub beta: f64,
    pub gamma: f64,
    #[serde(default)]
    pub n_grid: NGrid,
    #[serde(default = "default_reps")]
    pub reps: usize,
    #[serde(default)]
    pub master_seed: u64,
    /// Prior range for the hard family.
    #[serde(default = "default_tau")]
    pub tau: f64,
    /// `K = choose_K(n, c)` for the hard family.
    #[serde(default = "default_c")]
    pub c: f64,
    #[serde(default = "default_grid")]
    pub grid_size: usize,
    /// `M` of the boundary family.
    #[serde(default = "default_amplitude")]
    pub boundary_amplitude: f64,
    /// Depth of the boundary density; defaults to `ceil(log2(n_max)/d) + 2`.
    #[serde(default)]
    pub boundary_levels: Option<u32>,
    /// Truncation of the raw empirical baseline; defaults to
    /// `floor(log2(n_max)/d) + 4`.
    #[serde(default)]
    pub baseline_levels: Option<u32>,
}

impl RateConfig {
    pub fn new(target: Target, d: usize, beta: f64, gamma: f64) -> Self {
        RateConfig {
            target,
            d,
            beta,
            gamma,
            n_grid: NGrid::default(),
            reps: default_reps(),
            master_seed: 0,
            tau: default_tau(),
            c: default_c(),
            grid_size: default_grid(),
            boundary_amplitude: default_amplitude(),
            boundary_levels: None,
            baseline_levels: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.d == 0 {
            return bad("d must be positive".into());
        }
        if !(self.beta >= 0.0) || !self.beta.is_finite() || !(self.gamma >= 0.0) || !self.gamma.is_finite() {
            return bad(format!("beta = {} and gamma = {} must be finite and nonnegative", self.beta, self.gamma));
        }
        let ns = self.n_grid.values();
        if ns.len() < 4 {
            return bad(format!("n-grid {} has {} points, need at least 4", self.n_grid, ns.len()));
        }
        if self.reps < 10 {
            return bad(format!("reps = {} is below 10", self.reps));
        }
        let n_max = *ns.last().expect("nonempty");
        let d = self.d as u32;
        match self.target {
            Target::Boundary => {
                if !(self.boundary_amplitude > 0.0) {
                    return bad("boundary amplitude must be positive".into());
                }
                let levels = self.boundary_depth(n_max);
                if levels == 0 || d * (levels + 1) > MAX_GRID_BITS {
                    return bad(format!("boundary depth {levels} is out of range for d = {d}"));
                }
            }
            Target::Hard => {
                if ns[0] < 16 {
                    return bad("the hard family needs n >= 16".into());
                }
                if !(self.tau > 0.0) || !(self.c > 0.0) {
                    return bad("tau and c must be positive".into());
                }
            }
            Target::Dudley => {
                let levels = self.baseline_depth(n_max);
                if levels == 0 || d * levels > 63 {
                    return bad(format!("baseline depth {levels} is out of range for d = {d}"));
                }
            }
            Target::Null => {}
        }
        Ok(())
    }

    fn boundary_depth(&self, n_max: u64) -> u32 {
        self.boundary_levels.unwrap_or_else(|| ((n_max as f64).log2() / self.d as f64).ceil() as u32 + 2)
    }

    /// Truncation level used by the raw empirical baseline.
    pub fn baseline_depth(&self, n_max: u64) -> u32 {
        self.baseline_levels.unwrap_or_else(|| ((n_max as f64).log2() / self.d as f64).floor() as u32 + 4)
    }

    /// `-1/d` for the Dudley family, `-(β+γ)/(2β+d)` otherwise.
    pub fn theoretical_exponent(&self) -> f64 {
        match self.target {
            Target::Dudley => -1.0 / self.d as f64,
            _ => -(self.beta + self.gamma) / (2.0 * self.beta + self.d as f64),
        }
    }
}

/// The boundary-family density: details `±M 2^{-j(β+d/2)}` on every
/// `(j, o, k)` below `levels`, sign `(-1)^{j+o+k}`.
pub fn boundary_density(d: usize, beta: f64, amplitude: f64, levels: u32) -> Result<DyadicDensity> {
    let mut c = WaveletCoeffs::zeros(d, levels)?;
    c.scaling = 1.0;
    for j in 0..levels {
        let mag = amplitude * 2f64.powf(-(j as f64) * (beta + d as f64 / 2.0));
        let cells = cell_count(d, j);
        for o in 1..=orientation_count(d) {
            for k in 0..cells {
                let sign = if (j as usize + o + k).is_multiple_of(2) { 1.0 } else { -1.0 };
                c.set_detail(j, o, k, sign * mag)?;
            }
        }
    }
    DyadicDensity::new(synthesize(&c))
}

fn uniform_points<R: Rng>(rng: &mut R, d: usize, n: usize) -> Points {
    Points::new(d, (0..n * d).map(|_| rng.gen::<f64>()).collect()).expect("unit cube")
}

/// One replicate's samples and the exact distance they estimate.
#[derive(Debug, Clone)]
pub struct Draw {
    pub x: Points,
    /// Second sample; absent for the one-sample Dudley family.
    pub y: Option<Points>,
    pub exact: f64,
}

enum Setup {
    Null,
    Boundary { cells: WeightedIndex<f64>, level: u32, exact: f64 },
    Hard { pairs: BTreeMap<u64, PriorPair> },
    Dudley { levels: u32 },
}

/// A validated configuration with its per-family precomputation.
pub struct Experiment {
    config: RateConfig,
    ns: Vec<u64>,
    setup: Setup,
    baseline_levels: u32,
}

impl Experiment {
    pub fn new(config: RateConfig) -> Result<Self> {
        config.validate()?;
        let ns = config.n_grid.values();
        let n_max = *ns.last().expect("validated");
        let setup = match config.target {
            Target::Null => Setup::Null,
            Target::Boundary => {
                let levels = config.boundary_depth(n_max);
                let rho = boundary_density(config.d, config.beta, config.boundary_amplitude, levels)
                    .map_err(|e| Error::Config(format!("boundary density: {e}")))?;
                let coeffs = analyze(&rho);
                let mut uniform = WaveletCoeffs::zeros(config.d, levels)?;
                uniform.scaling = 1.0;
                let exact = ipm_closed_form(&uniform, &coeffs, config.gamma)?;
                let cells = WeightedIndex::new(rho.values()).map_err(|e| Error::Config(e.to_string()))?;
                Setup::Boundary { cells, level: levels, exact }
            }
            Target::Hard => {
                let mut ks: Vec<usize> = ns.iter().map(|&n| choose_k(n, config.c)).collect::<Result<_>>()?;
                ks.sort_unstable();
                ks.dedup();
                let built: Vec<(usize, PriorPair)> = ks
                    .par_iter()
                    .map(|&k| Ok((k, construct_prior_pair(k, config.tau, config.grid_size)?)))
                    .collect::<Result<_>>()?;
                let by_k: BTreeMap<usize, PriorPair> = built.into_iter().collect();
                let pairs = ns.iter().map(|&n| (n, by_k[&choose_k(n, config.c).expect("checked")].clone())).collect();
                Setup::Hard { pairs }
            }
            Target::Dudley => Setup::Dudley { levels: config.baseline_depth(n_max) },
        };
        let baseline_levels = config.baseline_depth(n_max);
        Ok(Experiment { config, ns, setup, baseline_levels })
    }

    pub fn config(&self) -> &RateConfig {
        &self.config
    }

    pub fn ns(&self) -> &[u64] {
        &self.ns
    }

    /// Samples for replicate `rep` at size `n`.
    pub fn draw(&self, n: u64, rep: u64) -> Result<Draw> {
        let mut rng = seed_for(self.config.master_seed, n, rep);
        let d = self.config.d;
        let size = n as usize;
        match &self.setup {
            Setup::Null => {
                let x = uniform_points(&mut rng, d, size);
                let y = uniform_points(&mut rng, d, size);
                Ok(Draw { x, y: Some(y), exact: 0.0 })
            }
            Setup::Boundary { cells, level, exact } => {
                let x = uniform_points(&mut rng, d, size);
                let y = sample_with(cells, d, *level, size, &mut rng);
                Ok(Draw { x, y: Some(y), exact: *exact })
            }
            Setup::Hard { pairs } => {
                let pair = pairs.get(&n).ok_or_else(|| Error::Config(format!("n = {n} is not on the grid")))?;
                let prior = if rep.is_multiple_of(2) { &pair.q0 } else { &pair.q1 };
                let h = HardInstance::from_prior(prior, d, self.config.beta, self.config.gamma, n, &mut rng)?;
                let rho = build_density(&h)?;
                let cells = WeightedIndex::new(rho.values()).map_err(|e| Error::Experiment(e.to_string()))?;
                let x = uniform_points(&mut rng, d, size);
                let y = sample_with(&cells, d, rho.level(), size, &mut rng);
                Ok(Draw { x, y: Some(y), exact: true_ipm(&h) })
            }
            Setup::Dudley { .. } => Ok(Draw { x: uniform_points(&mut rng, d, size), y: None, exact: 0.0 }),
        }
    }

    /// The family's estimator on a draw: plug-in, or the raw empirical
    /// measure for the Dudley family.
    pub fn estimate(&self, draw: &Draw) -> Result<f64> {
        let c = &self.config;
        match (&self.setup, &draw.y) {
            (Setup::Dudley { levels }, _) => empirical_measure_ipm_to_uniform(&draw.x, c.gamma, *levels),
            (_, Some(y)) => plugin_ipm(&draw.x, y, c.beta, c.gamma, c.d),
            (_, None) => Err(Error::Experiment("two-sample family without a second sample".into())),
        }
    }

    /// The raw empirical-measure estimate on the same draw.
    pub fn baseline_estimate(&self, draw: &Draw) -> Result<f64> {
        match &draw.y {
            Some(y) => empirical_measure_ipm(&draw.x, y, self.config.gamma, self.config.d, self.baseline_levels),
            None => empirical_measure_ipm_to_uniform(&draw.x, self.config.gamma, self.baseline_levels),
        }
    }

    /// `|estimate - exact|` for one replicate.
    pub fn error(&self, n: u64, rep: u64) -> Result<f64> {
        let draw = self.draw(n, rep)?;
        Ok((self.estimate(&draw)? - draw.exact).abs())
    }

    /// Runs `f` on every `(n, replicate)` in parallel and returns the
    /// values grouped by `n`, replicates in order.
    pub fn map_replicates<F>(&self, f: F) -> Result<Vec<(u64, Vec<f64>)>>
    where
        F: Fn(u64, u64) -> Result<f64> + Sync,
    {
        let keys: Vec<(u64, u64)> =
            self.ns.iter().flat_map(|&n| (0..self.config.reps as u64).map(move |r| (n, r))).collect();
        let mut results: Vec<((u64, u64), Result<f64>)> = keys.par_iter().map(|&(n, r)| ((n, r), f(n, r))).collect();
        results.sort_by_key(|(k, _)| *k);
        let mut grouped: Vec<(u64, Vec<f64>)> = Vec::with_capacity(self.ns.len());
        for ((n, r), res) in results {
            let v = res.map_err(|e| Error::Experiment(format!("n = {n}, replicate {r}: {e}")))?;
            match grouped.last_mut() {
                Some((m, vals)) if *m == n => vals.push(v),
                _ => grouped.push((n, vec![v])),
            }
        }
        Ok(grouped)
    }

    pub fn run(&self) -> Result<RateReport> {
        let grouped = self.map_replicates(|n, r| self.error(n, r))?;
        RateReport::from_errors(self.config.clone(), &grouped)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub n: u64,
    pub mean_error: f64,
    pub stderr: f64,
    pub reps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
}

/// Ordinary least squares of `ln(error)` on `ln(n)`.
pub fn fit_slope(points: &[(f64, f64)]) -> Result<SlopeFit> {
    if points.len() < 3 {
        return Err(Error::Domain(format!("slope fit needs at least 3 points, got {}", points.len())));
    }
    if let Some(&(n, e)) = points.iter().find(|(n, e)| !(*n > 0.0) || !(*e > 0.0)) {
        return Err(Error::Domain(format!(
            "slope fit needs positive values, got ({n}, {e}); exact-zero errors suggest a degenerate family"
        )));
    }
    let m = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let slope_stderr = if points.len() > 2 { (ssr / (m - 2.0) / sxx).sqrt() } else { 0.0 };
    Ok(SlopeFit { slope, intercept, slope_stderr })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub config: RateConfig,
    pub rows: Vec<RateRow>,
    pub fit: SlopeFit,
    pub theoretical_exponent: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeSummary {
    pub slope: f64,
    pub slope_stderr: f64,
    pub theoretical_exponent: f64,
}

impl RateReport {
    pub fn from_errors(config: RateConfig, grouped: &[(u64, Vec<f64>)]) -> Result<Self> {
        let mut rows: Vec<RateRow> = grouped
            .iter()
            .map(|(n, errs)| {
                let r = errs.len() as f64;
                let mean = errs.iter().sum::<f64>() / r;
                let var =
                    if errs.len() > 1 { errs.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (r - 1.0) } else { 0.0 };
                RateRow { n: *n, mean_error: mean, stderr: (var / r).sqrt(), reps: errs.len() }
            })
            .collect();
        rows.sort_by_key(|r| r.n);
        let fit = fit_slope(&rows.iter().map(|r| (r.n as f64, r.mean_error)).collect::<Vec<_>>())?;
        Ok(RateReport { theoretical_exponent: config.theoretical_exponent(), config, rows, fit })
    }

    pub fn summary(&self) -> SlopeSummary {
        SlopeSummary {
            slope: self.fit.slope,
            slope_stderr: self.fit.slope_stderr,
            theoretical_exponent: self.theoretical_exponent,
        }
    }

    /// CSV with header `n,mean_error,stderr,reps`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Runs the sweep described by `config`.
pub fn rate_sweep(config: RateConfig) -> Result<RateReport> {
    Experiment::new(config)?.run()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertificateConfig {
    #[serde(default)]
    pub n_grid: NGrid,
    pub beta: f64,
    pub gamma: f64,
    #[serde(default = "default_d")]
    pub d: usize,
    #[serde(default = "default_c")]
    pub c: f64,
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default = "default_grid")]
    pub grid_size: usize,
}

impl CertificateConfig {
    pub fn new(beta: f64, gamma: f64, d: usize) -> Self {
        CertificateConfig {
            n_grid: NGrid::default(),
            beta,
            gamma,
            d,
            c: default_c(),
            tau: default_tau(),
            grid_size: default_grid(),
        }
    }
}

/// Certificates for every `n` of the grid, sorted by `n`; prior pairs are
/// built once per distinct `K`.
pub fn certificate_sweep(config: &CertificateConfig) -> Result<Vec<LowerBoundCertificate>> {
    certificates_for(&config.n_grid.values(), config)
}

/// Like [`certificate_sweep`] for an explicit list of sample sizes.
pub fn certificates_for(ns: &[u64], config: &CertificateConfig) -> Result<Vec<LowerBoundCertificate>> {
    if ns.iter().any(|&n| n < 16) {
        return Err(Error::Config("certificates need n >= 16".into()));
    }
    let mut ks: Vec<usize> = ns.iter().map(|&n| choose_k(n, config.c)).collect::<Result<_>>()?;
    ks.sort_unstable();
    ks.dedup();
    let pairs: BTreeMap<usize, PriorPair> = ks
        .par_iter()
        .map(|&k| Ok((k, construct_prior_pair(k, config.tau, config.grid_size)?)))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .collect();
    let mut certs: Vec<LowerBoundCertificate> = ns
        .par_iter()
        .map(|&n| {
            let pair = &pairs[&choose_k(n, config.c)?];
            certificate_for_pair(
                pair,
                n,
                config.beta,
                config.gamma,
                config.d,
                choose_truncation(n, config.beta, config.d),
            )
        })
        .collect::<Result<_>>()?;
    certs.sort_by_key(|c| c.n);
    Ok(certs)
}

/// CSV with header `n,separation,tv_bound,delta,value,normalized_ratio`,
/// where `delta = (delta0 + delta1)/2`.
pub fn write_certificate_csv<W: Write>(certs: &[LowerBoundCertificate], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["n", "separation", "tv_bound", "delta", "value", "normalized_ratio"])?;
    for c in certs {
        w.write_record([
            c.n.to_string(),
            c.separation.to_string(),
            c.tv_bound.to_string(),
            ((c.delta0 + c.delta1) / 2.0).to_string(),
            c.value.to_string(),
            c.normalized_ratio().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `tv_upper_bound` at fixed `n` and `J = choose_truncation(n, β, d)` for
/// each `K` in `ks`.
pub fn tv_by_k(n: u64, ks: &[usize], config: &CertificateConfig) -> Result<Vec<(usize, f64)>> {
    let j = choose_truncation(n, config.beta, config.d);
    ks.par_iter()
        .map(|&k| {
            let pair = construct_prior_pair(k, config.tau, config.grid_size)?;
            Ok((k, tv_upper_bound(&pair, j, config.d, n)?.bound))
        })
        .collect()
}

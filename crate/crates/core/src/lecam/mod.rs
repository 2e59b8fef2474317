//! Finite-`n` evaluation of the two-prior lower-bound chain: the `ℓ2`
//! cross terms of the mixtures, the total-variation bound, the IPM
//! separation, the concentration slack and the resulting risk certificate.

mod dd;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::estimator::choose_truncation;
use crate::moment_priors::{choose_k, construct_prior_pair, moment, DiscretePrior, PriorPair};
use dd::Dd;

/// `l2_distance_sq` values in `[-L2_CLAMP, 0)` are rounding noise.
pub const L2_CLAMP: f64 = 1e-12;

fn cross_dd(pa: &DiscretePrior, pb: &DiscretePrior, n: u64) -> Result<Dd> {
    if n == 0 {
        return domain("n must be positive");
    }
    let nf = n as f64;
    let mut total = Dd::ZERO;
    for (&s, &w) in pa.support().iter().zip(pa.weights()) {
        for (&t, &v) in pb.support().iter().zip(pb.weights()) {
            let base = Dd::ONE + Dd::prod(s, t).div_f64(nf);
            if base.hi <= 0.0 {
                return domain(format!("1 + ({s})({t})/{n} is not positive"));
            }
            total = total + Dd::prod(w, v) * base.powi(n);
        }
    }
    Ok(total)
}

/// `Σ_{i,j} w_i w'_j (1 + s_i s'_j / n)^n`, evaluated in double-double
/// precision by repeated squaring.
pub fn l2_cross(pa: &DiscretePrior, pb: &DiscretePrior, n: u64) -> Result<f64> {
    Ok(cross_dd(pa, pb, n)?.to_f64())
}

fn check_tau(pair: &PriorPair, n: u64) -> Result<()> {
    let tau = pair.tau();
    if !(tau * tau < n as f64) {
        return domain(format!("tau^2 = {} must be below n = {n}", tau * tau));
    }
    Ok(())
}

/// `χ²`-type distance between the one-coordinate mixtures,
/// `c(q1,q1) + c(q0,q0) - 2 c(q1,q0)` with `c = l2_cross`.
pub fn l2_distance_sq(pair: &PriorPair, n: u64) -> Result<f64> {
    check_tau(pair, n)?;
    let v = (cross_dd(&pair.q1, &pair.q1, n)? + cross_dd(&pair.q0, &pair.q0, n)?
        - cross_dd(&pair.q1, &pair.q0, n)? * Dd::from_f64(2.0))
    .to_f64();
    if v >= 0.0 {
        Ok(v)
    } else if v >= -L2_CLAMP {
        Ok(0.0)
    } else {
        Err(Error::Domain(format!("l2 distance evaluated to {v:e} < 0")))
    }
}

/// Terms `(m1(2l) - m0(2l))^2 C(n,2l) / n^{2l}` for `l = 1..=⌊n/2⌋`.
pub fn l2_series_terms(pair: &PriorPair, n: u64) -> Vec<f64> {
    let nf = n as f64;
    let mut log_ratio = 0.0;
    let mut out = Vec::with_capacity((n / 2) as usize);
    for l in 1..=n / 2 {
        let top = 2 * l;
        log_ratio +=
            ((nf - top as f64 + 2.0) * (nf - top as f64 + 1.0) / ((top as f64 - 1.0) * top as f64 * nf * nf)).ln();
        let dm = moment(&pair.q1, top as u32) - moment(&pair.q0, top as u32);
        out.push(if dm == 0.0 { 0.0 } else { (2.0 * dm.abs().ln() + log_ratio).exp() });
    }
    out
}

/// Moment-series form of [`l2_distance_sq`].
pub fn l2_series(pair: &PriorPair, n: u64) -> f64 {
    crate::moment_priors::neumaier_sum(l2_series_terms(pair, n))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TvBound {
    pub l2_sq: f64,
    /// `½ 2^{dJ} sqrt(l2_sq)`.
    pub bound: f64,
    /// `2^{dJ} τ^{2K} / sqrt((2K)!) · e^{τ⁴/2}`.
    pub envelope: f64,
}

/// Upper bound on `TV(p0, p1)` for the `2^{dJ}`-coordinate product mixtures.
pub fn tv_upper_bound(pair: &PriorPair, j: u32, d: usize, n: u64) -> Result<TvBound> {
    let l2_sq = l2_distance_sq(pair, n)?;
    let coords = 2f64.powi((d as u32 * j) as i32);
    let tau = pair.tau();
    let two_k = 2 * pair.k;
    let ln_fact: f64 = (2..=two_k).map(|i| (i as f64).ln()).sum();
    let envelope = coords * (two_k as f64 * tau.ln() - 0.5 * ln_fact + tau.powi(4) / 2.0).exp();
    Ok(TvBound { l2_sq, bound: 0.5 * coords * l2_sq.sqrt(), envelope })
}

/// `n^{-(β+γ)/(2β+d)}`, the scale of the separation and the slack.
pub fn rate_scale(n: u64, beta: f64, gamma: f64, d: usize) -> f64 {
    (n as f64).powf(-(beta + gamma) / (2.0 * beta + d as f64))
}

/// `n^{-(β+γ)/(2β+d)} · gap`.
pub fn separation(pair: &PriorPair, n: u64, beta: f64, gamma: f64, d: usize) -> f64 {
    rate_scale(n, beta, gamma, d) * pair.gap
}

/// `scale · sd(|θ|) / sqrt(2^{dJ})`, bounding `E|mean_k |θ_k| - E|θ||`.
pub fn concentration_delta(p: &DiscretePrior, j: u32, d: usize, scale: f64) -> f64 {
    scale * p.abs_sd() / 2f64.powf((d as u32 * j) as f64 / 2.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LowerBoundCertificate {
    pub n: u64,
    pub d: usize,
    pub beta: f64,
    pub gamma: f64,
    #[serde(rename = "J")]
    pub j: u32,
    #[serde(rename = "K")]
    pub k: usize,
    pub tau: f64,
    pub gap: f64,
    pub separation: f64,
    pub l2_sq: f64,
    pub tv_bound: f64,
    pub tv_envelope: f64,
    pub delta0: f64,
    pub delta1: f64,
    pub value: f64,
    /// `value > 0`.
    pub informative: bool,
}

impl LowerBoundCertificate {
    /// `value / (n^{-(β+γ)/(2β+d)} · ln ln n / ln n)`.
    pub fn normalized_ratio(&self) -> f64 {
        let ln = (self.n as f64).ln();
        self.value / (rate_scale(self.n, self.beta, self.gamma, self.d) * ln.ln() / ln)
    }
}

/// Certificate for a given prior pair and truncation level.
pub fn certificate_for_pair(
    pair: &PriorPair,
    n: u64,
    beta: f64,
    gamma: f64,
    d: usize,
    j: u32,
) -> Result<LowerBoundCertificate> {
    let tv = tv_upper_bound(pair, j, d, n)?;
    let scale = rate_scale(n, beta, gamma, d);
    let sep = separation(pair, n, beta, gamma, d);
    let delta0 = concentration_delta(&pair.q0, j, d, scale);
    let delta1 = concentration_delta(&pair.q1, j, d, scale);
    let value = sep / 4.0 * (1.0 - tv.bound.min(1.0)) - (delta0 + delta1) / 2.0;
    Ok(LowerBoundCertificate {
        n,
        d,
        beta,
        gamma,
        j,
        k: pair.k,
        tau: pair.tau(),
        gap: pair.gap,
        separation: sep,
        l2_sq: tv.l2_sq,
        tv_bound: tv.bound,
        tv_envelope: tv.envelope,
        delta0,
        delta1,
        value,
        informative: value > 0.0,
    })
}

/// Composes `K = choose_K(n, c)`, the prior pair, `J = choose_truncation`
/// and the chain above.
pub fn lower_bound_certificate(
    n: u64,
    beta: f64,
    gamma: f64,
    d: usize,
    c: f64,
    tau: f64,
    grid_size: usize,
) -> Result<LowerBoundCertificate> {
    if n < 16 {
        return domain(format!("certificate needs n >= 16, got {n}"));
    }
    let k = choose_k(n, c)?;
    let pair = construct_prior_pair(k, tau, grid_size)?;
    certificate_for_pair(&pair, n, beta, gamma, d, choose_truncation(n, beta, d))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TelescopingCheck {
    pub holds: bool,
    /// `|Π a - Π b|`.
    pub lhs: f64,
    /// `Σ_i |a_i - b_i| Π_{k<i} b_k Π_{k>i} a_k`.
    pub rhs: f64,
}

/// Checks `|Π a - Π b| ≤ Σ_i |a_i - b_i| Π_{k<i} b_k Π_{k>i} a_k`.
pub fn telescoping_check(a: &[f64], b: &[f64]) -> Result<TelescopingCheck> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::Shape(format!("need two sequences of equal length >= 2, got {} and {}", a.len(), b.len())));
    }
    if a.iter().chain(b).any(|v| !(*v >= 0.0)) {
        return domain("sequences must be nonnegative");
    }
    let len = a.len();
    let mut suffix_a = vec![1.0; len + 1];
    for i in (0..len).rev() {
        suffix_a[i] = suffix_a[i + 1] * a[i];
    }
    let mut prefix_b = 1.0;
    let mut rhs = 0.0;
    for i in 0..len {
        rhs += (a[i] - b[i]).abs() * prefix_b * suffix_a[i + 1];
        prefix_b *= b[i];
    }
    let lhs = (suffix_a[0] - prefix_b).abs();
    Ok(TelescopingCheck { holds: lhs <= rhs * (1.0 + 1e-10) + f64::MIN_POSITIVE, lhs, rhs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moment_priors::mean_abs;
    use num_bigint::BigInt;
    use num_rational::BigRational;
    use num_traits::{FromPrimitive, One, ToPrimitive, Zero};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pair_of(q0: DiscretePrior, q1: DiscretePrior, k: usize) -> PriorPair {
        let gap = mean_abs(&q1) - mean_abs(&q0);
        PriorPair { kappa: gap * k as f64 / (2.0 * q0.tau()), q0, q1, k, gap }
    }

    #[test]
    fn cross_examples() {
        let zero = DiscretePrior::dirac_zero(1.0).unwrap();
        assert_eq!(l2_cross(&zero, &zero, 50).unwrap(), 1.0);
        let a = DiscretePrior::general(1.0, vec![0.7], vec![1.0]).unwrap();
        let b = DiscretePrior::general(1.0, vec![-0.4], vec![1.0]).unwrap();
        let want = (1.0f64 - 0.28 / 9.0).powi(9);
        assert!((l2_cross(&a, &b, 9).unwrap() - want).abs() < 1e-15);
        let pm = DiscretePrior::two_point(1.0, 1.0).unwrap();
        assert!((l2_cross(&pm, &pm, 2).unwrap() - 1.25).abs() < 1e-15);
        let far = DiscretePrior::general(3.0, vec![-3.0], vec![1.0]).unwrap();
        let near = DiscretePrior::general(3.0, vec![3.0], vec![1.0]).unwrap();
        assert!(l2_cross(&far, &near, 4).is_err());
    }

    #[test]
    fn two_point_series_matches_direct() {
        let pair = pair_of(DiscretePrior::dirac_zero(1.0).unwrap(), DiscretePrior::two_point(1.0, 1.0).unwrap(), 0);
        // n = 2: the only series term is m(2)^2 C(2,2)/4 = 1/4.
        assert!((l2_distance_sq(&pair, 2).unwrap() - 0.25).abs() < 1e-15);
        assert!((l2_series(&pair, 2) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn identical_priors_are_at_zero_distance() {
        let p = construct_prior_pair(2, 1.0, 101).unwrap();
        let same = pair_of(p.q1.clone(), p.q1.clone(), 2);
        assert_eq!(l2_distance_sq(&same, 100).unwrap(), 0.0);
        assert_eq!(tv_upper_bound(&same, 3, 1, 100).unwrap().bound, 0.0);
    }

    fn exact_series(pair: &PriorPair, n: u64) -> f64 {
        let rat = |x: f64| BigRational::from_f64(x).unwrap();
        let moment_exact = |p: &DiscretePrior, l: u32| {
            p.support()
                .iter()
                .zip(p.weights())
                .fold(BigRational::zero(), |acc, (&s, &w)| acc + rat(w) * num_traits::pow(rat(s), l as usize))
        };
        let nn = BigRational::from_integer(BigInt::from(n));
        let mut binom = BigRational::one();
        let mut total = BigRational::zero();
        for i in 1..=n {
            binom =
                binom * BigRational::from_integer(BigInt::from(n - i + 1)) / BigRational::from_integer(BigInt::from(i));
            if i % 2 == 0 {
                let dm = moment_exact(&pair.q1, i as u32) - moment_exact(&pair.q0, i as u32);
                total += &dm * &dm * &binom / num_traits::pow(nn.clone(), i as usize);
            }
        }
        total.to_f64().unwrap()
    }

    #[test]
    fn exact_rational_oracle_k2() {
        let pair = construct_prior_pair(2, 1.0, 2001).unwrap();
        let oracle = exact_series(&pair, 100);
        let direct = l2_distance_sq(&pair, 100).unwrap();
        let series = l2_series(&pair, 100);
        assert!((direct - oracle).abs() <= 1e-10 * oracle, "{direct} vs {oracle}");
        assert!((series - oracle).abs() <= 1e-10 * oracle, "{series} vs {oracle}");
        // Frozen from the exact oracle.
        assert!((oracle - L2_K2_TAU1_N100).abs() <= 1e-9 * L2_K2_TAU1_N100, "{oracle:e}");
    }

    const L2_K2_TAU1_N100: f64 = 1.5306098715662927e-6;

    #[test]
    fn direct_and_series_agree() {
        for k in [1, 2, 4] {
            let pair = construct_prior_pair(k, 1.0, 2001).unwrap();
            for n in [10u64, 100, 1000] {
                let direct = l2_distance_sq(&pair, n).unwrap();
                let series = l2_series(&pair, n);
                assert!((direct - series).abs() <= 1e-8 * series, "K={k} n={n}: {direct} vs {series}");
                for (l, t) in l2_series_terms(&pair, n).iter().enumerate().take(k) {
                    assert!(*t <= 1e-18, "term {} = {t}", l + 1);
                }
            }
        }
    }

    #[test]
    fn tv_bound_under_envelope() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..20 {
            let k = rng.gen_range(1..=6);
            let tau = rng.gen_range(0.2..=1.0);
            let n = rng.gen_range(16..5000u64);
            let pair = construct_prior_pair(k, tau, 401).unwrap();
            let tv = tv_upper_bound(&pair, rng.gen_range(0..6), rng.gen_range(1..=3), n).unwrap();
            assert!(tv.bound <= tv.envelope, "K={k} tau={tau} n={n}: {tv:?}");
        }
    }

    #[test]
    fn separation_examples() {
        let pair = construct_prior_pair(2, 1.0, 201).unwrap();
        assert_eq!(separation(&pair, 1000, 0.0, 0.0, 1), pair.gap);
        assert!((separation(&pair, 4096, 1.0, 0.5, 1) - pair.gap / 64.0).abs() < 1e-15);
        let zero = pair_of(pair.q0.clone(), pair.q0.clone(), 2);
        assert_eq!(separation(&zero, 4096, 1.0, 0.5, 1), 0.0);
    }

    #[test]
    fn concentration_examples() {
        assert_eq!(concentration_delta(&DiscretePrior::dirac_zero(1.0).unwrap(), 3, 1, 1.0), 0.0);
        assert_eq!(concentration_delta(&DiscretePrior::two_point(1.0, 1.0).unwrap(), 3, 1, 1.0), 0.0);

        let pair = construct_prior_pair(3, 1.0, 401).unwrap();
        let (j, d) = (4u32, 1usize);
        let bound = concentration_delta(&pair.q1, j, d, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let count = 1usize << j;
        let mu = mean_abs(&pair.q1);
        let draws = 10_000;
        let mad: f64 = (0..draws)
            .map(|_| {
                let th = crate::hard_instances::draw_theta(&pair.q1, count, &mut rng);
                (th.iter().map(|t| t.abs()).sum::<f64>() / count as f64 - mu).abs()
            })
            .sum::<f64>()
            / draws as f64;
        assert!(mad <= bound, "{mad} > {bound}");
    }

    const CERT_N4096: f64 = -6.97100111017901e-4;

    #[test]
    fn certificate_structure() {
        let cert = lower_bound_certificate(4096, 1.0, 0.5, 1, 2.0, 1.0, 2001).unwrap();
        let (sep, d0, d1) = (cert.separation, cert.delta0, cert.delta1);
        assert!((cert.value - (sep / 4.0 * (1.0 - cert.tv_bound.min(1.0)) - (d0 + d1) / 2.0)).abs() < 1e-15);
        assert!(cert.value <= sep / 4.0);
        assert!(sep >= 0.0 && cert.tv_bound >= 0.0 && d0 >= 0.0 && d1 >= 0.0);
        assert_eq!(cert.informative, cert.value > 0.0);
        assert_eq!((cert.j, cert.k), (4, 4));
        // Regression value; the concentration slack outweighs separation/4 here.
        assert!((cert.value - CERT_N4096).abs() <= 1e-12, "{:e}", cert.value);
        assert!(!cert.informative);
        let json = serde_json::to_value(&cert).unwrap();
        for key in ["n", "J", "K", "separation", "tv_bound", "delta0", "delta1", "value", "informative"] {
            assert!(json.get(key).is_some(), "missing {key}");
        }
        assert!(lower_bound_certificate(15, 1.0, 0.5, 1, 2.0, 1.0, 2001).is_err());
    }

    #[test]
    fn degenerate_pair_is_flagged() {
        let p = DiscretePrior::two_point(1.0, 0.5).unwrap();
        let pair = pair_of(p.clone(), p, 40);
        let cert = certificate_for_pair(&pair, 4096, 1.0, 0.5, 1, 4).unwrap();
        assert!(cert.value <= 0.0);
        assert!(!cert.informative);
    }

    #[test]
    fn telescoping_examples() {
        let same = telescoping_check(&[0.3, 2.0, 1.5], &[0.3, 2.0, 1.5]).unwrap();
        assert!(same.holds && same.lhs == 0.0 && same.rhs == 0.0);
        let t = telescoping_check(&[2.0, 1.0], &[1.0, 1.0]).unwrap();
        assert!(t.holds && t.lhs == 1.0 && t.rhs == 1.0);
        assert!(telescoping_check(&[1.0], &[1.0]).is_err());
        assert!(telescoping_check(&[1.0, 2.0], &[1.0]).is_err());
        assert!(telescoping_check(&[1.0, -2.0], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn telescoping_always_holds() {
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        for _ in 0..10_000 {
            let len = rng.gen_range(2..=16);
            let a: Vec<f64> = (0..len).map(|_| rng.gen_range(0.0..2.0)).collect();
            let b: Vec<f64> = (0..len).map(|_| rng.gen_range(0.0..2.0)).collect();
            assert!(telescoping_check(&a, &b).unwrap().holds);
        }
    }
}

//! Gaussian and mixture densities, log-domain arithmetic, and the two
//! closed-form identities most compensation rules reduce to:
//!
//! * convolution: `∫ N(x; μ, C) N(y; x + m_b, C_b) dx = N(y; μ + m_b, C + C_b)`
//! * product: `N(x; μ₁, C₁) N(x; μ₂, C₂) = N(μ₁; μ₂, C₁ + C₂) · N(x; μ*, C*)`

use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;
use core::ops::Add;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::linalg::{check_dim, Cholesky, Covariance, Matrix};

/// Lower bound applied to every variance (or eigenvalue) of a [`Gaussian`].
pub const VARIANCE_FLOOR: f64 = 1e-8;

pub(crate) const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// A log-probability or log-density in nats. Never NaN; `-inf` is legal.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize), serde(transparent))]
pub struct LogProb(f64);

impl LogProb {
    pub const ZERO: LogProb = LogProb(0.0);
    pub const NEG_INFINITY: LogProb = LogProb(f64::NEG_INFINITY);

    pub fn new(value: f64) -> Result<Self> {
        if value.is_nan() {
            Err(Error::Numeric("NaN log-probability"))
        } else {
            Ok(LogProb(value))
        }
    }

    pub fn from_prob(p: f64) -> Result<Self> {
        if !(p >= 0.0) {
            return Err(Error::InvalidProbability(alloc::format!("{p}")));
        }
        Ok(LogProb(p.ln()))
    }

    #[inline]
    pub fn get(self) -> f64 {
        self.0
    }

    pub fn is_neg_infinite(self) -> bool {
        self.0 == f64::NEG_INFINITY
    }
}

impl Eq for LogProb {}

impl Ord for LogProb {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

impl Add for LogProb {
    type Output = LogProb;

    fn add(self, rhs: LogProb) -> LogProb {
        LogProb(self.0 + rhs.0)
    }
}

impl From<LogProb> for f64 {
    fn from(v: LogProb) -> f64 {
        v.0
    }
}

impl fmt::Display for LogProb {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(&self.0, f)
    }
}

/// `log Σ exp(vᵢ)` over raw floats. Returns `-inf` for empty or all-`-inf` input.
pub(crate) fn lse(values: &[f64]) -> f64 {
    let mut max = f64::NEG_INFINITY;
    let mut arg = usize::MAX;
    for (i, &v) in values.iter().enumerate() {
        if v > max {
            max = v;
            arg = i;
        }
    }
    if arg == usize::MAX || max == f64::INFINITY {
        return max;
    }
    let rest: f64 = values
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != arg)
        .map(|(_, &v)| (v - max).exp())
        .sum();
    max + rest.ln_1p()
}

/// `log(exp(a) + exp(b))`.
#[inline]
pub fn log_add(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if hi == f64::NEG_INFINITY || hi == f64::INFINITY {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

/// Overflow-safe `log Σ exp(vᵢ)`.
pub fn log_sum_exp(values: &[LogProb]) -> Result<LogProb> {
    if values.is_empty() {
        return Err(Error::Empty("log_sum_exp input"));
    }
    let raw: Vec<f64> = values.iter().map(|v| v.0).collect();
    LogProb::new(lse(&raw))
}

/// Diagonal or full covariance marker.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CovarianceKind {
    Diagonal,
    Full,
}

/// Multivariate normal density with floored covariance and a cached factorization.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(try_from = "GaussianRepr", into = "GaussianRepr")
)]
pub struct Gaussian {
    mean: Vec<f64>,
    cov: Covariance,
    log_norm: f64,
    chol: Option<Cholesky>,
}

#[cfg(feature = "serde")]
#[derive(serde::Serialize, serde::Deserialize)]
struct GaussianRepr {
    mean: Vec<f64>,
    covariance: Covariance,
}

#[cfg(feature = "serde")]
impl TryFrom<GaussianRepr> for Gaussian {
    type Error = Error;

    fn try_from(r: GaussianRepr) -> Result<Self> {
        Gaussian::new(r.mean, r.covariance)
    }
}

#[cfg(feature = "serde")]
impl From<Gaussian> for GaussianRepr {
    fn from(g: Gaussian) -> Self {
        GaussianRepr { mean: g.mean, covariance: g.cov }
    }
}

impl Gaussian {
    /// Builds a density, flooring the covariance at [`VARIANCE_FLOOR`].
    pub fn new(mean: Vec<f64>, cov: Covariance) -> Result<Self> {
        check_dim(mean.len(), cov.dim())?;
        if mean.is_empty() {
            return Err(Error::Empty("Gaussian mean"));
        }
        if mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::InvalidParameter("non-finite Gaussian mean".into()));
        }
        let cov = cov.floored(VARIANCE_FLOOR)?;
        let d = mean.len() as f64;
        let (log_det, chol) = match &cov {
            Covariance::Diagonal(v) => (v.iter().map(|c| c.ln()).sum::<f64>(), None),
            Covariance::Full(m) => {
                let c = m.cholesky()?;
                (c.log_det(), Some(c))
            }
        };
        let log_norm = -0.5 * (d * LN_2PI + log_det);
        Ok(Self { mean, cov, log_norm, chol })
    }

    pub fn diagonal(mean: Vec<f64>, variances: Vec<f64>) -> Result<Self> {
        Self::new(mean, Covariance::Diagonal(variances))
    }

    pub fn standard(dim: usize) -> Self {
        Self::diagonal(alloc::vec![0.0; dim], alloc::vec![1.0; dim]).expect("unit Gaussian")
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn cov(&self) -> &Covariance {
        &self.cov
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn kind(&self) -> CovarianceKind {
        if self.cov.is_diagonal() {
            CovarianceKind::Diagonal
        } else {
            CovarianceKind::Full
        }
    }

    /// Log-density at the mean.
    pub fn log_peak(&self) -> f64 {
        self.log_norm
    }

    /// Squared Mahalanobis distance of `x` from the mean.
    pub fn mahalanobis(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        Ok(match (&self.cov, &self.chol) {
            (Covariance::Diagonal(v), _) => {
                x.iter().zip(&self.mean).zip(v).map(|((xi, mi), ci)| (xi - mi) * (xi - mi) / ci).sum()
            }
            (Covariance::Full(_), Some(c)) => {
                let diff: Vec<f64> = x.iter().zip(&self.mean).map(|(a, b)| a - b).collect();
                c.quad_form(&diff)
            }
            (Covariance::Full(_), None) => unreachable!("full covariance is always factored"),
        })
    }

    pub fn logpdf(&self, x: &[f64]) -> Result<LogProb> {
        let m = self.mahalanobis(x)?;
        LogProb::new(self.log_norm - 0.5 * m)
    }

    /// Per-dimension marginal (diagonal view).
    pub fn marginal(&self, dim: usize) -> (f64, f64) {
        let var = match &self.cov {
            Covariance::Diagonal(v) => v[dim],
            Covariance::Full(m) => m.get(dim, dim),
        };
        (self.mean[dim], var)
    }
}

/// `log N(x; g)`.
pub fn gaussian_logpdf(x: &[f64], g: &Gaussian) -> Result<LogProb> {
    g.logpdf(x)
}

/// Density of `y = x + b` with `x ~ g`, `b ~ N(mean_b, cov_b)`.
pub fn gaussian_convolve(g: &Gaussian, cov_b: &Covariance, mean_b: &[f64]) -> Result<Gaussian> {
    check_dim(g.dim(), cov_b.dim())?;
    check_dim(g.dim(), mean_b.len())?;
    cov_b.validate_psd()?;
    let mean = g.mean.iter().zip(mean_b).map(|(a, b)| a + b).collect();
    Gaussian::new(mean, g.cov.add(cov_b)?)
}

/// Moments of the normalized product of two Gaussian factors given as raw
/// (possibly zero-covariance) moments. Returns `(μ*, C*)`.
pub(crate) fn product_moments(
    m1: &[f64],
    c1: &Covariance,
    m2: &[f64],
    c2: &Covariance,
) -> Result<(Vec<f64>, Covariance)> {
    let d = m1.len();
    check_dim(d, m2.len())?;
    check_dim(d, c1.dim())?;
    check_dim(d, c2.dim())?;
    match (c1, c2) {
        (Covariance::Diagonal(a), Covariance::Diagonal(b)) => {
            let mut mean = Vec::with_capacity(d);
            let mut cov = Vec::with_capacity(d);
            for i in 0..d {
                let s = a[i] + b[i];
                if !(s > 0.0) {
                    return Err(Error::SingularPrecision);
                }
                mean.push((b[i] * m1[i] + a[i] * m2[i]) / s);
                cov.push(a[i] * b[i] / s);
            }
            Ok((mean, Covariance::Diagonal(cov)))
        }
        _ => {
            let a = c1.to_matrix();
            let s = a.add(&c2.to_matrix())?;
            let chol = s.cholesky().map_err(|_| Error::SingularPrecision)?;
            let diff: Vec<f64> = m2.iter().zip(m1).map(|(x, y)| x - y).collect();
            let w = chol.solve(&diff);
            let shift = a.mul_vec(&w)?;
            let mean = m1.iter().zip(&shift).map(|(x, y)| x + y).collect();
            // C* = C1 - C1 S⁻¹ C1
            let sinv = chol.inverse();
            let reduction = a.mul(&sinv)?.mul(&a)?;
            let cov = a.sub(&reduction)?.symmetrized();
            Ok((mean, Covariance::Full(cov)))
        }
    }
}

/// `N(x; g1) N(x; g2) = exp(log_scale) N(x; μ*, C*)` with
/// `log_scale = log N(μ₁; μ₂, C₁ + C₂)`.
pub fn gaussian_product(g1: &Gaussian, g2: &Gaussian) -> Result<(LogProb, Gaussian)> {
    check_dim(g1.dim(), g2.dim())?;
    let joint = Gaussian::new(g2.mean.clone(), g1.cov.add(&g2.cov)?).map_err(|_| Error::SingularPrecision)?;
    let log_scale = joint.logpdf(&g1.mean)?;
    let (mean, cov) = product_moments(&g1.mean, &g1.cov, &g2.mean, &g2.cov)?;
    Ok((log_scale, Gaussian::new(mean, cov)?))
}

/// Finite mixture of Gaussians sharing dimension and covariance kind.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(try_from = "GmmRepr", into = "GmmRepr")
)]
pub struct Gmm {
    weights: Vec<f64>,
    components: Vec<Gaussian>,
}

#[cfg(feature = "serde")]
#[derive(serde::Serialize, serde::Deserialize)]
struct GmmRepr {
    weights: Vec<f64>,
    components: Vec<Gaussian>,
}

#[cfg(feature = "serde")]
impl TryFrom<GmmRepr> for Gmm {
    type Error = Error;

    fn try_from(r: GmmRepr) -> Result<Self> {
        Gmm::new(r.weights, r.components)
    }
}

#[cfg(feature = "serde")]
impl From<Gmm> for GmmRepr {
    fn from(g: Gmm) -> Self {
        GmmRepr { weights: g.weights, components: g.components }
    }
}

pub(crate) fn validate_distribution(p: &[f64], what: &str) -> Result<()> {
    if p.is_empty() {
        return Err(Error::InvalidProbability(alloc::format!("{what} is empty")));
    }
    if p.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
        return Err(Error::InvalidProbability(alloc::format!("{what} has a negative or non-finite entry")));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidProbability(alloc::format!("{what} sums to {total}")));
    }
    Ok(())
}

impl Gmm {
    pub fn new(weights: Vec<f64>, components: Vec<Gaussian>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::Empty("mixture components"));
        }
        check_dim(components.len(), weights.len())?;
        validate_distribution(&weights, "mixture weights")?;
        let d = components[0].dim();
        let kind = components[0].kind();
        for c in &components {
            check_dim(d, c.dim())?;
            if c.kind() != kind {
                return Err(Error::InvalidParameter("mixture components mix covariance kinds".into()));
            }
        }
        Ok(Self { weights, components })
    }

    pub fn single(g: Gaussian) -> Self {
        Self { weights: alloc::vec![1.0], components: alloc::vec![g] }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn components(&self) -> &[Gaussian] {
        &self.components
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.components[0].dim()
    }

    /// Same weights, new components (e.g. after adaptation).
    pub fn with_components(&self, components: Vec<Gaussian>) -> Result<Self> {
        Self::new(self.weights.clone(), components)
    }

    /// Mixes per-component log-scores with this mixture's weights.
    pub fn mix(&self, component_scores: impl Fn(usize, &Gaussian) -> Result<f64>) -> Result<LogProb> {
        let mut terms = Vec::with_capacity(self.len());
        for (k, (w, g)) in self.weights.iter().zip(&self.components).enumerate() {
            if *w == 0.0 {
                continue;
            }
            terms.push(w.ln() + component_scores(k, g)?);
        }
        LogProb::new(lse(&terms))
    }

    pub fn logpdf(&self, x: &[f64]) -> Result<LogProb> {
        check_dim(self.dim(), x.len())?;
        self.mix(|_, g| Ok(g.logpdf(x)?.get()))
    }

    /// Single Gaussian with the mixture's overall mean and covariance.
    pub fn moment_match(&self) -> Result<Gaussian> {
        moment_match(self.weights.iter().cloned().zip(self.components.iter()))
    }
}

/// Moment-matched single Gaussian of a weighted collection of Gaussians
/// (weights need not be normalized).
pub(crate) fn moment_match<'a>(items: impl Iterator<Item = (f64, &'a Gaussian)> + Clone) -> Result<Gaussian> {
    let total: f64 = items.clone().map(|(w, _)| w).sum();
    if !(total > 0.0) {
        return Err(Error::InvalidProbability("moment match with zero total weight".into()));
    }
    let first = items.clone().next().ok_or(Error::Empty("moment match input"))?.1;
    let d = first.dim();
    let mut mean = alloc::vec![0.0; d];
    for (w, g) in items.clone() {
        for (m, gm) in mean.iter_mut().zip(g.mean()) {
            *m += w / total * gm;
        }
    }
    let all_diag = items.clone().all(|(_, g)| g.cov().is_diagonal());
    if all_diag {
        let mut var = alloc::vec![0.0; d];
        for (w, g) in items {
            let cv = g.cov().variances();
            for i in 0..d {
                let dm = g.mean()[i] - mean[i];
                var[i] += w / total * (cv[i] + dm * dm);
            }
        }
        Gaussian::diagonal(mean, var)
    } else {
        let mut cov = Matrix::zeros(d);
        for (w, g) in items {
            let c = g.cov().to_matrix();
            for i in 0..d {
                for j in 0..d {
                    let v = cov.get(i, j)
                        + w / total * (c.get(i, j) + (g.mean()[i] - mean[i]) * (g.mean()[j] - mean[j]));
                    cov.set(i, j, v);
                }
            }
        }
        Gaussian::new(mean, Covariance::Full(cov))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use approx::assert_relative_eq;

    fn g1(mean: f64, var: f64) -> Gaussian {
        Gaussian::diagonal(vec![mean], vec![var]).unwrap()
    }

    #[test]
    fn logpdf_standard_normal_at_mode() {
        let v = gaussian_logpdf(&[0.0], &g1(0.0, 1.0)).unwrap().get();
        assert_relative_eq!(v, -0.918_938_533_204_672_7, epsilon = 1e-15);
    }

    #[test]
    fn logpdf_variance_two() {
        // −0.25 − ½·log(4π)
        let expected = -0.25 - 0.5 * (4.0 * core::f64::consts::PI).ln();
        let v = gaussian_logpdf(&[1.0], &g1(0.0, 2.0)).unwrap().get();
        assert_relative_eq!(v, expected, epsilon = 1e-15);
        assert_relative_eq!(v.exp(), 0.219_695_644_733_861_34, epsilon = 1e-15);
    }

    #[test]
    fn logpdf_independent_product() {
        let g = Gaussian::standard(2);
        let v = g.logpdf(&[0.0, 0.0]).unwrap().get();
        assert_relative_eq!(v, 2.0 * -0.918_938_533_204_672_7, epsilon = 1e-15);
    }

    #[test]
    fn full_and_diagonal_agree_on_diagonal_matrix() {
        let d = Gaussian::diagonal(vec![1.0, -1.0], vec![2.0, 0.5]).unwrap();
        let f = Gaussian::new(vec![1.0, -1.0], Covariance::Full(Matrix::from_diagonal(&[2.0, 0.5]))).unwrap();
        let x = [0.3, 0.2];
        assert_relative_eq!(d.logpdf(&x).unwrap().get(), f.logpdf(&x).unwrap().get(), epsilon = 1e-14);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let g = Gaussian::standard(2);
        assert_eq!(g.logpdf(&[0.0]).unwrap_err(), Error::DimensionMismatch { expected: 2, found: 1 });
    }

    #[test]
    fn variance_floor_applied() {
        let g = g1(0.0, 0.0);
        assert_eq!(g.cov().variances(), vec![VARIANCE_FLOOR]);
    }

    #[test]
    fn mixture_degenerate_cases() {
        let a = g1(0.5, 1.5);
        let b = g1(-2.0, 0.3);
        let x = [0.7];
        let single = Gmm::single(a.clone());
        assert_eq!(single.logpdf(&x).unwrap(), a.logpdf(&x).unwrap());
        let twins = Gmm::new(vec![0.5, 0.5], vec![a.clone(), a.clone()]).unwrap();
        assert_relative_eq!(twins.logpdf(&x).unwrap().get(), a.logpdf(&x).unwrap().get(), epsilon = 1e-14);
        let dropped = Gmm::new(vec![1.0, 0.0], vec![a.clone(), b]).unwrap();
        assert_eq!(dropped.logpdf(&x).unwrap(), a.logpdf(&x).unwrap());
    }

    #[test]
    fn mixture_weights_validated() {
        let a = g1(0.0, 1.0);
        assert!(Gmm::new(vec![0.6, 0.6], vec![a.clone(), a.clone()]).is_err());
        assert!(Gmm::new(vec![1.5, -0.5], vec![a.clone(), a]).is_err());
    }

    #[test]
    fn convolve_examples() {
        let g = g1(3.0, 2.0);
        let out = gaussian_convolve(&g, &Covariance::Diagonal(vec![5.0]), &[1.0]).unwrap();
        assert_eq!(out.mean(), &[4.0]);
        assert_eq!(out.cov().variances(), vec![7.0]);
        let same = gaussian_convolve(&g, &Covariance::zeros(1), &[0.0]).unwrap();
        assert_eq!(same, g);
    }

    #[test]
    fn product_examples() {
        let (scale, p) = gaussian_product(&g1(0.0, 1.0), &g1(0.0, 1.0)).unwrap();
        assert_eq!(p.mean(), &[0.0]);
        assert_relative_eq!(p.cov().variances()[0], 0.5, epsilon = 1e-15);
        assert_relative_eq!(scale.get(), g1(0.0, 2.0).logpdf(&[0.0]).unwrap().get(), epsilon = 1e-15);
        let (_, mid) = gaussian_product(&g1(0.0, 1.0), &g1(2.0, 1.0)).unwrap();
        assert_relative_eq!(mid.mean()[0], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn full_product_matches_diagonal_route() {
        let a = Gaussian::diagonal(vec![1.0, 2.0], vec![1.0, 3.0]).unwrap();
        let b = Gaussian::diagonal(vec![-1.0, 0.5], vec![2.0, 0.5]).unwrap();
        let af = Gaussian::new(a.mean().to_vec(), Covariance::Full(a.cov().to_matrix())).unwrap();
        let (s1, p1) = gaussian_product(&a, &b).unwrap();
        let (s2, p2) = gaussian_product(&af, &b).unwrap();
        assert_relative_eq!(s1.get(), s2.get(), epsilon = 1e-13);
        for i in 0..2 {
            assert_relative_eq!(p1.mean()[i], p2.mean()[i], epsilon = 1e-13);
            assert_relative_eq!(p1.cov().variances()[i], p2.cov().variances()[i], epsilon = 1e-13);
        }
    }

    #[test]
    fn log_sum_exp_examples() {
        let two = log_sum_exp(&[LogProb::ZERO, LogProb::ZERO]).unwrap();
        assert_relative_eq!(two.get(), core::f64::consts::LN_2, epsilon = 1e-15);
        let a = LogProb::new(-3.25).unwrap();
        assert_eq!(log_sum_exp(&[a]).unwrap(), a);
        assert_eq!(log_sum_exp(&[LogProb::ZERO, LogProb::NEG_INFINITY]).unwrap(), LogProb::ZERO);
        assert_eq!(log_sum_exp(&[LogProb::NEG_INFINITY; 3]).unwrap(), LogProb::NEG_INFINITY);
        assert_eq!(log_sum_exp(&[]).unwrap_err(), Error::Empty("log_sum_exp input"));
        assert_relative_eq!(log_sum_exp(&[LogProb(1000.0), LogProb(1000.0)]).unwrap().get(), 1000.0 + core::f64::consts::LN_2);
    }

    #[test]
    fn log_prob_rejects_nan() {
        assert!(LogProb::new(f64::NAN).is_err());
    }

    #[test]
    fn moment_match_of_mixture() {
        let m = Gmm::new(vec![0.5, 0.5], vec![g1(-1.0, 1.0), g1(1.0, 1.0)]).unwrap();
        let g = m.moment_match().unwrap();
        assert_relative_eq!(g.mean()[0], 0.0);
        assert_relative_eq!(g.cov().variances()[0], 2.0);
    }
}

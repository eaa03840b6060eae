//! Observation models `y_n = f(x_n, b_n)` relating clean and observed features:
//! declarative parameter sets, exact evaluation, and seeded ancestral sampling.

mod apply;
mod sample;

pub use apply::{apply_model, jacobian_takiguchi, Latents};
pub use sample::{sample_utterance, sample_utterance_at, NamedStreams, SampledUtterance};
#[cfg(test)]
pub(crate) use sample::draw;

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::gauss::validate_distribution;
use crate::hmm::{Hmm, Moments};
use crate::linalg::{check_dim, Covariance, Matrix};

/// Stand-in for `log 0` inside log-sum families: `exp(-745)` is the smallest
/// positive subnormal double, so a term at this level never changes a sum of
/// ordinary magnitudes.
pub const LOG_FLOOR: f64 = -745.0;

/// A parameter that is either fixed or given per frame.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "snake_case"))]
pub enum Track<T> {
    Constant(T),
    PerFrame(Vec<T>),
}

impl<T> Track<T> {
    pub fn at(&self, frame: usize) -> Result<&T> {
        match self {
            Track::Constant(v) => Ok(v),
            Track::PerFrame(v) => v.get(frame).ok_or(Error::InvalidParameter(alloc::format!(
                "per-frame track has {} entries, frame {frame} requested",
                v.len()
            ))),
        }
    }

    fn items(&self) -> &[T] {
        match self {
            Track::Constant(v) => core::slice::from_ref(v),
            Track::PerFrame(v) => v,
        }
    }
}

/// Distribution of an affine bias term.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "snake_case"))]
pub enum BiasPdf {
    Gaussian(Moments),
    Dirac(Vec<f64>),
}

impl BiasPdf {
    pub fn mean(&self) -> &[f64] {
        match self {
            BiasPdf::Gaussian(m) => &m.mean,
            BiasPdf::Dirac(v) => v,
        }
    }

    /// Covariance of the bias; zero for a dirac.
    pub fn cov(&self) -> Covariance {
        match self {
            BiasPdf::Gaussian(m) => m.cov.clone(),
            BiasPdf::Dirac(v) => Covariance::zeros(v.len()),
        }
    }

    pub fn is_dirac(&self) -> bool {
        matches!(self, BiasPdf::Dirac(_))
    }
}

/// Transform shared by one regression class: `y = A x + b`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AffineClass {
    pub a: Matrix,
    pub bias: BiasPdf,
}

impl AffineClass {
    pub fn identity(dim: usize) -> Self {
        Self { a: Matrix::identity(dim), bias: BiasPdf::Dirac(alloc::vec![0.0; dim]) }
    }
}

/// Which regression class each Gaussian component belongs to.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "snake_case"))]
pub enum ClassMap {
    /// Every component uses class 0.
    Global,
    /// `map[state][component]` is the class id.
    PerComponent(Vec<Vec<usize>>),
}

/// Regression classes and the component-to-class map.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RegressionAssignment {
    pub classes: Vec<AffineClass>,
    pub map: ClassMap,
}

impl RegressionAssignment {
    pub fn global(class: AffineClass) -> Self {
        Self { classes: alloc::vec![class], map: ClassMap::Global }
    }

    pub fn class_id(&self, state: usize, component: usize) -> Result<usize> {
        let id = match &self.map {
            ClassMap::Global => 0,
            ClassMap::PerComponent(m) => *m.get(state).and_then(|r| r.get(component)).ok_or_else(|| {
                Error::InvalidParameter(alloc::format!("component ({state}, {component}) has no regression class"))
            })?,
        };
        if id >= self.classes.len() {
            return Err(Error::InvalidParameter(alloc::format!("regression class {id} does not exist")));
        }
        Ok(id)
    }

    pub fn class_of(&self, state: usize, component: usize) -> Result<&AffineClass> {
        Ok(&self.classes[self.class_id(state, component)?])
    }

    /// Checks that every component of `hmm` maps to exactly one existing class.
    pub fn validate_for(&self, hmm: &Hmm) -> Result<()> {
        if self.classes.is_empty() {
            return Err(Error::Empty("regression classes"));
        }
        for c in &self.classes {
            check_dim(hmm.dim(), c.a.dim())?;
            check_dim(hmm.dim(), c.bias.mean().len())?;
            check_dim(hmm.dim(), c.bias.cov().dim())?;
        }
        for (q, gmm) in hmm.emissions().iter().enumerate() {
            if let ClassMap::PerComponent(m) = &self.map {
                if m.get(q).map(Vec::len) != Some(gmm.len()) {
                    return Err(Error::InvalidParameter(alloc::format!("state {q} class map does not cover its components")));
                }
            }
            for k in 0..gmm.len() {
                self.class_id(q, k)?;
            }
        }
        Ok(())
    }
}

/// `y = x + b`, `b ~ N(bias_mean_n, bias_cov_n)`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AdditiveGaussian {
    pub bias_mean: Track<Vec<f64>>,
    pub bias_cov: Track<Covariance>,
}

impl AdditiveGaussian {
    pub fn stationary(mean: Vec<f64>, cov: Covariance) -> Self {
        Self { bias_mean: Track::Constant(mean), bias_cov: Track::Constant(cov) }
    }
}

/// `y = x + log(1 + exp(r̂_n − x)) + b`, `b ~ N(0, C_b)`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Algonquin {
    pub noise_estimate: Track<Vec<f64>>,
    pub residual_cov: Covariance,
}

/// One SPLICE region: `p(x | y, s) = N(x; y + r_s, G_s)` with prior `p(s)` and an
/// optional observation prior `p(y | s)`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SpliceRegion {
    pub prior: f64,
    pub offset: Vec<f64>,
    pub cov: Covariance,
    #[cfg_attr(feature = "serde", serde(default, skip_serializing_if = "Option::is_none"))]
    pub observation_prior: Option<Moments>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SpliceRegions {
    pub regions: Vec<SpliceRegion>,
}

/// `y = log(α exp(x) + exp(b))`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PmcLogSum {
    pub alpha: f64,
    /// Stationary noise statistics; `None` marks the noise term absent.
    #[cfg_attr(feature = "serde", serde(default, skip_serializing_if = "Option::is_none"))]
    pub noise: Option<Moments>,
    /// Non-stationary noise: a noise HMM whose state emissions are single Gaussians.
    #[cfg_attr(feature = "serde", serde(default, skip_serializing_if = "Option::is_none"))]
    pub noise_hmm: Option<Hmm>,
}

/// `y = log(exp(h + x) + exp(c))`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct VtsLogSum {
    pub h: Moments,
    pub c: Moments,
}

/// `y = log(exp(c) + exp(h + x_n) + exp(a) Σ_{l=1..L} exp(μ_l + x_{n−l}))`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RemosLogSum {
    pub c: Moments,
    pub h: Moments,
    pub a: Moments,
    /// Late-reverberation description `μ_1..μ_L`.
    pub tail: Vec<Vec<f64>>,
}

/// `y = log(Σ_{l=0..L} exp(x_{n−l} + μ_l) + exp(b))`; without noise this is the
/// noise-free reverberation model.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ReverbLogSum {
    /// `μ_0..μ_L`.
    pub taps: Vec<Vec<f64>>,
    #[cfg_attr(feature = "serde", serde(default, skip_serializing_if = "Option::is_none"))]
    pub noise: Option<Moments>,
}

impl ReverbLogSum {
    pub fn order(&self) -> usize {
        self.taps.len().saturating_sub(1)
    }
}

/// `y_n = log(exp(h + x_n) + exp(α + y_{n−1}))`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TakiguchiAr {
    pub h: Vec<f64>,
    pub alpha: Vec<f64>,
}

/// Every supported observation model family.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(tag = "family", rename_all = "snake_case")
)]
pub enum ObservationModelSpec {
    AdditiveGaussian(AdditiveGaussian),
    Affine(RegressionAssignment),
    Algonquin(Algonquin),
    SpliceRegions(SpliceRegions),
    PmcLogSum(PmcLogSum),
    VtsLogSum(VtsLogSum),
    RemosLogSum(RemosLogSum),
    ReverbLogSum(ReverbLogSum),
    TakiguchiAr(TakiguchiAr),
}

fn check_moments(dim: usize, m: &Moments) -> Result<()> {
    check_dim(dim, m.mean.len())?;
    check_dim(dim, m.cov.dim())?;
    m.cov.validate_psd()
}

fn check_vecs<'a>(dim: usize, vs: impl IntoIterator<Item = &'a Vec<f64>>) -> Result<()> {
    for v in vs {
        check_dim(dim, v.len())?;
    }
    Ok(())
}

impl ObservationModelSpec {
    pub fn family(&self) -> &'static str {
        match self {
            ObservationModelSpec::AdditiveGaussian(_) => "additive_gaussian",
            ObservationModelSpec::Affine(_) => "affine",
            ObservationModelSpec::Algonquin(_) => "algonquin",
            ObservationModelSpec::SpliceRegions(_) => "splice_regions",
            ObservationModelSpec::PmcLogSum(_) => "pmc_log_sum",
            ObservationModelSpec::VtsLogSum(_) => "vts_log_sum",
            ObservationModelSpec::RemosLogSum(_) => "remos_log_sum",
            ObservationModelSpec::ReverbLogSum(_) => "reverb_log_sum",
            ObservationModelSpec::TakiguchiAr(_) => "takiguchi_ar",
        }
    }

    /// Number of past clean frames the model reads (`L`).
    pub fn order(&self) -> usize {
        match self {
            ObservationModelSpec::RemosLogSum(r) => r.tail.len(),
            ObservationModelSpec::ReverbLogSum(r) => r.order(),
            _ => 0,
        }
    }

    /// Checks every parameter against feature dimension `dim`.
    pub fn validate(&self, dim: usize) -> Result<()> {
        match self {
            ObservationModelSpec::AdditiveGaussian(m) => {
                check_vecs(dim, m.bias_mean.items())?;
                for c in m.bias_cov.items() {
                    check_dim(dim, c.dim())?;
                    c.validate_psd()?;
                }
            }
            ObservationModelSpec::Affine(r) => {
                if r.classes.is_empty() {
                    return Err(Error::Empty("regression classes"));
                }
                for c in &r.classes {
                    check_dim(dim, c.a.dim())?;
                    check_dim(dim, c.bias.mean().len())?;
                    if let BiasPdf::Gaussian(m) = &c.bias {
                        check_moments(dim, m)?;
                    }
                }
            }
            ObservationModelSpec::Algonquin(m) => {
                check_vecs(dim, m.noise_estimate.items())?;
                check_dim(dim, m.residual_cov.dim())?;
                m.residual_cov.validate_psd()?;
            }
            ObservationModelSpec::SpliceRegions(s) => {
                if s.regions.is_empty() {
                    return Err(Error::Empty("SPLICE regions"));
                }
                let priors: Vec<f64> = s.regions.iter().map(|r| r.prior).collect();
                validate_distribution(&priors, "region priors")?;
                for r in &s.regions {
                    check_dim(dim, r.offset.len())?;
                    check_dim(dim, r.cov.dim())?;
                    r.cov.validate_psd()?;
                    if let Some(p) = &r.observation_prior {
                        check_moments(dim, p)?;
                    }
                }
            }
            ObservationModelSpec::PmcLogSum(p) => {
                if !(p.alpha > 0.0) || !p.alpha.is_finite() {
                    return Err(Error::InvalidParameter(alloc::format!("PMC level α must be positive, got {}", p.alpha)));
                }
                if let Some(n) = &p.noise {
                    check_moments(dim, n)?;
                }
                if let Some(h) = &p.noise_hmm {
                    check_dim(dim, h.dim())?;
                }
            }
            ObservationModelSpec::VtsLogSum(v) => {
                check_moments(dim, &v.h)?;
                check_moments(dim, &v.c)?;
            }
            ObservationModelSpec::RemosLogSum(r) => {
                check_moments(dim, &r.c)?;
                check_moments(dim, &r.h)?;
                check_moments(dim, &r.a)?;
                check_vecs(dim, &r.tail)?;
            }
            ObservationModelSpec::ReverbLogSum(r) => {
                if r.taps.is_empty() {
                    return Err(Error::InvalidParameter(String::from("reverberation model needs at least tap μ_0")));
                }
                check_vecs(dim, &r.taps)?;
                if let Some(n) = &r.noise {
                    check_moments(dim, n)?;
                }
            }
            ObservationModelSpec::TakiguchiAr(t) => {
                check_dim(dim, t.h.len())?;
                check_dim(dim, t.alpha.len())?;
            }
        }
        Ok(())
    }
}

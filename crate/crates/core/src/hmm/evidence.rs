use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::gauss::validate_distribution;
use crate::linalg::{check_dim, Covariance};

/// Raw first and second moments. Zero covariance is allowed (dirac).
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Moments {
    pub mean: Vec<f64>,
    pub cov: Covariance,
}

impl Moments {
    pub fn new(mean: Vec<f64>, cov: Covariance) -> Result<Self> {
        check_dim(mean.len(), cov.dim())?;
        cov.validate_psd()?;
        Ok(Self { mean, cov })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Per-frame uncertainty: either a posterior over the clean feature, or the
/// statistics of the additive distortion term.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "snake_case"))]
pub enum Uncertainty {
    /// `p(x_n | y_n)` (or `p(x_n | y_{1:N})`) as mean and covariance.
    Posterior(Moments),
    /// `p(b_n)` for `y_n = x_n + b_n`.
    Bias(Moments),
}

/// Reliability mask for missing-feature decoding.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Reliability {
    /// `true` marks a reliable dimension; the complement is the unreliable set.
    pub reliable: Vec<bool>,
    /// Substitute values; only entries of unreliable dimensions are read.
    #[cfg_attr(feature = "serde", serde(default, skip_serializing_if = "Option::is_none"))]
    pub imputed: Option<Vec<f64>>,
}

impl Reliability {
    pub fn all_reliable(dim: usize) -> Self {
        Self { reliable: alloc::vec![true; dim], imputed: None }
    }

    pub fn unreliable_dims(&self) -> impl Iterator<Item = usize> + '_ {
        self.reliable.iter().enumerate().filter(|(_, r)| !**r).map(|(d, _)| d)
    }
}

/// Everything known about one observed frame.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FrameEvidence {
    pub observed: Vec<f64>,
    #[cfg_attr(feature = "serde", serde(default, skip_serializing_if = "Option::is_none"))]
    pub uncertainty: Option<Uncertainty>,
    #[cfg_attr(feature = "serde", serde(default, skip_serializing_if = "Option::is_none"))]
    pub reliability: Option<Reliability>,
    #[cfg_attr(feature = "serde", serde(default, skip_serializing_if = "Option::is_none"))]
    pub region_posterior: Option<Vec<f64>>,
}

impl FrameEvidence {
    pub fn new(observed: Vec<f64>) -> Self {
        Self { observed, uncertainty: None, reliability: None, region_posterior: None }
    }

    pub fn with_uncertainty(mut self, u: Uncertainty) -> Self {
        self.uncertainty = Some(u);
        self
    }

    pub fn with_reliability(mut self, r: Reliability) -> Self {
        self.reliability = Some(r);
        self
    }

    pub fn dim(&self) -> usize {
        self.observed.len()
    }

    pub fn posterior(&self) -> Option<&Moments> {
        match &self.uncertainty {
            Some(Uncertainty::Posterior(m)) => Some(m),
            _ => None,
        }
    }

    pub fn bias(&self) -> Option<&Moments> {
        match &self.uncertainty {
            Some(Uncertainty::Bias(m)) => Some(m),
            _ => None,
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        check_dim(dim, self.observed.len())?;
        if let Some(Uncertainty::Posterior(m) | Uncertainty::Bias(m)) = &self.uncertainty {
            check_dim(dim, m.dim())?;
            check_dim(dim, m.cov.dim())?;
        }
        if let Some(r) = &self.reliability {
            check_dim(dim, r.reliable.len())?;
            if let Some(x) = &r.imputed {
                check_dim(dim, x.len())?;
            }
        }
        if let Some(p) = &self.region_posterior {
            validate_distribution(p, "region posterior")?;
        }
        if self.observed.iter().any(|v| v.is_nan()) {
            return Err(Error::Numeric("NaN in observed features"));
        }
        Ok(())
    }
}

impl From<Vec<f64>> for FrameEvidence {
    fn from(observed: Vec<f64>) -> Self {
        FrameEvidence::new(observed)
    }
}

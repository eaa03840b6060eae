//! Missing-feature decoding and the posterior-driven point estimates that
//! grew out of it.

use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use super::per_component;
use crate::error::{Error, Result};
use crate::gauss::{gaussian_product, product_moments, Gaussian, LogProb, LN_2PI};
use crate::hmm::{EmissionScorer, Hmm, ScoreRequest};
use crate::linalg::{check_dim, Covariance};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "snake_case"))]
pub enum MissingFeatureMode {
    /// Unreliable dimensions are replaced by the supplied estimates.
    Imputation,
    /// Unreliable dimensions contribute `log ∫ p(x_d|q) p(x_d) dx_d`.
    Marginalization,
    /// Unreliable dimensions contribute nothing (flat clean marginal).
    FlatMarginalization,
}

/// Missing-feature scorer for diagonal-covariance models.
#[derive(Debug, Clone)]
pub struct MissingFeature<'a> {
    hmm: &'a Hmm,
    mode: MissingFeatureMode,
    marginal_mean: Vec<f64>,
    marginal_var: Vec<f64>,
}

/// `clean_marginals` is the separate clean-speech model `p(x_d)` used by
/// [`MissingFeatureMode::Marginalization`]; its covariance must be diagonal.
pub fn missing_feature_scorer<'a>(
    hmm: &'a Hmm,
    mode: MissingFeatureMode,
    clean_marginals: Option<&Gaussian>,
) -> Result<MissingFeature<'a>> {
    let (mut marginal_mean, mut marginal_var) = (Vec::new(), Vec::new());
    if mode == MissingFeatureMode::Marginalization {
        let m = clean_marginals.ok_or(Error::MissingEvidence("marginalization needs clean marginals p(x_d)"))?;
        check_dim(hmm.dim(), m.dim())?;
        if !m.cov().is_diagonal() {
            return Err(Error::Unsupported("clean marginals must be diagonal".into()));
        }
        marginal_mean = m.mean().to_vec();
        marginal_var = m.cov().variances();
    }
    if mode != MissingFeatureMode::Imputation
        && hmm.emissions().iter().flat_map(|g| g.components()).any(|g| !g.cov().is_diagonal())
    {
        return Err(Error::Unsupported("marginalization needs diagonal state covariances".into()));
    }
    Ok(MissingFeature { hmm, mode, marginal_mean, marginal_var })
}

fn log_normal_1d(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -0.5 * (LN_2PI + var.ln() + d * d / var)
}

impl MissingFeature<'_> {
    fn marginalized(&self, g: &Gaussian, y: &[f64], reliable: &[bool]) -> f64 {
        let var = g.cov().variances();
        let mut acc = 0.0;
        for d in 0..y.len() {
            acc += if reliable[d] {
                log_normal_1d(y[d], g.mean()[d], var[d])
            } else if self.mode == MissingFeatureMode::Marginalization {
                log_normal_1d(g.mean()[d], self.marginal_mean[d], var[d] + self.marginal_var[d])
            } else {
                0.0
            };
        }
        acc
    }
}

impl EmissionScorer for MissingFeature<'_> {
    fn score(&self, req: &ScoreRequest<'_>) -> Result<LogProb> {
        let rel = req.evidence.reliability.as_ref().ok_or(Error::MissingEvidence("reliability mask"))?;
        let y = &req.evidence.observed;
        check_dim(y.len(), rel.reliable.len())?;
        let gmm = self.hmm.emission(req.state);
        let all_reliable = rel.reliable.iter().all(|r| *r);
        match self.mode {
            _ if all_reliable => per_component(gmm, req.component, |_, g| Ok(g.logpdf(y)?.get())),
            MissingFeatureMode::Imputation => {
                let imputed = rel.imputed.as_ref().ok_or(Error::MissingEvidence("imputed values for unreliable dims"))?;
                check_dim(y.len(), imputed.len())?;
                let x: Vec<f64> = (0..y.len()).map(|d| if rel.reliable[d] { y[d] } else { imputed[d] }).collect();
                per_component(gmm, req.component, |_, g| Ok(g.logpdf(&x)?.get()))
            }
            _ => per_component(gmm, req.component, |_, g| Ok(self.marginalized(g, y, &rel.reliable))),
        }
    }
}

/// Plugs in `x̂ = argmax_x p(x|k) p(x|y)` per component.
#[derive(Debug, Clone, Copy)]
pub struct ModifiedImputation<'a> {
    hmm: &'a Hmm,
}

pub fn modified_imputation_scorer(hmm: &Hmm) -> ModifiedImputation<'_> {
    ModifiedImputation { hmm }
}

impl ModifiedImputation<'_> {
    /// Precision-weighted mean of component and posterior.
    pub fn estimate(g: &Gaussian, post_mean: &[f64], post_cov: &Covariance) -> Result<Vec<f64>> {
        Ok(product_moments(g.mean(), g.cov(), post_mean, post_cov)?.0)
    }
}

impl EmissionScorer for ModifiedImputation<'_> {
    fn score(&self, req: &ScoreRequest<'_>) -> Result<LogProb> {
        let post = req.evidence.posterior().ok_or(Error::MissingEvidence("modified imputation needs posterior moments"))?;
        per_component(self.hmm.emission(req.state), req.component, |_, g| {
            let x = ModifiedImputation::estimate(g, &post.mean, &post.cov)?;
            Ok(g.logpdf(&x)?.get())
        })
    }
}

/// `log max_x p(x|k) p(x|y)`: the product's scale times its peak density.
#[derive(Debug, Clone, Copy)]
pub struct Significance<'a> {
    hmm: &'a Hmm,
}

pub fn significance_scorer(hmm: &Hmm) -> Significance<'_> {
    Significance { hmm }
}

impl EmissionScorer for Significance<'_> {
    fn score(&self, req: &ScoreRequest<'_>) -> Result<LogProb> {
        let post = req.evidence.posterior().ok_or(Error::MissingEvidence("significance decoding needs posterior moments"))?;
        let pg = Gaussian::new(post.mean.clone(), post.cov.clone())?;
        per_component(self.hmm.emission(req.state), req.component, |_, g| {
            let (scale, prod) = gaussian_product(g, &pg)?;
            Ok(scale.get() + prod.log_peak())
        })
    }
}

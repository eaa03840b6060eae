//! Reverberation: extended-vector VTS, log-sum mean adaptation with static or
//! path-dependent previous-frame statistics, and the autoregressive
//! Takiguchi likelihood.

use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use super::model::{linearize_log_sum, log_normal_sum};
use super::{per_component, AdaptedHmm, Provenance};
use crate::error::{Error, Result};
use crate::gauss::{lse, moment_match, Gaussian, LogProb};
use crate::hmm::{EmissionScorer, Hmm, Moments, Needs, ScoreRequest};
use crate::linalg::{check_dim, Covariance};
use crate::obs::{jacobian_takiguchi, ReverbLogSum, TakiguchiAr, VtsLogSum};

/// Steps over which the state marginal is averaged for previous-frame statistics.
pub const DEFAULT_OCCUPANCY_HORIZON: usize = 1000;

/// Clean statistics of "some earlier frame": every component of every state,
/// weighted by mixture weight times time-averaged state occupancy, moment matched.
pub fn previous_frame_statistics(hmm: &Hmm, horizon: usize) -> Result<Gaussian> {
    let occ = hmm.state_occupancy(horizon);
    let items: Vec<(f64, &Gaussian)> = hmm
        .emissions()
        .iter()
        .zip(&occ)
        .flat_map(|(gmm, &w)| gmm.weights().iter().zip(gmm.components()).map(move |(c, g)| (w * c, g)))
        .filter(|(w, _)| *w > 0.0)
        .collect();
    moment_match(items.iter().map(|(w, g)| (*w, *g)))
}

fn state_statistics(hmm: &Hmm) -> Result<Vec<Gaussian>> {
    hmm.emissions().iter().map(|g| g.moment_match()).collect()
}

fn shifted(mean: &[f64], tap: &[f64]) -> Vec<f64> {
    mean.iter().zip(tap).map(|(m, t)| m + t).collect()
}

/// Expansion of `log(Σ_l exp(x_{n−l} + μ_l) + exp(b))` for one component,
/// with `x_{n−l} ~ prev` for `l ≥ 1`. Works for any order, including `L = 0`.
pub fn rev_vts_component(g: &Gaussian, prev: &Gaussian, spec: &ReverbLogSum) -> Result<Gaussian> {
    let d = g.dim();
    check_dim(d, prev.dim())?;
    let mut terms = Vec::with_capacity(spec.taps.len() + 1);
    for (l, tap) in spec.taps.iter().enumerate() {
        check_dim(d, tap.len())?;
        terms.push(if l == 0 {
            (shifted(g.mean(), tap), g.cov().clone())
        } else {
            (shifted(prev.mean(), tap), prev.cov().clone())
        });
    }
    if let Some(b) = &spec.noise {
        check_dim(d, b.dim())?;
        terms.push((b.mean.clone(), b.cov.clone()));
    }
    let (mean, cov, _) = linearize_log_sum(&terms)?;
    Gaussian::new(mean, cov)
}

/// The first-order VTS model equivalent to a reverberation model without tail.
pub fn reverb_as_vts(spec: &ReverbLogSum) -> Result<VtsLogSum> {
    if spec.order() != 0 {
        return Err(Error::InvalidParameter("reverberation model has a tail".into()));
    }
    let tap = spec.taps.first().ok_or(Error::Empty("reverberation taps"))?;
    let noise = spec.noise.clone().ok_or(Error::MissingEvidence("additive noise pdf"))?;
    Ok(VtsLogSum { h: Moments { mean: tap.clone(), cov: Covariance::zeros(tap.len()) }, c: noise })
}

/// Reverberant VTS over the extended vector `[x_{n−L}, ..., x_n]`, with the
/// earlier frames drawn from [`previous_frame_statistics`].
pub fn rev_vts_adapt(hmm: &Hmm, spec: &ReverbLogSum, horizon: usize) -> Result<AdaptedHmm> {
    if spec.order() == 0 {
        return Err(Error::InvalidParameter("reverberant VTS needs L >= 1; use vts_adapt".into()));
    }
    let prev = previous_frame_statistics(hmm, horizon)?;
    let prov = Provenance::new("rev_vts").with("order", spec.order()).with("horizon", horizon);
    AdaptedHmm::map_components(hmm, prov, |_, _, g| rev_vts_component(g, &prev, spec))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "snake_case"))]
pub enum ReverbVariant {
    /// Previous-frame statistics averaged once over all states.
    StaticPrior,
    /// Previous-frame statistics taken from the decoder's best partial path.
    PartialPath,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "snake_case"))]
pub enum ReverbMoment {
    LogAdd,
    LogNormal,
}

fn technique_id(variant: ReverbVariant, moment: ReverbMoment) -> &'static str {
    match (variant, moment) {
        (ReverbVariant::StaticPrior, ReverbMoment::LogAdd) => "reverb.static_prior.log_add",
        (ReverbVariant::StaticPrior, ReverbMoment::LogNormal) => "reverb.static_prior.log_normal",
        (ReverbVariant::PartialPath, ReverbMoment::LogAdd) => "reverb.partial_path.log_add",
        (ReverbVariant::PartialPath, ReverbMoment::LogNormal) => "reverb.partial_path.log_normal",
    }
}

/// Adapted component given the statistics of frames `n−1, ..., n−L`.
fn log_sum_component(g: &Gaussian, prev: &[&Gaussian], taps: &[Vec<f64>], moment: ReverbMoment) -> Result<Gaussian> {
    match moment {
        ReverbMoment::LogAdd => {
            let mut scratch = Vec::with_capacity(taps.len());
            let mean = (0..g.dim())
                .map(|d| {
                    scratch.clear();
                    scratch.push(g.mean()[d] + taps[0][d]);
                    scratch.extend(prev.iter().zip(&taps[1..]).map(|(p, t)| p.mean()[d] + t[d]));
                    lse(&scratch)
                })
                .collect();
            Gaussian::new(mean, g.cov().clone())
        }
        ReverbMoment::LogNormal => {
            let mut terms = Vec::with_capacity(taps.len());
            terms.push((shifted(g.mean(), &taps[0]), g.cov().clone()));
            for (p, t) in prev.iter().zip(&taps[1..]) {
                terms.push((shifted(p.mean(), t), p.cov().clone()));
            }
            let (mean, cov) = log_normal_sum(&terms)?;
            Gaussian::new(mean, cov)
        }
    }
}

/// Scorer that recomputes the previous-frame terms from the best partial path.
/// Frames before the start of the path fall back to the static average.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialPathScorer {
    hmm: Hmm,
    taps: Vec<Vec<f64>>,
    moment: ReverbMoment,
    per_state: Vec<Gaussian>,
    fallback: Gaussian,
}

impl PartialPathScorer {
    pub fn order(&self) -> usize {
        self.taps.len() - 1
    }
}

impl EmissionScorer for PartialPathScorer {
    fn needs(&self) -> Needs {
        Needs { context_depth: self.order(), ..Needs::default() }
    }

    fn score(&self, req: &ScoreRequest<'_>) -> Result<LogProb> {
        let prev: Vec<&Gaussian> =
            (0..self.order()).map(|l| req.context.get(l).map_or(&self.fallback, |&q| &self.per_state[q])).collect();
        let y = &req.evidence.observed;
        per_component(self.hmm.emission(req.state), req.component, |_, g| {
            Ok(log_sum_component(g, &prev, &self.taps, self.moment)?.logpdf(y)?.get())
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ReverbAdaptation {
    Static(AdaptedHmm),
    PartialPath(PartialPathScorer),
}

impl EmissionScorer for ReverbAdaptation {
    fn needs(&self) -> Needs {
        match self {
            ReverbAdaptation::Static(a) => a.needs(),
            ReverbAdaptation::PartialPath(p) => p.needs(),
        }
    }

    fn score(&self, req: &ScoreRequest<'_>) -> Result<LogProb> {
        match self {
            ReverbAdaptation::Static(a) => a.score(req),
            ReverbAdaptation::PartialPath(p) => p.score(req),
        }
    }
}

/// Log-sum reverberation adaptation for the noise-free model
/// `y = log Σ_l exp(x_{n−l} + μ_l)`.
///
/// The partial-path variant needs a decoder that publishes context
/// (`decode_combined_order`); the other decoders reject it.
pub fn reverb_log_add_adapt(
    hmm: &Hmm,
    spec: &ReverbLogSum,
    variant: ReverbVariant,
    moment: ReverbMoment,
    horizon: usize,
) -> Result<ReverbAdaptation> {
    if spec.noise.is_some() {
        return Err(Error::InvalidParameter("log-sum reverberation adaptation takes a noise-free model".into()));
    }
    if spec.taps.is_empty() {
        return Err(Error::Empty("reverberation taps"));
    }
    for t in &spec.taps {
        check_dim(hmm.dim(), t.len())?;
    }
    let fallback = previous_frame_statistics(hmm, horizon)?;
    match variant {
        ReverbVariant::StaticPrior => {
            let prev: Vec<&Gaussian> = (0..spec.order()).map(|_| &fallback).collect();
            let prov = Provenance::new(technique_id(variant, moment)).with("order", spec.order());
            let a = AdaptedHmm::map_components(hmm, prov, |_, _, g| log_sum_component(g, &prev, &spec.taps, moment))?;
            Ok(ReverbAdaptation::Static(a))
        }
        ReverbVariant::PartialPath => Ok(ReverbAdaptation::PartialPath(PartialPathScorer {
            hmm: hmm.clone(),
            taps: spec.taps.clone(),
            moment,
            per_state: state_statistics(hmm)?,
            fallback,
        })),
    }
}

/// `log p(x_n | q_n) − log|det J|` with `x_n` recovered from `(y_n, y_{n−1})`.
#[derive(Debug, Clone, Copy)]
pub struct Takiguchi<'a> {
    hmm: &'a Hmm,
    spec: &'a TakiguchiAr,
}

pub fn takiguchi_scorer<'a>(spec: &'a TakiguchiAr, hmm: &'a Hmm) -> Result<Takiguchi<'a>> {
    check_dim(hmm.dim(), spec.h.len())?;
    check_dim(hmm.dim(), spec.alpha.len())?;
    Ok(Takiguchi { hmm, spec })
}

impl EmissionScorer for Takiguchi<'_> {
    fn needs(&self) -> Needs {
        Needs { shifts: alloc::vec![1], ..Needs::default() }
    }

    fn score(&self, req: &ScoreRequest<'_>) -> Result<LogProb> {
        let y_prev = req.past.first().copied().flatten().map(|e| e.observed.as_slice());
        let (x, log_det) = jacobian_takiguchi(self.spec, &req.evidence.observed, y_prev)?;
        let clean = per_component(self.hmm.emission(req.state), req.component, |_, g| Ok(g.logpdf(&x)?.get()))?;
        LogProb::new(clean.get() - log_det)
    }
}

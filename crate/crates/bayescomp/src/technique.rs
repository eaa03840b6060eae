//! Technique registry: turns a technique id, its parameters and the
//! observation model into per-class scorers, and builds the frame evidence
//! each technique reads.

use bayescomp_core::compensation::*;
use bayescomp_core::hmm::{
    decode_combined_order, decode_conditional, forward_prefix_scores, viterbi, viterbi_3d, Conventional, DecodeResult,
    EmissionScorer, FrameEvidence, Moments, Reliability, Uncertainty,
};
use bayescomp_core::obs::{AdditiveGaussian, AffineClass, BiasPdf, NamedStreams, RegressionAssignment};
use bayescomp_core::oracles::{QuadratureConfig, QuadratureRule};
use bayescomp_core::{gaussian_product, Covariance, Gaussian, Gmm, Hmm, Matrix, ObservationModelSpec};
use serde_json::{Map, Value};

use crate::config::{check_technique, Scoring};
use crate::error::{HarnessError, Result};

/// Utterance numbers at and above this value are reserved for adaptation data.
pub const ADAPTATION_UTTERANCE_BASE: u64 = 1 << 40;
const ADAPTATION_STRIDE: u64 = 1 << 20;

/// Technique parameters as given in the configuration.
#[derive(Debug, Clone, Default)]
pub struct Params<'a> {
    map: Option<&'a Map<String, Value>>,
}

impl<'a> Params<'a> {
    pub fn new(map: &'a Map<String, Value>) -> Self {
        Self { map: Some(map) }
    }

    fn get(&self, key: &str) -> Option<&'a Value> {
        self.map.and_then(|m| m.get(key))
    }

    fn bad(key: &str, v: &Value, want: &str) -> HarnessError {
        HarnessError::Config(format!("parameter {key:?} = {v} is not {want}"))
    }

    fn number(key: &str, v: &Value) -> Result<f64> {
        match v {
            Value::Number(n) => n.as_f64().ok_or_else(|| Self::bad(key, v, "a number")),
            Value::String(s) if s == "inf" => Ok(f64::INFINITY),
            Value::String(s) if s == "-inf" => Ok(f64::NEG_INFINITY),
            _ => Err(Self::bad(key, v, "a number")),
        }
    }

    /// Numbers, or the strings `"inf"` / `"-inf"`.
    pub fn f64(&self, key: &str, default: f64) -> Result<f64> {
        self.get(key).map_or(Ok(default), |v| Self::number(key, v))
    }

    pub fn usize(&self, key: &str, default: usize) -> Result<usize> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v.as_u64().map(|n| n as usize).ok_or_else(|| Self::bad(key, v, "a non-negative integer")),
        }
    }

    pub fn bool(&self, key: &str, default: bool) -> Result<bool> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v.as_bool().ok_or_else(|| Self::bad(key, v, "a boolean")),
        }
    }

    pub fn str(&self, key: &str, default: &'a str) -> Result<&'a str> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v.as_str().ok_or_else(|| Self::bad(key, v, "a string")),
        }
    }

    /// A scalar broadcast to `dim` entries, or a list of length `dim`.
    pub fn vector(&self, key: &str, dim: usize, default: f64) -> Result<Vec<f64>> {
        match self.get(key) {
            None => Ok(vec![default; dim]),
            Some(Value::Array(items)) if items.len() == dim => items.iter().map(|v| Self::number(key, v)).collect(),
            Some(v) => Ok(vec![Self::number(key, v)?; dim]),
        }
    }
}

/// What a technique reads besides the observed features.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvidenceKind {
    Plain,
    Bias,
    Posterior,
    Reliability,
}

pub fn evidence_kind(id: &str) -> EvidenceKind {
    match id {
        "arrowood" => EvidenceKind::Bias,
        "dvc" | "ion" | "modified_imputation" | "significance" => EvidenceKind::Posterior,
        "missing.imputation" | "missing.marginalization" | "missing.marginalization_flat" => EvidenceKind::Reliability,
        _ => EvidenceKind::Plain,
    }
}

/// Technique ids that rewrite the model once (usable with `adapt`).
pub fn is_adapter(id: &str) -> bool {
    matches!(
        id,
        "jud"
            | "pmc.log_add"
            | "pmc.log_normal"
            | "pmc.quadrature"
            | "vts"
            | "cmllr"
            | "mllr"
            | "map"
            | "bayesian_mllr"
            | "rev_vts"
            | "reverb.static_prior.log_add"
            | "reverb.static_prior.log_normal"
    )
}

fn wrong_family(id: &str, want: &str, spec: &ObservationModelSpec) -> HarnessError {
    HarnessError::Config(format!("technique {id} needs a {want} observation model, found {}", spec.family()))
}

fn additive<'s>(id: &str, spec: &'s ObservationModelSpec) -> Result<&'s AdditiveGaussian> {
    match spec {
        ObservationModelSpec::AdditiveGaussian(a) => Ok(a),
        _ => Err(wrong_family(id, "additive_gaussian", spec)),
    }
}

/// Regression classes from an affine model, or identity plus the bias of a
/// stationary additive model.
fn assignment(id: &str, spec: &ObservationModelSpec) -> Result<RegressionAssignment> {
    use bayescomp_core::obs::Track;
    match spec {
        ObservationModelSpec::Affine(r) => Ok(r.clone()),
        ObservationModelSpec::AdditiveGaussian(AdditiveGaussian {
            bias_mean: Track::Constant(m),
            bias_cov: Track::Constant(c),
        }) => {
            let bias = if c.is_zero() { BiasPdf::Dirac(m.clone()) } else { BiasPdf::Gaussian(Moments::new(m.clone(), c.clone())?) };
            Ok(RegressionAssignment::global(AffineClass { a: Matrix::identity(m.len()), bias }))
        }
        _ => Err(wrong_family(id, "affine or stationary additive_gaussian", spec)),
    }
}

fn quadrature(params: &Params<'_>) -> Result<QuadratureConfig> {
    let cfg = QuadratureConfig {
        points: params.usize("points", 256)?,
        rule: QuadratureRule::Midpoint,
        sigmas: params.f64("sigmas", QuadratureConfig::default().sigmas)?,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn pmc_approx(id: &str, params: &Params<'_>) -> Result<PmcApprox> {
    let name = match id {
        "pmc.noise_hmm" => params.str("approx", "log_add")?,
        other => other.trim_start_matches("pmc."),
    };
    match name {
        "log_add" => Ok(PmcApprox::LogAdd),
        "log_normal" => Ok(PmcApprox::LogNormal),
        "quadrature" => Ok(PmcApprox::Quadrature(quadrature(params)?)),
        other => Err(HarnessError::Config(format!("unknown PMC approximation {other:?}"))),
    }
}

fn reverb_kind(id: &str) -> Option<(ReverbVariant, ReverbMoment)> {
    let variant = match id.split('.').nth(1)? {
        "static_prior" => ReverbVariant::StaticPrior,
        "partial_path" => ReverbVariant::PartialPath,
        _ => return None,
    };
    let moment = match id.split('.').nth(2)? {
        "log_add" => ReverbMoment::LogAdd,
        "log_normal" => ReverbMoment::LogNormal,
        _ => return None,
    };
    Some((variant, moment))
}

/// Everything a technique may consult while preparing one class model.
#[derive(Debug, Clone, Copy)]
pub struct Context<'a> {
    pub spec: &'a ObservationModelSpec,
    pub params: &'a Params<'a>,
    pub seed: u64,
    pub class: usize,
}

fn map_adapt(hmm: &Hmm, ctx: &Context<'_>) -> Result<AdaptedHmm> {
    let p = ctx.params;
    let (count, len) = (p.usize("adaptation_utterances", 5)?, p.usize("adaptation_length", 20)?);
    let supervised = p.bool("supervised", true)?;
    let streams = NamedStreams::new(ctx.seed);
    let base = ADAPTATION_UTTERANCE_BASE + ctx.class as u64 * ADAPTATION_STRIDE;
    let data = (0..count as u64)
        .map(|i| {
            let u = bayescomp_core::obs::sample_utterance_at(ctx.spec, hmm, len, &streams, base + i)?;
            Ok(AdaptationSequence { frames: u.observed, states: supervised.then_some(u.states) })
        })
        .collect::<Result<Vec<_>>>()?;
    let prior = MapPrior { tau: p.f64("tau", 10.0)?, means: None };
    let opts = MapOptions { max_iterations: p.usize("iterations", 10)?, ..MapOptions::default() };
    Ok(map_adapt_means(hmm, &prior, &data, opts)?.adapted)
}

/// One-shot model rewrite for the adapter techniques.
pub fn adapt_model(id: &str, hmm: &Hmm, ctx: &Context<'_>) -> Result<AdaptedHmm> {
    let spec = ctx.spec;
    let p = ctx.params;
    let horizon = p.usize("horizon", DEFAULT_OCCUPANCY_HORIZON)?;
    let adapted = match id {
        "jud" => jud_scorer(hmm, &assignment(id, spec)?)?,
        "cmllr" => cmllr_transform(hmm, &assignment(id, spec)?)?,
        "mllr" => mllr_adapt_means(hmm, &assignment(id, spec)?)?,
        "pmc.log_add" | "pmc.log_normal" | "pmc.quadrature" => match spec {
            ObservationModelSpec::PmcLogSum(s) => pmc_adapt(hmm, s, pmc_approx(id, p)?)?,
            _ => return Err(wrong_family(id, "pmc_log_sum", spec)),
        },
        "vts" => match spec {
            ObservationModelSpec::VtsLogSum(s) => vts_adapt(hmm, s)?,
            _ => return Err(wrong_family(id, "vts_log_sum", spec)),
        },
        "rev_vts" => match spec {
            ObservationModelSpec::ReverbLogSum(s) => rev_vts_adapt(hmm, s, horizon)?,
            _ => return Err(wrong_family(id, "reverb_log_sum", spec)),
        },
        "reverb.static_prior.log_add" | "reverb.static_prior.log_normal" => match (prepare_reverb(id, hmm, spec, horizon)?, spec) {
            (ReverbAdaptation::Static(a), _) => a,
            (ReverbAdaptation::PartialPath(_), _) => unreachable!("static variant requested"),
        },
        "map" => map_adapt(hmm, ctx)?,
        "bayesian_mllr" => {
            let d = hmm.dim();
            let prior = BayesianMllrPrior {
                a_mean: p.vector("a_mean", d, 1.0)?,
                a_var: p.vector("a_var", d, 0.0)?,
                c: Moments::new(p.vector("c_mean", d, 0.0)?, Covariance::Diagonal(p.vector("c_var", d, 0.0)?))?,
            };
            bayesian_mllr_frame_scorer(hmm, &prior)?
        }
        other => {
            return Err(HarnessError::Config(format!("technique {other} scores frames at decode time and does not adapt a model")))
        }
    };
    Ok(adapted)
}

fn prepare_reverb(id: &str, hmm: &Hmm, spec: &ObservationModelSpec, horizon: usize) -> Result<ReverbAdaptation> {
    let (variant, moment) = reverb_kind(id).ok_or_else(|| HarnessError::Config(format!("unknown technique {id}")))?;
    match spec {
        ObservationModelSpec::ReverbLogSum(s) => Ok(reverb_log_add_adapt(hmm, s, variant, moment, horizon)?),
        _ => Err(wrong_family(id, "reverb_log_sum", spec)),
    }
}

#[derive(Debug, Clone)]
enum Engine {
    /// Scorer built from the base model at decode time.
    OnTheFly,
    Adapted(AdaptedHmm),
    PartialPath(ReverbAdaptation),
    NoiseHmm(PmcNoiseHmmScorer, Hmm),
}

/// Result of scoring one utterance against one class model.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassDecode {
    pub total: f64,
    /// Per-frame increments of the log score; they sum to `total` up to rounding.
    pub frame_scores: Vec<f64>,
    pub path: Option<Vec<usize>>,
    pub decoder: &'static str,
    pub invalid_frames: Vec<usize>,
}

/// A technique bound to an observation model and a set of class models.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub id: &'static str,
    spec: ObservationModelSpec,
    models: Vec<Hmm>,
    engines: Vec<Engine>,
    /// Pooled clean-speech prior used for posteriors, ion and marginalization.
    clean_prior: Gaussian,
    reliability_threshold: f64,
}

/// Equal-weight moment match of the stationary frame densities of all classes.
pub fn pooled_clean_prior(models: &[Hmm], horizon: usize) -> Result<Gaussian> {
    let per_class = models.iter().map(|m| previous_frame_statistics(m, horizon)).collect::<Result<Vec<_>, _>>()?;
    let w = vec![1.0 / per_class.len() as f64; per_class.len()];
    Ok(Gmm::new(w, per_class)?.moment_match()?)
}

impl Prepared {
    pub fn new(id: &str, params: &Map<String, Value>, spec: &ObservationModelSpec, models: &[Hmm], seed: u64) -> Result<Self> {
        let id = check_technique(id)?;
        let p = Params::new(params);
        let horizon = p.usize("horizon", DEFAULT_OCCUPANCY_HORIZON)?;
        let mut engines = Vec::with_capacity(models.len());
        for (class, hmm) in models.iter().enumerate() {
            let ctx = Context { spec, params: &p, seed, class };
            let engine = if is_adapter(id) {
                Engine::Adapted(adapt_model(id, hmm, &ctx)?)
            } else if id.starts_with("reverb.partial_path") {
                Engine::PartialPath(prepare_reverb(id, hmm, spec, horizon)?)
            } else if id == "pmc.noise_hmm" {
                let ObservationModelSpec::PmcLogSum(s) = spec else { return Err(wrong_family(id, "pmc_log_sum", spec)) };
                let noise = s.noise_hmm.clone().ok_or_else(|| HarnessError::Config("pmc.noise_hmm needs noise_hmm".into()))?;
                Engine::NoiseHmm(pmc_noise_hmm_scorer(hmm, s, pmc_approx(id, &p)?)?, noise)
            } else {
                Engine::OnTheFly
            };
            engines.push(engine);
        }
        let prepared = Self {
            id,
            spec: spec.clone(),
            models: models.to_vec(),
            engines,
            clean_prior: pooled_clean_prior(models, horizon)?,
            reliability_threshold: p.f64("reliability_threshold", 1.0)?,
        };
        if let (Some(e), Some(h)) = (prepared.engines.first(), models.first()) {
            if matches!(e, Engine::OnTheFly) {
                // surface family and parameter errors before any decoding
                prepared.with_scorer(h, |_| Ok(()))?;
            }
        }
        if evidence_kind(id) != EvidenceKind::Plain {
            additive(id, spec)?;
        }
        Ok(prepared)
    }

    pub fn models(&self) -> &[Hmm] {
        &self.models
    }

    fn with_scorer<T>(&self, hmm: &Hmm, f: impl FnOnce(&dyn EmissionScorer) -> Result<T>) -> Result<T> {
        let id = self.id;
        match id {
            "conventional" => f(&Conventional::new(hmm)),
            "arrowood" => f(&arrowood_scorer(hmm)),
            "dvc" => f(&dvc_scorer(hmm)),
            "ion" => f(&ion_scorer(hmm, self.clean_prior.clone())?),
            "modified_imputation" => f(&modified_imputation_scorer(hmm)),
            "significance" => f(&significance_scorer(hmm)),
            "missing.imputation" | "missing.marginalization" | "missing.marginalization_flat" => {
                let mode = match id {
                    "missing.imputation" => MissingFeatureMode::Imputation,
                    "missing.marginalization" => MissingFeatureMode::Marginalization,
                    _ => MissingFeatureMode::FlatMarginalization,
                };
                let marginals = Gaussian::diagonal(self.clean_prior.mean().to_vec(), self.clean_prior.cov().variances())?;
                f(&missing_feature_scorer(hmm, mode, Some(&marginals))?)
            }
            "splice.convolution" | "splice.prior_model" => {
                let ObservationModelSpec::SpliceRegions(r) = &self.spec else {
                    return Err(wrong_family(id, "splice_regions", &self.spec));
                };
                let variant = if id.ends_with("convolution") { SpliceVariant::Convolution } else { SpliceVariant::PriorModel };
                f(&splice_scorer(hmm, r, variant)?)
            }
            "takiguchi" => {
                let ObservationModelSpec::TakiguchiAr(t) = &self.spec else {
                    return Err(wrong_family(id, "takiguchi_ar", &self.spec));
                };
                f(&takiguchi_scorer(t, hmm)?)
            }
            other => Err(HarnessError::Config(format!("technique {other} has no frame scorer"))),
        }
    }

    /// Scores one utterance against class `class`.
    pub fn decode(&self, class: usize, evidence: &[FrameEvidence], scoring: Scoring) -> Result<ClassDecode> {
        let hmm = &self.models[class];
        match &self.engines[class] {
            Engine::OnTheFly => self.with_scorer(hmm, |s| run(hmm, s, evidence, scoring)),
            Engine::Adapted(a) => run(hmm, a, evidence, scoring),
            Engine::PartialPath(r) => run(hmm, r, evidence, scoring),
            Engine::NoiseHmm(j, noise) => {
                let d = viterbi_3d(hmm, noise, j, evidence)?;
                let mut frame_scores: Vec<f64> = d.frame_scores.iter().map(|s| s.get()).collect();
                for (n, f) in frame_scores.iter_mut().enumerate() {
                    *f += step(hmm, &d.speech_path, n) + step(noise, &d.noise_path, n);
                }
                Ok(ClassDecode {
                    total: d.total_log_score.get(),
                    frame_scores,
                    path: Some(d.speech_path),
                    decoder: "viterbi_3d",
                    invalid_frames: Vec::new(),
                })
            }
        }
    }

    /// Frame evidence for this technique. `clean` is needed for oracle
    /// reliability masks only.
    pub fn evidence(&self, clean: Option<&[Vec<f64>]>, observed: &[Vec<f64>]) -> Result<Vec<FrameEvidence>> {
        let kind = evidence_kind(self.id);
        let mut out = Vec::with_capacity(observed.len());
        for (n, y) in observed.iter().enumerate() {
            let e = FrameEvidence::new(y.clone());
            let e = match kind {
                EvidenceKind::Plain => e,
                EvidenceKind::Bias => e.with_uncertainty(Uncertainty::Bias(self.bias(n)?)),
                EvidenceKind::Posterior => e.with_uncertainty(Uncertainty::Posterior(self.posterior(n, y)?)),
                EvidenceKind::Reliability => {
                    let clean = clean.ok_or_else(|| {
                        HarnessError::Config(format!("{} needs clean features for oracle reliability masks", self.id))
                    })?;
                    let x = clean.get(n).ok_or_else(|| HarnessError::Config("clean and observed lengths differ".into()))?;
                    let reliable = y.iter().zip(x).map(|(y, x)| (y - x).abs() <= self.reliability_threshold).collect();
                    e.with_reliability(Reliability { reliable, imputed: Some(self.posterior(n, y)?.mean) })
                }
            };
            e.validate(y.len())?;
            out.push(e);
        }
        Ok(out)
    }

    fn bias(&self, n: usize) -> Result<Moments> {
        let a = additive(self.id, &self.spec)?;
        Ok(Moments::new(a.bias_mean.at(n)?.clone(), a.bias_cov.at(n)?.clone())?)
    }

    /// `p(x_n | y_n)` under the pooled clean prior and the additive bias.
    fn posterior(&self, n: usize, y: &[f64]) -> Result<Moments> {
        let b = self.bias(n)?;
        let centre: Vec<f64> = y.iter().zip(&b.mean).map(|(y, m)| y - m).collect();
        if b.cov.is_zero() {
            return Ok(Moments::new(centre, b.cov)?);
        }
        let (_, post) = gaussian_product(&self.clean_prior, &Gaussian::new(centre, b.cov)?)?;
        Ok(Moments::new(post.mean().to_vec(), post.cov().clone())?)
    }
}

fn step(hmm: &Hmm, path: &[usize], n: usize) -> f64 {
    if n == 0 {
        hmm.initial()[path[0]].ln()
    } else {
        hmm.transitions()[path[n - 1]][path[n]].ln()
    }
}

fn traced(hmm: &Hmm, d: DecodeResult, decoder: &'static str) -> ClassDecode {
    let frame_scores = d.frame_scores.iter().enumerate().map(|(n, s)| s.get() + step(hmm, &d.path, n)).collect();
    ClassDecode { total: d.total_log_score.get(), frame_scores, path: Some(d.path), decoder, invalid_frames: d.invalid_frames }
}

/// Picks the decoder from the scorer's needs: forward or Viterbi for
/// standard scorers, conditional or combined-order Viterbi otherwise.
pub fn run<S: EmissionScorer + ?Sized>(hmm: &Hmm, scorer: &S, evidence: &[FrameEvidence], scoring: Scoring) -> Result<ClassDecode> {
    let needs = scorer.needs();
    if needs.previous_state || needs.context_depth > 0 {
        return Ok(traced(hmm, decode_combined_order(hmm, scorer, evidence)?, "combined_order"));
    }
    if !needs.shifts.is_empty() {
        return Ok(traced(hmm, decode_conditional(hmm, scorer, evidence)?, "conditional"));
    }
    match scoring {
        Scoring::Viterbi => Ok(traced(hmm, viterbi(hmm, scorer, evidence)?, "viterbi")),
        Scoring::Forward => {
            let prefix = forward_prefix_scores(hmm, scorer, evidence)?;
            let mut prev = 0.0;
            let frame_scores = prefix
                .iter()
                .map(|p| {
                    let inc = if p.get() == prev { 0.0 } else { p.get() - prev };
                    prev = p.get();
                    inc
                })
                .collect();
            let total = prefix.last().map_or(0.0, |p| p.get());
            Ok(ClassDecode { total, frame_scores, path: None, decoder: "forward", invalid_frames: Vec::new() })
        }
    }
}

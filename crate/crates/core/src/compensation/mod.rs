//! Compensation rules: emission scorers that integrate the observation model
//! into `p(y_n | q_n)`, and adapters that rewrite the HMM parameters once
//! before decoding.

mod missing;
mod model;
mod reverb;
mod uncertainty;

pub use missing::{
    missing_feature_scorer, modified_imputation_scorer, significance_scorer, MissingFeature, MissingFeatureMode,
    ModifiedImputation, Significance,
};
pub use model::{
    bayesian_mllr_frame_scorer, cmllr_transform, linearize_log_sum, log_normal_sum, map_adapt_means,
    mllr_adapt_means, pmc_adapt, pmc_component, pmc_noise_hmm_scorer, vts_adapt, vts_component, vts_jacobian,
    AdaptationSequence, BayesianMllrPrior, MapOptions, MapOutcome, MapPrior, PmcApprox, PmcNoiseHmmScorer,
};
pub use reverb::{
    previous_frame_statistics, reverb_as_vts, reverb_log_add_adapt, rev_vts_adapt, rev_vts_component, takiguchi_scorer,
    PartialPathScorer, ReverbAdaptation, ReverbMoment, ReverbVariant, Takiguchi, DEFAULT_OCCUPANCY_HORIZON,
};
pub use uncertainty::{
    arrowood_scorer, dvc_scorer, ion_scorer, jud_scorer, splice_scorer, Arrowood, Dvc, Ion, Splice, SpliceVariant,
};

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::gauss::{Gaussian, Gmm, LogProb};
use crate::hmm::{EmissionScorer, Hmm, ScoreRequest};

/// Stable string ids of every technique, as used in configuration files.
pub const TECHNIQUES: &[&str] = &[
    "conventional",
    "arrowood",
    "dvc",
    "splice.convolution",
    "splice.prior_model",
    "jud",
    "ion",
    "missing.imputation",
    "missing.marginalization",
    "missing.marginalization_flat",
    "modified_imputation",
    "significance",
    "pmc.log_add",
    "pmc.log_normal",
    "pmc.quadrature",
    "pmc.noise_hmm",
    "vts",
    "cmllr",
    "mllr",
    "map",
    "bayesian_mllr",
    "rev_vts",
    "reverb.static_prior.log_add",
    "reverb.static_prior.log_normal",
    "reverb.partial_path.log_add",
    "reverb.partial_path.log_normal",
    "takiguchi",
];

/// Technique tag plus the parameters it was run with.
#[derive(Debug, Clone, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Provenance {
    pub technique: String,
    pub parameters: BTreeMap<String, String>,
}

impl Provenance {
    pub fn new(technique: &str) -> Self {
        Self { technique: technique.into(), parameters: BTreeMap::new() }
    }

    pub fn with(mut self, key: &str, value: impl core::fmt::Display) -> Self {
        self.parameters.insert(key.into(), alloc::format!("{value}"));
        self
    }
}

/// HMM with replaced emission parameters and unchanged topology.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AdaptedHmm {
    pub base: Hmm,
    pub adapted: Hmm,
    pub provenance: Provenance,
}

impl AdaptedHmm {
    /// Replaces every component through `f(state, component, gaussian)`;
    /// mixture weights and transitions are kept.
    pub fn map_components(
        base: &Hmm,
        provenance: Provenance,
        mut f: impl FnMut(usize, usize, &Gaussian) -> Result<Gaussian>,
    ) -> Result<Self> {
        let mut emissions = Vec::with_capacity(base.num_states());
        for (q, gmm) in base.emissions().iter().enumerate() {
            let comps = gmm
                .components()
                .iter()
                .enumerate()
                .map(|(k, g)| f(q, k, g))
                .collect::<Result<Vec<_>>>()?;
            emissions.push(gmm.with_components(comps)?);
        }
        Ok(Self { base: base.clone(), adapted: base.with_emissions(emissions)?, provenance })
    }

    pub fn identity(base: &Hmm, provenance: Provenance) -> Self {
        Self { base: base.clone(), adapted: base.clone(), provenance }
    }
}

impl EmissionScorer for AdaptedHmm {
    fn score(&self, req: &ScoreRequest<'_>) -> Result<LogProb> {
        crate::hmm::Conventional::new(&self.adapted).score(req)
    }
}

/// Mixes per-component scores, or returns the single requested component.
pub(crate) fn per_component(
    gmm: &Gmm,
    component: Option<usize>,
    f: impl Fn(usize, &Gaussian) -> Result<f64>,
) -> Result<LogProb> {
    match component {
        Some(k) => {
            let g = gmm.components().get(k).ok_or(Error::InvalidParameter(alloc::format!("no component {k}")))?;
            LogProb::new(f(k, g)?)
        }
        None => gmm.mix(f),
    }
}

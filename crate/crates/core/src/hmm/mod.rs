//! Hidden Markov models with mixture emissions, the emission-scorer contract
//! and the dynamic-programming decoders built on it.

mod decode;
mod evidence;
mod scorer;
mod train;

pub use decode::{
    decode_combined_order, decode_conditional, forward_log_score, forward_prefix_scores, state_posteriors, viterbi, viterbi_3d, Decode3d,
    DecodeResult, DecoderKind, JointScorer, MAX_PRODUCT_STATES,
};
pub use evidence::{FrameEvidence, Moments, Reliability, Uncertainty};
pub use scorer::{Conventional, EmissionScorer, FnScorer, Needs, ScoreRequest, ScoreTable};
pub use train::{train_ml, LabeledSequence, TrainOptions, TrainOutcome};

use alloc::string::String;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::gauss::{validate_distribution, Gmm};
use crate::linalg::check_dim;

/// Left-to-right or ergodic HMM with per-state Gaussian-mixture emissions.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(try_from = "HmmRepr", into = "HmmRepr")
)]
pub struct Hmm {
    model_id: String,
    initial: Vec<f64>,
    transitions: Vec<Vec<f64>>,
    emissions: Vec<Gmm>,
}

#[cfg(feature = "serde")]
#[derive(serde::Serialize, serde::Deserialize)]
struct HmmRepr {
    model_id: String,
    initial: Vec<f64>,
    transitions: Vec<Vec<f64>>,
    emissions: Vec<Gmm>,
}

#[cfg(feature = "serde")]
impl TryFrom<HmmRepr> for Hmm {
    type Error = Error;

    fn try_from(r: HmmRepr) -> Result<Self> {
        Hmm::new(r.model_id, r.initial, r.transitions, r.emissions)
    }
}

#[cfg(feature = "serde")]
impl From<Hmm> for HmmRepr {
    fn from(h: Hmm) -> Self {
        HmmRepr { model_id: h.model_id, initial: h.initial, transitions: h.transitions, emissions: h.emissions }
    }
}

impl Hmm {
    pub fn new(
        model_id: impl Into<String>,
        initial: Vec<f64>,
        transitions: Vec<Vec<f64>>,
        emissions: Vec<Gmm>,
    ) -> Result<Self> {
        let s = initial.len();
        if s == 0 {
            return Err(Error::Empty("HMM states"));
        }
        validate_distribution(&initial, "initial distribution")?;
        check_dim(s, transitions.len())?;
        for (i, row) in transitions.iter().enumerate() {
            check_dim(s, row.len())?;
            validate_distribution(row, &alloc::format!("transition row {i}"))?;
        }
        check_dim(s, emissions.len())?;
        let d = emissions[0].dim();
        for e in &emissions {
            check_dim(d, e.dim())?;
        }
        Ok(Self { model_id: model_id.into(), initial, transitions, emissions })
    }

    pub fn model_id(&self) -> &str {
        &self.model_id
    }

    pub fn num_states(&self) -> usize {
        self.initial.len()
    }

    /// Feature dimension shared by all emissions.
    pub fn dim(&self) -> usize {
        self.emissions[0].dim()
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    pub fn transitions(&self) -> &[Vec<f64>] {
        &self.transitions
    }

    pub fn emissions(&self) -> &[Gmm] {
        &self.emissions
    }

    pub fn emission(&self, state: usize) -> &Gmm {
        &self.emissions[state]
    }

    pub(crate) fn log_initial(&self) -> Vec<f64> {
        self.initial.iter().map(|p| p.ln()).collect()
    }

    pub(crate) fn log_transitions(&self) -> Vec<Vec<f64>> {
        self.transitions.iter().map(|r| r.iter().map(|p| p.ln()).collect()).collect()
    }

    /// Same topology, replaced emissions.
    pub fn with_emissions(&self, emissions: Vec<Gmm>) -> Result<Self> {
        Self::new(self.model_id.clone(), self.initial.clone(), self.transitions.clone(), emissions)
    }

    pub fn with_model_id(mut self, model_id: impl Into<String>) -> Self {
        self.model_id = model_id.into();
        self
    }

    /// Product-state HMM of two independent chains. State `q * S_other + r`
    /// pairs state `q` of `self` with state `r` of `other`; emissions are
    /// copied from `self`.
    pub fn product(&self, other: &Hmm) -> Result<Hmm> {
        let (s, r) = (self.num_states(), other.num_states());
        let n = s.checked_mul(r).ok_or(Error::StateSpaceTooLarge { states: usize::MAX, limit: MAX_PRODUCT_STATES })?;
        if n > MAX_PRODUCT_STATES {
            return Err(Error::StateSpaceTooLarge { states: n, limit: MAX_PRODUCT_STATES });
        }
        let mut initial = Vec::with_capacity(n);
        let mut emissions = Vec::with_capacity(n);
        for q in 0..s {
            for b in 0..r {
                initial.push(self.initial[q] * other.initial[b]);
                emissions.push(self.emissions[q].clone());
            }
        }
        let mut transitions = Vec::with_capacity(n);
        for q in 0..s {
            for b in 0..r {
                let mut row = Vec::with_capacity(n);
                for q2 in 0..s {
                    for b2 in 0..r {
                        row.push(self.transitions[q][q2] * other.transitions[b][b2]);
                    }
                }
                transitions.push(renormalize(row));
            }
        }
        Hmm::new(
            alloc::format!("{}x{}", self.model_id, other.model_id),
            renormalize(initial),
            transitions,
            emissions,
        )
    }

    /// Time-averaged state marginal `1/T Σ_{n=1..T} p(q_n)` over `horizon` steps
    /// from the initial distribution. Defined for any chain, periodic or absorbing.
    pub fn state_occupancy(&self, horizon: usize) -> Vec<f64> {
        let s = self.num_states();
        let mut p = self.initial.clone();
        let mut acc = alloc::vec![0.0; s];
        let steps = horizon.max(1);
        for _ in 0..steps {
            for (a, v) in acc.iter_mut().zip(&p) {
                *a += v;
            }
            let mut next = alloc::vec![0.0; s];
            for (i, pi) in p.iter().enumerate() {
                for (j, t) in self.transitions[i].iter().enumerate() {
                    next[j] += pi * t;
                }
            }
            p = next;
        }
        let total: f64 = acc.iter().sum();
        acc.iter().map(|a| a / total).collect()
    }
}

/// Rescales products of probabilities so rounding does not break the sum-to-one check.
fn renormalize(mut v: Vec<f64>) -> Vec<f64> {
    let total: f64 = v.iter().sum();
    if total > 0.0 {
        v.iter_mut().for_each(|x| *x /= total);
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gauss::Gaussian;
    use alloc::vec;

    pub(crate) fn toy() -> Hmm {
        let e = |m: f64| Gmm::single(Gaussian::diagonal(vec![m], vec![1.0]).unwrap());
        Hmm::new("toy", vec![0.6, 0.4], vec![vec![0.7, 0.3], vec![0.2, 0.8]], vec![e(0.0), e(2.0)]).unwrap()
    }

    #[test]
    fn rejects_bad_rows() {
        let e = Gmm::single(Gaussian::standard(1));
        assert!(Hmm::new("x", vec![1.0], vec![vec![0.9]], vec![e.clone()]).is_err());
        assert!(Hmm::new("x", vec![0.5], vec![vec![1.0]], vec![e.clone()]).is_err());
        assert!(Hmm::new("x", vec![1.0], vec![vec![1.0]], vec![]).is_err());
        let e2 = Gmm::single(Gaussian::standard(2));
        assert!(Hmm::new("x", vec![0.5, 0.5], vec![vec![0.5, 0.5]; 2], vec![e, e2]).is_err());
    }

    #[test]
    fn product_is_row_stochastic() {
        let h = toy();
        let p = h.product(&h).unwrap();
        assert_eq!(p.num_states(), 4);
        assert!((p.transitions()[1][2] - 0.3 * 0.2).abs() < 1e-15);
    }

    #[test]
    fn occupancy_of_ergodic_chain_approaches_stationary() {
        let occ = toy().state_occupancy(100_000);
        // Stationary distribution of [[0.7,0.3],[0.2,0.8]] is (0.4, 0.6).
        assert!((occ[0] - 0.4).abs() < 1e-4);
        assert!((occ[1] - 0.6).abs() < 1e-4);
    }
}

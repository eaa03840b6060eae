use alloc::vec::Vec;

use super::{FrameEvidence, Hmm};
use crate::error::{Error, Result};
use crate::gauss::LogProb;

/// Optional inputs an emission scorer consumes beyond `(frame, state, evidence)`.
///
/// Decoders check these declarations before running and refuse scorers whose
/// needs they cannot satisfy.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Needs {
    /// Score depends on `q_{n-1}` (combined-order topology).
    pub previous_state: bool,
    /// Past observations `y_{n-ψ}` the score is conditioned on.
    pub shifts: Vec<usize>,
    /// Number of best-partial-path states the scorer reads from the decoder.
    pub context_depth: usize,
}

impl Needs {
    pub fn is_standard(&self) -> bool {
        !self.previous_state && self.shifts.is_empty() && self.context_depth == 0
    }
}

/// Arguments of one emission evaluation.
#[derive(Debug, Clone, Copy)]
pub struct ScoreRequest<'a> {
    pub frame: usize,
    pub state: usize,
    /// Restricts mixture scoring to one component when set.
    pub component: Option<usize>,
    pub previous_state: Option<usize>,
    pub evidence: &'a FrameEvidence,
    /// One entry per declared shift; `None` before the start of the sequence.
    pub past: &'a [Option<&'a FrameEvidence>],
    /// Best partial path ending in the predecessor, most recent state first.
    pub context: &'a [usize],
}

impl<'a> ScoreRequest<'a> {
    pub fn new(frame: usize, state: usize, evidence: &'a FrameEvidence) -> Self {
        Self { frame, state, component: None, previous_state: None, evidence, past: &[], context: &[] }
    }

    pub fn with_component(mut self, k: usize) -> Self {
        self.component = Some(k);
        self
    }
}

/// Frame-level emission score `log p(y_n | q_n, ...)` (or a scaled variant).
///
/// Implementations must be pure: equal requests give equal results.
pub trait EmissionScorer {
    fn needs(&self) -> Needs {
        Needs::default()
    }

    fn score(&self, req: &ScoreRequest<'_>) -> Result<LogProb>;
}

impl<S: EmissionScorer + ?Sized> EmissionScorer for &S {
    fn needs(&self) -> Needs {
        (**self).needs()
    }

    fn score(&self, req: &ScoreRequest<'_>) -> Result<LogProb> {
        (**self).score(req)
    }
}

/// Plugs the observation straight into the clean emission mixtures.
#[derive(Debug, Clone, Copy)]
pub struct Conventional<'a> {
    hmm: &'a Hmm,
}

impl<'a> Conventional<'a> {
    pub fn new(hmm: &'a Hmm) -> Self {
        Self { hmm }
    }
}

impl EmissionScorer for Conventional<'_> {
    fn score(&self, req: &ScoreRequest<'_>) -> Result<LogProb> {
        let gmm = self.hmm.emission(req.state);
        match req.component {
            Some(k) => gmm.components()[k].logpdf(&req.evidence.observed),
            None => gmm.logpdf(&req.evidence.observed),
        }
    }
}

/// Hand-set scores indexed by `[frame][state]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable {
    pub scores: Vec<Vec<f64>>,
}

impl EmissionScorer for ScoreTable {
    fn score(&self, req: &ScoreRequest<'_>) -> Result<LogProb> {
        let v = self
            .scores
            .get(req.frame)
            .and_then(|r| r.get(req.state))
            .ok_or(Error::InvalidParameter("score table too small".into()))?;
        LogProb::new(*v)
    }
}

/// Adapts a closure to [`EmissionScorer`].
pub struct FnScorer<F> {
    f: F,
    needs: Needs,
}

impl<F> FnScorer<F>
where
    F: Fn(&ScoreRequest<'_>) -> Result<LogProb>,
{
    pub fn new(f: F) -> Self {
        Self { f, needs: Needs::default() }
    }

    pub fn with_needs(f: F, needs: Needs) -> Self {
        Self { f, needs }
    }
}

impl<F> EmissionScorer for FnScorer<F>
where
    F: Fn(&ScoreRequest<'_>) -> Result<LogProb>,
{
    fn needs(&self) -> Needs {
        self.needs.clone()
    }

    fn score(&self, req: &ScoreRequest<'_>) -> Result<LogProb> {
        (self.f)(req)
    }
}

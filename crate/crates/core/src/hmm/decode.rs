use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use super::{EmissionScorer, FrameEvidence, Hmm, ScoreRequest};
use crate::error::{Error, Result};
use crate::gauss::{lse, LogProb};

/// Largest product state space [`viterbi_3d`] accepts.
pub const MAX_PRODUCT_STATES: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "snake_case"))]
pub enum DecoderKind {
    Viterbi,
    Conditional,
    CombinedOrder,
    Viterbi3d,
}

/// Best state path with its joint log-score and the emission score of every frame on it.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct DecodeResult {
    pub path: Vec<usize>,
    pub total_log_score: LogProb,
    pub frame_scores: Vec<LogProb>,
    pub decoder_kind: DecoderKind,
    /// Frames on which the scorer reported an observation outside its valid region
    /// (scored as `-inf`).
    pub invalid_frames: Vec<usize>,
}

/// Scores an emission, turning invalid observations into `-inf` plus a diagnostic.
fn eval<S: EmissionScorer + ?Sized>(scorer: &S, req: &ScoreRequest<'_>, invalid: &mut Vec<usize>) -> Result<f64> {
    match scorer.score(req) {
        Ok(v) => Ok(v.get()),
        Err(Error::InvalidObservation { .. }) => {
            invalid.push(req.frame);
            Ok(f64::NEG_INFINITY)
        }
        Err(e) => Err(e),
    }
}

fn check_evidence(hmm: &Hmm, evidence: &[FrameEvidence]) -> Result<()> {
    if evidence.is_empty() {
        return Err(Error::Empty("evidence sequence"));
    }
    for e in evidence {
        e.validate(hmm.dim())?;
    }
    Ok(())
}

fn check_shifts(shifts: &[usize]) -> Result<()> {
    if shifts.contains(&0) {
        return Err(Error::InvalidParameter("conditioning shifts must be >= 1".into()));
    }
    Ok(())
}

fn past_frames<'a>(evidence: &'a [FrameEvidence], n: usize, shifts: &[usize]) -> Vec<Option<&'a FrameEvidence>> {
    shifts.iter().map(|&s| n.checked_sub(s).map(|i| &evidence[i])).collect()
}

/// Index of the maximum, lowest index on ties.
fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// `log Σ_{q_{1:N}} Π_n p(y_n|q_n) p(q_n|q_{n-1})` by the forward recursion.
pub fn forward_log_score<S: EmissionScorer + ?Sized>(
    hmm: &Hmm,
    scorer: &S,
    evidence: &[FrameEvidence],
) -> Result<LogProb> {
    let alpha = forward_table(hmm, scorer, evidence)?;
    LogProb::new(lse(alpha.last().expect("non-empty")))
}

/// `log p(y_{1:n})` for every prefix; the last entry equals [`forward_log_score`].
pub fn forward_prefix_scores<S: EmissionScorer + ?Sized>(
    hmm: &Hmm,
    scorer: &S,
    evidence: &[FrameEvidence],
) -> Result<Vec<LogProb>> {
    forward_table(hmm, scorer, evidence)?.iter().map(|a| LogProb::new(lse(a))).collect()
}

fn emission_table<S: EmissionScorer + ?Sized>(
    hmm: &Hmm,
    scorer: &S,
    evidence: &[FrameEvidence],
) -> Result<Vec<Vec<f64>>> {
    if !scorer.needs().is_standard() {
        return Err(Error::IncompatibleScorer("standard topology cannot supply previous states, past frames or context"));
    }
    check_evidence(hmm, evidence)?;
    let mut invalid = Vec::new();
    evidence
        .iter()
        .enumerate()
        .map(|(n, e)| {
            (0..hmm.num_states()).map(|q| eval(scorer, &ScoreRequest::new(n, q, e), &mut invalid)).collect()
        })
        .collect()
}

fn forward_table<S: EmissionScorer + ?Sized>(
    hmm: &Hmm,
    scorer: &S,
    evidence: &[FrameEvidence],
) -> Result<Vec<Vec<f64>>> {
    let emit = emission_table(hmm, scorer, evidence)?;
    let s = hmm.num_states();
    let log_init = hmm.log_initial();
    let log_trans = hmm.log_transitions();
    let mut alpha: Vec<Vec<f64>> = Vec::with_capacity(evidence.len());
    alpha.push((0..s).map(|q| log_init[q] + emit[0][q]).collect());
    let mut terms = vec![0.0; s];
    for n in 1..evidence.len() {
        let prev = &alpha[n - 1];
        let row = (0..s)
            .map(|q| {
                for (p, t) in terms.iter_mut().enumerate() {
                    *t = prev[p] + log_trans[p][q];
                }
                lse(&terms) + emit[n][q]
            })
            .collect();
        alpha.push(row);
    }
    Ok(alpha)
}

/// Per-frame state posteriors `p(q_n | y_{1:N})` by forward-backward, with the
/// total log-score.
pub fn state_posteriors<S: EmissionScorer + ?Sized>(
    hmm: &Hmm,
    scorer: &S,
    evidence: &[FrameEvidence],
) -> Result<(Vec<Vec<f64>>, LogProb)> {
    let emit = emission_table(hmm, scorer, evidence)?;
    let alpha = forward_table(hmm, scorer, evidence)?;
    let s = hmm.num_states();
    let n_frames = evidence.len();
    let log_trans = hmm.log_transitions();
    let mut beta = vec![vec![0.0; s]; n_frames];
    let mut terms = vec![0.0; s];
    for n in (0..n_frames - 1).rev() {
        for p in 0..s {
            for (q, t) in terms.iter_mut().enumerate() {
                *t = log_trans[p][q] + emit[n + 1][q] + beta[n + 1][q];
            }
            beta[n][p] = lse(&terms);
        }
    }
    let total = lse(&alpha[n_frames - 1]);
    if total == f64::NEG_INFINITY {
        return Err(Error::Numeric("sequence has zero likelihood under the model"));
    }
    let gamma = (0..n_frames)
        .map(|n| (0..s).map(|q| (alpha[n][q] + beta[n][q] - total).exp()).collect())
        .collect();
    Ok((gamma, LogProb::new(total)?))
}

/// Max-product decoding over the standard HMM topology.
pub fn viterbi<S: EmissionScorer + ?Sized>(hmm: &Hmm, scorer: &S, evidence: &[FrameEvidence]) -> Result<DecodeResult> {
    if !scorer.needs().is_standard() {
        return Err(Error::IncompatibleScorer("viterbi supports scorers without extra dependencies only"));
    }
    dp(hmm, scorer, evidence, DecoderKind::Viterbi)
}

/// Viterbi for conditional (autoregressive) HMMs: the scorer receives past
/// observations at its declared shifts, `None` where the shift reaches before
/// the first frame.
pub fn decode_conditional<S: EmissionScorer + ?Sized>(
    hmm: &Hmm,
    scorer: &S,
    evidence: &[FrameEvidence],
) -> Result<DecodeResult> {
    let needs = scorer.needs();
    if needs.previous_state || needs.context_depth > 0 {
        return Err(Error::IncompatibleScorer("conditional decoding does not supply previous states or context"));
    }
    check_shifts(&needs.shifts)?;
    dp(hmm, scorer, evidence, DecoderKind::Conditional)
}

/// Viterbi for combined-order HMMs: the DP edge `q_{n-1} → q_n` carries
/// `p(y_n | q_n, q_{n-1})`. The decoder also publishes the best partial path
/// ending in the predecessor as context.
pub fn decode_combined_order<S: EmissionScorer + ?Sized>(
    hmm: &Hmm,
    scorer: &S,
    evidence: &[FrameEvidence],
) -> Result<DecodeResult> {
    check_shifts(&scorer.needs().shifts)?;
    dp(hmm, scorer, evidence, DecoderKind::CombinedOrder)
}

fn dp<S: EmissionScorer + ?Sized>(
    hmm: &Hmm,
    scorer: &S,
    evidence: &[FrameEvidence],
    kind: DecoderKind,
) -> Result<DecodeResult> {
    check_evidence(hmm, evidence)?;
    let needs = scorer.needs();
    let edge_dependent = needs.previous_state || needs.context_depth > 0;
    let s = hmm.num_states();
    let n_frames = evidence.len();
    let log_init = hmm.log_initial();
    let log_trans = hmm.log_transitions();
    let mut invalid = Vec::new();

    let mut delta = vec![vec![f64::NEG_INFINITY; s]; n_frames];
    let mut back = vec![vec![0usize; s]; n_frames];
    let mut chosen_emit = vec![vec![f64::NEG_INFINITY; s]; n_frames];

    let past0 = past_frames(evidence, 0, &needs.shifts);
    for q in 0..s {
        let req = ScoreRequest { past: &past0, ..ScoreRequest::new(0, q, &evidence[0]) };
        let e = eval(scorer, &req, &mut invalid)?;
        chosen_emit[0][q] = e;
        delta[0][q] = log_init[q] + e;
    }

    let mut cand = vec![f64::NEG_INFINITY; s];
    let mut edge_emit = vec![f64::NEG_INFINITY; s];
    for n in 1..n_frames {
        let past = past_frames(evidence, n, &needs.shifts);
        let histories: Vec<Vec<usize>> = if needs.context_depth > 0 {
            (0..s).map(|p| trace(&back, n - 1, p, needs.context_depth)).collect()
        } else {
            Vec::new()
        };
        for q in 0..s {
            if edge_dependent {
                for p in 0..s {
                    let reach = delta[n - 1][p] + log_trans[p][q];
                    if reach == f64::NEG_INFINITY {
                        cand[p] = f64::NEG_INFINITY;
                        edge_emit[p] = f64::NEG_INFINITY;
                        continue;
                    }
                    let req = ScoreRequest {
                        previous_state: Some(p),
                        past: &past,
                        context: histories.get(p).map(Vec::as_slice).unwrap_or(&[]),
                        ..ScoreRequest::new(n, q, &evidence[n])
                    };
                    let e = eval(scorer, &req, &mut invalid)?;
                    edge_emit[p] = e;
                    cand[p] = reach + e;
                }
                let best = argmax(&cand);
                back[n][q] = best;
                delta[n][q] = cand[best];
                chosen_emit[n][q] = edge_emit[best];
            } else {
                for p in 0..s {
                    cand[p] = delta[n - 1][p] + log_trans[p][q];
                }
                let best = argmax(&cand);
                let req = ScoreRequest { past: &past, ..ScoreRequest::new(n, q, &evidence[n]) };
                let e = eval(scorer, &req, &mut invalid)?;
                back[n][q] = best;
                delta[n][q] = cand[best] + e;
                chosen_emit[n][q] = e;
            }
        }
    }

    let last = argmax(&delta[n_frames - 1]);
    let mut path = vec![0; n_frames];
    path[n_frames - 1] = last;
    for n in (1..n_frames).rev() {
        path[n - 1] = back[n][path[n]];
    }
    let frame_scores = path
        .iter()
        .enumerate()
        .map(|(n, &q)| LogProb::new(chosen_emit[n][q]))
        .collect::<Result<Vec<_>>>()?;
    invalid.sort_unstable();
    invalid.dedup();
    Ok(DecodeResult {
        path,
        total_log_score: LogProb::new(delta[n_frames - 1][last])?,
        frame_scores,
        decoder_kind: kind,
        invalid_frames: invalid,
    })
}

/// Best partial path ending at `(frame, state)`, most recent first, at most `depth` states.
fn trace(back: &[Vec<usize>], frame: usize, state: usize, depth: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(depth);
    let mut q = state;
    let mut n = frame;
    loop {
        out.push(q);
        if out.len() == depth || n == 0 {
            break;
        }
        q = back[n][q];
        n -= 1;
    }
    out
}

/// Joint emission `p(y_n | q_n, q̆_n)` for speech/noise state pairs.
pub trait JointScorer {
    fn score(&self, frame: usize, speech_state: usize, noise_state: usize, evidence: &FrameEvidence) -> Result<LogProb>;
}

impl<F> JointScorer for F
where
    F: Fn(usize, usize, usize, &FrameEvidence) -> Result<LogProb>,
{
    fn score(&self, frame: usize, speech_state: usize, noise_state: usize, evidence: &FrameEvidence) -> Result<LogProb> {
        self(frame, speech_state, noise_state, evidence)
    }
}

/// Result of joint speech/noise decoding.
#[derive(Debug, Clone, PartialEq)]
pub struct Decode3d {
    pub speech_path: Vec<usize>,
    pub noise_path: Vec<usize>,
    pub total_log_score: LogProb,
    pub frame_scores: Vec<LogProb>,
}

/// Viterbi over the product of speech and noise state spaces.
///
/// Product state `q * S_noise + q̆` is the DP index, so ties resolve toward the
/// lower speech state, then the lower noise state.
pub fn viterbi_3d<J: JointScorer + ?Sized>(
    speech: &Hmm,
    noise: &Hmm,
    joint: &J,
    evidence: &[FrameEvidence],
) -> Result<Decode3d> {
    let (ss, sn) = (speech.num_states(), noise.num_states());
    let total = ss.checked_mul(sn).unwrap_or(usize::MAX);
    if total > MAX_PRODUCT_STATES {
        return Err(Error::StateSpaceTooLarge { states: total, limit: MAX_PRODUCT_STATES });
    }
    check_evidence(speech, evidence)?;
    let n_frames = evidence.len();
    let (li_s, lt_s) = (speech.log_initial(), speech.log_transitions());
    let (li_n, lt_n) = (noise.log_initial(), noise.log_transitions());
    let mut emit = vec![0.0; total];
    let score_frame = |n: usize, emit: &mut [f64]| -> Result<()> {
        for q in 0..ss {
            for r in 0..sn {
                emit[q * sn + r] = joint.score(n, q, r, &evidence[n])?.get();
            }
        }
        Ok(())
    };

    score_frame(0, &mut emit)?;
    let mut delta: Vec<f64> = (0..total).map(|i| li_s[i / sn] + li_n[i % sn] + emit[i]).collect();
    let mut emits = vec![emit.clone()];
    let mut back: Vec<Vec<usize>> = vec![vec![0; total]];
    let mut cand = vec![0.0; total];
    for n in 1..n_frames {
        score_frame(n, &mut emit)?;
        let mut next = vec![f64::NEG_INFINITY; total];
        let mut bp = vec![0; total];
        for i in 0..total {
            let (q, r) = (i / sn, i % sn);
            for j in 0..total {
                cand[j] = delta[j] + (lt_s[j / sn][q] + lt_n[j % sn][r]);
            }
            let best = argmax(&cand);
            bp[i] = best;
            next[i] = cand[best] + emit[i];
        }
        delta = next;
        back.push(bp);
        emits.push(emit.clone());
    }
    let last = argmax(&delta);
    let mut joint_path = vec![0; n_frames];
    joint_path[n_frames - 1] = last;
    for n in (1..n_frames).rev() {
        joint_path[n - 1] = back[n][joint_path[n]];
    }
    Ok(Decode3d {
        speech_path: joint_path.iter().map(|i| i / sn).collect(),
        noise_path: joint_path.iter().map(|i| i % sn).collect(),
        total_log_score: LogProb::new(delta[last])?,
        frame_scores: joint_path.iter().enumerate().map(|(n, &i)| LogProb::new(emits[n][i])).collect::<Result<_>>()?,
    })
}

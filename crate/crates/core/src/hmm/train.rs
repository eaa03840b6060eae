//! Maximum-likelihood training from state-labelled sequences (Viterbi training
//! with fixed alignments): transitions from alignment counts, emissions by
//! per-state expectation-maximization.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use super::Hmm;
use crate::error::{Error, Result};
use crate::gauss::{lse, Gaussian, Gmm};
use crate::linalg::{check_dim, Covariance, Matrix};

/// Clean feature frames with their state alignment.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSequence {
    pub frames: Vec<Vec<f64>>,
    pub states: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainOptions {
    pub max_iterations: usize,
    /// Relative change of the total log-likelihood below which EM stops.
    pub tolerance: f64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self { max_iterations: 10, tolerance: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub hmm: Hmm,
    /// Total data log-likelihood before the first and after every EM iteration.
    pub log_likelihood: Vec<f64>,
}

/// Re-estimates `skeleton` from labelled data.
///
/// Emission EM starts from the skeleton's own mixture parameters. States that
/// never occur in the alignments keep the skeleton emission; transition rows
/// (and the initial distribution) without counts keep the skeleton row.
pub fn train_ml(skeleton: &Hmm, data: &[LabeledSequence], opts: TrainOptions) -> Result<TrainOutcome> {
    let s = skeleton.num_states();
    let d = skeleton.dim();
    let mut per_state: Vec<Vec<&[f64]>> = vec![Vec::new(); s];
    let mut counts = vec![vec![0.0; s]; s];
    let mut first = vec![0.0; s];
    for seq in data {
        check_dim(seq.frames.len(), seq.states.len())?;
        for (n, (x, &q)) in seq.frames.iter().zip(&seq.states).enumerate() {
            if q >= s {
                return Err(Error::InvalidParameter(alloc::format!("state label {q} out of range")));
            }
            check_dim(d, x.len())?;
            per_state[q].push(x);
            if n == 0 {
                first[q] += 1.0;
            } else {
                counts[seq.states[n - 1]][q] += 1.0;
            }
        }
    }

    let initial = normalize_or(&first, skeleton.initial());
    let transitions: Vec<Vec<f64>> =
        counts.iter().zip(skeleton.transitions()).map(|(c, fallback)| normalize_or(c, fallback)).collect();
    let label_ll: f64 = first
        .iter()
        .zip(&initial)
        .chain(counts.iter().flatten().zip(transitions.iter().flatten()))
        .filter(|(c, _)| **c > 0.0)
        .map(|(c, p)| c * p.ln())
        .sum();

    let mut emissions: Vec<Gmm> = skeleton.emissions().to_vec();
    let emission_ll = |em: &[Gmm]| -> Result<f64> {
        let mut acc = 0.0;
        for (q, xs) in per_state.iter().enumerate() {
            for x in xs {
                acc += em[q].logpdf(x)?.get();
            }
        }
        Ok(acc)
    };

    let mut trace = vec![label_ll + emission_ll(&emissions)?];
    for _ in 0..opts.max_iterations {
        for (q, xs) in per_state.iter().enumerate() {
            if !xs.is_empty() {
                emissions[q] = em_step(&emissions[q], xs)?;
            }
        }
        let ll = label_ll + emission_ll(&emissions)?;
        let prev = *trace.last().expect("non-empty");
        trace.push(ll);
        if ((ll - prev) / prev.abs().max(1e-300)).abs() < opts.tolerance {
            break;
        }
    }

    let hmm = Hmm::new(skeleton.model_id(), initial, transitions, emissions)?;
    Ok(TrainOutcome { hmm, log_likelihood: trace })
}

fn normalize_or(counts: &[f64], fallback: &[f64]) -> Vec<f64> {
    let total: f64 = counts.iter().sum();
    if total > 0.0 {
        counts.iter().map(|c| c / total).collect()
    } else {
        fallback.to_vec()
    }
}

/// One EM iteration for a mixture on a fixed set of frames.
fn em_step(gmm: &Gmm, xs: &[&[f64]]) -> Result<Gmm> {
    let k = gmm.len();
    let d = gmm.dim();
    let log_w: Vec<f64> = gmm.weights().iter().map(|w| w.ln()).collect();
    // Responsibilities.
    let mut resp = vec![vec![0.0; k]; xs.len()];
    let mut terms = vec![0.0; k];
    for (i, x) in xs.iter().enumerate() {
        for (j, g) in gmm.components().iter().enumerate() {
            terms[j] = log_w[j] + g.logpdf(x)?.get();
        }
        let norm = lse(&terms);
        for j in 0..k {
            resp[i][j] = if norm == f64::NEG_INFINITY { 1.0 / k as f64 } else { (terms[j] - norm).exp() };
        }
    }
    let full = gmm.components().iter().any(|g| !g.cov().is_diagonal());
    let mut weights = Vec::with_capacity(k);
    let mut comps = Vec::with_capacity(k);
    for j in 0..k {
        let occ: f64 = resp.iter().map(|r| r[j]).sum();
        weights.push(occ / xs.len() as f64);
        if occ <= 0.0 {
            comps.push(gmm.components()[j].clone());
            continue;
        }
        let mut mean = vec![0.0; d];
        for (r, x) in resp.iter().zip(xs) {
            for (m, v) in mean.iter_mut().zip(x.iter()) {
                *m += r[j] * v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= occ);
        let cov = if full {
            let mut c = Matrix::zeros(d);
            for (r, x) in resp.iter().zip(xs) {
                for a in 0..d {
                    for b in 0..d {
                        c.set(a, b, c.get(a, b) + r[j] * (x[a] - mean[a]) * (x[b] - mean[b]));
                    }
                }
            }
            for a in 0..d {
                for b in 0..d {
                    c.set(a, b, c.get(a, b) / occ);
                }
            }
            Covariance::Full(c)
        } else {
            let mut v = vec![0.0; d];
            for (r, x) in resp.iter().zip(xs) {
                for a in 0..d {
                    v[a] += r[j] * (x[a] - mean[a]) * (x[a] - mean[a]);
                }
            }
            Covariance::Diagonal(v.into_iter().map(|s| s / occ).collect())
        };
        comps.push(Gaussian::new(mean, cov)?);
    }
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    Gmm::new(weights, comps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn single_gaussian_sample_mean() {
        let sk = Hmm::new("s", vec![1.0], vec![vec![1.0]], vec![Gmm::single(Gaussian::standard(1))]).unwrap();
        let data = [LabeledSequence { frames: vec![vec![0.0], vec![2.0]], states: vec![0, 0] }];
        let out = train_ml(&sk, &data, TrainOptions::default()).unwrap();
        let g = &out.hmm.emission(0).components()[0];
        assert_relative_eq!(g.mean()[0], 1.0);
        assert_relative_eq!(g.cov().variances()[0], 1.0);
    }

    #[test]
    fn unseen_state_keeps_prior_parameters() {
        let e0 = Gmm::single(Gaussian::diagonal(vec![5.0], vec![2.0]).unwrap());
        let sk = Hmm::new("s", vec![0.5, 0.5], vec![vec![0.5, 0.5], vec![0.5, 0.5]], vec![Gmm::single(Gaussian::standard(1)), e0.clone()])
            .unwrap();
        let data = [LabeledSequence { frames: vec![vec![0.0], vec![1.0]], states: vec![0, 0] }];
        let out = train_ml(&sk, &data, TrainOptions::default()).unwrap();
        assert_eq!(out.hmm.emission(1), &e0);
        assert_eq!(out.hmm.transitions()[0], vec![1.0, 0.0]);
        assert_eq!(out.hmm.transitions()[1], vec![0.5, 0.5]);
    }

    #[test]
    fn em_log_likelihood_non_decreasing_for_mixtures() {
        let g = |m: f64| Gaussian::diagonal(vec![m], vec![1.0]).unwrap();
        let sk = Hmm::new("s", vec![1.0], vec![vec![1.0]], vec![Gmm::new(vec![0.5, 0.5], vec![g(-0.5), g(0.5)]).unwrap()]).unwrap();
        let frames: Vec<Vec<f64>> = (0..200).map(|i| vec![if i % 2 == 0 { -2.0 } else { 2.0 } + (i as f64 * 0.37).sin()]).collect();
        let states = vec![0; frames.len()];
        let out = train_ml(&sk, &[LabeledSequence { frames, states }], TrainOptions::default()).unwrap();
        for w in out.log_likelihood.windows(2) {
            assert!(w[1] >= w[0] - 1e-9, "{:?}", out.log_likelihood);
        }
        let mut means: Vec<f64> = out.hmm.emission(0).components().iter().map(|c| c.mean()[0]).collect();
        means.sort_by(f64::total_cmp);
        assert!(means[0] < -1.0 && means[1] > 1.0);
    }
}

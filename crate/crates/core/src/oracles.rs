//! Slow reference evaluators: tensor-product quadrature, exhaustive path
//! enumeration and seeded Monte-Carlo moments.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::gauss::{lse, Gaussian, LogProb};
use crate::hmm::{EmissionScorer, FrameEvidence, Hmm, ScoreRequest};
use crate::obs::{sample_utterance_at, NamedStreams, ObservationModelSpec, SampledUtterance};

/// Largest number of integration dimensions.
pub const MAX_QUADRATURE_DIM: usize = 3;
/// Mass fraction allowed on the outermost grid cells before the bounds are rejected.
pub const BOUNDARY_TOLERANCE: f64 = 1e-10;
/// Largest `S^N` [`brute_force_sequence_score`] enumerates.
pub const MAX_PATHS: u128 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "snake_case"))]
pub enum QuadratureRule {
    Midpoint,
    Trapezoid,
}

/// Grid settings. Bounds are `center ± sigmas · σ` of the factors involved.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(default))]
pub struct QuadratureConfig {
    pub points: usize,
    pub rule: QuadratureRule,
    pub sigmas: f64,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self { points: 2048, rule: QuadratureRule::Midpoint, sigmas: 10.0 }
    }
}

impl QuadratureConfig {
    pub fn validate(&self) -> Result<()> {
        if self.points < 64 {
            return Err(Error::InvalidParameter(alloc::format!("quadrature needs >= 64 points, got {}", self.points)));
        }
        if !(self.sigmas >= 4.0) {
            return Err(Error::InvalidParameter("quadrature bounds must span at least 8 standard deviations".into()));
        }
        Ok(())
    }

    /// Nodes and weights of the rule on `[lo, hi]`.
    pub fn grid(&self, lo: f64, hi: f64) -> Vec<(f64, f64)> {
        let n = self.points;
        match self.rule {
            QuadratureRule::Midpoint => {
                let h = (hi - lo) / n as f64;
                (0..n).map(|i| (lo + (i as f64 + 0.5) * h, h)).collect()
            }
            QuadratureRule::Trapezoid => {
                let h = (hi - lo) / (n - 1) as f64;
                (0..n).map(|i| (lo + i as f64 * h, if i == 0 || i == n - 1 { 0.5 * h } else { h })).collect()
            }
        }
    }
}

/// Streaming `log Σ exp(v)`.
#[derive(Debug, Clone, Copy)]
struct LogAcc {
    max: f64,
    sum: f64,
}

impl LogAcc {
    fn new() -> Self {
        Self { max: f64::NEG_INFINITY, sum: 0.0 }
    }

    fn push(&mut self, v: f64) {
        if v == f64::NEG_INFINITY {
            return;
        }
        if v > self.max {
            self.sum = self.sum * (self.max - v).exp() + 1.0;
            self.max = v;
        } else {
            self.sum += (v - self.max).exp();
        }
    }

    fn value(&self) -> f64 {
        if self.max == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            self.max + self.sum.ln()
        }
    }
}

/// `log ∫ exp(log_f(z)) dz` over the box `bounds` on a tensor grid.
pub fn integrate_log(bounds: &[(f64, f64)], cfg: &QuadratureConfig, mut log_f: impl FnMut(&[f64]) -> f64) -> Result<LogProb> {
    cfg.validate()?;
    let d = bounds.len();
    if d == 0 {
        return Err(Error::Empty("integration bounds"));
    }
    if d > MAX_QUADRATURE_DIM {
        return Err(Error::Unsupported(alloc::format!("quadrature over {d} dimensions (max {MAX_QUADRATURE_DIM})")));
    }
    let grids: Vec<Vec<(f64, f64)>> = bounds.iter().map(|&(lo, hi)| cfg.grid(lo, hi)).collect();
    let n = cfg.points;
    let mut total = LogAcc::new();
    let mut edge = LogAcc::new();
    let mut idx = vec![0usize; d];
    let mut z = vec![0.0; d];
    loop {
        let mut lw = 0.0;
        for j in 0..d {
            let (node, w) = grids[j][idx[j]];
            z[j] = node;
            lw += w.ln();
        }
        let v = log_f(&z);
        if v.is_nan() {
            return Err(Error::Numeric("NaN integrand"));
        }
        let v = v + lw;
        total.push(v);
        if idx.iter().any(|&i| i == 0 || i == n - 1) {
            edge.push(v);
        }
        let mut j = 0;
        loop {
            idx[j] += 1;
            if idx[j] < n {
                break;
            }
            idx[j] = 0;
            j += 1;
            if j == d {
                let t = total.value();
                let fraction = if t == f64::NEG_INFINITY { 0.0 } else { (edge.value() - t).exp() };
                if fraction > BOUNDARY_TOLERANCE {
                    return Err(Error::QuadratureBounds { fraction });
                }
                return LogProb::new(t);
            }
        }
    }
}

/// Mean and variance of `f(z)` for independent `z_j ~ N(m_j, v_j)`.
/// Axes with zero variance are held at their mean.
pub fn gaussian_moments(axes: &[(f64, f64)], cfg: &QuadratureConfig, f: impl Fn(&[f64]) -> f64) -> Result<(f64, f64)> {
    cfg.validate()?;
    if axes.is_empty() || axes.len() > MAX_QUADRATURE_DIM {
        return Err(Error::Unsupported(alloc::format!("Gaussian expectation over {} axes", axes.len())));
    }
    let rules: Vec<Vec<(f64, f64)>> = axes
        .iter()
        .map(|&(m, v)| {
            if !(v > 0.0) {
                return vec![(m, 1.0)];
            }
            let s = v.sqrt();
            let mut g = cfg.grid(m - cfg.sigmas * s, m + cfg.sigmas * s);
            for (x, w) in g.iter_mut() {
                let t = (*x - m) / s;
                *w *= (-0.5 * t * t).exp();
            }
            let norm: f64 = g.iter().map(|(_, w)| w).sum();
            g.iter_mut().for_each(|(_, w)| *w /= norm);
            g
        })
        .collect();
    let center: Vec<f64> = axes.iter().map(|a| a.0).collect();
    let shift = f(&center);
    let d = axes.len();
    let mut idx = vec![0usize; d];
    let mut z = vec![0.0; d];
    let (mut s1, mut s2) = (0.0, 0.0);
    loop {
        let mut w = 1.0;
        for j in 0..d {
            let (node, wj) = rules[j][idx[j]];
            z[j] = node;
            w *= wj;
        }
        let v = f(&z) - shift;
        s1 += w * v;
        s2 += w * v * v;
        let mut j = 0;
        loop {
            idx[j] += 1;
            if idx[j] < rules[j].len() {
                break;
            }
            idx[j] = 0;
            j += 1;
            if j == d {
                let mean = shift + s1;
                let var = (s2 - s1 * s1).max(0.0);
                if mean.is_nan() || var.is_nan() {
                    return Err(Error::Numeric("NaN in Gaussian expectation"));
                }
                return Ok((mean, var));
            }
        }
    }
}

/// `log p(y | z)` as a plain function of `(z, y)`.
pub type LogLikelihood<'a> = &'a dyn Fn(&[f64], &[f64]) -> f64;

/// Defining integrals of the emission scores.
pub enum Integrand<'a> {
    /// `∫ p(x|q) p(y|x) dx`.
    Conditional { state: &'a Gaussian, log_likelihood: LogLikelihood<'a> },
    /// `p(y|x)` concentrated on `x = g(y)`: `p(g(y)|q) |∂g/∂y|`. `inverse`
    /// returns `x` and `log|∂y/∂x|`.
    Dirac { state: &'a Gaussian, inverse: Box<dyn Fn(&[f64]) -> Result<(Vec<f64>, f64)> + 'a> },
    /// `∫ p(x|q) p(x|y) / p(x) dx`; flat `p(x)` when `prior` is absent.
    Ratio { state: &'a Gaussian, posterior: &'a Gaussian, prior: Option<&'a Gaussian> },
    /// `∫ p(z) p(y|z) dz` over distortion or transform parameters `z`.
    Latent { latent: &'a Gaussian, log_likelihood: LogLikelihood<'a> },
}

/// `center ± sigmas·σ` hull of the given factors, per dimension.
pub fn covering_bounds(factors: &[&Gaussian], sigmas: f64) -> Vec<(f64, f64)> {
    let d = factors[0].dim();
    (0..d)
        .map(|j| {
            factors.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), g| {
                let (m, v) = g.marginal(j);
                let s = v.max(0.0).sqrt();
                (lo.min(m - sigmas * s), hi.max(m + sigmas * s))
            })
        })
        .collect()
}

/// Log of the Riemann approximation of the integrand's defining integral at `y`.
pub fn quadrature_emission(integrand: &Integrand<'_>, y: &[f64], cfg: &QuadratureConfig) -> Result<LogProb> {
    match integrand {
        Integrand::Conditional { state, log_likelihood } => {
            let b = covering_bounds(&[state], cfg.sigmas);
            integrate_log(&b, cfg, |x| density(state, x) + log_likelihood(x, y))
        }
        Integrand::Latent { latent, log_likelihood } => {
            let b = covering_bounds(&[latent], cfg.sigmas);
            integrate_log(&b, cfg, |z| density(latent, z) + log_likelihood(z, y))
        }
        Integrand::Dirac { state, inverse } => {
            let (x, log_det) = inverse(y)?;
            LogProb::new(state.logpdf(&x)?.get() - log_det)
        }
        Integrand::Ratio { state, posterior, prior } => {
            let b = covering_bounds(&[state, posterior], cfg.sigmas);
            integrate_log(&b, cfg, |x| {
                density(state, x) + density(posterior, x) - prior.map_or(0.0, |p| density(p, x))
            })
        }
    }
}

fn density(g: &Gaussian, x: &[f64]) -> f64 {
    g.logpdf(x).map_or(f64::NAN, LogProb::get)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnumerationMode {
    Sum,
    Max,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BruteForce {
    pub score: LogProb,
    /// Best path in [`EnumerationMode::Max`]; among equal scores the one that is
    /// smallest when compared from the last frame backwards.
    pub path: Option<Vec<usize>>,
}

/// Exhaustive evaluation over every state sequence. Accumulates in the same
/// order as the decoders: `(score + log a) + emission`.
///
/// The scorer sees the true path history: `previous_state`, past frames at its
/// shifts, and the last `context_depth` states of the path (most recent first).
pub fn brute_force_sequence_score<S: EmissionScorer + ?Sized>(
    hmm: &Hmm,
    scorer: &S,
    evidence: &[FrameEvidence],
    mode: EnumerationMode,
) -> Result<BruteForce> {
    if evidence.is_empty() {
        return Err(Error::Empty("evidence sequence"));
    }
    for e in evidence {
        e.validate(hmm.dim())?;
    }
    let s = hmm.num_states();
    let n_frames = evidence.len();
    let paths = (s as u128).checked_pow(n_frames as u32).unwrap_or(u128::MAX);
    if paths > MAX_PATHS {
        return Err(Error::InstanceTooLarge { paths, limit: MAX_PATHS });
    }
    let needs = scorer.needs();
    if needs.shifts.contains(&0) {
        return Err(Error::InvalidParameter("conditioning shifts must be >= 1".into()));
    }
    let log_init = hmm.log_initial();
    let log_trans = hmm.log_transitions();
    let mut path = vec![0usize; n_frames];
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut all = Vec::with_capacity(if mode == EnumerationMode::Sum { paths as usize } else { 0 });
    for code in 0..paths as usize {
        let mut c = code;
        for q in path.iter_mut() {
            *q = c % s;
            c /= s;
        }
        let mut score = 0.0;
        for n in 0..n_frames {
            let past: Vec<Option<&FrameEvidence>> = needs.shifts.iter().map(|&k| n.checked_sub(k).map(|i| &evidence[i])).collect();
            let context: Vec<usize> = (1..=needs.context_depth.min(n)).map(|l| path[n - l]).collect();
            let req = ScoreRequest {
                previous_state: if needs.previous_state && n > 0 { Some(path[n - 1]) } else { None },
                past: &past,
                context: &context,
                ..ScoreRequest::new(n, path[n], &evidence[n])
            };
            let e = match scorer.score(&req) {
                Ok(v) => v.get(),
                Err(Error::InvalidObservation { .. }) => f64::NEG_INFINITY,
                Err(e) => return Err(e),
            };
            score = if n == 0 { log_init[path[0]] + e } else { (score + log_trans[path[n - 1]][path[n]]) + e };
        }
        match mode {
            EnumerationMode::Sum => all.push(score),
            EnumerationMode::Max => {
                if best.as_ref().is_none_or(|(b, _)| score > *b) {
                    best = Some((score, path.clone()));
                }
            }
        }
    }
    match mode {
        EnumerationMode::Sum => Ok(BruteForce { score: LogProb::new(lse(&all))?, path: None }),
        EnumerationMode::Max => {
            let (score, path) = best.expect("at least one path");
            Ok(BruteForce { score: LogProb::new(score)?, path: Some(path) })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub estimate: f64,
    pub stderr: f64,
}

/// Seeded Monte-Carlo mean of `statistic` over `n_samples` utterances of
/// length `len` drawn from `spec` on top of `hmm`.
pub fn mc_moment_check(
    spec: &ObservationModelSpec,
    hmm: &Hmm,
    len: usize,
    statistic: impl Fn(&SampledUtterance) -> f64,
    n_samples: usize,
    seed: u64,
) -> Result<McEstimate> {
    if n_samples < 1000 {
        return Err(Error::InvalidParameter(alloc::format!("Monte-Carlo check needs >= 1000 samples, got {n_samples}")));
    }
    let streams = NamedStreams::new(seed);
    let values = (0..n_samples)
        .map(|i| Ok(statistic(&sample_utterance_at(spec, hmm, len, &streams, i as u64)?)))
        .collect::<Result<Vec<f64>>>()?;
    let n = n_samples as f64;
    let anchor = values[0];
    let mean = anchor + values.iter().map(|v| v - anchor).sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    Ok(McEstimate { estimate: mean, stderr: (var / n).sqrt() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gauss::Gmm;
    use crate::hmm::{forward_log_score, viterbi, Conventional, ScoreTable};
    use crate::linalg::Covariance;
    use crate::obs::AdditiveGaussian;
    use approx::assert_relative_eq;

    #[test]
    fn convolution_value() {
        let g = Gaussian::standard(1);
        let lik = |x: &[f64], y: &[f64]| Gaussian::standard(1).logpdf(&[y[0] - x[0]]).unwrap().get();
        let v = quadrature_emission(&Integrand::Conditional { state: &g, log_likelihood: &lik }, &[1.0], &QuadratureConfig::default()).unwrap();
        assert_relative_eq!(v.get().exp(), 0.219_695_644_733_861_34, epsilon = 1e-6);
    }

    #[test]
    fn density_integrates_to_one_under_both_rules() {
        let g = Gaussian::diagonal(vec![0.3, -1.0], vec![0.5, 2.0]).unwrap();
        for rule in [QuadratureRule::Midpoint, QuadratureRule::Trapezoid] {
            let cfg = QuadratureConfig { points: 256, rule, sigmas: 10.0 };
            let v = integrate_log(&covering_bounds(&[&g], 10.0), &cfg, |x| g.logpdf(x).unwrap().get()).unwrap();
            assert!(v.get().abs() < 1e-6);
        }
    }

    #[test]
    fn refinement_is_stable() {
        let g = Gaussian::diagonal(vec![0.0], vec![1.5]).unwrap();
        let post = Gaussian::diagonal(vec![0.5], vec![0.5]).unwrap();
        let it = Integrand::Ratio { state: &g, posterior: &post, prior: None };
        let a = quadrature_emission(&it, &[0.0], &QuadratureConfig::default()).unwrap();
        let b = quadrature_emission(&it, &[0.0], &QuadratureConfig { points: 4096, ..QuadratureConfig::default() }).unwrap();
        assert!((a.get() - b.get()).abs() < 1e-8);
    }

    #[test]
    fn narrow_bounds_are_detected() {
        let cfg = QuadratureConfig::default();
        let g = Gaussian::standard(1);
        assert!(matches!(integrate_log(&[(-1.0, 1.0)], &cfg, |x| g.logpdf(x).unwrap().get()), Err(Error::QuadratureBounds { .. })));
        assert!(integrate_log(&[(0.0, 1.0); 4], &cfg, |_| 0.0).is_err());
        assert!(QuadratureConfig { points: 10, ..cfg }.validate().is_err());
    }

    #[test]
    fn dirac_is_direct_pdf() {
        let g = Gaussian::standard(1);
        let it = Integrand::Dirac { state: &g, inverse: Box::new(|y: &[f64]| Ok((vec![y[0] - 2.0], 0.0))) };
        let v = quadrature_emission(&it, &[2.5], &QuadratureConfig::default()).unwrap();
        assert_eq!(v, g.logpdf(&[0.5]).unwrap());
    }

    #[test]
    fn moments_of_linear_function() {
        let (m, v) = gaussian_moments(&[(1.0, 2.0), (3.0, 0.0)], &QuadratureConfig::default(), |z| 2.0 * z[0] + z[1]).unwrap();
        assert_relative_eq!(m, 5.0, epsilon = 1e-12);
        assert_relative_eq!(v, 8.0, epsilon = 1e-10);
    }

    #[test]
    fn enumeration_hand_case() {
        let h = Hmm::new(
            "two",
            vec![0.6, 0.4],
            vec![vec![0.7, 0.3], vec![0.2, 0.8]],
            vec![Gmm::single(Gaussian::standard(1)); 2],
        )
        .unwrap();
        let t = ScoreTable { scores: vec![vec![0.5f64.ln(), 0.1f64.ln()], vec![0.2f64.ln(), 0.9f64.ln()]] };
        let ev = vec![FrameEvidence::new(vec![0.0]); 2];
        let sum = brute_force_sequence_score(&h, &t, &ev, EnumerationMode::Sum).unwrap();
        let want = 0.6 * 0.5 * (0.7 * 0.2 + 0.3 * 0.9) + 0.4 * 0.1 * (0.2 * 0.2 + 0.8 * 0.9);
        assert_relative_eq!(sum.score.get(), want.ln(), epsilon = 1e-14);
        let max = brute_force_sequence_score(&h, &t, &ev, EnumerationMode::Max).unwrap();
        assert_eq!(max.path, Some(vec![0, 1]));
        assert!(sum.score >= max.score);
        let f = forward_log_score(&h, &t, &ev).unwrap();
        assert_relative_eq!(f.get(), sum.score.get(), epsilon = 1e-14);
        assert_eq!(viterbi(&h, &t, &ev).unwrap().path, vec![0, 1]);
        let c = Conventional::new(&h);
        let big = vec![FrameEvidence::new(vec![0.0]); 21];
        assert!(matches!(brute_force_sequence_score(&h, &c, &big, EnumerationMode::Sum), Err(Error::InstanceTooLarge { .. })));
    }

    #[test]
    fn monte_carlo_bias_mean() {
        let h = Hmm::new("m", vec![1.0], vec![vec![1.0]], vec![Gmm::single(Gaussian::standard(1))]).unwrap();
        let spec = ObservationModelSpec::AdditiveGaussian(AdditiveGaussian::stationary(vec![0.7], Covariance::Diagonal(vec![0.5])));
        let stat = |u: &SampledUtterance| u.observed[0][0] - u.clean[0][0];
        let a = mc_moment_check(&spec, &h, 1, stat, 2000, 9).unwrap();
        assert!((a.estimate - 0.7).abs() < 3.0 * a.stderr);
        assert_eq!(a, mc_moment_check(&spec, &h, 1, stat, 2000, 9).unwrap());
        let fixed = ObservationModelSpec::AdditiveGaussian(AdditiveGaussian::stationary(vec![0.7], Covariance::zeros(1)));
        let bias = |u: &SampledUtterance| u.latents[0].draws[0][0];
        assert_eq!(mc_moment_check(&fixed, &h, 1, bias, 1000, 1).unwrap().stderr, 0.0);
    }
}

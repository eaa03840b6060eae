//! Model adaptation: one-shot rewrites of the emission parameters.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use super::{AdaptedHmm, Provenance};
use crate::error::{Error, Result};
use crate::gauss::{lse, Gaussian, LogProb};
use crate::hmm::{state_posteriors, Conventional, FrameEvidence, Hmm, JointScorer, Moments};
use crate::linalg::{check_dim, Covariance, Matrix};
use crate::obs::{PmcLogSum, RegressionAssignment, VtsLogSum};
use crate::oracles::{gaussian_moments, QuadratureConfig};

/// First-order expansion of `y = log Σ_i exp(z_i)` around the term means for
/// independent Gaussian terms `z_i ~ N(m_i, C_i)`.
///
/// Returns the expanded mean `log Σ_i exp(m_i)`, the covariance
/// `Σ_i G_i C_i G_i` and the diagonal gains `G_i = exp(m_i − mean)`.
pub fn linearize_log_sum(terms: &[(Vec<f64>, Covariance)]) -> Result<(Vec<f64>, Covariance, Vec<Vec<f64>>)> {
    let first = terms.first().ok_or(Error::Empty("log-sum terms"))?;
    let d = first.0.len();
    for (m, c) in terms {
        check_dim(d, m.len())?;
        check_dim(d, c.dim())?;
    }
    let mut scratch = Vec::with_capacity(terms.len());
    let mean: Vec<f64> = (0..d)
        .map(|j| {
            scratch.clear();
            scratch.extend(terms.iter().map(|(m, _)| m[j]));
            lse(&scratch)
        })
        .collect();
    let gains: Vec<Vec<f64>> =
        terms.iter().map(|(m, _)| m.iter().zip(&mean).map(|(mi, y)| (mi - y).exp()).collect()).collect();
    let mut cov = terms[0].1.scale_by_gain(&gains[0])?;
    for ((_, c), g) in terms.iter().zip(&gains).skip(1) {
        cov = cov.add(&c.scale_by_gain(g)?)?;
    }
    Ok((mean, cov, gains))
}

/// Log-normal moment matching of `y = log Σ_i exp(z_i)`: the sum's first and
/// second moments are matched in the linear domain and mapped back.
pub fn log_normal_sum(terms: &[(Vec<f64>, Covariance)]) -> Result<(Vec<f64>, Covariance)> {
    let first = terms.first().ok_or(Error::Empty("log-sum terms"))?;
    let d = first.0.len();
    for (m, c) in terms {
        check_dim(d, m.len())?;
        check_dim(d, c.dim())?;
    }
    // Per-dimension shift keeps exp() in range; it cancels in the ratios below.
    let shift: Vec<f64> =
        (0..d).map(|j| terms.iter().map(|(m, _)| m[j]).fold(f64::NEG_INFINITY, f64::max)).collect();
    let mut lin_mean = vec![0.0; d];
    let mut lin_cov = Matrix::zeros(d);
    let diagonal = terms.iter().all(|(_, c)| c.is_diagonal());
    for (m, c) in terms {
        let cm = c.to_matrix();
        let e: Vec<f64> = (0..d).map(|j| (m[j] + 0.5 * cm.get(j, j) - shift[j]).exp()).collect();
        for i in 0..d {
            lin_mean[i] += e[i];
            for j in 0..d {
                if diagonal && i != j {
                    continue;
                }
                lin_cov.set(i, j, lin_cov.get(i, j) + e[i] * e[j] * cm.get(i, j).exp_m1());
            }
        }
    }
    let mut log_cov = Matrix::zeros(d);
    for i in 0..d {
        for j in 0..d {
            if diagonal && i != j {
                continue;
            }
            log_cov.set(i, j, (lin_cov.get(i, j) / (lin_mean[i] * lin_mean[j])).ln_1p());
        }
    }
    let mean = (0..d).map(|i| lin_mean[i].ln() + shift[i] - 0.5 * log_cov.get(i, i)).collect();
    let cov = if diagonal { Covariance::Diagonal(log_cov.diagonal()) } else { Covariance::Full(log_cov.symmetrized()) };
    Ok((mean, cov))
}

/// Approximation used to move `y = log(α exp(x) + exp(b))` into the model.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "snake_case"))]
pub enum PmcApprox {
    /// Mean becomes `log(α exp(μ_x) + exp(μ_b))`, covariance unchanged.
    LogAdd,
    /// Linear-domain moment matching (log-normal approximation).
    LogNormal,
    /// Gaussian with numerically integrated mean and variance; `D ≤ 2`,
    /// diagonal covariances.
    Quadrature(QuadratureConfig),
}

impl PmcApprox {
    pub fn id(&self) -> &'static str {
        match self {
            PmcApprox::LogAdd => "pmc.log_add",
            PmcApprox::LogNormal => "pmc.log_normal",
            PmcApprox::Quadrature(_) => "pmc.quadrature",
        }
    }
}

/// Adapted density of one component. `noise: None` marks the noise term absent.
pub fn pmc_component(g: &Gaussian, alpha: f64, noise: Option<&Moments>, approx: PmcApprox) -> Result<Gaussian> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::InvalidParameter(alloc::format!("PMC level α must be positive, got {alpha}")));
    }
    let la = alpha.ln();
    let speech: Vec<f64> = g.mean().iter().map(|m| la + m).collect();
    let Some(b) = noise else {
        return Gaussian::new(speech, g.cov().clone());
    };
    check_dim(g.dim(), b.dim())?;
    match approx {
        PmcApprox::LogAdd => {
            let mean = speech.iter().zip(&b.mean).map(|(x, b)| lse(&[*x, *b])).collect();
            Gaussian::new(mean, g.cov().clone())
        }
        PmcApprox::LogNormal => {
            let (mean, cov) = log_normal_sum(&[(speech, g.cov().clone()), (b.mean.clone(), b.cov.clone())])?;
            Gaussian::new(mean, cov)
        }
        PmcApprox::Quadrature(cfg) => {
            if g.dim() > 2 {
                return Err(Error::Unsupported("PMC quadrature mode is limited to D <= 2".into()));
            }
            if !g.cov().is_diagonal() || !b.cov.is_diagonal() {
                return Err(Error::Unsupported("PMC quadrature mode needs diagonal covariances".into()));
            }
            let (vx, vb) = (g.cov().variances(), b.cov.variances());
            let mut mean = Vec::with_capacity(g.dim());
            let mut var = Vec::with_capacity(g.dim());
            for d in 0..g.dim() {
                let axes = [(g.mean()[d], vx[d]), (b.mean[d], vb[d])];
                let (m, v) = gaussian_moments(&axes, &cfg, |z| lse(&[la + z[0], z[1]]))?;
                mean.push(m);
                var.push(v);
            }
            Gaussian::diagonal(mean, var)
        }
    }
}

/// Parallel model combination with stationary noise `spec.noise`.
pub fn pmc_adapt(hmm: &Hmm, spec: &PmcLogSum, approx: PmcApprox) -> Result<AdaptedHmm> {
    let prov = Provenance::new(approx.id()).with("alpha", spec.alpha);
    AdaptedHmm::map_components(hmm, prov, |_, _, g| pmc_component(g, spec.alpha, spec.noise.as_ref(), approx))
}

/// `p(y | q, q̆)` for 3D decoding: one PMC-adapted model per noise state.
#[derive(Debug, Clone, PartialEq)]
pub struct PmcNoiseHmmScorer {
    pub per_noise_state: Vec<Hmm>,
}

pub fn pmc_noise_hmm_scorer(hmm: &Hmm, spec: &PmcLogSum, approx: PmcApprox) -> Result<PmcNoiseHmmScorer> {
    let noise = spec.noise_hmm.as_ref().ok_or(Error::MissingEvidence("PMC noise HMM"))?;
    check_dim(hmm.dim(), noise.dim())?;
    let mut per_noise_state = Vec::with_capacity(noise.num_states());
    for gmm in noise.emissions() {
        if gmm.len() != 1 {
            return Err(Error::Unsupported("noise HMM emissions must be single Gaussians".into()));
        }
        let g = &gmm.components()[0];
        let m = Moments { mean: g.mean().to_vec(), cov: g.cov().clone() };
        let stationary = PmcLogSum { alpha: spec.alpha, noise: Some(m), noise_hmm: None };
        per_noise_state.push(pmc_adapt(hmm, &stationary, approx)?.adapted);
    }
    Ok(PmcNoiseHmmScorer { per_noise_state })
}

impl JointScorer for PmcNoiseHmmScorer {
    fn score(&self, _frame: usize, speech_state: usize, noise_state: usize, evidence: &FrameEvidence) -> Result<LogProb> {
        self.per_noise_state[noise_state].emission(speech_state).logpdf(&evidence.observed)
    }
}

fn vts_terms(g: &Gaussian, spec: &VtsLogSum) -> Result<[(Vec<f64>, Covariance); 2]> {
    check_dim(g.dim(), spec.h.dim())?;
    check_dim(g.dim(), spec.c.dim())?;
    let speech = g.mean().iter().zip(&spec.h.mean).map(|(x, h)| x + h).collect();
    Ok([(speech, g.cov().add(&spec.h.cov)?), (spec.c.mean.clone(), spec.c.cov.clone())])
}

/// VTS expansion of one component around `[μ_x, m_h, m_c]`.
pub fn vts_component(g: &Gaussian, spec: &VtsLogSum) -> Result<Gaussian> {
    let (mean, cov, _) = linearize_log_sum(&vts_terms(g, spec)?)?;
    Gaussian::new(mean, cov)
}

/// Diagonal of `∂y/∂x` at the expansion point: `exp(μ_x + m_h − y₀)`.
pub fn vts_jacobian(mu_x: &[f64], m_h: &[f64], m_c: &[f64]) -> Result<Vec<f64>> {
    check_dim(mu_x.len(), m_h.len())?;
    check_dim(mu_x.len(), m_c.len())?;
    let speech: Vec<f64> = mu_x.iter().zip(m_h).map(|(x, h)| x + h).collect();
    let zero = Covariance::zeros(mu_x.len());
    let (_, _, gains) = linearize_log_sum(&[(speech, zero.clone()), (m_c.to_vec(), zero)])?;
    Ok(gains.into_iter().next().expect("two terms"))
}

pub fn vts_adapt(hmm: &Hmm, spec: &VtsLogSum) -> Result<AdaptedHmm> {
    AdaptedHmm::map_components(hmm, Provenance::new("vts"), |_, _, g| vts_component(g, spec))
}

fn affine_mean(a: &Matrix, mean: &[f64], bias: &[f64]) -> Result<Vec<f64>> {
    Ok(a.mul_vec(mean)?.iter().zip(bias).map(|(x, b)| x + b).collect())
}

/// `μ ← A μ + b`, `C ← A C Aᵀ` with deterministic per-class transforms.
pub fn cmllr_transform(hmm: &Hmm, assignment: &RegressionAssignment) -> Result<AdaptedHmm> {
    assignment.validate_for(hmm)?;
    if assignment.classes.iter().any(|c| !c.bias.cov().is_zero()) {
        return Err(Error::InvalidParameter("CMLLR needs deterministic (dirac) biases".into()));
    }
    let prov = Provenance::new("cmllr").with("classes", assignment.classes.len());
    AdaptedHmm::map_components(hmm, prov, |q, k, g| {
        let c = assignment.class_of(q, k)?;
        Gaussian::new(affine_mean(&c.a, g.mean(), c.bias.mean())?, g.cov().transform(&c.a)?)
    })
}

/// `μ ← A μ + b` with covariances untouched.
pub fn mllr_adapt_means(hmm: &Hmm, assignment: &RegressionAssignment) -> Result<AdaptedHmm> {
    assignment.validate_for(hmm)?;
    let prov = Provenance::new("mllr").with("classes", assignment.classes.len());
    AdaptedHmm::map_components(hmm, prov, |q, k, g| {
        let c = assignment.class_of(q, k)?;
        Gaussian::new(affine_mean(&c.a, g.mean(), c.bias.mean())?, g.cov().clone())
    })
}

/// Conjugate prior over every component mean: `μ ~ N(m₀, C / τ)`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MapPrior {
    /// Prior weight τ ≥ 0; `f64::INFINITY` pins the means to the prior.
    pub tau: f64,
    /// Prior means `[state][component]`; the base model's means when absent.
    #[cfg_attr(feature = "serde", serde(default, skip_serializing_if = "Option::is_none"))]
    pub means: Option<Vec<Vec<Vec<f64>>>>,
}

/// Adaptation data with optional state alignment.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AdaptationSequence {
    pub frames: Vec<Vec<f64>>,
    #[cfg_attr(feature = "serde", serde(default, skip_serializing_if = "Option::is_none"))]
    pub states: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapOptions {
    pub max_iterations: usize,
    /// Absolute change of the MAP objective below which EM stops.
    pub tolerance: f64,
}

impl Default for MapOptions {
    fn default() -> Self {
        Self { max_iterations: 50, tolerance: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapOutcome {
    pub adapted: AdaptedHmm,
    /// `log p(y | θ) + log p(θ)` before the first and after every iteration.
    pub objective: Vec<f64>,
}

/// Per-frame `[state][component]` occupancies under `hmm`, plus the sequence log-likelihood.
fn occupancies(hmm: &Hmm, seq: &AdaptationSequence) -> Result<(Vec<Vec<Vec<f64>>>, f64)> {
    let s = hmm.num_states();
    let (state_post, ll) = match &seq.states {
        Some(states) => {
            check_dim(seq.frames.len(), states.len())?;
            let mut ll = 0.0;
            let mut post = Vec::with_capacity(states.len());
            for (n, (&q, y)) in states.iter().zip(&seq.frames).enumerate() {
                if q >= s {
                    return Err(Error::InvalidParameter(alloc::format!("state label {q} out of range")));
                }
                ll += if n == 0 { hmm.initial()[q].ln() } else { hmm.transitions()[states[n - 1]][q].ln() };
                ll += hmm.emission(q).logpdf(y)?.get();
                let mut row = vec![0.0; s];
                row[q] = 1.0;
                post.push(row);
            }
            (post, ll)
        }
        None => {
            let ev: Vec<FrameEvidence> = seq.frames.iter().cloned().map(FrameEvidence::from).collect();
            let (post, total) = state_posteriors(hmm, &Conventional::new(hmm), &ev)?;
            (post, total.get())
        }
    };
    let mut occ = Vec::with_capacity(seq.frames.len());
    for (y, gamma) in seq.frames.iter().zip(&state_post) {
        let mut frame = Vec::with_capacity(s);
        for (q, &gq) in gamma.iter().enumerate() {
            let gmm = hmm.emission(q);
            if gq == 0.0 {
                frame.push(vec![0.0; gmm.len()]);
                continue;
            }
            let terms: Vec<f64> = gmm
                .weights()
                .iter()
                .zip(gmm.components())
                .map(|(w, g)| Ok(w.ln() + g.logpdf(y)?.get()))
                .collect::<Result<_>>()?;
            let norm = lse(&terms);
            frame.push(terms.iter().map(|t| gq * (t - norm).exp()).collect());
        }
        occ.push(frame);
    }
    Ok((occ, ll))
}

fn log_mean_prior(hmm: &Hmm, prior_means: &[Vec<Vec<f64>>], tau: f64) -> Result<f64> {
    if !(tau > 0.0) || tau.is_infinite() {
        return Ok(0.0);
    }
    let mut acc = 0.0;
    for (q, gmm) in hmm.emissions().iter().enumerate() {
        for (k, g) in gmm.components().iter().enumerate() {
            let cov = match g.cov() {
                Covariance::Diagonal(v) => Covariance::Diagonal(v.iter().map(|x| x / tau).collect()),
                Covariance::Full(m) => {
                    let mut s = m.clone();
                    for i in 0..s.dim() {
                        for j in 0..s.dim() {
                            s.set(i, j, m.get(i, j) / tau);
                        }
                    }
                    Covariance::Full(s)
                }
            };
            acc += Gaussian::new(prior_means[q][k].clone(), cov)?.logpdf(g.mean())?.get();
        }
    }
    Ok(acc)
}

/// MAP re-estimation of the component means by EM.
pub fn map_adapt_means(
    hmm: &Hmm,
    prior: &MapPrior,
    data: &[AdaptationSequence],
    opts: MapOptions,
) -> Result<MapOutcome> {
    if !(prior.tau >= 0.0) {
        return Err(Error::InvalidParameter(alloc::format!("MAP prior weight τ must be >= 0, got {}", prior.tau)));
    }
    let prior_means: Vec<Vec<Vec<f64>>> = match &prior.means {
        Some(m) => {
            check_dim(hmm.num_states(), m.len())?;
            for (gmm, row) in hmm.emissions().iter().zip(m) {
                check_dim(gmm.len(), row.len())?;
                for v in row {
                    check_dim(hmm.dim(), v.len())?;
                }
            }
            m.clone()
        }
        None => hmm.emissions().iter().map(|g| g.components().iter().map(|c| c.mean().to_vec()).collect()).collect(),
    };
    for seq in data {
        for y in &seq.frames {
            check_dim(hmm.dim(), y.len())?;
        }
    }
    let tau = prior.tau;
    let prov = Provenance::new("map").with("tau", tau);

    let objective_of = |model: &Hmm| -> Result<f64> {
        let mut acc = log_mean_prior(model, &prior_means, tau)?;
        for seq in data.iter().filter(|s| !s.frames.is_empty()) {
            acc += occupancies(model, seq)?.1;
        }
        Ok(acc)
    };

    let mut current = hmm.clone();
    if tau.is_infinite() {
        let adapted = AdaptedHmm::map_components(hmm, prov, |q, k, g| Gaussian::new(prior_means[q][k].clone(), g.cov().clone()))?;
        let objective = vec![objective_of(&adapted.adapted)?];
        return Ok(MapOutcome { adapted, objective });
    }

    let d = hmm.dim();
    let mut objective = vec![objective_of(&current)?];
    for _ in 0..opts.max_iterations {
        let mut occ_sum: Vec<Vec<f64>> = current.emissions().iter().map(|g| vec![0.0; g.len()]).collect();
        let mut first: Vec<Vec<Vec<f64>>> = current.emissions().iter().map(|g| vec![vec![0.0; d]; g.len()]).collect();
        for seq in data.iter().filter(|s| !s.frames.is_empty()) {
            let (occ, _) = occupancies(&current, seq)?;
            for (y, frame) in seq.frames.iter().zip(&occ) {
                for (q, comps) in frame.iter().enumerate() {
                    for (k, &g) in comps.iter().enumerate() {
                        if g == 0.0 {
                            continue;
                        }
                        occ_sum[q][k] += g;
                        for (f, v) in first[q][k].iter_mut().zip(y) {
                            *f += g * v;
                        }
                    }
                }
            }
        }
        let next = AdaptedHmm::map_components(&current, prov.clone(), |q, k, g| {
            let denom = tau + occ_sum[q][k];
            if !(denom > 0.0) {
                return Ok(g.clone());
            }
            let mean = prior_means[q][k].iter().zip(&first[q][k]).map(|(m0, s)| (tau * m0 + s) / denom).collect();
            Gaussian::new(mean, g.cov().clone())
        })?
        .adapted;
        current = next;
        let obj = objective_of(&current)?;
        let prev = *objective.last().expect("non-empty");
        objective.push(obj);
        if (obj - prev).abs() < opts.tolerance {
            break;
        }
    }
    Ok(MapOutcome { adapted: AdaptedHmm { base: hmm.clone(), adapted: current, provenance: prov }, objective })
}

/// Prior over a diagonal MLLR transform: `a_d ~ N(ā_d, v_d)` independently,
/// `c ~ N(c̄, C_c)`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BayesianMllrPrior {
    pub a_mean: Vec<f64>,
    pub a_var: Vec<f64>,
    pub c: Moments,
}

impl BayesianMllrPrior {
    /// Dirac prior at `(diag(a), c)`.
    pub fn dirac(a: Vec<f64>, c: Vec<f64>) -> Self {
        let d = a.len();
        Self { a_var: vec![0.0; d], a_mean: a, c: Moments { cov: Covariance::zeros(c.len()), mean: c } }
    }
}

/// Frame-wise Bayesian MLLR: `∫ N(y; A μ + c, C) p(A, c) d(A, c)` in closed form,
/// `N(y; ā∘μ + c̄, C + diag(μ² v) + C_c)` per component.
pub fn bayesian_mllr_frame_scorer(hmm: &Hmm, prior: &BayesianMllrPrior) -> Result<AdaptedHmm> {
    let d = hmm.dim();
    check_dim(d, prior.a_mean.len())?;
    check_dim(d, prior.a_var.len())?;
    check_dim(d, prior.c.dim())?;
    prior.c.cov.validate_psd()?;
    if prior.a_var.iter().any(|v| !(*v >= 0.0)) {
        return Err(Error::Unsupported("transform prior variances must be non-negative".into()));
    }
    let a = Matrix::from_diagonal(&prior.a_mean);
    AdaptedHmm::map_components(hmm, Provenance::new("bayesian_mllr"), |_, _, g| {
        let mean = affine_mean(&a, g.mean(), &prior.c.mean)?;
        let spread = Covariance::Diagonal(g.mean().iter().zip(&prior.a_var).map(|(m, v)| m * m * v).collect());
        Gaussian::new(mean, g.cov().add(&spread)?.add(&prior.c.cov)?)
    })
}

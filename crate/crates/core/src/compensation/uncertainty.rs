//! Uncertainty decoding: time-varying compensation driven by per-frame
//! distortion statistics or clean-speech posteriors.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use super::{per_component, AdaptedHmm, Provenance};
use crate::error::{Error, Result};
use crate::gauss::{gaussian_convolve, lse, product_moments, Gaussian, Gmm, LogProb, LN_2PI};
use crate::hmm::{EmissionScorer, Hmm, Moments, ScoreRequest};
use crate::linalg::{check_dim, Matrix};
#[cfg(test)]
use crate::linalg::Covariance;
use crate::obs::{RegressionAssignment, SpliceRegions};

/// `N(y; μ_k + m_b, C_k + C_b)` with the bias statistics carried by each frame.
#[derive(Debug, Clone, Copy)]
pub struct Arrowood<'a> {
    hmm: &'a Hmm,
}

pub fn arrowood_scorer(hmm: &Hmm) -> Arrowood<'_> {
    Arrowood { hmm }
}

impl EmissionScorer for Arrowood<'_> {
    fn score(&self, req: &ScoreRequest<'_>) -> Result<LogProb> {
        let b = req.evidence.bias().ok_or(Error::MissingEvidence("arrowood needs per-frame bias statistics"))?;
        let y = &req.evidence.observed;
        per_component(self.hmm.emission(req.state), req.component, |_, g| {
            Ok(gaussian_convolve(g, &b.cov, &b.mean)?.logpdf(y)?.get())
        })
    }
}

/// Gaussian overlap `N(μ_k; μ_{x|y}, C_k + C_{x|y})` of state component and
/// clean-speech posterior.
#[derive(Debug, Clone, Copy)]
pub struct Dvc<'a> {
    hmm: &'a Hmm,
}

pub fn dvc_scorer(hmm: &Hmm) -> Dvc<'_> {
    Dvc { hmm }
}

pub(crate) fn overlap(g: &Gaussian, post: &Moments) -> Result<f64> {
    let zero = vec![0.0; g.dim()];
    Ok(gaussian_convolve(g, &post.cov, &zero)?.logpdf(&post.mean)?.get())
}

impl EmissionScorer for Dvc<'_> {
    fn score(&self, req: &ScoreRequest<'_>) -> Result<LogProb> {
        let post = req.evidence.posterior().ok_or(Error::MissingEvidence("dvc needs per-frame posterior moments"))?;
        per_component(self.hmm.emission(req.state), req.component, |_, g| overlap(g, post))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "snake_case"))]
pub enum SpliceVariant {
    /// `Σ_s p(s) N(y; μ_k − r_s, C_k + G_s)`.
    Convolution,
    /// Ratio form with the separate observation prior `p(y|s)`.
    PriorModel,
}

/// Gauss-Hermite nodes and weights for expectations under `N(0, 1)`.
fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut j = Matrix::zeros(n);
    for i in 1..n {
        let b = (i as f64).sqrt();
        j.set(i, i - 1, b);
        j.set(i - 1, i, b);
    }
    let (vals, vecs) = j.symmetric_eigen();
    let weights = (0..n).map(|k| vecs.get(0, k) * vecs.get(0, k)).collect();
    (vals, weights)
}

const HERMITE_NODES: usize = 32;
const MAX_PRIOR_MODEL_DIM: usize = 3;

/// SPLICE uncertainty decoding.
#[derive(Debug, Clone)]
pub struct Splice<'a> {
    hmm: &'a Hmm,
    regions: SpliceRegions,
    variant: SpliceVariant,
    /// `p(x) = Σ_s p(s) N(x; μ_{y|s} + r_s, C_{y|s} + G_s)` for the prior-model variant.
    clean_prior: Option<Gmm>,
    hermite: (Vec<f64>, Vec<f64>),
}

pub fn splice_scorer<'a>(hmm: &'a Hmm, regions: &SpliceRegions, variant: SpliceVariant) -> Result<Splice<'a>> {
    crate::obs::ObservationModelSpec::SpliceRegions(regions.clone()).validate(hmm.dim())?;
    let mut clean_prior = None;
    let mut hermite = (Vec::new(), Vec::new());
    if variant == SpliceVariant::PriorModel {
        if hmm.dim() > MAX_PRIOR_MODEL_DIM {
            return Err(Error::Unsupported(alloc::format!(
                "SPLICE prior-model variant supports D <= {MAX_PRIOR_MODEL_DIM}"
            )));
        }
        let mut weights = Vec::new();
        let mut comps = Vec::new();
        for r in &regions.regions {
            let p = r.observation_prior.as_ref().ok_or(Error::MissingEvidence("SPLICE prior model p(y|s)"))?;
            if !r.cov.is_diagonal() || !p.cov.is_diagonal() {
                return Err(Error::Unsupported("SPLICE prior-model variant needs diagonal covariances".into()));
            }
            weights.push(r.prior);
            let mean = p.mean.iter().zip(&r.offset).map(|(a, b)| a + b).collect();
            comps.push(Gaussian::new(mean, p.cov.add(&r.cov)?)?);
        }
        clean_prior = Some(Gmm::new(weights, comps)?);
        hermite = gauss_hermite(HERMITE_NODES);
    }
    Ok(Splice { hmm, regions: regions.clone(), variant, clean_prior, hermite })
}

impl Splice<'_> {
    fn convolution(&self, g: &Gaussian, y: &[f64]) -> Result<f64> {
        let mut terms = Vec::with_capacity(self.regions.regions.len());
        for r in &self.regions.regions {
            if r.prior == 0.0 {
                continue;
            }
            let shift: Vec<f64> = r.offset.iter().map(|v| -v).collect();
            terms.push(r.prior.ln() + gaussian_convolve(g, &r.cov, &shift)?.logpdf(y)?.get());
        }
        Ok(lse(&terms))
    }

    /// `log E[1 / p(x)]` under `N(mean, diag(var))`, tensor-product Gauss-Hermite.
    fn inverse_prior_expectation(&self, prior: &Gmm, mean: &[f64], var: &[f64]) -> Result<f64> {
        let (nodes, weights) = &self.hermite;
        let d = mean.len();
        let n = nodes.len();
        let sd: Vec<f64> = var.iter().map(|v| v.sqrt()).collect();
        let mut idx = vec![0usize; d];
        let mut x = vec![0.0; d];
        let mut terms = Vec::with_capacity(n.pow(d as u32));
        loop {
            let mut lw = 0.0;
            for i in 0..d {
                x[i] = mean[i] + sd[i] * nodes[idx[i]];
                lw += weights[idx[i]].ln();
            }
            terms.push(lw - prior.logpdf(&x)?.get());
            let mut i = 0;
            while i < d {
                idx[i] += 1;
                if idx[i] < n {
                    break;
                }
                idx[i] = 0;
                i += 1;
            }
            if i == d {
                break;
            }
        }
        Ok(lse(&terms))
    }

    fn prior_model(&self, g: &Gaussian, y: &[f64]) -> Result<f64> {
        let prior = self.clean_prior.as_ref().expect("built for prior-model variant");
        if !g.cov().is_diagonal() {
            return Err(Error::Unsupported("SPLICE prior-model variant needs diagonal state covariances".into()));
        }
        let mut terms = Vec::with_capacity(self.regions.regions.len());
        for r in &self.regions.regions {
            if r.prior == 0.0 {
                continue;
            }
            let p = r.observation_prior.as_ref().expect("validated");
            let obs = Gaussian::new(p.mean.clone(), p.cov.clone())?.logpdf(y)?.get();
            // N(x; μ_k, C_k) N(x; y + r_s, G_s) = scale · N(x; m*, C*)
            let centre: Vec<f64> = y.iter().zip(&r.offset).map(|(a, b)| a + b).collect();
            let zero = vec![0.0; y.len()];
            let scale = gaussian_convolve(g, &r.cov, &zero)?.logpdf(&centre)?.get();
            let (m, c) = product_moments(g.mean(), g.cov(), &centre, &r.cov)?;
            let ratio = self.inverse_prior_expectation(prior, &m, &c.variances())?;
            terms.push(r.prior.ln() + obs + scale + ratio);
        }
        Ok(lse(&terms))
    }
}

impl EmissionScorer for Splice<'_> {
    fn score(&self, req: &ScoreRequest<'_>) -> Result<LogProb> {
        let y = &req.evidence.observed;
        per_component(self.hmm.emission(req.state), req.component, |_, g| match self.variant {
            SpliceVariant::Convolution => self.convolution(g, y),
            SpliceVariant::PriorModel => self.prior_model(g, y),
        })
    }
}

/// Joint uncertainty decoding: every component becomes
/// `N(A_k μ_k + m_{b|k}, A_k C_k A_kᵀ + C_{b|k})`. The result scores frames
/// directly as an [`EmissionScorer`].
pub fn jud_scorer(hmm: &Hmm, assignment: &RegressionAssignment) -> Result<AdaptedHmm> {
    assignment.validate_for(hmm)?;
    let prov = Provenance::new("jud").with("classes", assignment.classes.len());
    AdaptedHmm::map_components(hmm, prov, |q, k, g| {
        let class = assignment.class_of(q, k)?;
        let mean: Vec<f64> =
            class.a.mul_vec(g.mean())?.iter().zip(class.bias.mean()).map(|(a, b)| a + b).collect();
        Gaussian::new(mean, g.cov().transform(&class.a)?.add(&class.bias.cov())?)
    })
}

/// Ion et al.: `∫ p(x|q) p(x|y_{1:N}) / p(x) dx` in closed form.
#[derive(Debug, Clone)]
pub struct Ion<'a> {
    hmm: &'a Hmm,
    prior: Gaussian,
    prior_precision: Matrix,
    prior_log_det: f64,
}

pub fn ion_scorer<'a>(hmm: &'a Hmm, prior: Gaussian) -> Result<Ion<'a>> {
    check_dim(hmm.dim(), prior.dim())?;
    let chol = prior.cov().to_matrix().cholesky()?;
    Ok(Ion { hmm, prior_precision: chol.inverse(), prior_log_det: chol.log_det(), prior })
}

fn indefinite(detail: &str, m: &Matrix) -> Error {
    let (vals, _) = m.symmetric_eigen();
    let (dim, _) = vals.iter().enumerate().fold((0, f64::INFINITY), |acc, (i, &v)| if v < acc.1 { (i, v) } else { acc });
    Error::IndefiniteRatio { dim, detail: alloc::format!("{detail} (eigenvalue {:.3e})", vals[dim]) }
}

impl Ion<'_> {
    fn check_posterior(&self, post: &Moments) -> Result<()> {
        let pc = post.cov.to_matrix().cholesky().map_err(|_| Error::SingularPrecision)?;
        let diff = pc.inverse().sub(&self.prior_precision)?.symmetrized();
        let (vals, _) = diff.symmetric_eigen();
        let scale = vals.iter().fold(1.0f64, |a, v| a.max(v.abs()));
        if vals.iter().any(|&v| v < -1e-9 * scale) {
            return Err(indefinite("prior is sharper than the posterior", &diff));
        }
        Ok(())
    }

    fn component(&self, g: &Gaussian, post: &Moments) -> Result<f64> {
        if post.cov.is_zero() {
            return Ok(g.logpdf(&post.mean)?.get() - self.prior.logpdf(&post.mean)?.get());
        }
        self.check_posterior(post)?;
        // N(x; μ_k, C_k) N(x; a₀, A₀) = scale · N(x; a, A)
        let log_scale = overlap(g, post)?;
        let (a, cov_a) = product_moments(g.mean(), g.cov(), &post.mean, &post.cov)?;
        let ca = cov_a.to_matrix().cholesky().map_err(|_| Error::SingularPrecision)?;
        let p = ca.inverse().sub(&self.prior_precision)?.symmetrized();
        let cp = p.cholesky().map_err(|_| indefinite("ratio precision is not positive definite", &p))?;
        // ∫ N(x; a, A) / N(x; b, B) dx with d = a − b, P = A⁻¹ − B⁻¹
        let d: Vec<f64> = a.iter().zip(self.prior.mean()).map(|(x, y)| x - y).collect();
        let pb_d = self.prior_precision.mul_vec(&d)?;
        let dim = d.len() as f64;
        let quad_prior: f64 = d.iter().zip(&pb_d).map(|(x, y)| x * y).sum();
        let log_ratio = 0.5 * self.prior_log_det - 0.5 * ca.log_det() - 0.5 * cp.log_det()
            + 0.5 * dim * LN_2PI
            + 0.5 * cp.quad_form(&pb_d)
            + 0.5 * quad_prior;
        Ok(log_scale + log_ratio)
    }
}

impl EmissionScorer for Ion<'_> {
    fn score(&self, req: &ScoreRequest<'_>) -> Result<LogProb> {
        let post = req.evidence.posterior().ok_or(Error::MissingEvidence("ion needs per-frame posterior moments"))?;
        check_dim(self.prior.dim(), post.dim())?;
        per_component(self.hmm.emission(req.state), req.component, |_, g| self.component(g, post))
    }
}

/// Builds an isotropic, diagonal covariance; shorthand used by tests.
#[cfg(test)]
pub(crate) fn iso(d: usize, v: f64) -> Covariance {
    Covariance::isotropic(d, v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hmm::{Conventional, FrameEvidence, Uncertainty};
    use crate::obs::{AffineClass, BiasPdf, SpliceRegion};
    use approx::assert_relative_eq;

    fn hmm1(means: &[f64], var: f64) -> Hmm {
        let s = means.len();
        let em = means.iter().map(|&m| Gmm::single(Gaussian::diagonal(vec![m], vec![var]).unwrap())).collect();
        Hmm::new("t", vec![1.0 / s as f64; s], vec![vec![1.0 / s as f64; s]; s], em).unwrap()
    }

    fn two_d() -> Hmm {
        let g = |m: f64, w: f64| Gaussian::diagonal(vec![m, -m], vec![w, 2.0 * w]).unwrap();
        let mix = Gmm::new(vec![0.3, 0.7], vec![g(0.5, 1.0), g(-1.0, 0.5)]).unwrap();
        Hmm::new("t", vec![0.5, 0.5], vec![vec![0.5, 0.5]; 2], vec![mix, Gmm::single(g(2.0, 1.5))]).unwrap()
    }

    fn score<S: EmissionScorer>(s: &S, q: usize, e: &FrameEvidence) -> f64 {
        s.score(&ScoreRequest::new(0, q, e)).unwrap().get()
    }

    fn bias(mean: Vec<f64>, cov: Covariance) -> Uncertainty {
        Uncertainty::Bias(Moments::new(mean, cov).unwrap())
    }

    fn post(mean: Vec<f64>, cov: Covariance) -> Uncertainty {
        Uncertainty::Posterior(Moments::new(mean, cov).unwrap())
    }

    #[test]
    fn arrowood_reduces_and_matches_value() {
        let h = two_d();
        let e = FrameEvidence::new(vec![0.3, 0.1]).with_uncertainty(bias(vec![0.0; 2], iso(2, 0.0)));
        for q in 0..2 {
            assert_eq!(score(&arrowood_scorer(&h), q, &e), score(&Conventional::new(&h), q, &e));
        }
        let h1 = hmm1(&[0.0], 1.0);
        let e = FrameEvidence::new(vec![1.0]).with_uncertainty(bias(vec![0.0], iso(1, 1.0)));
        // N(1; 0, 2)
        assert_relative_eq!(score(&arrowood_scorer(&h1), 0, &e), -0.5 * (LN_2PI + 2f64.ln()) - 0.25, epsilon = 1e-14);
        assert!(arrowood_scorer(&h1).score(&ScoreRequest::new(0, 0, &FrameEvidence::new(vec![0.0]))).is_err());
    }

    #[test]
    fn arrowood_flattens_with_large_bias_variance() {
        let h = hmm1(&[0.0, 3.0], 1.0);
        let mut last = f64::INFINITY;
        for v in [0.1, 1.0, 10.0, 100.0, 1e4] {
            let e = FrameEvidence::new(vec![0.2]).with_uncertainty(bias(vec![0.0], iso(1, v)));
            let s = arrowood_scorer(&h);
            let gap = (score(&s, 0, &e) - score(&s, 1, &e)).abs();
            assert!(gap < last);
            last = gap;
        }
        assert!(last < 1e-3);
    }

    #[test]
    fn dvc_dirac_posterior_and_symmetry() {
        let h = two_d();
        let e = FrameEvidence::new(vec![9.0, 9.0]).with_uncertainty(post(vec![0.3, 0.1], iso(2, 0.0)));
        let plain = FrameEvidence::new(vec![0.3, 0.1]);
        for q in 0..2 {
            assert_eq!(score(&dvc_scorer(&h), q, &e), score(&Conventional::new(&h), q, &plain));
        }
        let h1 = hmm1(&[0.0], 1.0);
        let e = FrameEvidence::new(vec![0.0]).with_uncertainty(post(vec![1.0], iso(1, 1.0)));
        assert_relative_eq!(score(&dvc_scorer(&h1), 0, &e), -0.5 * (LN_2PI + 2f64.ln()) - 0.25, epsilon = 1e-14);
        let swapped = hmm1(&[1.0], 1.0);
        let e2 = FrameEvidence::new(vec![0.0]).with_uncertainty(post(vec![0.0], iso(1, 1.0)));
        assert_eq!(score(&dvc_scorer(&h1), 0, &e), score(&dvc_scorer(&swapped), 0, &e2));
    }

    fn region(prior: f64, r: f64, g: f64) -> SpliceRegion {
        SpliceRegion { prior, offset: vec![r], cov: iso(1, g), observation_prior: None }
    }

    #[test]
    fn splice_degenerate_regions() {
        let h = hmm1(&[0.0, 1.0], 0.7);
        let e = FrameEvidence::new(vec![0.4]);
        let s = splice_scorer(&h, &SpliceRegions { regions: vec![region(1.0, 0.0, 0.0)] }, SpliceVariant::Convolution).unwrap();
        for q in 0..2 {
            assert_eq!(score(&s, q, &e), score(&Conventional::new(&h), q, &e));
        }
        let s = splice_scorer(&h, &SpliceRegions { regions: vec![region(1.0, 0.5, 0.0)] }, SpliceVariant::Convolution).unwrap();
        let shifted = FrameEvidence::new(vec![0.9]);
        for q in 0..2 {
            assert_relative_eq!(score(&s, q, &e), score(&Conventional::new(&h), q, &shifted), epsilon = 1e-14);
        }
    }

    #[test]
    fn splice_prior_model_matches_joint_gaussian_conditional() {
        // With one region the ratio is the exact Gaussian conditional p(y|x) of
        // the joint model y ~ N(μ_y, C_y), x = y + r + e, e ~ N(0, G).
        let (mu_y, c_y, r, g) = (0.4, 1.3, -0.2, 0.6);
        let regions = SpliceRegions {
            regions: vec![SpliceRegion {
                prior: 1.0,
                offset: vec![r],
                cov: iso(1, g),
                observation_prior: Some(Moments::new(vec![mu_y], iso(1, c_y)).unwrap()),
            }],
        };
        let (mu_k, c_k) = (0.9, 0.8);
        let h = hmm1(&[mu_k], c_k);
        let s = splice_scorer(&h, &regions, SpliceVariant::PriorModel).unwrap();
        let beta = c_y / (c_y + g);
        let mean = mu_y + beta * (mu_k - mu_y - r);
        let var = c_y - beta * c_y + beta * beta * c_k;
        for y in [-1.0, 0.3, 2.0] {
            let want = Gaussian::diagonal(vec![mean], vec![var]).unwrap().logpdf(&[y]).unwrap().get();
            assert_relative_eq!(score(&s, 0, &FrameEvidence::new(vec![y])), want, epsilon = 1e-8);
        }
        let missing = SpliceRegions { regions: vec![region(1.0, 0.0, 1.0)] };
        assert!(splice_scorer(&h, &missing, SpliceVariant::PriorModel).is_err());
    }

    #[test]
    fn jud_values() {
        let h = two_d();
        let ident = RegressionAssignment::global(AffineClass::identity(2));
        let a = jud_scorer(&h, &ident).unwrap();
        let e = FrameEvidence::new(vec![0.2, -0.4]);
        for q in 0..2 {
            assert_eq!(score(&a, q, &e), score(&Conventional::new(&h), q, &e));
        }
        let h1 = hmm1(&[0.0], 1.0);
        let two = RegressionAssignment::global(AffineClass { a: Matrix::from_diagonal(&[2.0]), bias: BiasPdf::Dirac(vec![0.0]) });
        let s = jud_scorer(&h1, &two).unwrap();
        assert_relative_eq!(score(&s, 0, &FrameEvidence::new(vec![0.0])), -(8.0 * core::f64::consts::PI).sqrt().ln(), epsilon = 1e-14);
    }

    #[test]
    fn ion_ratio_identity_and_flat_prior_limit() {
        let h = hmm1(&[-1.0, 0.5, 2.0], 0.6);
        let prior = Gaussian::diagonal(vec![0.2], vec![1.5]).unwrap();
        let ion = ion_scorer(&h, prior).unwrap();
        let e = FrameEvidence::new(vec![0.0]).with_uncertainty(post(vec![0.2], iso(1, 1.5)));
        for q in 0..3 {
            assert!(score(&ion, q, &e).abs() < 1e-12);
        }

        let wide = 1e8;
        let ion = ion_scorer(&h, Gaussian::diagonal(vec![0.0], vec![wide]).unwrap()).unwrap();
        let e = FrameEvidence::new(vec![0.0]).with_uncertainty(post(vec![0.7], iso(1, 0.3)));
        for q in 0..3 {
            let lhs = score(&ion, q, &e) - 0.5 * (LN_2PI + wide.ln());
            assert_relative_eq!(lhs, score(&dvc_scorer(&h), q, &e), epsilon = 1e-6);
        }
    }

    #[test]
    fn ion_rejects_sharper_prior() {
        let h = hmm1(&[0.0], 1.0);
        let ion = ion_scorer(&h, Gaussian::diagonal(vec![0.0], vec![0.5]).unwrap()).unwrap();
        let e = FrameEvidence::new(vec![0.0]).with_uncertainty(post(vec![0.0], iso(1, 1.0)));
        assert!(matches!(ion.score(&ScoreRequest::new(0, 0, &e)), Err(Error::IndefiniteRatio { .. })));
    }

    #[test]
    fn hermite_rule_integrates_polynomials() {
        let (x, w) = gauss_hermite(HERMITE_NODES);
        let m = |p: i32| x.iter().zip(&w).map(|(x, w)| w * x.powi(p)).sum::<f64>();
        assert_relative_eq!(m(0), 1.0, epsilon = 1e-12);
        assert_relative_eq!(m(2), 1.0, epsilon = 1e-10);
        assert_relative_eq!(m(4), 3.0, epsilon = 1e-9);
    }
}

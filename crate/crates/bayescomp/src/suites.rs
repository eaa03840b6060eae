//! Oracle regression suites behind `oracle-check` and the acceptance tests.

use std::fmt::Write as _;
use std::time::Instant;

use bayescomp_core::compensation::*;
use bayescomp_core::hmm::{
    forward_log_score, viterbi, viterbi_3d, Conventional, EmissionScorer, FrameEvidence, Moments, Reliability,
    ScoreRequest, Uncertainty,
};
use bayescomp_core::obs::{
    AffineClass, BiasPdf, NamedStreams, PmcLogSum, RegressionAssignment, ReverbLogSum, SpliceRegion, SpliceRegions,
    TakiguchiAr, VtsLogSum, LOG_FLOOR,
};
use bayescomp_core::oracles::{
    brute_force_sequence_score, integrate_log, quadrature_emission, EnumerationMode, Integrand, QuadratureConfig,
};
use bayescomp_core::{Covariance, Gaussian, Gmm, Hmm, Matrix};
use rand::Rng;

use crate::error::{HarnessError, Result};

pub const SUITES: &[&str] = &[
    "dp-exactness",
    "quadrature",
    "degenerate-limits",
    "consistency",
    "pmc-regime",
    "vts-jacobian",
    "takiguchi-normalization",
    "map-limits",
];

const SEED: u64 = 0x5eed;

/// One row of a suite table: passes when `value <= bound`.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub bound: f64,
    /// Reported but never failing.
    pub informational: bool,
}

impl Check {
    fn new(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Self { name: name.into(), value, bound, informational: false }
    }

    fn info(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Self { informational: true, ..Self::new(name, value, bound) }
    }

    pub fn within_bound(&self) -> bool {
        self.value <= self.bound
    }

    pub fn passed(&self) -> bool {
        self.informational || self.within_bound()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub suite: &'static str,
    pub checks: Vec<Check>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(Check::passed)
    }

    pub fn table(&self) -> String {
        let mut s = format!("suite {}\n", self.suite);
        for c in &self.checks {
            let status = match (c.within_bound(), c.informational) {
                (true, _) => "PASS",
                (false, true) => "INFO",
                (false, false) => "FAIL",
            };
            let _ = writeln!(s, "  {status}  {:<58} {:>12.3e}  (bound {:.1e})", c.name, c.value, c.bound);
        }
        s
    }
}

pub fn run_suite(name: &str) -> Result<SuiteReport> {
    let checks = match name {
        "dp-exactness" => dp_exactness()?,
        "quadrature" => quadrature()?,
        "degenerate-limits" => degenerate_limits()?,
        "consistency" => consistency()?,
        "pmc-regime" => pmc_regime()?,
        "vts-jacobian" => vts_jacobian_check()?,
        "takiguchi-normalization" => takiguchi_normalization()?,
        "map-limits" => map_limits()?,
        other => return Err(HarnessError::Config(format!("unknown suite {other:?}; known: {}", SUITES.join(", ")))),
    };
    let suite = SUITES.iter().find(|s| **s == name).expect("matched above");
    Ok(SuiteReport { suite, checks })
}

fn rng(instance: u64, name: &str) -> impl Rng {
    NamedStreams::new(SEED).stream(instance, 0, name)
}

fn uniform<R: Rng>(r: &mut R, lo: f64, hi: f64) -> f64 {
    r.random_range(lo..hi)
}

fn simplex<R: Rng>(r: &mut R, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| uniform(r, 0.05, 1.0)).collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|v| v / total).collect()
}

fn gaussian<R: Rng>(r: &mut R, d: usize) -> Gaussian {
    let mean = (0..d).map(|_| uniform(r, -2.0, 2.0)).collect();
    let var = (0..d).map(|_| uniform(r, 0.2, 2.0)).collect();
    Gaussian::diagonal(mean, var).expect("positive variances")
}

fn hmm<R: Rng>(r: &mut R, s: usize, d: usize, k: usize) -> Hmm {
    let initial = simplex(r, s);
    let transitions = (0..s).map(|_| simplex(r, s)).collect();
    let emissions = (0..s)
        .map(|_| {
            let w = simplex(r, k);
            Gmm::new(w, (0..k).map(|_| gaussian(r, d)).collect()).expect("valid mixture")
        })
        .collect();
    Hmm::new("suite", initial, transitions, emissions).expect("valid hmm")
}

fn frames<R: Rng>(r: &mut R, n: usize, d: usize) -> Vec<FrameEvidence> {
    (0..n).map(|_| FrameEvidence::new((0..d).map(|_| uniform(r, -3.0, 3.0)).collect())).collect()
}

fn one_state(g: &Gaussian) -> Hmm {
    Hmm::new("one", vec![1.0], vec![vec![1.0]], vec![Gmm::single(g.clone())]).expect("valid hmm")
}

fn diag(v: f64) -> Covariance {
    Covariance::Diagonal(vec![v])
}

fn moments(mean: Vec<f64>, cov: Covariance) -> Moments {
    Moments::new(mean, cov).expect("matching dimensions")
}

fn rel_log(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

/// Relative error of the likelihoods behind two log scores.
fn rel_lik(a: f64, b: f64) -> f64 {
    (a - b).exp_m1().abs()
}

fn score<S: EmissionScorer + ?Sized>(s: &S, state: usize, e: &FrameEvidence) -> Result<f64> {
    Ok(s.score(&ScoreRequest::new(0, state, e))?.get())
}

fn dp_exactness() -> Result<Vec<Check>> {
    let start = Instant::now();
    let (mut fwd, mut vit, mut paths) = (0.0f64, 0.0f64, 0usize);
    for i in 0..100 {
        let mut r = rng(i, "dp");
        let (s, n, k) = (r.random_range(1..=4), r.random_range(1..=6), r.random_range(1..=2));
        let h = hmm(&mut r, s, 2, k);
        let ev = frames(&mut r, n, 2);
        let c = Conventional::new(&h);
        let sum = brute_force_sequence_score(&h, &c, &ev, EnumerationMode::Sum)?;
        let max = brute_force_sequence_score(&h, &c, &ev, EnumerationMode::Max)?;
        fwd = fwd.max(rel_log(forward_log_score(&h, &c, &ev)?.get(), sum.score.get()));
        let v = viterbi(&h, &c, &ev)?;
        vit = vit.max(rel_log(v.total_log_score.get(), max.score.get()));
        paths += usize::from(Some(v.path) != max.path);
    }
    Ok(vec![
        Check::new("forward vs enumeration, max relative error (100 instances)", fwd, 1e-10),
        Check::new("viterbi vs enumeration, max relative error", vit, 1e-10),
        Check::new("viterbi path mismatches", paths as f64, 0.0),
        Check::new("runtime seconds", start.elapsed().as_secs_f64(), 10.0),
    ])
}

/// `max_x log f(x)` for a concave `log f` by ternary search.
fn concave_max(lo: f64, hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    let (mut a, mut b) = (lo, hi);
    for _ in 0..300 {
        let m1 = a + (b - a) / 3.0;
        let m2 = b - (b - a) / 3.0;
        if f(m1) < f(m2) {
            a = m1;
        } else {
            b = m2;
        }
    }
    f(0.5 * (a + b))
}

fn log_n(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -0.5 * ((2.0 * std::f64::consts::PI).ln() + var.ln() + d * d / var)
}

/// `(closed form, oracle)` for one random 1-D instance of `technique`.
fn quadrature_instance(technique: &str, i: u64) -> Result<(f64, f64)> {
    let cfg = QuadratureConfig::default();
    let mut r = rng(i, technique);
    let g = gaussian(&mut r, 1);
    let h = one_state(&g);
    let (mu, var) = (g.mean()[0], g.cov().variances()[0]);
    let y = uniform(&mut r, -2.0, 2.0);
    let out = match technique {
        "arrowood" => {
            let (mb, vb) = (uniform(&mut r, -1.0, 1.0), uniform(&mut r, 0.2, 2.0));
            let e = FrameEvidence::new(vec![y]).with_uncertainty(Uncertainty::Bias(moments(vec![mb], diag(vb))));
            let lik = |x: &[f64], y: &[f64]| log_n(y[0] - x[0], mb, vb);
            let q = quadrature_emission(&Integrand::Conditional { state: &g, log_likelihood: &lik }, &[y], &cfg)?;
            (score(&arrowood_scorer(&h), 0, &e)?, q.get())
        }
        "dvc" => {
            let post = Gaussian::diagonal(vec![uniform(&mut r, -1.0, 1.0)], vec![uniform(&mut r, 0.2, 1.0)])?;
            let e = FrameEvidence::new(vec![y]).with_uncertainty(Uncertainty::Posterior(moments(post.mean().to_vec(), post.cov().clone())));
            let q = quadrature_emission(&Integrand::Ratio { state: &g, posterior: &post, prior: None }, &[y], &cfg)?;
            (score(&dvc_scorer(&h), 0, &e)?, q.get())
        }
        "splice.convolution" => {
            let p = uniform(&mut r, 0.2, 0.8);
            let regions: Vec<SpliceRegion> = [p, 1.0 - p]
                .iter()
                .map(|&prior| SpliceRegion {
                    prior,
                    offset: vec![uniform(&mut r, -1.0, 1.0)],
                    cov: diag(uniform(&mut r, 0.2, 1.0)),
                    observation_prior: None,
                })
                .collect();
            let lik = |x: &[f64], y: &[f64]| {
                let t: Vec<f64> = regions
                    .iter()
                    .map(|s| s.prior.ln() + log_n(y[0], x[0] - s.offset[0], s.cov.variances()[0]))
                    .collect();
                let m = t.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                m + t.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
            };
            let q = quadrature_emission(&Integrand::Conditional { state: &g, log_likelihood: &lik }, &[y], &cfg)?;
            let s = splice_scorer(&h, &SpliceRegions { regions: regions.clone() }, SpliceVariant::Convolution)?;
            (score(&s, 0, &FrameEvidence::new(vec![y]))?, q.get())
        }
        "jud" => {
            let (a, mb, vb) = (uniform(&mut r, 0.5, 1.5), uniform(&mut r, -1.0, 1.0), uniform(&mut r, 0.2, 2.0));
            let asg = RegressionAssignment::global(AffineClass {
                a: Matrix::from_diagonal(&[a]),
                bias: BiasPdf::Gaussian(moments(vec![mb], diag(vb))),
            });
            let lik = |x: &[f64], y: &[f64]| log_n(y[0], a * x[0] + mb, vb);
            let q = quadrature_emission(&Integrand::Conditional { state: &g, log_likelihood: &lik }, &[y], &cfg)?;
            (score(&jud_scorer(&h, &asg)?, 0, &FrameEvidence::new(vec![y]))?, q.get())
        }
        "ion" => {
            let prior = Gaussian::diagonal(vec![uniform(&mut r, -1.0, 1.0)], vec![uniform(&mut r, 3.0, 6.0)])?;
            let post = Gaussian::diagonal(vec![uniform(&mut r, -1.0, 1.0)], vec![uniform(&mut r, 0.2, 1.0)])?;
            let e = FrameEvidence::new(vec![y]).with_uncertainty(Uncertainty::Posterior(moments(post.mean().to_vec(), post.cov().clone())));
            let q = quadrature_emission(&Integrand::Ratio { state: &g, posterior: &post, prior: Some(&prior) }, &[y], &cfg)?;
            (score(&ion_scorer(&h, prior.clone())?, 0, &e)?, q.get())
        }
        "missing.marginalization" => {
            let marginal = Gaussian::diagonal(vec![uniform(&mut r, -1.0, 1.0)], vec![uniform(&mut r, 0.5, 3.0)])?;
            let e = FrameEvidence::new(vec![y]).with_reliability(Reliability { reliable: vec![false], imputed: None });
            let s = missing_feature_scorer(&h, MissingFeatureMode::Marginalization, Some(&marginal))?;
            let q = quadrature_emission(&Integrand::Ratio { state: &g, posterior: &marginal, prior: None }, &[y], &cfg)?;
            (score(&s, 0, &e)?, q.get())
        }
        "significance" => {
            let (pm, pv) = (uniform(&mut r, -1.0, 1.0), uniform(&mut r, 0.2, 1.0));
            let e = FrameEvidence::new(vec![y]).with_uncertainty(Uncertainty::Posterior(moments(vec![pm], diag(pv))));
            let lo = mu.min(pm) - 10.0;
            let hi = mu.max(pm) + 10.0;
            let oracle = concave_max(lo, hi, |x| log_n(x, mu, var) + log_n(x, pm, pv));
            (score(&significance_scorer(&h), 0, &e)?, oracle)
        }
        "bayesian_mllr" => {
            let (am, av) = (uniform(&mut r, 0.5, 1.5), uniform(&mut r, 0.05, 0.3));
            let (cm, cv) = (uniform(&mut r, -0.5, 0.5), uniform(&mut r, 0.05, 0.3));
            let prior = BayesianMllrPrior { a_mean: vec![am], a_var: vec![av], c: moments(vec![cm], diag(cv)) };
            let b = bayesian_mllr_frame_scorer(&h, &prior)?;
            let latent = Gaussian::diagonal(vec![am, cm], vec![av, cv])?;
            let lik = |z: &[f64], y: &[f64]| log_n(y[0], z[0] * mu + z[1], var);
            let cfg2 = QuadratureConfig { points: 1024, ..cfg };
            let q = quadrature_emission(&Integrand::Latent { latent: &latent, log_likelihood: &lik }, &[y], &cfg2)?;
            (score(&b, 0, &FrameEvidence::new(vec![y]))?, q.get())
        }
        other => return Err(HarnessError::Config(format!("no quadrature instance for {other}"))),
    };
    Ok(out)
}

pub const QUADRATURE_TECHNIQUES: &[&str] =
    &["arrowood", "dvc", "splice.convolution", "jud", "ion", "missing.marginalization", "significance", "bayesian_mllr"];

fn quadrature() -> Result<Vec<Check>> {
    let start = Instant::now();
    let mut checks = Vec::new();
    for t in QUADRATURE_TECHNIQUES {
        let mut worst = 0.0f64;
        for i in 0..50 {
            let (closed, oracle) = quadrature_instance(t, i)?;
            worst = worst.max(rel_lik(closed, oracle));
        }
        checks.push(Check::new(format!("{t} vs oracle, max relative error (50 instances)"), worst, 1e-6));
    }
    checks.push(Check::new("runtime seconds", start.elapsed().as_secs_f64(), 60.0));
    Ok(checks)
}

/// Largest `|score − conventional|` over frames and states.
fn deviation(
    h: &Hmm,
    ev: &[FrameEvidence],
    decorate: impl Fn(&FrameEvidence) -> FrameEvidence,
    s: &dyn EmissionScorer,
    with_past: bool,
) -> Result<f64> {
    let c = Conventional::new(h);
    let mut worst = 0.0f64;
    for (n, e) in ev.iter().enumerate() {
        let d = decorate(e);
        let past = [if n > 0 { Some(&ev[n - 1]) } else { None }];
        for q in 0..h.num_states() {
            let mut req = ScoreRequest::new(n, q, &d);
            if with_past {
                req.past = &past;
            }
            let got = s.score(&req)?.get();
            worst = worst.max((got - score(&c, q, e)?).abs());
        }
    }
    Ok(worst)
}

fn degenerate_limits() -> Result<Vec<Check>> {
    let mut r = rng(0, "degenerate");
    let h = hmm(&mut r, 3, 2, 2);
    let ev = frames(&mut r, 6, 2);
    let d = 2;
    let zero = moments(vec![0.0; d], Covariance::zeros(d));
    let ident = RegressionAssignment::global(AffineClass::identity(d));
    let plain = |e: &FrameEvidence| e.clone();
    let bias0 = |e: &FrameEvidence| e.clone().with_uncertainty(Uncertainty::Bias(zero.clone()));
    let dirac = |e: &FrameEvidence| {
        e.clone().with_uncertainty(Uncertainty::Posterior(moments(e.observed.clone(), Covariance::zeros(d))))
    };
    let reliable = |e: &FrameEvidence| e.clone().with_reliability(Reliability::all_reliable(d));
    let marginals = Gaussian::diagonal(vec![0.0; d], vec![1.0; d])?;
    let floor = moments(vec![LOG_FLOOR; d], Covariance::zeros(d));
    let seq = AdaptationSequence { frames: ev.iter().map(|e| e.observed.clone()).collect(), states: None };

    let mut rows: Vec<(&str, f64)> = vec![
        ("arrowood, C_b = 0", deviation(&h, &ev, bias0, &arrowood_scorer(&h), false)?),
        ("dvc, dirac posterior at y", deviation(&h, &ev, dirac, &dvc_scorer(&h), false)?),
        ("modified_imputation, dirac posterior at y", deviation(&h, &ev, dirac, &modified_imputation_scorer(&h), false)?),
    ];
    let single = SpliceRegions {
        regions: vec![SpliceRegion { prior: 1.0, offset: vec![0.0; d], cov: Covariance::zeros(d), observation_prior: None }],
    };
    rows.push(("splice.convolution, one region, r = 0, G = 0", deviation(&h, &ev, plain, &splice_scorer(&h, &single, SpliceVariant::Convolution)?, false)?));
    for (name, mode) in [
        ("missing.imputation, all dims reliable", MissingFeatureMode::Imputation),
        ("missing.marginalization, all dims reliable", MissingFeatureMode::Marginalization),
        ("missing.marginalization_flat, all dims reliable", MissingFeatureMode::FlatMarginalization),
    ] {
        rows.push((name, deviation(&h, &ev, reliable, &missing_feature_scorer(&h, mode, Some(&marginals))?, false)?));
    }
    let adapted: Vec<(&str, AdaptedHmm)> = vec![
        ("jud, identity transform, dirac zero bias", jud_scorer(&h, &ident)?),
        ("cmllr, identity transform", cmllr_transform(&h, &ident)?),
        ("mllr, identity transform", mllr_adapt_means(&h, &ident)?),
        ("bayesian_mllr, dirac prior at (I, 0)", bayesian_mllr_frame_scorer(&h, &BayesianMllrPrior::dirac(vec![1.0; d], vec![0.0; d]))?),
        ("pmc.log_add, alpha = 1, noise absent", pmc_adapt(&h, &PmcLogSum { alpha: 1.0, noise: None, noise_hmm: None }, PmcApprox::LogAdd)?),
        ("pmc.log_normal, alpha = 1, noise absent", pmc_adapt(&h, &PmcLogSum { alpha: 1.0, noise: None, noise_hmm: None }, PmcApprox::LogNormal)?),
        ("vts, h = 0, noise at the log floor", vts_adapt(&h, &VtsLogSum { h: zero.clone(), c: floor.clone() })?),
        (
            "rev_vts, tail and noise at the log floor",
            rev_vts_adapt(&h, &ReverbLogSum { taps: vec![vec![0.0; d], vec![LOG_FLOOR; d]], noise: Some(floor.clone()) }, DEFAULT_OCCUPANCY_HORIZON)?,
        ),
        ("map, tau = inf with the model as prior", map_adapt_means(&h, &MapPrior { tau: f64::INFINITY, means: None }, &[seq], MapOptions::default())?.adapted),
    ];
    for (name, a) in &adapted {
        rows.push((name, deviation(&h, &ev, plain, a, false)?));
    }
    let no_tail = ReverbLogSum { taps: vec![vec![0.0; d]], noise: None };
    for (name, variant, moment) in [
        ("reverb.static_prior.log_add, L = 0", ReverbVariant::StaticPrior, ReverbMoment::LogAdd),
        ("reverb.static_prior.log_normal, L = 0", ReverbVariant::StaticPrior, ReverbMoment::LogNormal),
        ("reverb.partial_path.log_add, L = 0", ReverbVariant::PartialPath, ReverbMoment::LogAdd),
        ("reverb.partial_path.log_normal, L = 0", ReverbVariant::PartialPath, ReverbMoment::LogNormal),
    ] {
        let a = reverb_log_add_adapt(&h, &no_tail, variant, moment, DEFAULT_OCCUPANCY_HORIZON)?;
        rows.push((name, deviation(&h, &ev, plain, &a, false)?));
    }
    let tak = TakiguchiAr { h: vec![0.0; d], alpha: vec![LOG_FLOOR; d] };
    rows.push(("takiguchi, alpha at the log floor, h = 0", deviation(&h, &ev, plain, &takiguchi_scorer(&tak, &h)?, true)?));

    let mut checks: Vec<Check> = rows.into_iter().map(|(n, v)| Check::new(n, v, 1e-12)).collect();
    // ion with p(x|y) = p(x): the ratio is one, so every state scores log 1
    let prior = Gaussian::diagonal(vec![0.3, -0.2], vec![2.0, 3.0])?;
    let ion = ion_scorer(&h, prior.clone())?;
    let mut worst = 0.0f64;
    for e in &ev {
        let e = e.clone().with_uncertainty(Uncertainty::Posterior(moments(prior.mean().to_vec(), prior.cov().clone())));
        for q in 0..h.num_states() {
            worst = worst.max(score(&ion, q, &e)?.abs());
        }
    }
    checks.push(Check::new("ion, posterior equal to prior gives a state-independent score", worst, 1e-12));
    Ok(checks)
}

fn mismatch(equal: bool) -> f64 {
    if equal {
        0.0
    } else {
        1.0
    }
}

fn consistency() -> Result<Vec<Check>> {
    let mut r = rng(0, "consistency");
    let h = hmm(&mut r, 3, 2, 2);
    let ev = frames(&mut r, 6, 2);
    let a = Matrix::from_rows(&[vec![1.2, 0.1], vec![-0.2, 0.8]])?;
    let asg = RegressionAssignment::global(AffineClass { a, bias: BiasPdf::Dirac(vec![0.3, -0.1]) });
    let cmllr = cmllr_transform(&h, &asg)?.adapted;
    let mut checks = vec![Check::new("cmllr equals jud with zero bias covariance", mismatch(cmllr == jud_scorer(&h, &asg)?.adapted), 0.0)];

    let mllr = mllr_adapt_means(&h, &asg)?.adapted;
    let means = |m: &Hmm| m.emissions().iter().flat_map(|g| g.components().iter().map(|c| c.mean().to_vec())).collect::<Vec<_>>();
    checks.push(Check::new("mllr equals cmllr on the means", mismatch(means(&mllr) == means(&cmllr)), 0.0));

    let diag_asg = RegressionAssignment::global(AffineClass { a: Matrix::from_diagonal(&[1.2, 0.7]), bias: BiasPdf::Dirac(vec![0.3, -0.1]) });
    let b = bayesian_mllr_frame_scorer(&h, &BayesianMllrPrior::dirac(vec![1.2, 0.7], vec![0.3, -0.1]))?;
    checks.push(Check::new("bayesian_mllr with a dirac prior equals mllr", mismatch(b.adapted == mllr_adapt_means(&h, &diag_asg)?.adapted), 0.0));

    let noise = moments(vec![0.1, -0.3], Covariance::Diagonal(vec![0.2, 0.3]));
    let rev = ReverbLogSum { taps: vec![vec![0.4, -0.2]], noise: Some(noise.clone()) };
    let prev = previous_frame_statistics(&h, DEFAULT_OCCUPANCY_HORIZON)?;
    let vts = vts_adapt(&h, &reverb_as_vts(&rev)?)?.adapted;
    let mut equal = true;
    for (q, gmm) in h.emissions().iter().enumerate() {
        for (k, g) in gmm.components().iter().enumerate() {
            equal &= rev_vts_component(g, &prev, &rev)? == vts.emission(q).components()[k];
        }
    }
    checks.push(Check::new("rev_vts with L = 0 equals vts", mismatch(equal), 0.0));

    let noise_hmm = one_state(&Gaussian::new(noise.mean.clone(), noise.cov.clone())?);
    let spec = PmcLogSum { alpha: 0.9, noise: Some(noise), noise_hmm: Some(noise_hmm.clone()) };
    let mut equal = true;
    for approx in [PmcApprox::LogAdd, PmcApprox::LogNormal] {
        let joint = pmc_noise_hmm_scorer(&h, &spec, approx)?;
        let stationary = pmc_adapt(&h, &spec, approx)?;
        let d3 = viterbi_3d(&h, &noise_hmm, &joint, &ev)?;
        let d = viterbi(&h, &stationary, &ev)?;
        equal &= joint.per_noise_state[0] == stationary.adapted && d3.speech_path == d.path && d3.total_log_score == d.total_log_score;
    }
    checks.push(Check::new("pmc.noise_hmm with one noise state equals stationary pmc", mismatch(equal), 0.0));
    Ok(checks)
}

/// `|log-add mean − quadrature mean|` for 1-D PMC with unit variances.
pub fn pmc_mean_gap(mu_x: f64, mu_b: f64) -> Result<f64> {
    let g = Gaussian::diagonal(vec![mu_x], vec![1.0])?;
    let noise = moments(vec![mu_b], diag(1.0));
    let add = pmc_component(&g, 1.0, Some(&noise), PmcApprox::LogAdd)?;
    let quad = pmc_component(&g, 1.0, Some(&noise), PmcApprox::Quadrature(QuadratureConfig::default()))?;
    Ok((add.mean()[0] - quad.mean()[0]).abs())
}

fn pmc_regime() -> Result<Vec<Check>> {
    let mut worst = 0.0f64;
    for gap in [20.0, 25.0, 30.0, -20.0, -25.0, -30.0] {
        worst = worst.max(pmc_mean_gap(1.0, 1.0 - gap)?);
    }
    Ok(vec![
        Check::new("pmc log-add vs quadrature mean, |mu_x - mu_b| >= 20", worst, 1e-4),
        Check::info("pmc log-add vs quadrature mean, mu_x = mu_b (unit variances)", pmc_mean_gap(1.0, 1.0)?, 0.2),
    ])
}

fn vts_jacobian_check() -> Result<Vec<Check>> {
    let step = 1e-5;
    let mut worst = 0.0f64;
    for i in 0..20 {
        let mut r = rng(i, "vts-jacobian");
        let mu: Vec<f64> = (0..2).map(|_| uniform(&mut r, -3.0, 3.0)).collect();
        let mh: Vec<f64> = (0..2).map(|_| uniform(&mut r, -1.0, 1.0)).collect();
        let mc: Vec<f64> = (0..2).map(|_| uniform(&mut r, -3.0, 3.0)).collect();
        let jac = vts_jacobian(&mu, &mh, &mc)?;
        let f = |x: f64, d: usize| {
            let (a, b) = (x + mh[d], mc[d]);
            a.max(b) + (-(a - b).abs()).exp().ln_1p()
        };
        for d in 0..2 {
            let fd = (f(mu[d] + step, d) - f(mu[d] - step, d)) / (2.0 * step);
            worst = worst.max((fd - jac[d]).abs());
        }
    }
    Ok(vec![Check::new("vts analytic vs central-difference Jacobian (20 cases, 2-D)", worst, 1e-6)])
}

/// `∫ exp(score(y)) dy` over the valid region `y > α + y_prev`, integrated in
/// `u = ln(y − α − y_prev)` so the logarithmic approach of `x` to `−∞` near
/// the floor stays resolved.
pub fn takiguchi_mass(mean: f64, var: f64, h: f64, alpha: f64, y_prev: f64) -> Result<f64> {
    let g = Gaussian::diagonal(vec![mean], vec![var])?;
    let model = one_state(&g);
    let spec = TakiguchiAr { h: vec![h], alpha: vec![alpha] };
    let s = takiguchi_scorer(&spec, &model)?;
    let prev = FrameEvidence::new(vec![y_prev]);
    let floor = alpha + y_prev;
    let spread = 12.0 * var.sqrt() + 2.0;
    // near the floor x ≈ floor + u − h
    let lo = mean + h - floor - spread;
    let hi = (mean + h + spread - floor).max(1.0).ln().max(lo + 1.0);
    let cfg = QuadratureConfig { points: 16384, ..QuadratureConfig::default() };
    let past = [Some(&prev)];
    let mass = integrate_log(&[(lo, hi)], &cfg, |u| {
        let e = FrameEvidence::new(vec![floor + u[0].exp()]);
        let mut req = ScoreRequest::new(1, 0, &e);
        req.past = &past;
        s.score(&req).map_or(f64::NEG_INFINITY, |v| v.get() + u[0])
    })?;
    Ok(mass.get().exp())
}

fn takiguchi_normalization() -> Result<Vec<Check>> {
    let mut worst = 0.0f64;
    for (mean, var, h, alpha, y_prev) in [(0.5, 0.7, 0.3, -1.0, 0.8), (-1.0, 1.5, 0.0, -0.5, 2.0), (2.0, 0.3, -0.4, -3.0, 1.0)] {
        worst = worst.max((takiguchi_mass(mean, var, h, alpha, y_prev)? - 1.0).abs());
    }
    Ok(vec![Check::new("takiguchi 1-D likelihood mass over the valid region, |mass - 1|", worst, 1e-3)])
}

fn map_limits() -> Result<Vec<Check>> {
    let mut r = rng(0, "map");
    let states = [Gaussian::diagonal(vec![-1.0, 0.5], vec![0.5, 0.8])?, Gaussian::diagonal(vec![1.5, -0.5], vec![0.7, 0.4])?];
    let h = Hmm::new(
        "map",
        vec![0.6, 0.4],
        vec![vec![0.8, 0.2], vec![0.3, 0.7]],
        states.iter().map(|g| Gmm::single(g.clone())).collect(),
    )?;
    let labels: Vec<usize> = (0..40).map(|n| usize::from(n % 7 >= 4)).collect();
    let data: Vec<Vec<f64>> = labels
        .iter()
        .map(|&q| states[q].mean().iter().map(|m| m + 0.7 + uniform(&mut r, -1.0, 1.0)).collect())
        .collect();
    let labelled = [AdaptationSequence { frames: data.clone(), states: Some(labels.clone()) }];

    let targets: Vec<Vec<Vec<f64>>> = (0..2).map(|_| vec![(0..2).map(|_| uniform(&mut r, -3.0, 3.0)).collect()]).collect();
    let inf = map_adapt_means(&h, &MapPrior { tau: f64::INFINITY, means: Some(targets.clone()) }, &labelled, MapOptions::default())?;
    let got: Vec<Vec<Vec<f64>>> =
        inf.adapted.adapted.emissions().iter().map(|g| g.components().iter().map(|c| c.mean().to_vec()).collect()).collect();
    let mut checks = vec![Check::new("tau = inf reproduces the prior means exactly", mismatch(got == targets), 0.0)];

    let ml = map_adapt_means(&h, &MapPrior { tau: 0.0, means: None }, &labelled, MapOptions::default())?;
    let mut equal = true;
    for q in 0..2 {
        let mut sum = vec![0.0; 2];
        let mut count = 0.0;
        for (y, _) in data.iter().zip(&labels).filter(|(_, &l)| l == q) {
            for (s, v) in sum.iter_mut().zip(y) {
                *s += v;
            }
            count += 1.0;
        }
        let want: Vec<f64> = sum.iter().map(|s| s / count).collect();
        equal &= ml.adapted.adapted.emission(q).components()[0].mean() == want.as_slice();
    }
    checks.push(Check::new("tau = 0 with hard alignments gives the sample means exactly", mismatch(equal), 0.0));

    let mix = |c: f64| {
        Gmm::new(vec![0.5, 0.5], vec![Gaussian::diagonal(vec![c - 0.5], vec![0.6]).unwrap(), Gaussian::diagonal(vec![c + 0.5], vec![0.6]).unwrap()])
    };
    let h2 = Hmm::new("em", vec![0.5, 0.5], vec![vec![0.9, 0.1], vec![0.1, 0.9]], vec![mix(-1.0)?, mix(1.0)?])?;
    let streams = NamedStreams::new(SEED);
    let shifted = h2.with_emissions(vec![mix(-0.4)?, mix(1.8)?])?;
    let spec = bayescomp_core::obs::ObservationModelSpec::AdditiveGaussian(bayescomp_core::obs::AdditiveGaussian::stationary(vec![0.0], Covariance::zeros(1)));
    let seqs = (0..3)
        .map(|u| Ok(AdaptationSequence { frames: bayescomp_core::obs::sample_utterance_at(&spec, &shifted, 30, &streams, u)?.observed, states: None }))
        .collect::<Result<Vec<_>>>()?;
    let em = map_adapt_means(&h2, &MapPrior { tau: 2.0, means: None }, &seqs, MapOptions { max_iterations: 10, tolerance: 0.0 })?;
    let worst_drop = em
        .objective
        .windows(2)
        .map(|w| (w[0] - w[1]) / w[0].abs().max(1.0))
        .fold(0.0f64, f64::max);
    checks.push(Check::new(format!("EM objective decrease over {} iterations (relative)", em.objective.len() - 1), worst_drop, 1e-12));
    Ok(checks)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_suite_is_a_validation_error() {
        let e = run_suite("nope").unwrap_err();
        assert_eq!(e.exit_code(), 1);
    }

    #[test]
    fn concave_max_finds_the_peak() {
        assert!((concave_max(-5.0, 5.0, |x| -(x - 1.25) * (x - 1.25) + 3.0) - 3.0).abs() < 1e-15);
    }
}

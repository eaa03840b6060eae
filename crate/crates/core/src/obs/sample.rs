use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{apply_model, BiasPdf, Latents, ObservationModelSpec};
use crate::error::{Error, Result};
use crate::gauss::Gaussian;
use crate::hmm::{Hmm, Moments};
use crate::linalg::Covariance;

/// Seeded generator family. Each `(utterance, frame, name)` triple owns an
/// independent ChaCha8 stream, so draws do not depend on evaluation order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NamedStreams {
    seed: u64,
}

fn fnv1a(name: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

impl NamedStreams {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self, utterance: u64, frame: u64, name: &str) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&self.seed.to_le_bytes());
        key[8..16].copy_from_slice(&utterance.to_le_bytes());
        key[16..24].copy_from_slice(&frame.to_le_bytes());
        key[24..].copy_from_slice(&fnv1a(name).to_le_bytes());
        ChaCha8Rng::from_seed(key)
    }
}

/// One generated utterance with everything needed to replay it.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SampledUtterance {
    pub seed: u64,
    pub utterance: u64,
    pub clean: Vec<Vec<f64>>,
    pub observed: Vec<Vec<f64>>,
    pub states: Vec<usize>,
    pub components: Vec<usize>,
    pub latents: Vec<Latents>,
}

impl SampledUtterance {
    pub fn len(&self) -> usize {
        self.clean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clean.is_empty()
    }
}

pub(crate) fn categorical<R: Rng>(rng: &mut R, p: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &w) in p.iter().enumerate() {
        if w > 0.0 {
            acc += w;
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    last
}

fn normals<R: Rng>(rng: &mut R, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

/// `mean + S z` with `S Sᵀ = cov`; exact `mean` for zero variances.
pub(crate) fn draw<R: Rng>(rng: &mut R, mean: &[f64], cov: &Covariance) -> Vec<f64> {
    let z = normals(rng, mean.len());
    match cov {
        Covariance::Diagonal(v) => mean.iter().zip(v).zip(&z).map(|((m, v), z)| m + v.max(0.0).sqrt() * z).collect(),
        Covariance::Full(c) => {
            let (vals, vecs) = c.symmetric_eigen();
            let scaled: Vec<f64> = vals.iter().zip(&z).map(|(l, z)| l.max(0.0).sqrt() * z).collect();
            let n = mean.len();
            (0..n).map(|i| mean[i] + (0..n).map(|j| vecs.get(i, j) * scaled[j]).sum::<f64>()).collect()
        }
    }
}

fn draw_moments<R: Rng>(rng: &mut R, m: &Moments) -> Vec<f64> {
    draw(rng, &m.mean, &m.cov)
}

fn draw_gaussian<R: Rng>(rng: &mut R, g: &Gaussian) -> Vec<f64> {
    draw(rng, g.mean(), g.cov())
}

fn markov_path(hmm: &Hmm, len: usize, streams: &NamedStreams, utterance: u64, name: &str) -> Vec<usize> {
    let mut path: Vec<usize> = Vec::with_capacity(len);
    for n in 0..len {
        let mut rng = streams.stream(utterance, n as u64, name);
        let p: &[f64] = match path.last() {
            None => hmm.initial(),
            Some(&q) => hmm.transitions()[q].as_slice(),
        };
        path.push(categorical(&mut rng, p));
    }
    path
}

/// Ancestral sampling of utterance 0 from `spec` on top of `clean_hmm`.
pub fn sample_utterance(
    spec: &ObservationModelSpec,
    clean_hmm: &Hmm,
    len: usize,
    seed: u64,
) -> Result<SampledUtterance> {
    sample_utterance_at(spec, clean_hmm, len, &NamedStreams::new(seed), 0)
}

/// Ancestral sampling `q → x → latents → y` of utterance number `utterance`.
pub fn sample_utterance_at(
    spec: &ObservationModelSpec,
    clean_hmm: &Hmm,
    len: usize,
    streams: &NamedStreams,
    utterance: u64,
) -> Result<SampledUtterance> {
    if len == 0 {
        return Err(Error::Empty("utterance length"));
    }
    let dim = clean_hmm.dim();
    spec.validate(dim)?;
    if let ObservationModelSpec::Affine(r) = spec {
        r.validate_for(clean_hmm)?;
    }

    let states = markov_path(clean_hmm, len, streams, utterance, "state");
    let mut components = Vec::with_capacity(len);
    let mut clean = Vec::with_capacity(len);
    for (n, &q) in states.iter().enumerate() {
        let gmm = clean_hmm.emission(q);
        let k = categorical(&mut streams.stream(utterance, n as u64, "component"), gmm.weights());
        components.push(k);
        clean.push(draw_gaussian(&mut streams.stream(utterance, n as u64, "clean"), &gmm.components()[k]));
    }

    let noise_states = match spec {
        ObservationModelSpec::PmcLogSum(p) => p.noise_hmm.as_ref().map(|h| (h, markov_path(h, len, streams, utterance, "noise_state"))),
        _ => None,
    };

    let order = spec.order();
    let mut latents = Vec::with_capacity(len);
    let mut observed: Vec<Vec<f64>> = Vec::with_capacity(len);
    for n in 0..len {
        let frame = n as u64;
        let rng = |name: &str| streams.stream(utterance, frame, name);
        let mut lat = Latents::default();
        match spec {
            ObservationModelSpec::AdditiveGaussian(m) => {
                lat.draws = vec![draw(&mut rng("bias"), m.bias_mean.at(n)?, m.bias_cov.at(n)?)];
            }
            ObservationModelSpec::Affine(r) => {
                let id = r.class_id(states[n], components[n])?;
                lat.class = Some(id);
                lat.draws = vec![match &r.classes[id].bias {
                    BiasPdf::Gaussian(m) => draw_moments(&mut rng("bias"), m),
                    BiasPdf::Dirac(v) => v.clone(),
                }];
            }
            ObservationModelSpec::Algonquin(m) => {
                lat.draws = vec![draw(&mut rng("bias"), &vec![0.0; dim], &m.residual_cov)];
            }
            ObservationModelSpec::SpliceRegions(s) => {
                let priors: Vec<f64> = s.regions.iter().map(|r| r.prior).collect();
                let region = categorical(&mut rng("region"), &priors);
                let r = &s.regions[region];
                let shift: Vec<f64> = r.offset.iter().map(|v| -v).collect();
                lat.region = Some(region);
                lat.draws = vec![draw(&mut rng("bias"), &shift, &r.cov)];
            }
            ObservationModelSpec::PmcLogSum(p) => {
                if let Some((h, path)) = &noise_states {
                    let g = h.emission(path[n]);
                    let k = categorical(&mut rng("noise_component"), g.weights());
                    lat.noise_state = Some(path[n]);
                    lat.draws = vec![draw_gaussian(&mut rng("bias"), &g.components()[k])];
                } else if let Some(m) = &p.noise {
                    lat.draws = vec![draw_moments(&mut rng("bias"), m)];
                }
            }
            ObservationModelSpec::VtsLogSum(v) => {
                lat.draws = vec![draw_moments(&mut rng("h"), &v.h), draw_moments(&mut rng("c"), &v.c)];
            }
            ObservationModelSpec::RemosLogSum(r) => {
                lat.draws = vec![
                    draw_moments(&mut rng("c"), &r.c),
                    draw_moments(&mut rng("a"), &r.a),
                    draw_moments(&mut rng("h"), &r.h),
                ];
            }
            ObservationModelSpec::ReverbLogSum(r) => {
                if let Some(m) = &r.noise {
                    lat.draws = vec![draw_moments(&mut rng("bias"), m)];
                }
            }
            ObservationModelSpec::TakiguchiAr(_) => {}
        }
        let start = n.saturating_sub(order);
        let y_prev = n.checked_sub(1).map(|p| observed[p].as_slice());
        let y = apply_model(spec, n, &clean[start..=n], &lat, y_prev)?;
        observed.push(y);
        latents.push(lat);
    }

    Ok(SampledUtterance { seed: streams.seed(), utterance, clean, observed, states, components, latents })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gauss::Gmm;
    use crate::obs::*;

    fn hmm(dim: usize) -> Hmm {
        let g = |m: f64| Gaussian::new(vec![m; dim], Covariance::isotropic(dim, 1.0)).unwrap();
        Hmm::new("h", vec![0.5, 0.5], vec![vec![0.9, 0.1], vec![0.1, 0.9]], vec![Gmm::single(g(-1.0)), Gmm::single(g(1.0))])
            .unwrap()
    }

    #[test]
    fn same_seed_same_utterance() {
        let s = ObservationModelSpec::AdditiveGaussian(AdditiveGaussian::stationary(vec![0.5, 0.0], Covariance::isotropic(2, 0.3)));
        let a = sample_utterance(&s, &hmm(2), 50, 7).unwrap();
        let b = sample_utterance(&s, &hmm(2), 50, 7).unwrap();
        assert_eq!(a, b);
        let c = sample_utterance(&s, &hmm(2), 50, 8).unwrap();
        assert_ne!(a.observed, c.observed);
    }

    #[test]
    fn zero_covariance_bias_leaves_clean_untouched() {
        let s = ObservationModelSpec::AdditiveGaussian(AdditiveGaussian::stationary(vec![0.0], Covariance::zeros(1)));
        let u = sample_utterance(&s, &hmm(1), 100, 3).unwrap();
        assert_eq!(u.clean, u.observed);
    }

    #[test]
    fn prefix_is_stable_under_length_change() {
        let s = ObservationModelSpec::AdditiveGaussian(AdditiveGaussian::stationary(vec![0.0], Covariance::isotropic(1, 1.0)));
        let a = sample_utterance(&s, &hmm(1), 10, 11).unwrap();
        let b = sample_utterance(&s, &hmm(1), 20, 11).unwrap();
        assert_eq!(a.observed[..], b.observed[..10]);
    }

    #[test]
    fn takiguchi_without_tail_is_shift() {
        let s = ObservationModelSpec::TakiguchiAr(TakiguchiAr { h: vec![0.25], alpha: vec![f64::NEG_INFINITY] });
        let u = sample_utterance(&s, &hmm(1), 30, 5).unwrap();
        for (x, y) in u.clean.iter().zip(&u.observed) {
            assert_eq!(y[0], x[0] + 0.25);
        }
    }

    #[test]
    fn full_covariance_draw_uses_eigen_square_root() {
        let c = crate::linalg::Matrix::from_rows(&[vec![2.0, 0.0], vec![0.0, 0.0]]).unwrap();
        let mut rng = NamedStreams::new(1).stream(0, 0, "t");
        let v = draw(&mut rng, &[1.0, 3.0], &Covariance::Full(c));
        assert_eq!(v[1], 3.0);
    }
}

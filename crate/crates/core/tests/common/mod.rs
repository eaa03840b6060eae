#![allow(dead_code)]

use bayescomp_core::hmm::FrameEvidence;
use bayescomp_core::{Gaussian, Gmm, Hmm};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

pub fn simplex(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| uniform(rng, 0.05, 1.0)).collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|v| v / total).collect()
}

pub fn random_gaussian(rng: &mut ChaCha8Rng, d: usize) -> Gaussian {
    let mean = (0..d).map(|_| uniform(rng, -2.0, 2.0)).collect();
    let var = (0..d).map(|_| uniform(rng, 0.2, 2.0)).collect();
    Gaussian::diagonal(mean, var).unwrap()
}

pub fn random_hmm(rng: &mut ChaCha8Rng, s: usize, d: usize, k: usize) -> Hmm {
    let initial = simplex(rng, s);
    let transitions = (0..s).map(|_| simplex(rng, s)).collect();
    let emissions = (0..s)
        .map(|_| {
            let w = simplex(rng, k);
            let comps = (0..k).map(|_| random_gaussian(rng, d)).collect();
            Gmm::new(w, comps).unwrap()
        })
        .collect();
    Hmm::new("random", initial, transitions, emissions).unwrap()
}

pub fn random_frames(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<FrameEvidence> {
    (0..n).map(|_| FrameEvidence::new((0..d).map(|_| uniform(rng, -3.0, 3.0)).collect())).collect()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

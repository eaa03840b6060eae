mod common;

use bayescomp_core::compensation::takiguchi_scorer;
use bayescomp_core::hmm::{
    decode_combined_order, decode_conditional, forward_log_score, viterbi, viterbi_3d, Conventional, FnScorer,
    FrameEvidence, Needs, ScoreRequest,
};
use bayescomp_core::obs::TakiguchiAr;
use bayescomp_core::oracles::{brute_force_sequence_score, EnumerationMode};
use bayescomp_core::{log_sum_exp, Gaussian, Gmm, Hmm, LogProb};
use common::*;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn forward_and_viterbi_match_enumeration(seed in any::<u64>(), s in 1usize..=4, n in 1usize..=6, k in 1usize..=2) {
        let mut r = rng(seed);
        let h = random_hmm(&mut r, s, 2, k);
        let ev = random_frames(&mut r, n, 2);
        let c = Conventional::new(&h);
        let sum = brute_force_sequence_score(&h, &c, &ev, EnumerationMode::Sum).unwrap();
        let max = brute_force_sequence_score(&h, &c, &ev, EnumerationMode::Max).unwrap();
        let f = forward_log_score(&h, &c, &ev).unwrap();
        let v = viterbi(&h, &c, &ev).unwrap();
        prop_assert!(rel_err(f.get(), sum.score.get()) <= 1e-10);
        prop_assert_eq!(v.total_log_score, max.score);
        prop_assert_eq!(Some(v.path), max.path);
        prop_assert!(sum.score >= max.score);
    }

    #[test]
    fn frame_scores_sum_to_path_emissions(seed in any::<u64>(), n in 1usize..=8) {
        let mut r = rng(seed);
        let h = random_hmm(&mut r, 3, 2, 2);
        let ev = random_frames(&mut r, n, 2);
        let v = viterbi(&h, &Conventional::new(&h), &ev).unwrap();
        let li = h.initial()[v.path[0]].ln();
        let trans: f64 = v.path.windows(2).map(|w| h.transitions()[w[0]][w[1]].ln()).sum();
        let emit: f64 = v.frame_scores.iter().map(|s| s.get()).sum();
        prop_assert!(rel_err(li + trans + emit, v.total_log_score.get()) < 1e-12);
    }

    #[test]
    fn log_sum_exp_ignores_order(mut values in prop::collection::vec(-50.0f64..50.0, 1..12), rot in 0usize..12) {
        let a = log_sum_exp(&values.iter().map(|&v| LogProb::new(v).unwrap()).collect::<Vec<_>>()).unwrap();
        let r = rot % values.len();
        values.rotate_left(r);
        values.reverse();
        let b = log_sum_exp(&values.iter().map(|&v| LogProb::new(v).unwrap()).collect::<Vec<_>>()).unwrap();
        prop_assert!((a.get() - b.get()).abs() < 1e-12);
        let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(a.get() >= max && a.get() <= max + (values.len() as f64).ln() + 1e-12);
    }

    #[test]
    fn combined_order_matches_enumeration(seed in any::<u64>(), n in 1usize..=4) {
        let mut r = rng(seed);
        let h = random_hmm(&mut r, 3, 1, 1);
        let ev = random_frames(&mut r, n, 1);
        let pair: Vec<Vec<f64>> = (0..3).map(|_| (0..3).map(|_| uniform(&mut r, -2.0, 0.5)).collect()).collect();
        let scorer = FnScorer::with_needs(
            |req: &ScoreRequest<'_>| {
                let base = h.emission(req.state).logpdf(&req.evidence.observed)?.get();
                LogProb::new(base + req.previous_state.map_or(0.0, |p| pair[p][req.state]))
            },
            Needs { previous_state: true, ..Needs::default() },
        );
        let d = decode_combined_order(&h, &scorer, &ev).unwrap();
        let b = brute_force_sequence_score(&h, &scorer, &ev, EnumerationMode::Max).unwrap();
        prop_assert_eq!(Some(d.path), b.path);
        prop_assert_eq!(d.total_log_score, b.score);
    }

    #[test]
    fn joint_decoding_matches_product_enumeration(seed in any::<u64>(), n in 1usize..=3) {
        let mut r = rng(seed);
        let speech = random_hmm(&mut r, 2, 1, 1);
        let noise = random_hmm(&mut r, 2, 1, 1);
        let ev = random_frames(&mut r, n, 1);
        let table: Vec<Vec<f64>> = (0..2).map(|_| (0..2).map(|_| uniform(&mut r, -1.0, 1.0)).collect()).collect();
        let joint = |_n: usize, q: usize, b: usize, e: &FrameEvidence| {
            LogProb::new(speech.emission(q).logpdf(&e.observed)?.get() + table[q][b])
        };
        let d = viterbi_3d(&speech, &noise, &joint, &ev).unwrap();
        let product = speech.product(&noise).unwrap();
        let flat = FnScorer::new(|req: &ScoreRequest<'_>| joint(req.frame, req.state / 2, req.state % 2, req.evidence));
        let b = brute_force_sequence_score(&product, &flat, &ev, EnumerationMode::Max).unwrap();
        let path = b.path.unwrap();
        prop_assert_eq!(d.speech_path, path.iter().map(|i| i / 2).collect::<Vec<_>>());
        prop_assert_eq!(d.noise_path, path.iter().map(|i| i % 2).collect::<Vec<_>>());
        prop_assert!(rel_err(d.total_log_score.get(), b.score.get()) < 1e-12);
    }
}

#[test]
fn permutation_chain_is_forced() {
    let e = |m: f64| Gmm::single(Gaussian::diagonal(vec![m], vec![1.0]).unwrap());
    let h = Hmm::new("cycle", vec![1.0, 0.0, 0.0], vec![vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0], vec![1.0, 0.0, 0.0]], vec![e(5.0), e(0.0), e(-5.0)])
        .unwrap();
    let ev: Vec<FrameEvidence> = [9.0, 9.0, 9.0, 9.0].iter().map(|&v| FrameEvidence::new(vec![v])).collect();
    assert_eq!(viterbi(&h, &Conventional::new(&h), &ev).unwrap().path, vec![0, 1, 2, 0]);
}

#[test]
fn takiguchi_decoding_matches_enumeration() {
    let e = |m: f64| Gmm::single(Gaussian::diagonal(vec![m], vec![0.5]).unwrap());
    let h = Hmm::new("t", vec![0.5, 0.5], vec![vec![0.8, 0.2], vec![0.3, 0.7]], vec![e(0.0), e(1.5)]).unwrap();
    let spec = TakiguchiAr { h: vec![0.1], alpha: vec![-1.2] };
    let ev: Vec<FrameEvidence> = [0.2, 1.4, 1.6].iter().map(|&v| FrameEvidence::new(vec![v])).collect();
    let t = takiguchi_scorer(&spec, &h).unwrap();
    let d = decode_conditional(&h, &t, &ev).unwrap();
    let b = brute_force_sequence_score(&h, &t, &ev, EnumerationMode::Max).unwrap();
    assert_eq!(Some(d.path), b.path);
    assert_eq!(d.total_log_score, b.score);
    assert!(d.invalid_frames.is_empty());
}

#[test]
fn state_independent_emissions_follow_transitions() {
    let e = Gmm::single(Gaussian::standard(1));
    let h = Hmm::new("tr", vec![0.2, 0.8], vec![vec![0.9, 0.1], vec![0.6, 0.4]], vec![e.clone(), e]).unwrap();
    let ev = vec![FrameEvidence::new(vec![0.3]); 3];
    assert_eq!(viterbi(&h, &Conventional::new(&h), &ev).unwrap().path, vec![1, 0, 0]);
}

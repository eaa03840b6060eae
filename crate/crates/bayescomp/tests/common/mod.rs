#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use bayescomp::config::{ClassSpec, ExperimentConfig, LengthRange, Scoring, TechniqueSpec};
use bayescomp::features::FeatureFormat;
use bayescomp_core::obs::AdditiveGaussian;
use bayescomp_core::{Covariance, Gaussian, Gmm, Hmm, ObservationModelSpec};
use serde_json::Map;

pub fn two_state(name: &str, means: [[f64; 2]; 2], var: f64) -> Hmm {
    let em = means.iter().map(|m| Gmm::single(Gaussian::diagonal(m.to_vec(), vec![var; 2]).unwrap())).collect();
    Hmm::new(name, vec![0.6, 0.4], vec![vec![0.8, 0.2], vec![0.2, 0.8]], em).unwrap()
}

pub fn additive(var: f64) -> ObservationModelSpec {
    let cov = if var == 0.0 { Covariance::zeros(2) } else { Covariance::Diagonal(vec![var; 2]) };
    ObservationModelSpec::AdditiveGaussian(AdditiveGaussian::stationary(vec![0.0; 2], cov))
}

pub fn config(classes: Vec<Hmm>, observation: ObservationModelSpec, technique: &str, trials: usize, seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        schema_version: 1,
        seed,
        classes: classes
            .into_iter()
            .map(|m| ClassSpec { name: m.model_id().to_string(), model: Some(m), path: None })
            .collect(),
        observation,
        technique: TechniqueSpec { id: technique.into(), params: Map::new() },
        trials,
        length: LengthRange { min: 5, max: 20 },
        scoring: Scoring::Forward,
        frame_traces: false,
        format: FeatureFormat::Csv,
        dataset: None,
        output: None,
    }
}

/// Two classes whose state variances differ, observed through heavy additive noise.
pub fn noisy_task(technique: &str) -> ExperimentConfig {
    let narrow = two_state("narrow", [[0.0, 0.0], [1.5, 1.0]], 0.3);
    let broad = two_state("broad", [[0.3, 0.2], [1.8, 1.3]], 1.2);
    config(vec![narrow, broad], additive(2.0), technique, 500, 20241018)
}

/// Two classes far apart, observed without distortion.
pub fn separable_task() -> ExperimentConfig {
    let a = two_state("left", [[-5.0, -5.0], [-4.0, -6.0]], 0.5);
    let b = two_state("right", [[5.0, 5.0], [4.0, 6.0]], 0.5);
    config(vec![a, b], additive(0.0), "conventional", 50, 3)
}

pub fn write_config(dir: &Path, cfg: &ExperimentConfig) -> PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, cfg.to_json()).unwrap();
    path
}

pub fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bayescomp")).args(args).output().expect("binary runs")
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

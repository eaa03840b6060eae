//! Experiment configuration files (`"schema_version": 1`).

use std::fs;
use std::path::{Path, PathBuf};

use bayescomp_core::compensation::TECHNIQUES;
use bayescomp_core::{Hmm, ObservationModelSpec};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{HarnessError, Result};
use crate::features::FeatureFormat;
use crate::model_file::{check_version, ModelFile};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassSpec {
    pub name: String,
    /// Inline model.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<Hmm>,
    /// Model file, relative to the configuration file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TechniqueSpec {
    pub id: String,
    #[serde(default, skip_serializing_if = "Map::is_empty")]
    pub params: Map<String, Value>,
}

/// Utterance lengths are drawn uniformly from `min..=max`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LengthRange {
    pub min: usize,
    pub max: usize,
}

impl Default for LengthRange {
    fn default() -> Self {
        Self { min: 5, max: 20 }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Scoring {
    #[default]
    Forward,
    Viterbi,
}

fn default_trials() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub seed: u64,
    pub classes: Vec<ClassSpec>,
    pub observation: ObservationModelSpec,
    pub technique: TechniqueSpec,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub length: LengthRange,
    #[serde(default)]
    pub scoring: Scoring,
    /// Include per-frame score traces in reports.
    #[serde(default)]
    pub frame_traces: bool,
    #[serde(default = "default_format")]
    pub format: FeatureFormat,
    /// Dataset directory read by `decode`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

fn default_format() -> FeatureFormat {
    FeatureFormat::Csv
}

/// A validated configuration with its class models loaded.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub models: Vec<Hmm>,
    /// Directory that relative paths in the configuration resolve against.
    pub base_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(HarnessError::json(path))?;
        check_version(cfg.schema_version, path)?;
        Ok(cfg)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(HarnessError::io(path))?;
        Self::parse(&text, path)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serialization cannot fail");
        s.push('\n');
        s
    }
}

impl Experiment {
    pub fn load(path: &Path) -> Result<Self> {
        let config = ExperimentConfig::read(path)?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::new(config, base_dir)
    }

    pub fn new(config: ExperimentConfig, base_dir: PathBuf) -> Result<Self> {
        let mut models = Vec::with_capacity(config.classes.len());
        for c in &config.classes {
            let model = match (&c.model, &c.path) {
                (Some(m), None) => m.clone(),
                (None, Some(p)) => ModelFile::read(&base_dir.join(p))?.model,
                _ => return Err(HarnessError::Config(format!("class {:?} needs exactly one of model, path", c.name))),
            };
            models.push(model);
        }
        let exp = Self { config, models, base_dir };
        exp.validate()?;
        Ok(exp)
    }

    pub fn dim(&self) -> usize {
        self.models[0].dim()
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        self.base_dir.join(p)
    }

    fn validate(&self) -> Result<()> {
        let c = &self.config;
        if self.models.is_empty() {
            return Err(HarnessError::Config("at least one class is required".into()));
        }
        if let Some(m) = self.models.iter().find(|m| m.dim() != self.dim()) {
            return Err(HarnessError::Config(format!(
                "model {:?} has dimension {}, expected {}",
                m.model_id(),
                m.dim(),
                self.dim()
            )));
        }
        check_technique(&c.technique.id)?;
        if c.trials == 0 {
            return Err(HarnessError::Config("trials must be positive".into()));
        }
        if c.length.min == 0 || c.length.min > c.length.max {
            return Err(HarnessError::Config(format!("invalid length range {}..={}", c.length.min, c.length.max)));
        }
        c.observation.validate(self.dim())?;
        Ok(())
    }
}

pub fn check_technique(id: &str) -> Result<&'static str> {
    TECHNIQUES
        .iter()
        .find(|t| **t == id)
        .copied()
        .ok_or_else(|| HarnessError::Config(format!("unknown technique {id:?}; known: {}", TECHNIQUES.join(", "))))
}

#[cfg(test)]
mod tests {
    use super::*;
    use bayescomp_core::obs::AdditiveGaussian;
    use bayescomp_core::{Covariance, Gaussian, Gmm};

    pub(crate) fn sample_config() -> ExperimentConfig {
        let g = |m: f64| Gmm::single(Gaussian::diagonal(vec![m], vec![1.0]).unwrap());
        let h = Hmm::new("a", vec![1.0], vec![vec![1.0]], vec![g(0.0)]).unwrap();
        ExperimentConfig {
            schema_version: 1,
            seed: 7,
            classes: vec![ClassSpec { name: "a".into(), model: Some(h), path: None }],
            observation: ObservationModelSpec::AdditiveGaussian(AdditiveGaussian::stationary(vec![0.0], Covariance::Diagonal(vec![0.5]))),
            technique: TechniqueSpec { id: "arrowood".into(), params: Map::new() },
            trials: 3,
            length: LengthRange::default(),
            scoring: Scoring::Forward,
            frame_traces: false,
            format: FeatureFormat::Csv,
            dataset: None,
            output: None,
        }
    }

    #[test]
    fn round_trip_and_defaults() {
        let cfg = sample_config();
        let back = ExperimentConfig::parse(&cfg.to_json(), Path::new("c.json")).unwrap();
        assert_eq!(back, cfg);
        let mut v: Value = serde_json::from_str(&cfg.to_json()).unwrap();
        let obj = v.as_object_mut().unwrap();
        for k in ["trials", "length", "scoring", "frame_traces", "format"] {
            obj.remove(k);
        }
        let d = ExperimentConfig::parse(&v.to_string(), Path::new("c.json")).unwrap();
        assert_eq!((d.trials, d.length, d.scoring), (100, LengthRange { min: 5, max: 20 }, Scoring::Forward));
    }

    #[test]
    fn seed_is_mandatory() {
        let mut v: Value = serde_json::from_str(&sample_config().to_json()).unwrap();
        v.as_object_mut().unwrap().remove("seed");
        assert!(ExperimentConfig::parse(&v.to_string(), Path::new("c.json")).is_err());
    }

    #[test]
    fn rejects_unknown_technique_and_bad_ranges() {
        let mut cfg = sample_config();
        cfg.technique.id = "nope".into();
        assert!(matches!(Experiment::new(cfg, PathBuf::new()), Err(HarnessError::Config(_))));
        let mut cfg = sample_config();
        cfg.length = LengthRange { min: 4, max: 3 };
        assert!(Experiment::new(cfg, PathBuf::new()).is_err());
        let mut cfg = sample_config();
        cfg.classes[0].path = Some("x.json".into());
        assert!(Experiment::new(cfg, PathBuf::new()).is_err());
    }
}

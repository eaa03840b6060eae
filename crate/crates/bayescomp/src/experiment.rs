//! Synthetic datasets, trial decoding and metric reports.

use std::fs;
use std::path::Path;

use bayescomp_core::obs::{sample_utterance_at, Latents, NamedStreams};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Experiment, Scoring};
use crate::error::{HarnessError, Result};
use crate::features::{read_features, write_features, FeatureFormat};
use crate::model_file::check_version;
use crate::technique::{ClassDecode, Prepared};

pub const SCHEMA_VERSION: u32 = 1;

/// One sampled utterance with its hidden variables.
#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub id: String,
    pub class: usize,
    pub clean: Vec<Vec<f64>>,
    pub observed: Vec<Vec<f64>>,
    pub states: Vec<usize>,
    pub components: Vec<usize>,
    pub latents: Vec<Latents>,
}

pub fn utterance_id(trial: usize) -> String {
    format!("utt_{trial:05}")
}

/// Draws trial `trial`: class and length from their own streams, then the
/// utterance itself.
pub fn sample_trial(exp: &Experiment, streams: &NamedStreams, trial: usize) -> Result<Utterance> {
    let t = trial as u64;
    let class = streams.stream(t, 0, "class").random_range(0..exp.models.len());
    let len = {
        let r = exp.config.length;
        streams.stream(t, 0, "length").random_range(r.min..=r.max)
    };
    let u = sample_utterance_at(&exp.config.observation, &exp.models[class], len, streams, t)?;
    Ok(Utterance {
        id: utterance_id(trial),
        class,
        clean: u.clean,
        observed: u.observed,
        states: u.states,
        components: u.components,
        latents: u.latents,
    })
}

pub fn generate(exp: &Experiment) -> Result<Vec<Utterance>> {
    let streams = NamedStreams::new(exp.config.seed);
    (0..exp.config.trials).into_par_iter().map(|t| sample_trial(exp, &streams, t)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub class: usize,
    pub class_name: String,
    pub frames: usize,
    pub clean: String,
    pub observed: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub seed: u64,
    pub dim: usize,
    pub format: FeatureFormat,
    pub observation_family: String,
    pub utterances: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentRecord {
    pub id: String,
    pub states: Vec<usize>,
    pub components: Vec<usize>,
    pub latents: Vec<Latents>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentSidecar {
    pub schema_version: u32,
    pub utterances: Vec<LatentRecord>,
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value).map_err(HarnessError::json(path))?;
    s.push('\n');
    fs::write(path, s).map_err(HarnessError::io(path))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(HarnessError::io(path))?;
    serde_json::from_str(&text).map_err(HarnessError::json(path))
}

/// Writes features, `manifest.json` and `latents.json` into `dir`.
pub fn write_dataset(exp: &Experiment, utterances: &[Utterance], dir: &Path, format: FeatureFormat) -> Result<Manifest> {
    fs::create_dir_all(dir).map_err(HarnessError::io(dir))?;
    let ext = format.extension();
    let mut entries = Vec::with_capacity(utterances.len());
    for u in utterances {
        let clean = format!("{}.clean.{ext}", u.id);
        let observed = format!("{}.observed.{ext}", u.id);
        write_features(&dir.join(&clean), &u.clean)?;
        write_features(&dir.join(&observed), &u.observed)?;
        entries.push(ManifestEntry {
            id: u.id.clone(),
            class: u.class,
            class_name: exp.config.classes[u.class].name.clone(),
            frames: u.observed.len(),
            clean,
            observed,
        });
    }
    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        seed: exp.config.seed,
        dim: exp.dim(),
        format,
        observation_family: exp.config.observation.family().into(),
        utterances: entries,
    };
    write_json(&dir.join("manifest.json"), &manifest)?;
    let sidecar = LatentSidecar {
        schema_version: SCHEMA_VERSION,
        utterances: utterances
            .iter()
            .map(|u| LatentRecord {
                id: u.id.clone(),
                states: u.states.clone(),
                components: u.components.clone(),
                latents: u.latents.clone(),
            })
            .collect(),
    };
    write_json(&dir.join("latents.json"), &sidecar)?;
    Ok(manifest)
}

/// Features of one stored utterance.
#[derive(Debug, Clone, PartialEq)]
pub struct StoredUtterance {
    pub id: String,
    pub class: usize,
    pub clean: Option<Vec<Vec<f64>>>,
    pub observed: Vec<Vec<f64>>,
}

pub fn read_dataset(dir: &Path) -> Result<(Manifest, Vec<StoredUtterance>)> {
    let path = dir.join("manifest.json");
    let manifest: Manifest = read_json(&path)?;
    check_version(manifest.schema_version, &path)?;
    let mut out = Vec::with_capacity(manifest.utterances.len());
    for e in &manifest.utterances {
        let observed = read_features(&dir.join(&e.observed))?;
        let clean_path = dir.join(&e.clean);
        let clean = if clean_path.exists() { Some(read_features(&clean_path)?) } else { None };
        if observed.len() != e.frames {
            return Err(HarnessError::Format {
                path: dir.join(&e.observed),
                detail: format!("{} frames, manifest says {}", observed.len(), e.frames),
            });
        }
        out.push(StoredUtterance { id: e.id.clone(), class: e.class, clean, observed });
    }
    Ok((manifest, out))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub trial: usize,
    pub id: String,
    pub true_class: usize,
    pub decision: usize,
    /// Log score per class model; `null` stands for `-inf`.
    pub scores: Vec<f64>,
    /// True-class score minus the best competing score.
    pub margin: f64,
    pub frames: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame_scores: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub schema_version: u32,
    pub technique: String,
    pub seed: u64,
    pub scoring: Scoring,
    pub trials: usize,
    pub accuracy: f64,
    pub mean_margin: f64,
    pub results: Vec<TrialResult>,
}

/// Best-class decoding output for one utterance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceDecode {
    pub id: String,
    pub class: usize,
    pub decoder: String,
    pub total_log_score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<Vec<usize>>,
    pub frame_scores: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub invalid_frames: Vec<usize>,
}

/// Lowest index wins ties.
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

fn margin(scores: &[f64], truth: usize) -> f64 {
    let other = scores.iter().enumerate().filter(|(i, _)| *i != truth).map(|(_, s)| *s).fold(f64::NEG_INFINITY, f64::max);
    if scores.len() < 2 || scores[truth] == other {
        0.0
    } else {
        scores[truth] - other
    }
}

fn decode_one(
    prepared: &Prepared,
    trial: usize,
    u: &StoredUtterance,
    scoring: Scoring,
    traces: bool,
) -> Result<(TrialResult, UtteranceDecode)> {
    let evidence = prepared.evidence(u.clean.as_deref(), &u.observed)?;
    let decodes: Vec<ClassDecode> =
        (0..prepared.models().len()).map(|c| prepared.decode(c, &evidence, scoring)).collect::<Result<_>>()?;
    let scores: Vec<f64> = decodes.iter().map(|d| d.total).collect();
    if scores.iter().any(|s| s.is_nan() || *s == f64::INFINITY) {
        return Err(HarnessError::NumericFailure(format!("non-finite class score {scores:?} in utterance {}", u.id)));
    }
    let decision = argmax(&scores);
    let best = &decodes[decision];
    let result = TrialResult {
        trial,
        id: u.id.clone(),
        true_class: u.class,
        decision,
        margin: margin(&scores, u.class),
        frames: u.observed.len(),
        frame_scores: traces.then(|| decodes.iter().map(|d| d.frame_scores.clone()).collect()),
        scores,
    };
    let decode = UtteranceDecode {
        id: u.id.clone(),
        class: decision,
        decoder: best.decoder.into(),
        total_log_score: best.total,
        path: best.path.clone(),
        frame_scores: best.frame_scores.clone(),
        invalid_frames: best.invalid_frames.clone(),
    };
    Ok((result, decode))
}

/// Decodes every utterance against every class; results are in input order.
pub fn decode_all(
    exp: &Experiment,
    prepared: &Prepared,
    utterances: &[StoredUtterance],
) -> Result<(MetricsReport, Vec<UtteranceDecode>)> {
    let cfg = &exp.config;
    let pairs: Vec<(TrialResult, UtteranceDecode)> = utterances
        .par_iter()
        .enumerate()
        .map(|(t, u)| decode_one(prepared, t, u, cfg.scoring, cfg.frame_traces))
        .collect::<Result<_>>()?;
    let (results, decodes): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
    let n = results.len().max(1) as f64;
    let correct = results.iter().filter(|r| r.decision == r.true_class).count();
    let report = MetricsReport {
        schema_version: SCHEMA_VERSION,
        technique: prepared.id.into(),
        seed: cfg.seed,
        scoring: cfg.scoring,
        trials: results.len(),
        accuracy: correct as f64 / n,
        mean_margin: results.iter().map(|r| r.margin).sum::<f64>() / n,
        results,
    };
    if report.mean_margin.is_nan() {
        return Err(HarnessError::NumericFailure("mean margin is NaN".into()));
    }
    Ok((report, decodes))
}

pub fn prepare(exp: &Experiment) -> Result<Prepared> {
    let c = &exp.config;
    Prepared::new(&c.technique.id, &c.technique.params, &c.observation, &exp.models, c.seed)
}

impl From<Utterance> for StoredUtterance {
    fn from(u: Utterance) -> Self {
        StoredUtterance { id: u.id, class: u.class, clean: Some(u.clean), observed: u.observed }
    }
}

/// Samples the trials in memory and decodes them.
pub fn evaluate(exp: &Experiment) -> Result<MetricsReport> {
    let prepared = prepare(exp)?;
    let utterances: Vec<StoredUtterance> = generate(exp)?.into_iter().map(Into::into).collect();
    Ok(decode_all(exp, &prepared, &utterances)?.0)
}

impl MetricsReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serialization cannot fail");
        s.push('\n');
        s
    }
}

use std::fs;
use std::path::Path;

use bayescomp::experiment::{Manifest, MetricsReport, UtteranceDecode};
use bayescomp::features::read_features;
use bayescomp::model_file::ModelFile;
use bayescomp::HarnessError;

mod common;
use common::{cli, s, write_config};

fn generate(cfg: &bayescomp::config::ExperimentConfig, dir: &Path, extra: &[&str]) -> Manifest {
    let config = write_config(dir, cfg);
    let data = dir.join("data");
    let mut args = vec!["generate", "--config", s(&config), "--output", s(&data)];
    args.extend_from_slice(extra);
    let out = cli(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_str(&fs::read_to_string(data.join("manifest.json")).unwrap()).unwrap()
}

fn decode(dir: &Path, out_name: &str, jobs: &str) -> std::path::PathBuf {
    let out_dir = dir.join(out_name);
    let config = dir.join("config.json");
    let data = dir.join("data");
    let out = cli(&["--jobs", jobs, "decode", "--config", s(&config), "--dataset", s(&data), "--output", s(&out_dir)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    out_dir
}

#[test]
fn generation_is_reproducible_for_a_fixed_seed() {
    let cfg = common::noisy_task("conventional");
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ma = generate(&cfg, a.path(), &["--format", "bin"]);
    let mb = generate(&cfg, b.path(), &["--format", "bin"]);
    assert_eq!(ma, mb);
    for e in ma.utterances.iter().take(40) {
        for f in [&e.clean, &e.observed] {
            assert_eq!(fs::read(a.path().join("data").join(f)).unwrap(), fs::read(b.path().join("data").join(f)).unwrap());
        }
    }
    assert_eq!(fs::read(a.path().join("data/latents.json")).unwrap(), fs::read(b.path().join("data/latents.json")).unwrap());
}

#[test]
fn seed_flag_changes_the_sample() {
    let cfg = common::noisy_task("conventional");
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ma = generate(&cfg, a.path(), &[]);
    let mb = generate(&cfg, b.path(), &["--seed", "7"]);
    assert_eq!(mb.seed, 7);
    assert_ne!(ma.utterances, mb.utterances);
}

#[test]
fn zero_noise_observations_equal_clean_features() {
    let mut cfg = common::separable_task();
    cfg.trials = 30;
    let dir = tempfile::tempdir().unwrap();
    let m = generate(&cfg, dir.path(), &[]);
    let data = dir.path().join("data");
    for e in &m.utterances {
        assert_eq!(fs::read(data.join(&e.clean)).unwrap(), fs::read(data.join(&e.observed)).unwrap());
    }
}

#[test]
fn manifest_counts_match_the_feature_files() {
    let mut cfg = common::noisy_task("conventional");
    cfg.trials = 100;
    let dir = tempfile::tempdir().unwrap();
    let m = generate(&cfg, dir.path(), &[]);
    assert_eq!(m.utterances.len(), 100);
    assert_eq!(m.dim, 2);
    let data = dir.path().join("data");
    let mut lengths = std::collections::BTreeSet::new();
    for e in &m.utterances {
        assert!((5..=20).contains(&e.frames));
        assert!(e.class < 2);
        lengths.insert(e.frames);
        for f in [&e.clean, &e.observed] {
            let frames = read_features(&data.join(f)).unwrap();
            assert_eq!(frames.len(), e.frames);
            assert!(frames.iter().all(|r| r.len() == 2));
        }
    }
    assert!(lengths.len() > 5, "lengths barely vary: {lengths:?}");
}

#[test]
fn separable_clean_task_is_decoded_perfectly() {
    let cfg = common::separable_task();
    let dir = tempfile::tempdir().unwrap();
    generate(&cfg, dir.path(), &[]);
    let out = decode(dir.path(), "out", "2");
    let report: MetricsReport = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report.trials, 50);
    assert_eq!(report.accuracy, 1.0);
    assert!(report.results.iter().all(|r| r.margin > 0.0));
    assert!(out.join("timing.json").exists());
}

#[test]
fn frame_scores_sum_to_the_utterance_score() {
    let mut cfg = common::noisy_task("arrowood");
    cfg.trials = 40;
    cfg.frame_traces = true;
    let dir = tempfile::tempdir().unwrap();
    generate(&cfg, dir.path(), &[]);
    for scoring in ["forward", "viterbi"] {
        let out_dir = dir.path().join(scoring);
        let out = cli(&[
            "decode", "--config", s(&dir.path().join("config.json")), "--dataset", s(&dir.path().join("data")),
            "--output", s(&out_dir), "--scoring", scoring,
        ]);
        assert!(out.status.success());
        let decodes: Vec<UtteranceDecode> = serde_json::from_str(&fs::read_to_string(out_dir.join("decodes.json")).unwrap()).unwrap();
        assert_eq!(decodes.len(), 40);
        let report: MetricsReport = serde_json::from_str(&fs::read_to_string(out_dir.join("report.json")).unwrap()).unwrap();
        for r in &report.results {
            let traces = r.frame_scores.as_ref().unwrap();
            for (trace, total) in traces.iter().zip(&r.scores) {
                assert_eq!(trace.len(), r.frames);
                let sum: f64 = trace.iter().sum();
                assert!((sum - total).abs() <= 1e-9 * total.abs().max(1.0));
            }
            assert_eq!(decodes[r.trial].class, r.decision);
        }
        for d in &decodes {
            let sum: f64 = d.frame_scores.iter().sum();
            assert!((sum - d.total_log_score).abs() <= 1e-9 * d.total_log_score.abs().max(1.0), "{} {sum} {}", d.id, d.total_log_score);
            assert_eq!(d.path.is_some(), scoring == "viterbi");
        }
    }
}

#[test]
fn decode_reports_do_not_depend_on_thread_count() {
    let mut cfg = common::noisy_task("missing.marginalization");
    cfg.trials = 60;
    let dir = tempfile::tempdir().unwrap();
    generate(&cfg, dir.path(), &[]);
    let one = decode(dir.path(), "one", "1");
    let four = decode(dir.path(), "four", "4");
    for f in ["report.json", "decodes.json"] {
        assert_eq!(fs::read(one.join(f)).unwrap(), fs::read(four.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn mllr_with_zero_distortion_leaves_models_unchanged() {
    let cfg = common::separable_task();
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &bayescomp::config::ExperimentConfig {
        technique: bayescomp::config::TechniqueSpec { id: "mllr".into(), params: Default::default() },
        ..cfg.clone()
    });
    let model_in = dir.path().join("left.json");
    ModelFile::new(cfg.classes[0].model.clone().unwrap(), None).write(&model_in).unwrap();
    let model_out = dir.path().join("left.mllr.json");
    let out = cli(&["adapt", "--config", s(&config), "--model", s(&model_in), "--output", s(&model_out)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let adapted = ModelFile::read(&model_out).unwrap();
    assert_eq!(adapted.model, cfg.classes[0].model.clone().unwrap());
    assert!(adapted.provenance.is_some());

    let out = cli(&["adapt", "--config", s(&config), "--output", s(&dir.path().join("all"))]);
    assert!(out.status.success());
    for c in &cfg.classes {
        let m = ModelFile::read(&dir.path().join("all").join(format!("{}.model.json", c.name))).unwrap();
        assert_eq!(&m.model, c.model.as_ref().unwrap());
    }
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = common::separable_task();
    let config = write_config(dir.path(), &cfg);
    let code = |args: &[&str]| cli(args).status.code().unwrap();

    assert_eq!(code(&["oracle-check", "degenerate-limits"]), 0);
    assert_eq!(code(&["oracle-check", "no-such-suite"]), 1);
    assert_eq!(code(&["no-such-command"]), 1);
    assert_eq!(code(&["evaluate", "--config", s(&dir.path().join("missing.json"))]), 1);
    assert_eq!(code(&["evaluate", "--config", s(&config), "--technique", "nonsense", "--output", s(dir.path())]), 1);
    assert_eq!(code(&["decode", "--config", s(&config), "--dataset", s(&dir.path().join("nowhere")), "--output", s(dir.path())]), 1);
    assert_eq!(code(&["adapt", "--config", s(&config), "--technique", "arrowood", "--output", s(dir.path())]), 1);

    let mut v: serde_json::Value = serde_json::from_str(&cfg.to_json()).unwrap();
    v.as_object_mut().unwrap().remove("seed");
    let no_seed = dir.path().join("no_seed.json");
    fs::write(&no_seed, v.to_string()).unwrap();
    assert_eq!(code(&["evaluate", "--config", s(&no_seed), "--output", s(dir.path())]), 1);

    assert_eq!(HarnessError::NumericFailure("nan score".into()).exit_code(), 2);
    assert_eq!(HarnessError::Config("bad".into()).exit_code(), 1);
}

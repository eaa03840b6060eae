//! Acceptance criteria, one line per criterion. Exits non-zero if any fails.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use bayescomp::config::Experiment;
use bayescomp::experiment::evaluate;
use bayescomp::suites::{run_suite, SuiteReport};

struct Outcome {
    passed: bool,
    detail: String,
}

fn from_suite(name: &str, limit_secs: Option<f64>) -> Outcome {
    let start = Instant::now();
    let report: SuiteReport = match run_suite(name) {
        Ok(r) => r,
        Err(e) => return Outcome { passed: false, detail: format!("error: {e}") },
    };
    let secs = start.elapsed().as_secs_f64();
    let mut passed = report.passed();
    let mut parts = Vec::new();
    for c in &report.checks {
        if c.informational {
            parts.push(format!("informational: {} = {:.3e} (nominal {:.1e})", c.name, c.value, c.bound));
        } else {
            let tag = if c.passed() { "" } else { "FAILED " };
            parts.push(format!("{tag}{} = {:.3e} (<= {:.1e})", c.name, c.value, c.bound));
        }
    }
    if let Some(limit) = limit_secs {
        passed &= secs < limit;
        parts.push(format!("wall {secs:.2}s (< {limit}s)"));
    }
    Outcome { passed, detail: parts.join("; ") }
}

fn directional() -> Outcome {
    let start = Instant::now();
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/two_class.json");
    let base = match Experiment::load(&path) {
        Ok(e) => e,
        Err(e) => return Outcome { passed: false, detail: format!("error: {e}") },
    };
    let mut acc = Vec::new();
    for id in ["conventional", "arrowood", "missing.marginalization"] {
        let mut cfg = base.config.clone();
        cfg.technique.id = id.into();
        cfg.technique.params.clear();
        cfg.trials = 500;
        let result = Experiment::new(cfg, base.base_dir.clone()).and_then(|e| evaluate(&e));
        match result {
            Ok(r) => acc.push(r.accuracy),
            Err(e) => return Outcome { passed: false, detail: format!("{id}: {e}") },
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let passed = acc[1] >= acc[0] && acc[2] >= acc[0] && secs < 120.0;
    Outcome {
        passed,
        detail: format!(
            "500 trials: conventional {:.3}, arrowood {:.3}, marginalization {:.3}; wall {secs:.2}s (< 120s)",
            acc[0], acc[1], acc[2]
        ),
    }
}

fn run(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_bayescomp")).args(args).output().map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr).trim()))
    }
}

fn determinism() -> Outcome {
    let check = || -> Result<String, String> {
        let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
        let config = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/two_class.json");
        let config = config.to_str().unwrap();
        let p = |name: &str| tmp.path().join(name).to_str().unwrap().to_string();
        let mut compared = 0;
        for (data, format) in [("data_csv", "csv"), ("data_bin", "bin")] {
            run(&["generate", "--config", config, "--format", format, "--output", &p(data)])?;
            let a = p(&format!("{data}_a"));
            let b = p(&format!("{data}_b"));
            run(&["--jobs", "1", "decode", "--config", config, "--dataset", &p(data), "--output", &a])?;
            run(&["--jobs", "4", "decode", "--config", config, "--dataset", &p(data), "--output", &b])?;
            for f in ["report.json", "decodes.json"] {
                let x = std::fs::read(Path::new(&a).join(f)).map_err(|e| e.to_string())?;
                let y = std::fs::read(Path::new(&b).join(f)).map_err(|e| e.to_string())?;
                if x != y {
                    return Err(format!("{data}/{f} differs between runs"));
                }
                compared += x.len();
            }
        }
        Ok(format!("csv and bin datasets, 1 vs 4 jobs: {compared} report bytes identical"))
    };
    match check() {
        Ok(detail) => Outcome { passed: true, detail },
        Err(detail) => Outcome { passed: false, detail },
    }
}

fn main() {
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome>)> = vec![
        ("1 dp exactness", Box::new(|| from_suite("dp-exactness", None))),
        ("2 closed form vs quadrature", Box::new(|| from_suite("quadrature", None))),
        ("3 degenerate limits", Box::new(|| from_suite("degenerate-limits", None))),
        ("4 consistency pairs", Box::new(|| from_suite("consistency", None))),
        ("5 pmc approximation regime", Box::new(|| from_suite("pmc-regime", None))),
        ("6 vts jacobian", Box::new(|| from_suite("vts-jacobian", None))),
        ("7 takiguchi normalization", Box::new(|| from_suite("takiguchi-normalization", None))),
        ("8 map limits", Box::new(|| from_suite("map-limits", None))),
        ("9 end-to-end direction", Box::new(directional)),
        ("10 decode determinism", Box::new(determinism)),
    ];
    let mut failures = 0;
    for (name, f) in &criteria {
        let o = f();
        if !o.passed {
            failures += 1;
        }
        println!("{} criterion {name}: {}", if o.passed { "PASS" } else { "FAIL" }, o.detail);
    }
    println!("{} of {} criteria passed", criteria.len() - failures, criteria.len());
    if failures > 0 {
        std::process::exit(1);
    }
}

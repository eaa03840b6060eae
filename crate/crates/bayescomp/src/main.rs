use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use bayescomp::config::{check_technique, Experiment, Scoring};
use bayescomp::experiment::{decode_all, generate, prepare, read_dataset, write_dataset};
use bayescomp::features::FeatureFormat;
use bayescomp::model_file::ModelFile;
use bayescomp::suites::{run_suite, SUITES};
use bayescomp::technique::{adapt_model, Context, Params};
use bayescomp::{HarnessError, Result};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bayescomp", version, about = "Compensated HMM decoding experiments")]
struct Cli {
    /// Worker threads for trial-level parallelism (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configuration seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the configured technique id.
    #[arg(long)]
    technique: Option<String>,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a dataset: clean and observed features, manifest and latents.
    Generate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        format: Option<FeatureFormat>,
    },
    /// Apply a model-rewriting technique to a model file (or every class model).
    Adapt {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Decode a generated dataset and write a metrics report.
    Decode {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long, value_enum)]
        scoring: Option<Scoring>,
    },
    /// Sample and decode in memory, then write a metrics report.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        scoring: Option<Scoring>,
    },
    /// Run an oracle suite and print its pass/fail table.
    OracleCheck {
        /// Suite name, or `all`.
        suite: String,
    },
}

fn load(common: &Common, scoring: Option<Scoring>) -> Result<Experiment> {
    let mut exp = Experiment::load(&common.config)?;
    if let Some(seed) = common.seed {
        exp.config.seed = seed;
    }
    if let Some(t) = &common.technique {
        check_technique(t)?;
        exp.config.technique.id = t.clone();
    }
    if let Some(s) = scoring {
        exp.config.scoring = s;
    }
    Ok(exp)
}

fn output_dir(exp: &Experiment, flag: &Option<PathBuf>) -> Result<PathBuf> {
    flag.clone()
        .or_else(|| exp.config.output.as_ref().map(|p| exp.resolve(p)))
        .ok_or_else(|| HarnessError::Config("no output directory: pass --output or set \"output\"".into()))
}

fn write_timing(dir: &Path, start: Instant) -> Result<()> {
    let path = dir.join("timing.json");
    let body = format!("{{\n  \"wall_clock_seconds\": {}\n}}\n", start.elapsed().as_secs_f64());
    std::fs::write(&path, body).map_err(|source| HarnessError::Io { path, source })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|source| HarnessError::Io { path: path.into(), source })
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|source| HarnessError::Io { path: dir.into(), source })
}

fn execute(command: Command) -> Result<bool> {
    let start = Instant::now();
    match command {
        Command::Generate { common, format } => {
            let exp = load(&common, None)?;
            let dir = common
                .output
                .clone()
                .or_else(|| exp.config.dataset.as_ref().map(|p| exp.resolve(p)))
                .map_or_else(|| output_dir(&exp, &None), Ok)?;
            let utterances = generate(&exp)?;
            let manifest = write_dataset(&exp, &utterances, &dir, format.unwrap_or(exp.config.format))?;
            println!("wrote {} utterances to {}", manifest.utterances.len(), dir.display());
        }
        Command::Adapt { common, model } => {
            let exp = load(&common, None)?;
            let id = exp.config.technique.id.as_str();
            let params = Params::new(&exp.config.technique.params);
            let spec = &exp.config.observation;
            let seed = exp.config.seed;
            match model {
                Some(path) => {
                    let input = ModelFile::read(&path)?;
                    let ctx = Context { spec, params: &params, seed, class: 0 };
                    let adapted = adapt_model(id, &input.model, &ctx)?;
                    let out = common.output.clone().ok_or_else(|| HarnessError::Config("adapt --model needs --output <file>".into()))?;
                    ModelFile::new(adapted.adapted, Some(adapted.provenance)).write(&out)?;
                    println!("wrote {}", out.display());
                }
                None => {
                    let dir = output_dir(&exp, &common.output)?;
                    create_dir(&dir)?;
                    for (class, (hmm, spec_c)) in exp.models.iter().zip(&exp.config.classes).enumerate() {
                        let ctx = Context { spec, params: &params, seed, class };
                        let adapted = adapt_model(id, hmm, &ctx)?;
                        let out = dir.join(format!("{}.model.json", spec_c.name));
                        ModelFile::new(adapted.adapted, Some(adapted.provenance)).write(&out)?;
                        println!("wrote {}", out.display());
                    }
                }
            }
        }
        Command::Decode { common, dataset, scoring } => {
            let exp = load(&common, scoring)?;
            let data_dir = dataset
                .or_else(|| exp.config.dataset.as_ref().map(|p| exp.resolve(p)))
                .ok_or_else(|| HarnessError::Config("no dataset: pass --dataset or set \"dataset\"".into()))?;
            let dir = output_dir(&exp, &common.output)?;
            let (_, utterances) = read_dataset(&data_dir)?;
            let prepared = prepare(&exp)?;
            let (report, decodes) = decode_all(&exp, &prepared, &utterances)?;
            create_dir(&dir)?;
            write_text(&dir.join("report.json"), &report.to_json())?;
            let mut body = serde_json::to_string_pretty(&decodes).expect("decode results serialize");
            body.push('\n');
            write_text(&dir.join("decodes.json"), &body)?;
            write_timing(&dir, start)?;
            println!("accuracy {:.4} over {} trials ({})", report.accuracy, report.trials, report.technique);
        }
        Command::Evaluate { common, scoring } => {
            let exp = load(&common, scoring)?;
            let dir = output_dir(&exp, &common.output)?;
            let report = bayescomp::experiment::evaluate(&exp)?;
            create_dir(&dir)?;
            write_text(&dir.join("report.json"), &report.to_json())?;
            write_timing(&dir, start)?;
            println!("accuracy {:.4} over {} trials ({})", report.accuracy, report.trials, report.technique);
        }
        Command::OracleCheck { suite } => {
            let names: Vec<&str> = if suite == "all" { SUITES.to_vec() } else { vec![suite.as_str()] };
            let mut ok = true;
            for name in names {
                let report = run_suite(name)?;
                print!("{}", report.table());
                ok &= report.passed();
            }
            println!("{}", if ok { "all checks passed" } else { "some checks failed" });
            return Ok(ok);
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.jobs {
        builder = builder.num_threads(n);
    }
    let pool = match builder.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    match pool.install(|| execute(cli.command)) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

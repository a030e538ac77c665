//! `svdcond` command-line front end.
//!
//! Exit codes: 0 success, 1 a verification check failed, 2 usage, parse,
//! I/O or numerical error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::{json, Value};

use svdcond::config::ExperimentConfig;
use svdcond::directions::{self, DEFAULT_K};
use svdcond::trainer::{num_json, ordering_report, percentile, TrainTrace};
use svdcond::verify::{self, Suite};
use svdcond::{csvio, Error};

/// Overrides every command's output directory.
const OUT_ENV: &str = "SVDCOND_OUT";

#[derive(Parser)]
#[command(name = "svdcond", version, about = "Covariance conditioning experiments for SVD meta-layers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one run or a sweep from a config file.
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run a fixed-seed property suite and print a JSON verdict.
    Verify {
        /// gradcheck, nog, olr-bounds, newton-schulz or all
        #[arg(long)]
        suite: Suite,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Top-k latent directions of a weight matrix stored as CSV.
    Directions {
        #[arg(long)]
        weights: PathBuf,
        #[arg(long, default_value_t = DEFAULT_K)]
        k: usize,
    },
}

enum Failure {
    Checks,
    Error(Error),
    /// An error tied to an input file.
    In(PathBuf, Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Error(e)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train { config } => cmd_train(&config),
        Command::Verify { suite, seed } => cmd_verify(suite, seed),
        Command::Directions { weights, k } => cmd_directions(&weights, k),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Checks) => ExitCode::from(1),
        Err(Failure::Error(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(Failure::In(path, e)) => {
            eprintln!("error: {}: {e}", path.display());
            ExitCode::from(2)
        }
    }
}

fn output_dir(configured: &Path) -> Result<PathBuf, Error> {
    let dir = std::env::var_os(OUT_ENV).map_or_else(|| configured.to_path_buf(), PathBuf::from);
    std::fs::create_dir_all(&dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    Ok(dir)
}

fn write(path: &Path, contents: &str) -> Result<(), Error> {
    std::fs::write(path, contents).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("JSON values always serialize");
    s.push('\n');
    s
}

/// File-name form of a treatment label: `ow+nog+olr` becomes `ow_nog_olr`.
fn file_stem(label: &str) -> String {
    label.replace('+', "_")
}

fn cmd_train(config_path: &Path) -> Result<(), Failure> {
    let cfg = ExperimentConfig::load(config_path).map_err(|e| Failure::In(config_path.to_path_buf(), e))?;
    let out = output_dir(&cfg.out_dir)?;
    let traces = cfg.run_all()?;
    for trace in &traces {
        let stem = file_stem(&trace.label);
        write(&out.join(format!("trace_{stem}.csv")), &trace.to_csv())?;
        write(&out.join(format!("summary_{stem}.json")), &pretty(&trace.summary()))?;
        print_run(trace);
    }
    if traces.len() > 1 {
        let report = ordering_report(&traces);
        write(&out.join("ordering.json"), &pretty(&report))?;
        let order: Vec<&str> = report["runs"]
            .as_array()
            .into_iter()
            .flatten()
            .filter_map(|r| r["label"].as_str())
            .collect();
        println!("ordering (lowest median tail kappa first): {}", order.join(" < "));
    }
    Ok(())
}

fn print_run(trace: &TrainTrace) {
    let kappas = trace.kappas();
    let fmt = |q| percentile(&kappas, q).map_or("n/a".to_string(), |v| format!("{v:.4e}"));
    let acc = trace
        .final_accuracy()
        .map_or("n/a".to_string(), |a| format!("{a:.4}"));
    println!(
        "{}: kappa p10={} p50={} p90={} max={} accuracy={} olr_fired={:.3} failures={}",
        trace.label,
        fmt(0.1),
        fmt(0.5),
        fmt(0.9),
        fmt(1.0),
        acc,
        trace.olr_fire_fraction(),
        trace.failures
    );
}

fn cmd_verify(suite: Suite, seed: u64) -> Result<(), Failure> {
    let reports = verify::run(suite, seed)?;
    let passed = reports.iter().all(|r| r.passed());
    let verdict = json!({
        "suite": suite.to_string(),
        "seed": seed,
        "passed": passed,
        "reports": reports.iter().map(|r| r.to_json()).collect::<Vec<_>>(),
    });
    print!("{}", pretty(&verdict));
    if passed {
        Ok(())
    } else {
        Err(Failure::Checks)
    }
}

fn cmd_directions(weights: &Path, k: usize) -> Result<(), Failure> {
    let located = |e: Error| Failure::In(weights.to_path_buf(), e);
    let text = std::fs::read_to_string(weights).map_err(|e| located(e.into()))?;
    let a = csvio::read_matrix(&text).map_err(located)?;
    let dirs = directions::weight_directions(&a, k)?;
    let flatness = directions::spectrum_flatness(&a)?;
    let out = output_dir(Path::new("out"))?;
    let stem = weights
        .file_stem()
        .map_or("weights".to_string(), |s| s.to_string_lossy().into_owned());
    let csv_name = format!("{stem}_directions.csv");
    write(&out.join(&csv_name), &dirs.to_csv())?;
    let report = json!({
        "weights": weights.display().to_string(),
        "k": k,
        "flatness": num_json(flatness),
        "flat": dirs.flat,
        "spectrum": dirs.spectrum.iter().copied().map(num_json).collect::<Vec<_>>(),
        "directions_csv": csv_name,
    });
    write(&out.join(format!("{stem}_directions.json")), &pretty(&report))?;
    print!("{}", pretty(&report));
    Ok(())
}

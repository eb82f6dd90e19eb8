//! `qdom`: run quadrature-domain pipelines from a JSON config.

mod config;
mod output;
mod pipeline;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use qdom_core::io::read_raster_file;
use qdom_core::{ErrorClass, QdomError};

use crate::config::RunConfig;
use crate::output::{write_heatmap, Sink};
use crate::pipeline::{execute, report, Outcome};

const EXIT_CONFIG: u8 = 2;
const EXIT_HYPOTHESIS: u8 = 3;
const EXIT_SOLVER: u8 = 4;

#[derive(Parser)]
#[command(name = "qdom", about = "Helmholtz quadrature domains on uniform grids")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the pipeline described by a JSON config. QDOM_OUT overrides the
    /// output directory.
    Run { config: PathBuf },
    /// Render a raster field (.qdr) as a PGM heatmap; 3D fields give three
    /// central slices.
    Render { field: PathBuf, out: PathBuf },
    /// Print the version.
    Version,
}

fn exit_code(e: &QdomError) -> u8 {
    match e.class() {
        ErrorClass::Config => EXIT_CONFIG,
        ErrorClass::Hypothesis => EXIT_HYPOTHESIS,
        ErrorClass::Solver => EXIT_SOLVER,
    }
}

fn class_name(e: &QdomError) -> &'static str {
    match e.class() {
        ErrorClass::Config => "config",
        ErrorClass::Hypothesis => "hypothesis",
        ErrorClass::Solver => "solver",
    }
}

fn run(path: &Path) -> u8 {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("qdom: cannot read {}: {e}", path.display());
            return EXIT_CONFIG;
        }
    };
    let (cfg, echo) = match RunConfig::parse(&text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("qdom: {e}");
            return EXIT_CONFIG;
        }
    };
    let dir = std::env::var_os("QDOM_OUT")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(&cfg.output.directory));
    let mut sink = match Sink::new(dir.clone(), cfg.output.clone()) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("qdom: {e}");
            return EXIT_CONFIG;
        }
    };
    let mut outcome = Outcome::default();
    let result = execute(&cfg, &mut sink, &mut outcome);
    let (status, code, err) = match &result {
        Ok(()) if outcome.checks.iter().all(|c| c.passed) => ("pass", 0, None),
        Ok(()) => ("fail", EXIT_HYPOTHESIS, None),
        Err(e) => ("error", exit_code(e), Some((class_name(e), e.to_string()))),
    };
    for c in outcome.checks.iter().filter(|c| !c.passed) {
        eprintln!("qdom: check {} failed: {}", c.name, c.detail);
    }
    if let Some((_, msg)) = &err {
        eprintln!("qdom: {msg}");
    }
    let rep = report(
        &echo,
        cfg.task.name(),
        status,
        &outcome,
        &sink.sorted_files(),
        err,
    );
    let text = serde_json::to_string_pretty(&rep).expect("report serializes");
    if let Err(e) = std::fs::write(dir.join("report.json"), text + "\n") {
        eprintln!("qdom: cannot write report: {e}");
        return EXIT_CONFIG;
    }
    println!("{status}: {}", dir.join("report.json").display());
    code
}

fn render(field: &Path, out: &Path) -> u8 {
    let f = match read_raster_file(field) {
        Ok(f) => f,
        Err(e) => {
            eprintln!("qdom: {e}");
            return exit_code(&e);
        }
    };
    match write_heatmap(&f, out) {
        Ok(files) => {
            for p in files {
                println!("{}", p.display());
            }
            0
        }
        Err(e) => {
            eprintln!("qdom: {e}");
            exit_code(&e)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Run { config } => run(&config),
        Command::Render { field, out } => render(&field, &out),
        Command::Version => {
            println!("qdom {}", env!("CARGO_PKG_VERSION"));
            0
        }
    };
    ExitCode::from(code)
}

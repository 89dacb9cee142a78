//! `lensforge` command-line tool.

mod commands;
mod error;
mod fmt;
mod manifest;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::error::{invalid, CliResult};

/// Environment variable naming the default glass catalog file.
pub const CATALOG_ENV: &str = "LENSFORGE_CATALOG";

#[derive(Parser)]
#[command(name = "lensforge", version, about = "Automatic lens design, imaging simulation and joint refinement")]
struct Cli {
    /// Worker threads (default: logical cores). Results do not depend on it.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Global search for lens designs that meet a spec.
    Search(commands::search::Args),
    /// Score a lens against a spec.
    Evaluate(commands::evaluate::Args),
    /// Per-field RGB PSFs as PFM files.
    Psf(commands::psf::Args),
    /// Simulate an image through the lens and sensor.
    Render(commands::render::Args),
    /// Joint image-space refinement followed by glass quantization.
    Optimize(commands::optimize::Args),
    /// Cross-section and spot diagrams as SVG.
    Plot(commands::plot::Args),
}

fn dispatch(command: Command) -> CliResult<()> {
    match command {
        Command::Search(a) => commands::search::run(a),
        Command::Evaluate(a) => commands::evaluate::run(a),
        Command::Psf(a) => commands::psf::run(a),
        Command::Render(a) => commands::render::run(a),
        Command::Optimize(a) => commands::optimize::run(a),
        Command::Plot(a) => commands::plot::run(a),
    }
}

fn run(cli: Cli) -> CliResult<()> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.jobs {
        if n == 0 {
            return Err(invalid("--jobs must be at least 1"));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| invalid(e.to_string()))?;
    pool.install(|| dispatch(cli.command))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}

/// Catalog from `--catalog`, else the file named by the environment
/// variable, else the built-in table. Returns the path actually read.
pub fn load_catalog(flag: Option<&PathBuf>) -> CliResult<(lensforge::lens::GlassCatalog, Option<PathBuf>)> {
    let path = flag.cloned().or_else(|| std::env::var_os(CATALOG_ENV).filter(|v| !v.is_empty()).map(PathBuf::from));
    match path {
        Some(p) => Ok((lensforge::io::read_catalog(&p)?, Some(p))),
        None => Ok((lensforge::lens::GlassCatalog::builtin(), None)),
    }
}

/// Object distance in mm, or `inf` for the infinity sentinel.
pub fn parse_depth(s: &str) -> Result<f64, String> {
    match s.to_ascii_lowercase().as_str() {
        "inf" | "infinity" => Ok(lensforge::lens::INFINITY_SENTINEL_MM),
        t => match t.parse::<f64>() {
            Ok(v) if v.is_finite() && v > 0.0 => Ok(v),
            _ => Err(format!("depth must be a positive number of mm or 'inf', got '{s}'")),
        },
    }
}

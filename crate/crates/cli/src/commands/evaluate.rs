use std::path::PathBuf;

use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::fmt::sci_exact;

#[derive(clap::Args, Serialize)]
pub struct Args {
    #[arg(long)]
    lens: PathBuf,
    #[arg(long)]
    spec: PathBuf,
    /// Pupil rings per field and wavelength (default: the spec's).
    #[arg(long)]
    rings: Option<usize>,
    /// Also write the breakdown and constraint terms as JSON.
    #[arg(long)]
    report: Option<PathBuf>,
}

pub fn run(args: Args) -> CliResult<()> {
    let lens = lensforge::io::read_lens(&args.lens)?;
    let spec = lensforge::io::read_spec(&args.spec)?;
    let rings = args.rings.unwrap_or(spec.pupil_rings);
    if rings == 0 {
        return Err(crate::error::invalid("--rings must be at least 1"));
    }
    let ev = lensforge::merit::evaluate(&lens, &spec, rings);
    let b = &ev.breakdown;
    println!("L_OF {}", sci_exact(b.l_of));
    println!("L_S  {}", sci_exact(b.l_s));
    println!("L_LC {}", sci_exact(b.l_lc));
    println!("L_PC {}", sci_exact(b.l_pc));
    println!("traceable {}", b.traceable);
    for (report, d) in ev.reports.iter().zip(&b.per_distance) {
        for t in &report.terms {
            println!(
                "distance {}  {}  value {}  penalty {}",
                sci_exact(d.object_distance),
                t.id,
                sci_exact(t.value),
                sci_exact(t.penalty)
            );
        }
    }
    if let Some(path) = &args.report {
        let text = serde_json::to_string_pretty(&serde_json::json!({
            "breakdown": b,
            "constraints": ev.reports,
        }))
        .map_err(|e| crate::error::invalid(e.to_string()))?;
        std::fs::write(path, text + "\n")?;
    }
    if !b.traceable {
        return Err(CliError::Infeasible(format!(
            "lens cannot be traced ({:.1} % of rays invalid)",
            100.0 * b.invalid_fraction
        )));
    }
    Ok(())
}

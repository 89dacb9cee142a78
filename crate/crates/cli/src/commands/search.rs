use std::path::PathBuf;

use serde::Serialize;

use lensforge::search;

use crate::error::{CliError, CliResult};
use crate::fmt::sci;
use crate::manifest::ManifestBuilder;

#[derive(clap::Args, Serialize)]
pub struct Args {
    #[arg(long)]
    spec: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Population size (overrides the spec).
    #[arg(long)]
    m: Option<usize>,
    /// Generation count (overrides the spec).
    #[arg(long)]
    generations: Option<usize>,
    /// Output loss ceiling in mm (overrides the spec).
    #[arg(long)]
    ceiling: Option<f64>,
}

#[derive(Serialize)]
struct FormSummary<'a> {
    form: &'a str,
    seconds: f64,
    generations: &'a [search::GenerationStats],
    elite_losses: Vec<f64>,
}

pub fn run(args: Args) -> CliResult<()> {
    let mut manifest = ManifestBuilder::new("search", &args);
    manifest.input(&args.spec)?;
    manifest.seed(args.seed);
    let mut spec = lensforge::io::read_spec(&args.spec)?;
    if let Some(m) = args.m {
        spec.search.population = m;
    }
    if let Some(n) = args.generations {
        spec.search.generations = n;
    }
    if let Some(c) = args.ceiling {
        spec.search.output_loss_ceiling = c;
    }
    spec.validate()?;
    super::ensure_dir(&args.out)?;

    let outcome = search::run(&spec, args.seed)?;
    for (run, secs) in outcome.runs.iter().zip(&outcome.seconds) {
        for g in &run.generations {
            println!(
                "{} generation {:>3}  sa_iterations {:>5}  mean {}  min {}",
                run.form,
                g.generation,
                g.sa_iterations,
                sci(g.sa_mean_loss),
                sci(g.min_loss)
            );
        }
        manifest.stage(
            "form",
            FormSummary {
                form: &run.form,
                seconds: *secs,
                generations: &run.generations,
                elite_losses: run.elites.iter().map(|e| e.breakdown.l_of).collect(),
            },
        );
    }
    for (k, d) in outcome.designs.iter().enumerate() {
        let path = args.out.join(format!("design_{k:02}.json"));
        lensforge::io::write_lens(&path, &d.lens)?;
        println!(
            "design {k:02}  {}  L_OF {}  L_S {}  L_LC {}  L_PC {}",
            d.form,
            sci(d.breakdown.l_of),
            sci(d.breakdown.l_s),
            sci(d.breakdown.l_lc),
            sci(d.breakdown.l_pc)
        );
        manifest.output(path);
    }
    let designs: Vec<_> = outcome
        .designs
        .iter()
        .map(|d| serde_json::json!({ "form": d.form, "x": d.x, "breakdown": d.breakdown }))
        .collect();
    manifest.stage("designs", designs);
    manifest.write(&args.out.join("manifest.json"))?;
    if outcome.designs.is_empty() {
        let ceiling = spec.search.output_loss_ceiling;
        return Err(CliError::from(search::infeasible(&outcome, ceiling)));
    }
    Ok(())
}

use std::path::PathBuf;

use clap::ValueEnum;
use serde::Serialize;

use lensforge::imaging::Rgb;
use lensforge::joint::{quantize_glass, EpjoConfig, ImageSet, JointProblem, ReconstructionOperator};

use crate::error::{invalid, CliResult};
use crate::fmt::sci;
use crate::manifest::ManifestBuilder;

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
pub enum Recon {
    Identity,
    Wiener,
}

#[derive(clap::Args, Serialize)]
pub struct Args {
    #[arg(long)]
    lens: PathBuf,
    #[arg(long)]
    spec: PathBuf,
    /// Glass catalog (default: $LENSFORGE_CATALOG, else the built-in table).
    #[arg(long)]
    catalog: Option<PathBuf>,
    /// Directory of training PNGs.
    #[arg(long)]
    images: PathBuf,
    /// Directory of held-out PNGs (default: the training set).
    #[arg(long)]
    validation: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Recon::Identity)]
    recon: Recon,
    /// Wiener regularization.
    #[arg(long, default_value_t = 1e-2)]
    epsilon: f64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    sensor: Option<PathBuf>,
    /// Pixel pitch (µm) of the default sensor.
    #[arg(long, default_value_t = 12.394)]
    pixel_pitch: f64,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    lens_steps: Option<usize>,
    #[arg(long)]
    patch_size: Option<usize>,
    #[arg(long)]
    psf_support: Option<usize>,
    #[arg(long)]
    psf_rings: Option<usize>,
    #[arg(long)]
    psf_fields: Option<usize>,
    /// Finite-difference step as a fraction of each parameter's range.
    #[arg(long)]
    fd_step: Option<f64>,
    /// Skip the adjoint vs end-to-end gradient comparison.
    #[arg(long)]
    no_grad_check: bool,
}

#[derive(Serialize)]
struct GradientCheck {
    adjoint: Vec<f64>,
    end_to_end: Vec<f64>,
    /// `|a - e| / max(|e|, 1e-12)` per free coordinate.
    relative_error: Vec<f64>,
    max_relative_error: f64,
}

fn load_images(dir: &PathBuf, manifest: &mut ManifestBuilder) -> CliResult<Vec<Rgb>> {
    let files = lensforge::io::read_png_dir(dir)?;
    if files.is_empty() {
        return Err(invalid(format!("{}: no PNG images", dir.display())));
    }
    let mut out = Vec::with_capacity(files.len());
    for (name, img) in files {
        manifest.input(&dir.join(name))?;
        out.push(img.rgb);
    }
    Ok(out)
}

pub fn run(args: Args) -> CliResult<()> {
    let mut manifest = ManifestBuilder::new("optimize", &args);
    manifest.input(&args.lens)?;
    manifest.input(&args.spec)?;
    let lens = lensforge::io::read_lens(&args.lens)?;
    let spec = lensforge::io::read_spec(&args.spec)?;
    let (catalog, catalog_path) = crate::load_catalog(args.catalog.as_ref())?;
    if let Some(p) = &catalog_path {
        manifest.input(p)?;
    }
    let train = load_images(&args.images, &mut manifest)?;
    let validation = match &args.validation {
        Some(d) => load_images(d, &mut manifest)?,
        None => Vec::new(),
    };
    let (w, h) = (train[0][0].width, train[0][0].height);
    let sensor = super::render::sensor_for(args.sensor.as_deref(), w, h, args.pixel_pitch, &mut manifest)?;

    let mut config = EpjoConfig {
        depth_count: spec.working_distances.len(),
        ..EpjoConfig::default()
    };
    if let Some(v) = args.max_epochs {
        config.max_epochs = v;
    }
    if let Some(v) = args.lens_steps {
        config.lens_steps = v;
    }
    config.patch_size = match args.patch_size {
        Some(v) => v,
        None => super::render::default_patch(w, h).ok_or_else(|| invalid(format!("no default patch size divides {w}x{h}; pass --patch-size")))?,
    };
    if let Some(v) = args.psf_support {
        config.psf.support = v;
    }
    if let Some(v) = args.psf_rings {
        config.psf.pupil_rings = v;
    }
    if let Some(v) = args.psf_fields {
        config.psf.field_count = v;
    }
    if let Some(v) = args.fd_step {
        config.fd_step = v;
    }
    let recon = match args.recon {
        Recon::Identity => ReconstructionOperator::Identity,
        Recon::Wiener => {
            if !(args.epsilon > 0.0) {
                return Err(invalid("--epsilon must be positive"));
            }
            ReconstructionOperator::Wiener { epsilon: args.epsilon }
        }
    };
    let problem = JointProblem::new(&lens, &spec, &sensor, &catalog, &config, recon)?;
    super::ensure_dir(&args.out)?;
    let images = ImageSet { train, validation };
    let all_free = problem.mask_for(&[]);

    if !args.no_grad_check {
        let adjoint = problem.adjoint_gradient(&lens, &all_free, &images.train)?;
        let e2e = problem.end_to_end_gradient(&lens, &all_free, &images.train, config.fd_step)?;
        let rel: Vec<f64> = adjoint.iter().zip(&e2e).map(|(a, e)| (a - e).abs() / e.abs().max(1e-12)).collect();
        let max = rel.iter().copied().fold(0.0, f64::max);
        println!("gradient check: max relative error {}", sci(max));
        let report = GradientCheck {
            adjoint,
            end_to_end: e2e,
            relative_error: rel,
            max_relative_error: max,
        };
        let path = args.out.join("gradient_check.json");
        std::fs::write(&path, serde_json::to_string_pretty(&report).expect("serializable") + "\n")?;
        manifest.output(path);
        manifest.stage("gradient_check", serde_json::json!({ "max_relative_error": max }));
    }

    let outcome = problem.optimize(&lens, &all_free, &images)?;
    println!(
        "refine: loss {} -> {} over {} epochs",
        sci(outcome.initial_loss),
        sci(outcome.best_loss),
        outcome.epochs.len()
    );
    manifest.stage(
        "refine",
        serde_json::json!({
            "initial_loss": outcome.initial_loss,
            "best_loss": outcome.best_loss,
            "epochs": outcome.epochs,
        }),
    );
    let refined_path = args.out.join("refined.json");
    lensforge::io::write_lens(&refined_path, &outcome.lens)?;
    manifest.output(refined_path);

    let quant = quantize_glass(&outcome.lens, &catalog, |l, frozen| {
        let o = problem.optimize(l, &problem.mask_for(frozen), &images)?;
        Ok((o.lens, o.best_loss))
    })?;
    for r in &quant.rounds {
        println!(
            "round {}: surface {} -> {} (distance {}) loss {}",
            r.round,
            r.surface,
            r.glass,
            sci(r.distance),
            r.loss.map_or("failed".to_string(), sci)
        );
    }
    let final_path = args.out.join("quantized.json");
    lensforge::io::write_lens(&final_path, &quant.lens)?;
    manifest.output(final_path);
    let subs_path = args.out.join("substitutions.json");
    std::fs::write(&subs_path, serde_json::to_string_pretty(&quant.rounds).expect("serializable") + "\n")?;
    manifest.output(subs_path);
    manifest.stage("quantize", serde_json::json!({ "rounds": quant.rounds.len() }));
    manifest.write(&args.out.join("manifest.json"))
}

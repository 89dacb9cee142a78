use std::path::{Path, PathBuf};

use serde::Serialize;

use lensforge::imaging::{degrade, delta_kernels, patch_kernels, PatchLayout, PsfGrid, PsfSettings, SensorModel};
use lensforge::lens::{LensSystem, LAMBDA_D};

use crate::error::{invalid, CliResult};
use crate::manifest::ManifestBuilder;

#[derive(clap::Args, Serialize)]
pub struct Args {
    #[arg(long)]
    lens: PathBuf,
    /// Display-referred 8- or 16-bit PNG; its size must match the sensor.
    #[arg(long)]
    image: PathBuf,
    /// Object distance in mm, or `inf`.
    #[arg(long, value_parser = crate::parse_depth)]
    depth: f64,
    #[arg(long)]
    out: PathBuf,
    /// Add shot and read noise.
    #[arg(long)]
    noise: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Sensor file; by default a sensor sized to the image is used.
    #[arg(long)]
    sensor: Option<PathBuf>,
    /// Pixel pitch (µm) of the default sensor.
    #[arg(long, default_value_t = 12.394)]
    pixel_pitch: f64,
    /// Largest field (deg) to sample; default reaches the sensor corner paraxially.
    #[arg(long)]
    hfov: Option<f64>,
    /// Patch edge in pixels (default: the largest of 64/32/16/8 dividing the image).
    #[arg(long)]
    patch: Option<usize>,
    #[arg(long, default_value_t = lensforge::imaging::psf::DEFAULT_SUPPORT)]
    support: usize,
    #[arg(long, default_value_t = 8)]
    rings: usize,
    #[arg(long, default_value_t = lensforge::imaging::psf::DEFAULT_FIELD_COUNT)]
    fields: usize,
    /// Replace the lens PSFs by single-pixel deltas.
    #[arg(long)]
    delta_psf: bool,
    /// Output bits per sample (default: the input's).
    #[arg(long)]
    bit_depth: Option<u8>,
}

/// Half field (deg) whose paraxial image lands on the sensor corner.
pub fn corner_field(lens: &LensSystem<f64>, sensor: &SensorModel) -> CliResult<f64> {
    let [px, py] = sensor.pitch_mm();
    let half_diag = 0.5 * (sensor.width as f64 * px).hypot(sensor.height as f64 * py);
    let (efl, _) = lensforge::raytrace::focal_lengths(lens, LAMBDA_D)?;
    Ok((half_diag / efl.abs()).atan().to_degrees())
}

pub fn default_patch(width: usize, height: usize) -> Option<usize> {
    [64, 32, 16, 8].into_iter().find(|p| width % p == 0 && height % p == 0)
}

pub fn sensor_for(path: Option<&Path>, width: usize, height: usize, pitch_um: f64, manifest: &mut ManifestBuilder) -> CliResult<SensorModel> {
    let sensor = match path {
        Some(p) => {
            manifest.input(p)?;
            lensforge::io::read_sensor(p)?
        }
        None => {
            if !(pitch_um > 0.0) {
                return Err(invalid("--pixel-pitch must be positive"));
            }
            SensorModel::new(width, height, pitch_um)
        }
    };
    if sensor.width != width || sensor.height != height {
        return Err(invalid(format!(
            "image is {width}x{height} but the sensor is {}x{}",
            sensor.width, sensor.height
        )));
    }
    Ok(sensor)
}

pub fn run(args: Args) -> CliResult<()> {
    let mut manifest = ManifestBuilder::new("render", &args);
    manifest.input(&args.lens)?;
    manifest.input(&args.image)?;
    manifest.seed(args.seed);
    let lens = lensforge::io::read_lens(&args.lens)?;
    let img = lensforge::io::read_png(&args.image)?;
    let (w, h) = (img.rgb[0].width, img.rgb[0].height);
    let sensor = sensor_for(args.sensor.as_deref(), w, h, args.pixel_pitch, &mut manifest)?;
    let patch = match args.patch {
        Some(p) => p,
        None => default_patch(w, h).ok_or_else(|| invalid(format!("no default patch size divides {w}x{h}; pass --patch")))?,
    };
    let (kernels, layout, fields_deg) = if args.delta_psf {
        let layout = PatchLayout::new(w, h, patch, sensor.pitch_mm(), &[0.0])?;
        (delta_kernels(args.support, &layout), layout, vec![0.0])
    } else {
        let max_field = match args.hfov {
            Some(f) => f,
            None => corner_field(&lens, &sensor)?,
        };
        let settings = PsfSettings {
            support: args.support,
            pupil_rings: args.rings,
            field_count: args.fields,
        };
        let grid = PsfGrid::build(&lens, args.depth, max_field, &sensor, &settings)?;
        let layout = PatchLayout::new(w, h, patch, sensor.pitch_mm(), &grid.field_radii())?;
        (patch_kernels(&grid, &layout)?, layout, grid.fields_deg)
    };
    let out = degrade(&img.rgb, &kernels, &layout, &sensor, args.noise.then_some(args.seed))?;
    let depth = args.bit_depth.unwrap_or(img.bit_depth);
    lensforge::io::write_png(&args.out, &out, depth)?;
    manifest.output(args.out.clone());
    manifest.stage(
        "render",
        serde_json::json!({
            "width": w,
            "height": h,
            "patch": patch,
            "fields_deg": fields_deg,
            "noise": args.noise,
            "bit_depth": depth,
        }),
    );
    let mpath = manifest_path(&args.out);
    manifest.write(&mpath)
}

/// `<out>.manifest.json` next to a single-file output.
pub fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    out.with_file_name(name)
}

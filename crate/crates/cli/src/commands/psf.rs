use std::path::PathBuf;

use serde::Serialize;

use lensforge::imaging::{PsfGrid, PsfSettings, SensorModel};

use crate::error::CliResult;
use crate::fmt::sci;
use crate::manifest::ManifestBuilder;

#[derive(clap::Args, Serialize)]
pub struct Args {
    #[arg(long)]
    lens: PathBuf,
    #[arg(long)]
    spec: PathBuf,
    /// Object distance in mm, or `inf`.
    #[arg(long, value_parser = crate::parse_depth)]
    depth: f64,
    #[arg(long)]
    out: PathBuf,
    /// Sensor file (default: the built-in 1920x1280 virtual sensor).
    #[arg(long)]
    sensor: Option<PathBuf>,
    /// PSF support in pixels (odd).
    #[arg(long, default_value_t = lensforge::imaging::psf::DEFAULT_SUPPORT)]
    support: usize,
    #[arg(long, default_value_t = 8)]
    rings: usize,
    /// Sampled fields from the axis to the spec's largest field.
    #[arg(long, default_value_t = lensforge::imaging::psf::DEFAULT_FIELD_COUNT)]
    fields: usize,
}

#[derive(Serialize)]
struct FieldSummary {
    field_deg: f64,
    anchor_mm: [f64; 2],
    rms_radius_mm: [f64; 3],
    files: [String; 3],
}

pub const CHANNELS: [&str; 3] = ["r", "g", "b"];

pub fn run(args: Args) -> CliResult<()> {
    let mut manifest = ManifestBuilder::new("psf", &args);
    manifest.input(&args.lens)?;
    manifest.input(&args.spec)?;
    let lens = lensforge::io::read_lens(&args.lens)?;
    let spec = lensforge::io::read_spec(&args.spec)?;
    let sensor = match &args.sensor {
        Some(p) => {
            manifest.input(p)?;
            lensforge::io::read_sensor(p)?
        }
        None => SensorModel::full_frame_virtual(),
    };
    let settings = PsfSettings {
        support: args.support,
        pupil_rings: args.rings,
        field_count: args.fields,
    };
    let grid = PsfGrid::build(&lens, args.depth, spec.max_field_deg(), &sensor, &settings)?;
    super::ensure_dir(&args.out)?;
    let pitch = sensor.pitch_mm();
    let rms = grid.rms_radii(pitch);
    let mut fields = Vec::with_capacity(grid.psfs.len());
    for (i, maps) in grid.psfs.iter().enumerate() {
        let files: [String; 3] = std::array::from_fn(|c| format!("psf_f{i:02}_{}.pfm", CHANNELS[c]));
        for c in 0..3 {
            let path = args.out.join(&files[c]);
            lensforge::io::write_pfm(&path, &maps[c])?;
            manifest.output(path);
        }
        println!(
            "field {:>2}  {} deg  rms_mm r {} g {} b {}",
            i,
            sci(grid.fields_deg[i]),
            sci(rms[i][0]),
            sci(rms[i][1]),
            sci(rms[i][2])
        );
        fields.push(FieldSummary {
            field_deg: grid.fields_deg[i],
            anchor_mm: grid.anchors[i],
            rms_radius_mm: rms[i],
            files,
        });
    }
    manifest.stage("psf", serde_json::json!({ "object_distance_mm": args.depth, "support": args.support, "fields": fields }));
    manifest.write(&args.out.join("manifest.json"))
}

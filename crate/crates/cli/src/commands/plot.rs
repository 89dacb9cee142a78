use std::path::{Path, PathBuf};

use serde::Serialize;

use lensforge::lens::{LensSystem, Material, LAMBDA_C, LAMBDA_D, LAMBDA_F};
use lensforge::raytrace::{aim_rays, trace_system_with, PupilGrid, Ray, Tracer};

use crate::error::{invalid, CliResult};
use crate::svg::Svg;

#[derive(clap::Args, Serialize)]
pub struct Args {
    #[arg(long)]
    lens: PathBuf,
    /// Cross-section SVG; spot diagrams go to `<stem>_spots.svg` beside it.
    #[arg(long)]
    out: PathBuf,
    /// Spec whose largest field sets the plotted fields.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Largest field (deg); overrides the spec.
    #[arg(long)]
    hfov: Option<f64>,
    /// Object distance in mm, or `inf`.
    #[arg(long, value_parser = crate::parse_depth, default_value = "inf")]
    depth: f64,
    /// Pupil rings for the spot diagrams.
    #[arg(long, default_value_t = 6)]
    rings: usize,
    /// Rays per side in each meridional fan.
    #[arg(long, default_value_t = 3)]
    fan: usize,
}

pub const WAVELENGTHS: [f64; 3] = [LAMBDA_F, LAMBDA_D, LAMBDA_C];
const WAVE_COLORS: [&str; 3] = ["#2050d0", "#20a040", "#d03020"];
const FIELD_COLORS: [&str; 3] = ["#2050d0", "#20a040", "#d03020"];
const PX_WIDTH: f64 = 800.0;
const MARGIN: f64 = 40.0;

/// Fields drawn: the axis, 0.7 of the largest and the largest.
pub fn plot_fields(max_deg: f64) -> Vec<f64> {
    if max_deg > 0.0 {
        vec![0.0, 0.7 * max_deg, max_deg]
    } else {
        vec![0.0]
    }
}

/// Spot bundles per field and wavelength, d line first within a field.
/// `None` where the bundle could not be aimed.
pub fn spot_traces(lens: &LensSystem<f64>, fields: &[f64], depth: f64, rings: usize) -> Vec<[Option<lensforge::raytrace::TraceResult<f64>>; 3]> {
    fields
        .iter()
        .map(|&f| {
            std::array::from_fn(|w| {
                let rays = aim_rays(lens, f, WAVELENGTHS[w], depth, PupilGrid::hexapolar(rings)).ok()?;
                Some(trace_system_with(lens, &rays, true))
            })
        })
        .collect()
}

pub fn spots_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "plot".into());
    out.with_file_name(format!("{stem}_spots.svg"))
}

/// Surfaces where the refractive index changes; the stop alone is not one.
pub fn refracting_surfaces(lens: &LensSystem<f64>) -> Vec<usize> {
    let mut before = Material::Air;
    let mut out = Vec::new();
    for (i, s) in lens.surfaces.iter().enumerate() {
        if s.material_after != before {
            out.push(i);
        }
        before = s.material_after.clone();
    }
    out
}

/// Points of one meridional ray from `z_start` through every surface to the image.
fn fan_path(tracer: &Tracer<'_, f64>, ray: &Ray<f64>, z_start: f64) -> Vec<[f64; 2]> {
    let mut pts = Vec::new();
    let (o, d) = (ray.origin, ray.direction);
    if d.z > 0.0 {
        let t = (z_start - o.z) / d.z;
        pts.push([z_start, o.x + d.x * t]);
    }
    let n = tracer.lens.surfaces.len();
    for i in 0..n {
        let r = tracer.trace_through(ray, i, true, None);
        if !r.valid {
            return pts;
        }
        pts.push([r.origin.z, r.origin.x]);
    }
    let r = tracer.trace(ray, true, None);
    if r.valid {
        pts.push([r.origin.z, r.origin.x]);
    }
    pts
}

pub fn run(args: Args) -> CliResult<()> {
    let lens = lensforge::io::read_lens(&args.lens)?;
    let max_field = match (args.hfov, &args.spec) {
        (Some(h), _) => h,
        (None, Some(p)) => lensforge::io::read_spec(p)?.max_field_deg(),
        (None, None) => 0.0,
    };
    if !(max_field >= 0.0 && max_field < 90.0) {
        return Err(invalid("--hfov must lie in [0, 90)"));
    }
    if args.rings == 0 || args.fan == 0 {
        return Err(invalid("--rings and --fan must be at least 1"));
    }
    let fields = plot_fields(max_field);
    let traces = spot_traces(&lens, &fields, args.depth, args.rings);
    for (t, f) in traces.iter().zip(&fields) {
        match &t[1] {
            None => eprintln!("warning: field {f:.3} deg: bundle cannot be aimed"),
            Some(r) if r.valid_count() < r.hits.len() => {
                eprintln!("warning: field {f:.3} deg: {} of {} rays blocked", r.hits.len() - r.valid_count(), r.hits.len())
            }
            _ => {}
        }
    }
    // Rays are drawn once some field passes its whole d-line bundle.
    let traceable = traces.iter().any(|t| t[1].as_ref().is_some_and(|r| r.valid_count() == r.hits.len()));
    if !traceable {
        eprintln!("warning: lens is not traceable; plotting surfaces without rays");
    }

    // Unset apertures take the largest traced height, else the pupil radius.
    let mut sd: Vec<f64> = lens.surfaces.iter().map(|s| s.semi_diameter).collect();
    let mut heights = vec![0.0f64; sd.len()];
    for t in traces.iter().flatten().flatten() {
        for (h, &v) in heights.iter_mut().zip(&t.surface_heights) {
            *h = h.max(v);
        }
    }
    for (i, s) in sd.iter_mut().enumerate() {
        if !s.is_finite() {
            *s = if heights[i] > 0.0 { heights[i] } else { 0.5 * lens.entrance_pupil_diameter };
        }
        let c = lens.surfaces[i].curvature.abs();
        if c > 0.0 {
            *s = s.min(0.999 / c);
        }
    }

    let vz = lens.vertex_z();
    let ttl = lens.ttl();
    let ymax = sd.iter().copied().fold(0.0, f64::max).max(1e-3) * 1.15;
    let pad = 0.15 * ttl.max(1.0);
    let z0 = -pad;
    let scale = (PX_WIDTH - 2.0 * MARGIN) / (ttl - z0);
    let height = 2.0 * (ymax * scale + MARGIN);
    let cy = height / 2.0;
    let px = |z: f64, x: f64| [MARGIN + (z - z0) * scale, cy - x * scale];

    let mut svg = Svg::new(PX_WIDTH, height);
    svg.root_attr("data-px-per-mm", &format!("{scale:.10e}"));
    svg.line("axis", px(0.0, 0.0), px(ttl, 0.0), "#888", 0.5);
    svg.line("image", px(ttl, -ymax), px(ttl, ymax), "#000", 1.0);
    let refracting = refracting_surfaces(&lens);
    for &i in &refracting {
        let s = &lens.surfaces[i];
        let pts: Vec<[f64; 2]> = (0..=40)
            .map(|k| {
                let r = sd[i] * (2.0 * k as f64 / 40.0 - 1.0);
                let z = vz[i] + s.sag(r).unwrap_or(0.0);
                px(z, r)
            })
            .collect();
        svg.polyline("surface", &pts, "#000", 1.2);
    }
    // Element edges between the two faces of each glass.
    for w in refracting.windows(2) {
        let (a, b) = (w[0], w[1]);
        if matches!(lens.surfaces[a].material_after, Material::Glass(_)) {
            for sign in [-1.0, 1.0] {
                let ea = [vz[a] + lens.surfaces[a].sag(sd[a]).unwrap_or(0.0), sign * sd[a]];
                let eb = [vz[b] + lens.surfaces[b].sag(sd[b]).unwrap_or(0.0), sign * sd[b]];
                svg.line("edge", px(ea[0], ea[1]), px(eb[0], eb[1]), "#000", 0.8);
            }
        }
    }
    let st = lens.stop_index;
    svg.open_group("stop");
    let r = sd[st];
    for sign in [-1.0, 1.0] {
        svg.line("stop-blade", px(vz[st], sign * r), px(vz[st], sign * (r + 0.12 * ymax)), "#000", 2.0);
    }
    svg.close_group();

    if traceable {
        let tracer = Tracer::new(&lens);
        for (fi, &f) in fields.iter().enumerate() {
            let Ok(rays) = aim_rays(&lens, f, LAMBDA_D, args.depth, PupilGrid::hexapolar(args.fan)) else {
                continue;
            };
            let pts = PupilGrid::hexapolar(args.fan).points::<f64>();
            for (ray, p) in rays.iter().zip(&pts) {
                if !ray.valid || p.1.abs() > 1e-12 {
                    continue;
                }
                let path: Vec<[f64; 2]> = fan_path(&tracer, ray, z0).into_iter().map(|q| px(q[0], q[1])).collect();
                svg.polyline("ray", &path, FIELD_COLORS[fi % 3], 0.6);
            }
        }
    }
    svg.text([MARGIN, height - 10.0], 12.0, &format!("TTL {ttl:.3} mm"));
    if let Some(dir) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(&args.out, svg.finish())?;

    let spots = spots_svg(&traces, &fields);
    std::fs::write(spots_path(&args.out), spots)?;
    Ok(())
}

fn spots_svg(traces: &[[Option<lensforge::raytrace::TraceResult<f64>>; 3]], fields: &[f64]) -> String {
    const PANEL: f64 = 220.0;
    let centre = |t: &[Option<lensforge::raytrace::TraceResult<f64>>; 3]| -> Option<[f64; 2]> {
        t[1].as_ref().and_then(|r| r.chief_hit).or_else(|| {
            let all: Vec<[f64; 2]> = t.iter().flatten().flat_map(|r| r.valid_hits()).collect();
            (!all.is_empty()).then(|| {
                let n = all.len() as f64;
                [all.iter().map(|p| p[0]).sum::<f64>() / n, all.iter().map(|p| p[1]).sum::<f64>() / n]
            })
        })
    };
    let mut rmax = 0.0f64;
    for t in traces {
        if let Some(c) = centre(t) {
            for p in t.iter().flatten().flat_map(|r| r.valid_hits()) {
                rmax = rmax.max((p[0] - c[0]).hypot(p[1] - c[1]));
            }
        }
    }
    let scale = if rmax > 0.0 { 0.42 * PANEL / rmax } else { 1.0 };
    let mut svg = Svg::new(PANEL * fields.len() as f64, PANEL + 30.0);
    svg.root_attr("data-px-per-mm", &format!("{scale:.10e}"));
    for (fi, t) in traces.iter().enumerate() {
        let ox = PANEL * (fi as f64 + 0.5);
        let oy = PANEL / 2.0;
        svg.open_group("field");
        svg.text([ox - 40.0, PANEL + 20.0], 12.0, &format!("{:.2} deg", fields[fi]));
        let c = centre(t).unwrap_or([0.0, 0.0]);
        for (w, r) in t.iter().enumerate() {
            let Some(r) = r else { continue };
            for p in r.valid_hits() {
                svg.circle("spot", [ox + (p[0] - c[0]) * scale, oy - (p[1] - c[1]) * scale], 1.2, WAVE_COLORS[w]);
            }
        }
        svg.close_group();
    }
    svg.text([4.0, 14.0], 11.0, &format!("full width {:.4e} mm", 2.0 * rmax));
    svg.finish()
}

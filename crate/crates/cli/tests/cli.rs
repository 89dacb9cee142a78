use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use lensforge::imaging::{Plane, SensorModel};
use lensforge::lens::{DesignSpec, LAMBDA_D};
use lensforge::raytrace::{aim_rays, paraxial_analysis, trace_system_with, PupilGrid};

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

fn lensforge(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lensforge"))
        .args(args)
        .env_remove("LENSFORGE_CATALOG")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// A search small enough for a debug build.
fn tiny_search_spec(dir: &Path) -> PathBuf {
    let mut spec = DesignSpec::cooke_triplet();
    spec.search.population = 12;
    spec.search.generations = 2;
    spec.search.sa_max_iterations = 20;
    spec.search.adam_iterations = 5;
    spec.search.polish_iterations = 5;
    spec.search.output_loss_ceiling = 1e3;
    spec.search.output_diversity_distance = 0.0;
    let path = dir.join("tiny.json");
    lensforge::io::write_spec(&path, &spec).unwrap();
    path
}

#[test]
fn evaluate_prints_library_loss_bit_exactly() {
    let o = lensforge(&["evaluate", "--lens", s(&data("triplet.json")), "--spec", s(&data("spec_triplet.json"))]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    let printed: f64 = out
        .lines()
        .find_map(|l| l.strip_prefix("L_OF "))
        .expect("L_OF line")
        .trim()
        .parse()
        .unwrap();
    let lens = lensforge::io::read_lens(&data("triplet.json")).unwrap();
    let spec = lensforge::io::read_spec(&data("spec_triplet.json")).unwrap();
    let lib = lensforge::merit::evaluate(&lens, &spec, spec.pupil_rings).breakdown.l_of;
    assert_eq!(printed.to_bits(), lib.to_bits());
}

#[test]
fn missing_file_is_a_validation_error() {
    let o = lensforge(&["evaluate", "--lens", "/nonexistent/lens.json", "--spec", s(&data("spec_triplet.json"))]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn unknown_spec_field_is_named_with_its_line() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(data("spec_triplet.json")).unwrap();
    let bad = text.replacen("\"hfov\"", "\"hfvo\"", 1);
    let line = bad.lines().position(|l| l.contains("hfvo")).unwrap() + 1;
    let path = dir.path().join("bad.json");
    std::fs::write(&path, bad).unwrap();
    let o = lensforge(&["evaluate", "--lens", s(&data("triplet.json")), "--spec", s(&path)]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("hfvo"), "{err}");
    assert!(err.contains(&format!("line {line}")), "{err}");
}

#[test]
fn untraceable_lens_exits_infeasible() {
    let dir = tempfile::tempdir().unwrap();
    let mut lens = lensforge::io::read_lens(&data("singlet.json")).unwrap();
    lens.surfaces[1].curvature = 2.0;
    let path = dir.path().join("bad_lens.json");
    lensforge::io::write_lens(&path, &lens).unwrap();
    let o = lensforge(&["evaluate", "--lens", s(&path), "--spec", s(&data("spec_triplet.json"))]);
    assert_eq!(o.status.code(), Some(2), "{}", stdout(&o));
}

#[test]
fn search_without_designs_exits_infeasible() {
    let dir = tempfile::tempdir().unwrap();
    let spec = tiny_search_spec(dir.path());
    let out = dir.path().join("run");
    let o = lensforge(&["search", "--spec", s(&spec), "--out", s(&out), "--generations", "1", "--ceiling", "1e-9"]);
    assert_eq!(o.status.code(), Some(2));
}

fn design_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap().to_string_lossy().starts_with("design_"))
        .collect();
    files.sort();
    files
        .into_iter()
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect()
}

#[test]
fn search_is_reproducible_across_runs_and_jobs() {
    let dir = tempfile::tempdir().unwrap();
    let spec = tiny_search_spec(dir.path());
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let oa = lensforge(&["--jobs", "1", "search", "--spec", s(&spec), "--seed", "5", "--out", s(&a)]);
    assert!(oa.status.success(), "{}", String::from_utf8_lossy(&oa.stderr));
    let ob = lensforge(&["--jobs", "3", "search", "--spec", s(&spec), "--seed", "5", "--out", s(&b)]);
    assert!(ob.status.success());
    let (da, db) = (design_bytes(&a), design_bytes(&b));
    assert!(!da.is_empty());
    assert_eq!(da, db);
    assert_eq!(stdout(&oa), stdout(&ob));

    let manifest: serde_json::Value = serde_json::from_slice(&std::fs::read(a.join("manifest.json")).unwrap()).unwrap();
    let outputs = manifest["outputs"].as_array().unwrap();
    assert_eq!(outputs.len(), da.len());
    for o in outputs {
        let bytes = std::fs::read(a.join(o["path"].as_str().unwrap())).unwrap();
        assert_eq!(o["bytes"].as_u64().unwrap() as usize, bytes.len());
        assert_eq!(o["sha256"].as_str().unwrap().len(), 64);
    }
}

#[test]
fn zero_jobs_is_rejected() {
    let o = lensforge(&["--jobs", "0", "evaluate", "--lens", s(&data("triplet.json")), "--spec", s(&data("spec_triplet.json"))]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn catalog_variable_is_honoured() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_lensforge"))
        .args(["optimize", "--lens", s(&data("triplet.json")), "--spec", s(&data("spec_triplet.json"))])
        .args(["--images", s(dir.path()), "--out", s(&dir.path().join("o"))])
        .env("LENSFORGE_CATALOG", dir.path().join("missing_catalog.json"))
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("missing_catalog.json"));
}

#[test]
fn delta_render_reproduces_an_8_bit_image() {
    let dir = tempfile::tempdir().unwrap();
    let (w, h) = (32, 32);
    // Affine in the raw domain, where bilinear demosaicing is exact.
    let sensor = SensorModel::new(w, h, 12.394);
    let raw: [Plane; 3] = std::array::from_fn(|c| Plane::from_fn(w, h, |y, x| 0.1 + 0.004 * x as f64 + 0.006 * y as f64 + 0.05 * c as f64));
    let rgb = lensforge::imaging::forward_isp(&raw, &sensor);
    let input = dir.path().join("in.png");
    lensforge::io::write_png(&input, &rgb, 8).unwrap();
    let output = dir.path().join("out.png");
    let o = lensforge(&[
        "render",
        "--lens",
        s(&data("singlet.json")),
        "--image",
        s(&input),
        "--depth",
        "inf",
        "--out",
        s(&output),
        "--delta-psf",
        "--support",
        "5",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let a = lensforge::io::read_png(&input).unwrap();
    let b = lensforge::io::read_png(&output).unwrap();
    assert_eq!(b.bit_depth, 8);
    for c in 0..3 {
        for (p, q) in a.rgb[c].data.iter().zip(&b.rgb[c].data) {
            assert!((p - q).abs() <= 1.0 / 255.0 + 1e-12, "{p} vs {q}");
        }
    }
    assert!(dir.path().join("out.png.manifest.json").exists());
}

#[test]
fn render_rejects_mismatched_sensor() {
    let dir = tempfile::tempdir().unwrap();
    let rgb: [Plane; 3] = std::array::from_fn(|_| Plane::filled(16, 16, 0.5));
    let input = dir.path().join("in.png");
    lensforge::io::write_png(&input, &rgb, 8).unwrap();
    let sensor = dir.path().join("sensor.json");
    lensforge::io::write_sensor(&sensor, &SensorModel::new(32, 32, 10.0)).unwrap();
    let o = lensforge(&[
        "render",
        "--lens",
        s(&data("singlet.json")),
        "--image",
        s(&input),
        "--depth",
        "inf",
        "--out",
        s(&dir.path().join("o.png")),
        "--sensor",
        s(&sensor),
        "--delta-psf",
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn psf_files_are_unit_sum() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("psf");
    let o = lensforge(&[
        "psf",
        "--lens",
        s(&data("triplet.json")),
        "--spec",
        s(&data("spec_triplet.json")),
        "--depth",
        "inf",
        "--out",
        s(&out),
        "--fields",
        "2",
        "--rings",
        "3",
        "--support",
        "15",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in 0..2 {
        for c in ["r", "g", "b"] {
            let p = lensforge::io::read_pfm(&out.join(format!("psf_f{f:02}_{c}.pfm"))).unwrap();
            assert_eq!((p.width, p.height), (15, 15));
            assert!((p.sum() - 1.0).abs() < 1e-5);
        }
    }
}

fn count(svg: &str, needle: &str) -> usize {
    svg.matches(needle).count()
}

fn attr(tag: &str, name: &str) -> f64 {
    let key = format!("{name}=\"");
    let start = tag.find(&key).unwrap() + key.len();
    let end = start + tag[start..].find('"').unwrap();
    tag[start..end].parse().unwrap()
}

#[test]
fn singlet_plot_has_two_arcs_a_stop_and_one_spot_per_ray() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("singlet.svg");
    let o = lensforge(&["plot", "--lens", s(&data("singlet.json")), "--out", s(&out), "--hfov", "5", "--rings", "4"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let svg = std::fs::read_to_string(&out).unwrap();
    assert_eq!(count(&svg, "class=\"surface\""), 2);
    assert_eq!(count(&svg, "<g class=\"stop\">"), 1);
    assert!(count(&svg, "class=\"ray\"") > 0);

    let lens = lensforge::io::read_lens(&data("singlet.json")).unwrap();
    let mut valid = 0;
    for f in [0.0, 3.5, 5.0] {
        for w in [lensforge::lens::LAMBDA_F, LAMBDA_D, lensforge::lens::LAMBDA_C] {
            let rays = aim_rays(&lens, f, w, lensforge::lens::INFINITY_SENTINEL_MM, PupilGrid::hexapolar(4)).unwrap();
            valid += trace_system_with(&lens, &rays, true).valid_count();
        }
    }
    let spots = std::fs::read_to_string(dir.path().join("singlet_spots.svg")).unwrap();
    assert_eq!(count(&spots, "class=\"spot\""), valid);
}

#[test]
fn cross_section_spans_the_total_track() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("triplet.svg");
    let o = lensforge(&["plot", "--lens", s(&data("triplet.json")), "--spec", s(&data("spec_triplet.json")), "--out", s(&out)]);
    assert!(o.status.success());
    let svg = std::fs::read_to_string(&out).unwrap();
    let root = &svg[svg.find("<svg").unwrap()..];
    let scale = attr(&root[..root.find('>').unwrap()], "data-px-per-mm");
    let axis = &svg[svg.find("class=\"axis\"").unwrap()..];
    let axis = &axis[..axis.find("/>").unwrap()];
    let extent = (attr(axis, "x2") - attr(axis, "x1")) / scale;
    let lens = lensforge::io::read_lens(&data("triplet.json")).unwrap();
    let ttl = paraxial_analysis(&lens, lensforge::lens::INFINITY_SENTINEL_MM, 20.0).unwrap().ttl;
    // Coordinates are written to 1e-4 px.
    assert!((extent - ttl).abs() < 2e-4 / scale, "{extent} vs {ttl}");
    assert_eq!(count(&svg, "class=\"surface\""), 6);
}

#[test]
fn untraceable_plot_warns_and_draws_surfaces() {
    let dir = tempfile::tempdir().unwrap();
    let mut lens = lensforge::io::read_lens(&data("singlet.json")).unwrap();
    lens.surfaces[1].curvature = 2.0;
    let path = dir.path().join("bad.json");
    lensforge::io::write_lens(&path, &lens).unwrap();
    let out = dir.path().join("bad.svg");
    let o = lensforge(&["plot", "--lens", s(&path), "--out", s(&out), "--hfov", "5"]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("warning"));
    let svg = std::fs::read_to_string(&out).unwrap();
    assert_eq!(count(&svg, "class=\"ray\""), 0);
    assert_eq!(count(&svg, "class=\"surface\""), 2);
}

//! File formats: lens prescriptions, specs, catalogs and sensors as JSON,
//! PSFs as portable float maps, images as 8- or 16-bit PNG.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{Plane, Rgb, SensorModel};
use crate::lens::catalog::CATALOG_SCHEMA_VERSION;
use crate::lens::spec::SPEC_SCHEMA_VERSION;
use crate::lens::{DesignSpec, Glass, GlassCatalog, LensSystem, Material, Surface};
use crate::imaging::sensor::SENSOR_SCHEMA_VERSION;
use crate::raytrace::update_stop_aperture;

/// Lens prescription file format version.
pub const LENS_SCHEMA_VERSION: u32 = 1;

#[derive(Deserialize)]
struct Header {
    schema_version: Option<u32>,
}

fn parse_error(what: &str, e: serde_json::Error) -> Error {
    Error::Parse(format!("{what}: {e}"))
}

/// Parses `text` after checking that it declares `schema_version == version`.
pub fn parse_versioned<T: DeserializeOwned>(text: &str, what: &str, version: u32) -> Result<T> {
    let header: Header = serde_json::from_str(text).map_err(|e| parse_error(what, e))?;
    match header.schema_version {
        None => return Err(Error::Parse(format!("{what}: missing field `schema_version`"))),
        Some(v) if v != version => {
            return Err(Error::Parse(format!(
                "{what}: schema_version {v} unsupported (expected {version})"
            )))
        }
        Some(_) => {}
    }
    serde_json::from_str(text).map_err(|e| parse_error(what, e))
}

fn read_text(path: &Path) -> Result<String> {
    let mut s = String::new();
    File::open(path)
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?
        .read_to_string(&mut s)?;
    Ok(s)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Parse(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GlassRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub n_d: f64,
    pub v_d: f64,
}

/// Medium after a surface: the string `"air"` or a glass record.
#[derive(Clone, Debug, PartialEq)]
pub enum MaterialRecord {
    Air,
    Glass(GlassRecord),
}

impl Serialize for MaterialRecord {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            MaterialRecord::Air => s.serialize_str("air"),
            MaterialRecord::Glass(g) => g.serialize(s),
        }
    }
}

impl<'de> Deserialize<'de> for MaterialRecord {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        match serde_json::Value::deserialize(d)? {
            serde_json::Value::String(s) if s.eq_ignore_ascii_case("air") => Ok(MaterialRecord::Air),
            v @ serde_json::Value::Object(_) => GlassRecord::deserialize(v).map(MaterialRecord::Glass).map_err(D::Error::custom),
            other => Err(D::Error::custom(format!("material must be \"air\" or {{n_d, v_d}}, got {other}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurfaceRecord {
    /// 1/mm; 0 for a flat surface.
    pub curvature: f64,
    /// Distance to the next surface (mm); ignored on the last surface.
    pub thickness: f64,
    pub material: MaterialRecord,
    #[serde(default)]
    pub is_stop: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub semi_diameter: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LensFile {
    pub schema_version: u32,
    pub design_form: String,
    pub entrance_pupil_diameter: f64,
    pub image_distance: f64,
    pub surfaces: Vec<SurfaceRecord>,
}

impl LensFile {
    pub fn from_lens(lens: &LensSystem<f64>) -> Self {
        Self {
            schema_version: LENS_SCHEMA_VERSION,
            design_form: lens.design_form.clone(),
            entrance_pupil_diameter: lens.entrance_pupil_diameter,
            image_distance: lens.image_distance,
            surfaces: lens
                .surfaces
                .iter()
                .map(|s| SurfaceRecord {
                    curvature: s.curvature,
                    thickness: s.thickness_after,
                    material: match &s.material_after {
                        Material::Air => MaterialRecord::Air,
                        Material::Glass(g) => MaterialRecord::Glass(GlassRecord {
                            name: g.name.clone(),
                            n_d: g.n_d,
                            v_d: g.v_d,
                        }),
                    },
                    is_stop: s.is_stop,
                    semi_diameter: s.semi_diameter.is_finite().then_some(s.semi_diameter),
                })
                .collect(),
        }
    }

    /// Builds and validates the lens. Missing semi-diameters are left
    /// unbounded; the stop is always resized from the entrance pupil.
    pub fn to_lens(&self) -> Result<LensSystem<f64>> {
        let stops: Vec<usize> = (0..self.surfaces.len()).filter(|&i| self.surfaces[i].is_stop).collect();
        if stops.len() > 1 {
            return Err(Error::Structural("more than one surface is flagged as stop".into()));
        }
        let surfaces = self
            .surfaces
            .iter()
            .map(|r| Surface {
                curvature: r.curvature,
                thickness_after: r.thickness,
                material_after: match &r.material {
                    MaterialRecord::Air => Material::Air,
                    MaterialRecord::Glass(g) => Material::Glass(Glass {
                        n_d: g.n_d,
                        v_d: g.v_d,
                        name: g.name.clone(),
                    }),
                },
                semi_diameter: r.semi_diameter.unwrap_or(f64::INFINITY),
                is_stop: r.is_stop,
            })
            .collect();
        let mut lens = LensSystem {
            surfaces,
            stop_index: stops.first().copied().unwrap_or(usize::MAX),
            image_distance: self.image_distance,
            entrance_pupil_diameter: self.entrance_pupil_diameter,
            design_form: self.design_form.clone(),
        };
        lens.validate()?;
        update_stop_aperture(&mut lens);
        Ok(lens)
    }
}

pub fn parse_lens(text: &str) -> Result<LensSystem<f64>> {
    parse_versioned::<LensFile>(text, "lens", LENS_SCHEMA_VERSION)?.to_lens()
}

pub fn read_lens(path: &Path) -> Result<LensSystem<f64>> {
    parse_lens(&read_text(path)?).map_err(|e| prefix(path, e))
}

pub fn write_lens(path: &Path, lens: &LensSystem<f64>) -> Result<()> {
    write_json(path, &LensFile::from_lens(lens))
}

pub fn lens_to_string(lens: &LensSystem<f64>) -> String {
    serde_json::to_string_pretty(&LensFile::from_lens(lens)).expect("lens records always serialize")
}

fn prefix(path: &Path, e: Error) -> Error {
    match e {
        Error::Parse(m) => Error::Parse(format!("{}: {m}", path.display())),
        other => other,
    }
}

pub fn read_spec(path: &Path) -> Result<DesignSpec> {
    let spec: DesignSpec = parse_versioned(&read_text(path)?, "spec", SPEC_SCHEMA_VERSION).map_err(|e| prefix(path, e))?;
    spec.validate()?;
    Ok(spec)
}

pub fn write_spec(path: &Path, spec: &DesignSpec) -> Result<()> {
    write_json(path, spec)
}

pub fn read_catalog(path: &Path) -> Result<GlassCatalog> {
    let c: GlassCatalog = parse_versioned(&read_text(path)?, "catalog", CATALOG_SCHEMA_VERSION).map_err(|e| prefix(path, e))?;
    c.validate()?;
    Ok(c)
}

pub fn write_catalog(path: &Path, catalog: &GlassCatalog) -> Result<()> {
    write_json(path, catalog)
}

pub fn read_sensor(path: &Path) -> Result<SensorModel> {
    let s: SensorModel = parse_versioned(&read_text(path)?, "sensor", SENSOR_SCHEMA_VERSION).map_err(|e| prefix(path, e))?;
    s.validate()?;
    Ok(s)
}

pub fn write_sensor(path: &Path, sensor: &SensorModel) -> Result<()> {
    write_json(path, sensor)
}

/// Writes a single-channel little-endian PFM. Row 0 of `map` is written
/// last, since PFM stores rows bottom to top.
pub fn write_pfm(path: &Path, map: &Plane) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write!(w, "Pf\n{} {}\n-1.0\n", map.width, map.height)?;
    for y in (0..map.height).rev() {
        for x in 0..map.width {
            w.write_all(&(map.at(y, x) as f32).to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a single-channel PFM of either byte order.
pub fn read_pfm(path: &Path) -> Result<Plane> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    let bad = |m: &str| Error::Parse(format!("{}: {m}", path.display()));
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header"));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    pos += 1;
    if fields[0] != "Pf" {
        return Err(bad("only single-channel PFM (Pf) is supported"));
    }
    let width: usize = fields[1].parse().map_err(|_| bad("bad width"))?;
    let height: usize = fields[2].parse().map_err(|_| bad("bad height"))?;
    let scale: f32 = fields[3].parse().map_err(|_| bad("bad scale"))?;
    let body = &bytes[pos.min(bytes.len())..];
    if body.len() != 4 * width * height {
        return Err(bad("pixel data length does not match header"));
    }
    let mut map = Plane::zeros(width, height);
    for (k, chunk) in body.chunks_exact(4).enumerate() {
        let raw = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if scale < 0.0 { f32::from_le_bytes(raw) } else { f32::from_be_bytes(raw) };
        let (row, x) = (k / width, k % width);
        *map.at_mut(height - 1 - row, x) = v as f64;
    }
    Ok(map)
}

/// An image decoded from PNG with channel values in [0, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct PngImage {
    pub rgb: Rgb,
    /// Bits per sample of the source file (8 or 16).
    pub bit_depth: u8,
}

/// Reads an 8- or 16-bit grey, grey+alpha, RGB or RGBA PNG (alpha is dropped).
pub fn read_png(path: &Path) -> Result<PngImage> {
    let bad = |m: String| Error::Parse(format!("{}: {m}", path.display()));
    let mut decoder = png::Decoder::new(BufReader::new(File::open(path)?));
    decoder.set_transformations(png::Transformations::EXPAND);
    let mut reader = decoder.read_info().map_err(|e| bad(e.to_string()))?;
    let size = reader.output_buffer_size().ok_or_else(|| bad("image too large".into()))?;
    let mut buf = vec![0u8; size];
    let info = reader.next_frame(&mut buf).map_err(|e| bad(e.to_string()))?;
    let (w, h) = (info.width as usize, info.height as usize);
    let channels = match info.color_type {
        png::ColorType::Grayscale => 1,
        png::ColorType::GrayscaleAlpha => 2,
        png::ColorType::Rgb => 3,
        png::ColorType::Rgba => 4,
        png::ColorType::Indexed => return Err(bad("palette images are not supported".into())),
    };
    let (depth, max) = match info.bit_depth {
        png::BitDepth::Eight => (8u8, 255.0),
        png::BitDepth::Sixteen => (16u8, 65535.0),
        other => return Err(bad(format!("unsupported bit depth {other:?}"))),
    };
    let bytes = if depth == 16 { 2 } else { 1 };
    let sample = |k: usize| -> f64 {
        if depth == 16 {
            u16::from_be_bytes([buf[2 * k], buf[2 * k + 1]]) as f64 / max
        } else {
            buf[k] as f64 / max
        }
    };
    let stride = info.line_size / bytes;
    let rgb: Rgb = std::array::from_fn(|c| {
        let src = if channels >= 3 { c } else { 0 };
        Plane::from_fn(w, h, |y, x| sample(y * stride + x * channels + src))
    });
    Ok(PngImage { rgb, bit_depth: depth })
}

/// Quantizes `v ∈ [0, 1]` to an integer code with `max` levels above zero.
pub fn quantize(v: f64, max: f64) -> u32 {
    (v.clamp(0.0, 1.0) * max).round() as u32
}

/// Writes an RGB PNG at 8 or 16 bits per sample; values are clipped to [0, 1].
pub fn write_png(path: &Path, rgb: &Rgb, bit_depth: u8) -> Result<()> {
    let (w, h) = (rgb[0].width, rgb[0].height);
    let (depth, max) = match bit_depth {
        8 => (png::BitDepth::Eight, 255.0),
        16 => (png::BitDepth::Sixteen, 65535.0),
        other => return Err(Error::Config(format!("PNG bit depth must be 8 or 16, got {other}"))),
    };
    let mut data = Vec::with_capacity(w * h * 3 * (bit_depth as usize / 8));
    for y in 0..h {
        for x in 0..w {
            for plane in rgb {
                let q = quantize(plane.at(y, x), max);
                if bit_depth == 16 {
                    data.extend_from_slice(&(q as u16).to_be_bytes());
                } else {
                    data.push(q as u8);
                }
            }
        }
    }
    let mut enc = png::Encoder::new(BufWriter::new(File::create(path)?), w as u32, h as u32);
    enc.set_color(png::ColorType::Rgb);
    enc.set_depth(depth);
    let io_err = |e: png::EncodingError| Error::Parse(format!("{}: {e}", path.display()));
    let mut writer = enc.write_header().map_err(io_err)?;
    writer.write_image_data(&data).map_err(io_err)?;
    writer.finish().map_err(io_err)?;
    Ok(())
}

/// Every `.png` file directly inside `dir`, sorted by file name.
pub fn read_png_dir(dir: &Path) -> Result<Vec<(String, PngImage)>> {
    let mut names: Vec<_> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("png")))
        .collect();
    names.sort();
    names
        .into_iter()
        .map(|p| {
            let name = p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            read_png(&p).map(|img| (name, img))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lens::reference;

    #[test]
    fn lens_round_trip_is_exact() {
        let lens = reference::cooke_triplet();
        let text = lens_to_string(&lens);
        let back = parse_lens(&text).unwrap();
        assert_eq!(back, lens);
    }

    #[test]
    fn schema_version_is_required_and_checked() {
        let lens = reference::singlet();
        let mut v: serde_json::Value = serde_json::from_str(&lens_to_string(&lens)).unwrap();
        v.as_object_mut().unwrap().remove("schema_version");
        let e = parse_lens(&v.to_string()).unwrap_err().to_string();
        assert!(e.contains("schema_version"), "{e}");
        v["schema_version"] = 7.into();
        assert!(parse_lens(&v.to_string()).unwrap_err().to_string().contains("unsupported"));
    }

    #[test]
    fn unknown_field_is_named_with_line() {
        let text = "{\n  \"schema_version\": 1,\n  \"design_form\": \"GA\",\n  \"entrance_pupil_diameter\": 4,\n  \"image_distanse\": 40\n}";
        let e = parse_lens(text).unwrap_err().to_string();
        assert!(e.contains("image_distanse") && e.contains("line 5"), "{e}");
    }

    #[test]
    fn material_accepts_air_or_glass() {
        let r: SurfaceRecord = serde_json::from_str(r#"{"curvature":0.1,"thickness":2,"material":"air"}"#).unwrap();
        assert_eq!(r.material, MaterialRecord::Air);
        let r: SurfaceRecord = serde_json::from_str(r#"{"curvature":0.1,"thickness":2,"material":{"n_d":1.5,"v_d":60}}"#).unwrap();
        assert!(matches!(r.material, MaterialRecord::Glass(GlassRecord { n_d, .. }) if n_d == 1.5));
        assert!(serde_json::from_str::<SurfaceRecord>(r#"{"curvature":0,"thickness":2,"material":3}"#).is_err());
    }

    #[test]
    fn pfm_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.pfm");
        let m = Plane::from_fn(5, 3, |y, x| (y * 5 + x) as f64 * 0.125);
        write_pfm(&p, &m).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        assert!(bytes.starts_with(b"Pf\n5 3\n-1.0\n"));
        // First stored row is the bottom one.
        assert_eq!(f32::from_le_bytes(bytes[12..16].try_into().unwrap()), 10.0 * 0.125);
        assert_eq!(read_pfm(&p).unwrap(), m);
    }

    #[test]
    fn png_round_trip_8_and_16_bit() {
        let dir = tempfile::tempdir().unwrap();
        let img: Rgb = std::array::from_fn(|c| Plane::from_fn(7, 4, |y, x| ((y * 7 + x) * 9 + c * 40) as f64 / 400.0));
        for depth in [8u8, 16] {
            let p = dir.path().join(format!("i{depth}.png"));
            write_png(&p, &img, depth).unwrap();
            let back = read_png(&p).unwrap();
            assert_eq!(back.bit_depth, depth);
            let lsb = if depth == 8 { 1.0 / 255.0 } else { 1.0 / 65535.0 };
            for c in 0..3 {
                for (a, b) in back.rgb[c].data.iter().zip(&img[c].data) {
                    assert!((a - b).abs() <= 0.5 * lsb + 1e-12);
                }
            }
        }
        assert!(write_png(&dir.path().join("x.png"), &img, 12).is_err());
    }
}

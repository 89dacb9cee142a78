//! Ray-traced PSFs: Gaussian splatting of image-plane intersections, spectral
//! weighting into R/G/B and per-field grids.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::plane::Plane;
use crate::imaging::sensor::SensorModel;
use crate::lens::LensSystem;
use crate::raytrace::{aim_bundle_from, BundleSolution, PupilGrid, Tracer};

/// PSF support (pixels) when nothing else is requested.
pub const DEFAULT_SUPPORT: usize = 33;
/// Fields sampled between the axis and the maximum field.
pub const DEFAULT_FIELD_COUNT: usize = 7;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PsfSettings {
    /// Side length `t` of every PSF map; must be odd.
    pub support: usize,
    pub pupil_rings: usize,
    pub field_count: usize,
}

impl Default for PsfSettings {
    fn default() -> Self {
        Self {
            support: DEFAULT_SUPPORT,
            pupil_rings: 8,
            field_count: DEFAULT_FIELD_COUNT,
        }
    }
}

impl PsfSettings {
    pub fn validate(&self) -> Result<()> {
        if self.support == 0 || self.support % 2 == 0 {
            return Err(Error::Config(format!("psf support must be odd, got {}", self.support)));
        }
        if self.pupil_rings == 0 {
            return Err(Error::Config("psf pupil_rings must be at least 1".into()));
        }
        if self.field_count == 0 {
            return Err(Error::Config("psf field_count must be at least 1".into()));
        }
        Ok(())
    }
}

/// A single-wavelength PSF together with the chief-ray point it is centred on.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralPsf {
    pub map: Plane,
    /// Chief-ray image point (mm).
    pub chief: [f64; 2],
}

/// Image-plane intersections of one aimed bundle.
#[derive(Clone, Debug, PartialEq)]
pub struct BundleHits {
    pub chief: [f64; 2],
    /// Valid intersections, chief first.
    pub hits: Vec<[f64; 2]>,
}

fn trace_bundle(
    lens: &LensSystem<f64>,
    field_deg: f64,
    lambda_nm: f64,
    object_distance: f64,
    grid: PupilGrid,
    prior: Option<&BundleSolution<f64>>,
) -> Result<(BundleHits, BundleSolution<f64>)> {
    let (rays, sol) = aim_bundle_from(lens, field_deg, lambda_nm, object_distance, grid, false, prior)?;
    let tracer = Tracer::new(lens);
    let mut hits = Vec::with_capacity(rays.len());
    let mut chief = None;
    for (k, ray) in rays.iter().enumerate() {
        if !ray.valid {
            continue;
        }
        let r = tracer.trace(ray, false, None);
        if r.valid && r.origin.x.is_finite() && r.origin.y.is_finite() {
            if k == 0 {
                chief = Some([r.origin.x, r.origin.y]);
            }
            hits.push([r.origin.x, r.origin.y]);
        }
    }
    let chief = chief.ok_or_else(|| {
        Error::Infeasible(format!("chief ray at field {field_deg} deg, {lambda_nm} nm does not reach the image"))
    })?;
    Ok((BundleHits { chief, hits }, sol))
}

/// Traces one bundle for a PSF; fails when no ray (or no chief ray) arrives.
pub fn bundle_hits(
    lens: &LensSystem<f64>,
    field_deg: f64,
    lambda_nm: f64,
    object_distance: f64,
    pupil_rings: usize,
) -> Result<BundleHits> {
    trace_bundle(lens, field_deg, lambda_nm, object_distance, PupilGrid::hexapolar(pupil_rings), None).map(|r| r.0)
}

fn gaussian_profile(hit: f64, anchor: f64, pitch: f64, sigma: f64, out: &mut [f64]) {
    let c = (out.len() / 2) as f64;
    let k = -0.5 / (sigma * sigma);
    for (j, v) in out.iter_mut().enumerate() {
        let d = hit - (anchor + (j as f64 - c) * pitch);
        *v = (k * d * d).exp();
    }
}

/// Accumulates `exp(−d²/2σ²)` from every hit onto a `t × t` grid whose centre
/// pixel sits at `anchor`, then normalizes to unit sum. Rows follow +y,
/// columns +x.
pub fn splat(hits: &[[f64; 2]], anchor: [f64; 2], support: usize, pitch: [f64; 2], sigma: f64) -> Result<Plane> {
    if hits.is_empty() {
        return Err(Error::Infeasible("no rays reach the image plane".into()));
    }
    let t = support;
    let mut map = Plane::zeros(t, t);
    let mut gx = vec![0.0; t];
    let mut gy = vec![0.0; t];
    for h in hits {
        gaussian_profile(h[0], anchor[0], pitch[0], sigma, &mut gx);
        gaussian_profile(h[1], anchor[1], pitch[1], sigma, &mut gy);
        for (i, &wy) in gy.iter().enumerate() {
            if wy == 0.0 {
                continue;
            }
            let row = &mut map.data[i * t..(i + 1) * t];
            for (v, &wx) in row.iter_mut().zip(&gx) {
                *v += wy * wx;
            }
        }
    }
    let s = map.normalize();
    if !(s > 0.0 && s.is_finite()) {
        return Err(Error::Infeasible("ray intersections fall outside the PSF support".into()));
    }
    Ok(map)
}

/// PSF for one field, wavelength and object distance, centred on its own
/// chief ray.
pub fn compute_psf(
    lens: &LensSystem<f64>,
    field_deg: f64,
    lambda_nm: f64,
    object_distance: f64,
    support: usize,
    pupil_rings: usize,
    sensor: &SensorModel,
) -> Result<SpectralPsf> {
    let b = bundle_hits(lens, field_deg, lambda_nm, object_distance, pupil_rings)?;
    let map = splat(&b.hits, b.chief, support, sensor.pitch_mm(), sensor.psf_sigma_mm())?;
    Ok(SpectralPsf { map, chief: b.chief })
}

/// Weighted sum of per-wavelength PSFs, each shifted (bilinearly) from its own
/// chief point onto `anchor`, renormalized to unit sum.
pub fn rgb_psf(psfs: &[SpectralPsf], weights: &[f64], anchor: [f64; 2], pitch: [f64; 2]) -> Result<Plane> {
    if psfs.len() != weights.len() || psfs.is_empty() {
        return Err(Error::Structural(format!("{} PSFs for {} weights", psfs.len(), weights.len())));
    }
    let s: f64 = weights.iter().sum();
    if (s - 1.0).abs() > 1e-9 || weights.iter().any(|&w| w < 0.0) {
        return Err(Error::Config(format!("channel weights must be non-negative and sum to 1 (sum {s})")));
    }
    let t = psfs[0].map.width;
    let mut out = Plane::zeros(t, t);
    for (p, &w) in psfs.iter().zip(weights) {
        if w == 0.0 {
            continue;
        }
        if p.map.width != t || p.map.height != t {
            return Err(Error::Structural("PSF maps differ in size".into()));
        }
        let ox = (p.chief[0] - anchor[0]) / pitch[0];
        let oy = (p.chief[1] - anchor[1]) / pitch[1];
        for i in 0..t {
            for j in 0..t {
                *out.at_mut(i, j) += w * p.map.bilinear(i as f64 - oy, j as f64 - ox);
            }
        }
    }
    if !(out.normalize() > 0.0) {
        return Err(Error::Infeasible("channel PSF shifted outside its support".into()));
    }
    Ok(out)
}

/// Traced bundles for every channel wavelength at one field.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldTrace {
    pub field_deg: f64,
    /// `[channel][sample]`, parallel to the sensor response tables.
    pub bundles: [Vec<BundleHits>; 3],
}

impl FieldTrace {
    /// Response-weighted chief point of channel `c`.
    pub fn channel_centroid(&self, sensor: &SensorModel, c: usize) -> [f64; 2] {
        let mut p = [0.0; 2];
        for (b, r) in self.bundles[c].iter().zip(&sensor.channel_response[c]) {
            p[0] += r.weight * b.chief[0];
            p[1] += r.weight * b.chief[1];
        }
        p
    }

    /// R, G, B PSFs centred on the G chief centroid.
    pub fn channel_psfs(&self, sensor: &SensorModel, support: usize) -> Result<[Plane; 3]> {
        let anchor = self.channel_centroid(sensor, 1);
        self.channel_psfs_at(sensor, support, anchor)
    }

    pub fn channel_psfs_at(&self, sensor: &SensorModel, support: usize, anchor: [f64; 2]) -> Result<[Plane; 3]> {
        let pitch = sensor.pitch_mm();
        let sigma = sensor.psf_sigma_mm();
        let mut out: [Plane; 3] = std::array::from_fn(|_| Plane::zeros(support, support));
        for c in 0..3 {
            for (b, r) in self.bundles[c].iter().zip(&sensor.channel_response[c]) {
                if r.weight == 0.0 {
                    continue;
                }
                let m = splat(&b.hits, anchor, support, pitch, sigma)?;
                out[c].add_scaled(&m, r.weight);
            }
            out[c].normalize();
        }
        Ok(out)
    }
}

/// Traces all channel wavelengths at one field, warm-starting the aim from
/// the previous wavelength.
pub fn trace_field(
    lens: &LensSystem<f64>,
    field_deg: f64,
    object_distance: f64,
    pupil_rings: usize,
    sensor: &SensorModel,
) -> Result<FieldTrace> {
    let grid = PupilGrid::hexapolar(pupil_rings);
    let mut prior: Option<BundleSolution<f64>> = None;
    let mut bundles: [Vec<BundleHits>; 3] = Default::default();
    for (c, table) in sensor.channel_response.iter().enumerate() {
        for r in table {
            let (b, sol) = trace_bundle(lens, field_deg, r.wavelength, object_distance, grid, prior.as_ref())?;
            prior = Some(sol);
            bundles[c].push(b);
        }
    }
    Ok(FieldTrace { field_deg, bundles })
}

/// `count` fields evenly spaced over `[0, max_field_deg]`.
pub fn sampled_fields(max_field_deg: f64, count: usize) -> Vec<f64> {
    if count <= 1 {
        return vec![0.0];
    }
    (0..count).map(|k| max_field_deg * k as f64 / (count - 1) as f64).collect()
}

/// Per-field R/G/B PSFs at one object distance.
#[derive(Clone, Debug, PartialEq)]
pub struct PsfGrid {
    pub object_distance: f64,
    pub fields_deg: Vec<f64>,
    /// `[field][channel]`, each unit-sum.
    pub psfs: Vec<[Plane; 3]>,
    /// G chief centroid per field (mm); the centre pixel of every map.
    pub anchors: Vec<[f64; 2]>,
    /// R/G/B chief centroids relative to the anchor, per field.
    pub channel_offsets: Vec<[[f64; 2]; 3]>,
}

impl PsfGrid {
    pub fn build(
        lens: &LensSystem<f64>,
        object_distance: f64,
        max_field_deg: f64,
        sensor: &SensorModel,
        settings: &PsfSettings,
    ) -> Result<Self> {
        settings.validate()?;
        let fields = sampled_fields(max_field_deg, settings.field_count);
        let per_field: Vec<Result<(FieldTrace, [Plane; 3])>> = fields
            .par_iter()
            .map(|&f| {
                let tr = trace_field(lens, f, object_distance, settings.pupil_rings, sensor)?;
                let maps = tr.channel_psfs(sensor, settings.support)?;
                Ok((tr, maps))
            })
            .collect();
        let mut grid = PsfGrid {
            object_distance,
            fields_deg: fields,
            psfs: Vec::with_capacity(per_field.len()),
            anchors: Vec::with_capacity(per_field.len()),
            channel_offsets: Vec::with_capacity(per_field.len()),
        };
        for r in per_field {
            let (tr, maps) = r?;
            let anchor = tr.channel_centroid(sensor, 1);
            let offsets = std::array::from_fn(|c| {
                let p = tr.channel_centroid(sensor, c);
                [p[0] - anchor[0], p[1] - anchor[1]]
            });
            grid.psfs.push(maps);
            grid.anchors.push(anchor);
            grid.channel_offsets.push(offsets);
        }
        Ok(grid)
    }

    pub fn support(&self) -> usize {
        self.psfs.first().map_or(0, |p| p[0].width)
    }

    /// Radial image position (mm) of each sampled field's anchor.
    pub fn field_radii(&self) -> Vec<f64> {
        self.anchors.iter().map(|a| a[0].hypot(a[1])).collect()
    }

    /// Delta PSFs (all energy in the centre pixel) on the given field radii.
    pub fn delta(support: usize, radii: &[f64]) -> Self {
        let mut p = Plane::zeros(support, support);
        *p.at_mut(support / 2, support / 2) = 1.0;
        PsfGrid {
            object_distance: f64::INFINITY,
            fields_deg: vec![0.0; radii.len()],
            psfs: radii.iter().map(|_| [p.clone(), p.clone(), p.clone()]).collect(),
            anchors: radii.iter().map(|&r| [r, 0.0]).collect(),
            channel_offsets: radii.iter().map(|_| [[0.0; 2]; 3]).collect(),
        }
    }

    /// RMS radius (mm) of each PSF about its centre pixel: `[field][channel]`.
    pub fn rms_radii(&self, pitch: [f64; 2]) -> Vec<[f64; 3]> {
        self.psfs
            .iter()
            .map(|maps| std::array::from_fn(|c| rms_radius(&maps[c], pitch)))
            .collect()
    }
}

/// RMS distance of a unit-sum map from its centre pixel (mm).
pub fn rms_radius(map: &Plane, pitch: [f64; 2]) -> f64 {
    let c = (map.width / 2) as f64;
    let r = (map.height / 2) as f64;
    let mut s = 0.0;
    for i in 0..map.height {
        for j in 0..map.width {
            let dx = (j as f64 - c) * pitch[0];
            let dy = (i as f64 - r) * pitch[1];
            s += map.at(i, j) * (dx * dx + dy * dy);
        }
    }
    (s / map.sum().max(f64::MIN_POSITIVE)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_point_gives_centred_gaussian() {
        let pitch = [0.01, 0.01];
        let sigma = 0.004;
        let m = splat(&[[1.0, 2.0]], [1.0, 2.0], 9, pitch, sigma).unwrap();
        assert!((m.sum() - 1.0).abs() < 1e-12);
        let centre = m.at(4, 4);
        let one_off = m.at(4, 5);
        assert!((one_off / centre - (-0.5 * (0.01f64 / sigma).powi(2)).exp()).abs() < 1e-12);
        assert_eq!(m.at(4, 3), one_off);
        assert_eq!(m.at(3, 4), one_off);
    }

    #[test]
    fn three_sigma_offset_weight() {
        let pitch = [0.012f64, 0.012];
        let sigma = pitch[0].hypot(pitch[1]) / 3.0;
        // A ray exactly 3σ right of the centre pixel.
        let m = splat(&[[3.0 * sigma, 0.0]], [0.0, 0.0], 33, pitch, sigma).unwrap();
        let mut raw = Plane::zeros(33, 33);
        for i in 0..33 {
            for j in 0..33 {
                let dx = 3.0 * sigma - (j as f64 - 16.0) * pitch[0];
                let dy = (i as f64 - 16.0) * pitch[1];
                *raw.at_mut(i, j) = (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp();
            }
        }
        let total = raw.sum();
        assert!((m.at(16, 16) * total - (-4.5f64).exp()).abs() < 1e-14);
    }

    #[test]
    fn empty_hits_rejected() {
        assert!(splat(&[], [0.0, 0.0], 5, [0.01, 0.01], 0.004).is_err());
        assert!(splat(&[[5.0, 0.0]], [0.0, 0.0], 5, [0.01, 0.01], 0.004).is_err());
    }

    #[test]
    fn degenerate_channel_weights_pick_one_map() {
        let pitch = [0.01, 0.01];
        let a = SpectralPsf {
            map: splat(&[[0.0, 0.0], [0.01, 0.0]], [0.0, 0.0], 7, pitch, 0.004).unwrap(),
            chief: [0.0, 0.0],
        };
        let b = SpectralPsf {
            map: splat(&[[0.0, 0.0], [0.0, 0.02]], [0.0, 0.0], 7, pitch, 0.004).unwrap(),
            chief: [0.0, 0.0],
        };
        let out = rgb_psf(&[a.clone(), b], &[1.0, 0.0], [0.0, 0.0], pitch).unwrap();
        for (x, y) in out.data.iter().zip(&a.map.data) {
            assert!((x - y).abs() < 1e-15);
        }
        assert!(rgb_psf(&[a.clone(), a], &[0.7, 0.7], [0.0, 0.0], pitch).is_err());
    }

    #[test]
    fn one_pixel_offset_half_sum() {
        let pitch = [0.01, 0.01];
        let base = splat(&[[0.0, 0.0], [0.004, 0.003]], [0.0, 0.0], 9, pitch, 0.004).unwrap();
        let a = SpectralPsf { map: base.clone(), chief: [0.0, 0.0] };
        // Second wavelength lands one pixel to the right of the anchor.
        let b = SpectralPsf { map: base.clone(), chief: [0.01, 0.0] };
        let out = rgb_psf(&[a, b], &[0.5, 0.5], [0.0, 0.0], pitch).unwrap();
        let mut expect = Plane::zeros(9, 9);
        for i in 0..9 {
            for j in 0..9 {
                let shifted = if j >= 1 { base.at(i, j - 1) } else { 0.0 };
                *expect.at_mut(i, j) = 0.5 * base.at(i, j) + 0.5 * shifted;
            }
        }
        expect.normalize();
        for (x, y) in out.data.iter().zip(&expect.data) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}

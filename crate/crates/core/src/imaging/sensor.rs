//! Virtual sensor: geometry, spectral response, noise and ISP settings.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Transfer curve applied last in the forward ISP.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "exponent")]
pub enum GammaCurve {
    Srgb,
    /// Sign-preserving `x^(1/γ)`.
    Power(f64),
}

/// Sensor file format version.
pub const SENSOR_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseModel {
    /// Shot-noise gain: variance grows by `gain · signal`.
    pub shot_gain: f64,
    pub read_sigma: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            shot_gain: 1e-4,
            read_sigma: 1e-3,
        }
    }
}

/// One row of a channel response table.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResponseSample {
    pub wavelength: f64,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorModel {
    #[serde(default = "sensor_version")]
    pub schema_version: u32,
    pub width: usize,
    pub height: usize,
    /// Pixel pitch (µm) along x and y.
    pub pixel_pitch_um: [f64; 2],
    /// R, G, B response tables; weights sum to 1 per channel.
    pub channel_response: [Vec<ResponseSample>; 3],
    #[serde(default)]
    pub noise: NoiseModel,
    #[serde(default = "default_wb")]
    pub wb_gains: [f64; 3],
    #[serde(default = "identity3")]
    pub ccm: [[f64; 3]; 3],
    #[serde(default = "default_gamma")]
    pub gamma: GammaCurve,
}

fn sensor_version() -> u32 {
    SENSOR_SCHEMA_VERSION
}

fn default_wb() -> [f64; 3] {
    [2.0, 1.0, 1.8]
}

fn identity3() -> [[f64; 3]; 3] {
    [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
}

fn default_gamma() -> GammaCurve {
    GammaCurve::Srgb
}

/// Five-sample channel table with Gaussian weights around `centre`.
fn gaussian_table(centre: f64, spacing: f64, width: f64) -> Vec<ResponseSample> {
    let raw: Vec<(f64, f64)> = (-2..=2)
        .map(|k| {
            let l = centre + k as f64 * spacing;
            let d = (l - centre) / width;
            (l, (-0.5 * d * d).exp())
        })
        .collect();
    let s: f64 = raw.iter().map(|r| r.1).sum();
    raw.into_iter()
        .map(|(wavelength, w)| ResponseSample { wavelength, weight: w / s })
        .collect()
}

impl SensorModel {
    /// Generic RGB sensor of the given size and pitch with smooth response tables.
    pub fn new(width: usize, height: usize, pixel_pitch_um: f64) -> Self {
        Self {
            schema_version: SENSOR_SCHEMA_VERSION,
            width,
            height,
            pixel_pitch_um: [pixel_pitch_um; 2],
            channel_response: [
                gaussian_table(620.0, 20.0, 30.0),
                gaussian_table(540.0, 20.0, 30.0),
                gaussian_table(460.0, 20.0, 30.0),
            ],
            noise: NoiseModel::default(),
            wb_gains: default_wb(),
            ccm: identity3(),
            gamma: GammaCurve::Srgb,
        }
    }

    /// 1920 × 1280 sensor with 12.394 µm pixels (28.6 mm diagonal).
    pub fn full_frame_virtual() -> Self {
        Self::new(1920, 1280, 12.394)
    }

    pub fn pitch_mm(&self) -> [f64; 2] {
        [self.pixel_pitch_um[0] * 1e-3, self.pixel_pitch_um[1] * 1e-3]
    }

    /// Splat width `√(Δx² + Δy²) / 3` in mm.
    pub fn psf_sigma_mm(&self) -> f64 {
        let [px, py] = self.pitch_mm();
        (px * px + py * py).sqrt() / 3.0
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SENSOR_SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "sensor schema_version {} unsupported (expected {SENSOR_SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::Config("sensor: width and height must be positive".into()));
        }
        if self.pixel_pitch_um.iter().any(|&p| !(p > 0.0)) {
            return Err(Error::Config("sensor.pixel_pitch_um: must be positive".into()));
        }
        for (c, table) in self.channel_response.iter().enumerate() {
            if table.is_empty() {
                return Err(Error::Config(format!("sensor.channel_response[{c}]: empty table")));
            }
            let s: f64 = table.iter().map(|r| r.weight).sum();
            if (s - 1.0).abs() > 1e-9 || table.iter().any(|r| r.weight < 0.0 || !(r.wavelength > 0.0)) {
                return Err(Error::Config(format!(
                    "sensor.channel_response[{c}]: weights must be non-negative and sum to 1 (sum {s})"
                )));
            }
        }
        if self.wb_gains.iter().any(|&g| !(g > 0.0)) {
            return Err(Error::Config("sensor.wb_gains: must be positive".into()));
        }
        if invert3(&self.ccm).is_none() {
            return Err(Error::Config("sensor.ccm: matrix is singular".into()));
        }
        if let GammaCurve::Power(g) = self.gamma {
            if !(g > 0.0) {
                return Err(Error::Config("sensor.gamma: exponent must be positive".into()));
            }
        }
        if !(self.noise.shot_gain >= 0.0 && self.noise.read_sigma >= 0.0) {
            return Err(Error::Config("sensor.noise: parameters must be >= 0".into()));
        }
        Ok(())
    }
}

/// Inverse of a 3 × 3 matrix, `None` when (nearly) singular.
pub fn invert3(m: &[[f64; 3]; 3]) -> Option<[[f64; 3]; 3]> {
    let c = |r0: usize, c0: usize, r1: usize, c1: usize| m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0];
    let det = m[0][0] * c(1, 1, 2, 2) - m[0][1] * c(1, 0, 2, 2) + m[0][2] * c(1, 0, 2, 1);
    if det.abs() < 1e-12 || !det.is_finite() {
        return None;
    }
    let inv = [
        [c(1, 1, 2, 2), -c(0, 1, 2, 2), c(0, 1, 1, 2)],
        [-c(1, 0, 2, 2), c(0, 0, 2, 2), -c(0, 0, 1, 2)],
        [c(1, 0, 2, 1), -c(0, 0, 2, 1), c(0, 0, 1, 1)],
    ];
    Some(inv.map(|row| row.map(|v| v / det)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_sensor_is_valid() {
        SensorModel::full_frame_virtual().validate().unwrap();
        let s = SensorModel::full_frame_virtual();
        let diag = ((s.width as f64).hypot(s.height as f64)) * s.pixel_pitch_um[0] * 1e-3;
        assert!((diag - 28.6).abs() < 0.05, "{diag}");
    }

    #[test]
    fn matrix_inverse() {
        let m = [[1.2, -0.1, 0.05], [0.1, 0.9, -0.2], [0.0, 0.3, 1.1]];
        let inv = invert3(&m).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let v: f64 = (0..3).map(|k| m[i][k] * inv[k][j]).sum();
                assert!((v - if i == j { 1.0 } else { 0.0 }).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn unnormalized_response_rejected() {
        let mut s = SensorModel::new(8, 8, 10.0);
        s.channel_response[1][0].weight += 0.1;
        assert!(s.validate().is_err());
    }
}

//! Forward and inverse ISP: Bayer mosaic, demosaic, noise, white balance,
//! colour correction and transfer curve.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::imaging::plane::{Plane, Rgb};
use crate::imaging::sensor::{invert3, GammaCurve, NoiseModel, SensorModel};

/// Bayer colour at `(y, x)` for an RGGB tile: 0 = R, 1 = G, 2 = B.
#[inline]
pub fn bayer_channel(y: usize, x: usize) -> usize {
    match (y % 2, x % 2) {
        (0, 0) => 0,
        (1, 1) => 2,
        _ => 1,
    }
}

/// Samples each pixel's Bayer colour from a full RGB image.
pub fn mosaic(rgb: &Rgb) -> Plane {
    let (w, h) = (rgb[0].width, rgb[0].height);
    Plane::from_fn(w, h, |y, x| rgb[bayer_channel(y, x)].at(y, x))
}

/// Adjoint of [`mosaic`].
pub fn mosaic_adjoint(grad: &Plane) -> Rgb {
    let (w, h) = (grad.width, grad.height);
    std::array::from_fn(|c| Plane::from_fn(w, h, |y, x| if bayer_channel(y, x) == c { grad.at(y, x) } else { 0.0 }))
}

/// Up to four `(index, weight)` taps; unused slots have weight 0.
pub type Taps = [(usize, f64); 4];

fn directions(c: usize, y: usize, x: usize) -> &'static [(isize, isize)] {
    if c == 1 {
        return &[(0, 1), (1, 0)];
    }
    let own = if c == 0 { (0, 0) } else { (1, 1) };
    if y % 2 == own.0 {
        &[(0, 1)]
    } else if x % 2 == own.1 {
        &[(1, 0)]
    } else {
        &[(1, 1), (1, -1)]
    }
}

/// Interpolation taps reconstructing channel `c` at `(y, x)` from a mosaic of
/// size `w × h`. Interior pixels average the opposing same-colour neighbours
/// (bilinear); border pixels without a complete pair extrapolate linearly
/// from the samples one and three steps inward.
pub fn demosaic_taps(c: usize, y: usize, x: usize, w: usize, h: usize) -> Taps {
    let mut taps = [(0usize, 0.0); 4];
    if bayer_channel(y, x) == c {
        taps[0] = (y * w + x, 1.0);
        return taps;
    }
    let at = |dy: isize, dx: isize| -> Option<usize> {
        let yy = y as isize + dy;
        let xx = x as isize + dx;
        (yy >= 0 && xx >= 0 && (yy as usize) < h && (xx as usize) < w).then(|| yy as usize * w + xx as usize)
    };
    let dirs = directions(c, y, x);
    let pairs: Vec<(usize, usize)> = dirs
        .iter()
        .filter_map(|&(dy, dx)| Some((at(dy, dx)?, at(-dy, -dx)?)))
        .collect();
    if !pairs.is_empty() {
        let wgt = 0.5 / pairs.len() as f64;
        for (k, &(a, b)) in pairs.iter().enumerate() {
            taps[2 * k] = (a, wgt);
            taps[2 * k + 1] = (b, wgt);
        }
        return taps;
    }
    for &(dy, dx) in dirs {
        for s in [1isize, -1] {
            if let (Some(a), Some(b)) = (at(s * dy, s * dx), at(3 * s * dy, 3 * s * dx)) {
                taps[0] = (a, 1.5);
                taps[1] = (b, -0.5);
                return taps;
            }
        }
    }
    for &(dy, dx) in dirs {
        for s in [1isize, -1] {
            if let Some(a) = at(s * dy, s * dx) {
                taps[0] = (a, 1.0);
                return taps;
            }
        }
    }
    taps
}

pub fn demosaic(m: &Plane) -> Rgb {
    let (w, h) = (m.width, m.height);
    std::array::from_fn(|c| {
        Plane::from_fn(w, h, |y, x| {
            demosaic_taps(c, y, x, w, h)
                .iter()
                .map(|&(k, wt)| if wt != 0.0 { wt * m.data[k] } else { 0.0 })
                .sum()
        })
    })
}

/// Adjoint of [`demosaic`].
pub fn demosaic_adjoint(grad: &Rgb) -> Plane {
    let (w, h) = (grad[0].width, grad[0].height);
    let mut out = Plane::zeros(w, h);
    for (c, g) in grad.iter().enumerate() {
        for y in 0..h {
            for x in 0..w {
                let v = g.at(y, x);
                if v == 0.0 {
                    continue;
                }
                for (k, wt) in demosaic_taps(c, y, x, w, h) {
                    if wt != 0.0 {
                        out.data[k] += wt * v;
                    }
                }
            }
        }
    }
    out
}

/// Adds zero-mean Gaussian noise with variance `σ² + gain · max(v, 0)`.
pub fn add_noise<R: Rng>(m: &mut Plane, noise: &NoiseModel, rng: &mut R) {
    let var0 = noise.read_sigma * noise.read_sigma;
    for v in m.data.iter_mut() {
        let sd = (var0 + noise.shot_gain * v.max(0.0)).sqrt();
        let z: f64 = rng.sample(StandardNormal);
        *v += sd * z;
    }
}

const SRGB_LINEAR_CUTOFF: f64 = 0.003_130_8;
const SRGB_ENCODED_CUTOFF: f64 = 0.040_45;

/// Linear to encoded. Negative inputs follow the linear toe.
pub fn gamma_encode(v: f64, curve: GammaCurve) -> f64 {
    match curve {
        GammaCurve::Srgb => {
            if v <= SRGB_LINEAR_CUTOFF {
                12.92 * v
            } else {
                1.055 * v.powf(1.0 / 2.4) - 0.055
            }
        }
        GammaCurve::Power(g) => v.signum() * v.abs().powf(1.0 / g),
    }
}

pub fn gamma_decode(s: f64, curve: GammaCurve) -> f64 {
    match curve {
        GammaCurve::Srgb => {
            if s <= SRGB_ENCODED_CUTOFF {
                s / 12.92
            } else {
                ((s + 0.055) / 1.055).powf(2.4)
            }
        }
        GammaCurve::Power(g) => s.signum() * s.abs().powf(g),
    }
}

/// d(encode)/dv.
pub fn gamma_slope(v: f64, curve: GammaCurve) -> f64 {
    match curve {
        GammaCurve::Srgb => {
            if v <= SRGB_LINEAR_CUTOFF {
                12.92
            } else {
                1.055 / 2.4 * v.powf(1.0 / 2.4 - 1.0)
            }
        }
        GammaCurve::Power(g) => v.abs().powf(1.0 / g - 1.0) / g,
    }
}

fn map_pixels(img: &Rgb, f: impl Fn([f64; 3]) -> [f64; 3]) -> Rgb {
    let mut out = img.clone();
    for k in 0..img[0].data.len() {
        let v = f([img[0].data[k], img[1].data[k], img[2].data[k]]);
        for c in 0..3 {
            out[c].data[k] = v[c];
        }
    }
    out
}

fn mat_vec(m: &[[f64; 3]; 3], v: [f64; 3]) -> [f64; 3] {
    std::array::from_fn(|i| m[i][0] * v[0] + m[i][1] * v[1] + m[i][2] * v[2])
}

fn transpose(m: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    std::array::from_fn(|i| std::array::from_fn(|j| m[j][i]))
}

pub fn apply_wb(img: &Rgb, gains: [f64; 3]) -> Rgb {
    map_pixels(img, |v| [v[0] * gains[0], v[1] * gains[1], v[2] * gains[2]])
}

pub fn apply_ccm(img: &Rgb, m: &[[f64; 3]; 3]) -> Rgb {
    map_pixels(img, |v| mat_vec(m, v))
}

pub fn apply_gamma(img: &Rgb, curve: GammaCurve) -> Rgb {
    map_pixels(img, |v| v.map(|x| gamma_encode(x, curve)))
}

/// Demosaiced raw to display: WB, then CCM, then transfer curve.
pub fn forward_isp(raw: &Rgb, sensor: &SensorModel) -> Rgb {
    let wb = apply_wb(raw, sensor.wb_gains);
    let cc = apply_ccm(&wb, &sensor.ccm);
    apply_gamma(&cc, sensor.gamma)
}

/// Display to raw: inverse transfer curve, inverse CCM, inverse WB.
pub fn inverse_isp(scene: &Rgb, sensor: &SensorModel) -> Rgb {
    let lin = map_pixels(scene, |v| v.map(|s| gamma_decode(s, sensor.gamma)));
    let inv = invert3(&sensor.ccm).unwrap_or([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);
    let cc = apply_ccm(&lin, &inv);
    apply_wb(&cc, sensor.wb_gains.map(|g| 1.0 / g))
}

/// Pulls a display-domain gradient back to the demosaiced raw domain
/// through the forward ISP evaluated at `raw`.
pub fn forward_isp_adjoint(raw: &Rgb, grad: &Rgb, sensor: &SensorModel) -> Rgb {
    let ccm_t = transpose(&sensor.ccm);
    let g = sensor.wb_gains;
    let mut out = grad.clone();
    for k in 0..raw[0].data.len() {
        let r = [raw[0].data[k], raw[1].data[k], raw[2].data[k]];
        let lin = mat_vec(&sensor.ccm, [r[0] * g[0], r[1] * g[1], r[2] * g[2]]);
        let gl: [f64; 3] = std::array::from_fn(|c| grad[c].data[k] * gamma_slope(lin[c], sensor.gamma));
        let gw = mat_vec(&ccm_t, gl);
        for c in 0..3 {
            out[c].data[k] = gw[c] * g[c];
        }
    }
    out
}

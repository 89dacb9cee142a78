//! Parameter-free reconstruction operators applied after the ISP.

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::isp::{forward_isp, inverse_isp};
use crate::imaging::{Boundary, PatchLayout, Plane, Rgb, SensorModel};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ReconstructionOperator {
    Identity,
    /// Per-patch Wiener deconvolution in the raw domain with the current
    /// patch PSFs and regularization `epsilon`.
    Wiener { epsilon: f64 },
}

impl ReconstructionOperator {
    pub fn apply(&self, img: &Rgb, kernels: &[[Plane; 3]], layout: &PatchLayout, sensor: &SensorModel) -> Result<Rgb> {
        match *self {
            ReconstructionOperator::Identity => Ok(img.clone()),
            ReconstructionOperator::Wiener { epsilon } => {
                let raw = inverse_isp(img, sensor);
                let out = wiener_deconvolve(&raw, kernels, layout, epsilon, Boundary::Replicate)?;
                Ok(forward_isp(&out, sensor))
            }
        }
    }

    pub fn is_identity(&self) -> bool {
        matches!(self, ReconstructionOperator::Identity)
    }
}

/// 2-D FFT of a row-major `h × w` buffer in place.
fn fft2(buf: &mut [Complex64], w: usize, h: usize, planner: &mut FftPlanner<f64>, inverse: bool) {
    let (row, col) = if inverse {
        (planner.plan_fft_inverse(w), planner.plan_fft_inverse(h))
    } else {
        (planner.plan_fft_forward(w), planner.plan_fft_forward(h))
    };
    row.process(buf);
    let mut column = vec![Complex64::new(0.0, 0.0); h];
    for x in 0..w {
        for y in 0..h {
            column[y] = buf[y * w + x];
        }
        col.process(&mut column);
        for y in 0..h {
            buf[y * w + x] = column[y];
        }
    }
}

/// Deconvolves each patch of a linear image with its own kernel. Every patch
/// is processed on a tile extended by one kernel width on each side (pixels
/// beyond the image follow `boundary`); only the patch itself is kept.
pub fn wiener_deconvolve(
    img: &Rgb,
    kernels: &[[Plane; 3]],
    layout: &PatchLayout,
    epsilon: f64,
    boundary: Boundary,
) -> Result<Rgb> {
    if !(epsilon > 0.0) {
        return Err(Error::Config("wiener epsilon must be positive".into()));
    }
    if kernels.len() != layout.patches.len() {
        return Err(Error::Structural("one kernel triple per patch required".into()));
    }
    let s = layout.size;
    let (w, h) = (layout.width, layout.height);
    let mut planner = FftPlanner::new();
    let mut out: Rgb = std::array::from_fn(|_| Plane::zeros(w, h));
    for (k, p) in layout.patches.iter().enumerate() {
        for c in 0..3 {
            let kernel = &kernels[k][c];
            let t = kernel.width;
            let m = t;
            let n = s + 2 * m;
            let idx = |i: isize, len: usize| match boundary {
                Boundary::Replicate => i.clamp(0, len as isize - 1) as usize,
                Boundary::Periodic => i.rem_euclid(len as isize) as usize,
            };
            let y0 = (p.row * s) as isize - m as isize;
            let x0 = (p.col * s) as isize - m as isize;
            let mut tile: Vec<Complex64> = (0..n * n)
                .map(|q| {
                    let (i, j) = ((q / n) as isize, (q % n) as isize);
                    Complex64::new(img[c].at(idx(y0 + i, h), idx(x0 + j, w)), 0.0)
                })
                .collect();
            let mut hk = vec![Complex64::new(0.0, 0.0); n * n];
            let cc = (t / 2) as isize;
            for a in 0..t {
                for b in 0..t {
                    let yy = (a as isize - cc).rem_euclid(n as isize) as usize;
                    let xx = (b as isize - cc).rem_euclid(n as isize) as usize;
                    hk[yy * n + xx] += kernel.at(a, b);
                }
            }
            fft2(&mut tile, n, n, &mut planner, false);
            fft2(&mut hk, n, n, &mut planner, false);
            for (y, hv) in tile.iter_mut().zip(&hk) {
                *y = hv.conj() * *y / (hv.norm_sqr() + epsilon);
            }
            fft2(&mut tile, n, n, &mut planner, true);
            let scale = 1.0 / (n * n) as f64;
            for i in 0..s {
                for j in 0..s {
                    *out[c].at_mut(p.row * s + i, p.col * s + j) = tile[(m + i) * n + m + j].re * scale;
                }
            }
        }
    }
    Ok(out)
}

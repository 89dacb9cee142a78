//! Patch layout, field interpolation, PSF rotation and patch-wise convolution.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::imaging::plane::{Plane, Rgb};
use crate::imaging::psf::PsfGrid;

/// Radius gap (mm) below which a patch takes its sampled field's PSF outright.
pub const FIELD_SNAP: f64 = 1e-6;

/// How convolution reads pixels beyond the image border.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Boundary {
    #[default]
    Replicate,
    Periodic,
}

impl Boundary {
    #[inline]
    fn index(self, i: isize, n: usize) -> usize {
        match self {
            Boundary::Replicate => i.clamp(0, n as isize - 1) as usize,
            Boundary::Periodic => i.rem_euclid(n as isize) as usize,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PatchInfo {
    pub row: usize,
    pub col: usize,
    /// Orientation of the patch centre seen from the image centre (rad),
    /// measured from +x toward +y.
    pub angle: f64,
    pub radius_mm: f64,
    /// Interpolation weight per sampled field; sums to 1.
    pub weights: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PatchLayout {
    pub width: usize,
    pub height: usize,
    pub size: usize,
    pub rows: usize,
    pub cols: usize,
    pub pitch: [f64; 2],
    pub patches: Vec<PatchInfo>,
}

/// Normalized inverse-square weights of `r` against the sampled radii.
pub fn inverse_square_weights(r: f64, radii: &[f64]) -> Vec<f64> {
    if let Some(k) = radii.iter().position(|&ri| (r - ri).abs() < FIELD_SNAP) {
        let mut w = vec![0.0; radii.len()];
        w[k] = 1.0;
        return w;
    }
    let mut w: Vec<f64> = radii.iter().map(|&ri| 1.0 / ((r - ri) * (r - ri))).collect();
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    w
}

impl PatchLayout {
    /// Splits a `width × height` image into `size × size` patches and
    /// precomputes angles and field weights against `field_radii` (mm).
    pub fn new(width: usize, height: usize, size: usize, pitch: [f64; 2], field_radii: &[f64]) -> Result<Self> {
        if size == 0 || width % size != 0 || height % size != 0 {
            return Err(Error::Structural(format!(
                "{width}x{height} image does not split into {size}x{size} patches"
            )));
        }
        if field_radii.is_empty() {
            return Err(Error::Structural("no sampled fields".into()));
        }
        let rows = height / size;
        let cols = width / size;
        let mut patches = Vec::with_capacity(rows * cols);
        for row in 0..rows {
            for col in 0..cols {
                let w = ((col as f64 + 0.5) * size as f64 - width as f64 / 2.0) * pitch[0];
                let h = ((row as f64 + 0.5) * size as f64 - height as f64 / 2.0) * pitch[1];
                let radius_mm = w.hypot(h);
                patches.push(PatchInfo {
                    row,
                    col,
                    angle: h.atan2(w),
                    radius_mm,
                    weights: inverse_square_weights(radius_mm, field_radii),
                });
            }
        }
        Ok(Self {
            width,
            height,
            size,
            rows,
            cols,
            pitch,
            patches,
        })
    }

    /// Patch index covering pixel `(y, x)`.
    pub fn patch_of(&self, y: usize, x: usize) -> usize {
        (y / self.size) * self.cols + x / self.size
    }
}

/// Source taps for rotating a `t × t` map by `angle` about its centre pixel:
/// output pixel `k` reads `Σ w · input[idx]`.
pub fn rotation_taps(t: usize, angle: f64, pitch: [f64; 2]) -> Vec<[(usize, f64); 4]> {
    let c = (t / 2) as f64;
    let (s, co) = angle.sin_cos();
    let probe = Plane::zeros(t, t);
    let mut taps = Vec::with_capacity(t * t);
    for i in 0..t {
        for j in 0..t {
            let x = (j as f64 - c) * pitch[0];
            let y = (i as f64 - c) * pitch[1];
            let xs = co * x + s * y;
            let ys = -s * x + co * y;
            taps.push(probe.bilinear_taps(c + ys / pitch[1], c + xs / pitch[0]));
        }
    }
    taps
}

/// Rotates a square map by `angle` with bilinear resampling.
pub fn rotate(map: &Plane, angle: f64, pitch: [f64; 2]) -> Plane {
    let taps = rotation_taps(map.width, angle, pitch);
    let data = taps
        .iter()
        .map(|tp| tp.iter().map(|&(k, w)| if w != 0.0 { w * map.data[k] } else { 0.0 }).sum())
        .collect();
    Plane {
        width: map.width,
        height: map.height,
        data,
    }
}

/// `renorm(rotate(Σ_θ W(θ)·PSF(c, θ)))` for every channel.
pub fn patch_psf(grid: &PsfGrid, weights: &[f64], angle: f64, pitch: [f64; 2]) -> [Plane; 3] {
    let t = grid.support();
    std::array::from_fn(|c| {
        let mut mix = Plane::zeros(t, t);
        for (maps, &w) in grid.psfs.iter().zip(weights) {
            if w != 0.0 {
                mix.add_scaled(&maps[c], w);
            }
        }
        let mut rot = rotate(&mix, angle, pitch);
        rot.normalize();
        rot
    })
}

/// Patch PSFs for every patch in layout order.
pub fn patch_kernels(grid: &PsfGrid, layout: &PatchLayout) -> Result<Vec<[Plane; 3]>> {
    if grid.psfs.len() != layout.patches.first().map_or(0, |p| p.weights.len()) {
        return Err(Error::Structural(format!(
            "PSF grid has {} fields, layout expects {}",
            grid.psfs.len(),
            layout.patches.first().map_or(0, |p| p.weights.len())
        )));
    }
    Ok(layout
        .patches
        .par_iter()
        .map(|p| patch_psf(grid, &p.weights, p.angle, layout.pitch))
        .collect())
}

/// Identity kernels (all energy in the centre pixel) for every patch. A
/// delta is rotation invariant but its bilinear rotation is not, so these
/// skip the per-patch rotation.
pub fn delta_kernels(support: usize, layout: &PatchLayout) -> Vec<[Plane; 3]> {
    let mut d = Plane::zeros(support, support);
    *d.at_mut(support / 2, support / 2) = 1.0;
    vec![[d.clone(), d.clone(), d]; layout.patches.len()]
}

/// Convolves one patch region of `img` with `kernel`, writing into `out`
/// (a block of whole patch rows starting at image row `y0`).
fn convolve_region(img: &Plane, kernel: &Plane, y0: usize, x0: usize, size: usize, boundary: Boundary, out: &mut [f64]) {
    let t = kernel.width;
    let c = (t / 2) as isize;
    let w = img.width;
    let mut cols = vec![0usize; size + t - 1];
    for (k, v) in cols.iter_mut().enumerate() {
        *v = boundary.index(x0 as isize + k as isize - c, w);
    }
    for yy in 0..size {
        let y = (y0 + yy) as isize;
        for xx in 0..size {
            let mut acc = 0.0;
            for a in 0..t {
                let src_row = boundary.index(y - (a as isize - c), img.height) * w;
                let krow = &kernel.data[a * t..(a + 1) * t];
                let src = &cols[xx..xx + t];
                for (&kv, &sx) in krow.iter().zip(src.iter().rev()) {
                    acc += kv * img.data[src_row + sx];
                }
            }
            out[yy * w + x0 + xx] = acc;
        }
    }
}

/// Patch-wise convolution of a linear RGB image: pixel `p` of patch `k`
/// becomes `Σ_o K_k(o) · I(p − o)`, reading neighbours across patch borders.
pub fn convolve_patches(img: &Rgb, kernels: &[[Plane; 3]], layout: &PatchLayout, boundary: Boundary) -> Result<Rgb> {
    for p in img.iter() {
        if p.width != layout.width || p.height != layout.height {
            return Err(Error::Structural(format!(
                "image is {}x{}, layout expects {}x{}",
                p.width, p.height, layout.width, layout.height
            )));
        }
    }
    if kernels.len() != layout.patches.len() {
        return Err(Error::Structural("one kernel triple per patch required".into()));
    }
    let s = layout.size;
    let w = layout.width;
    Ok(std::array::from_fn(|c| {
        let mut out = Plane::zeros(layout.width, layout.height);
        out.data.par_chunks_mut(s * w).enumerate().for_each(|(row, block)| {
            for col in 0..layout.cols {
                let k = &kernels[row * layout.cols + col][c];
                convolve_region(&img[c], k, row * s, col * s, s, boundary, block);
            }
        });
        out
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn snap_and_symmetric_weights() {
        let radii = [0.0, 1.0, 2.0];
        assert_eq!(inverse_square_weights(1.0 + 1e-9, &radii), vec![0.0, 1.0, 0.0]);
        let w = inverse_square_weights(0.5, &[0.0, 1.0]);
        assert!((w[0] - 0.5).abs() < 1e-15 && (w[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn quarter_turn_is_transpose_flip() {
        let t = 7;
        let m = Plane::from_fn(t, t, |y, x| (y * 7 + x * x) as f64 + 0.5);
        let r = rotate(&m, std::f64::consts::FRAC_PI_2, [1.0, 1.0]);
        for i in 0..t {
            for j in 0..t {
                assert!((r.at(i, j) - m.at(t - 1 - j, i)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn layout_partitions_image() {
        let l = PatchLayout::new(8, 4, 2, [1.0, 1.0], &[0.0, 3.0]).unwrap();
        assert_eq!((l.rows, l.cols, l.patches.len()), (2, 4, 8));
        assert_eq!(l.patch_of(3, 7), 7);
        assert!(PatchLayout::new(9, 4, 2, [1.0, 1.0], &[0.0]).is_err());
        // Right of centre on the horizontal midline would be angle 0; the
        // lower-right patch sits below it.
        assert!(l.patches[7].angle > 0.0 && l.patches[7].angle < std::f64::consts::FRAC_PI_2);
    }

    #[test]
    fn delta_kernel_is_identity_and_shift_moves_content() {
        let img: Rgb = std::array::from_fn(|c| Plane::from_fn(6, 6, |y, x| (c * 100 + y * 6 + x) as f64));
        let l = PatchLayout::new(6, 6, 3, [1.0, 1.0], &[0.0]).unwrap();
        let mut d = Plane::zeros(3, 3);
        *d.at_mut(1, 1) = 1.0;
        let ks = vec![[d.clone(), d.clone(), d.clone()]; 4];
        let out = convolve_patches(&img, &ks, &l, Boundary::Replicate).unwrap();
        assert_eq!(out, img);
        let mut sh = Plane::zeros(3, 3);
        *sh.at_mut(1, 2) = 1.0;
        let ks = vec![[sh.clone(), sh.clone(), sh.clone()]; 4];
        let out = convolve_patches(&img, &ks, &l, Boundary::Periodic).unwrap();
        assert_eq!(out[0].at(2, 3), img[0].at(2, 2));
        assert_eq!(out[0].at(2, 0), img[0].at(2, 5));
    }
}

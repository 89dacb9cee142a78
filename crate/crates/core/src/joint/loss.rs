//! Depth-consistent image-quality loss.

use crate::error::{Error, Result};
use crate::imaging::{rgb_mse, Plane, Rgb};

/// Index of the reference depth that the others are pulled toward.
pub fn reference_depth(count: usize) -> usize {
    count / 2
}

/// `(1/J) Σ_j MSE(R_j, S) + α₂ Σ_{j≠ref} MSE(R_j, R_ref)`, MSE averaged over
/// all channels and pixels.
pub fn image_quality_loss(recons: &[Rgb], truth: &Rgb, alpha_depth: f64) -> Result<f64> {
    if recons.is_empty() {
        return Err(Error::Structural("no reconstructions".into()));
    }
    let mismatch = || Error::Structural("reconstruction and ground truth differ in shape".into());
    let r = reference_depth(recons.len());
    let mut fid = 0.0;
    let mut depth = 0.0;
    for (j, img) in recons.iter().enumerate() {
        fid += rgb_mse(img, truth).ok_or_else(mismatch)?;
        if j != r {
            depth += rgb_mse(img, &recons[r]).ok_or_else(mismatch)?;
        }
    }
    Ok(fid / recons.len() as f64 + alpha_depth * depth)
}

/// Gradient of [`image_quality_loss`] with respect to each reconstruction.
pub fn image_quality_gradient(recons: &[Rgb], truth: &Rgb, alpha_depth: f64) -> Vec<Rgb> {
    let count = recons.len();
    let r = reference_depth(count);
    let n = (3 * truth[0].data.len()) as f64;
    let mut grads: Vec<Rgb> = recons
        .iter()
        .map(|_| std::array::from_fn(|c| Plane::zeros(truth[c].width, truth[c].height)))
        .collect();
    for j in 0..count {
        for c in 0..3 {
            for k in 0..truth[c].data.len() {
                let a = recons[j][c].data[k];
                let mut g = 2.0 * (a - truth[c].data[k]) / (n * count as f64);
                if j != r {
                    let d = 2.0 * alpha_depth * (a - recons[r][c].data[k]) / n;
                    g += d;
                    grads[r][c].data[k] -= d;
                }
                grads[j][c].data[k] += g;
            }
        }
    }
    grads
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat(v: f64) -> Rgb {
        std::array::from_fn(|_| Plane::filled(4, 3, v))
    }

    #[test]
    fn hand_cases() {
        let s = flat(0.4);
        assert_eq!(image_quality_loss(&[s.clone(), s.clone(), s.clone()], &s, 0.1).unwrap(), 0.0);
        let d = 0.05;
        let off = flat(0.4 + d);
        let l = image_quality_loss(&[off.clone(), off.clone(), off.clone()], &s, 0.1).unwrap();
        assert!((l - d * d).abs() < 1e-12);
        let l = image_quality_loss(&[off.clone(), s.clone(), off], &s, 0.1).unwrap();
        assert!((l - (2.0 / 3.0 * d * d + 2.0 * 0.1 * d * d)).abs() < 1e-12);
    }

    #[test]
    fn gradient_matches_differences() {
        let s: Rgb = std::array::from_fn(|c| Plane::from_fn(3, 2, |y, x| 0.1 * (y + x + c) as f64));
        let rs: Vec<Rgb> = (0..3)
            .map(|j| std::array::from_fn(|c| Plane::from_fn(3, 2, |y, x| 0.1 * (y + x + c) as f64 + 0.01 * (j * 3 + x) as f64)))
            .collect();
        let g = image_quality_gradient(&rs, &s, 0.1);
        let h = 1e-6;
        for j in 0..3 {
            let mut p = rs.clone();
            p[j][1].data[4] += h;
            let mut m = rs.clone();
            m[j][1].data[4] -= h;
            let fd = (image_quality_loss(&p, &s, 0.1).unwrap() - image_quality_loss(&m, &s, 0.1).unwrap()) / (2.0 * h);
            assert!((fd - g[j][1].data[4]).abs() < 1e-9, "{j}: {fd} vs {}", g[j][1].data[4]);
        }
    }
}

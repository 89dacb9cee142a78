//! Imaging-chain simulation: ray-traced PSFs, spatially varying blur and the
//! camera ISP.

pub mod isp;
pub mod patch;
pub mod plane;
pub mod psf;
pub mod sensor;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub use isp::{
    add_noise, demosaic, demosaic_adjoint, forward_isp, forward_isp_adjoint, gamma_decode, gamma_encode, inverse_isp,
    mosaic, mosaic_adjoint,
};
pub use patch::{convolve_patches, delta_kernels, inverse_square_weights, patch_kernels, patch_psf, rotate, Boundary, PatchLayout};
pub use plane::{rgb_mse, Plane, Rgb};
pub use psf::{compute_psf, rgb_psf, splat, PsfGrid, PsfSettings, SpectralPsf};
pub use sensor::{GammaCurve, NoiseModel, SensorModel};

/// Noise switch for the raw-domain degradation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseDraw<'a> {
    pub model: &'a NoiseModel,
    pub seed: u64,
}

/// Linear raw image through blur, mosaic, optional noise and demosaic.
pub fn degrade_raw(
    raw: &Rgb,
    kernels: &[[Plane; 3]],
    layout: &PatchLayout,
    boundary: Boundary,
    noise: Option<NoiseDraw<'_>>,
) -> Result<Rgb> {
    let blurred = convolve_patches(raw, kernels, layout, boundary)?;
    let mut m = mosaic(&blurred);
    if let Some(n) = noise {
        let mut rng = ChaCha8Rng::seed_from_u64(n.seed);
        add_noise(&mut m, n.model, &mut rng);
    }
    Ok(demosaic(&m))
}

/// Display-referred scene to aberrated display image: inverse ISP, patch
/// blur, mosaic, noise, demosaic and forward ISP.
pub fn degrade(
    scene: &Rgb,
    kernels: &[[Plane; 3]],
    layout: &PatchLayout,
    sensor: &SensorModel,
    noise_seed: Option<u64>,
) -> Result<Rgb> {
    check_dims(scene, sensor)?;
    let raw = inverse_isp(scene, sensor);
    let noise = noise_seed.map(|seed| NoiseDraw {
        model: &sensor.noise,
        seed,
    });
    let out = degrade_raw(&raw, kernels, layout, Boundary::Replicate, noise)?;
    Ok(forward_isp(&out, sensor))
}

pub fn check_dims(img: &Rgb, sensor: &SensorModel) -> Result<()> {
    for p in img.iter() {
        if p.width != sensor.width || p.height != sensor.height {
            return Err(Error::Structural(format!(
                "image is {}x{}, sensor is {}x{}",
                p.width, p.height, sensor.width, sensor.height
            )));
        }
    }
    Ok(())
}

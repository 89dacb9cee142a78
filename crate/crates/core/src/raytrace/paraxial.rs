//! First-order (y-nu) analysis: focal lengths, stop sizing, paraxial chief
//! and marginal rays.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::lens::glass::LAMBDA_D;
use crate::lens::system::LensSystem;
use crate::raytrace::aim::aim_chief;
use crate::raytrace::trace::trace_to_image;
use crate::scalar::Scalar;

/// Index of the medium after each surface at `lambda_nm`.
pub fn media_indices<T: Scalar>(lens: &LensSystem<T>, lambda_nm: T) -> Vec<T> {
    lens.surfaces.iter().map(|s| s.material_after.index(lambda_nm)).collect()
}

/// Paraxial ray state (height, slope) at each surface, slope taken after refraction.
/// Traces surfaces `0..count`.
pub fn paraxial_trace<T: Scalar>(lens: &LensSystem<T>, lambda_nm: T, y0: T, u0: T, count: usize) -> Vec<(T, T)> {
    let idx = media_indices(lens, lambda_nm);
    let mut out = Vec::with_capacity(count);
    let mut y = y0;
    let mut u = u0;
    let mut n = T::one();
    for (i, s) in lens.surfaces.iter().take(count).enumerate() {
        if i > 0 {
            y = y + lens.surfaces[i - 1].thickness_after * u;
        }
        let n2 = idx[i];
        let power = s.curvature * (n2 - n);
        u = (n * u - y * power) / n2;
        n = n2;
        out.push((y, u));
    }
    out
}

/// Heights at the stop of the rays (y=1, u=0) and (y=0, u=1) launched at the first vertex.
pub fn stop_response<T: Scalar>(lens: &LensSystem<T>, lambda_nm: T) -> (T, T) {
    let k = lens.stop_index + 1;
    let a = paraxial_trace(lens, lambda_nm, T::one(), T::zero(), k);
    let b = paraxial_trace(lens, lambda_nm, T::zero(), T::one(), k);
    (a[lens.stop_index].0, b[lens.stop_index].0)
}

/// Sizes the stop so that an axial beam of the entrance-pupil diameter fills it.
pub fn update_stop_aperture<T: Scalar>(lens: &mut LensSystem<T>) {
    if lens.surfaces.is_empty() || lens.stop_index >= lens.surfaces.len() {
        return;
    }
    let (ha, _) = stop_response(lens, T::lit(LAMBDA_D));
    let half = lens.entrance_pupil_diameter * T::lit(0.5);
    let r = half * ha.abs();
    lens.surfaces[lens.stop_index].semi_diameter = if r.is_finite() && r > T::zero() { r } else { half };
}

/// Effective and back focal lengths for an object at infinity.
pub fn focal_lengths<T: Scalar>(lens: &LensSystem<T>, lambda_nm: T) -> Result<(T, T)> {
    let tr = paraxial_trace(lens, lambda_nm, T::one(), T::zero(), lens.surfaces.len());
    let &(y_last, u_last) = tr.last().ok_or_else(|| Error::Structural("lens has no surfaces".into()))?;
    if u_last.abs() < T::lit(1e-12) || !u_last.is_finite() {
        return Err(Error::DegeneratePower);
    }
    Ok((-T::one() / u_last, -y_last / u_last))
}

/// Paraxial chief ray start `(y0, u0)` at the first vertex for a field angle
/// (object on the −x side at `object_distance`).
pub fn paraxial_chief_start<T: Scalar>(lens: &LensSystem<T>, lambda_nm: T, field_deg: T, object_distance: T) -> (T, T) {
    let (ha, hb) = stop_response(lens, lambda_nm);
    let tan = field_deg.to_radians().tan();
    let denom = object_distance * ha + hb;
    if denom.abs() < T::epsilon() || !denom.is_finite() {
        return (T::zero(), tan);
    }
    let y0 = -tan * hb * object_distance / denom;
    let u0 = y0 / object_distance + tan;
    (y0, u0)
}

/// Paraxial chief-ray height on the image plane.
pub fn paraxial_image_height<T: Scalar>(lens: &LensSystem<T>, lambda_nm: T, field_deg: T, object_distance: T) -> T {
    let (y0, u0) = paraxial_chief_start(lens, lambda_nm, field_deg, object_distance);
    let tr = paraxial_trace(lens, lambda_nm, y0, u0, lens.surfaces.len());
    let &(y, u) = tr.last().expect("non-empty lens");
    y + lens.image_distance * u
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ParaxialSummary {
    pub efl: f64,
    pub bfl: f64,
    pub ttl: f64,
    /// Real chief-ray image height at the maximum field, d line (mm).
    pub image_height: f64,
    /// Percent, real versus paraxial chief height at the maximum field.
    pub distortion: f64,
    pub marginal_heights: Vec<f64>,
    pub chief_heights: Vec<f64>,
}

/// First-order summary of `lens` for an object at `object_distance`.
pub fn paraxial_analysis<T: Scalar>(lens: &LensSystem<T>, object_distance: T, max_field_deg: T) -> Result<ParaxialSummary> {
    let ld = T::lit(LAMBDA_D);
    let (efl, bfl) = focal_lengths(lens, ld)?;
    let n = lens.surfaces.len();

    let (ha, hb) = stop_response(lens, ld);
    let stop_r = lens.surfaces[lens.stop_index].semi_diameter;
    let denom = object_distance * ha + hb;
    let um = if denom.abs() > T::epsilon() { stop_r / denom } else { T::zero() };
    let marginal = paraxial_trace(lens, ld, object_distance * um, um, n);
    let (cy0, cu0) = paraxial_chief_start(lens, ld, max_field_deg, object_distance);
    let chief = paraxial_trace(lens, ld, cy0, cu0, n);

    let (image_height, distortion) = if max_field_deg > T::zero() {
        let ray = aim_chief(lens, max_field_deg, ld, object_distance)?;
        let hit = trace_to_image(lens, &ray, false);
        if !hit.valid {
            return Err(Error::FieldUnreachable {
                field_deg: max_field_deg.to_f64_lossy(),
            });
        }
        let y_real = hit.origin.x;
        let y_par = paraxial_image_height(lens, ld, max_field_deg, object_distance);
        let dist = if y_par.abs() > T::epsilon() {
            T::lit(100.0) * (y_real - y_par) / y_par
        } else {
            T::zero()
        };
        (y_real.abs(), dist)
    } else {
        (T::zero(), T::zero())
    };

    Ok(ParaxialSummary {
        efl: efl.to_f64_lossy(),
        bfl: bfl.to_f64_lossy(),
        ttl: lens.ttl().to_f64_lossy(),
        image_height: image_height.to_f64_lossy(),
        distortion: distortion.to_f64_lossy(),
        marginal_heights: marginal.iter().map(|p| p.0.to_f64_lossy()).collect(),
        chief_heights: chief.iter().map(|p| p.0.to_f64_lossy()).collect(),
    })
}

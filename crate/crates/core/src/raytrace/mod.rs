//! Sequential spherical ray tracing, ray aiming and first-order analysis.

pub mod aim;
pub mod paraxial;
pub mod ray;
pub mod trace;

pub use aim::{aim_bundle_from, aim_chief, aim_rays, aim_rays_strict, BundleSolution, PupilGrid};
pub use paraxial::{focal_lengths, paraxial_analysis, update_stop_aperture, ParaxialSummary};
pub use ray::{intersect_surface, refract, surface_normal, Ray};
pub use trace::{trace_system, trace_system_with, trace_to_image, TraceResult, Tracer};

use crate::lens::system::LensSystem;
use crate::scalar::Scalar;

/// Sets every non-stop semi-diameter to `margin ×` the largest traced height.
pub fn assign_semi_diameters<T: Scalar>(lens: &mut LensSystem<T>, heights: &[T], margin: T) {
    for (s, &h) in lens.surfaces.iter_mut().zip(heights) {
        if !s.is_stop {
            s.semi_diameter = if h > T::zero() { h * margin } else { T::lit(1e-3) };
        }
    }
}

/// Default clearance margin applied on top of traced heights.
pub const SEMI_DIAMETER_MARGIN: f64 = 1.02;

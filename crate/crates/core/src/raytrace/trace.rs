//! Surface-by-surface propagation of ray bundles to the image plane.

use crate::lens::glass::{Material, LAMBDA_D};
use crate::lens::system::LensSystem;
use crate::raytrace::ray::{intersect_surface, refract, surface_normal, Ray};
use crate::scalar::Scalar;

/// Result of tracing a bundle whose first ray is the chief ray.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceResult<T> {
    /// Image-plane (x, y) per launched ray; meaningless where `valid` is false.
    pub hits: Vec<[T; 2]>,
    pub valid: Vec<bool>,
    pub chief_hit: Option<[T; 2]>,
    /// Largest valid-ray height reached on each surface.
    pub surface_heights: Vec<T>,
}

impl<T: Scalar> TraceResult<T> {
    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    pub fn valid_hits(&self) -> impl Iterator<Item = [T; 2]> + '_ {
        self.hits.iter().zip(&self.valid).filter(|(_, &v)| v).map(|(h, _)| *h)
    }
}

/// Precomputed geometry and dispersion of a lens for fast repeated tracing.
pub struct Tracer<'a, T> {
    pub lens: &'a LensSystem<T>,
    pub vertex_z: Vec<T>,
    pub image_z: T,
    /// (n_d, B) of the medium after each surface; air is (1, 0).
    dispersion: Vec<(T, T)>,
}

impl<'a, T: Scalar> Tracer<'a, T> {
    pub fn new(lens: &'a LensSystem<T>) -> Self {
        let dispersion = lens
            .surfaces
            .iter()
            .map(|s| match &s.material_after {
                Material::Air => (T::one(), T::zero()),
                Material::Glass(g) => match g.dispersion_coefficients() {
                    Ok((_, b)) => (g.n_d, b),
                    Err(_) => (g.n_d, T::zero()),
                },
            })
            .collect();
        Self {
            lens,
            vertex_z: lens.vertex_z(),
            image_z: lens.image_z(),
            dispersion,
        }
    }

    #[inline]
    fn dispersion_term(lambda: T) -> T {
        let ld = T::lit(LAMBDA_D);
        T::one() / (lambda * lambda) - T::one() / (ld * ld)
    }

    /// Traces through surfaces `0..=last`, leaving the ray on surface `last`.
    /// `heights`, when given, receives the max height per surface.
    pub fn trace_through(&self, ray: &Ray<T>, last: usize, clearance: bool, mut heights: Option<&mut [T]>) -> Ray<T> {
        let term = Self::dispersion_term(ray.wavelength);
        let mut r = *ray;
        let mut n1 = T::one();
        for i in 0..=last {
            let s = &self.lens.surfaces[i];
            r = intersect_surface(&r, s, self.vertex_z[i], clearance && s.semi_diameter.is_finite());
            if !r.valid {
                return r;
            }
            if let Some(h) = heights.as_deref_mut() {
                let hh = r.height();
                if hh > h[i] {
                    h[i] = hh;
                }
            }
            let (nd, b) = self.dispersion[i];
            let n2 = nd + b * term;
            if n2 != n1 {
                let nrm = surface_normal(s.curvature, self.vertex_z[i], r.origin);
                r = refract(&r, nrm, n1, n2);
                if !r.valid {
                    return r;
                }
            }
            n1 = n2;
        }
        r
    }

    /// Traces to the image plane.
    pub fn trace(&self, ray: &Ray<T>, clearance: bool, heights: Option<&mut [T]>) -> Ray<T> {
        let n = self.lens.surfaces.len();
        let r = self.trace_through(ray, n - 1, clearance, heights);
        if !r.valid {
            return r;
        }
        if r.direction.z <= T::epsilon() {
            return r.invalidated();
        }
        let t = (self.image_z - r.origin.z) / r.direction.z;
        let mut out = r;
        out.origin = r.origin + r.direction * t;
        out
    }
}

/// Traces one ray to the image plane.
pub fn trace_to_image<T: Scalar>(lens: &LensSystem<T>, ray: &Ray<T>, clearance: bool) -> Ray<T> {
    Tracer::new(lens).trace(ray, clearance, None)
}

/// Traces a bundle (chief ray first) with semi-diameter clipping.
pub fn trace_system<T: Scalar>(lens: &LensSystem<T>, rays: &[Ray<T>]) -> TraceResult<T> {
    trace_system_with(lens, rays, true)
}

pub fn trace_system_with<T: Scalar>(lens: &LensSystem<T>, rays: &[Ray<T>], clearance: bool) -> TraceResult<T> {
    let tracer = Tracer::new(lens);
    let mut heights = vec![T::zero(); lens.surfaces.len()];
    let mut local = vec![T::zero(); lens.surfaces.len()];
    let mut hits = Vec::with_capacity(rays.len());
    let mut valid = Vec::with_capacity(rays.len());
    for ray in rays {
        local.iter_mut().for_each(|h| *h = T::zero());
        let r = tracer.trace(ray, clearance, Some(&mut local));
        if r.valid {
            for (h, l) in heights.iter_mut().zip(&local) {
                *h = h.max(*l);
            }
        }
        hits.push([r.origin.x, r.origin.y]);
        valid.push(r.valid);
    }
    let chief_hit = match valid.first() {
        Some(true) => Some(hits[0]),
        _ => None,
    };
    TraceResult {
        hits,
        valid,
        chief_hit,
        surface_heights: heights,
    }
}

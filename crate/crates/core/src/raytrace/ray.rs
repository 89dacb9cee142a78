//! Ray type, Newton surface intersection and vector Snell refraction.

use crate::lens::system::Surface;
use crate::scalar::{Scalar, Vec3};

/// Newton iteration cap for sphere intersection.
pub const MAX_NEWTON_ITERATIONS: usize = 50;

/// Allowed overshoot (mm) of a surface's semi-diameter before a ray is clipped.
pub const CLEARANCE_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ray<T> {
    pub origin: Vec3<T>,
    /// Unit direction cosines.
    pub direction: Vec3<T>,
    /// Wavelength (nm).
    pub wavelength: T,
    pub valid: bool,
}

impl<T: Scalar> Ray<T> {
    pub fn new(origin: Vec3<T>, direction: Vec3<T>, wavelength: T) -> Self {
        Self {
            origin,
            direction: direction.normalized(),
            wavelength,
            valid: true,
        }
    }

    #[inline]
    pub fn invalidated(mut self) -> Self {
        self.valid = false;
        self
    }

    #[inline]
    pub fn height(&self) -> T {
        (self.origin.x * self.origin.x + self.origin.y * self.origin.y).sqrt()
    }
}

/// Advances `ray` to `surface` whose vertex sits at `vertex_z`.
///
/// The parameter along the ray is refined by Newton iteration on the implicit
/// sphere `z − z_v − sag(x, y) = 0`, starting from the vertex plane. Rays that
/// miss the sphere, fail to converge, or (when `check_clearance`) land outside
/// the semi-diameter come back with `valid = false`.
pub fn intersect_surface<T: Scalar>(
    ray: &Ray<T>,
    surface: &Surface<T>,
    vertex_z: T,
    check_clearance: bool,
) -> Ray<T> {
    if !ray.valid {
        return *ray;
    }
    let o = ray.origin;
    let d = ray.direction;
    if d.z <= T::epsilon() {
        return ray.invalidated();
    }
    let mut t = (vertex_z - o.z) / d.z;
    let c = surface.curvature;
    if c != T::zero() {
        // Seed from the closed-form root measured from the vertex plane.
        let p0 = o + d * t;
        let b = d.z - c * (p0.x * d.x + p0.y * d.y);
        let h = c * (p0.x * p0.x + p0.y * p0.y);
        let disc = b * b - c * h;
        if disc < T::zero() {
            return ray.invalidated();
        }
        let denom = b + disc.sqrt();
        if denom.abs() > T::epsilon() {
            t = t + h / denom;
        }
        let tol = T::geometric_tolerance() * T::lit(1e-2);
        let mut converged = false;
        for _ in 0..MAX_NEWTON_ITERATIONS {
            let p = o + d * t;
            let r2 = p.x * p.x + p.y * p.y;
            let s = T::one() - c * c * r2;
            if s < T::zero() {
                return ray.invalidated();
            }
            let rs = s.sqrt();
            let sag = c * r2 / (T::one() + rs);
            let f = p.z - vertex_z - sag;
            let df = d.z - c * (p.x * d.x + p.y * d.y) / rs;
            if df.abs() <= T::epsilon() {
                return ray.invalidated();
            }
            let dt = f / df;
            t = t - dt;
            if dt.abs() <= tol {
                converged = true;
                break;
            }
        }
        if !converged {
            return ray.invalidated();
        }
    }
    let mut p = o + d * t;
    if c == T::zero() {
        p.z = vertex_z;
    }
    let mut out = *ray;
    out.origin = p;
    if c != T::zero() {
        let r2 = p.x * p.x + p.y * p.y;
        if T::one() - c * c * r2 < T::zero() {
            return out.invalidated();
        }
    }
    if check_clearance && out.height() > surface.semi_diameter + T::lit(CLEARANCE_TOLERANCE) {
        return out.invalidated();
    }
    out
}

/// Unit surface normal of a sphere (curvature `c`, vertex `vertex_z`) at `p`,
/// oriented along +z near the vertex.
#[inline]
pub fn surface_normal<T: Scalar>(c: T, vertex_z: T, p: Vec3<T>) -> Vec3<T> {
    Vec3::new(-c * p.x, -c * p.y, T::one() - c * (p.z - vertex_z))
}

/// Vector Snell refraction from index `n1` into `n2`. Total internal
/// reflection invalidates the ray.
pub fn refract<T: Scalar>(ray: &Ray<T>, normal: Vec3<T>, n1: T, n2: T) -> Ray<T> {
    if !ray.valid {
        return *ray;
    }
    if n1 == n2 {
        return *ray;
    }
    let d = ray.direction;
    let mut nrm = normal.normalized();
    let mut cos_i = -nrm.dot(d);
    if cos_i < T::zero() {
        nrm = -nrm;
        cos_i = -cos_i;
    }
    let eta = n1 / n2;
    let k = T::one() - eta * eta * (T::one() - cos_i * cos_i);
    if k < T::zero() {
        return ray.invalidated();
    }
    let t = d * eta + nrm * (eta * cos_i - k.sqrt());
    let mut out = *ray;
    out.direction = t;
    out
}

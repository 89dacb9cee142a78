//! Pupil sampling and ray aiming onto the physical aperture stop.

use crate::error::{Error, Result};
use crate::lens::system::LensSystem;
use crate::raytrace::paraxial::paraxial_chief_start;
use crate::raytrace::ray::Ray;
use crate::raytrace::trace::Tracer;
use crate::scalar::{Scalar, Vec3};

/// Iteration cap for the aiming solves.
pub const MAX_AIM_ITERATIONS: usize = 20;

/// Stop-plane tolerance (mm) for off-axis pupil rays; the chief ray is
/// solved to the scalar's geometric tolerance.
pub const PUPIL_AIM_TOLERANCE: f64 = 1e-8;

/// Concentric hexapolar pupil pattern: centre plus `6k` points on ring `k`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PupilGrid {
    pub rings: usize,
}

impl PupilGrid {
    pub fn hexapolar(rings: usize) -> Self {
        Self { rings }
    }

    pub fn len(&self) -> usize {
        1 + 3 * self.rings * (self.rings + 1)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Normalized (px, py) pupil coordinates, centre first, outer ring on the unit circle.
    pub fn points<T: Scalar>(&self) -> Vec<(T, T)> {
        let mut pts = Vec::with_capacity(self.len());
        pts.push((T::zero(), T::zero()));
        for k in 1..=self.rings {
            let r = T::lit(k as f64 / self.rings as f64);
            let count = 6 * k;
            for j in 0..count {
                let a = T::lit(std::f64::consts::TAU * j as f64 / count as f64);
                pts.push((r * a.cos(), r * a.sin()));
            }
        }
        pts
    }
}

impl Default for PupilGrid {
    fn default() -> Self {
        Self::hexapolar(6)
    }
}

/// Launches rays from an object point on the −x side toward points (u, v) on the
/// first-vertex plane and solves for the (u, v) that land on stop targets.
struct Aimer<'a, T> {
    tracer: Tracer<'a, T>,
    tan_field: T,
    object_distance: T,
    lambda: T,
    stop: usize,
}

impl<'a, T: Scalar> Aimer<'a, T> {
    fn new(lens: &'a LensSystem<T>, field_deg: T, lambda: T, object_distance: T) -> Self {
        Self {
            tracer: Tracer::new(lens),
            tan_field: field_deg.to_radians().tan(),
            object_distance,
            lambda,
            stop: lens.stop_index,
        }
    }

    fn launch(&self, u: T, v: T) -> Ray<T> {
        let d = self.object_distance;
        Ray::new(
            Vec3::new(u, v, T::zero()),
            Vec3::new(self.tan_field + u / d, v / d, T::one()),
            self.lambda,
        )
    }

    fn stop_hit(&self, u: T, v: T) -> Option<(T, T)> {
        let r = self.tracer.trace_through(&self.launch(u, v), self.stop, false, None);
        r.valid.then_some((r.origin.x, r.origin.y))
    }

    fn jacobian(&self, u: T, v: T, at: (T, T)) -> Option<[[T; 2]; 2]> {
        let h = T::lit(1e-6);
        let pu = self.stop_hit(u + h, v)?;
        let pv = self.stop_hit(u, v + h)?;
        Some([[(pu.0 - at.0) / h, (pv.0 - at.0) / h], [(pu.1 - at.1) / h, (pv.1 - at.1) / h]])
    }

    /// Newton solve with finite-difference Jacobian; returns the launch point and Jacobian.
    fn solve_chief(&self, guess: (T, T)) -> Option<((T, T), [[T; 2]; 2])> {
        let tol = T::geometric_tolerance();
        let (mut u, mut v) = guess;
        let mut jac = None;
        for _ in 0..MAX_AIM_ITERATIONS {
            let at = self.stop_hit(u, v)?;
            if at.0.abs() <= tol && at.1.abs() <= tol {
                let j = match jac {
                    Some(j) => j,
                    None => self.jacobian(u, v, at)?,
                };
                return Some(((u, v), j));
            }
            let j = self.jacobian(u, v, at)?;
            jac = Some(j);
            let (du, dv) = solve2(j, (-at.0, -at.1))?;
            u = u + du;
            v = v + dv;
        }
        None
    }

    /// Broyden (multi-dimensional secant) solve toward `target`, seeded with `jac`.
    fn solve_secant(&self, start: (T, T), target: (T, T), jac: [[T; 2]; 2], tol: T) -> Option<(T, T)> {
        let mut j = jac;
        let mut x = start;
        let mut f = {
            let h = self.stop_hit(x.0, x.1)?;
            (h.0 - target.0, h.1 - target.1)
        };
        for _ in 0..MAX_AIM_ITERATIONS {
            if f.0.abs() <= tol && f.1.abs() <= tol {
                return Some(x);
            }
            let step = solve2(j, (-f.0, -f.1))?;
            let mut s = step;
            let mut next = None;
            for _ in 0..8 {
                if let Some(h) = self.stop_hit(x.0 + s.0, x.1 + s.1) {
                    next = Some(h);
                    break;
                }
                s = (s.0 * T::lit(0.5), s.1 * T::lit(0.5));
            }
            let h = next?;
            let fnew = (h.0 - target.0, h.1 - target.1);
            let df = (fnew.0 - f.0, fnew.1 - f.1);
            let ss = s.0 * s.0 + s.1 * s.1;
            if ss > T::zero() {
                let r0 = df.0 - (j[0][0] * s.0 + j[0][1] * s.1);
                let r1 = df.1 - (j[1][0] * s.0 + j[1][1] * s.1);
                j[0][0] = j[0][0] + r0 * s.0 / ss;
                j[0][1] = j[0][1] + r0 * s.1 / ss;
                j[1][0] = j[1][0] + r1 * s.0 / ss;
                j[1][1] = j[1][1] + r1 * s.1 / ss;
            }
            x = (x.0 + s.0, x.1 + s.1);
            f = fnew;
        }
        (f.0.abs() <= tol && f.1.abs() <= tol).then_some(x)
    }

    fn chief(&self) -> Result<((T, T), [[T; 2]; 2])> {
        let lens = self.tracer.lens;
        let field = self.tan_field.atan().to_degrees();
        let (y0, _) = paraxial_chief_start(lens, self.lambda, field, self.object_distance);
        let guess = if y0.is_finite() { (y0, T::zero()) } else { (T::zero(), T::zero()) };
        self.solve_chief(guess)
            .or_else(|| self.solve_chief((T::zero(), T::zero())))
            .ok_or(Error::FieldUnreachable {
                field_deg: field.to_f64_lossy(),
            })
    }
}

fn solve2<T: Scalar>(j: [[T; 2]; 2], b: (T, T)) -> Option<(T, T)> {
    let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
    if det.abs() <= T::epsilon() * T::lit(1e-6) || !det.is_finite() {
        return None;
    }
    Some(((b.0 * j[1][1] - b.1 * j[0][1]) / det, (j[0][0] * b.1 - j[1][0] * b.0) / det))
}

/// Aims the chief ray (through the stop centre) for one field and wavelength.
pub fn aim_chief<T: Scalar>(lens: &LensSystem<T>, field_deg: T, lambda_nm: T, object_distance: T) -> Result<Ray<T>> {
    let aimer = Aimer::new(lens, field_deg, lambda_nm, object_distance);
    let ((u, v), _) = aimer.chief()?;
    Ok(aimer.launch(u, v))
}

/// Aims a full pupil bundle. The chief ray comes first; each further ray is
/// solved onto `stop_radius · (px, py)` on the stop. Rays whose solve fails are
/// returned with `valid = false`.
pub fn aim_rays<T: Scalar>(
    lens: &LensSystem<T>,
    field_deg: T,
    lambda_nm: T,
    object_distance: T,
    grid: PupilGrid,
) -> Result<Vec<Ray<T>>> {
    aim_bundle(lens, field_deg, lambda_nm, object_distance, grid, false)
}

/// Like [`aim_rays`] but fails with `FieldUnreachable` at the first pupil ray
/// that cannot be aimed.
pub fn aim_rays_strict<T: Scalar>(
    lens: &LensSystem<T>,
    field_deg: T,
    lambda_nm: T,
    object_distance: T,
    grid: PupilGrid,
) -> Result<Vec<Ray<T>>> {
    aim_bundle(lens, field_deg, lambda_nm, object_distance, grid, true)
}

/// Launch coordinates of an aimed bundle, reusable as the starting point for a
/// nearby wavelength at the same field.
#[derive(Clone, Debug, PartialEq)]
pub struct BundleSolution<T> {
    pub chief: (T, T),
    pub jacobian: [[T; 2]; 2],
    /// Launch point per non-chief pupil sample; `None` where aiming failed.
    pub pupil: Vec<Option<(T, T)>>,
}

fn aim_bundle<T: Scalar>(
    lens: &LensSystem<T>,
    field_deg: T,
    lambda_nm: T,
    object_distance: T,
    grid: PupilGrid,
    strict: bool,
) -> Result<Vec<Ray<T>>> {
    aim_bundle_from(lens, field_deg, lambda_nm, object_distance, grid, strict, None).map(|r| r.0)
}

/// Aims a bundle, optionally warm-started from a solution for another
/// wavelength of the same field and pupil grid.
pub fn aim_bundle_from<T: Scalar>(
    lens: &LensSystem<T>,
    field_deg: T,
    lambda_nm: T,
    object_distance: T,
    grid: PupilGrid,
    strict: bool,
    prior: Option<&BundleSolution<T>>,
) -> Result<(Vec<Ray<T>>, BundleSolution<T>)> {
    let aimer = Aimer::new(lens, field_deg, lambda_nm, object_distance);
    let chief_tol = T::geometric_tolerance();
    let pupil_tol = T::lit(PUPIL_AIM_TOLERANCE).max(chief_tol);
    let warm = prior.filter(|p| p.pupil.len() + 1 == grid.len());
    let (chief_uv, jac) = match warm.and_then(|p| aimer.solve_secant(p.chief, (T::zero(), T::zero()), p.jacobian, chief_tol).map(|uv| (uv, p.jacobian))) {
        Some(found) => found,
        None => aimer.chief()?,
    };
    let stop_r = lens.surfaces[lens.stop_index].semi_diameter;
    let pts = grid.points::<T>();
    let mut rays = Vec::with_capacity(pts.len());
    let mut pupil = Vec::with_capacity(pts.len() - 1);
    rays.push(aimer.launch(chief_uv.0, chief_uv.1));
    let mut prev: Option<((T, T), (T, T))> = None;
    for (k, &(px, py)) in pts[1..].iter().enumerate() {
        let target = (px * stop_r, py * stop_r);
        // Start from the other wavelength's answer, else predict from the chief
        // linearisation or the previous ray on the ring.
        let start = match (warm.and_then(|p| p.pupil[k]), prev) {
            (Some(uv), _) => uv,
            (None, Some((uv, tgt))) => {
                let d = solve2(jac, (target.0 - tgt.0, target.1 - tgt.1)).unwrap_or((T::zero(), T::zero()));
                (uv.0 + d.0, uv.1 + d.1)
            }
            (None, None) => {
                let d = solve2(jac, target).unwrap_or((T::zero(), T::zero()));
                (chief_uv.0 + d.0, chief_uv.1 + d.1)
            }
        };
        match aimer.solve_secant(start, target, jac, pupil_tol) {
            Some(uv) => {
                rays.push(aimer.launch(uv.0, uv.1));
                pupil.push(Some(uv));
                prev = Some((uv, target));
            }
            None if strict => {
                return Err(Error::FieldUnreachable {
                    field_deg: field_deg.to_f64_lossy(),
                })
            }
            None => {
                rays.push(aimer.launch(start.0, start.1).invalidated());
                pupil.push(None);
            }
        }
    }
    Ok((
        rays,
        BundleSolution {
            chief: chief_uv,
            jacobian: jac,
            pupil,
        },
    ))
}

//! Surface stack, design-form parsing and derived geometry.

use crate::error::{Error, Result};
use crate::lens::glass::{Glass, Material};
use crate::scalar::Scalar;

/// One refracting (or stop) surface.
#[derive(Clone, Debug, PartialEq)]
pub struct Surface<T> {
    /// Signed curvature (1/mm); zero for a plane.
    pub curvature: T,
    /// Axial distance to the next surface (mm). Unused on the last surface.
    pub thickness_after: T,
    pub material_after: Material<T>,
    pub semi_diameter: T,
    pub is_stop: bool,
}

impl<T: Scalar> Surface<T> {
    /// Sag of the surface at radial height `r`, `None` beyond the sphere.
    pub fn sag(&self, r: T) -> Option<T> {
        sphere_sag(self.curvature, r)
    }
}

/// Sag `c r² / (1 + √(1 − c² r²))` of a sphere with curvature `c`.
pub fn sphere_sag<T: Scalar>(c: T, r: T) -> Option<T> {
    let cr2 = c * r * r;
    let s = T::one() - c * cr2;
    if s < T::zero() {
        return None;
    }
    Some(cr2 / (T::one() + s.sqrt()))
}

/// How the spacing after a surface is parameterised.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpacingKind {
    GlassThickness,
    AirSpacing,
    /// Last surface to image plane.
    ImageDistance,
    /// Stop directly followed by glass: zero, not a free variable.
    Fixed,
}

/// Per-surface skeleton derived from a design-form string.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SurfaceSlot {
    pub is_stop: bool,
    /// Glass element index of the medium after this surface, `None` for air.
    pub glass_after: Option<usize>,
    pub spacing: SpacingKind,
}

/// Parsed sequence of Glass/Air/Stop tokens, e.g. `GAGASAGA`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DesignForm {
    pub name: String,
    pub slots: Vec<SurfaceSlot>,
    pub glass_count: usize,
    pub stop_index: usize,
}

impl DesignForm {
    pub fn parse(name: &str) -> Result<Self> {
        let tokens: Vec<char> = name.trim().chars().map(|c| c.to_ascii_uppercase()).collect();
        if tokens.is_empty() {
            return Err(Error::Structural("empty design form".into()));
        }
        let mut slots: Vec<SurfaceSlot> = Vec::new();
        let mut in_glass = false;
        let mut glass_count = 0usize;
        let mut stop_index = None;
        // Index of the surface whose trailing spacing is still undecided.
        let mut pending: Option<usize> = None;
        for (pos, &tok) in tokens.iter().enumerate() {
            match tok {
                'G' => {
                    if let Some(p) = pending.take() {
                        // stop immediately followed by glass
                        slots[p].spacing = SpacingKind::Fixed;
                    }
                    slots.push(SurfaceSlot {
                        is_stop: false,
                        glass_after: Some(glass_count),
                        spacing: SpacingKind::GlassThickness,
                    });
                    glass_count += 1;
                    in_glass = true;
                }
                'A' => {
                    if in_glass {
                        slots.push(SurfaceSlot {
                            is_stop: false,
                            glass_after: None,
                            spacing: SpacingKind::AirSpacing,
                        });
                        in_glass = false;
                    } else if let Some(p) = pending.take() {
                        slots[p].spacing = SpacingKind::AirSpacing;
                    } else {
                        return Err(Error::Structural(format!(
                            "design form {name}: air gap at position {pos} does not follow glass or stop"
                        )));
                    }
                }
                'S' => {
                    if in_glass {
                        return Err(Error::Structural(format!(
                            "design form {name}: stop at position {pos} lies inside glass"
                        )));
                    }
                    if stop_index.is_some() {
                        return Err(Error::Structural(format!("design form {name}: more than one stop")));
                    }
                    if pending.is_some() {
                        return Err(Error::Structural(format!(
                            "design form {name}: stop at position {pos} has no spacing before it"
                        )));
                    }
                    stop_index = Some(slots.len());
                    slots.push(SurfaceSlot {
                        is_stop: true,
                        glass_after: None,
                        spacing: SpacingKind::AirSpacing,
                    });
                    pending = Some(slots.len() - 1);
                }
                other => {
                    return Err(Error::Structural(format!(
                        "design form {name}: unknown token '{other}' (expected G, A or S)"
                    )))
                }
            }
        }
        if in_glass {
            return Err(Error::Structural(format!("design form {name} must end in air")));
        }
        if pending.is_some() {
            return Err(Error::Structural(format!("design form {name}: stop has no air gap after it")));
        }
        let stop_index =
            stop_index.ok_or_else(|| Error::Structural(format!("design form {name} has no stop")))?;
        if glass_count == 0 {
            return Err(Error::Structural(format!("design form {name} has no glass")));
        }
        let last = slots.len() - 1;
        slots[last].spacing = SpacingKind::ImageDistance;
        Ok(Self {
            name: tokens.iter().collect(),
            slots,
            glass_count,
            stop_index,
        })
    }
}

/// A sequential lens: surfaces, stop, image plane distance and pupil size.
#[derive(Clone, Debug, PartialEq)]
pub struct LensSystem<T> {
    pub surfaces: Vec<Surface<T>>,
    pub stop_index: usize,
    /// Last surface vertex to image plane (mm).
    pub image_distance: T,
    pub entrance_pupil_diameter: T,
    pub design_form: String,
}

impl<T: Scalar> LensSystem<T> {
    /// Checks the structural invariants against the design form.
    pub fn validate(&self) -> Result<()> {
        let form = DesignForm::parse(&self.design_form)?;
        if form.slots.len() != self.surfaces.len() {
            return Err(Error::Structural(format!(
                "design form {} expects {} surfaces, lens has {}",
                form.name,
                form.slots.len(),
                self.surfaces.len()
            )));
        }
        if form.stop_index != self.stop_index {
            return Err(Error::Structural(format!(
                "stop index {} does not match design form ({})",
                self.stop_index, form.stop_index
            )));
        }
        for (i, (s, slot)) in self.surfaces.iter().zip(&form.slots).enumerate() {
            if s.is_stop != slot.is_stop {
                return Err(Error::Structural(format!("surface {i}: stop flag mismatch")));
            }
            if s.is_stop && s.curvature != T::zero() {
                return Err(Error::Structural(format!("surface {i}: stop must be flat")));
            }
            if s.material_after.is_air() != slot.glass_after.is_none() {
                return Err(Error::Structural(format!("surface {i}: glass/air alternation mismatch")));
            }
            if let Some(g) = s.material_after.glass() {
                g.validate()?;
            }
            if !(s.semi_diameter > T::zero()) {
                return Err(Error::Structural(format!("surface {i}: semi-diameter must be positive")));
            }
            let needs_gap = i + 1 < self.surfaces.len() && slot.spacing != SpacingKind::Fixed;
            if needs_gap && !(s.thickness_after > T::zero()) {
                return Err(Error::Structural(format!("surface {i}: thickness must be positive")));
            }
        }
        if !(self.image_distance > T::zero()) {
            return Err(Error::Structural("image distance must be positive".into()));
        }
        if !(self.entrance_pupil_diameter > T::zero()) {
            return Err(Error::Structural("entrance pupil diameter must be positive".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.surfaces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.surfaces.is_empty()
    }

    /// z coordinate of each surface vertex, first surface at 0.
    pub fn vertex_z(&self) -> Vec<T> {
        let mut z = T::zero();
        let mut out = Vec::with_capacity(self.surfaces.len());
        for s in &self.surfaces {
            out.push(z);
            z = z + s.thickness_after;
        }
        out
    }

    /// z of the image plane.
    pub fn image_z(&self) -> T {
        let n = self.surfaces.len();
        let mut z = T::zero();
        for s in &self.surfaces[..n.saturating_sub(1)] {
            z = z + s.thickness_after;
        }
        z + self.image_distance
    }

    /// Total track: first vertex to image plane.
    pub fn ttl(&self) -> T {
        self.image_z()
    }

    /// Medium index before surface `i` at `lambda_nm`.
    pub fn index_before(&self, i: usize, lambda_nm: T) -> T {
        if i == 0 {
            T::one()
        } else {
            self.surfaces[i - 1].material_after.index(lambda_nm)
        }
    }

    pub fn glasses(&self) -> impl Iterator<Item = &Glass<T>> {
        self.surfaces.iter().filter_map(|s| s.material_after.glass())
    }

    /// Surface indices whose trailing medium is glass, in order.
    pub fn glass_surface_indices(&self) -> Vec<usize> {
        self.surfaces
            .iter()
            .enumerate()
            .filter(|(_, s)| !s.material_after.is_air())
            .map(|(i, _)| i)
            .collect()
    }

    /// Edge spacing between surface `i` and `i+1` at their own semi-diameters.
    pub fn edge_spacing(&self, i: usize) -> Option<T> {
        let a = &self.surfaces[i];
        let b = self.surfaces.get(i + 1)?;
        let sa = a.sag(a.semi_diameter)?;
        let sb = b.sag(b.semi_diameter)?;
        Some(a.thickness_after - sa + sb)
    }

    /// Maximum semi-diameter over all surfaces.
    pub fn max_semi_diameter(&self) -> T {
        self.surfaces
            .iter()
            .map(|s| s.semi_diameter)
            .fold(T::zero(), |a, b| a.max(b))
    }

    pub fn cast<U: Scalar>(&self) -> LensSystem<U> {
        let c = |v: T| U::lit(v.to_f64_lossy());
        LensSystem {
            surfaces: self
                .surfaces
                .iter()
                .map(|s| Surface {
                    curvature: c(s.curvature),
                    thickness_after: c(s.thickness_after),
                    material_after: match &s.material_after {
                        Material::Air => Material::Air,
                        Material::Glass(g) => Material::Glass(Glass {
                            n_d: c(g.n_d),
                            v_d: c(g.v_d),
                            name: g.name.clone(),
                        }),
                    },
                    semi_diameter: c(s.semi_diameter),
                    is_stop: s.is_stop,
                })
                .collect(),
            stop_index: self.stop_index,
            image_distance: c(self.image_distance),
            entrance_pupil_diameter: c(self.entrance_pupil_diameter),
            design_form: self.design_form.clone(),
        }
    }
}

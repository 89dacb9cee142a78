//! Normalized parameter vector and the schema mapping it to a lens.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lens::glass::{Glass, Material};
use crate::lens::system::{DesignForm, LensSystem, SpacingKind, Surface};
use crate::raytrace::paraxial;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamRole {
    Curvature,
    Spacing,
    IndexD,
    AbbeD,
}

/// Physical box bounds per parameter class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParameterRanges {
    pub curvature: [f64; 2],
    pub glass_thickness: [f64; 2],
    pub air_spacing: [f64; 2],
    pub image_distance: [f64; 2],
    pub index_d: [f64; 2],
    pub abbe_d: [f64; 2],
}

impl Default for ParameterRanges {
    fn default() -> Self {
        Self {
            curvature: [-0.1, 0.1],
            glass_thickness: [4.0, 15.0],
            air_spacing: [1.0, 15.0],
            image_distance: [18.0, 60.0],
            index_d: [1.51, 1.76],
            abbe_d: [27.5, 71.3],
        }
    }
}

impl ParameterRanges {
    pub fn validate(&self) -> Result<()> {
        let all = [
            ("curvature", self.curvature),
            ("glass_thickness", self.glass_thickness),
            ("air_spacing", self.air_spacing),
            ("image_distance", self.image_distance),
            ("index_d", self.index_d),
            ("abbe_d", self.abbe_d),
        ];
        for (name, [lo, hi]) in all {
            if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::Config(format!("parameter range {name}: need finite lo <= hi")));
            }
        }
        if self.glass_thickness[0] <= 0.0 || self.air_spacing[0] <= 0.0 || self.image_distance[0] <= 0.0 {
            return Err(Error::Config("spacing ranges must be strictly positive".into()));
        }
        if self.index_d[0] <= 1.0 || self.abbe_d[0] <= 0.0 {
            return Err(Error::Config("index range must exceed 1 and Abbe range be positive".into()));
        }
        Ok(())
    }
}

/// One coordinate of the parameter vector.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamEntry<T> {
    pub role: ParamRole,
    /// Surface the parameter lives on; for `Spacing` on the last surface it is
    /// the image distance, for glass roles it is the surface that enters the glass.
    pub surface: usize,
    pub lo: T,
    pub hi: T,
}

impl<T: Scalar> ParamEntry<T> {
    #[inline]
    pub fn to_physical(&self, v: T) -> T {
        let v = v.max(T::zero()).min(T::one());
        self.lo + v * (self.hi - self.lo)
    }

    #[inline]
    pub fn to_normalized(&self, p: T) -> T {
        if self.hi == self.lo {
            return T::zero();
        }
        (p - self.lo) / (self.hi - self.lo)
    }

    pub fn span(&self) -> T {
        self.hi - self.lo
    }
}

/// Ordered parameter layout for one design form.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamSchema<T> {
    pub form: DesignForm,
    pub entries: Vec<ParamEntry<T>>,
    pub entrance_pupil_diameter: T,
}

impl<T: Scalar> ParamSchema<T> {
    pub fn new(form: DesignForm, ranges: &ParameterRanges, entrance_pupil_diameter: T) -> Self {
        let r = |v: [f64; 2]| (T::lit(v[0]), T::lit(v[1]));
        let mut entries = Vec::new();
        let mut push = |role, surface, (lo, hi): (T, T)| entries.push(ParamEntry { role, surface, lo, hi });
        for (i, slot) in form.slots.iter().enumerate() {
            if !slot.is_stop {
                push(ParamRole::Curvature, i, r(ranges.curvature));
            }
            match slot.spacing {
                SpacingKind::GlassThickness => push(ParamRole::Spacing, i, r(ranges.glass_thickness)),
                SpacingKind::AirSpacing => push(ParamRole::Spacing, i, r(ranges.air_spacing)),
                SpacingKind::ImageDistance => push(ParamRole::Spacing, i, r(ranges.image_distance)),
                SpacingKind::Fixed => {}
            }
            if slot.glass_after.is_some() {
                push(ParamRole::IndexD, i, r(ranges.index_d));
                push(ParamRole::AbbeD, i, r(ranges.abbe_d));
            }
        }
        Self {
            form,
            entries,
            entrance_pupil_diameter,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn indices_of(&self, role: ParamRole) -> Vec<usize> {
        self.entries
            .iter()
            .enumerate()
            .filter(|(_, e)| e.role == role)
            .map(|(i, _)| i)
            .collect()
    }

    /// Builds a lens from normalized values (clamped to [0,1]).
    pub fn denormalize(&self, values: &[T]) -> Result<LensSystem<T>> {
        if values.len() != self.entries.len() {
            return Err(Error::Structural(format!(
                "parameter vector has {} values, schema expects {}",
                values.len(),
                self.entries.len()
            )));
        }
        let physical: Vec<T> = self
            .entries
            .iter()
            .zip(values)
            .map(|(e, &v)| e.to_physical(v))
            .collect();
        self.from_physical(&physical)
    }

    /// Builds a lens from physical parameter values (no clamping).
    pub fn from_physical(&self, physical: &[T]) -> Result<LensSystem<T>> {
        if physical.len() != self.entries.len() {
            return Err(Error::Structural("physical vector length mismatch".into()));
        }
        let n = self.form.slots.len();
        let mut surfaces: Vec<Surface<T>> = self
            .form
            .slots
            .iter()
            .map(|slot| Surface {
                curvature: T::zero(),
                thickness_after: T::zero(),
                material_after: match slot.glass_after {
                    Some(_) => Material::Glass(Glass::new(T::lit(1.5), T::lit(50.0))),
                    None => Material::Air,
                },
                semi_diameter: T::infinity(),
                is_stop: slot.is_stop,
            })
            .collect();
        let mut image_distance = T::zero();
        for (e, &p) in self.entries.iter().zip(physical) {
            let s = &mut surfaces[e.surface];
            match e.role {
                ParamRole::Curvature => s.curvature = p,
                ParamRole::Spacing => {
                    if e.surface == n - 1 {
                        image_distance = p;
                    } else {
                        s.thickness_after = p;
                    }
                }
                ParamRole::IndexD => {
                    if let Some(g) = s.material_after.glass_mut() {
                        g.n_d = p;
                    }
                }
                ParamRole::AbbeD => {
                    if let Some(g) = s.material_after.glass_mut() {
                        g.v_d = p;
                    }
                }
            }
        }
        let mut lens = LensSystem {
            surfaces,
            stop_index: self.form.stop_index,
            image_distance,
            entrance_pupil_diameter: self.entrance_pupil_diameter,
            design_form: self.form.name.clone(),
        };
        paraxial::update_stop_aperture(&mut lens);
        Ok(lens)
    }

    /// Reads the physical value of every schema coordinate from `lens`.
    pub fn read_physical(&self, lens: &LensSystem<T>) -> Result<Vec<T>> {
        if lens.surfaces.len() != self.form.slots.len() || lens.stop_index != self.form.stop_index {
            return Err(Error::Structural(format!(
                "lens ({} surfaces, form {}) does not match schema form {}",
                lens.surfaces.len(),
                lens.design_form,
                self.form.name
            )));
        }
        let n = lens.surfaces.len();
        self.entries
            .iter()
            .map(|e| {
                let s = &lens.surfaces[e.surface];
                let glass = || {
                    s.material_after
                        .glass()
                        .ok_or_else(|| Error::Structural(format!("surface {} is not followed by glass", e.surface)))
                };
                Ok(match e.role {
                    ParamRole::Curvature => s.curvature,
                    ParamRole::Spacing if e.surface == n - 1 => lens.image_distance,
                    ParamRole::Spacing => s.thickness_after,
                    ParamRole::IndexD => glass()?.n_d,
                    ParamRole::AbbeD => glass()?.v_d,
                })
            })
            .collect()
    }

    /// Writes physical values back into `lens` for the coordinates in `mask`
    /// (all when `None`), then refreshes the stop aperture.
    pub fn write_physical(&self, lens: &mut LensSystem<T>, physical: &[T], mask: Option<&[bool]>) {
        let n = lens.surfaces.len();
        for (k, (e, &p)) in self.entries.iter().zip(physical).enumerate() {
            if let Some(m) = mask {
                if !m[k] {
                    continue;
                }
            }
            let s = &mut lens.surfaces[e.surface];
            match e.role {
                ParamRole::Curvature => s.curvature = p,
                ParamRole::Spacing if e.surface == n - 1 => lens.image_distance = p,
                ParamRole::Spacing => s.thickness_after = p,
                ParamRole::IndexD => {
                    if let Some(g) = s.material_after.glass_mut() {
                        g.n_d = p;
                        g.name = None;
                    }
                }
                ParamRole::AbbeD => {
                    if let Some(g) = s.material_after.glass_mut() {
                        g.v_d = p;
                        g.name = None;
                    }
                }
            }
        }
        paraxial::update_stop_aperture(lens);
    }

    /// Maps a lens to normalized values. Out-of-range parameters are clamped
    /// and their coordinate indices returned in the second element.
    pub fn normalize(&self, lens: &LensSystem<T>) -> Result<(Vec<T>, Vec<usize>)> {
        let physical = self.read_physical(lens)?;
        let mut flagged = Vec::new();
        let values = self
            .entries
            .iter()
            .zip(physical)
            .enumerate()
            .map(|(k, (e, p))| {
                let v = e.to_normalized(p);
                if v < T::zero() || v > T::one() {
                    flagged.push(k);
                    v.max(T::zero()).min(T::one())
                } else {
                    v
                }
            })
            .collect();
        Ok((values, flagged))
    }

    /// Sum of all spacing parameters (the total track) for a normalized vector.
    pub fn track_length(&self, values: &[T]) -> T {
        self.entries
            .iter()
            .zip(values)
            .filter(|(e, _)| e.role == ParamRole::Spacing)
            .fold(T::zero(), |acc, (e, &v)| acc + e.to_physical(v))
    }
}

/// A normalized design vector bound to its schema.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamVector<T> {
    pub values: Vec<T>,
    pub schema: Arc<ParamSchema<T>>,
}

impl<T: Scalar> ParamVector<T> {
    pub fn new(values: Vec<T>, schema: Arc<ParamSchema<T>>) -> Result<Self> {
        if values.len() != schema.len() {
            return Err(Error::Structural(format!(
                "parameter vector has {} values, schema expects {}",
                values.len(),
                schema.len()
            )));
        }
        Ok(Self { values, schema })
    }

    pub fn from_lens(lens: &LensSystem<T>, schema: Arc<ParamSchema<T>>) -> Result<(Self, Vec<usize>)> {
        let (values, flagged) = schema.normalize(lens)?;
        Ok((Self { values, schema }, flagged))
    }

    pub fn to_lens(&self) -> Result<LensSystem<T>> {
        self.schema.denormalize(&self.values)
    }

    pub fn clamp(&mut self) {
        for v in &mut self.values {
            *v = v.max(T::zero()).min(T::one());
        }
    }

    pub fn distance(&self, other: &Self) -> T {
        euclidean(&self.values, &other.values)
    }
}

pub fn euclidean<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter()
        .zip(b)
        .fold(T::zero(), |acc, (&x, &y)| acc + (x - y) * (x - y))
        .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> ParamSchema<f64> {
        let ranges = ParameterRanges {
            curvature: [-0.1, 0.1],
            glass_thickness: [1.0, 15.0],
            air_spacing: [1.0, 15.0],
            image_distance: [10.0, 60.0],
            index_d: [1.51, 1.76],
            abbe_d: [27.5, 71.3],
        };
        ParamSchema::new(DesignForm::parse("GAGASAGA").unwrap(), &ranges, 16.0)
    }

    #[test]
    fn cooke_has_nineteen_coordinates() {
        let s = schema();
        assert_eq!(s.len(), 19);
        assert_eq!(s.indices_of(ParamRole::Curvature).len(), 6);
        assert_eq!(s.indices_of(ParamRole::Spacing).len(), 7);
        assert_eq!(s.indices_of(ParamRole::IndexD).len(), 3);
    }

    #[test]
    fn affine_map_examples() {
        let s = schema();
        let c = &s.entries[0];
        assert_eq!(c.to_normalized(0.0), 0.5);
        assert_eq!(c.to_normalized(0.1), 1.0);
        let sp = s.entries.iter().find(|e| e.role == ParamRole::Spacing && e.surface == 0).unwrap();
        assert_eq!(sp.to_normalized(4.5), 0.25);
        assert_eq!(sp.to_physical(0.25), 4.5);
    }

    #[test]
    fn midpoints_from_half_vector() {
        let s = schema();
        let lens = s.denormalize(&vec![0.5; s.len()]).unwrap();
        for surf in lens.surfaces.iter().filter(|x| !x.is_stop) {
            assert_eq!(surf.curvature, 0.0);
        }
        assert_eq!(lens.surfaces[0].thickness_after, 8.0);
        assert_eq!(lens.image_distance, 35.0);
    }

    #[test]
    fn out_of_range_clamped_and_flagged() {
        let s = schema();
        let mut lens = s.denormalize(&vec![0.5; s.len()]).unwrap();
        lens.surfaces[0].curvature = 0.2;
        let (v, flagged) = s.normalize(&lens).unwrap();
        assert_eq!(v[0], 1.0);
        assert_eq!(flagged, vec![0]);
    }

    #[test]
    fn shape_mismatch_is_structural() {
        let s = schema();
        assert!(matches!(s.denormalize(&[0.5; 3]), Err(Error::Structural(_))));
    }
}

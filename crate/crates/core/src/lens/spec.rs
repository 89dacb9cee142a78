//! Design specification: targets, constraint table and search settings.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lens::glass::{LAMBDA_C, LAMBDA_D, LAMBDA_F};
use crate::lens::params::ParameterRanges;

pub const SPEC_SCHEMA_VERSION: u32 = 1;

/// Objects "at infinity" are placed this far (mm) in front of the first vertex.
pub const INFINITY_SENTINEL_MM: f64 = 1e10;

/// Object distance measured from the first surface vertex.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum WorkingDistance {
    Finite(f64),
    Infinite,
}

impl WorkingDistance {
    pub fn object_distance_mm(self) -> f64 {
        match self {
            WorkingDistance::Finite(d) => d,
            WorkingDistance::Infinite => INFINITY_SENTINEL_MM,
        }
    }
}

impl Serialize for WorkingDistance {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            WorkingDistance::Finite(d) => s.serialize_f64(*d),
            WorkingDistance::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for WorkingDistance {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Text(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(v) if v.is_finite() && v > 0.0 => Ok(WorkingDistance::Finite(v)),
            Repr::Num(v) => Err(serde::de::Error::custom(format!("working distance must be positive, got {v}"))),
            Repr::Text(t) if matches!(t.to_ascii_lowercase().as_str(), "inf" | "infinity") => {
                Ok(WorkingDistance::Infinite)
            }
            Repr::Text(t) => Err(serde::de::Error::custom(format!("unknown working distance '{t}'"))),
        }
    }
}

/// Derived physical quantity that can carry a soft constraint.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    Efl,
    Distortion,
    AirEdgeSpacing,
    GlassEdgeThickness,
    Bfl,
    Ttl,
    ImageHeight,
    MaxSemiDiameter,
}

impl Quantity {
    pub fn id(self) -> &'static str {
        match self {
            Quantity::Efl => "efl",
            Quantity::Distortion => "distortion",
            Quantity::AirEdgeSpacing => "air_edge_spacing",
            Quantity::GlassEdgeThickness => "glass_edge_thickness",
            Quantity::Bfl => "bfl",
            Quantity::Ttl => "ttl",
            Quantity::ImageHeight => "image_height",
            Quantity::MaxSemiDiameter => "max_semi_diameter",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintSpec {
    pub quantity: Quantity,
    #[serde(default)]
    pub min: Option<f64>,
    #[serde(default)]
    pub max: Option<f64>,
    pub weight: f64,
}

impl ConstraintSpec {
    pub fn new(quantity: Quantity, min: Option<f64>, max: Option<f64>, weight: f64) -> Self {
        Self {
            quantity,
            min,
            max,
            weight,
        }
    }

    pub fn bounds(&self) -> (f64, f64) {
        (self.min.unwrap_or(f64::NEG_INFINITY), self.max.unwrap_or(f64::INFINITY))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[serde(default)]
pub struct SearchHyperparams {
    /// Population size `m`.
    pub population: usize,
    /// Generation count `N`.
    pub generations: usize,
    pub alpha_lc: f64,
    pub alpha_iq: f64,
    pub alpha_sa: f64,
    pub sa_step: f64,
    pub sa_convergence_threshold: f64,
    pub sa_window: usize,
    pub sa_max_iterations: usize,
    pub parent_fraction: f64,
    pub elite_fraction: f64,
    pub mutation_fraction: f64,
    pub mutation_retries: usize,
    pub similarity_distance: f64,
    pub output_loss_ceiling: f64,
    pub output_diversity_distance: f64,
    pub adam_lr: f64,
    pub adam_lr_floor_ratio: f64,
    pub adam_iterations: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_convergence_threshold: f64,
    pub adam_window: usize,
    pub fd_step: f64,
    /// Pupil rings traced per cell while searching; final outputs are
    /// re-scored with the spec's `pupil_rings`.
    pub search_pupil_rings: usize,
    /// ADAM iterations spent on each final elite after the last generation,
    /// cosine schedule over the whole budget and no early stop; 0 disables.
    pub polish_iterations: usize,
}

impl Default for SearchHyperparams {
    fn default() -> Self {
        Self {
            population: 500,
            generations: 10,
            alpha_lc: 0.25,
            alpha_iq: 1.0,
            alpha_sa: 0.1,
            sa_step: 0.1,
            sa_convergence_threshold: 0.025,
            sa_window: 20,
            sa_max_iterations: 2000,
            parent_fraction: 0.06,
            elite_fraction: 0.02,
            mutation_fraction: 0.3,
            mutation_retries: 10,
            similarity_distance: 0.2,
            output_loss_ceiling: 0.04,
            output_diversity_distance: 0.25,
            adam_lr: 0.02,
            adam_lr_floor_ratio: 0.01,
            adam_iterations: 300,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_convergence_threshold: 0.025,
            adam_window: 20,
            fd_step: 1e-4,
            search_pupil_rings: 2,
            polish_iterations: 1000,
        }
    }
}

/// Everything the merit function and the search need to know about a design task.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignSpec {
    #[serde(default = "spec_version")]
    pub schema_version: u32,
    #[serde(default)]
    pub name: Option<String>,
    pub design_forms: Vec<String>,
    /// Half field of view (deg).
    pub hfov: f64,
    pub f_number: f64,
    pub efl_range: [f64; 2],
    #[serde(default = "default_distances")]
    pub working_distances: Vec<WorkingDistance>,
    #[serde(default = "default_wavelengths")]
    pub wavelengths: Vec<f64>,
    /// Sampled fields (deg); empty means `{0, 0.5, 0.7, 1.0} × hfov`.
    #[serde(default)]
    pub sampled_fields: Vec<f64>,
    #[serde(default = "default_rings")]
    pub pupil_rings: usize,
    #[serde(default)]
    pub ranges: ParameterRanges,
    #[serde(default)]
    pub constraints: Vec<ConstraintSpec>,
    #[serde(default)]
    pub search: SearchHyperparams,
}

fn spec_version() -> u32 {
    SPEC_SCHEMA_VERSION
}

fn default_distances() -> Vec<WorkingDistance> {
    vec![WorkingDistance::Infinite]
}

pub fn default_wavelengths() -> Vec<f64> {
    vec![LAMBDA_F, LAMBDA_D, LAMBDA_C]
}

fn default_rings() -> usize {
    6
}

/// Default field fractions of the half field of view used by the merit function.
pub const DEFAULT_FIELD_FRACTIONS: [f64; 4] = [0.0, 0.5, 0.7, 1.0];

impl DesignSpec {
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SPEC_SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "schema_version {} unsupported (expected {SPEC_SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.design_forms.is_empty() {
            return Err(Error::Config("design_forms: at least one form required".into()));
        }
        for f in &self.design_forms {
            crate::lens::system::DesignForm::parse(f)?;
        }
        if !(self.hfov >= 0.0 && self.hfov < 89.0) {
            return Err(Error::Config(format!("hfov: must lie in [0, 89) deg, got {}", self.hfov)));
        }
        if !(self.f_number > 0.0) {
            return Err(Error::Config("f_number: must be positive".into()));
        }
        if !(self.efl_range[0] <= self.efl_range[1] && self.efl_range[0] > 0.0) {
            return Err(Error::Config("efl_range: need 0 < lo <= hi".into()));
        }
        if self.working_distances.is_empty() {
            return Err(Error::Config("working_distances: at least one required".into()));
        }
        if self.wavelengths.is_empty() || self.wavelengths.iter().any(|&l| !(l > 0.0)) {
            return Err(Error::Config("wavelengths: need at least one positive wavelength".into()));
        }
        if self.sampled_fields.iter().any(|&f| f < 0.0 || f > self.hfov + 1e-12) {
            return Err(Error::Config("sampled_fields: each field must lie in [0, hfov]".into()));
        }
        if self.pupil_rings == 0 {
            return Err(Error::Config("pupil_rings: must be at least 1".into()));
        }
        self.ranges.validate()?;
        for (i, c) in self.constraints.iter().enumerate() {
            let (lo, hi) = c.bounds();
            if !(lo <= hi) {
                return Err(Error::Config(format!("constraints[{i}] ({}): min > max", c.quantity.id())));
            }
            if !(c.weight >= 0.0) {
                return Err(Error::Config(format!("constraints[{i}] ({}): weight must be >= 0", c.quantity.id())));
            }
        }
        let s = &self.search;
        if s.population < 1 || s.generations < 1 {
            return Err(Error::Config("search: population and generations must be >= 1".into()));
        }
        for (name, w) in [
            ("alpha_lc", s.alpha_lc),
            ("alpha_iq", s.alpha_iq),
            ("alpha_sa", s.alpha_sa),
            ("sa_convergence_threshold", s.sa_convergence_threshold),
            ("similarity_distance", s.similarity_distance),
            ("output_diversity_distance", s.output_diversity_distance),
        ] {
            if !(w >= 0.0) {
                return Err(Error::Config(format!("search.{name}: must be >= 0")));
            }
        }
        for (name, f) in [
            ("parent_fraction", s.parent_fraction),
            ("elite_fraction", s.elite_fraction),
            ("mutation_fraction", s.mutation_fraction),
        ] {
            if !(0.0..=1.0).contains(&f) {
                return Err(Error::Config(format!("search.{name}: must lie in [0, 1]")));
            }
        }
        if s.search_pupil_rings == 0 {
            return Err(Error::Config("search.search_pupil_rings: must be at least 1".into()));
        }
        if s.sa_window == 0 || s.adam_window == 0 {
            return Err(Error::Config("search: convergence windows must be >= 1".into()));
        }
        if !(s.fd_step > 0.0 && s.fd_step < 0.5) {
            return Err(Error::Config("search.fd_step: must lie in (0, 0.5)".into()));
        }
        Ok(())
    }

    pub fn entrance_pupil_diameter(&self) -> f64 {
        0.5 * (self.efl_range[0] + self.efl_range[1]) / self.f_number
    }

    pub fn fields_deg(&self) -> Vec<f64> {
        if self.sampled_fields.is_empty() {
            DEFAULT_FIELD_FRACTIONS.iter().map(|f| f * self.hfov).collect()
        } else {
            self.sampled_fields.clone()
        }
    }

    pub fn max_field_deg(&self) -> f64 {
        self.fields_deg().into_iter().fold(0.0, f64::max)
    }

    /// Three-element Cooke-type task: EFL 40 mm, f/2.5, HFOV 20°, with the
    /// GAGASAGA constraint table (distortion ±1 %, BFL > 29 mm, TTL < 50 mm).
    pub fn cooke_triplet() -> Self {
        use Quantity::*;
        Self {
            schema_version: SPEC_SCHEMA_VERSION,
            name: Some("cooke-gagasaga".into()),
            design_forms: vec!["GAGASAGA".into()],
            hfov: 20.0,
            f_number: 2.5,
            efl_range: [39.0, 41.0],
            working_distances: vec![WorkingDistance::Infinite],
            wavelengths: default_wavelengths(),
            sampled_fields: vec![],
            pupil_rings: 6,
            ranges: ParameterRanges {
                curvature: [-0.11, 0.11],
                glass_thickness: [1.3, 8.0],
                air_spacing: [1.3, 10.0],
                image_distance: [20.0, 45.0],
                index_d: [1.51, 1.76],
                abbe_d: [27.5, 71.3],
            },
            constraints: vec![
                ConstraintSpec::new(Efl, Some(39.0), Some(41.0), 0.1),
                ConstraintSpec::new(Distortion, Some(-1.0), Some(1.0), 1.0),
                ConstraintSpec::new(AirEdgeSpacing, Some(0.3), Some(8.0), 0.1),
                ConstraintSpec::new(GlassEdgeThickness, Some(1.0), Some(8.0), 0.1),
                ConstraintSpec::new(Bfl, Some(29.0), None, 0.05),
                ConstraintSpec::new(Ttl, None, Some(50.0), 0.01),
                ConstraintSpec::new(ImageHeight, Some(14.0), Some(15.1), 1.0),
            ],
            search: SearchHyperparams {
                output_loss_ceiling: 0.08,
                ..SearchHyperparams::default()
            },
        }
    }

    /// Extended depth-of-field three-element task (HFOV 20°, f/2.5,
    /// depths 100 m / 10 m / 5 m) with a free stop position.
    pub fn edof_three_element() -> Self {
        use Quantity::*;
        Self {
            schema_version: SPEC_SCHEMA_VERSION,
            name: Some("edof-3e-i".into()),
            design_forms: vec!["SAGAGAGA".into(), "GASAGAGA".into(), "GAGASAGA".into(), "GAGAGASA".into()],
            hfov: 20.0,
            f_number: 2.5,
            efl_range: [38.0, 42.0],
            working_distances: vec![
                WorkingDistance::Finite(100_000.0),
                WorkingDistance::Finite(10_000.0),
                WorkingDistance::Finite(5_000.0),
            ],
            wavelengths: default_wavelengths(),
            sampled_fields: vec![],
            pupil_rings: 6,
            ranges: ParameterRanges {
                curvature: [-0.1, 0.1],
                glass_thickness: [4.0, 15.0],
                air_spacing: [1.0, 15.0],
                image_distance: [18.0, 45.0],
                index_d: [1.51, 1.76],
                abbe_d: [27.5, 71.3],
            },
            constraints: vec![
                ConstraintSpec::new(Efl, Some(38.0), Some(42.0), 0.1),
                ConstraintSpec::new(Distortion, Some(-2.0), Some(2.0), 1.0),
                ConstraintSpec::new(AirEdgeSpacing, Some(1.0), Some(15.0), 0.1),
                ConstraintSpec::new(GlassEdgeThickness, Some(5.0), Some(15.0), 0.1),
                ConstraintSpec::new(Bfl, Some(18.0), None, 0.05),
                ConstraintSpec::new(Ttl, None, Some(60.0), 0.01),
                ConstraintSpec::new(ImageHeight, Some(14.16), Some(14.44), 1.0),
            ],
            search: SearchHyperparams::default(),
        }
    }
}

//! Lens representation: glasses, surfaces, design forms, the normalized
//! parameter vector, the glass catalog and the design specification.

pub mod catalog;
pub mod glass;
pub mod params;
pub mod reference;
pub mod spec;
pub mod system;

pub use catalog::{CatalogEntry, GlassCatalog};
pub use glass::{Glass, Material, LAMBDA_C, LAMBDA_D, LAMBDA_F};
pub use params::{euclidean, ParamEntry, ParamRole, ParamSchema, ParamVector, ParameterRanges};
pub use spec::{ConstraintSpec, DesignSpec, Quantity, SearchHyperparams, WorkingDistance, INFINITY_SENTINEL_MM};
pub use system::{sphere_sag, DesignForm, LensSystem, SpacingKind, Surface, SurfaceSlot};

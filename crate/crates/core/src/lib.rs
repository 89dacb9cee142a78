//! Automatic design of compound spherical lenses.
//!
//! The crate covers the full path from a design specification to a refined,
//! manufacturable lens:
//!
//! * [`lens`]: surfaces, glasses, design forms and the normalized parameter vector;
//! * [`raytrace`]: sequential tracing, ray aiming and paraxial analysis;
//! * [`merit`]: spot, lateral colour and constraint losses;
//! * [`search`]: the annealing / selection / ADAM / mutation global search;
//! * [`imaging`]: ray-traced PSFs, patch-wise convolution and the ISP chain;
//! * [`io`]: JSON prescriptions and configuration, PFM and PNG files;
//! * [`joint`]: image-space refinement with two-stage gradients and glass
//!   quantization.
//!
//! Optics code is generic over [`Scalar`]; the aliases below fix it to `f64`.

pub mod error;
pub mod imaging;
pub mod io;
pub mod joint;
pub mod lens;
pub mod merit;
pub mod raytrace;
pub mod scalar;
pub mod search;

pub use error::{Error, Result};
pub use scalar::{Scalar, Vec3};

pub type Real = f64;
pub type GlassF64 = lens::Glass<f64>;
pub type SurfaceF64 = lens::Surface<f64>;
pub type LensSystemF64 = lens::LensSystem<f64>;
pub type LensSystemF32 = lens::LensSystem<f32>;
pub type ParamVectorF64 = lens::ParamVector<f64>;
pub type ParamSchemaF64 = lens::ParamSchema<f64>;
pub type RayF64 = raytrace::Ray<f64>;
pub type TraceResultF64 = raytrace::TraceResult<f64>;

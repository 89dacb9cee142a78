use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("structural mismatch: {0}")]
    Structural(String),
    #[error("degenerate dispersion: Abbe number must be positive (got {0})")]
    DegenerateDispersion(f64),
    #[error("afocal system: paraxial power is zero")]
    DegeneratePower,
    #[error("field {field_deg} deg unreachable: ray aiming did not converge")]
    FieldUnreachable { field_deg: f64 },
    #[error("infeasible configuration: {0}")]
    Infeasible(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("glass catalog is empty")]
    EmptyCatalog,
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

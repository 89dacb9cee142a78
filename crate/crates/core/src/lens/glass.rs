//! Glass description and the two-term dispersion model `n(λ) = A + B/λ²`.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Fraunhofer d line (nm); `n_d` is defined here.
pub const LAMBDA_D: f64 = 587.6;
/// Fraunhofer F line (nm).
pub const LAMBDA_F: f64 = 486.1;
/// Fraunhofer C line (nm).
pub const LAMBDA_C: f64 = 656.3;

/// An optical glass given by its d-line index and Abbe number.
#[derive(Clone, Debug, PartialEq)]
pub struct Glass<T> {
    pub n_d: T,
    pub v_d: T,
    pub name: Option<String>,
}

impl<T: Scalar> Glass<T> {
    pub fn new(n_d: T, v_d: T) -> Self {
        Self { n_d, v_d, name: None }
    }

    pub fn named(name: impl Into<String>, n_d: T, v_d: T) -> Self {
        Self {
            n_d,
            v_d,
            name: Some(name.into()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.n_d > T::one()) {
            return Err(Error::Config(format!("n_d must exceed 1 (got {})", self.n_d)));
        }
        if !(self.v_d > T::zero()) {
            return Err(Error::DegenerateDispersion(self.v_d.to_f64_lossy()));
        }
        Ok(())
    }

    /// Coefficients `(A, B)` with `B` in nm².
    pub fn dispersion_coefficients(&self) -> Result<(T, T)> {
        let b = self.cauchy_b()?;
        let ld = T::lit(LAMBDA_D);
        Ok((self.n_d - b / (ld * ld), b))
    }

    fn cauchy_b(&self) -> Result<T> {
        if !(self.v_d > T::zero()) {
            return Err(Error::DegenerateDispersion(self.v_d.to_f64_lossy()));
        }
        let lf = T::lit(LAMBDA_F);
        let lc = T::lit(LAMBDA_C);
        let span = T::one() / (lf * lf) - T::one() / (lc * lc);
        Ok((self.n_d - T::one()) / (self.v_d * span))
    }

    /// Refractive index at `lambda_nm`.
    ///
    /// Evaluated as `n_d + B (1/λ² − 1/λ_d²)` so the d line returns `n_d` bit-exactly.
    pub fn refractive_index(&self, lambda_nm: T) -> Result<T> {
        let b = self.cauchy_b()?;
        Ok(self.index_with_b(b, lambda_nm))
    }

    #[inline]
    pub(crate) fn index_with_b(&self, b: T, lambda_nm: T) -> T {
        let ld = T::lit(LAMBDA_D);
        self.n_d + b * (T::one() / (lambda_nm * lambda_nm) - T::one() / (ld * ld))
    }
}

/// Medium following a surface.
#[derive(Clone, Debug, PartialEq)]
pub enum Material<T> {
    Air,
    Glass(Glass<T>),
}

impl<T: Scalar> Material<T> {
    pub fn is_air(&self) -> bool {
        matches!(self, Material::Air)
    }

    pub fn glass(&self) -> Option<&Glass<T>> {
        match self {
            Material::Air => None,
            Material::Glass(g) => Some(g),
        }
    }

    pub fn glass_mut(&mut self) -> Option<&mut Glass<T>> {
        match self {
            Material::Air => None,
            Material::Glass(g) => Some(g),
        }
    }

    /// Index at `lambda_nm`; air is taken as exactly 1. Glasses with
    /// non-positive Abbe numbers fall back to their d-line index.
    pub fn index(&self, lambda_nm: T) -> T {
        match self {
            Material::Air => T::one(),
            Material::Glass(g) => g.refractive_index(lambda_nm).unwrap_or(g.n_d),
        }
    }
}

//! Discrete glass catalog and the weighted (n_d, v_d) distance to it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lens::glass::Glass;

/// Catalog file format version.
pub const CATALOG_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CatalogEntry {
    pub name: String,
    pub n_d: f64,
    pub v_d: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GlassCatalog {
    #[serde(default = "catalog_version")]
    pub schema_version: u32,
    pub entries: Vec<CatalogEntry>,
    #[serde(default = "default_alpha_n")]
    pub alpha_n: f64,
    #[serde(default = "default_alpha_v")]
    pub alpha_v: f64,
}

fn catalog_version() -> u32 {
    CATALOG_SCHEMA_VERSION
}

fn default_alpha_n() -> f64 {
    100.0
}

fn default_alpha_v() -> f64 {
    0.0004
}

impl GlassCatalog {
    pub fn new(entries: Vec<CatalogEntry>) -> Result<Self> {
        let c = Self {
            schema_version: CATALOG_SCHEMA_VERSION,
            entries,
            alpha_n: default_alpha_n(),
            alpha_v: default_alpha_v(),
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != CATALOG_SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "catalog schema_version {} unsupported (expected {CATALOG_SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.entries.is_empty() {
            return Err(Error::EmptyCatalog);
        }
        for e in &self.entries {
            Glass::named(e.name.clone(), e.n_d, e.v_d).validate()?;
        }
        if self.alpha_n < 0.0 || self.alpha_v < 0.0 {
            return Err(Error::Config("catalog distance weights must be non-negative".into()));
        }
        Ok(())
    }

    /// Weighted squared distance `α_n Δn² + α_v Δv²`.
    pub fn distance(&self, n_d: f64, v_d: f64, entry: &CatalogEntry) -> f64 {
        let dn = n_d - entry.n_d;
        let dv = v_d - entry.v_d;
        self.alpha_n * dn * dn + self.alpha_v * dv * dv
    }

    /// Index and distance of the closest entry. Ties resolve to the earliest entry.
    pub fn nearest(&self, n_d: f64, v_d: f64) -> Result<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for (i, e) in self.entries.iter().enumerate() {
            let d = self.distance(n_d, v_d, e);
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((i, d));
            }
        }
        best.ok_or(Error::EmptyCatalog)
    }

    pub fn contains(&self, glass: &Glass<f64>) -> bool {
        self.entries.iter().any(|e| e.n_d == glass.n_d && e.v_d == glass.v_d)
    }

    pub fn glass(&self, i: usize) -> Glass<f64> {
        let e = &self.entries[i];
        Glass::named(e.name.clone(), e.n_d, e.v_d)
    }

    /// A small set of common crown and flint glasses spanning
    /// n_d 1.51–1.76 and v_d 27.5–71.3 (nominal d-line data).
    pub fn builtin() -> Self {
        let raw: &[(&str, f64, f64)] = &[
            ("H-K9L", 1.51680, 64.20),
            ("H-K51", 1.52855, 76.98),
            ("H-BaK7", 1.56883, 56.04),
            ("H-ZK3", 1.58913, 61.25),
            ("H-ZK9B", 1.62041, 60.34),
            ("H-ZK14", 1.60311, 60.60),
            ("H-LaK52", 1.72916, 54.67),
            ("H-LaK51A", 1.69680, 55.46),
            ("H-LaF3B", 1.74400, 44.90),
            ("H-BaF4", 1.60562, 43.93),
            ("H-F4", 1.62004, 36.37),
            ("H-ZF1", 1.64769, 33.84),
            ("H-ZF2", 1.67270, 32.17),
            ("H-ZF3", 1.71736, 29.50),
            ("H-ZF52", 1.75520, 27.53),
            ("H-QF50A", 1.54814, 45.82),
        ];
        let entries = raw
            .iter()
            .filter(|(_, _, v)| *v <= 71.3)
            .map(|&(name, n_d, v_d)| CatalogEntry {
                name: name.to_string(),
                n_d,
                v_d,
            })
            .collect();
        Self::new(entries).expect("builtin catalog is valid")
    }
}

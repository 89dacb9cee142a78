//! Scalar losses: spot size, lateral colour, constraint penalties, glass
//! distance and the aggregate design loss.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::lens::catalog::GlassCatalog;
use crate::lens::glass::LAMBDA_D;
use crate::lens::spec::{DesignSpec, Quantity};
use crate::lens::system::{sphere_sag, LensSystem};
use crate::raytrace::aim::{aim_bundle_from, aim_chief, PupilGrid};
use crate::raytrace::paraxial::{focal_lengths, paraxial_image_height, update_stop_aperture};
use crate::raytrace::trace::Tracer;
use crate::raytrace::{assign_semi_diameters, SEMI_DIAMETER_MARGIN};

/// Base loss (mm) for a design that cannot be traced; the invalid-ray
/// fraction is added on top so that penalties stay ordered.
pub const UNTRACEABLE_PENALTY: f64 = 1e4;

/// `max(lo − q, 0) + max(q − hi, 0)`.
pub fn violation(q: f64, lo: f64, hi: f64) -> f64 {
    (lo - q).max(0.0) + (q - hi).max(0.0)
}

/// One constrained quantity instance.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConstraintTerm {
    pub id: String,
    pub value: f64,
    pub min: Option<f64>,
    pub max: Option<f64>,
    pub weight: f64,
    pub violation: f64,
    /// `weight · violation`.
    pub penalty: f64,
}

impl ConstraintTerm {
    pub fn new(id: impl Into<String>, value: f64, min: Option<f64>, max: Option<f64>, weight: f64) -> Self {
        let v = violation(value, min.unwrap_or(f64::NEG_INFINITY), max.unwrap_or(f64::INFINITY));
        let v = if v.is_nan() { f64::INFINITY } else { v };
        Self {
            id: id.into(),
            value,
            min,
            max,
            weight,
            violation: v,
            penalty: weight * v,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ConstraintReport {
    pub terms: Vec<ConstraintTerm>,
    /// Linear constraint loss over all terms.
    pub total: f64,
}

impl ConstraintReport {
    pub fn new(terms: Vec<ConstraintTerm>) -> Self {
        let total = linear_constraint_loss(&terms);
        Self { terms, total }
    }

    pub fn quadratic_total(&self) -> f64 {
        quadratic_constraint_loss(&self.terms)
    }
}

/// `(1/n) Σ α·violation`.
pub fn linear_constraint_loss(terms: &[ConstraintTerm]) -> f64 {
    if terms.is_empty() {
        return 0.0;
    }
    terms.iter().map(|t| t.weight * t.violation).sum::<f64>() / terms.len() as f64
}

/// `(1/n) Σ α·violation²`.
pub fn quadratic_constraint_loss(terms: &[ConstraintTerm]) -> f64 {
    if terms.is_empty() {
        return 0.0;
    }
    terms.iter().map(|t| t.weight * t.violation * t.violation).sum::<f64>() / terms.len() as f64
}

/// Mean weighted squared distance of each `(n_d, v_d)` to its nearest catalog glass.
pub fn glass_variable_loss(glasses: &[(f64, f64)], catalog: &GlassCatalog) -> Result<f64> {
    if catalog.entries.is_empty() {
        return Err(Error::EmptyCatalog);
    }
    if glasses.is_empty() {
        return Ok(0.0);
    }
    let mut sum = 0.0;
    for &(n, v) in glasses {
        sum += catalog.nearest(n, v)?.1;
    }
    Ok(sum / glasses.len() as f64)
}

/// RMS of `√((x − x̄)² + y²)` over `hits`, with `x̄` the chief-ray x.
pub fn spot_rms(hits: &[[f64; 2]], chief_x: f64) -> Option<f64> {
    if hits.is_empty() {
        return None;
    }
    let s: f64 = hits
        .iter()
        .map(|h| {
            let dx = h[0] - chief_x;
            dx * dx + h[1] * h[1]
        })
        .sum();
    Some((s / hits.len() as f64).sqrt())
}

/// Mean spot RMS over (field, wavelength) cells given as `(hits, chief_x)`.
/// `None` when any cell is empty.
pub fn spot_loss(cells: &[(Vec<[f64; 2]>, f64)]) -> Option<f64> {
    if cells.is_empty() {
        return None;
    }
    let mut sum = 0.0;
    for (hits, cx) in cells {
        sum += spot_rms(hits, *cx)?;
    }
    Some(sum / cells.len() as f64)
}

/// Mean over fields of the spread (max − min) of chief-ray x across wavelengths.
pub fn lateral_chromatic_loss(chief_x: &[Vec<f64>]) -> f64 {
    if chief_x.is_empty() {
        return 0.0;
    }
    let spread = |xs: &Vec<f64>| {
        let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
        if xs.is_empty() {
            0.0
        } else {
            hi - lo
        }
    };
    chief_x.iter().map(spread).sum::<f64>() / chief_x.len() as f64
}

/// `L_PC + α_IQ (L_S + α_LC L_LC)`.
pub fn combine(l_pc: f64, l_s: f64, l_lc: f64, alpha_iq: f64, alpha_lc: f64) -> f64 {
    l_pc + alpha_iq * (l_s + alpha_lc * l_lc)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DistanceLoss {
    /// Object distance (mm); the infinity sentinel for distant objects.
    pub object_distance: f64,
    pub l_s: f64,
    pub l_lc: f64,
    pub l_pc: f64,
    pub l_of: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LossBreakdown {
    pub l_s: f64,
    pub l_lc: f64,
    pub l_pc: f64,
    pub l_of: f64,
    pub per_distance: Vec<DistanceLoss>,
    pub traceable: bool,
    pub invalid_fraction: f64,
}

impl LossBreakdown {
    pub fn untraceable(invalid_fraction: f64) -> Self {
        Self {
            l_s: f64::NAN,
            l_lc: f64::NAN,
            l_pc: f64::NAN,
            l_of: UNTRACEABLE_PENALTY + invalid_fraction,
            per_distance: Vec::new(),
            traceable: false,
            invalid_fraction,
        }
    }

    /// Averages per-distance losses.
    pub fn from_distances(per_distance: Vec<DistanceLoss>) -> Self {
        let k = per_distance.len().max(1) as f64;
        let mean = |f: fn(&DistanceLoss) -> f64| per_distance.iter().map(f).sum::<f64>() / k;
        Self {
            l_s: mean(|d| d.l_s),
            l_lc: mean(|d| d.l_lc),
            l_pc: mean(|d| d.l_pc),
            l_of: mean(|d| d.l_of),
            per_distance,
            traceable: true,
            invalid_fraction: 0.0,
        }
    }
}

/// Traced (field × wavelength) cells for one object distance.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceTrace {
    pub object_distance: f64,
    /// `cells[field][wavelength]`: image hits, chief first.
    pub cells: Vec<Vec<Vec<[f64; 2]>>>,
}

/// Full evaluation of a candidate: the lens with assigned semi-diameters,
/// its loss breakdown, and the constraint reports per distance.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub lens: LensSystem<f64>,
    pub breakdown: LossBreakdown,
    pub reports: Vec<ConstraintReport>,
    pub traces: Vec<DistanceTrace>,
}

impl Evaluation {
    pub fn loss(&self) -> f64 {
        self.breakdown.l_of
    }
}

fn clamped_sag(c: f64, r: f64) -> f64 {
    let r = if c != 0.0 { r.min(1.0 / c.abs()) } else { r };
    sphere_sag(c, r).unwrap_or(0.0)
}

/// Edge thickness of each glass element, in surface order.
pub fn glass_edge_thicknesses(lens: &LensSystem<f64>) -> Vec<f64> {
    let n = lens.surfaces.len();
    (0..n.saturating_sub(1))
        .filter(|&i| !lens.surfaces[i].material_after.is_air())
        .map(|i| {
            let a = &lens.surfaces[i];
            let b = &lens.surfaces[i + 1];
            a.thickness_after - clamped_sag(a.curvature, a.semi_diameter) + clamped_sag(b.curvature, b.semi_diameter)
        })
        .collect()
}

/// Edge clearance of each air gap between consecutive powered surfaces. A stop
/// inside the gap is stepped over and its spacing added to the gap.
pub fn air_edge_spacings(lens: &LensSystem<f64>) -> Vec<f64> {
    let powered: Vec<usize> = (0..lens.surfaces.len()).filter(|&i| !lens.surfaces[i].is_stop).collect();
    powered
        .windows(2)
        .filter(|w| lens.surfaces[w[0]].material_after.is_air())
        .map(|w| {
            let (i, j) = (w[0], w[1]);
            let gap: f64 = (i..j).map(|k| lens.surfaces[k].thickness_after).sum();
            let a = &lens.surfaces[i];
            let b = &lens.surfaces[j];
            gap - clamped_sag(a.curvature, a.semi_diameter) + clamped_sag(b.curvature, b.semi_diameter)
        })
        .collect()
}

/// Real d-line chief height and paraxial percent distortion at `field_deg`.
pub fn chief_height_and_distortion(lens: &LensSystem<f64>, field_deg: f64, object_distance: f64, real_x: Option<f64>) -> Result<(f64, f64)> {
    if field_deg <= 0.0 {
        return Ok((0.0, 0.0));
    }
    let y_real = match real_x {
        Some(x) => x,
        None => {
            let ray = aim_chief(lens, field_deg, LAMBDA_D, object_distance)?;
            let hit = Tracer::new(lens).trace(&ray, false, None);
            if !hit.valid {
                return Err(Error::FieldUnreachable { field_deg });
            }
            hit.origin.x
        }
    };
    let y_par = paraxial_image_height(lens, LAMBDA_D, field_deg, object_distance);
    let dist = if y_par.abs() > f64::EPSILON { 100.0 * (y_real - y_par) / y_par } else { 0.0 };
    Ok((y_real.abs(), dist))
}

/// Constraint terms for `lens` (semi-diameters already assigned) at one object distance.
pub fn constraint_terms(lens: &LensSystem<f64>, spec: &DesignSpec, object_distance: f64, real_chief_x: Option<f64>) -> Result<Vec<ConstraintTerm>> {
    let mut terms = Vec::new();
    let needs_chief = spec
        .constraints
        .iter()
        .any(|c| matches!(c.quantity, Quantity::Distortion | Quantity::ImageHeight));
    let chief = if needs_chief {
        Some(chief_height_and_distortion(lens, spec.max_field_deg(), object_distance, real_chief_x)?)
    } else {
        None
    };
    let first_order = if spec
        .constraints
        .iter()
        .any(|c| matches!(c.quantity, Quantity::Efl | Quantity::Bfl))
    {
        Some(focal_lengths(lens, LAMBDA_D)?)
    } else {
        None
    };
    for c in &spec.constraints {
        let id = c.quantity.id();
        let mut push = |name: String, v: f64| terms.push(ConstraintTerm::new(name, v, c.min, c.max, c.weight));
        match c.quantity {
            Quantity::Efl => push(id.into(), first_order.unwrap().0),
            Quantity::Bfl => push(id.into(), first_order.unwrap().1),
            Quantity::Ttl => push(id.into(), lens.ttl()),
            Quantity::Distortion => push(id.into(), chief.unwrap().1),
            Quantity::ImageHeight => push(id.into(), chief.unwrap().0),
            Quantity::MaxSemiDiameter => push(id.into(), lens.max_semi_diameter()),
            Quantity::AirEdgeSpacing => {
                for (k, v) in air_edge_spacings(lens).into_iter().enumerate() {
                    push(format!("{id}[{k}]"), v);
                }
            }
            Quantity::GlassEdgeThickness => {
                for (k, v) in glass_edge_thicknesses(lens).into_iter().enumerate() {
                    push(format!("{id}[{k}]"), v);
                }
            }
        }
    }
    Ok(terms)
}

/// Aims and traces every (distance, field, wavelength) cell, assigns
/// semi-diameters from the traced heights, and scores the result.
pub fn evaluate(lens: &LensSystem<f64>, spec: &DesignSpec, pupil_rings: usize) -> Evaluation {
    let mut lens = lens.clone();
    for s in lens.surfaces.iter_mut().filter(|s| !s.is_stop) {
        s.semi_diameter = f64::INFINITY;
    }
    update_stop_aperture(&mut lens);
    let grid = PupilGrid::hexapolar(pupil_rings);
    let fields = spec.fields_deg();
    let distances: Vec<f64> = spec.working_distances.iter().map(|w| w.object_distance_mm()).collect();
    let total = distances.len() * fields.len() * spec.wavelengths.len() * grid.len();

    let mut heights = vec![0.0; lens.surfaces.len()];
    let mut traced = 0usize;
    let mut failed = false;
    let mut traces = Vec::with_capacity(distances.len());
    // Largest fields fail most often, so they go first and the pass stops at
    // the first ray that cannot be aimed or traced.
    let mut field_order: Vec<usize> = (0..fields.len()).collect();
    field_order.sort_by(|&a, &b| fields[b].total_cmp(&fields[a]).then(a.cmp(&b)));
    {
        let tracer = Tracer::new(&lens);
        'dist: for &d in &distances {
            let mut cells = vec![Vec::new(); fields.len()];
            for &fi in &field_order {
                let mut row = Vec::with_capacity(spec.wavelengths.len());
                let mut prior = None;
                for &w in &spec.wavelengths {
                    let Ok((rays, sol)) = aim_bundle_from(&lens, fields[fi], w, d, grid, true, prior.as_ref()) else {
                        failed = true;
                        break 'dist;
                    };
                    prior = Some(sol);
                    let mut hits = Vec::with_capacity(rays.len());
                    for ray in &rays {
                        let r = tracer.trace(ray, false, Some(&mut heights));
                        if !(r.valid && r.origin.x.is_finite() && r.origin.y.is_finite()) {
                            failed = true;
                            break 'dist;
                        }
                        hits.push([r.origin.x, r.origin.y]);
                        traced += 1;
                    }
                    row.push(hits);
                }
                cells[fi] = row;
            }
            traces.push(DistanceTrace { object_distance: d, cells });
        }
    }
    assign_semi_diameters(&mut lens, &heights, SEMI_DIAMETER_MARGIN);

    if failed {
        return Evaluation {
            lens,
            breakdown: LossBreakdown::untraceable(1.0 - traced as f64 / total.max(1) as f64),
            reports: Vec::new(),
            traces,
        };
    }

    let s = &spec.search;
    let d_index = spec.wavelengths.iter().position(|&w| (w - LAMBDA_D).abs() < 1e-9);
    let max_field = spec.max_field_deg();
    let f_index = fields.iter().position(|&f| f == max_field);
    let mut per_distance = Vec::with_capacity(traces.len());
    let mut reports = Vec::with_capacity(traces.len());
    for t in &traces {
        let mut spot_cells = Vec::new();
        let mut chief_x = Vec::with_capacity(fields.len());
        for row in &t.cells {
            let xs: Vec<f64> = row.iter().map(|hits| hits[0][0]).collect();
            for (hits, &cx) in row.iter().zip(&xs) {
                spot_cells.push((hits.clone(), cx));
            }
            chief_x.push(xs);
        }
        let l_s = spot_loss(&spot_cells).unwrap_or(f64::INFINITY);
        let l_lc = lateral_chromatic_loss(&chief_x);
        let real_x = match (f_index, d_index) {
            (Some(fi), Some(wi)) => Some(t.cells[fi][wi][0][0]),
            _ => None,
        };
        let terms = match constraint_terms(&lens, spec, t.object_distance, real_x) {
            Ok(terms) => terms,
            Err(_) => {
                return Evaluation {
                    lens,
                    breakdown: LossBreakdown::untraceable(1.0),
                    reports,
                    traces,
                }
            }
        };
        let report = ConstraintReport::new(terms);
        let l_pc = report.total;
        per_distance.push(DistanceLoss {
            object_distance: t.object_distance,
            l_s,
            l_lc,
            l_pc,
            l_of: combine(l_pc, l_s, l_lc, s.alpha_iq, s.alpha_lc),
        });
        reports.push(report);
    }
    let mut breakdown = LossBreakdown::from_distances(per_distance);
    if !breakdown.l_of.is_finite() {
        breakdown = LossBreakdown::untraceable(1.0);
    }
    Evaluation {
        lens,
        breakdown,
        reports,
        traces,
    }
}

/// The design loss at the spec's pupil sampling.
pub fn optifusion_loss(lens: &LensSystem<f64>, spec: &DesignSpec) -> LossBreakdown {
    evaluate(lens, spec, spec.pupil_rings).breakdown
}

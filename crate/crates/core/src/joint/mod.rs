//! Image-space lens refinement: a depth-consistent image loss evaluated
//! through the imaging chain, gradients split into a PSF Jacobian and an
//! image-space pullback, and step-wise replacement of continuous glasses by
//! catalog glasses.

pub mod loss;
pub mod recon;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::isp::{demosaic, demosaic_adjoint, forward_isp, forward_isp_adjoint, inverse_isp, mosaic, mosaic_adjoint};
use crate::imaging::patch::{convolve_patches, patch_kernels, rotation_taps, Boundary, PatchLayout};
use crate::imaging::{degrade, Plane, PsfGrid, PsfSettings, Rgb, SensorModel};
use crate::lens::{DesignForm, DesignSpec, GlassCatalog, LensSystem, ParamRole, ParamSchema};
use crate::merit::{evaluate, glass_variable_loss, UNTRACEABLE_PENALTY};
use crate::search::adam::Adam;

pub use loss::{image_quality_gradient, image_quality_loss};
pub use recon::ReconstructionOperator;

/// Per-class ADAM learning rates in physical units.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearningRates {
    pub curvature: f64,
    pub spacing: f64,
    pub index_d: f64,
    pub abbe_d: f64,
}

impl LearningRates {
    pub fn for_role(&self, role: ParamRole) -> f64 {
        match role {
            ParamRole::Curvature => self.curvature,
            ParamRole::Spacing => self.spacing,
            ParamRole::IndexD => self.index_d,
            ParamRole::AbbeD => self.abbe_d,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EpjoConfig {
    /// Weight of the image-quality term.
    pub alpha_iq: f64,
    /// Perceptual-term weight; kept for configuration compatibility, the
    /// perceptual term itself is not computed.
    pub alpha_perceptual: f64,
    /// Weight pulling each depth's reconstruction toward the reference depth.
    pub alpha_depth: f64,
    pub learning_rates: LearningRates,
    /// Lens steps per epoch.
    pub lens_steps: usize,
    /// Reconstruction steps per lens step; a parameter-free operator has
    /// nothing to train, so this only bounds the inner loop.
    pub recon_iterations: usize,
    pub depth_count: usize,
    pub max_epochs: usize,
    /// Finite-difference step as a fraction of each parameter's range.
    pub fd_step: f64,
    pub psf: PsfSettings,
    pub patch_size: usize,
    /// Pupil rings used when scoring constraints.
    pub constraint_rings: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
}

impl Default for EpjoConfig {
    fn default() -> Self {
        Self {
            alpha_iq: 100.0,
            alpha_perceptual: 0.01,
            alpha_depth: 0.1,
            learning_rates: LearningRates {
                curvature: 2e-4,
                spacing: 0.02,
                index_d: 1e-3,
                abbe_d: 0.2,
            },
            lens_steps: 5,
            recon_iterations: 1000,
            depth_count: 3,
            max_epochs: 20,
            fd_step: 1e-5,
            psf: PsfSettings::default(),
            patch_size: 64,
            constraint_rings: 1,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
        }
    }
}

impl EpjoConfig {
    pub fn validate(&self) -> Result<()> {
        let lr = &self.learning_rates;
        let weights = [self.alpha_iq, self.alpha_perceptual, self.alpha_depth, lr.curvature, lr.spacing, lr.index_d, lr.abbe_d];
        if weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::Config("epjo: weights and learning rates must be >= 0".into()));
        }
        if self.lens_steps == 0 {
            return Err(Error::Config("epjo.lens_steps: must be at least 1".into()));
        }
        if self.depth_count == 0 || self.max_epochs == 0 || self.patch_size == 0 || self.constraint_rings == 0 {
            return Err(Error::Config("epjo: depth_count, max_epochs, patch_size and constraint_rings must be >= 1".into()));
        }
        if !(self.fd_step > 0.0 && self.fd_step < 0.1) {
            return Err(Error::Config("epjo.fd_step: must lie in (0, 0.1)".into()));
        }
        self.psf.validate()
    }
}

/// Training and held-out scenes (display-referred, sensor-sized).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ImageSet {
    pub train: Vec<Rgb>,
    pub validation: Vec<Rgb>,
}

impl ImageSet {
    fn validation_or_train(&self) -> &[Rgb] {
        if self.validation.is_empty() {
            &self.train
        } else {
            &self.validation
        }
    }
}

/// Shape of the flattened PSF vector `F`: `[depth][field][channel][t][t]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PsfShape {
    pub depths: usize,
    pub fields: usize,
    pub support: usize,
}

impl PsfShape {
    pub fn len(&self) -> usize {
        self.depths * self.fields * 3 * self.support * self.support
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn offset(&self, depth: usize, field: usize, channel: usize) -> usize {
        ((depth * self.fields + field) * 3 + channel) * self.support * self.support
    }
}

fn flatten(stack: &[PsfGrid]) -> (Vec<f64>, PsfShape) {
    let shape = PsfShape {
        depths: stack.len(),
        fields: stack.first().map_or(0, |g| g.psfs.len()),
        support: stack.first().map_or(0, |g| g.support()),
    };
    let mut out = Vec::with_capacity(shape.len());
    for g in stack {
        for maps in &g.psfs {
            for m in maps {
                out.extend_from_slice(&m.data);
            }
        }
    }
    (out, shape)
}

fn unflatten(flat: &[f64], shape: PsfShape) -> Vec<PsfGrid> {
    let t = shape.support;
    (0..shape.depths)
        .map(|j| PsfGrid {
            object_distance: f64::NAN,
            fields_deg: vec![f64::NAN; shape.fields],
            psfs: (0..shape.fields)
                .map(|f| {
                    std::array::from_fn(|c| {
                        let o = shape.offset(j, f, c);
                        Plane {
                            width: t,
                            height: t,
                            data: flat[o..o + t * t].to_vec(),
                        }
                    })
                })
                .collect(),
            anchors: vec![[0.0; 2]; shape.fields],
            channel_offsets: vec![[[0.0; 2]; 3]; shape.fields],
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum AdjointStage {
    /// `F` and `∂F/∂ξ` are available; nothing image-side has been computed.
    Jacobian,
    /// The image-space pullback has been applied.
    Gradient,
}

/// What survives the first stage: PSF values and their parameter Jacobian.
#[derive(Clone, Debug, PartialEq)]
pub struct AdjointState {
    pub psf_values: Vec<f64>,
    /// One column per lens parameter, each `psf_values.len()` long; frozen
    /// parameters have zero columns.
    pub psf_jacobian: Vec<Vec<f64>>,
    pub shape: PsfShape,
    pub stage: AdjointStage,
}

impl AdjointState {
    /// (PSF pixels, lens parameters).
    pub fn jacobian_dims(&self) -> (usize, usize) {
        (self.psf_values.len(), self.psf_jacobian.len())
    }
}

/// Breakdown of the joint loss `L_PC + α_IQ · L_IQ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointLoss {
    pub physical: f64,
    pub image: f64,
    pub total: f64,
}

/// Everything fixed while a lens is refined in image space.
#[derive(Clone, Debug)]
pub struct JointProblem {
    pub spec: DesignSpec,
    pub sensor: SensorModel,
    pub catalog: GlassCatalog,
    pub config: EpjoConfig,
    pub recon: ReconstructionOperator,
    pub schema: ParamSchema<f64>,
    pub layout: PatchLayout,
    pub depths: Vec<f64>,
    pub max_field: f64,
}

impl JointProblem {
    /// Sets up the problem around `lens`; the patch layout's field radii are
    /// taken from this lens at the reference depth and then held fixed.
    pub fn new(
        lens: &LensSystem<f64>,
        spec: &DesignSpec,
        sensor: &SensorModel,
        catalog: &GlassCatalog,
        config: &EpjoConfig,
        recon: ReconstructionOperator,
    ) -> Result<Self> {
        config.validate()?;
        sensor.validate()?;
        catalog.validate()?;
        lens.validate()?;
        let depths: Vec<f64> = spec.working_distances.iter().map(|w| w.object_distance_mm()).collect();
        if depths.len() != config.depth_count {
            return Err(Error::Config(format!(
                "spec has {} working distances, joint refinement expects {}",
                depths.len(),
                config.depth_count
            )));
        }
        let schema = ParamSchema::new(DesignForm::parse(&lens.design_form)?, &spec.ranges, lens.entrance_pupil_diameter);
        let max_field = spec.max_field_deg();
        let reference = depths[loss::reference_depth(depths.len())];
        let grid = PsfGrid::build(lens, reference, max_field, sensor, &config.psf)?;
        let layout = PatchLayout::new(sensor.width, sensor.height, config.patch_size, sensor.pitch_mm(), &grid.field_radii())?;
        Ok(Self {
            spec: spec.clone(),
            sensor: sensor.clone(),
            catalog: catalog.clone(),
            config: config.clone(),
            recon,
            schema,
            layout,
            depths,
            max_field,
        })
    }

    pub fn parameters(&self, lens: &LensSystem<f64>) -> Result<Vec<f64>> {
        self.schema.read_physical(lens)
    }

    pub fn with_parameters(&self, lens: &LensSystem<f64>, x: &[f64], mask: &[bool]) -> LensSystem<f64> {
        let mut out = lens.clone();
        self.schema.write_physical(&mut out, x, Some(mask));
        out
    }

    /// Free-coordinate mask with the glass coordinates of `frozen` surfaces off.
    pub fn mask_for(&self, frozen: &[usize]) -> Vec<bool> {
        self.schema
            .entries
            .iter()
            .map(|e| !(matches!(e.role, ParamRole::IndexD | ParamRole::AbbeD) && frozen.contains(&e.surface)))
            .collect()
    }

    fn steps(&self) -> Vec<f64> {
        self.schema.entries.iter().map(|e| self.config.fd_step * e.span()).collect()
    }

    /// PSF grids at every depth.
    pub fn psf_stack(&self, lens: &LensSystem<f64>) -> Result<Vec<PsfGrid>> {
        self.depths
            .iter()
            .map(|&d| PsfGrid::build(lens, d, self.max_field, &self.sensor, &self.config.psf))
            .collect()
    }

    fn kernels(&self, stack: &[PsfGrid]) -> Result<Vec<Vec<[Plane; 3]>>> {
        stack.iter().map(|g| patch_kernels(g, &self.layout)).collect()
    }

    /// Reconstructions of `scene` at every depth (noise off).
    pub fn reconstructions(&self, kernels: &[Vec<[Plane; 3]>], scene: &Rgb) -> Result<Vec<Rgb>> {
        kernels
            .iter()
            .map(|k| {
                let d = degrade(scene, k, &self.layout, &self.sensor, None)?;
                self.recon.apply(&d, k, &self.layout, &self.sensor)
            })
            .collect()
    }

    /// Image-quality loss averaged over `images` for a given PSF stack.
    pub fn image_loss(&self, stack: &[PsfGrid], images: &[Rgb]) -> Result<f64> {
        if images.is_empty() {
            return Err(Error::Config("joint refinement needs at least one image".into()));
        }
        let kernels = self.kernels(stack)?;
        let per: Vec<Result<f64>> = images
            .par_iter()
            .map(|s| image_quality_loss(&self.reconstructions(&kernels, s)?, s, self.config.alpha_depth))
            .collect();
        let mut sum = 0.0;
        for l in per {
            sum += l?;
        }
        let l = sum / images.len() as f64;
        if !l.is_finite() {
            return Err(Error::NonFinite("image-quality loss".into()));
        }
        Ok(l)
    }

    /// [`Self::image_loss`] for a flattened PSF vector.
    pub fn image_loss_from_values(&self, values: &[f64], shape: PsfShape, images: &[Rgb]) -> Result<f64> {
        self.image_loss(&unflatten(values, shape), images)
    }

    /// Mean quadratic constraint loss over depths plus the glass-variable loss.
    pub fn physical_loss(&self, lens: &LensSystem<f64>) -> f64 {
        let eval = evaluate(lens, &self.spec, self.config.constraint_rings);
        if !eval.breakdown.traceable || eval.reports.is_empty() {
            return UNTRACEABLE_PENALTY;
        }
        let pc = eval.reports.iter().map(|r| r.quadratic_total()).sum::<f64>() / eval.reports.len() as f64;
        let glasses: Vec<(f64, f64)> = lens.glasses().map(|g| (g.n_d, g.v_d)).collect();
        match glass_variable_loss(&glasses, &self.catalog) {
            Ok(gv) if pc.is_finite() => pc + gv,
            _ => UNTRACEABLE_PENALTY,
        }
    }

    pub fn joint_loss(&self, lens: &LensSystem<f64>, images: &[Rgb]) -> Result<JointLoss> {
        let stack = self.psf_stack(lens)?;
        let image = self.image_loss(&stack, images)?;
        let physical = self.physical_loss(lens);
        Ok(JointLoss {
            physical,
            image,
            total: physical + self.config.alpha_iq * image,
        })
    }

    /// Stage one: `F(ξ)` and `∂F/∂ξ` by central differences over the free
    /// coordinates. Only these two arrays are kept.
    pub fn psf_jacobian(&self, lens: &LensSystem<f64>, mask: &[bool]) -> Result<AdjointState> {
        let x = self.parameters(lens)?;
        let (values, shape) = flatten(&self.psf_stack(lens)?);
        let steps = self.steps();
        let columns: Vec<Result<Vec<f64>>> = (0..x.len())
            .into_par_iter()
            .map(|k| {
                if !mask[k] {
                    return Ok(vec![0.0; values.len()]);
                }
                let probe = |sign: f64| -> Result<Vec<f64>> {
                    let mut xp = x.clone();
                    xp[k] += sign * steps[k];
                    let (f, s) = flatten(&self.psf_stack(&self.with_parameters(lens, &xp, mask))?);
                    if s != shape {
                        return Err(Error::Structural("PSF stack changed shape".into()));
                    }
                    Ok(f)
                };
                let fp = probe(1.0)?;
                let fm = probe(-1.0)?;
                Ok(fp.iter().zip(&fm).map(|(a, b)| (a - b) / (2.0 * steps[k])).collect())
            })
            .collect();
        Ok(AdjointState {
            psf_values: values,
            psf_jacobian: columns.into_iter().collect::<Result<_>>()?,
            shape,
            stage: AdjointStage::Jacobian,
        })
    }

    /// `∂L_IQ/∂F` for the identity reconstruction, pulled back analytically
    /// through the ISP, mosaic, convolution, renormalization, rotation and
    /// field interpolation.
    pub fn psf_gradient(&self, values: &[f64], shape: PsfShape, images: &[Rgb]) -> Result<Vec<f64>> {
        if !self.recon.is_identity() {
            return Err(Error::Config("analytic PSF gradient needs the identity reconstruction".into()));
        }
        if images.is_empty() {
            return Err(Error::Config("joint refinement needs at least one image".into()));
        }
        let stack = unflatten(values, shape);
        let kernels = self.kernels(&stack)?;
        let t = shape.support;
        let s = self.layout.size;
        let c0 = (t / 2) as isize;
        let (w, h) = (self.layout.width, self.layout.height);
        let n_img = images.len() as f64;
        let mut gk: Vec<Vec<[Vec<f64>; 3]>> = (0..shape.depths)
            .map(|_| (0..self.layout.patches.len()).map(|_| std::array::from_fn(|_| vec![0.0; t * t])).collect())
            .collect();
        for scene in images {
            let raw = inverse_isp(scene, &self.sensor);
            let mut demosaiced = Vec::with_capacity(shape.depths);
            for k in &kernels {
                let b = convolve_patches(&raw, k, &self.layout, Boundary::Replicate)?;
                demosaiced.push(demosaic(&mosaic(&b)));
            }
            let recons: Vec<Rgb> = demosaiced.iter().map(|d| forward_isp(d, &self.sensor)).collect();
            let grads = image_quality_gradient(&recons, scene, self.config.alpha_depth);
            for (j, g) in grads.iter().enumerate() {
                let gd = forward_isp_adjoint(&demosaiced[j], g, &self.sensor);
                let gb = mosaic_adjoint(&demosaic_adjoint(&gd));
                for (pk, p) in self.layout.patches.iter().enumerate() {
                    for c in 0..3 {
                        let out = &mut gk[j][pk][c];
                        for yy in 0..s {
                            let y = p.row * s + yy;
                            for xx in 0..s {
                                let x = p.col * s + xx;
                                let gv = gb[c].at(y, x) / n_img;
                                if gv == 0.0 {
                                    continue;
                                }
                                for a in 0..t {
                                    let sy = (y as isize - (a as isize - c0)).clamp(0, h as isize - 1) as usize;
                                    let row = &raw[c].data[sy * w..(sy + 1) * w];
                                    for b in 0..t {
                                        let sx = (x as isize - (b as isize - c0)).clamp(0, w as isize - 1) as usize;
                                        out[a * t + b] += gv * row[sx];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        let mut grad = vec![0.0; values.len()];
        for j in 0..shape.depths {
            for (pk, p) in self.layout.patches.iter().enumerate() {
                let taps = rotation_taps(t, p.angle, self.layout.pitch);
                for c in 0..3 {
                    let mut mix = vec![0.0; t * t];
                    for (f, &wt) in p.weights.iter().enumerate() {
                        if wt != 0.0 {
                            let o = shape.offset(j, f, c);
                            for (m, v) in mix.iter_mut().zip(&values[o..o + t * t]) {
                                *m += wt * v;
                            }
                        }
                    }
                    let rotated: Vec<f64> = taps
                        .iter()
                        .map(|tp| tp.iter().map(|&(i, wt)| if wt != 0.0 { wt * mix[i] } else { 0.0 }).sum())
                        .collect();
                    let total: f64 = rotated.iter().sum();
                    let g = &gk[j][pk][c];
                    let proj: f64 = g.iter().zip(&rotated).map(|(a, b)| a * b).sum::<f64>() / total;
                    let mut gmix = vec![0.0; t * t];
                    for (q, tp) in taps.iter().enumerate() {
                        let gu = (g[q] - proj) / total;
                        for &(i, wt) in tp {
                            if wt != 0.0 {
                                gmix[i] += wt * gu;
                            }
                        }
                    }
                    for (f, &wt) in p.weights.iter().enumerate() {
                        if wt != 0.0 {
                            let o = shape.offset(j, f, c);
                            for (gg, v) in grad[o..o + t * t].iter_mut().zip(&gmix) {
                                *gg += wt * v;
                            }
                        }
                    }
                }
            }
        }
        Ok(grad)
    }

    /// Stage two: `∂L_IQ/∂ξ` from the stored `F` and Jacobian. The identity
    /// reconstruction uses the analytic pullback; other operators use central
    /// differences of `L_IQ` along each Jacobian column.
    pub fn image_gradient(&self, state: &mut AdjointState, images: &[Rgb]) -> Result<Vec<f64>> {
        let out = if self.recon.is_identity() {
            let g = self.psf_gradient(&state.psf_values, state.shape, images)?;
            state
                .psf_jacobian
                .iter()
                .map(|col| col.iter().zip(&g).map(|(a, b)| a * b).sum())
                .collect()
        } else {
            let steps = self.steps();
            let mut out = Vec::with_capacity(state.psf_jacobian.len());
            for (k, col) in state.psf_jacobian.iter().enumerate() {
                if col.iter().all(|&v| v == 0.0) {
                    out.push(0.0);
                    continue;
                }
                let h = steps[k];
                let shifted = |sign: f64| -> Result<f64> {
                    let f: Vec<f64> = state.psf_values.iter().zip(col).map(|(v, d)| v + sign * h * d).collect();
                    self.image_loss_from_values(&f, state.shape, images)
                };
                out.push((shifted(1.0)? - shifted(-1.0)?) / (2.0 * h));
            }
            out
        };
        state.stage = AdjointStage::Gradient;
        Ok(out)
    }

    fn physical_gradient(&self, lens: &LensSystem<f64>, mask: &[bool]) -> Result<Vec<f64>> {
        let x = self.parameters(lens)?;
        let steps = self.steps();
        Ok((0..x.len())
            .into_par_iter()
            .map(|k| {
                if !mask[k] {
                    return 0.0;
                }
                let at = |sign: f64| {
                    let mut xp = x.clone();
                    xp[k] += sign * steps[k];
                    self.physical_loss(&self.with_parameters(lens, &xp, mask))
                };
                (at(1.0) - at(-1.0)) / (2.0 * steps[k])
            })
            .collect())
    }

    /// Gradient of the joint loss: two-stage for the image term, central
    /// differences for the physical term.
    pub fn adjoint_gradient(&self, lens: &LensSystem<f64>, mask: &[bool], images: &[Rgb]) -> Result<Vec<f64>> {
        let mut state = self.psf_jacobian(lens, mask)?;
        let gi = self.image_gradient(&mut state, images)?;
        drop(state);
        let gp = self.physical_gradient(lens, mask)?;
        let g: Vec<f64> = gi.iter().zip(&gp).map(|(a, b)| self.config.alpha_iq * a + b).collect();
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("joint gradient".into()));
        }
        Ok(g)
    }

    /// Central differences of the whole joint loss, one coordinate at a time,
    /// with step `fd_step` (fraction of each parameter's range).
    pub fn end_to_end_gradient(&self, lens: &LensSystem<f64>, mask: &[bool], images: &[Rgb], fd_step: f64) -> Result<Vec<f64>> {
        let x = self.parameters(lens)?;
        let steps: Vec<f64> = self.schema.entries.iter().map(|e| fd_step * e.span()).collect();
        (0..x.len())
            .map(|k| {
                if !mask[k] {
                    return Ok(0.0);
                }
                let at = |sign: f64| -> Result<f64> {
                    let mut xp = x.clone();
                    xp[k] += sign * steps[k];
                    Ok(self.joint_loss(&self.with_parameters(lens, &xp, mask), images)?.total)
                };
                Ok((at(1.0)? - at(-1.0)?) / (2.0 * steps[k]))
            })
            .collect()
    }

    /// Epochs of ADAM lens steps with validation after every step; each epoch
    /// restarts from its best lens and the loop ends when an epoch fails to
    /// beat the best so far.
    pub fn optimize(&self, lens: &LensSystem<f64>, mask: &[bool], images: &ImageSet) -> Result<JointOutcome> {
        let validation = images.validation_or_train();
        let initial = self.joint_loss(lens, validation)?.total;
        let mut best = (lens.clone(), initial);
        let mut current = lens.clone();
        let lr: Vec<f64> = self
            .schema
            .entries
            .iter()
            .zip(mask)
            .map(|(e, &m)| if m { self.config.learning_rates.for_role(e.role) } else { 0.0 })
            .collect();
        let mut adam = Adam::new(lr.len(), self.config.adam_beta1, self.config.adam_beta2);
        let mut epochs = Vec::new();
        for epoch in 0..self.config.max_epochs {
            let mut epoch_best: Option<(LensSystem<f64>, f64)> = None;
            let mut losses = Vec::with_capacity(self.config.lens_steps);
            for _ in 0..self.config.lens_steps {
                let Ok(g) = self.adjoint_gradient(&current, mask, &images.train) else {
                    break;
                };
                let mut x = self.parameters(&current)?;
                adam.step(&mut x, &g, &lr);
                for (v, e) in x.iter_mut().zip(&self.schema.entries) {
                    *v = v.clamp(e.lo, e.hi);
                }
                current = self.with_parameters(&current, &x, mask);
                let v = self.joint_loss(&current, validation).map_or(f64::INFINITY, |l| l.total);
                losses.push(v);
                if v.is_finite() && epoch_best.as_ref().is_none_or(|b| v < b.1) {
                    epoch_best = Some((current.clone(), v));
                }
            }
            let improved = matches!(&epoch_best, Some((_, v)) if *v < best.1);
            epochs.push(EpochLog {
                epoch,
                validation: losses,
                best: epoch_best.as_ref().map_or(f64::INFINITY, |b| b.1),
                accepted: improved,
            });
            match epoch_best {
                Some((l, v)) if v < best.1 => {
                    best = (l.clone(), v);
                    current = l;
                }
                _ => break,
            }
        }
        Ok(JointOutcome {
            lens: best.0,
            initial_loss: initial,
            best_loss: best.1,
            epochs,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Validation loss after each lens step.
    pub validation: Vec<f64>,
    pub best: f64,
    pub accepted: bool,
}

#[derive(Clone, Debug)]
pub struct JointOutcome {
    pub lens: LensSystem<f64>,
    pub initial_loss: f64,
    pub best_loss: f64,
    pub epochs: Vec<EpochLog>,
}

/// Refines a lens in image space with every glass free.
pub fn joint_optimize(
    lens: &LensSystem<f64>,
    spec: &DesignSpec,
    sensor: &SensorModel,
    catalog: &GlassCatalog,
    config: &EpjoConfig,
    recon: ReconstructionOperator,
    images: &ImageSet,
) -> Result<JointOutcome> {
    let problem = JointProblem::new(lens, spec, sensor, catalog, config, recon)?;
    let mask = problem.mask_for(&[]);
    problem.optimize(lens, &mask, images)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubstitutionRound {
    pub round: usize,
    pub surface: usize,
    pub glass: String,
    pub n_d: f64,
    pub v_d: f64,
    /// Catalog distance of the continuous glass before substitution.
    pub distance: f64,
    /// Loss reported by the refinement step, `None` when it failed.
    pub loss: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct QuantizeOutcome {
    pub lens: LensSystem<f64>,
    pub rounds: Vec<SubstitutionRound>,
}

/// Replaces continuous glasses by catalog glasses one at a time, closest
/// first, calling `refine(lens, frozen_surfaces)` after each substitution.
/// A failed or non-finite refinement keeps the lens as it was before that
/// call.
pub fn quantize_glass<F>(lens: &LensSystem<f64>, catalog: &GlassCatalog, mut refine: F) -> Result<QuantizeOutcome>
where
    F: FnMut(&LensSystem<f64>, &[usize]) -> Result<(LensSystem<f64>, f64)>,
{
    let surfaces = lens.glass_surface_indices();
    if surfaces.is_empty() {
        return Err(Error::Config("lens has no glass to quantize".into()));
    }
    let mut lens = lens.clone();
    let mut frozen: Vec<usize> = Vec::with_capacity(surfaces.len());
    let mut rounds = Vec::with_capacity(surfaces.len());
    for round in 1..=surfaces.len() {
        let mut pick: Option<(usize, usize, f64)> = None;
        for &s in surfaces.iter().filter(|s| !frozen.contains(s)) {
            let g = lens.surfaces[s].material_after.glass().expect("glass surface");
            let (entry, d) = catalog.nearest(g.n_d, g.v_d)?;
            if pick.is_none_or(|p| d < p.2) {
                pick = Some((s, entry, d));
            }
        }
        let (surface, entry, distance) = pick.expect("a free glass remains");
        let fixed = catalog.glass(entry);
        frozen.push(surface);
        set_glass(&mut lens, surface, &fixed);
        let loss = match refine(&lens, &frozen) {
            Ok((refined, l)) if l.is_finite() => {
                lens = refined;
                for &s in &frozen {
                    let g = lens.surfaces[s].material_after.glass().cloned();
                    if let Some(g) = g {
                        if !catalog.contains(&g) {
                            let (e, _) = catalog.nearest(g.n_d, g.v_d)?;
                            set_glass(&mut lens, s, &catalog.glass(e));
                        }
                    }
                }
                Some(l)
            }
            _ => None,
        };
        rounds.push(SubstitutionRound {
            round,
            surface,
            glass: fixed.name.clone().unwrap_or_default(),
            n_d: fixed.n_d,
            v_d: fixed.v_d,
            distance,
            loss,
        });
    }
    Ok(QuantizeOutcome { lens, rounds })
}

fn set_glass(lens: &mut LensSystem<f64>, surface: usize, glass: &crate::lens::Glass<f64>) {
    if let Some(g) = lens.surfaces[surface].material_after.glass_mut() {
        *g = glass.clone();
    }
}

//! Global lens search: population initialization, annealing, diverse parent
//! selection, ADAM refinement, elite selection and track-preserving mutation.

pub mod adam;
pub mod anneal;
pub mod mutate;
pub mod rng;
pub mod select;

use std::time::Instant;
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lens::params::{euclidean, ParamRole, ParamSchema};
use crate::lens::spec::DesignSpec;
use crate::lens::system::{DesignForm, LensSystem};
use crate::merit::{evaluate, LossBreakdown, UNTRACEABLE_PENALTY};

pub use adam::{cosine_lr, fd_gradient, Adam};
pub use anneal::{accept, acceptance_probability, AnnealSettings, AnnealStats};
pub use mutate::{mutate_one, mutation_count, restore_track};
pub use select::{select_diverse, selection_count};

/// Anything the search can minimize over the unit box.
pub trait Objective: Sync {
    fn loss(&self, x: &[f64]) -> f64;
}

impl<F: Fn(&[f64]) -> f64 + Sync> Objective for F {
    fn loss(&self, x: &[f64]) -> f64 {
        self(x)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Individual {
    pub x: Vec<f64>,
    pub loss: f64,
    pub best_x: Vec<f64>,
    pub best_loss: f64,
    pub rng_seed: u64,
}

impl Individual {
    pub fn evaluated(x: Vec<f64>, loss: f64, rng_seed: u64) -> Self {
        Self {
            best_x: x.clone(),
            best_loss: loss,
            x,
            loss,
            rng_seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Population {
    pub individuals: Vec<Individual>,
    pub generation: usize,
}

impl Population {
    pub fn min_loss(&self) -> f64 {
        self.individuals.iter().map(|i| i.best_loss).fold(f64::INFINITY, f64::min)
    }

    pub fn mean_loss(&self) -> f64 {
        self.individuals.iter().map(|i| i.best_loss).sum::<f64>() / self.individuals.len().max(1) as f64
    }
}

/// Design loss of normalized vectors for one design form.
pub struct LensObjective {
    pub spec: DesignSpec,
    pub schema: Arc<ParamSchema<f64>>,
    pub pupil_rings: usize,
}

impl LensObjective {
    pub fn new(spec: &DesignSpec, form: &str, pupil_rings: usize) -> Result<Self> {
        let form = DesignForm::parse(form)?;
        Ok(Self {
            schema: Arc::new(ParamSchema::new(form, &spec.ranges, spec.entrance_pupil_diameter())),
            spec: spec.clone(),
            pupil_rings,
        })
    }

    pub fn breakdown(&self, x: &[f64]) -> (Option<LensSystem<f64>>, LossBreakdown) {
        match self.schema.denormalize(x) {
            Ok(lens) => {
                let e = evaluate(&lens, &self.spec, self.pupil_rings);
                (Some(e.lens), e.breakdown)
            }
            Err(_) => (None, LossBreakdown::untraceable(1.0)),
        }
    }
}

impl Objective for LensObjective {
    fn loss(&self, x: &[f64]) -> f64 {
        self.breakdown(x).1.l_of
    }
}

/// Random population: curvatures and spacings uniform on [0, 1], each glass
/// coordinate set to 0 or 1 with equal odds.
pub fn init_population<O: Objective>(objective: &O, schema: &ParamSchema<f64>, m: usize, seed: u64, form: usize) -> Population {
    let individuals = (0..m)
        .into_par_iter()
        .map(|i| {
            let s = rng::derive_seed(&[seed, form as u64, i as u64]);
            let mut r = rng::stream(seed, form, i, 0, rng::Phase::Init);
            let x: Vec<f64> = schema
                .entries
                .iter()
                .map(|e| match e.role {
                    ParamRole::Curvature | ParamRole::Spacing => r.random::<f64>(),
                    ParamRole::IndexD | ParamRole::AbbeD => {
                        if r.random::<bool>() {
                            1.0
                        } else {
                            0.0
                        }
                    }
                })
                .collect();
            let loss = objective.loss(&x);
            Individual::evaluated(x, loss, s)
        })
        .collect();
    Population {
        individuals,
        generation: 0,
    }
}

pub struct AdamSettings {
    pub lr: f64,
    pub lr_floor: f64,
    pub iterations: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub threshold: f64,
    pub window: usize,
    pub fd_step: f64,
}

impl AdamSettings {
    pub fn from_spec(spec: &DesignSpec) -> Self {
        let s = &spec.search;
        Self {
            lr: s.adam_lr,
            lr_floor: s.adam_lr * s.adam_lr_floor_ratio,
            iterations: s.adam_iterations,
            beta1: s.adam_beta1,
            beta2: s.adam_beta2,
            threshold: s.adam_convergence_threshold,
            window: s.adam_window,
            fd_step: s.fd_step,
        }
    }
}

/// Refines one individual; the best iterate is returned, so the loss never rises.
pub fn adam_refine<O: Objective>(objective: &O, start: &Individual, settings: &AdamSettings) -> (Individual, usize) {
    let n = start.best_x.len();
    let mut x = start.best_x.clone();
    let mut f = start.best_loss;
    let mut best = (x.clone(), f);
    let mut opt = Adam::new(n, settings.beta1, settings.beta2);
    let mut history = vec![f];
    let mut it = 0;
    while it < settings.iterations {
        if f >= UNTRACEABLE_PENALTY {
            break;
        }
        let g = fd_gradient(&|p: &[f64]| objective.loss(p), &x, settings.fd_step, f);
        let lr = cosine_lr(settings.lr, settings.lr_floor, it, settings.iterations);
        opt.step(&mut x, &g, &vec![lr; n]);
        x.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
        f = objective.loss(&x);
        if f < best.1 {
            best = (x.clone(), f);
        }
        it += 1;
        history.push(best.1);
        if adam::stalled(&history, settings.window, settings.threshold) {
            break;
        }
    }
    if best.1 >= start.best_loss {
        log::trace!("ADAM did not improve individual (loss {:.4e})", start.best_loss);
    }
    let mut out = start.clone();
    out.x = best.0.clone();
    out.loss = best.1;
    out.best_x = best.0;
    out.best_loss = best.1;
    (out, it)
}

/// ADAM refinement of every parent, in parallel.
pub fn adam_local<O: Objective>(objective: &O, parents: &[Individual], settings: &AdamSettings) -> Vec<Individual> {
    parents
        .par_iter()
        .map(|p| adam_refine(objective, p, settings).0)
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GenerationStats {
    pub generation: usize,
    pub initial_mean_loss: f64,
    pub sa_iterations: usize,
    pub sa_mean_loss: f64,
    pub parent_losses: Vec<f64>,
    pub elite_losses: Vec<f64>,
    /// Lowest loss present in the population at the end of the generation.
    pub min_loss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DesignCandidate {
    pub form: String,
    pub x: Vec<f64>,
    /// Loss at the search's pupil sampling.
    pub search_loss: f64,
    pub breakdown: LossBreakdown,
    #[serde(skip)]
    pub lens: LensSystem<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FormRun {
    pub form: String,
    pub generations: Vec<GenerationStats>,
    pub elites: Vec<DesignCandidate>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SearchOutcome {
    pub seed: u64,
    pub runs: Vec<FormRun>,
    /// Final designs below the loss ceiling and mutually distinct, best first.
    pub designs: Vec<DesignCandidate>,
    /// Wall time per form (s); not part of the deterministic output.
    #[serde(skip)]
    pub seconds: Vec<f64>,
}

impl SearchOutcome {
    pub fn best(&self) -> Option<&DesignCandidate> {
        self.runs
            .iter()
            .flat_map(|r| r.elites.iter())
            .min_by(|a, b| a.breakdown.l_of.total_cmp(&b.breakdown.l_of))
    }
}

fn next_population(
    schema: &ParamSchema<f64>,
    spec: &DesignSpec,
    elites: &[Individual],
    refined: &[Individual],
    m: usize,
    seed: u64,
    form: usize,
    generation: usize,
) -> Vec<Vec<f64>> {
    let s = &spec.search;
    let mut pool: Vec<&Individual> = refined.iter().collect();
    for e in elites {
        if !pool.iter().any(|p| p.best_x == e.best_x) {
            pool.push(e);
        }
    }
    let slots = m.saturating_sub(elites.len());
    (0..slots)
        .into_par_iter()
        .map(|k| {
            let parent = &pool[k % pool.len()].best_x;
            let mut r = rng::stream(seed, form, k, generation, rng::Phase::Mutate);
            mutate_one(&mut r, schema, parent, s.mutation_fraction, s.mutation_retries).unwrap_or_else(|| parent.clone())
        })
        .collect()
}

/// Runs the generation loop for one design form and returns its final elites.
pub fn run_form(spec: &DesignSpec, form_index: usize, seed: u64) -> Result<FormRun> {
    let form = &spec.design_forms[form_index];
    let s = &spec.search;
    let objective = LensObjective::new(spec, form, s.search_pupil_rings)?;
    let schema = objective.schema.clone();
    let m = s.population;
    let n_parent = selection_count(s.parent_fraction, m);
    let n_elite = selection_count(s.elite_fraction, m);
    let anneal_settings = AnnealSettings {
        alpha: s.alpha_sa,
        step: s.sa_step,
        threshold: s.sa_convergence_threshold,
        window: s.sa_window,
        max_iterations: s.sa_max_iterations,
    };
    let adam_settings = AdamSettings::from_spec(spec);

    let mut pop = init_population(&objective, &schema, m, seed, form_index);
    let mut stats = Vec::with_capacity(s.generations);
    let mut elites: Vec<Individual> = Vec::new();
    for g in 0..s.generations {
        pop.generation = g;
        let initial_mean_loss = pop.mean_loss();
        let sa = anneal::anneal(&objective, &mut pop.individuals, &anneal_settings, seed, form_index, g);
        let parents = select_diverse(&pop.individuals, n_parent, s.similarity_distance);
        let refined = adam_local(&objective, &parents, &adam_settings);
        elites = select_diverse(&refined, n_elite, s.similarity_distance);
        let min_loss = elites.iter().map(|e| e.best_loss).fold(f64::INFINITY, f64::min);
        log::info!(
            "{form} generation {g}: SA {} iterations, mean {:.4e}, best {:.4e}",
            sa.iterations,
            pop.mean_loss(),
            min_loss
        );
        stats.push(GenerationStats {
            generation: g,
            initial_mean_loss,
            sa_iterations: sa.iterations,
            sa_mean_loss: pop.mean_loss(),
            parent_losses: parents.iter().map(|p| p.best_loss).collect(),
            elite_losses: elites.iter().map(|e| e.best_loss).collect(),
            min_loss,
        });
        if g + 1 == s.generations {
            break;
        }
        let children = next_population(&schema, spec, &elites, &refined, m, seed, form_index, g + 1);
        let mut next: Vec<Individual> = elites.clone();
        let evaluated: Vec<Individual> = children
            .into_par_iter()
            .map(|x| {
                let l = objective.loss(&x);
                Individual::evaluated(x, l, 0)
            })
            .collect();
        next.extend(evaluated);
        pop = Population {
            individuals: next,
            generation: g + 1,
        };
    }

    if s.polish_iterations > 0 {
        let mut polish = AdamSettings::from_spec(spec);
        polish.iterations = s.polish_iterations;
        polish.threshold = f64::NEG_INFINITY;
        elites = adam_local(&objective, &elites, &polish);
        elites.sort_by(|a, b| a.best_loss.total_cmp(&b.best_loss));
    }

    let full = LensObjective::new(spec, form, spec.pupil_rings)?;
    let elites: Vec<DesignCandidate> = elites
        .par_iter()
        .filter_map(|e| {
            let (lens, breakdown) = full.breakdown(&e.best_x);
            lens.map(|lens| DesignCandidate {
                form: form.clone(),
                x: e.best_x.clone(),
                search_loss: e.best_loss,
                breakdown,
                lens,
            })
        })
        .collect();
    Ok(FormRun {
        form: form.clone(),
        generations: stats,
        elites,
    })
}

/// Full search over every design form in the spec.
pub fn run(spec: &DesignSpec, seed: u64) -> Result<SearchOutcome> {
    spec.validate()?;
    let mut runs = Vec::with_capacity(spec.design_forms.len());
    let mut seconds = Vec::with_capacity(spec.design_forms.len());
    for k in 0..spec.design_forms.len() {
        let t = Instant::now();
        runs.push(run_form(spec, k, seed)?);
        seconds.push(t.elapsed().as_secs_f64());
    }
    let designs = filter_outputs(&runs, spec.search.output_loss_ceiling, spec.search.output_diversity_distance);
    Ok(SearchOutcome {
        seed,
        runs,
        designs,
        seconds,
    })
}

/// Keeps elites under `ceiling`, then greedily drops any within `d_min`
/// of a better design of the same form.
pub fn filter_outputs(runs: &[FormRun], ceiling: f64, d_min: f64) -> Vec<DesignCandidate> {
    let mut all: Vec<&DesignCandidate> = runs
        .iter()
        .flat_map(|r| r.elites.iter())
        .filter(|c| c.breakdown.traceable && c.breakdown.l_of < ceiling)
        .collect();
    all.sort_by(|a, b| a.breakdown.l_of.total_cmp(&b.breakdown.l_of));
    let mut out: Vec<DesignCandidate> = Vec::new();
    for c in all {
        if out
            .iter()
            .filter(|o| o.form == c.form)
            .all(|o| euclidean(&o.x, &c.x) >= d_min)
        {
            out.push(c.clone());
        }
    }
    out
}

/// Error for a search that produced nothing under the ceiling.
pub fn infeasible(outcome: &SearchOutcome, ceiling: f64) -> Error {
    match outcome.best() {
        Some(b) => Error::Infeasible(format!(
            "no design below L_OF {ceiling}; best found {:.6e} ({})",
            b.breakdown.l_of, b.form
        )),
        None => Error::Infeasible("no traceable design found".into()),
    }
}

//! Simulated-annealing pass over the whole population.

use rand::Rng;
use rayon::prelude::*;

use crate::search::adam::stalled;
use crate::search::rng::{stream, Phase};
use crate::search::{Individual, Objective};

/// `min(exp(−ΔL / T), 1)`; a zero temperature only accepts non-worsening moves.
pub fn acceptance_probability(delta: f64, temperature: f64) -> f64 {
    if delta <= 0.0 {
        return 1.0;
    }
    if !(temperature > 0.0) {
        return 0.0;
    }
    (-delta / temperature).exp().min(1.0)
}

/// Bernoulli draw with [`acceptance_probability`].
pub fn accept<R: Rng + ?Sized>(rng: &mut R, delta: f64, temperature: f64) -> bool {
    let p = acceptance_probability(delta, temperature);
    p >= 1.0 || rng.random::<f64>() < p
}

#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct AnnealStats {
    pub iterations: usize,
    /// Mean historical-best loss after each iteration, starting with the input.
    pub mean_history: Vec<f64>,
}

pub struct AnnealSettings {
    pub alpha: f64,
    pub step: f64,
    pub threshold: f64,
    pub window: usize,
    pub max_iterations: usize,
}

/// Runs the annealing pass until the population-mean loss stops falling, then
/// replaces every individual with its historical best.
pub fn anneal<O: Objective>(
    objective: &O,
    pop: &mut [Individual],
    settings: &AnnealSettings,
    seed: u64,
    form: usize,
    generation: usize,
) -> AnnealStats {
    let mut rngs: Vec<_> = (0..pop.len())
        .map(|i| stream(seed, form, i, generation, Phase::Anneal))
        .collect();
    let mean = |pop: &[Individual]| pop.iter().map(|p| p.best_loss).sum::<f64>() / pop.len().max(1) as f64;
    let mut history = vec![mean(pop)];
    let mut iterations = 0;
    while iterations < settings.max_iterations {
        pop.par_iter_mut().zip(rngs.par_iter_mut()).for_each(|(ind, rng)| {
            let cand: Vec<f64> = ind
                .x
                .iter()
                .map(|&v| (v + rng.random_range(-settings.step..settings.step)).clamp(0.0, 1.0))
                .collect();
            let l = objective.loss(&cand);
            if accept(rng, l - ind.loss, settings.alpha * ind.loss) {
                ind.x = cand;
                ind.loss = l;
                if l < ind.best_loss {
                    ind.best_loss = l;
                    ind.best_x = ind.x.clone();
                }
            }
        });
        iterations += 1;
        history.push(mean(pop));
        if stalled(&history, settings.window, settings.threshold) {
            break;
        }
    }
    for ind in pop.iter_mut() {
        ind.x = ind.best_x.clone();
        ind.loss = ind.best_loss;
    }
    AnnealStats {
        iterations,
        mean_history: history,
    }
}

//! Coordinate mutation with total-track repair.

use rand::seq::index::sample;
use rand::Rng;

use crate::lens::params::{ParamRole, ParamSchema};

/// Number of coordinates a mutation resamples: `round(fraction · n)`.
pub fn mutation_count(fraction: f64, n: usize) -> usize {
    ((fraction * n as f64).round() as usize).min(n)
}

/// Resamples `count` distinct coordinates uniformly on [0, 1]. Returns the touched indices.
pub fn resample_coordinates<R: Rng + ?Sized>(rng: &mut R, x: &mut [f64], count: usize) -> Vec<usize> {
    let idx = sample(rng, x.len(), count).into_vec();
    for &i in &idx {
        x[i] = rng.random::<f64>();
    }
    idx
}

/// Rescales the spacing coordinates of `x` so that the physical track length
/// equals `target`. Spacings shrink toward their lower bounds or grow toward
/// their upper bounds in proportion to the available room. Returns false when
/// the boxes cannot absorb the change.
pub fn restore_track(schema: &ParamSchema<f64>, x: &mut [f64], target: f64) -> bool {
    let spacings = schema.indices_of(ParamRole::Spacing);
    let phys: Vec<f64> = spacings.iter().map(|&i| schema.entries[i].to_physical(x[i])).collect();
    let current: f64 = phys.iter().sum();
    let delta = target - current;
    if delta == 0.0 {
        return true;
    }
    let room: Vec<f64> = spacings
        .iter()
        .zip(&phys)
        .map(|(&i, &p)| {
            let e = &schema.entries[i];
            if delta < 0.0 {
                p - e.lo
            } else {
                e.hi - p
            }
        })
        .collect();
    let total_room: f64 = room.iter().sum();
    if total_room < delta.abs() || total_room <= 0.0 {
        return false;
    }
    let ratio = delta.abs() / total_room;
    let mut new_phys: Vec<f64> = phys
        .iter()
        .zip(&room)
        .map(|(&p, &r)| p + delta.signum() * r * ratio)
        .collect();
    // Push the last few ulps of residual into the spacing with the most room.
    let residual = target - new_phys.iter().sum::<f64>();
    if let Some((k, _)) = room.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)) {
        new_phys[k] += residual;
    }
    for (&i, &p) in spacings.iter().zip(&new_phys) {
        x[i] = schema.entries[i].to_normalized(p).clamp(0.0, 1.0);
    }
    true
}

/// Mutates `parent` with TTL repair, retrying up to `retries` times.
pub fn mutate_one<R: Rng + ?Sized>(
    rng: &mut R,
    schema: &ParamSchema<f64>,
    parent: &[f64],
    fraction: f64,
    retries: usize,
) -> Option<Vec<f64>> {
    let target = schema.track_length(parent);
    let count = mutation_count(fraction, parent.len());
    for _ in 0..=retries {
        let mut x = parent.to_vec();
        resample_coordinates(rng, &mut x, count);
        if restore_track(schema, &mut x, target) {
            return Some(x);
        }
    }
    log::debug!("mutation could not restore track length after {retries} retries");
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lens::params::ParameterRanges;
    use crate::lens::system::DesignForm;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn count_rounding() {
        assert_eq!(mutation_count(0.3, 10), 3);
        assert_eq!(mutation_count(0.3, 19), 6);
    }

    #[test]
    fn track_is_kept() {
        let schema = ParamSchema::new(DesignForm::parse("GAGASAGA").unwrap(), &ParameterRanges::default(), 16.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let p: Vec<f64> = (0..schema.len()).map(|_| rng.random()).collect();
            if let Some(c) = mutate_one(&mut rng, &schema, &p, 0.3, 10) {
                let d = schema.track_length(&c) - schema.track_length(&p);
                assert!(d.abs() < 1e-9, "{d}");
            }
        }
    }
}

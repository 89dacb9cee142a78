//! Diversity-aware greedy selection.

use crate::lens::params::euclidean;
use crate::search::Individual;

/// `round(fraction · m)`, at least 1.
pub fn selection_count(fraction: f64, m: usize) -> usize {
    ((fraction * m as f64).round() as usize).max(1)
}

/// Picks up to `count` individuals by ascending best loss, skipping any that
/// lie within `d_min` of one already picked. Ties keep input order.
pub fn select_diverse(candidates: &[Individual], count: usize, d_min: f64) -> Vec<Individual> {
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| candidates[a].best_loss.total_cmp(&candidates[b].best_loss).then(a.cmp(&b)));
    let mut picked: Vec<Individual> = Vec::with_capacity(count);
    for i in order {
        if picked.len() == count {
            break;
        }
        let c = &candidates[i];
        if picked.iter().all(|p| euclidean(&p.best_x, &c.best_x) > d_min) {
            picked.push(c.clone());
        }
    }
    if picked.len() < count {
        log::debug!("selection found {} distinct candidates of {} requested", picked.len(), count);
    }
    picked
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ind(x: Vec<f64>, loss: f64) -> Individual {
        Individual::evaluated(x, loss, 0)
    }

    #[test]
    fn identical_keeps_lower() {
        let a = ind(vec![0.5, 0.5], 0.2);
        let b = ind(vec![0.5, 0.5], 0.1);
        let s = select_diverse(&[a, b], 2, 0.2);
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].best_loss, 0.1);
    }

    #[test]
    fn crafted_triple() {
        let a = ind(vec![0.0, 0.0], 0.01);
        let b = ind(vec![0.1, 0.0], 0.02);
        let c = ind(vec![0.5, 0.0], 0.03);
        let s = select_diverse(&[c, b, a], 3, 0.2);
        let losses: Vec<f64> = s.iter().map(|i| i.best_loss).collect();
        assert_eq!(losses, vec![0.01, 0.03]);
    }

    #[test]
    fn counts_round() {
        assert_eq!(selection_count(0.06, 500), 30);
        assert_eq!(selection_count(0.02, 500), 10);
        assert_eq!(selection_count(0.02, 10), 1);
    }
}

//! Seeded random spaces, values and processes for the property suites.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::l0algebra::EventPartition;
use crate::probspace::{FilteredSpace, L0Value};
use crate::processes::{martingale_from_terminal, AdaptedProcess, MartingaleProcess};

pub type SeededRng = ChaCha8Rng;

pub fn rng(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Child probabilities bounded below by `0.1 / b`.
fn random_probs(rng: &mut SeededRng, b: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..b).map(|_| rng.gen_range(0.1..1.0)).collect();
    let s: f64 = raw.iter().sum();
    raw.iter().map(|x| x / s).collect()
}

/// Tree on `[0, horizon]` whose F₀ has `base_blocks` atoms-groups
/// (1 gives the usual trivial F₀), then `branching` per step.
pub fn tree_with_base(
    rng: &mut SeededRng,
    base_blocks: usize,
    branching: &[usize],
    horizon: f64,
    random_edges: bool,
) -> Result<Arc<FilteredSpace>> {
    let mut steps = Vec::with_capacity(branching.len() + 1);
    if base_blocks > 1 {
        steps.push(base_blocks);
    }
    steps.extend_from_slice(branching);
    let probs: Vec<Option<Vec<f64>>> =
        steps.iter().map(|&b| if random_edges && b > 1 { Some(random_probs(rng, b)) } else { None }).collect();
    if base_blocks > 1 {
        let n = branching.len() as f64;
        let full = FilteredSpace::tree(&steps, &probs, horizon * (n + 1.0) / n)?;
        full.restrict_from(1)
    } else {
        FilteredSpace::tree(&steps, &probs, horizon)
    }
}

/// Random tree with `n_atoms` in `atoms` (approximately; branching 2..=3).
pub fn random_tree(rng: &mut SeededRng, min_atoms: usize, max_atoms: usize) -> Result<Arc<FilteredSpace>> {
    loop {
        let base = rng.gen_range(1..=3);
        let depth = rng.gen_range(1..=4);
        let branching: Vec<usize> = (0..depth).map(|_| rng.gen_range(2..=3)).collect();
        let n: usize = base * branching.iter().product::<usize>();
        if n >= min_atoms && n <= max_atoms {
            return tree_with_base(rng, base, &branching, 1.0, true);
        }
    }
}

/// Binomial tree of the given depth, with random or fair edge probabilities.
pub fn binomial_tree(rng: &mut SeededRng, base_blocks: usize, depth: usize, random_edges: bool) -> Result<Arc<FilteredSpace>> {
    tree_with_base(rng, base_blocks, &vec![2; depth], 1.0, random_edges)
}

/// Uniform values in `[-scale, scale]`, measurable w.r.t. `partitions[level]`.
pub fn random_value(rng: &mut SeededRng, space: &Arc<FilteredSpace>, dim: usize, level: usize, scale: f64) -> L0Value {
    let part = space.partition(level);
    let per: Vec<Vec<f64>> =
        (0..part.n_blocks()).map(|_| (0..dim).map(|_| rng.gen_range(-scale..=scale)).collect()).collect();
    L0Value::from_fn(space, dim, |a| per[part.block_of(a)].clone()).expect("shape")
}

pub fn random_terminal(rng: &mut SeededRng, space: &Arc<FilteredSpace>, dim: usize, scale: f64) -> L0Value {
    random_value(rng, space, dim, space.steps(), scale)
}

/// F₀-measurable scalar uniform in `[lo, hi]`.
pub fn random_f0_scalar(rng: &mut SeededRng, space: &Arc<FilteredSpace>, lo: f64, hi: f64) -> L0Value {
    let part = space.base();
    let per: Vec<f64> = (0..part.n_blocks()).map(|_| rng.gen_range(lo..=hi)).collect();
    L0Value::from_fn(space, 1, |a| vec![per[part.block_of(a)]]).expect("shape")
}

pub fn random_adapted(rng: &mut SeededRng, space: &Arc<FilteredSpace>, dim: usize, scale: f64) -> AdaptedProcess {
    let vals = (0..=space.steps()).map(|k| random_value(rng, space, dim, k, scale)).collect();
    AdaptedProcess::new(space, vals).expect("adapted by construction")
}

/// `M_t = E₀V − E_tV` for a random terminal `V`.
pub fn random_martingale(rng: &mut SeededRng, space: &Arc<FilteredSpace>, dim: usize, scale: f64) -> MartingaleProcess {
    martingale_from_terminal(&random_terminal(rng, space, dim, scale)).expect("martingale by construction")
}

/// Random grouping of the blocks of `partitions[level]` into at most `n_groups` events.
pub fn random_event_partition(
    rng: &mut SeededRng,
    space: &Arc<FilteredSpace>,
    level: usize,
    n_groups: usize,
) -> Result<EventPartition> {
    let part = space.partition(level);
    let nb = part.n_blocks();
    let mut order: Vec<usize> = (0..nb).collect();
    order.shuffle(rng);
    let g = n_groups.clamp(1, nb);
    let mut labels = vec![0; nb];
    for (i, b) in order.into_iter().enumerate() {
        labels[b] = if i < g { i } else { rng.gen_range(0..g) };
    }
    EventPartition::from_grouping(space, level, &labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::processes::MARTINGALE_TOL;
    use crate::probspace::{cond_expect_at, is_measurable};

    #[test]
    fn deterministic_given_seed() {
        let a = random_tree(&mut rng(7), 4, 24).unwrap();
        let b = random_tree(&mut rng(7), 4, 24).unwrap();
        assert_eq!(a, b);
        let mut r = rng(3);
        let s = tree_with_base(&mut r, 3, &[2, 2], 1.0, true).unwrap();
        assert_eq!(s.base().n_blocks(), 3);
        assert!((s.horizon() - 1.0).abs() < 1e-12);
        assert_eq!(s.steps(), 2);
    }

    #[test]
    fn samples_have_requested_measurability() {
        let mut r = rng(11);
        let s = tree_with_base(&mut r, 2, &[2, 3], 1.0, true).unwrap();
        let v = random_value(&mut r, &s, 2, 1, 1.0);
        assert!(is_measurable(&v, s.partition(1)));
        let m = random_martingale(&mut r, &s, 1, 1.0);
        assert!(m.initial().max_abs() < MARTINGALE_TOL);
        assert!(cond_expect_at(m.terminal(), 1).max_abs_diff(m.at(1)) < 1e-12);
        let e = random_event_partition(&mut r, &s, 0, 2).unwrap();
        assert_eq!(e.n_blocks(), 2);
    }
}

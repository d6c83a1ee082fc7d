//! Lattice operations on L⁰, gluing along partitions and stability checks.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::probspace::{FilteredSpace, L0Value, Partition};
use crate::report::CheckReport;

/// Relative tolerance used by [`stability_check`].
pub const STABILITY_TOL: f64 = 1e-10;

/// Objects that can be glued along a partition of the atoms,
/// `Σ Ĩ_{A_n} x_n`. Gluing never leaves the module the parts live in.
pub trait Glue: Sized + Clone {
    /// Element equal to `parts[b]` on block `b` of `blocks`.
    fn glue(blocks: &Partition, parts: &[&Self]) -> Result<Self>;
    /// Sup-distance over atoms (and times/components where applicable).
    fn max_abs_diff(&self, other: &Self) -> f64;
    fn max_abs(&self) -> f64;
}

impl Glue for L0Value {
    fn glue(blocks: &Partition, parts: &[&Self]) -> Result<Self> {
        if parts.len() != blocks.n_blocks() {
            return Err(Error::DimensionMismatch { expected: blocks.n_blocks(), found: parts.len() });
        }
        let first = parts.first().ok_or(Error::EmptyFamily)?;
        for p in parts {
            first.check_compatible(p)?;
        }
        if blocks.n_atoms() != first.space().n_atoms() {
            return Err(Error::IncompatiblePartition("gluing partition has the wrong atom count".into()));
        }
        L0Value::from_fn(first.space(), first.dim(), |a| parts[blocks.block_of(a)].at(a).to_vec())
    }

    fn max_abs_diff(&self, other: &Self) -> f64 {
        L0Value::max_abs_diff(self, other)
    }

    fn max_abs(&self) -> f64 {
        L0Value::max_abs(self)
    }
}

impl<A: Glue, B: Glue> Glue for (A, B) {
    fn glue(blocks: &Partition, parts: &[&Self]) -> Result<Self> {
        let a: Vec<&A> = parts.iter().map(|p| &p.0).collect();
        let b: Vec<&B> = parts.iter().map(|p| &p.1).collect();
        Ok((A::glue(blocks, &a)?, B::glue(blocks, &b)?))
    }

    fn max_abs_diff(&self, other: &Self) -> f64 {
        self.0.max_abs_diff(&other.0).max(self.1.max_abs_diff(&other.1))
    }

    fn max_abs(&self) -> f64 {
        self.0.max_abs().max(self.1.max_abs())
    }
}

/// A finite partition of Ω whose blocks are unions of blocks of a grid
/// partition (the declared measurability level).
#[derive(Debug, Clone, PartialEq)]
pub struct EventPartition {
    partition: Partition,
    level: usize,
}

impl EventPartition {
    pub fn new(space: &FilteredSpace, blocks: Vec<Vec<usize>>, level: usize) -> Result<Self> {
        let partition = Partition::from_blocks(space.n_atoms(), blocks)?;
        if level > space.steps() {
            return Err(Error::InvalidPartition(format!("level {level} beyond the grid")));
        }
        if !space.partition(level).refines(&partition) {
            return Err(Error::InvalidPartition(format!(
                "blocks are not unions of blocks of partition {level}"
            )));
        }
        Ok(EventPartition { partition, level })
    }

    /// Group the blocks of `partitions[level]` by `labels` (one per block).
    pub fn from_grouping(space: &FilteredSpace, level: usize, labels: &[usize]) -> Result<Self> {
        let base = space.partition(level);
        if labels.len() != base.n_blocks() {
            return Err(Error::DimensionMismatch { expected: base.n_blocks(), found: labels.len() });
        }
        let atom_labels: Vec<usize> = (0..space.n_atoms()).map(|a| labels[base.block_of(a)]).collect();
        Ok(EventPartition { partition: Partition::from_labels(&atom_labels), level })
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn n_blocks(&self) -> usize {
        self.partition.n_blocks()
    }
}

fn check_family(family: &[L0Value]) -> Result<&L0Value> {
    let first = family.first().ok_or(Error::EmptyFamily)?;
    if !first.is_scalar() {
        return Err(Error::DimensionMismatch { expected: 1, found: first.dim() });
    }
    for h in family {
        first.check_compatible(h)?;
    }
    Ok(first)
}

/// Atomwise maximum of a nonempty scalar family.
pub fn l0_sup(family: &[L0Value]) -> Result<L0Value> {
    let first = check_family(family)?;
    Ok(family[1..].iter().fold(first.clone(), |acc, h| acc.zip_map(h, f64::max)))
}

/// Atomwise minimum of a nonempty scalar family.
pub fn l0_inf(family: &[L0Value]) -> Result<L0Value> {
    let first = check_family(family)?;
    Ok(family[1..].iter().fold(first.clone(), |acc, h| acc.zip_map(h, f64::min)))
}

/// `Σ Ĩ_{A_n} x_n` for blocks `A_n` covering Ω disjointly.
pub fn concatenate<X: Glue>(n_atoms: usize, parts: &[(Vec<usize>, X)]) -> Result<X> {
    if parts.is_empty() {
        return Err(Error::EmptyFamily);
    }
    let blocks: Vec<Vec<usize>> = parts.iter().map(|(b, _)| b.clone()).collect();
    let raw = Partition::from_blocks(n_atoms, blocks.clone())?;
    // Partition::from_blocks canonicalises block order; recover which part owns each block
    let elems: Vec<&X> = raw
        .blocks()
        .iter()
        .map(|blk| {
            let owner = blocks.iter().position(|b| b.contains(&blk[0])).expect("covered");
            &parts[owner].1
        })
        .collect();
    X::glue(&raw, &elems)
}

/// Glue along an [`EventPartition`], `parts[n]` used on its block `n`.
pub fn concatenate_on<X: Glue>(blocks: &EventPartition, parts: &[&X]) -> Result<X> {
    X::glue(&blocks.partition, parts)
}

/// Selection and witness from [`stable_sup_witness`].
#[derive(Debug, Clone)]
pub struct SupWitness {
    /// Per-atom index into the family.
    pub selection: Vec<usize>,
    pub witness: L0Value,
}

/// For a finite family the supremum is attained: the selection is the
/// atomwise argmax (lowest index on ties), the witness its gluing, hence
/// `witness > sup − eps` on every atom for any positive `eps`.
pub fn stable_sup_witness(family: &[L0Value], eps: &L0Value) -> Result<SupWitness> {
    let first = check_family(family)?;
    let n = first.space().n_atoms();
    if eps.values().len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: eps.values().len() });
    }
    if let Some(a) = (0..n).find(|&a| !(eps.s(a) > 0.0)) {
        return Err(Error::NonPositiveEpsilon { atom: a, value: eps.s(a) });
    }
    let selection: Vec<usize> = (0..n)
        .map(|a| {
            let mut best = 0;
            for (i, h) in family.iter().enumerate().skip(1) {
                if h.s(a) > family[best].s(a) {
                    best = i;
                }
            }
            best
        })
        .collect();
    let witness = L0Value::scalar(first.space(), (0..n).map(|a| family[selection[a]].s(a)).collect())?;
    Ok(SupWitness { selection, witness })
}

fn rel_defect<Y: Glue>(a: &Y, b: &Y) -> f64 {
    a.max_abs_diff(b) / (1.0 + a.max_abs().max(b.max_abs()))
}

/// Checks `T(Σ Ĩ_{A_n} g_n) = Σ Ĩ_{A_n} T(g_n)` on every sample, relative
/// tolerance [`STABILITY_TOL`]. Violations are reported, not raised.
pub fn stability_check<X, Y, F>(map: F, samples: &[(EventPartition, Vec<X>)]) -> Result<CheckReport>
where
    X: Glue,
    Y: Glue,
    F: Fn(&X) -> Result<Y>,
{
    let mut report = CheckReport::new("stability", STABILITY_TOL);
    for (i, (blocks, elems)) in samples.iter().enumerate() {
        let refs: Vec<&X> = elems.iter().collect();
        let glued_in = concatenate_on(blocks, &refs)?;
        let lhs = map(&glued_in)?;
        let images = elems.iter().map(&map).collect::<Result<Vec<Y>>>()?;
        let img_refs: Vec<&Y> = images.iter().collect();
        let rhs = concatenate_on(blocks, &img_refs)?;
        let d = rel_defect(&lhs, &rhs);
        report.record(d, || format!("sample {i}: relative deviation {d:e}"));
    }
    Ok(report)
}

/// Helper for tests and suites: the blocks of `partitions[level]` grouped
/// into `n_groups` consecutive runs.
pub fn consecutive_grouping(space: &Arc<FilteredSpace>, level: usize, n_groups: usize) -> Result<EventPartition> {
    let nb = space.partition(level).n_blocks();
    let g = n_groups.clamp(1, nb);
    let labels: Vec<usize> = (0..nb).map(|b| b * g / nb).collect();
    EventPartition::from_grouping(space, level, &labels)
}

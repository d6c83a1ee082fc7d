//! Finite filtered spaces (scenario trees), random variables on them and
//! conditional expectation as block-wise weighted averaging.
//!
//! Atoms are `0..n`. Every atom carries a strictly positive weight, so two
//! random variables are equal almost surely iff they are equal atomwise.

use std::collections::HashMap;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::Arc;

use crate::error::{Error, Result};

const PROB_TOL: f64 = 1e-12;

/// A partition of the atom set. Blocks are kept in canonical order (atoms
/// sorted inside a block, blocks sorted by their smallest atom), so two
/// partitions describing the same sigma-algebra compare equal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    block_of: Vec<usize>,
    blocks: Vec<Vec<usize>>,
}

impl Partition {
    pub fn from_blocks(n_atoms: usize, blocks: Vec<Vec<usize>>) -> Result<Self> {
        let mut owner = vec![usize::MAX; n_atoms];
        for (b, block) in blocks.iter().enumerate() {
            if block.is_empty() {
                return Err(Error::InvalidPartition(format!("block {b} is empty")));
            }
            for &a in block {
                if a >= n_atoms {
                    return Err(Error::InvalidPartition(format!("atom {a} out of range")));
                }
                if owner[a] != usize::MAX {
                    return Err(Error::InvalidPartition(format!("atom {a} lies in two blocks")));
                }
                owner[a] = b;
            }
        }
        if let Some(a) = owner.iter().position(|&o| o == usize::MAX) {
            return Err(Error::InvalidPartition(format!("atom {a} is not covered")));
        }
        Ok(Self::from_labels(&owner))
    }

    /// Partition induced by a labelling of atoms (equal labels share a block).
    pub fn from_labels(labels: &[usize]) -> Self {
        let mut remap: HashMap<usize, usize> = HashMap::new();
        let mut block_of = Vec::with_capacity(labels.len());
        let mut blocks: Vec<Vec<usize>> = Vec::new();
        for (a, &l) in labels.iter().enumerate() {
            let id = *remap.entry(l).or_insert_with(|| {
                blocks.push(Vec::new());
                blocks.len() - 1
            });
            blocks[id].push(a);
            block_of.push(id);
        }
        Partition { block_of, blocks }
    }

    pub fn trivial(n_atoms: usize) -> Self {
        Self::from_labels(&vec![0; n_atoms])
    }

    pub fn discrete(n_atoms: usize) -> Self {
        Self::from_labels(&(0..n_atoms).collect::<Vec<_>>())
    }

    pub fn n_atoms(&self) -> usize {
        self.block_of.len()
    }

    pub fn n_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn block(&self, b: usize) -> &[usize] {
        &self.blocks[b]
    }

    pub fn block_of(&self, atom: usize) -> usize {
        self.block_of[atom]
    }

    /// True iff every block of `self` sits inside a block of `coarser`.
    pub fn refines(&self, coarser: &Partition) -> bool {
        self.n_atoms() == coarser.n_atoms()
            && self.blocks.iter().all(|blk| {
                let c = coarser.block_of(blk[0]);
                blk.iter().all(|&a| coarser.block_of(a) == c)
            })
    }

    /// Coarsest common refinement (the sigma-algebra generated by both).
    pub fn join(&self, other: &Partition) -> Partition {
        let n = other.n_blocks();
        let labels: Vec<usize> =
            (0..self.n_atoms()).map(|a| self.block_of(a) * n + other.block_of(a)).collect();
        Self::from_labels(&labels)
    }
}

/// A finite filtered probability space on a uniform time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FilteredSpace {
    weights: Vec<f64>,
    times: Vec<f64>,
    partitions: Vec<Partition>,
    // children[k][node] = blocks of partitions[k+1] inside block `node` of partitions[k]
    children: Vec<Vec<Vec<usize>>>,
}

impl FilteredSpace {
    pub fn new(weights: Vec<f64>, times: Vec<f64>, partitions: Vec<Partition>) -> Result<Arc<Self>> {
        let n = weights.len();
        if n == 0 {
            return Err(Error::InvalidSpace("no atoms".into()));
        }
        if let Some(a) = weights.iter().position(|w| !(*w > 0.0) || !w.is_finite()) {
            return Err(Error::InvalidSpace(format!("atom {a} has non-positive weight")));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > PROB_TOL * n as f64 {
            return Err(Error::InvalidSpace(format!("weights sum to {total}, not 1")));
        }
        if times.len() < 2 || times.len() != partitions.len() {
            return Err(Error::InvalidSpace(
                "need at least two grid times and one partition per time".into(),
            ));
        }
        let dt = times[1] - times[0];
        if !(dt > 0.0) {
            return Err(Error::InvalidSpace("grid must be strictly increasing".into()));
        }
        for k in 1..times.len() {
            let step = times[k] - times[k - 1];
            if (step - dt).abs() > 1e-9 * dt.max(1.0) {
                return Err(Error::InvalidSpace(format!("grid step {k} is not uniform")));
            }
        }
        for (k, p) in partitions.iter().enumerate() {
            if p.n_atoms() != n {
                return Err(Error::InvalidSpace(format!("partition {k} has the wrong atom count")));
            }
            if k > 0 && !p.refines(&partitions[k - 1]) {
                return Err(Error::InvalidSpace(format!("partition {k} does not refine partition {}", k - 1)));
            }
        }
        let children = (0..partitions.len() - 1)
            .map(|k| {
                let (coarse, fine) = (&partitions[k], &partitions[k + 1]);
                let mut ch = vec![Vec::new(); coarse.n_blocks()];
                for (fb, blk) in fine.blocks().iter().enumerate() {
                    ch[coarse.block_of(blk[0])].push(fb);
                }
                ch
            })
            .collect();
        Ok(Arc::new(FilteredSpace { weights, times, partitions, children }))
    }

    /// Tree-shaped space: `branching[k]` children per node at step k,
    /// `edge_probs[k]` the (node-independent) child probabilities of step k,
    /// `None` for uniform. The grid is uniform on `[0, horizon]`.
    pub fn tree(branching: &[usize], edge_probs: &[Option<Vec<f64>>], horizon: f64) -> Result<Arc<Self>> {
        if branching.is_empty() {
            return Err(Error::InvalidSpace("branching must have at least one step".into()));
        }
        if let Some(k) = branching.iter().position(|&b| b == 0) {
            return Err(Error::InvalidSpace(format!("branching factor at step {k} is zero")));
        }
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::InvalidSpace("horizon must be positive".into()));
        }
        if edge_probs.len() > branching.len() {
            return Err(Error::InvalidSpace("more edge-probability rows than steps".into()));
        }
        let mut probs = Vec::with_capacity(branching.len());
        for (k, &b) in branching.iter().enumerate() {
            match edge_probs.get(k).cloned().flatten() {
                None => probs.push(vec![1.0 / b as f64; b]),
                Some(q) => {
                    if q.len() != b {
                        return Err(Error::InvalidSpace(format!(
                            "step {k}: {} edge probabilities for branching {b}",
                            q.len()
                        )));
                    }
                    if q.iter().any(|x| !(*x > 0.0)) {
                        return Err(Error::InvalidSpace(format!("step {k}: edge probabilities must be positive")));
                    }
                    let s: f64 = q.iter().sum();
                    if (s - 1.0).abs() > PROB_TOL {
                        return Err(Error::InvalidSpace(format!("step {k}: edge probabilities sum to {s}")));
                    }
                    probs.push(q);
                }
            }
        }
        let n_steps = branching.len();
        let n: usize = branching.iter().product();
        // atom index in mixed radix, most significant digit = first step
        let mut weights = vec![1.0; n];
        let mut partitions = Vec::with_capacity(n_steps + 1);
        let mut stride = n;
        for k in 0..=n_steps {
            partitions.push(Partition::from_labels(&(0..n).map(|a| a / stride).collect::<Vec<_>>()));
            if k < n_steps {
                stride /= branching[k];
                for (a, w) in weights.iter_mut().enumerate() {
                    *w *= probs[k][(a / stride) % branching[k]];
                }
            }
        }
        let dt = horizon / n_steps as f64;
        let times = (0..=n_steps).map(|k| k as f64 * dt).collect();
        Self::new(weights, times, partitions)
    }

    /// Sub-filtration on grid indices `start..=end` over the same atoms.
    pub fn window(&self, start: usize, end: usize) -> Result<Arc<Self>> {
        if start >= end || end > self.steps() {
            return Err(Error::InvalidSpace(format!("window {start}..={end} outside the grid")));
        }
        Self::new(
            self.weights.clone(),
            self.times[start..=end].to_vec(),
            self.partitions[start..=end].to_vec(),
        )
    }

    /// The space seen from grid index `k` on: its initial sigma-algebra is `partitions[k]`.
    pub fn restrict_from(&self, k: usize) -> Result<Arc<Self>> {
        self.window(k, self.steps())
    }

    pub fn n_atoms(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, atom: usize) -> f64 {
        self.weights[atom]
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn time(&self, k: usize) -> f64 {
        self.times[k]
    }

    /// Number of grid steps N (there are N+1 grid times).
    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn delta(&self) -> f64 {
        self.times[1] - self.times[0]
    }

    /// Length of the time interval covered by the grid.
    pub fn horizon(&self) -> f64 {
        self.times[self.steps()] - self.times[0]
    }

    /// Time elapsed since the first grid time.
    pub fn elapsed(&self, k: usize) -> f64 {
        self.times[k] - self.times[0]
    }

    pub fn partitions(&self) -> &[Partition] {
        &self.partitions
    }

    pub fn partition(&self, k: usize) -> &Partition {
        &self.partitions[k]
    }

    /// The initial sigma-algebra.
    pub fn base(&self) -> &Partition {
        &self.partitions[0]
    }

    pub fn finest(&self) -> &Partition {
        &self.partitions[self.steps()]
    }

    /// Child blocks (indices into `partitions[k+1]`) of `node` in `partitions[k]`.
    pub fn children(&self, k: usize, node: usize) -> &[usize] {
        &self.children[k][node]
    }

    pub fn block_weight(&self, block: &[usize]) -> f64 {
        block.iter().map(|&a| self.weights[a]).sum()
    }

    pub fn same_atoms(&self, other: &FilteredSpace) -> bool {
        self.weights == other.weights
    }

    fn check_partition(&self, sigma: &Partition) -> Result<()> {
        if sigma.n_atoms() != self.n_atoms() {
            return Err(Error::IncompatiblePartition(format!(
                "partition has {} atoms, space has {}",
                sigma.n_atoms(),
                self.n_atoms()
            )));
        }
        if !self.finest().refines(sigma) {
            return Err(Error::IncompatiblePartition("not a coarsening of the finest partition".into()));
        }
        Ok(())
    }
}

/// Tree space on `[0, 1]`; see [`FilteredSpace::tree`].
pub fn build_space(branching: &[usize], edge_probs: &[Option<Vec<f64>>]) -> Result<Arc<FilteredSpace>> {
    FilteredSpace::tree(branching, edge_probs, 1.0)
}

/// An R^d-valued random variable: one vector per atom.
#[derive(Debug, Clone)]
pub struct L0Value {
    space: Arc<FilteredSpace>,
    dim: usize,
    values: Vec<f64>,
    meas: Option<usize>,
}

impl PartialEq for L0Value {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.values == other.values && self.space.same_atoms(&other.space)
    }
}

impl L0Value {
    /// `values` is atom-major: atom `a` owns `values[a*dim..(a+1)*dim]`.
    pub fn new(space: &Arc<FilteredSpace>, dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::DimensionMismatch { expected: 1, found: 0 });
        }
        if values.len() != dim * space.n_atoms() {
            return Err(Error::DimensionMismatch { expected: dim * space.n_atoms(), found: values.len() });
        }
        Ok(Self::from_parts(space.clone(), dim, values))
    }

    fn from_parts(space: Arc<FilteredSpace>, dim: usize, values: Vec<f64>) -> Self {
        let mut x = L0Value { space, dim, values, meas: None };
        x.meas = (0..x.space.partitions.len()).find(|&k| x.constant_on(&x.space.partitions[k]));
        x
    }

    pub fn from_fn(space: &Arc<FilteredSpace>, dim: usize, mut f: impl FnMut(usize) -> Vec<f64>) -> Result<Self> {
        let mut values = Vec::with_capacity(dim * space.n_atoms());
        for a in 0..space.n_atoms() {
            let v = f(a);
            if v.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: v.len() });
            }
            values.extend(v);
        }
        Ok(Self::from_parts(space.clone(), dim, values))
    }

    pub fn scalar(space: &Arc<FilteredSpace>, values: Vec<f64>) -> Result<Self> {
        Self::new(space, 1, values)
    }

    pub fn constant(space: &Arc<FilteredSpace>, c: &[f64]) -> Self {
        let values = c.iter().copied().cycle().take(c.len() * space.n_atoms()).collect();
        Self::from_parts(space.clone(), c.len(), values)
    }

    pub fn zeros(space: &Arc<FilteredSpace>, dim: usize) -> Self {
        Self::constant(space, &vec![0.0; dim])
    }

    /// Scalar value constant on the blocks of `sigma`, given one number per block.
    pub fn from_blocks(space: &Arc<FilteredSpace>, sigma: &Partition, per_block: &[f64]) -> Result<Self> {
        if per_block.len() != sigma.n_blocks() {
            return Err(Error::DimensionMismatch { expected: sigma.n_blocks(), found: per_block.len() });
        }
        space.check_partition(sigma)?;
        Self::scalar(space, (0..space.n_atoms()).map(|a| per_block[sigma.block_of(a)]).collect())
    }

    pub fn space(&self) -> &Arc<FilteredSpace> {
        &self.space
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Coarsest grid index whose partition this value is constant on;
    /// `None` if it is only measurable w.r.t. the full power set.
    pub fn meas(&self) -> Option<usize> {
        self.meas
    }

    pub fn at(&self, atom: usize) -> &[f64] {
        &self.values[atom * self.dim..(atom + 1) * self.dim]
    }

    /// Value of a scalar variable at an atom.
    pub fn s(&self, atom: usize) -> f64 {
        debug_assert_eq!(self.dim, 1);
        self.values[atom * self.dim]
    }

    pub fn is_scalar(&self) -> bool {
        self.dim == 1
    }

    fn constant_on(&self, sigma: &Partition) -> bool {
        sigma.blocks().iter().all(|blk| {
            let first = self.at(blk[0]);
            blk[1..].iter().all(|&a| self.at(a) == first)
        })
    }

    /// Same values on another space over the same atoms.
    pub fn rebase(&self, space: &Arc<FilteredSpace>) -> Result<Self> {
        if !self.space.same_atoms(space) {
            return Err(Error::SpaceMismatch);
        }
        Ok(Self::from_parts(space.clone(), self.dim, self.values.clone()))
    }

    pub fn same_space(&self, other: &L0Value) -> bool {
        Arc::ptr_eq(&self.space, &other.space) || self.space.same_atoms(&other.space)
    }

    pub fn check_compatible(&self, other: &L0Value) -> Result<()> {
        if !self.same_space(other) {
            return Err(Error::SpaceMismatch);
        }
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: other.dim });
        }
        Ok(())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::from_parts(self.space.clone(), self.dim, self.values.iter().map(|&v| f(v)).collect())
    }

    /// Atomwise map over whole vectors; the output dimension may differ.
    pub fn map_atoms(&self, out_dim: usize, mut f: impl FnMut(usize, &[f64]) -> Vec<f64>) -> Self {
        let mut values = Vec::with_capacity(out_dim * self.space.n_atoms());
        for a in 0..self.space.n_atoms() {
            let v = f(a, self.at(a));
            assert_eq!(v.len(), out_dim, "map_atoms produced a vector of the wrong length");
            values.extend(v);
        }
        Self::from_parts(self.space.clone(), out_dim, values)
    }

    pub fn zip_map(&self, other: &L0Value, f: impl Fn(f64, f64) -> f64) -> Self {
        assert!(self.same_space(other) && self.dim == other.dim, "shape mismatch in zip_map");
        let values = self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect();
        Self::from_parts(self.space.clone(), self.dim, values)
    }

    /// Module multiplication by a scalar random variable.
    pub fn mul_scalar(&self, xi: &L0Value) -> Self {
        assert!(xi.is_scalar() && self.same_space(xi), "mul_scalar needs a scalar on the same space");
        let d = self.dim;
        let values = self.values.iter().enumerate().map(|(i, &v)| v * xi.values[i / d]).collect();
        Self::from_parts(self.space.clone(), d, values)
    }

    /// Euclidean norm per atom, as a scalar variable.
    pub fn norm(&self) -> Self {
        self.map_atoms(1, |_, v| vec![v.iter().map(|x| x * x).sum::<f64>().sqrt()])
    }

    /// Atomwise inner product, as a scalar variable.
    pub fn dot(&self, other: &L0Value) -> Self {
        assert!(self.same_space(other) && self.dim == other.dim, "shape mismatch in dot");
        self.map_atoms(1, |a, v| vec![v.iter().zip(other.at(a)).map(|(x, y)| x * y).sum()])
    }

    pub fn component(&self, i: usize) -> Self {
        self.map_atoms(1, |_, v| vec![v[i]])
    }

    /// Largest absolute entry over all atoms and components.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &L0Value) -> f64 {
        assert_eq!(self.values.len(), other.values.len(), "shape mismatch in max_abs_diff");
        self.values.iter().zip(&other.values).fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

impl Add for &L0Value {
    type Output = L0Value;
    fn add(self, rhs: &L0Value) -> L0Value {
        self.zip_map(rhs, |a, b| a + b)
    }
}

impl Sub for &L0Value {
    type Output = L0Value;
    fn sub(self, rhs: &L0Value) -> L0Value {
        self.zip_map(rhs, |a, b| a - b)
    }
}

impl Neg for &L0Value {
    type Output = L0Value;
    fn neg(self) -> L0Value {
        self.map(|v| -v)
    }
}

impl Mul<f64> for &L0Value {
    type Output = L0Value;
    fn mul(self, c: f64) -> L0Value {
        self.map(|v| v * c)
    }
}

/// Conditional expectation given the sigma-algebra generated by `sigma`.
pub fn cond_expect(x: &L0Value, sigma: &Partition) -> Result<L0Value> {
    x.space.check_partition(sigma)?;
    let d = x.dim;
    let mut values = vec![0.0; x.values.len()];
    let mut avg = vec![0.0; d];
    for blk in sigma.blocks() {
        avg.iter_mut().for_each(|v| *v = 0.0);
        let mut mass = 0.0;
        for &a in blk {
            let w = x.space.weights[a];
            mass += w;
            for (s, v) in avg.iter_mut().zip(x.at(a)) {
                *s += w * v;
            }
        }
        avg.iter_mut().for_each(|v| *v /= mass);
        for &a in blk {
            values[a * d..(a + 1) * d].copy_from_slice(&avg);
        }
    }
    Ok(L0Value::from_parts(x.space.clone(), d, values))
}

/// Conditional expectation given the grid sigma-algebra at index `k`.
pub fn cond_expect_at(x: &L0Value, k: usize) -> L0Value {
    let sigma = x.space.partitions[k].clone();
    cond_expect(x, &sigma).expect("grid partitions are always compatible")
}

/// Expectation (a vector).
pub fn expectation(x: &L0Value) -> Vec<f64> {
    let mut out = vec![0.0; x.dim];
    for a in 0..x.space.n_atoms() {
        let w = x.space.weights[a];
        for (o, v) in out.iter_mut().zip(x.at(a)) {
            *o += w * v;
        }
    }
    out
}

/// True iff `x` is constant on every block of `sigma` (exact comparison).
pub fn is_measurable(x: &L0Value, sigma: &Partition) -> bool {
    sigma.n_atoms() == x.space.n_atoms() && x.constant_on(sigma)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_binary_tree() {
        let s = build_space(&[2, 2], &[]).unwrap();
        assert_eq!(s.n_atoms(), 4);
        assert!(s.weights().iter().all(|&w| (w - 0.25).abs() < 1e-15));
        assert_eq!(s.partition(0), &Partition::trivial(4));
        assert_eq!(s.partition(1), &Partition::from_blocks(4, vec![vec![0, 1], vec![2, 3]]).unwrap());
        assert_eq!(s.partition(2), &Partition::discrete(4));
    }

    #[test]
    fn degenerate_single_atom() {
        let s = build_space(&[1], &[]).unwrap();
        assert_eq!(s.n_atoms(), 1);
        assert_eq!(s.weight(0), 1.0);
        assert_eq!(s.partition(0), s.partition(1));
    }

    #[test]
    fn path_product_weights() {
        let s = build_space(&[3, 2], &[Some(vec![0.5, 0.3, 0.2]), None]).unwrap();
        let expected = [0.25, 0.25, 0.15, 0.15, 0.1, 0.1];
        for (w, e) in s.weights().iter().zip(expected) {
            assert!((w - e).abs() < 1e-15);
        }
    }

    #[test]
    fn bad_trees_rejected() {
        assert!(build_space(&[2, 0], &[]).is_err());
        assert!(build_space(&[2], &[Some(vec![0.5, 0.4])]).is_err());
        assert!(build_space(&[2], &[Some(vec![1.0, 0.0])]).is_err());
    }

    #[test]
    fn block_average() {
        let s = build_space(&[2, 2], &[]).unwrap();
        let x = L0Value::scalar(&s, vec![1.0, 3.0, 2.0, 6.0]).unwrap();
        let e = cond_expect(&x, s.partition(1)).unwrap();
        assert_eq!(e.values(), &[2.0, 2.0, 4.0, 4.0]);
        let e0 = cond_expect(&x, s.partition(0)).unwrap();
        assert_eq!(e0.values(), &[3.0; 4]);
        assert_eq!(cond_expect(&e, s.partition(1)).unwrap(), e);
    }

    #[test]
    fn measurability() {
        let s = build_space(&[2, 2], &[]).unwrap();
        let x = L0Value::scalar(&s, vec![1.0, 2.0, 1.0, 1.0]).unwrap();
        assert!(!is_measurable(&x, s.partition(1)));
        assert_eq!(x.meas(), Some(2));
        assert!(is_measurable(&L0Value::constant(&s, &[3.0]), s.partition(1)));
        assert!(is_measurable(&cond_expect_at(&x, 1), s.partition(1)));
    }

    #[test]
    fn incompatible_partition() {
        let s = build_space(&[2, 2], &[]).unwrap();
        let x = L0Value::zeros(&s, 1);
        assert!(cond_expect(&x, &Partition::trivial(3)).is_err());
        let coarse = build_space(&[2, 2], &[]).unwrap().window(0, 1).unwrap();
        let y = L0Value::zeros(&coarse, 1);
        assert!(cond_expect(&y, &Partition::discrete(4)).is_err());
    }

    #[test]
    fn window_keeps_atoms() {
        let s = FilteredSpace::tree(&[2, 3, 2], &[], 3.0).unwrap();
        let w = s.restrict_from(1).unwrap();
        assert_eq!(w.steps(), 2);
        assert_eq!(w.base().n_blocks(), 2);
        assert!((w.horizon() - 2.0).abs() < 1e-12);
        assert_eq!(w.children(0, 1).len(), 3);
    }
}

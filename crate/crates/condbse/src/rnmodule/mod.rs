//! Conditional L^p norms, which turn the finite modules of this crate into
//! random normed modules over L⁰(F₀), plus normal-structure witnesses.
//! The random contraction engine lives in [`engine`].

pub mod engine;

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::l0algebra::stable_sup_witness;
use crate::probspace::{FilteredSpace, L0Value, Partition};
use crate::report::CheckReport;

pub use engine::{fixed_point_random_contraction, fixed_point_random_contraction_with, RatioFlag, SolveReport, Status};

/// Conditional norm `|||x|||_p = (E[|x|^p | base])^{1/p}`; `p = ∞` gives the
/// block maximum of `|x|`.
#[derive(Debug, Clone)]
pub struct CondNorm {
    p: f64,
    base: Partition,
    space: Arc<FilteredSpace>,
}

impl CondNorm {
    pub fn new(space: &Arc<FilteredSpace>, p: f64, base: Partition) -> Result<Self> {
        if !(p > 1.0) {
            return Err(Error::InvalidExponent(p));
        }
        if base.n_atoms() != space.n_atoms() || !space.finest().refines(&base) {
            return Err(Error::IncompatiblePartition("norm base must coarsen the finest partition".into()));
        }
        Ok(CondNorm { p, base, space: space.clone() })
    }

    /// Norm conditional on the space's initial sigma-algebra.
    pub fn initial(space: &Arc<FilteredSpace>, p: f64) -> Result<Self> {
        Self::new(space, p, space.base().clone())
    }

    /// Unconditional norm (trivial base): the classical L^p setting.
    pub fn classical(space: &Arc<FilteredSpace>, p: f64) -> Result<Self> {
        Self::new(space, p, Partition::trivial(space.n_atoms()))
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn base(&self) -> &Partition {
        &self.base
    }

    pub fn space(&self) -> &Arc<FilteredSpace> {
        &self.space
    }

    pub fn n_blocks(&self) -> usize {
        self.base.n_blocks()
    }

    /// Same exponent, different base.
    pub fn with_base(&self, base: Partition) -> Result<Self> {
        Self::new(&self.space, self.p, base)
    }

    /// Conditional norm of a nonnegative per-atom magnitude, one number per base block.
    pub fn block_norms_of_magnitudes(&self, mag: &[f64]) -> Vec<f64> {
        self.base
            .blocks()
            .iter()
            .map(|blk| {
                let m = blk.iter().fold(0.0f64, |m, &a| m.max(mag[a]));
                if self.p.is_infinite() || m == 0.0 {
                    return m;
                }
                let (mut num, mut den) = (0.0, 0.0);
                for &a in blk {
                    let w = self.space.weight(a);
                    num += w * (mag[a] / m).powf(self.p);
                    den += w;
                }
                m * (num / den).powf(1.0 / self.p)
            })
            .collect()
    }

    /// One number per base block.
    pub fn block_norms(&self, x: &L0Value) -> Vec<f64> {
        let mag: Vec<f64> = (0..x.space().n_atoms())
            .map(|a| x.at(a).iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect();
        self.block_norms_of_magnitudes(&mag)
    }

    /// Spreads per-block numbers back over the atoms.
    pub fn to_l0(&self, per_block: &[f64]) -> L0Value {
        L0Value::scalar(&self.space, (0..self.space.n_atoms()).map(|a| per_block[self.base.block_of(a)]).collect())
            .expect("sizes match")
    }

    /// Reads a base-measurable scalar as one number per block.
    pub fn per_block(&self, xi: &L0Value) -> Result<Vec<f64>> {
        if !xi.is_scalar() {
            return Err(Error::DimensionMismatch { expected: 1, found: xi.dim() });
        }
        if !crate::probspace::is_measurable(xi, &self.base) {
            return Err(Error::NotMeasurable("value is not measurable w.r.t. the norm base".into()));
        }
        Ok(self.base.blocks().iter().map(|blk| xi.s(blk[0])).collect())
    }
}

/// `|||x|||_p` as a base-measurable scalar variable.
pub fn cond_norm(x: &L0Value, norm: &CondNorm) -> Result<L0Value> {
    if x.space().n_atoms() != norm.space.n_atoms() {
        return Err(Error::SpaceMismatch);
    }
    Ok(norm.to_l0(&norm.block_norms(x)))
}

/// Checks the three random-norm axioms on each `(x, y, ξ)` sample, with `ξ`
/// a base-measurable scalar. Returns one report per axiom.
pub fn rnm_axiom_check(norm: &CondNorm, samples: &[(L0Value, L0Value, L0Value)]) -> Result<Vec<CheckReport>> {
    const TOL: f64 = 1e-10;
    let mut r1 = CheckReport::new("RNM-1 null norm implies null element", TOL);
    let mut r2 = CheckReport::new("RNM-2 homogeneity", TOL);
    let mut r3 = CheckReport::new("RNM-3 triangle inequality", TOL);
    for (i, (x, y, xi)) in samples.iter().enumerate() {
        let xi_b = norm.per_block(xi)?;
        let nx = norm.block_norms(x);
        let ny = norm.block_norms(y);
        for (b, blk) in norm.base.blocks().iter().enumerate() {
            let null = blk.iter().all(|&a| x.at(a).iter().all(|v| *v == 0.0));
            r1.record_bool((nx[b] == 0.0) == null, || format!("sample {i} block {b}: norm {} vs null {null}", nx[b]));
        }
        let nxi = norm.block_norms(&x.mul_scalar(xi));
        for b in 0..norm.n_blocks() {
            let want = xi_b[b].abs() * nx[b];
            let d = (nxi[b] - want).abs() / (1.0 + want);
            r2.record(d, || format!("sample {i} block {b}: |||ξx||| = {} vs {want}", nxi[b]));
        }
        let nxy = norm.block_norms(&(x + y));
        for b in 0..norm.n_blocks() {
            let d = (nxy[b] - nx[b] - ny[b]).max(0.0) / (1.0 + nx[b] + ny[b]);
            r3.record(d, || format!("sample {i} block {b}: {} > {} + {}", nxy[b], nx[b], ny[b]));
        }
    }
    Ok(vec![r1, r2, r3])
}

/// Per-atom diameter of the generator set under the Euclidean norm of R^d
/// (the pointwise module L⁰(F, R^d)).
pub fn random_diameter(generators: &[L0Value]) -> Result<L0Value> {
    let first = generators.first().ok_or(Error::EmptyFamily)?;
    for g in generators {
        first.check_compatible(g)?;
    }
    let mut diam = L0Value::zeros(first.space(), 1);
    for i in 0..generators.len() {
        for j in i + 1..generators.len() {
            diam = diam.zip_map(&(&generators[i] - &generators[j]).norm(), f64::max);
        }
    }
    Ok(diam)
}

/// Diameter under a conditional norm: `⋁_{i,j} |||h_i − h_j|||_p`, which is
/// also the diameter of the L⁰(F₀)-convex hull.
pub fn random_diameter_cond(generators: &[L0Value], norm: &CondNorm) -> Result<L0Value> {
    let first = generators.first().ok_or(Error::EmptyFamily)?;
    let mut d = vec![0.0f64; norm.n_blocks()];
    for i in 0..generators.len() {
        first.check_compatible(&generators[i])?;
        for j in i + 1..generators.len() {
            for (db, nb) in d.iter_mut().zip(norm.block_norms(&(&generators[i] - &generators[j]))) {
                *db = db.max(nb);
            }
        }
    }
    Ok(norm.to_l0(&d))
}

/// Output of [`nondiametral_midpoint`].
#[derive(Debug, Clone)]
pub struct Midpoint {
    pub z: L0Value,
    /// `D(H) − ⋁_h |||z − h|||`, base-measurable.
    pub margin: L0Value,
    pub diameter: L0Value,
    /// Selected generator pair per base block.
    pub pairs: Vec<(usize, usize)>,
    /// Base blocks with positive diameter but non-positive margin.
    pub violations: Vec<usize>,
}

/// Midpoint of a farthest generator pair, selected blockwise through the
/// sup-witness of the pairwise distance family with `ε = D/2`.
pub fn nondiametral_midpoint(generators: &[L0Value], norm: &CondNorm) -> Result<Midpoint> {
    if norm.p.is_infinite() {
        return Err(Error::Precondition("uniform convexity needs 1 < p < ∞".into()));
    }
    let first = generators.first().ok_or(Error::EmptyFamily)?;
    let diameter = random_diameter_cond(generators, norm)?;
    let mut pair_ids = Vec::new();
    let mut family = Vec::new();
    for i in 0..generators.len() {
        for j in i + 1..generators.len() {
            pair_ids.push((i, j));
            family.push(cond_norm(&(&generators[i] - &generators[j]), norm)?);
        }
    }
    let dmax = diameter.max_abs();
    if family.is_empty() || dmax == 0.0 {
        return Err(Error::Precondition("random diameter vanishes everywhere".into()));
    }
    // ε must be strictly positive on Ω; blocks with D = 0 get an arbitrary positive ε
    let eps = diameter.map(|d| if d > 0.0 { d / 2.0 } else { 1.0 });
    let sel = stable_sup_witness(&family, &eps)?;
    let pairs: Vec<(usize, usize)> =
        norm.base.blocks().iter().map(|blk| pair_ids[sel.selection[blk[0]]]).collect();
    let z = L0Value::from_fn(first.space(), first.dim(), |a| {
        let (i, j) = pairs[norm.base.block_of(a)];
        generators[i].at(a).iter().zip(generators[j].at(a)).map(|(x, y)| 0.5 * (x + y)).collect()
    })?;
    let d_b = norm.per_block(&diameter)?;
    let mut far = vec![0.0f64; norm.n_blocks()];
    for h in generators {
        for (f, nb) in far.iter_mut().zip(norm.block_norms(&(&z - h))) {
            *f = f.max(nb);
        }
    }
    let margin_b: Vec<f64> = d_b.iter().zip(&far).map(|(d, f)| d - f).collect();
    let violations = (0..norm.n_blocks()).filter(|&b| d_b[b] > 0.0 && !(margin_b[b] > 0.0)).collect();
    Ok(Midpoint { z, margin: norm.to_l0(&margin_b), diameter, pairs, violations })
}

/// Positive integer per base block: the random iteration count `L`.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomIterCount {
    base: Partition,
    per_block: Vec<usize>,
}

impl RandomIterCount {
    pub fn new(base: &Partition, per_block: Vec<usize>) -> Result<Self> {
        if per_block.len() != base.n_blocks() {
            return Err(Error::DimensionMismatch { expected: base.n_blocks(), found: per_block.len() });
        }
        if let Some(b) = per_block.iter().position(|&k| k == 0) {
            return Err(Error::ParameterDomain(format!("iteration count must be >= 1 (block {b})")));
        }
        Ok(RandomIterCount { base: base.clone(), per_block })
    }

    pub fn uniform(base: &Partition, k: usize) -> Result<Self> {
        Self::new(base, vec![k; base.n_blocks()])
    }

    pub fn base(&self) -> &Partition {
        &self.base
    }

    pub fn per_block(&self) -> &[usize] {
        &self.per_block
    }

    pub fn max(&self) -> usize {
        self.per_block.iter().copied().max().unwrap_or(1)
    }

    pub fn at_atom(&self, atom: usize) -> usize {
        self.per_block[self.base.block_of(atom)]
    }

    /// Re-express against another base partition that refines this one's base.
    pub fn refine_to(&self, base: &Partition) -> Result<Self> {
        if !base.refines(&self.base) {
            return Err(Error::IncompatiblePartition("iteration count is not measurable on the new base".into()));
        }
        Self::new(base, base.blocks().iter().map(|blk| self.at_atom(blk[0])).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::probspace::build_space;

    #[test]
    fn block_norm_examples() {
        let s = build_space(&[2, 2], &[]).unwrap();
        let x = L0Value::scalar(&s, vec![3.0, 4.0, 0.0, 2.0]).unwrap();
        let n2 = CondNorm::new(&s, 2.0, s.partition(1).clone()).unwrap();
        let got = cond_norm(&x, &n2).unwrap();
        let root = 12.5f64.sqrt();
        for (g, e) in got.values().iter().zip([root, root, 2f64.sqrt(), 2f64.sqrt()]) {
            assert!((g - e).abs() < 1e-14);
        }
        let ninf = CondNorm::new(&s, f64::INFINITY, s.partition(1).clone()).unwrap();
        assert_eq!(cond_norm(&x, &ninf).unwrap().values(), &[4.0, 4.0, 2.0, 2.0]);
        assert_eq!(cond_norm(&L0Value::zeros(&s, 1), &n2).unwrap().max_abs(), 0.0);
        assert!(matches!(CondNorm::initial(&s, 1.0), Err(Error::InvalidExponent(_))));
    }

    #[test]
    fn indicator_homogeneity() {
        let s = build_space(&[2, 2], &[]).unwrap();
        let base = s.partition(1).clone();
        let n = CondNorm::new(&s, 1.5, base).unwrap();
        let x = L0Value::scalar(&s, vec![1.0, -2.0, 0.5, 3.0]).unwrap();
        let ind = L0Value::scalar(&s, vec![1.0, 1.0, 0.0, 0.0]).unwrap();
        let lhs = cond_norm(&x.mul_scalar(&ind), &n).unwrap();
        let rhs = cond_norm(&x, &n).unwrap().mul_scalar(&ind);
        assert!(lhs.max_abs_diff(&rhs) < 1e-15);
    }

    #[test]
    fn diameters() {
        let s = build_space(&[2, 2], &[]).unwrap();
        let g = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]].map(|c| L0Value::constant(&s, &c));
        let d = random_diameter(&g).unwrap();
        assert!(d.values().iter().all(|v| (v - 2f64.sqrt()).abs() < 1e-15));
        assert_eq!(random_diameter(&g[..1]).unwrap().max_abs(), 0.0);
        assert!(random_diameter(&[]).is_err());
    }

    #[test]
    fn midpoint_examples() {
        let s = build_space(&[2, 2], &[]).unwrap();
        let n = CondNorm::initial(&s, 2.0).unwrap();
        let pts = [0.0, 0.5, 1.0].map(|c| L0Value::constant(&s, &[c]));
        let m = nondiametral_midpoint(&pts, &n).unwrap();
        assert_eq!(m.pairs, vec![(0, 2)]);
        assert!(m.z.values().iter().all(|v| (v - 0.5).abs() < 1e-15));
        assert!(m.margin.values().iter().all(|v| (v - 0.5).abs() < 1e-15));
        let two = [[1.0, 2.0], [3.0, -1.0]].map(|c| L0Value::constant(&s, &c));
        let m2 = nondiametral_midpoint(&two, &n).unwrap();
        let d = 13f64.sqrt();
        assert!(m2.margin.values().iter().all(|v| (v - d / 2.0).abs() < 1e-14));
        assert!(m2.violations.is_empty());
    }

    #[test]
    fn iteration_count_validation() {
        let s = build_space(&[2, 2], &[]).unwrap();
        assert!(RandomIterCount::new(s.partition(1), vec![1, 0]).is_err());
        let l = RandomIterCount::new(s.partition(1), vec![2, 1]).unwrap();
        assert_eq!(l.at_atom(3), 1);
        assert_eq!(l.refine_to(s.partition(2)).unwrap().per_block(), &[2, 2, 1, 1]);
        assert!(l.refine_to(s.partition(0)).is_err());
    }
}

//! Martingale representation `M_t = M_0 + Σ_{s<t} Z_s ΔW_s + Σ_{s<t} Σ_x U_s(x) ΔÑ_s(x) + (K_t − K_0)`
//! by node-conditional least squares against a driver basis.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::{AdaptedProcess, MartingaleProcess};
use crate::error::{Error, Result};
use crate::probspace::{cond_expect, is_measurable, FilteredSpace, L0Value};
use crate::report::CheckReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DriverKind {
    /// Random-walk (discrete Brownian) driver.
    Walk,
    /// Compensated indicator of a jump mark.
    Jump { mark: usize },
}

#[derive(Debug, Clone)]
struct NodeSystem {
    active: Vec<usize>,
    gram: DMatrix<f64>,
    chol: Option<nalgebra::Cholesky<f64, nalgebra::Dyn>>,
}

/// Basis martingales with their one-step increments and node Gram matrices.
#[derive(Debug, Clone)]
pub struct DriverBasis {
    space: Arc<FilteredSpace>,
    kinds: Vec<DriverKind>,
    // increments[j][k] = D_j(k+1) − D_j(k)
    increments: Vec<Vec<L0Value>>,
    // systems[k][node], node a block of partitions[k]
    systems: Vec<Vec<NodeSystem>>,
}

impl DriverBasis {
    /// Standard basis of a tree: a walk on the first two children of every
    /// node (scaled so `Var(ΔW | node) = Δ·(q₀+q₁)`), and, with `jumps`,
    /// one compensated indicator `1{child = x+2} − q_{x+2}` per extra child.
    /// Nodes with a single child carry no driver increments.
    pub fn standard(space: &Arc<FilteredSpace>, jumps: bool) -> Result<Self> {
        let n = space.steps();
        let sd = space.delta().sqrt();
        let max_b = (0..n)
            .flat_map(|k| (0..space.partition(k).n_blocks()).map(move |node| (k, node)))
            .map(|(k, node)| space.children(k, node).len())
            .max()
            .unwrap_or(1);
        let n_marks = if jumps { max_b.saturating_sub(2) } else { 0 };
        let mut kinds = vec![DriverKind::Walk];
        kinds.extend((0..n_marks).map(|mark| DriverKind::Jump { mark }));
        let mut increments = vec![Vec::with_capacity(n); kinds.len()];
        for k in 0..n {
            let fine = space.partition(k + 1);
            let coarse = space.partition(k);
            let mut vals = vec![vec![0.0; space.n_atoms()]; kinds.len()];
            for node in 0..coarse.n_blocks() {
                let ch = space.children(k, node);
                let wn = space.block_weight(coarse.block(node));
                let q: Vec<f64> = ch.iter().map(|&c| space.block_weight(fine.block(c)) / wn).collect();
                for (i, &c) in ch.iter().enumerate() {
                    let w = match (ch.len(), i) {
                        (1, _) => 0.0,
                        (_, 0) => sd * (q[1] / q[0]).sqrt(),
                        (_, 1) => -sd * (q[0] / q[1]).sqrt(),
                        _ => 0.0,
                    };
                    for &a in fine.block(c) {
                        vals[0][a] = w;
                        for x in 0..n_marks {
                            if x + 2 < ch.len() {
                                vals[1 + x][a] = if i == x + 2 { 1.0 } else { 0.0 } - q[x + 2];
                            }
                        }
                    }
                }
            }
            for (j, v) in vals.into_iter().enumerate() {
                increments[j].push(L0Value::scalar(space, v)?);
            }
        }
        Self::from_increments(space, kinds, increments)
    }

    /// Basis from explicit driver martingales (each scalar, starting at 0).
    pub fn from_drivers(space: &Arc<FilteredSpace>, drivers: Vec<(DriverKind, MartingaleProcess)>) -> Result<Self> {
        let mut kinds = Vec::new();
        let mut increments = Vec::new();
        for (kind, d) in drivers {
            if d.dim() != 1 {
                return Err(Error::DimensionMismatch { expected: 1, found: d.dim() });
            }
            if !d.space().same_atoms(space) || d.steps() != space.steps() {
                return Err(Error::SpaceMismatch);
            }
            kinds.push(kind);
            increments.push((0..space.steps()).map(|k| d.at(k + 1) - d.at(k)).collect());
        }
        Self::from_increments(space, kinds, increments)
    }

    fn from_increments(space: &Arc<FilteredSpace>, kinds: Vec<DriverKind>, increments: Vec<Vec<L0Value>>) -> Result<Self> {
        let mut systems = Vec::with_capacity(space.steps());
        for k in 0..space.steps() {
            let coarse = space.partition(k);
            let mut row = Vec::with_capacity(coarse.n_blocks());
            for node in 0..coarse.n_blocks() {
                let blk = coarse.block(node);
                let active: Vec<usize> =
                    (0..kinds.len()).filter(|&j| blk.iter().any(|&a| increments[j][k].s(a) != 0.0)).collect();
                let wn = space.block_weight(blk);
                let gram = DMatrix::from_fn(active.len(), active.len(), |r, c| {
                    let (i, j) = (active[r], active[c]);
                    blk.iter().map(|&a| space.weight(a) * increments[i][k].s(a) * increments[j][k].s(a)).sum::<f64>() / wn
                });
                let chol = if active.is_empty() {
                    None
                } else {
                    let ch = gram.clone().cholesky().ok_or(Error::DegenerateDrivers { step: k, node })?;
                    // reject numerically singular systems as well
                    let d = ch.l_dirty().diagonal();
                    let (lo, hi) = d.iter().fold((f64::INFINITY, 0.0f64), |(l, h), v| (l.min(v.abs()), h.max(v.abs())));
                    if !(lo > 1e-7 * hi) {
                        return Err(Error::DegenerateDrivers { step: k, node });
                    }
                    Some(ch)
                };
                row.push(NodeSystem { active, gram, chol });
            }
            systems.push(row);
        }
        for (j, inc) in increments.iter().enumerate() {
            for (k, dk) in inc.iter().enumerate() {
                let e = cond_expect(dk, space.partition(k))?;
                if e.max_abs() > 1e-12 * (1.0 + dk.max_abs()) || !is_measurable(dk, space.partition(k + 1)) {
                    return Err(Error::Precondition(format!("driver {j} is not a martingale at step {k}")));
                }
            }
        }
        Ok(DriverBasis { space: space.clone(), kinds, increments, systems })
    }

    pub fn space(&self) -> &Arc<FilteredSpace> {
        &self.space
    }

    pub fn kinds(&self) -> &[DriverKind] {
        &self.kinds
    }

    pub fn n_drivers(&self) -> usize {
        self.kinds.len()
    }

    /// Index of the first walk driver, if any.
    pub fn walk_index(&self) -> Option<usize> {
        self.kinds.iter().position(|k| *k == DriverKind::Walk)
    }

    /// Indices of the jump drivers in mark order.
    pub fn jump_indices(&self) -> Vec<usize> {
        (0..self.kinds.len()).filter(|&j| matches!(self.kinds[j], DriverKind::Jump { .. })).collect()
    }

    /// `ΔD_j` over step `k → k+1`.
    pub fn increment(&self, j: usize, k: usize) -> &L0Value {
        &self.increments[j][k]
    }

    /// The drivers as martingale processes.
    pub fn drivers(&self) -> Vec<MartingaleProcess> {
        (0..self.kinds.len())
            .map(|j| {
                let mut acc = L0Value::zeros(&self.space, 1);
                let mut vals = vec![acc.clone()];
                for inc in &self.increments[j] {
                    acc = &acc + inc;
                    vals.push(acc.clone());
                }
                MartingaleProcess { inner: AdaptedProcess::new(&self.space, vals).expect("driver increments are adapted") }
            })
            .collect()
    }

    /// Full Gram matrix `E[ΔD_i ΔD_j | node]` over all drivers (zeros for inactive ones).
    pub fn gram(&self, k: usize, atom: usize) -> DMatrix<f64> {
        let sys = &self.systems[k][self.space.partition(k).block_of(atom)];
        let n = self.kinds.len();
        let mut g = DMatrix::zeros(n, n);
        for (r, &i) in sys.active.iter().enumerate() {
            for (c, &j) in sys.active.iter().enumerate() {
                g[(i, j)] = sys.gram[(r, c)];
            }
        }
        g
    }

    /// Whether driver `j` moves on the node of `atom` at step `k`.
    pub fn is_active(&self, j: usize, k: usize, atom: usize) -> bool {
        self.systems[k][self.space.partition(k).block_of(atom)].active.contains(&j)
    }

    /// Smallest positive `Var(ΔW | node) / Δ` over nodes where the walk moves.
    pub fn min_walk_rate(&self) -> Option<f64> {
        let w = self.walk_index()?;
        let dt = self.space.delta();
        let mut best: Option<f64> = None;
        for row in &self.systems {
            for sys in row {
                if let Some(r) = sys.active.iter().position(|&j| j == w) {
                    let v = sys.gram[(r, r)] / dt;
                    best = Some(best.map_or(v, |b: f64| b.min(v)));
                }
            }
        }
        best
    }

    /// Largest `Δ·1ᵀ Γ_N⁻¹ 1` over nodes, where `Γ_N` is the jump block of the
    /// Gram matrix; bounds `|Σ_x U(x)|² ≤ (that) · UᵀΓ_N U / Δ`.
    pub fn max_jump_sum_factor(&self) -> f64 {
        let dt = self.space.delta();
        let jumps = self.jump_indices();
        let mut best = 0.0f64;
        for row in &self.systems {
            for sys in row {
                let idx: Vec<usize> = (0..sys.active.len()).filter(|&r| jumps.contains(&sys.active[r])).collect();
                if idx.is_empty() {
                    continue;
                }
                let g = DMatrix::from_fn(idx.len(), idx.len(), |r, c| sys.gram[(idx[r], idx[c])]);
                if let Some(ch) = g.cholesky() {
                    let x = ch.solve(&DVector::from_element(idx.len(), 1.0));
                    best = best.max(dt * x.sum());
                }
            }
        }
        best
    }
}

/// Coefficients of every driver per step plus the orthogonal remainder `K`.
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    pub kinds: Vec<DriverKind>,
    /// `coefficients[j][k]`: coefficient of driver `j` on step `k → k+1`,
    /// `F_k`-measurable, same dimension as `M`.
    pub coefficients: Vec<Vec<L0Value>>,
    /// Remainder with `K_0 = M_0`, increments orthogonal to all drivers.
    pub remainder: MartingaleProcess,
}

impl Decomposition {
    /// Walk coefficient process `Z` (one value per step).
    pub fn z(&self) -> Option<&[L0Value]> {
        self.kinds.iter().position(|k| *k == DriverKind::Walk).map(|j| self.coefficients[j].as_slice())
    }

    /// Jump coefficients `U(x)` for mark `x`.
    pub fn u(&self, mark: usize) -> Option<&[L0Value]> {
        self.kinds
            .iter()
            .position(|k| *k == DriverKind::Jump { mark })
            .map(|j| self.coefficients[j].as_slice())
    }

    pub fn reconstruct(&self, basis: &DriverBasis) -> Result<MartingaleProcess> {
        stochastic_integral(basis, &self.coefficients, Some(&self.remainder))
    }
}

/// `M_t = K_0 + Σ_{s<t} Σ_j c_{j,s} ΔD_{j,s} + (K_t − K_0)`; `K` defaults to 0.
pub fn stochastic_integral(
    basis: &DriverBasis,
    coefficients: &[Vec<L0Value>],
    remainder: Option<&MartingaleProcess>,
) -> Result<MartingaleProcess> {
    let space = &basis.space;
    let n = space.steps();
    if coefficients.len() != basis.n_drivers() {
        return Err(Error::DimensionMismatch { expected: basis.n_drivers(), found: coefficients.len() });
    }
    let dim = coefficients
        .first()
        .and_then(|c| c.first())
        .map(|c| c.dim())
        .or_else(|| remainder.map(|r| r.dim()))
        .unwrap_or(1);
    for (j, cj) in coefficients.iter().enumerate() {
        if cj.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: cj.len() });
        }
        for (k, c) in cj.iter().enumerate() {
            if c.dim() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: c.dim() });
            }
            if !is_measurable(c, space.partition(k)) {
                return Err(Error::NotMeasurable(format!("coefficient of driver {j} at step {k} is not predictable")));
            }
        }
    }
    let mut acc = match remainder {
        Some(r) => r.at(0).clone(),
        None => L0Value::zeros(space, dim),
    };
    let mut vals = vec![acc.clone()];
    for k in 0..n {
        for (j, cj) in coefficients.iter().enumerate() {
            acc = &acc + &cj[k].mul_scalar(&basis.increments[j][k]);
        }
        if let Some(r) = remainder {
            acc = &acc + &(r.at(k + 1) - r.at(k));
        }
        vals.push(acc.clone());
    }
    MartingaleProcess::new(AdaptedProcess::new(space, vals)?)
}

/// Node-wise least squares of `ΔM` on the active driver increments.
pub fn martingale_decompose(m: &MartingaleProcess, basis: &DriverBasis) -> Result<Decomposition> {
    let space = basis.space.clone();
    if !m.space().same_atoms(&space) || m.steps() != space.steps() {
        return Err(Error::SpaceMismatch);
    }
    let d = m.dim();
    let nd = basis.n_drivers();
    let n_atoms = space.n_atoms();
    let mut coefficients: Vec<Vec<L0Value>> = vec![Vec::with_capacity(space.steps()); nd];
    let mut k_vals = vec![m.at(0).clone()];
    for k in 0..space.steps() {
        let dm = m.at(k + 1) - m.at(k);
        let mut coef = vec![vec![0.0; n_atoms * d]; nd];
        let mut dk = dm.values().to_vec();
        let coarse = space.partition(k);
        for (node, sys) in basis.systems[k].iter().enumerate() {
            let Some(chol) = &sys.chol else { continue };
            let blk = coarse.block(node);
            let wn = space.block_weight(blk);
            for i in 0..d {
                let rhs = DVector::from_iterator(
                    sys.active.len(),
                    sys.active.iter().map(|&j| {
                        blk.iter()
                            .map(|&a| space.weight(a) * basis.increments[j][k].s(a) * dm.at(a)[i])
                            .sum::<f64>()
                            / wn
                    }),
                );
                let c = chol.solve(&rhs);
                for (r, &j) in sys.active.iter().enumerate() {
                    for &a in blk {
                        coef[j][a * d + i] = c[r];
                        dk[a * d + i] -= c[r] * basis.increments[j][k].s(a);
                    }
                }
            }
        }
        for (j, c) in coef.into_iter().enumerate() {
            coefficients[j].push(L0Value::new(&space, d, c)?);
        }
        let prev = k_vals.last().expect("nonempty").clone();
        k_vals.push(&prev + &L0Value::new(&space, d, dk)?);
    }
    let remainder = MartingaleProcess::new(AdaptedProcess::new(&space, k_vals)?)?;
    Ok(Decomposition { kinds: basis.kinds.clone(), coefficients, remainder })
}

/// `E[|M_t|² | F₀] = Σ_{s<t} E[Σ_i c_sⁱᵀ Γ_s c_sⁱ | F₀] + E[|K_t|² | F₀]` at every `t`.
pub fn isometry_check(m: &MartingaleProcess, dec: &Decomposition, basis: &DriverBasis) -> Result<CheckReport> {
    let space = basis.space.clone();
    let base = space.base();
    let d = m.dim();
    let mut rep = CheckReport::new("conditional isometry", 1e-10);
    let mut integrated = L0Value::zeros(&space, 1);
    for t in 0..=space.steps() {
        if t > 0 {
            let k = t - 1;
            let q = L0Value::from_fn(&space, 1, |a| {
                let g = basis.gram(k, a);
                let mut s = 0.0;
                for i in 0..d {
                    let c = DVector::from_iterator(basis.n_drivers(), dec.coefficients.iter().map(|cj| cj[k].at(a)[i]));
                    s += c.dot(&(&g * &c));
                }
                vec![s]
            })?;
            integrated = &integrated + &q;
        }
        let lhs = cond_expect(&m.at(t).dot(m.at(t)), base)?;
        let kt = dec.remainder.at(t);
        let rhs = cond_expect(&(&integrated + &kt.dot(kt)), base)?;
        let scale = 1.0 + lhs.max_abs();
        let dev = lhs.max_abs_diff(&rhs);
        rep.record(dev / scale, || format!("time index {t}: sides differ by {dev:e}"));
    }
    Ok(rep)
}

//! Discrete-time adapted processes, S^p / M^p conditional norms and the
//! conditional Doob, Fubini and orthogonality checks. Martingale
//! representation against random-walk and compensated-jump drivers lives in
//! [`decomposition`].

pub mod decomposition;

use std::sync::Arc;

pub use decomposition::{
    isometry_check, martingale_decompose, stochastic_integral, Decomposition, DriverBasis, DriverKind,
};

use crate::error::{Error, Result};
use crate::l0algebra::Glue;
use crate::probspace::{cond_expect, cond_expect_at, is_measurable, FilteredSpace, L0Value, Partition};
use crate::report::CheckReport;
use crate::rnmodule::engine::ModuleElement;
use crate::rnmodule::CondNorm;

/// Tolerance of the martingale identity, relative to the process scale.
pub const MARTINGALE_TOL: f64 = 1e-12;

/// One value per grid time, `values[k]` measurable w.r.t. `partitions[k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptedProcess {
    space: Arc<FilteredSpace>,
    dim: usize,
    values: Vec<L0Value>,
}

impl AdaptedProcess {
    pub fn new(space: &Arc<FilteredSpace>, values: Vec<L0Value>) -> Result<Self> {
        if values.len() != space.steps() + 1 {
            return Err(Error::DimensionMismatch { expected: space.steps() + 1, found: values.len() });
        }
        let dim = values[0].dim();
        for (k, v) in values.iter().enumerate() {
            if !v.space().same_atoms(space) {
                return Err(Error::SpaceMismatch);
            }
            if v.dim() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: v.dim() });
            }
            if !is_measurable(v, space.partition(k)) {
                return Err(Error::NotMeasurable(format!("process value at time index {k} is not adapted")));
            }
        }
        let values = values.into_iter().map(|v| v.rebase(space)).collect::<Result<_>>()?;
        Ok(AdaptedProcess { space: space.clone(), dim, values })
    }

    /// `f(k, atom)` must already be adapted; this is checked.
    pub fn from_fn(
        space: &Arc<FilteredSpace>,
        dim: usize,
        mut f: impl FnMut(usize, usize) -> Vec<f64>,
    ) -> Result<Self> {
        let values = (0..=space.steps())
            .map(|k| L0Value::from_fn(space, dim, |a| f(k, a)))
            .collect::<Result<Vec<_>>>()?;
        Self::new(space, values)
    }

    pub fn zeros(space: &Arc<FilteredSpace>, dim: usize) -> Self {
        AdaptedProcess { space: space.clone(), dim, values: vec![L0Value::zeros(space, dim); space.steps() + 1] }
    }

    /// The process constantly equal to an F₀-measurable value.
    pub fn constant(v: &L0Value) -> Result<Self> {
        let space = v.space().clone();
        Self::new(&space, vec![v.clone(); space.steps() + 1])
    }

    pub fn space(&self) -> &Arc<FilteredSpace> {
        &self.space
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn values(&self) -> &[L0Value] {
        &self.values
    }

    pub fn at(&self, k: usize) -> &L0Value {
        &self.values[k]
    }

    pub fn initial(&self) -> &L0Value {
        &self.values[0]
    }

    pub fn terminal(&self) -> &L0Value {
        &self.values[self.space.steps()]
    }

    pub fn steps(&self) -> usize {
        self.space.steps()
    }

    fn zip(&self, other: &Self, f: impl Fn(&L0Value, &L0Value) -> L0Value) -> Self {
        assert!(self.space.same_atoms(&other.space) && self.dim == other.dim, "process shape mismatch");
        let values = self.values.iter().zip(&other.values).map(|(a, b)| f(a, b)).collect();
        AdaptedProcess { space: self.space.clone(), dim: self.dim, values }
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.zip(other, |a, b| a - b)
    }

    pub fn scale(&self, c: f64) -> Self {
        let values = self.values.iter().map(|v| v * c).collect();
        AdaptedProcess { space: self.space.clone(), dim: self.dim, values }
    }

    /// Module multiplication by an F₀-measurable scalar.
    pub fn mul_scalar(&self, xi: &L0Value) -> Result<Self> {
        if !xi.is_scalar() || !is_measurable(xi, self.space.base()) {
            return Err(Error::NotMeasurable("multiplier must be an F₀-measurable scalar".into()));
        }
        let values = self.values.iter().map(|v| v.mul_scalar(xi)).collect();
        Ok(AdaptedProcess { space: self.space.clone(), dim: self.dim, values })
    }

    /// `Y - Y_0`, an element of the zero-start subspace.
    pub fn minus_initial(&self) -> Self {
        let y0 = self.values[0].clone();
        let values = self.values.iter().map(|v| v - &y0).collect();
        AdaptedProcess { space: self.space.clone(), dim: self.dim, values }
    }

    /// Per-atom running maximum of `|Y_t|` over the grid.
    pub fn pathwise_max(&self) -> Vec<f64> {
        let n = self.space.n_atoms();
        let mut out = vec![0.0f64; n];
        for v in &self.values {
            for (a, o) in out.iter_mut().enumerate() {
                let x = v.at(a).iter().map(|c| c * c).sum::<f64>().sqrt();
                *o = o.max(x);
            }
        }
        out
    }

    /// Same values seen on a space over the same atoms with the same
    /// grid partitions (e.g. a space with a different start index is not allowed).
    pub fn rebase(&self, space: &Arc<FilteredSpace>) -> Result<Self> {
        if space.steps() != self.space.steps() {
            return Err(Error::SpaceMismatch);
        }
        Self::new(space, self.values.clone())
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(L0Value::is_finite)
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.values.iter().zip(&other.values).fold(0.0, |m, (a, b)| m.max(a.max_abs_diff(b)))
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.max_abs()))
    }
}

impl Glue for AdaptedProcess {
    fn glue(blocks: &Partition, parts: &[&Self]) -> Result<Self> {
        let first = parts.first().ok_or(Error::EmptyFamily)?;
        if parts.iter().any(|p| p.values.len() != first.values.len()) {
            return Err(Error::SpaceMismatch);
        }
        let values = (0..first.values.len())
            .map(|k| {
                let at: Vec<&L0Value> = parts.iter().map(|p| &p.values[k]).collect();
                L0Value::glue(blocks, &at)
            })
            .collect::<Result<Vec<_>>>()?;
        // gluing along an F₀ partition keeps adaptedness; other partitions are checked
        Self::new(&first.space, values)
    }

    fn max_abs_diff(&self, other: &Self) -> f64 {
        AdaptedProcess::max_abs_diff(self, other)
    }

    fn max_abs(&self) -> f64 {
        AdaptedProcess::max_abs(self)
    }
}

impl ModuleElement for AdaptedProcess {
    fn minus(&self, other: &Self) -> Self {
        self.sub(other)
    }

    fn block_norms(&self, norm: &CondNorm) -> Vec<f64> {
        norm.block_norms_of_magnitudes(&self.pathwise_max())
    }
}

/// An adapted process with `E[M_{k+1} | F_k] = M_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct MartingaleProcess {
    inner: AdaptedProcess,
}

impl MartingaleProcess {
    /// Checks the martingale identity to [`MARTINGALE_TOL`] (relative).
    pub fn new(process: AdaptedProcess) -> Result<Self> {
        let scale = 1.0 + process.max_abs();
        for k in 0..process.steps() {
            let e = cond_expect_at(process.at(k + 1), k);
            let dev = e.max_abs_diff(process.at(k));
            if dev > MARTINGALE_TOL * scale {
                return Err(Error::NotMartingale { time: k, deviation: dev });
            }
        }
        Ok(MartingaleProcess { inner: process })
    }

    /// `M_k = E[x | F_k]`.
    pub fn closed_by(x: &L0Value) -> Self {
        let space = x.space().clone();
        let values = (0..=space.steps()).map(|k| cond_expect_at(x, k)).collect();
        MartingaleProcess { inner: AdaptedProcess::new(&space, values).expect("conditional expectations are adapted") }
    }

    pub fn zeros(space: &Arc<FilteredSpace>, dim: usize) -> Self {
        MartingaleProcess { inner: AdaptedProcess::zeros(space, dim) }
    }

    pub fn process(&self) -> &AdaptedProcess {
        &self.inner
    }

    pub fn into_process(self) -> AdaptedProcess {
        self.inner
    }

    pub fn add(&self, other: &Self) -> Self {
        MartingaleProcess { inner: self.inner.add(&other.inner) }
    }

    pub fn sub(&self, other: &Self) -> Self {
        MartingaleProcess { inner: self.inner.sub(&other.inner) }
    }

    pub fn scale(&self, c: f64) -> Self {
        MartingaleProcess { inner: self.inner.scale(c) }
    }

    pub fn mul_scalar(&self, xi: &L0Value) -> Result<Self> {
        Ok(MartingaleProcess { inner: self.inner.mul_scalar(xi)? })
    }
}

impl std::ops::Deref for MartingaleProcess {
    type Target = AdaptedProcess;
    fn deref(&self) -> &AdaptedProcess {
        &self.inner
    }
}

impl Glue for MartingaleProcess {
    fn glue(blocks: &Partition, parts: &[&Self]) -> Result<Self> {
        let inner: Vec<&AdaptedProcess> = parts.iter().map(|p| &p.inner).collect();
        let glued = AdaptedProcess::glue(blocks, &inner)?;
        // F₀-measurable gluing of martingales is a martingale
        if glued.space().base().refines(blocks) {
            return Ok(MartingaleProcess { inner: glued });
        }
        Self::new(glued)
    }

    fn max_abs_diff(&self, other: &Self) -> f64 {
        AdaptedProcess::max_abs_diff(&self.inner, &other.inner)
    }

    fn max_abs(&self) -> f64 {
        AdaptedProcess::max_abs(&self.inner)
    }
}

impl ModuleElement for MartingaleProcess {
    fn minus(&self, other: &Self) -> Self {
        self.sub(other)
    }

    fn block_norms(&self, norm: &CondNorm) -> Vec<f64> {
        self.inner.block_norms(norm)
    }
}

/// `M^V_t = E₀(V) − E_t(V)`; starts at 0 and ends at `E₀(V) − V`.
pub fn martingale_from_terminal(v: &L0Value) -> Result<MartingaleProcess> {
    let space = v.space().clone();
    let e0 = cond_expect_at(v, 0);
    let values = (0..=space.steps()).map(|k| &e0 - &cond_expect_at(v, k)).collect();
    Ok(MartingaleProcess { inner: AdaptedProcess::new(&space, values)? })
}

/// `|||Y|||_p = (E[max_k |Y_k|^p | base])^{1/p}` as a base-measurable scalar.
pub fn sp_norm(y: &AdaptedProcess, p: f64, base: &Partition) -> Result<L0Value> {
    let norm = CondNorm::new(y.space(), p, base.clone())?;
    Ok(norm.to_l0(&y.block_norms(&norm)))
}

/// Doob constant `p/(p−1)`, 1 for `p = ∞`.
pub fn doob_constant(p: f64) -> f64 {
    if p.is_infinite() {
        1.0
    } else {
        p / (p - 1.0)
    }
}

/// `|||M|||_p ≤ C_p |||M_T|||_p` per F₀ block; for `p = ∞` also the reverse.
pub fn doob_check(m: &MartingaleProcess, p: f64) -> Result<CheckReport> {
    let norm = CondNorm::initial(m.space(), p)?;
    let lhs = m.block_norms(&norm);
    let rhs = norm.block_norms(m.terminal());
    let cp = doob_constant(p);
    let mut rep = CheckReport::new(format!("doob p={p}"), 1e-12);
    for b in 0..norm.n_blocks() {
        let scale = 1.0 + rhs[b];
        rep.record((lhs[b] - cp * rhs[b]).max(0.0) / scale, || {
            format!("block {b}: |||M||| = {} > {cp}·{}", lhs[b], rhs[b])
        });
        if p.is_infinite() {
            rep.record((rhs[b] - lhs[b]).max(0.0) / scale, || {
                format!("block {b}: sup-norm of M_T {} exceeds the path norm {}", rhs[b], lhs[b])
            });
        }
    }
    Ok(rep)
}

/// `(V − E₀V, E₀V)` vanishes blockwise and `|||V − E₀V|||₂ ≤ |||V|||₂`.
pub fn cond_orthogonality_check(v: &L0Value) -> Result<CheckReport> {
    let space = v.space();
    let e0 = cond_expect(v, space.base())?;
    let centred = v - &e0;
    let inner = cond_expect(&centred.dot(&e0), space.base())?;
    let norm = CondNorm::initial(space, 2.0)?;
    let nc = norm.block_norms(&centred);
    let nv = norm.block_norms(v);
    let mut rep = CheckReport::new("conditional orthogonality", 1e-12);
    for (b, blk) in space.base().blocks().iter().enumerate() {
        let scale = 1.0 + nv[b] * nv[b];
        let ip = inner.s(blk[0]);
        rep.record(ip.abs() / scale, || format!("block {b}: inner product {ip:e}"));
        rep.record((nc[b] - nv[b]).max(0.0) / (1.0 + nv[b]), || {
            format!("block {b}: |||V − E₀V||| = {} > |||V||| = {}", nc[b], nv[b])
        });
    }
    Ok(rep)
}

/// `E[Σ_x f(·,x) μ(x) | F₀] = Σ_x E[f(·,x) | F₀] μ(x)`, both sides as finite sums.
pub fn cond_fubini_check(f: &[L0Value], mu: &[f64]) -> Result<CheckReport> {
    if f.len() != mu.len() {
        return Err(Error::DimensionMismatch { expected: f.len(), found: mu.len() });
    }
    let first = f.first().ok_or(Error::EmptyFamily)?;
    if let Some(x) = mu.iter().position(|m| !(*m >= 0.0)) {
        return Err(Error::ParameterDomain(format!("mark {x} has negative mass")));
    }
    let space = first.space().clone();
    let d = first.dim();
    for g in f {
        first.check_compatible(g)?;
    }
    let mut rep = CheckReport::new("conditional fubini", 1e-12);
    // rhs: integrate the conditional expectations over marks
    let mut rhs = L0Value::zeros(&space, d);
    for (g, &m) in f.iter().zip(mu) {
        rhs = &rhs + &(&cond_expect(g, space.base())? * m);
    }
    for (b, blk) in space.base().blocks().iter().enumerate() {
        // lhs: atom-outer double sum, then block average
        let mass = space.block_weight(blk);
        let mut lhs = vec![0.0; d];
        for &a in blk {
            let w = space.weight(a);
            for (g, &m) in f.iter().zip(mu) {
                for (l, v) in lhs.iter_mut().zip(g.at(a)) {
                    *l += w * m * v;
                }
            }
        }
        let scale = 1.0 + lhs.iter().fold(0.0f64, |s, v| s.max(v.abs() / mass));
        let r = rhs.at(blk[0]);
        let dev = lhs.iter().zip(r).fold(0.0f64, |s, (l, r)| s.max((l / mass - r).abs()));
        rep.record(dev / scale, || format!("block {b}: sides differ by {dev:e}"));
    }
    Ok(rep)
}

//! Generators `F`, the forward equation of condition (S), and the map
//! `G(V) = ξ + F_T(Y^V, M^V)` whose fixed points are the BSE solutions.
//!
//! The equation solved throughout is
//! `Y_t + F_t(Y,M) + M_t = ξ + F_T(Y,M) + M_T` on the grid, with integral
//! generators discretised as left-endpoint sums `F_{t_k} = Σ_{j<k} f(t_j, ·) Δ`.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::l0algebra::{stability_check, EventPartition, Glue};
use crate::probspace::{cond_expect_at, is_measurable, FilteredSpace, L0Value, Partition};
use crate::processes::{
    doob_constant, martingale_decompose, martingale_from_terminal, AdaptedProcess, DriverBasis, MartingaleProcess,
};
use crate::report::CheckReport;
use crate::rnmodule::engine::ModuleElement;
use crate::rnmodule::{fixed_point_random_contraction, CondNorm, RandomIterCount, SolveReport};

/// A generator `F : S^p × M^p_0 → S^p_0`.
pub trait Generator {
    fn eval(&self, y: &AdaptedProcess, m: &MartingaleProcess) -> Result<AdaptedProcess>;

    /// `false` when `F(Y, M)` ignores `Y` (condition (S) is then trivial).
    fn depends_on_y(&self) -> bool {
        true
    }
}

/// Nonlinearity applied inside the integral driver.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phi {
    Identity,
    Sin,
}

impl Phi {
    fn apply(self, x: f64) -> f64 {
        match self {
            Phi::Identity => x,
            Phi::Sin => x.sin(),
        }
    }
}

/// `f(t, Y, M) = h + c₁ φ(Y_t − Y_0 + M_t) + c₂ (φ(Y_0) + |||M_T|||_p e₁)`,
/// Lipschitz with `(C₁, C₂) = (|c₁|, |c₂|)` in the path and initial/martingale arguments.
#[derive(Debug, Clone)]
pub struct IntegralDriver {
    pub h: L0Value,
    pub c1: L0Value,
    pub c2: L0Value,
    pub phi: Phi,
    pub p: f64,
}

/// `f(t, Y_t, Z_t, U_t) = a + y_lin Y + y_sin sin Y + z_lin Z + z_abs |Z| + u_lin Σ_x U(x)`
/// componentwise, where `(Z, U)` are the coefficients of `M` against `basis`.
/// Optionally restricted to the steps of `window` and weighted per step.
#[derive(Debug, Clone)]
pub struct PointwiseDriver {
    pub constant: L0Value,
    pub y_lin: L0Value,
    pub y_sin: L0Value,
    pub z_lin: L0Value,
    pub z_abs: L0Value,
    pub u_lin: L0Value,
    pub basis: Option<Arc<DriverBasis>>,
    /// Steps `a..b` on which the driver is active.
    pub window: Option<(usize, usize)>,
    /// One F₀-measurable scalar multiplier per step.
    pub step_weights: Option<Vec<L0Value>>,
}

impl PointwiseDriver {
    pub fn zero(space: &Arc<FilteredSpace>, dim: usize) -> Self {
        let z = L0Value::zeros(space, 1);
        PointwiseDriver {
            constant: L0Value::zeros(space, dim),
            y_lin: z.clone(),
            y_sin: z.clone(),
            z_lin: z.clone(),
            z_abs: z.clone(),
            u_lin: z,
            basis: None,
            window: None,
            step_weights: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.constant.dim()
    }

    pub fn with_basis(mut self, basis: Arc<DriverBasis>) -> Self {
        self.basis = Some(basis);
        self
    }

    pub fn uses_y(&self) -> bool {
        self.y_lin.max_abs() > 0.0 || self.y_sin.max_abs() > 0.0
    }

    pub fn uses_zu(&self) -> bool {
        self.z_lin.max_abs() > 0.0 || self.z_abs.max_abs() > 0.0 || self.u_lin.max_abs() > 0.0
    }

    /// `(|y_lin| + |y_sin|)` per atom.
    pub fn lipschitz_y(&self) -> L0Value {
        self.y_lin.zip_map(&self.y_sin, |a, b| a.abs() + b.abs())
    }

    /// Lipschitz constant w.r.t. `|Y| + |||Z||| + |||U|||` with the walk
    /// norm `|Z| √(Var(ΔW)/Δ)` and the jump norm `√(UᵀΓU/Δ)`, per atom,
    /// including the largest step weight.
    pub fn lipschitz_yzu(&self) -> Result<L0Value> {
        let ly = self.lipschitz_y();
        let (rate, jump) = match &self.basis {
            Some(b) => (b.min_walk_rate().unwrap_or(1.0), b.max_jump_sum_factor()),
            None if self.uses_zu() => return Err(Error::Precondition("Z/U driver needs a driver basis".into())),
            None => (1.0, 0.0),
        };
        let n = self.constant.space().n_atoms();
        let wmax: Vec<f64> = (0..n)
            .map(|a| match &self.step_weights {
                Some(w) => w.iter().fold(0.0f64, |m, v| m.max(v.s(a).abs())),
                None => 1.0,
            })
            .collect();
        L0Value::from_fn(self.constant.space(), 1, |a| {
            let lz = (self.z_lin.s(a).abs() + self.z_abs.s(a).abs()) / rate.sqrt();
            let lu = self.u_lin.s(a).abs() * jump.sqrt();
            vec![ly.s(a).max(lz).max(lu) * wmax[a]]
        })
    }

    fn active(&self, k: usize) -> bool {
        self.window.is_none_or(|(a, b)| k >= a && k < b)
    }

    /// `f(t_k, ·)` for every step `k < N` (zero outside the window).
    fn driver_values(&self, y: &AdaptedProcess, m: &MartingaleProcess) -> Result<Vec<L0Value>> {
        let space = y.space();
        let n = space.steps();
        let d = y.dim();
        if self.dim() != d {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: d });
        }
        let dec = if self.uses_zu() {
            let basis = self.basis.as_ref().ok_or_else(|| Error::Precondition("Z/U driver needs a driver basis".into()))?;
            Some((martingale_decompose(m, basis)?, basis.clone()))
        } else {
            None
        };
        let mut out = Vec::with_capacity(n);
        for k in 0..n {
            if !self.active(k) {
                out.push(L0Value::zeros(space, d));
                continue;
            }
            let yk = y.at(k);
            let v = L0Value::from_fn(space, d, |a| {
                let w = self.step_weights.as_ref().map_or(1.0, |w| w[k].s(a));
                let mut f: Vec<f64> = (0..d)
                    .map(|i| {
                        let yi = yk.at(a)[i];
                        self.constant.at(a)[i] + self.y_lin.s(a) * yi + self.y_sin.s(a) * yi.sin()
                    })
                    .collect();
                if let Some((dec, basis)) = &dec {
                    if let Some(z) = dec.z() {
                        for (i, fi) in f.iter_mut().enumerate() {
                            let zi = z[k].at(a)[i];
                            *fi += self.z_lin.s(a) * zi + self.z_abs.s(a) * zi.abs();
                        }
                    }
                    for j in basis.jump_indices() {
                        for (i, fi) in f.iter_mut().enumerate() {
                            *fi += self.u_lin.s(a) * dec.coefficients[j][k].at(a)[i];
                        }
                    }
                }
                f.iter_mut().for_each(|x| *x *= w);
                f
            })?;
            out.push(v);
        }
        Ok(out)
    }
}

/// F₀-measurable nonnegative weights `v_0, …, v_N` on the grid times.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomMeasure {
    base: Partition,
    // weights[block][k]
    weights: Vec<Vec<f64>>,
}

impl RandomMeasure {
    pub fn new(base: &Partition, weights: Vec<Vec<f64>>) -> Result<Self> {
        if weights.len() != base.n_blocks() {
            return Err(Error::DimensionMismatch { expected: base.n_blocks(), found: weights.len() });
        }
        let len = weights[0].len();
        for (b, w) in weights.iter().enumerate() {
            if w.len() != len {
                return Err(Error::DimensionMismatch { expected: len, found: w.len() });
            }
            if w.iter().any(|x| !(*x >= 0.0) || !x.is_finite()) {
                return Err(Error::ParameterDomain(format!("random measure has a negative weight on block {b}")));
            }
        }
        Ok(RandomMeasure { base: base.clone(), weights })
    }

    /// Same measure on every block.
    pub fn deterministic(base: &Partition, weights: Vec<f64>) -> Result<Self> {
        Self::new(base, vec![weights; base.n_blocks()])
    }

    pub fn base(&self) -> &Partition {
        &self.base
    }

    pub fn weights(&self, block: usize) -> &[f64] {
        &self.weights[block]
    }

    fn at(&self, atom: usize, k: usize) -> f64 {
        self.weights[self.base.block_of(atom)].get(k).copied().unwrap_or(0.0)
    }

    /// `v([0, T])` as an F₀-measurable scalar.
    pub fn total(&self, space: &Arc<FilteredSpace>) -> L0Value {
        L0Value::from_fn(space, 1, |a| vec![self.weights[self.base.block_of(a)].iter().sum()]).expect("scalar")
    }

    /// `w_m = Σ_{i ≤ N−1−m} v_i`, the weight of step `m` after swapping the
    /// double sum `Σ_{j<N} Σ_{i≤j} v_i g_{j−i}`.
    pub fn swapped_weights(&self, space: &Arc<FilteredSpace>) -> Vec<L0Value> {
        let n = space.steps();
        (0..n)
            .map(|m| {
                L0Value::from_fn(space, 1, |a| vec![(0..n - m).map(|i| self.at(a, i)).sum()]).expect("scalar")
            })
            .collect()
    }
}

/// The generator catalog.
#[derive(Debug, Clone)]
pub enum GeneratorSpec {
    Zero { dim: usize },
    Integral(IntegralDriver),
    Pointwise(PointwiseDriver),
    /// `F_t(M) = Σ_{j<k} Δ Σ_{i≤j} v_i g(Z_{j−i}, U_{j−i})`.
    Delayed { g: PointwiseDriver, v: RandomMeasure },
    /// `F_t(Y, M) = a (t − t_0) Y_0`.
    PathFunctional { a: L0Value },
    /// `F_t(Y, M) = (1/(2C_p)) proj_B((t/T)(Y_0 − M_t))`, the projection onto
    /// the centred ball of F₀-measurable radius `B` (bounded, 1-Lipschitz, fixes 0).
    BoundedLipschitz { bound: L0Value, p: f64 },
}

fn check_f0(name: &str, c: &L0Value, base: &Partition) -> Result<()> {
    if !is_measurable(c, base) {
        return Err(Error::NotMeasurable(format!("parameter `{name}` is not F₀-measurable")));
    }
    Ok(())
}

/// Euclidean projection onto the ball of radius `r`.
fn project(v: &mut [f64], r: f64) {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > r {
        let s = if n > 0.0 { r / n } else { 0.0 };
        v.iter_mut().for_each(|x| *x *= s);
    }
}

fn cumulative(space: &Arc<FilteredSpace>, f: &[L0Value], d: usize) -> Result<AdaptedProcess> {
    let dt = space.delta();
    let mut acc = L0Value::zeros(space, d);
    let mut vals = Vec::with_capacity(f.len() + 1);
    vals.push(acc.clone());
    for fk in f {
        acc = &acc + &(fk * dt);
        vals.push(acc.clone());
    }
    AdaptedProcess::new(space, vals)
}

impl GeneratorSpec {
    pub fn dim(&self) -> usize {
        match self {
            GeneratorSpec::Zero { dim } => *dim,
            GeneratorSpec::Integral(d) => d.h.dim(),
            GeneratorSpec::Pointwise(d) => d.dim(),
            GeneratorSpec::Delayed { g, .. } => g.dim(),
            GeneratorSpec::PathFunctional { .. } | GeneratorSpec::BoundedLipschitz { .. } => 0,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            GeneratorSpec::Zero { .. } => "zero",
            GeneratorSpec::Integral(_) => "integral",
            GeneratorSpec::Pointwise(_) => "pointwise",
            GeneratorSpec::Delayed { .. } => "delayed",
            GeneratorSpec::PathFunctional { .. } => "path-functional",
            GeneratorSpec::BoundedLipschitz { .. } => "bounded-lipschitz",
        }
    }

    /// Checks parameter shapes and F₀-measurability against `space`.
    pub fn validate(&self, space: &FilteredSpace) -> Result<()> {
        let base = space.base();
        let scalar = |name: &str, c: &L0Value| -> Result<()> {
            if !c.is_scalar() {
                return Err(Error::ParameterDomain(format!("parameter `{name}` must be scalar")));
            }
            if c.space().n_atoms() != space.n_atoms() {
                return Err(Error::SpaceMismatch);
            }
            check_f0(name, c, base)
        };
        match self {
            GeneratorSpec::Zero { dim } if *dim == 0 => Err(Error::ParameterDomain("dimension must be positive".into())),
            GeneratorSpec::Zero { .. } => Ok(()),
            GeneratorSpec::Integral(d) => {
                if !(d.p > 1.0) {
                    return Err(Error::InvalidExponent(d.p));
                }
                check_f0("h", &d.h, base)?;
                scalar("c1", &d.c1)?;
                scalar("c2", &d.c2)
            }
            GeneratorSpec::Pointwise(d) | GeneratorSpec::Delayed { g: d, .. } => {
                check_f0("constant", &d.constant, base)?;
                for (name, c) in
                    [("y_lin", &d.y_lin), ("y_sin", &d.y_sin), ("z_lin", &d.z_lin), ("z_abs", &d.z_abs), ("u_lin", &d.u_lin)]
                {
                    scalar(name, c)?;
                }
                if let Some(w) = &d.step_weights {
                    if w.len() != space.steps() {
                        return Err(Error::DimensionMismatch { expected: space.steps(), found: w.len() });
                    }
                    for c in w {
                        scalar("step_weights", c)?;
                    }
                }
                if let GeneratorSpec::Delayed { v, .. } = self {
                    if d.uses_y() {
                        return Err(Error::ParameterDomain("delayed driver must not depend on Y".into()));
                    }
                    if !base.refines(v.base()) {
                        return Err(Error::NotMeasurable("random measure is not F₀-measurable".into()));
                    }
                }
                Ok(())
            }
            GeneratorSpec::PathFunctional { a } => scalar("a", a),
            GeneratorSpec::BoundedLipschitz { bound, p } => {
                if !(*p > 1.0) {
                    return Err(Error::InvalidExponent(*p));
                }
                scalar("bound", bound)?;
                if bound.values().iter().any(|b| !(*b >= 0.0)) {
                    return Err(Error::ParameterDomain("bound must be nonnegative".into()));
                }
                Ok(())
            }
        }
    }
}

impl Generator for GeneratorSpec {
    fn eval(&self, y: &AdaptedProcess, m: &MartingaleProcess) -> Result<AdaptedProcess> {
        let space = y.space().clone();
        if !m.space().same_atoms(&space) || m.steps() != y.steps() {
            return Err(Error::SpaceMismatch);
        }
        if m.dim() != y.dim() {
            return Err(Error::DimensionMismatch { expected: y.dim(), found: m.dim() });
        }
        self.validate(&space)?;
        let d = y.dim();
        let n = space.steps();
        match self {
            GeneratorSpec::Zero { .. } => Ok(AdaptedProcess::zeros(&space, d)),
            GeneratorSpec::Integral(drv) => {
                if drv.h.dim() != d {
                    return Err(Error::DimensionMismatch { expected: drv.h.dim(), found: d });
                }
                let norm = CondNorm::initial(&space, drv.p)?;
                let kappa = norm.to_l0(&m.terminal().block_norms(&norm));
                let y0 = y.initial();
                let f: Vec<L0Value> = (0..n)
                    .map(|k| {
                        let path = &(y.at(k) - y0) + m.at(k);
                        L0Value::from_fn(&space, d, |a| {
                            (0..d)
                                .map(|i| {
                                    let e1 = if i == 0 { kappa.s(a) } else { 0.0 };
                                    drv.h.at(a)[i]
                                        + drv.c1.s(a) * drv.phi.apply(path.at(a)[i])
                                        + drv.c2.s(a) * (drv.phi.apply(y0.at(a)[i]) + e1)
                                })
                                .collect()
                        })
                    })
                    .collect::<Result<_>>()?;
                cumulative(&space, &f, d)
            }
            GeneratorSpec::Pointwise(drv) => cumulative(&space, &drv.driver_values(y, m)?, d),
            GeneratorSpec::Delayed { g, v } => {
                let gm = g.driver_values(y, m)?;
                let f: Vec<L0Value> = (0..n)
                    .map(|j| {
                        let mut acc = L0Value::zeros(&space, d);
                        for i in 0..=j {
                            let vi = L0Value::from_fn(&space, 1, |a| vec![v.at(a, i)])?;
                            acc = &acc + &gm[j - i].mul_scalar(&vi);
                        }
                        Ok(acc)
                    })
                    .collect::<Result<_>>()?;
                cumulative(&space, &f, d)
            }
            GeneratorSpec::PathFunctional { a } => {
                let ay0 = y.initial().mul_scalar(a);
                let vals = (0..=n).map(|k| &ay0 * space.elapsed(k)).collect();
                AdaptedProcess::new(&space, vals)
            }
            GeneratorSpec::BoundedLipschitz { bound, p } => {
                let scale = 1.0 / (2.0 * doob_constant(*p));
                let horizon = space.horizon();
                let vals = (0..=n)
                    .map(|k| {
                        let r = space.elapsed(k) / horizon;
                        let x = &(y.initial() - m.at(k)) * r;
                        x.map_atoms(d, |a, v| {
                            let mut v = v.to_vec();
                            project(&mut v, bound.s(a));
                            v.iter_mut().for_each(|c| *c *= scale);
                            v
                        })
                    })
                    .collect();
                AdaptedProcess::new(&space, vals)
            }
        }
    }

    fn depends_on_y(&self) -> bool {
        match self {
            GeneratorSpec::Zero { .. } | GeneratorSpec::Delayed { .. } => false,
            GeneratorSpec::Pointwise(d) => d.uses_y(),
            _ => true,
        }
    }
}

/// `F(Y, M)` with argument checks.
pub fn eval_generator(f: &dyn Generator, y: &AdaptedProcess, m: &MartingaleProcess) -> Result<AdaptedProcess> {
    let out = f.eval(y, m)?;
    if out.initial().max_abs() != 0.0 {
        return Err(Error::Precondition("generator does not start at zero".into()));
    }
    Ok(out)
}

/// `F^{(k)}(Y, M) = F(Y^{(k,M)}, M)` with `Y^{(1,M)} = Y`,
/// `Y^{(k,M)} = Y_0 − F(Y^{(k−1,M)}, M) − M`.
pub fn iterate_generator(f: &dyn Generator, y: &AdaptedProcess, m: &MartingaleProcess, k: usize) -> Result<AdaptedProcess> {
    let y0 = AdaptedProcess::constant(y.initial())?;
    let mut cur = y.clone();
    for _ in 1..k {
        cur = y0.sub(&f.eval(&cur, m)?).sub(m.process());
    }
    f.eval(&cur, m)
}

/// `F^{(L)}(Y, M) = Σ_k Ĩ_{L=k} F^{(k)}(Y, M)`.
pub fn iterate_generator_random(
    f: &dyn Generator,
    y: &AdaptedProcess,
    m: &MartingaleProcess,
    l: &RandomIterCount,
) -> Result<AdaptedProcess> {
    let kmax = l.max();
    let y0 = AdaptedProcess::constant(y.initial())?;
    let mut iterates = Vec::with_capacity(kmax);
    let mut cur = y.clone();
    for k in 1..=kmax {
        let fk = f.eval(&cur, m)?;
        if k < kmax {
            cur = y0.sub(&fk).sub(m.process());
        }
        iterates.push(fk);
    }
    let parts: Vec<&AdaptedProcess> = l.per_block().iter().map(|&k| &iterates[k - 1]).collect();
    AdaptedProcess::glue(l.base(), &parts)
}

/// Random iteration count and contraction factor used for the forward equation.
#[derive(Debug, Clone)]
pub struct InnerPlan {
    pub l: RandomIterCount,
    pub factor: L0Value,
    pub p: f64,
    pub max_iter: usize,
}

impl InnerPlan {
    /// For causal generators `J` is nilpotent of order `N`: `L ≡ N`, factor 0.
    pub fn causal(space: &Arc<FilteredSpace>, p: f64) -> Result<Self> {
        Ok(InnerPlan {
            l: RandomIterCount::uniform(space.base(), space.steps().max(1))?,
            factor: L0Value::zeros(space, 1),
            p,
            max_iter: 200,
        })
    }
}

/// Smallest conditional atom probability, `min_a w_a / w(block(a))`.
pub fn min_cond_weight(space: &FilteredSpace, base: &Partition) -> f64 {
    (0..space.n_atoms())
        .map(|a| space.weight(a) / space.block_weight(base.block(base.block_of(a))))
        .fold(1.0, f64::min)
}

/// Converts a max-abs tolerance into a conditional-norm tolerance that implies it.
pub fn norm_tolerance(space: &FilteredSpace, base: &Partition, p: f64, tol: f64) -> f64 {
    if p.is_infinite() {
        tol
    } else {
        tol * min_cond_weight(space, base).powf(1.0 / p)
    }
}

/// Solves `Y = y − F(Y, M) − M` by iterating `J^{(L)}`; `y` must be F₀-measurable.
pub fn solve_condition_s(
    f: &dyn Generator,
    y: &L0Value,
    m: &MartingaleProcess,
    tol: f64,
    plan: &InnerPlan,
) -> Result<(AdaptedProcess, SolveReport)> {
    let space = m.space().clone();
    if !is_measurable(y, space.base()) {
        return Err(Error::NotMeasurable("initial value must be F₀-measurable".into()));
    }
    let yc = AdaptedProcess::constant(&y.rebase(&space)?)?;
    let start = yc.sub(m.process());
    let norm = CondNorm::new(&space, plan.p, plan.l.base().clone())?;
    let ntol = norm_tolerance(&space, norm.base(), plan.p, tol);
    let j = |x: &AdaptedProcess| -> Result<AdaptedProcess> { Ok(yc.sub(&f.eval(x, m)?).sub(m.process())) };
    if !f.depends_on_y() {
        let out = j(&start)?;
        let mut rep = SolveReport::empty(norm.n_blocks());
        rep.status = crate::rnmodule::Status::Converged;
        rep.iterations = 1;
        rep.map_evaluations = 1;
        rep.final_residual = vec![0.0; norm.n_blocks()];
        return Ok((out, rep));
    }
    let (sol, rep) = fixed_point_random_contraction(j, &plan.l, &plan.factor, start, &norm, ntol, plan.max_iter)?;
    rep.ensure_converged()?;
    Ok((sol, rep))
}

/// A candidate or verified solution `(Y, M)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BseSolution {
    pub y: AdaptedProcess,
    pub m: MartingaleProcess,
}

impl BseSolution {
    /// `|Y_t + F_t + M_t − ξ − F_T − M_T|` maximised over atoms, one entry per grid time.
    pub fn residuals(&self, f: &dyn Generator, xi: &L0Value) -> Result<Vec<f64>> {
        let fy = f.eval(&self.y, &self.m)?;
        let n = self.y.steps();
        let rhs = &(xi + fy.at(n)) + self.m.at(n);
        Ok((0..=n).map(|t| (&(self.y.at(t) + fy.at(t)) + self.m.at(t)).max_abs_diff(&rhs)).collect())
    }

    pub fn residual(&self, f: &dyn Generator, xi: &L0Value) -> Result<f64> {
        Ok(self.residuals(f, xi)?.into_iter().fold(0.0, f64::max))
    }

    pub fn max_abs_diff(&self, other: &BseSolution) -> f64 {
        self.y.max_abs_diff(&other.y).max(self.m.max_abs_diff(&other.m))
    }
}

impl Glue for BseSolution {
    fn glue(blocks: &Partition, parts: &[&Self]) -> Result<Self> {
        let ys: Vec<&AdaptedProcess> = parts.iter().map(|p| &p.y).collect();
        let ms: Vec<&MartingaleProcess> = parts.iter().map(|p| &p.m).collect();
        Ok(BseSolution { y: AdaptedProcess::glue(blocks, &ys)?, m: MartingaleProcess::glue(blocks, &ms)? })
    }

    fn max_abs_diff(&self, other: &Self) -> f64 {
        BseSolution::max_abs_diff(self, other)
    }

    fn max_abs(&self) -> f64 {
        self.y.max_abs().max(self.m.max_abs())
    }
}

/// `φ(V) = (Y^V, M^V)`.
pub fn phi(f: &dyn Generator, v: &L0Value, tol: f64, plan: &InnerPlan) -> Result<BseSolution> {
    let m = martingale_from_terminal(v)?;
    let y0 = cond_expect_at(v, 0);
    let (y, _) = solve_condition_s(f, &y0, &m, tol, plan)?;
    Ok(BseSolution { y, m })
}

/// `π(Y, M) = Y_0 − M_T`.
pub fn pi(y: &AdaptedProcess, m: &MartingaleProcess) -> L0Value {
    y.initial() - m.terminal()
}

/// `G(V) = ξ + F_T(Y^V, M^V)`.
pub fn g_map(f: &dyn Generator, xi: &L0Value, v: &L0Value, tol: f64, plan: &InnerPlan) -> Result<L0Value> {
    let sol = phi(f, v, tol, plan)?;
    let ft = f.eval(&sol.y, &sol.m)?;
    Ok(xi + ft.terminal())
}

/// `G₀(V) = G(V) − E₀ G(V)` on the zero-mean submodule, for Y-independent `F`.
pub fn g0_map(f: &dyn Generator, xi: &L0Value, v: &L0Value) -> Result<L0Value> {
    if f.depends_on_y() {
        return Err(Error::Precondition("G₀ needs a generator that does not depend on Y".into()));
    }
    let e0 = cond_expect_at(v, 0);
    if e0.max_abs() > 1e-12 * (1.0 + v.max_abs()) {
        return Err(Error::Precondition("V must satisfy E₀V = 0".into()));
    }
    let m = MartingaleProcess::closed_by(v).scale(-1.0);
    let ft = f.eval(&AdaptedProcess::zeros(v.space(), v.dim()), &m)?;
    let g = xi + ft.terminal();
    Ok(&g - &cond_expect_at(&g, 0))
}

/// `M_t = −E_t V`, `Y_t = E₀ξ + E₀F_T(M) − F_t(M) − M_t` from a zero-mean `V`.
pub fn reconstruct_from_g0(f: &dyn Generator, xi: &L0Value, v: &L0Value) -> Result<BseSolution> {
    let space = v.space().clone();
    let m = MartingaleProcess::closed_by(v).scale(-1.0);
    let fm = f.eval(&AdaptedProcess::zeros(&space, v.dim()), &m)?;
    let c = &cond_expect_at(xi, 0) + &cond_expect_at(fm.terminal(), 0);
    let vals = (0..=space.steps()).map(|t| &(&c - fm.at(t)) - m.at(t)).collect();
    Ok(BseSolution { y: AdaptedProcess::new(&space, vals)?, m })
}

/// Checks `F(Σ Ĩ_{A_n}(Y⁽ⁿ⁾,M⁽ⁿ⁾)) = Σ Ĩ_{A_n} F(Y⁽ⁿ⁾,M⁽ⁿ⁾)` and the same identity for `G`.
pub fn generator_stability_check(
    f: &dyn Generator,
    xi: &L0Value,
    pairs: &[(EventPartition, Vec<(AdaptedProcess, MartingaleProcess)>)],
    vs: &[(EventPartition, Vec<L0Value>)],
    tol: f64,
    plan: &InnerPlan,
) -> Result<CheckReport> {
    let mut rep = stability_check(|(y, m): &(AdaptedProcess, MartingaleProcess)| f.eval(y, m), pairs)?;
    rep.name = "generator stability".into();
    let grep = stability_check(|v: &L0Value| g_map(f, xi, v, tol, plan), vs)?;
    rep.merge(grep);
    Ok(rep)
}

impl ModuleElement for BseSolution {
    fn minus(&self, other: &Self) -> Self {
        BseSolution { y: self.y.sub(&other.y), m: self.m.sub(&other.m) }
    }

    fn block_norms(&self, norm: &CondNorm) -> Vec<f64> {
        let a = self.y.block_norms(norm);
        let b = self.m.block_norms(norm);
        a.iter().zip(&b).map(|(x, y)| x + y).collect()
    }
}

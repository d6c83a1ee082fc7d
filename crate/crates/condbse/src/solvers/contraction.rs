//! Picard iteration on `G` under a contraction budget, and the integral
//! driver solver that derives its budget from `(C₁, C₂)`.

use std::sync::Arc;

use serde::Serialize;

use super::{block_max, Mode};
use crate::bsecore::{
    g_map, iterate_generator_random, norm_tolerance, phi, BseSolution, Generator, GeneratorSpec, InnerPlan,
};
use crate::error::{Error, Result};
use crate::l0algebra::{consecutive_grouping, stability_check};
use crate::probspace::{FilteredSpace, L0Value, Partition};
use crate::processes::{doob_constant, AdaptedProcess, MartingaleProcess};
use crate::report::CheckReport;
use crate::rnmodule::engine::ModuleElement;
use crate::rnmodule::{fixed_point_random_contraction_with, CondNorm, RandomIterCount, SolveReport};
use crate::sampling;

/// Strict inequalities `a < b` are enforced as `a < b − STRICT_MARGIN`.
pub const STRICT_MARGIN: f64 = 1e-9;

/// Slack on observed contraction ratios.
pub const RATIO_SLACK: f64 = 0.05;

/// `c₂ = 1/5`, `c_∞ = 1/4`, `c_p = (p−1)/(4p−1)`.
pub fn threshold(p: f64) -> f64 {
    if p == 2.0 {
        0.2
    } else if p.is_infinite() {
        0.25
    } else {
        (p - 1.0) / (4.0 * p - 1.0)
    }
}

/// Contraction coefficient `C` of `F^{(L)}` and the iteration count `L`, per block of a base.
#[derive(Debug, Clone, PartialEq)]
pub struct ContractionBudget {
    p: f64,
    base: Partition,
    c: Vec<f64>,
    l: RandomIterCount,
}

#[derive(Debug, Clone, Serialize)]
struct BudgetSummary<'a> {
    p: f64,
    c_p: f64,
    c: &'a [f64],
    l: &'a [usize],
    outer_factor: Vec<f64>,
}

impl ContractionBudget {
    /// `c` is read per block of `l.base()`; every block must satisfy `C < c_p`.
    pub fn new(space: &Arc<FilteredSpace>, p: f64, c: &L0Value, l: RandomIterCount) -> Result<Self> {
        let base = l.base().clone();
        if !crate::probspace::is_measurable(c, &base) {
            return Err(Error::NotMeasurable("contraction coefficient is not measurable on the budget base".into()));
        }
        let per = block_max(c, &base);
        Self::from_blocks(space, p, &base, per, l.per_block().to_vec())
    }

    pub fn from_blocks(
        space: &Arc<FilteredSpace>,
        p: f64,
        base: &Partition,
        c: Vec<f64>,
        l: Vec<usize>,
    ) -> Result<Self> {
        if !(p > 1.0) {
            return Err(Error::InvalidExponent(p));
        }
        if !space.base().refines(base) {
            return Err(Error::IncompatiblePartition("budget base is not F₀-measurable".into()));
        }
        if c.len() != base.n_blocks() {
            return Err(Error::DimensionMismatch { expected: base.n_blocks(), found: c.len() });
        }
        let cp = threshold(p);
        for (b, &cb) in c.iter().enumerate() {
            if !(cb >= 0.0) || !cb.is_finite() {
                return Err(Error::BudgetViolated { block: b, detail: format!("C = {cb} is not a nonnegative number") });
            }
            if cb >= cp - STRICT_MARGIN {
                return Err(Error::BudgetViolated { block: b, detail: format!("C = {cb} is not below c_p = {cp}") });
            }
        }
        let l = RandomIterCount::new(base, l)?;
        Ok(ContractionBudget { p, base: base.clone(), c, l })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn c_p(&self) -> f64 {
        threshold(self.p)
    }

    pub fn base(&self) -> &Partition {
        &self.base
    }

    pub fn c(&self) -> &[f64] {
        &self.c
    }

    pub fn l(&self) -> &RandomIterCount {
        &self.l
    }

    /// `4C/(1−C)` for `p = 2`, `3 C_p C/(1−C)` otherwise.
    pub fn outer_factor(&self) -> Vec<f64> {
        let k = if self.p == 2.0 { 4.0 } else { 3.0 * doob_constant(self.p) };
        self.c.iter().map(|c| k * c / (1.0 - c)).collect()
    }

    fn to_l0(&self, space: &Arc<FilteredSpace>, per: &[f64]) -> L0Value {
        L0Value::from_blocks(space, &self.base, per).expect("one value per block")
    }

    fn summary(&self) -> BudgetSummary<'_> {
        BudgetSummary { p: self.p, c_p: self.c_p(), c: &self.c, l: self.l.per_block(), outer_factor: self.outer_factor() }
    }
}

/// Samples the stability identity for `F` on two-way splits of the base.
fn sampled_stability(f: &dyn Generator, space: &Arc<FilteredSpace>, base: &Partition, d: usize) -> Result<Option<CheckReport>> {
    if base.n_blocks() < 2 {
        return Ok(None);
    }
    let labels: Vec<usize> = (0..space.base().n_blocks())
        .map(|b| base.block_of(space.base().block(b)[0]) % 2)
        .collect();
    let split = crate::l0algebra::EventPartition::from_grouping(space, 0, &labels)
        .or_else(|_| consecutive_grouping(space, 0, 2))?;
    let mut rng = sampling::rng(0x5eed);
    let pairs: Vec<(AdaptedProcess, MartingaleProcess)> = (0..split.n_blocks())
        .map(|_| (sampling::random_adapted(&mut rng, space, d, 1.0), sampling::random_martingale(&mut rng, space, d, 1.0)))
        .collect();
    let rep = stability_check(|(y, m): &(AdaptedProcess, MartingaleProcess)| f.eval(y, m), &[(split, pairs)])?;
    Ok(Some(rep))
}

/// [`solve_bse_contraction_from`] started at `V₀ = ξ`.
pub fn solve_bse_contraction(
    f: &dyn Generator,
    xi: &L0Value,
    budget: &ContractionBudget,
    tol: f64,
    max_iter: usize,
) -> Result<(BseSolution, SolveReport)> {
    solve_bse_contraction_from(f, xi, budget, tol, max_iter, xi)
}

/// Picard iteration `V ← G(V)` from `start`; returns `φ(V*)` with equation residual ≤ `tol`.
///
/// The forward equation inside `G` is solved with the budget's `L` and `C`.
/// Step ratios above the outer factor plus 0.05 are recorded in
/// `extra["ratio_check_passed"]`.
pub fn solve_bse_contraction_from(
    f: &dyn Generator,
    xi: &L0Value,
    budget: &ContractionBudget,
    tol: f64,
    max_iter: usize,
    start: &L0Value,
) -> Result<(BseSolution, SolveReport)> {
    if !(tol > 0.0) {
        return Err(Error::ParameterDomain(format!("tolerance must be positive, got {tol}")));
    }
    let space = xi.space().clone();
    let p = budget.p;
    if !space.base().refines(&budget.base) {
        return Err(Error::IncompatiblePartition("budget base is not F₀-measurable".into()));
    }
    let stab = sampled_stability(f, &space, &budget.base, xi.dim())?;
    if let Some(r) = &stab {
        if !r.passed {
            return Err(Error::Precondition(format!("generator failed the sampled stability check ({:e})", r.worst)));
        }
    }
    let plan = InnerPlan {
        l: budget.l.clone(),
        factor: budget.to_l0(&space, &budget.c),
        p,
        max_iter: 2000,
    };
    let inner_tol = tol / 10.0;
    let norm = CondNorm::new(&space, p, budget.base.clone())?;
    let ntol = norm_tolerance(&space, &budget.base, p, tol / 2.0);
    let factor = budget.outer_factor();
    let factor_l0 = budget.to_l0(&space, &factor);
    let l_outer = RandomIterCount::uniform(&budget.base, 1)?;
    let g = |v: &L0Value| g_map(f, xi, v, inner_tol, &plan);
    let (v, mut rep) =
        fixed_point_random_contraction_with(g, &l_outer, &factor_l0, start.clone(), &norm, ntol, max_iter, 100.0 * ntol)?;
    rep.iteration_count = budget.l.per_block().to_vec();
    rep.set_extra("budget", budget.summary());
    if let Some(r) = stab {
        rep.set_extra("stability_worst", r.worst);
    }
    rep.ensure_converged()?;
    let sol = phi(f, &v, inner_tol, &plan)?;
    let residual = sol.residual(f, xi)?;
    let within = rep.max_observed_ratio.iter().zip(&factor).all(|(r, b)| *r <= b + RATIO_SLACK);
    rep.set_extra("bse_residual", residual);
    rep.set_extra("ratio_check_passed", within);
    if residual > tol {
        return Err(Error::NonConvergence { iterations: rep.iterations, residual });
    }
    Ok((sol, rep))
}

/// `B_k = 2(C₁T)^k/k! + (e^{C₁T}−1)C₂/C₁`; returns the smallest `k` with
/// `B_k < c_p` and `B_k` itself, or the violated condition.
pub fn integral_iteration_counts(c1: f64, c2: f64, t: f64, p: f64, block: usize) -> Result<(usize, f64)> {
    let cp = threshold(p);
    if !(c1 > 0.0) || !(c2 >= 0.0) {
        return Err(Error::ParameterDomain(format!("need C₁ > 0 and C₂ ≥ 0 (block {block})")));
    }
    let coupling = (c1 * t).exp_m1() * c2 / c1;
    if coupling >= cp - STRICT_MARGIN {
        return Err(Error::BudgetViolated {
            block,
            detail: format!("C₂ = {c2} is not below c_p C₁/(e^{{C₁T}}−1) = {}", cp * c1 / (c1 * t).exp_m1()),
        });
    }
    let mut term = 1.0;
    for k in 1..=10_000usize {
        term *= c1 * t / k as f64;
        let b = 2.0 * term + coupling;
        if b < cp - STRICT_MARGIN {
            return Ok((k, b));
        }
    }
    Err(Error::BudgetViolated { block, detail: "no iteration count below 10000".into() })
}

/// Lipschitz pair `(C₁, C₂)` per atom for integral-form drivers.
fn integral_constants(f: &GeneratorSpec, p: f64) -> Result<(L0Value, L0Value)> {
    match f {
        GeneratorSpec::Integral(d) => {
            if d.p != p {
                return Err(Error::ParameterDomain(format!("driver exponent {} differs from solve exponent {p}", d.p)));
            }
            Ok((d.c1.map(f64::abs), d.c2.map(f64::abs)))
        }
        GeneratorSpec::Pointwise(d) if !d.uses_zu() => {
            // |f(Y_t) − f(Y'_t)| ≤ L|Y_t − Y'_t| and Y_t = (Y − Y_0 + M)_t + Y_0 − M_t
            let mut l = d.lipschitz_y();
            if let Some(w) = &d.step_weights {
                let wmax = w.iter().fold(L0Value::zeros(l.space(), 1), |m, x| m.zip_map(x, |a, b| a.max(b.abs())));
                l = l.zip_map(&wmax, |a, b| a * b);
            }
            Ok((l.clone(), l))
        }
        _ => Err(Error::Precondition(format!("`{}` generator has no integral Lipschitz pair", f.kind()))),
    }
}

/// Blockwise `L` and `C = B_L` for an integral-form driver on `space`.
pub fn integral_budget(f: &GeneratorSpec, space: &Arc<FilteredSpace>, p: f64, mode: Mode) -> Result<ContractionBudget> {
    f.validate(space)?;
    let (c1, c2) = integral_constants(f, p)?;
    let base = mode.base(space);
    let t = space.horizon();
    let c1b = block_max(&c1, &base);
    let c2b = block_max(&c2, &base);
    let mut cs = Vec::with_capacity(base.n_blocks());
    let mut ls = Vec::with_capacity(base.n_blocks());
    for b in 0..base.n_blocks() {
        // any larger C₁ is also a Lipschitz constant
        let (l, c) = integral_iteration_counts(c1b[b].max(1e-6), c2b[b], t, p, b)?;
        cs.push(c);
        ls.push(l);
    }
    ContractionBudget::from_blocks(space, p, &base, cs, ls)
}

/// Integral-form BSDE with Lipschitz pair `(C₁, C₂)`: derives the blockwise
/// `L` and `C = B_L` and delegates to [`solve_bse_contraction`]. The bound
/// on `F^{(L)}` is checked on sampled pairs.
pub fn solve_bsde_integral(
    f: &GeneratorSpec,
    xi: &L0Value,
    p: f64,
    tol: f64,
    mode: Mode,
) -> Result<(BseSolution, SolveReport)> {
    solve_bsde_integral_from(f, xi, p, tol, mode, xi)
}

/// [`solve_bsde_integral`] with the Picard iteration started at `start`.
pub fn solve_bsde_integral_from(
    f: &GeneratorSpec,
    xi: &L0Value,
    p: f64,
    tol: f64,
    mode: Mode,
    start: &L0Value,
) -> Result<(BseSolution, SolveReport)> {
    let space = xi.space().clone();
    let budget = integral_budget(f, &space, p, mode)?;
    let check = iterate_bound_check(f, &budget, &space, xi.dim())?;
    if !check.passed {
        return Err(Error::Precondition(format!("iterate bound violated on sampled pairs ({:e})", check.worst)));
    }
    let (sol, mut rep) = solve_bse_contraction_from(f, xi, &budget, tol, 1000, start)?;
    rep.set_extra("iterate_bound_worst", check.worst);
    rep.set_extra("mode", mode);
    Ok((sol, rep))
}

/// `|||F^{(L)}(Y,M) − F^{(L)}(Y',M')|||_p ≤ C(|||Y−Y'|||_p + |||M−M'|||_p)` on seeded samples.
pub fn iterate_bound_check(
    f: &dyn Generator,
    budget: &ContractionBudget,
    space: &Arc<FilteredSpace>,
    d: usize,
) -> Result<CheckReport> {
    let norm = CondNorm::new(space, budget.p, budget.base.clone())?;
    let l = budget.l.clone();
    let mut rep = CheckReport::new("iterate bound", 1e-10);
    let mut rng = sampling::rng(0xb0d);
    for i in 0..4 {
        let scale = 0.5 + i as f64;
        let (y, m) = (sampling::random_adapted(&mut rng, space, d, scale), sampling::random_martingale(&mut rng, space, d, scale));
        let (y2, m2) = (sampling::random_adapted(&mut rng, space, d, 1.0), sampling::random_martingale(&mut rng, space, d, 1.0));
        let a = iterate_generator_random(f, &y, &m, &l)?;
        let b = iterate_generator_random(f, &y2, &m2, &l)?;
        let lhs = a.minus(&b).block_norms(&norm);
        let dy = y.minus(&y2).block_norms(&norm);
        let dm = m.minus(&m2).block_norms(&norm);
        for blk in 0..norm.n_blocks() {
            let rhs = budget.c[blk] * (dy[blk] + dm[blk]);
            let excess = (lhs[blk] - rhs) / (1.0 + rhs);
            rep.record(excess.max(0.0), || format!("sample {i}, block {blk}: {} > {rhs}", lhs[blk]));
        }
    }
    Ok(rep)
}

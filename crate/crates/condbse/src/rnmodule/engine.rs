//! Random contraction engine: iterate `x ← T^(L)(x)` where
//! `T^(L)(x) = Σ_k Ĩ_{L=k} T^(k)(x)`, with convergence tracked per base block.

use std::collections::BTreeMap;

use serde::Serialize;

use super::{CondNorm, RandomIterCount};
use crate::error::{Error, Result};
use crate::l0algebra::Glue;
use crate::probspace::L0Value;

/// Elements the engine can iterate on: gluable, subtractable, normed
/// blockwise by a conditional norm.
pub trait ModuleElement: Glue {
    fn minus(&self, other: &Self) -> Self;
    fn block_norms(&self, norm: &CondNorm) -> Vec<f64>;
}

impl ModuleElement for L0Value {
    fn minus(&self, other: &Self) -> Self {
        self - other
    }

    fn block_norms(&self, norm: &CondNorm) -> Vec<f64> {
        norm.block_norms(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Converged,
    MaxIterations,
    Diverged,
    /// The scheme stopped without a convergence guarantee (e.g. Mann iteration
    /// on a merely nonexpansive map).
    Inconclusive,
}

/// A step where the observed contraction exceeded the claimed factor.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatioFlag {
    pub iteration: usize,
    pub block: usize,
    pub ratio: f64,
    pub bound: f64,
    pub exceeds_one: bool,
}

/// Iteration trace shared by the engine and the solvers built on it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveReport {
    pub status: Status,
    pub iterations: usize,
    pub map_evaluations: usize,
    /// Random iteration count `L` per base block.
    pub iteration_count: Vec<usize>,
    /// Claimed contraction factor per base block.
    pub ratio_bound: Vec<f64>,
    /// `|||x_{n+1} − x_n|||` per outer iteration and base block.
    pub step_norms: Vec<Vec<f64>>,
    /// `step_n / step_{n−1}` per iteration and block; `None` below the noise floor.
    pub observed_ratios: Vec<Vec<Option<f64>>>,
    pub max_observed_ratio: Vec<f64>,
    /// First iteration at which the block's step met the tolerance.
    pub converged_at: Vec<Option<usize>>,
    /// `|||T(x) − x|||` per base block at the returned point.
    pub final_residual: Vec<f64>,
    pub flags: Vec<RatioFlag>,
    /// Solver-specific figures (subinterval counts, equation residuals, ...).
    pub extra: BTreeMap<String, serde_json::Value>,
}

impl SolveReport {
    pub fn empty(n_blocks: usize) -> Self {
        SolveReport {
            status: Status::MaxIterations,
            iterations: 0,
            map_evaluations: 0,
            iteration_count: vec![1; n_blocks],
            ratio_bound: vec![0.0; n_blocks],
            step_norms: Vec::new(),
            observed_ratios: Vec::new(),
            max_observed_ratio: vec![0.0; n_blocks],
            converged_at: vec![None; n_blocks],
            final_residual: vec![f64::INFINITY; n_blocks],
            flags: Vec::new(),
            extra: BTreeMap::new(),
        }
    }

    pub fn converged(&self) -> bool {
        self.status == Status::Converged
    }

    /// Turns a non-converged trace into an error.
    pub fn ensure_converged(&self) -> Result<()> {
        match self.status {
            Status::Converged => Ok(()),
            Status::Diverged => Err(Error::Diverged { iterations: self.iterations }),
            _ => Err(Error::NonConvergence {
                iterations: self.iterations,
                residual: self.final_residual.iter().cloned().fold(0.0, f64::max),
            }),
        }
    }

    pub fn set_extra(&mut self, key: &str, value: impl Serialize) {
        self.extra.insert(key.to_string(), serde_json::to_value(value).expect("serialisable"));
    }
}

const DIVERGENCE_FACTOR: f64 = 1e8;

/// Finds the fixed point of a stable map `T` given that `T^(L)` contracts by
/// the base-measurable factor `xi < 1`.
///
/// Iterates `x ← T^(L)(x)` until every block's step is below the current
/// target, then applies `T` once more and accepts when `|||T(x) − x||| ≤ tol`
/// on every block; otherwise the target is tightened and iteration resumes.
/// Observed step ratios above `xi` are recorded as flags; the iteration only
/// stops early on divergence.
pub fn fixed_point_random_contraction<X, F>(
    map: F,
    l: &RandomIterCount,
    xi: &L0Value,
    x0: X,
    norm: &CondNorm,
    tol: f64,
    max_outer: usize,
) -> Result<(X, SolveReport)>
where
    X: ModuleElement,
    F: FnMut(&X) -> Result<X>,
{
    fixed_point_random_contraction_with(map, l, xi, x0, norm, tol, max_outer, 0.0)
}

/// As [`fixed_point_random_contraction`], ignoring step ratios whose
/// denominator is below `noise_floor` (used when `T` is itself evaluated
/// only to a tolerance).
#[allow(clippy::too_many_arguments)]
pub fn fixed_point_random_contraction_with<X, F>(
    mut map: F,
    l: &RandomIterCount,
    xi: &L0Value,
    x0: X,
    norm: &CondNorm,
    tol: f64,
    max_outer: usize,
    noise_floor: f64,
) -> Result<(X, SolveReport)>
where
    X: ModuleElement,
    F: FnMut(&X) -> Result<X>,
{
    if !(tol > 0.0) {
        return Err(Error::ParameterDomain(format!("tolerance must be positive, got {tol}")));
    }
    let base = norm.base();
    let nb = base.n_blocks();
    let l = l.refine_to(base)?;
    let bound = norm.per_block(xi)?;
    if let Some(b) = bound.iter().position(|v| !(*v >= 0.0 && *v < 1.0)) {
        return Err(Error::Precondition(format!("contraction factor {} on block {b} is not in [0, 1)", bound[b])));
    }
    let mut report = SolveReport::empty(nb);
    report.iteration_count = l.per_block().to_vec();
    report.ratio_bound = bound.clone();
    let kmax = l.max();

    let mut x = x0;
    let mut target = tol;
    let mut prev: Option<Vec<f64>> = None;
    let mut first_scale: Option<f64> = None;
    for n in 0..max_outer {
        // T^(1..kmax)(x); block b keeps iterate L_b
        let mut iterates: Vec<X> = Vec::with_capacity(kmax);
        for k in 0..kmax {
            let next = map(if k == 0 { &x } else { &iterates[k - 1] })?;
            iterates.push(next);
        }
        report.map_evaluations += kmax;
        let parts: Vec<&X> = (0..nb).map(|b| &iterates[l.per_block()[b] - 1]).collect();
        let y = X::glue(base, &parts)?;
        let step = y.minus(&x).block_norms(norm);
        let noise = (1e-13 * (1.0 + y.max_abs())).max(noise_floor);
        let mut ratios = vec![None; nb];
        if let Some(p) = &prev {
            for b in 0..nb {
                if p[b] > noise {
                    let r = step[b] / p[b];
                    ratios[b] = Some(r);
                    report.max_observed_ratio[b] = report.max_observed_ratio[b].max(r);
                    if step[b] > bound[b] * p[b] + noise {
                        report.flags.push(RatioFlag { iteration: n, block: b, ratio: r, bound: bound[b], exceeds_one: r > 1.0 });
                    }
                }
            }
        }
        report.iterations = n + 1;
        report.step_norms.push(step.clone());
        report.observed_ratios.push(ratios);
        x = y;

        let worst = step.iter().cloned().fold(0.0, f64::max);
        if !worst.is_finite() {
            report.status = Status::Diverged;
            return Ok((x, report));
        }
        let scale = *first_scale.get_or_insert(1.0 + worst);
        if n >= 3 && worst > DIVERGENCE_FACTOR * scale {
            report.status = Status::Diverged;
            return Ok((x, report));
        }
        for b in 0..nb {
            if report.converged_at[b].is_none() && step[b] <= tol {
                report.converged_at[b] = Some(n + 1);
            }
        }
        if worst <= target {
            let tx = map(&x)?;
            report.map_evaluations += 1;
            let res = tx.minus(&x).block_norms(norm);
            report.final_residual = res.clone();
            if res.iter().all(|r| *r <= tol) {
                report.status = Status::Converged;
                return Ok((x, report));
            }
            // the step is small but T itself has not settled: aim lower
            target = (target / 10.0).max(1e-300);
        }
        prev = Some(step);
    }
    let tx = map(&x)?;
    report.map_evaluations += 1;
    report.final_residual = tx.minus(&x).block_norms(norm);
    report.status = Status::MaxIterations;
    Ok((x, report))
}

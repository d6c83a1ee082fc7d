//! Pointwise `(Y, Z, U)` drivers solved over backward subintervals, and the
//! delayed driver reduced to one of them by swapping the double sum.

use std::collections::BTreeMap;

use super::contraction::{solve_bse_contraction, ContractionBudget, STRICT_MARGIN};
use super::{block_max, Mode};
use crate::bsecore::{pi, BseSolution, Generator, GeneratorSpec, PointwiseDriver, RandomMeasure};
use crate::error::{Error, Result};
use crate::l0algebra::Glue;
use crate::probspace::{L0Value, Partition};
use crate::processes::{AdaptedProcess, MartingaleProcess};
use crate::rnmodule::{SolveReport, Status};
use crate::sampling;

/// `C √(3δ(δ+1))`.
pub fn zu_gamma(c: f64, delta: f64) -> f64 {
    c * (3.0 * delta * (delta + 1.0)).sqrt()
}

/// Smallest `k ≤ n_steps` per block with `C √(3δ_k(δ_k+1)) < 1/5`, where
/// `δ_k = ⌈N/k⌉Δ` is the longest window the grid allows with `k` windows.
pub fn subinterval_counts(c: &[f64], n_steps: usize, dt: f64) -> Result<Vec<usize>> {
    c.iter()
        .enumerate()
        .map(|(b, &cb)| {
            (1..=n_steps)
                .find(|&k| zu_gamma(cb, n_steps.div_ceil(k) as f64 * dt) < 0.2 - STRICT_MARGIN)
                .ok_or_else(|| Error::ParameterDomain(format!("no admissible subinterval count ≤ {n_steps} on block {b} (C = {cb})")))
        })
        .collect()
}

/// [`solve_bsde_zu_with`] using the driver's own Lipschitz constant, conditional mode.
pub fn solve_bsde_zu(drv: &PointwiseDriver, xi: &L0Value, tol: f64) -> Result<(BseSolution, SolveReport)> {
    solve_bsde_zu_with(drv, xi, tol, None, Mode::Conditional)
}

/// Solves the pointwise BSDE with `k` backward windows per base block.
///
/// `c` overrides the Lipschitz constant (it must dominate the driver's).
/// Blocks needing different `k` are solved with each uniform `k` and glued.
pub fn solve_bsde_zu_with(
    drv: &PointwiseDriver,
    xi: &L0Value,
    tol: f64,
    c: Option<L0Value>,
    mode: Mode,
) -> Result<(BseSolution, SolveReport)> {
    let space = xi.space().clone();
    let f = GeneratorSpec::Pointwise(drv.clone());
    f.validate(&space)?;
    let c = match c {
        Some(c) => c,
        None => drv.lipschitz_yzu()?,
    };
    let base = mode.base(&space);
    let cb = block_max(&c, &base);
    let n = space.steps();
    let ks = subinterval_counts(&cb, n, space.delta())?;
    let mut by_k: BTreeMap<usize, (BseSolution, SolveReport)> = BTreeMap::new();
    for &k in &ks {
        if by_k.contains_key(&k) {
            continue;
        }
        // blocks assigned another k see a zero driver in this run
        let on: Vec<f64> = ks.iter().map(|&kb| if kb == k { 1.0 } else { 0.0 }).collect();
        let masked = if on.iter().all(|x| *x == 1.0) { drv.clone() } else { mask(drv, &L0Value::from_blocks(&space, &base, &on)?) };
        let cm: Vec<f64> = cb.iter().zip(&on).map(|(c, o)| c * o).collect();
        by_k.insert(k, uniform_windows(&masked, xi, k, &base, &cm, tol)?);
    }
    let parts: Vec<&BseSolution> = ks.iter().map(|k| &by_k[k].0).collect();
    let sol = if by_k.len() == 1 { parts[0].clone() } else { BseSolution::glue(&base, &parts)? };
    let residual = sol.residual(&f, xi)?;
    let mut rep = SolveReport::empty(base.n_blocks());
    rep.status = if residual <= tol { Status::Converged } else { Status::MaxIterations };
    rep.iterations = by_k.values().map(|(_, r)| r.iterations).sum();
    rep.map_evaluations = by_k.values().map(|(_, r)| r.map_evaluations).sum();
    rep.iteration_count = vec![1; base.n_blocks()];
    rep.final_residual = vec![residual; base.n_blocks()];
    rep.converged_at = vec![Some(rep.iterations); base.n_blocks()];
    for (b, k) in ks.iter().enumerate() {
        let r = &by_k[k].1;
        rep.max_observed_ratio[b] = r.max_observed_ratio.iter().cloned().fold(0.0, f64::max);
        rep.ratio_bound[b] = r.ratio_bound.iter().cloned().fold(0.0, f64::max);
    }
    rep.flags = by_k.values().flat_map(|(_, r)| r.flags.clone()).collect();
    rep.set_extra("subinterval_count", &ks);
    rep.set_extra("lipschitz", &cb);
    rep.set_extra("bse_residual", residual);
    let stages: BTreeMap<String, serde_json::Value> = by_k.iter().map(|(k, (_, r))| (k.to_string(), r.extra["stages"].clone())).collect();
    rep.set_extra("stages", stages);
    if residual > tol {
        return Err(Error::NonConvergence { iterations: rep.iterations, residual });
    }
    Ok((sol, rep))
}

/// The driver multiplied by an F₀-measurable indicator.
fn mask(drv: &PointwiseDriver, ind: &L0Value) -> PointwiseDriver {
    let mut d = drv.clone();
    d.constant = d.constant.mul_scalar(ind);
    for c in [&mut d.y_lin, &mut d.y_sin, &mut d.z_lin, &mut d.z_abs, &mut d.u_lin] {
        *c = c.mul_scalar(ind);
    }
    d
}

/// Window the driver to steps `a..b` on top of any existing window.
fn restrict(drv: &PointwiseDriver, a: usize, b: usize) -> PointwiseDriver {
    let mut d = drv.clone();
    d.window = Some(match drv.window {
        None => (a, b),
        Some((a0, b0)) => {
            let lo = a.max(a0);
            let hi = b.min(b0).max(lo);
            (lo, hi)
        }
    });
    d
}

fn uniform_windows(
    drv: &PointwiseDriver,
    xi: &L0Value,
    k: usize,
    base: &Partition,
    cb: &[f64],
    tol: f64,
) -> Result<(BseSolution, SolveReport)> {
    let space = xi.space().clone();
    let n = space.steps();
    let w = n.div_ceil(k);
    let mut windows = Vec::new();
    let mut b = n;
    while b > 0 {
        let a = b.saturating_sub(w);
        windows.push((a, b));
        b = a;
    }
    let stage_tol = tol / (2.0 * windows.len() as f64);
    let d = xi.dim();
    let mut y_vals: Vec<Option<L0Value>> = vec![None; n + 1];
    let mut dm: Vec<Option<L0Value>> = vec![None; n];
    let mut eta = xi.clone();
    let mut total = SolveReport::empty(base.n_blocks());
    let mut stages = Vec::new();
    for &(a, b) in &windows {
        let delta = (b - a) as f64 * space.delta();
        let cs: Vec<f64> = cb.iter().map(|&c| super::zu_gamma(c, delta)).collect();
        let budget = ContractionBudget::from_blocks(&space, 2.0, base, cs.clone(), vec![1; base.n_blocks()])?;
        let stage = GeneratorSpec::Pointwise(restrict(drv, a, b));
        let (sol, rep) = solve_bse_contraction(&stage, &eta, &budget, stage_tol, 2000)?;
        for (t, slot) in y_vals.iter_mut().enumerate().take(b + 1).skip(a) {
            slot.get_or_insert_with(|| sol.y.at(t).clone());
        }
        for (t, slot) in dm.iter_mut().enumerate().take(b).skip(a) {
            *slot = Some(sol.m.at(t + 1) - sol.m.at(t));
        }
        eta = sol.y.at(a).clone();
        total.iterations += rep.iterations;
        total.map_evaluations += rep.map_evaluations;
        for (m, r) in total.max_observed_ratio.iter_mut().zip(&rep.max_observed_ratio) {
            *m = m.max(*r);
        }
        for (m, r) in total.ratio_bound.iter_mut().zip(&rep.ratio_bound) {
            *m = m.max(*r);
        }
        total.flags.extend(rep.flags);
        stages.push(serde_json::json!({
            "window": [a, b],
            "gamma": cs,
            "iterations": rep.iterations,
            "max_observed_ratio": rep.max_observed_ratio,
        }));
    }
    let y = AdaptedProcess::new(&space, y_vals.into_iter().map(|v| v.expect("every time covered")).collect())?;
    let mut acc = L0Value::zeros(&space, d);
    let mut m_vals = vec![acc.clone()];
    for inc in dm {
        acc = &acc + &inc.expect("every step covered");
        m_vals.push(acc.clone());
    }
    let m = MartingaleProcess::new(AdaptedProcess::new(&space, m_vals)?)?;
    total.status = Status::Converged;
    total.set_extra("stages", stages);
    Ok((BseSolution { y, m }, total))
}

/// Delayed driver `Σ_{i≤j} v_i g(Z_{j−i}, U_{j−i})`: rewritten as the pointwise
/// driver `h_m = w_m g_m`, `w_m = v([0, T − t_m])`, solved with
/// `C = v([0,T]) C₁`, and mapped back through the delayed generator.
pub fn solve_bsde_delayed(
    g: &PointwiseDriver,
    c1: Option<L0Value>,
    v: &RandomMeasure,
    xi: &L0Value,
    tol: f64,
    mode: Mode,
) -> Result<(BseSolution, SolveReport)> {
    let space = xi.space().clone();
    if g.uses_y() {
        return Err(Error::ParameterDomain("delayed driver must not depend on Y".into()));
    }
    if g.step_weights.is_some() {
        return Err(Error::ParameterDomain("delayed driver already carries step weights".into()));
    }
    let delayed = GeneratorSpec::Delayed { g: g.clone(), v: v.clone() };
    delayed.validate(&space)?;
    let mut h = g.clone();
    h.step_weights = Some(v.swapped_weights(&space));
    let hspec = GeneratorSpec::Pointwise(h.clone());

    // the swap: direct double sum against the reweighted single sum
    let mut rng = sampling::rng(0xde1a);
    let mut swap_defect = 0.0f64;
    let zero = AdaptedProcess::zeros(&space, xi.dim());
    let mut probes = vec![MartingaleProcess::closed_by(xi).sub(&MartingaleProcess::closed_by(&crate::probspace::cond_expect_at(xi, 0)))];
    for _ in 0..3 {
        probes.push(sampling::random_martingale(&mut rng, &space, xi.dim(), 1.0));
    }
    for m in &probes {
        let direct = delayed.eval(&zero, m)?;
        let swapped = hspec.eval(&zero, m)?;
        let dt = direct.terminal();
        let st = swapped.terminal();
        swap_defect = swap_defect.max(dt.max_abs_diff(st) / (1.0 + dt.max_abs()));
    }
    if swap_defect > 1e-12 {
        return Err(Error::Precondition(format!("double-sum swap mismatch {swap_defect:e}")));
    }

    let c1 = match c1 {
        Some(c) => c,
        None => g.lipschitz_yzu()?,
    };
    let c = c1.zip_map(&v.total(&space), |a, b| a * b);
    let (hsol, mut rep) = solve_bsde_zu_with(&h, xi, tol, Some(c), mode)?;
    let vstar = pi(&hsol.y, &hsol.m);
    let m = hsol.m;
    let fm = delayed.eval(&zero, &m)?;
    let y0 = crate::probspace::cond_expect_at(&vstar, 0);
    let vals = (0..=space.steps()).map(|t| &(&y0 - fm.at(t)) - m.at(t)).collect();
    let sol = BseSolution { y: AdaptedProcess::new(&space, vals)?, m };
    let residual = sol.residual(&delayed, xi)?;
    rep.set_extra("fubini_swap_defect", swap_defect);
    rep.set_extra("bse_residual", residual);
    if residual > tol {
        return Err(Error::NonConvergence { iterations: rep.iterations, residual });
    }
    Ok((sol, rep))
}

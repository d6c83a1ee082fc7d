//! Mann iteration for generators whose `G` is only nonexpansive, and the
//! closed-form solution family of the path-functional counterexample.

use serde::Serialize;

use super::Mode;
use crate::bsecore::{g_map, norm_tolerance, phi, BseSolution, Generator, GeneratorSpec, InnerPlan};
use crate::error::{Error, Result};
use crate::probspace::{cond_expect_at, is_measurable, L0Value};
use crate::processes::{AdaptedProcess, MartingaleProcess};
use crate::report::CheckReport;
use crate::rnmodule::{CondNorm, SolveReport, Status};
use crate::sampling;

/// `{V : |||V − center|||_p ≤ radius}` with an F₀-measurable radius.
#[derive(Debug, Clone)]
pub struct ConditionalBall {
    pub center: L0Value,
    pub radius: L0Value,
}

#[derive(Debug, Clone)]
pub struct NonexpansiveOutcome {
    /// `φ(V*)` when the iteration met the tolerance.
    pub solution: Option<BseSolution>,
    pub fixed_point: L0Value,
    pub report: SolveReport,
    pub nonexpansive_check: CheckReport,
    pub self_map_check: CheckReport,
}

#[derive(Serialize)]
struct CheckSummary {
    cases: usize,
    worst: f64,
    passed: bool,
}

impl From<&CheckReport> for CheckSummary {
    fn from(r: &CheckReport) -> Self {
        CheckSummary { cases: r.cases, worst: r.worst, passed: r.passed }
    }
}

const SAMPLES: usize = 8;

/// Mann iteration `V ← (1−λ)V + λG(V)` started at the ball's centre.
///
/// Before iterating, `|||G(V)−G(V')||| ≤ |||V−V'|||` is sampled inside the
/// ball and `G` is checked to map sampled boundary points back into it.
/// Hitting `max_iter` is not an error: the outcome carries status
/// `Inconclusive` and no solution.
#[allow(clippy::too_many_arguments)]
pub fn solve_nonexpansive(
    f: &dyn Generator,
    xi: &L0Value,
    ball: &ConditionalBall,
    lambda: f64,
    tol: f64,
    max_iter: usize,
    p: f64,
    mode: Mode,
) -> Result<NonexpansiveOutcome> {
    if !(lambda > 0.0 && lambda <= 1.0) {
        return Err(Error::ParameterDomain(format!("averaging weight must be in (0, 1], got {lambda}")));
    }
    if !(tol > 0.0) {
        return Err(Error::ParameterDomain(format!("tolerance must be positive, got {tol}")));
    }
    let space = xi.space().clone();
    let base = mode.base(&space);
    if !is_measurable(&ball.radius, &base) || !ball.radius.is_scalar() {
        return Err(Error::NotMeasurable("ball radius must be a base-measurable scalar".into()));
    }
    let norm = CondNorm::new(&space, p, base.clone())?;
    let radius = norm.per_block(&ball.radius)?;
    let plan = InnerPlan::causal(&space, p)?;
    let inner_tol = tol / 10.0;
    let g = |v: &L0Value| g_map(f, xi, v, inner_tol, &plan);

    let mut rng = sampling::rng(0x6a11);
    let slack = |x: f64| 1e-10 * (1.0 + x);
    // boundary points of the ball: centre + R u / |||u|||
    let boundary = |u: &L0Value| -> L0Value {
        let nu = norm.block_norms(u);
        let s: Vec<f64> = nu.iter().zip(&radius).map(|(n, r)| if *n > 0.0 { r / n } else { 0.0 }).collect();
        &ball.center + &u.mul_scalar(&norm.to_l0(&s))
    };
    let mut nonexp = CheckReport::new("nonexpansive", 1e-10);
    let mut selfmap = CheckReport::new("ball self-map", 1e-10);
    for i in 0..SAMPLES {
        let u = sampling::random_terminal(&mut rng, &space, xi.dim(), 1.0);
        let u2 = sampling::random_terminal(&mut rng, &space, xi.dim(), 1.0);
        let t = (i as f64 + 1.0) / SAMPLES as f64;
        let v1 = boundary(&u);
        let v2 = &ball.center + &(&(&boundary(&u2) - &ball.center) * t);
        let (g1, g2) = (g(&v1)?, g(&v2)?);
        let lhs = norm.block_norms(&(&g1 - &g2));
        let rhs = norm.block_norms(&(&v1 - &v2));
        for b in 0..norm.n_blocks() {
            let ex = lhs[b] - rhs[b];
            nonexp.record((ex / (1.0 + rhs[b])).max(0.0), || format!("sample {i}, block {b}: {} > {}", lhs[b], rhs[b]));
        }
        let dist = norm.block_norms(&(&g1 - &ball.center));
        for b in 0..norm.n_blocks() {
            if dist[b] > radius[b] + slack(radius[b]) {
                return Err(Error::BallSelfMap { block: b, value: dist[b], radius: radius[b] });
            }
            selfmap.record(((dist[b] - radius[b]) / (1.0 + radius[b])).max(0.0), String::new);
        }
    }
    if !nonexp.passed {
        return Err(Error::Precondition(format!("G is not nonexpansive on sampled pairs ({:e})", nonexp.worst)));
    }

    let ntol = norm_tolerance(&space, &base, p, tol / 2.0);
    let mut rep = SolveReport::empty(norm.n_blocks());
    let mut v = ball.center.clone();
    for n in 0..max_iter {
        let gv = g(&v)?;
        rep.map_evaluations += 1;
        let res = norm.block_norms(&(&gv - &v));
        rep.iterations = n + 1;
        rep.step_norms.push(res.clone());
        rep.final_residual = res.clone();
        if res.iter().any(|r| !r.is_finite()) {
            rep.status = Status::Diverged;
            break;
        }
        for (b, r) in res.iter().enumerate() {
            if rep.converged_at[b].is_none() && *r <= ntol {
                rep.converged_at[b] = Some(n + 1);
            }
        }
        if res.iter().all(|r| *r <= ntol) {
            rep.status = Status::Converged;
            break;
        }
        v = &(&v * (1.0 - lambda)) + &(&gv * lambda);
    }
    rep.set_extra("lambda", lambda);
    rep.set_extra("nonexpansive_check", CheckSummary::from(&nonexp));
    rep.set_extra("self_map_check", CheckSummary::from(&selfmap));
    rep.set_extra("radius", &radius);
    if rep.status != Status::Converged {
        if rep.status != Status::Diverged {
            rep.status = Status::Inconclusive;
        }
        return Ok(NonexpansiveOutcome { solution: None, fixed_point: v, report: rep, nonexpansive_check: nonexp, self_map_check: selfmap });
    }
    let sol = phi(f, &v, inner_tol, &plan)?;
    let residual = sol.residual(f, xi)?;
    rep.set_extra("bse_residual", residual);
    let solution = (residual <= tol).then_some(sol);
    if solution.is_none() {
        rep.status = Status::Inconclusive;
    }
    Ok(NonexpansiveOutcome { solution, fixed_point: v, report: rep, nonexpansive_check: nonexp, self_map_check: selfmap })
}

/// `Y_t = (1 − t/T)Y₀ + E_tξ`, `M_t = −E_tξ` for `F_t = a t Y₀` with `aT = 1`
/// and `E₀ξ = 0`; one solution per F₀-measurable `Y₀`, each checked to satisfy
/// the equation and `G(V) = V` to 1e-12.
pub fn enumerate_counterexample_solutions(xi: &L0Value, a: &L0Value, y0s: &[L0Value]) -> Result<Vec<BseSolution>> {
    let space = xi.space().clone();
    let t = space.horizon();
    let scale = 1.0 + xi.max_abs();
    if cond_expect_at(xi, 0).max_abs() > 1e-12 * scale {
        return Err(Error::Precondition("E₀ξ must vanish".into()));
    }
    if !a.is_scalar() || !is_measurable(a, space.base()) || a.values().iter().any(|x| (x * t - 1.0).abs() > 1e-12) {
        return Err(Error::Precondition("need an F₀-measurable scalar a with aT = 1".into()));
    }
    let f = GeneratorSpec::PathFunctional { a: a.clone() };
    let plan = InnerPlan::causal(&space, 2.0)?;
    let m = MartingaleProcess::closed_by(xi).scale(-1.0);
    y0s.iter()
        .map(|y0| {
            if !is_measurable(y0, space.base()) || y0.dim() != xi.dim() {
                return Err(Error::Precondition("Y₀ must be F₀-measurable with the dimension of ξ".into()));
            }
            let vals = (0..=space.steps())
                .map(|k| &(y0 * (1.0 - space.elapsed(k) / t)) + &cond_expect_at(xi, k))
                .collect();
            let sol = BseSolution { y: AdaptedProcess::new(&space, vals)?, m: m.clone() };
            let tol = 1e-12 * (scale + y0.max_abs());
            let r = sol.residual(&f, xi)?;
            if r > tol {
                return Err(Error::Precondition(format!("closed-form member violates the equation ({r:e})")));
            }
            let v = crate::bsecore::pi(&sol.y, &sol.m);
            let gv = g_map(&f, xi, &v, 1e-13, &plan)?;
            if gv.max_abs_diff(&v) > tol {
                return Err(Error::Precondition("closed-form member is not a fixed point of G".into()));
            }
            Ok(sol)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::probspace::build_space;

    #[test]
    fn counterexample_family() {
        let s = build_space(&[2, 2], &[]).unwrap();
        let xi = L0Value::scalar(&s, vec![1.0, -1.0, 2.0, -2.0]).unwrap();
        let a = L0Value::constant(&s, &[1.0]);
        let y0s: Vec<L0Value> = [0.0, 1.0, -3.0].iter().map(|c| L0Value::constant(&s, &[*c])).collect();
        let sols = enumerate_counterexample_solutions(&xi, &a, &y0s).unwrap();
        assert_eq!(sols.len(), 3);
        // Y₀ = 0: Y = E_tξ, M = −E_tξ
        for k in 0..=2 {
            assert!(sols[0].y.at(k).max_abs_diff(&cond_expect_at(&xi, k)) < 1e-15);
            assert!(sols[0].m.at(k).max_abs_diff(&(-&cond_expect_at(&xi, k))) < 1e-15);
        }
        assert!(sols[1].max_abs_diff(&sols[0]) > 0.5);
        let bad = L0Value::constant(&s, &[0.5]);
        assert!(enumerate_counterexample_solutions(&xi, &bad, &y0s).is_err());
    }

    #[test]
    fn mann_on_counterexample() {
        let s = build_space(&[2, 2], &[]).unwrap();
        let xi = L0Value::scalar(&s, vec![1.0, -1.0, 0.5, -0.5]).unwrap();
        let f = GeneratorSpec::PathFunctional { a: L0Value::constant(&s, &[1.0]) };
        let ball = ConditionalBall { center: xi.clone(), radius: L0Value::constant(&s, &[2.0]) };
        let out = solve_nonexpansive(&f, &xi, &ball, 0.5, 1e-10, 1000, 2.0, Mode::Conditional).unwrap();
        assert!(out.report.converged());
        let v = out.fixed_point;
        let plan = InnerPlan::causal(&s, 2.0).unwrap();
        assert!(g_map(&f, &xi, &v, 1e-13, &plan).unwrap().max_abs_diff(&v) < 1e-10);
    }
}

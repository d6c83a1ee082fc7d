//! End-to-end solvers for the BSE `Y_t + F_t + M_t = ξ + F_T + M_T`.

pub mod concat;
pub mod contraction;
pub mod nonexpansive;
pub mod oracle;
pub mod zu;

use serde::Serialize;

pub use concat::{solve_by_concatenation, ConcatOutcome};
pub use contraction::{
    integral_budget, integral_iteration_counts, iterate_bound_check, solve_bse_contraction, solve_bse_contraction_from,
    solve_bsde_integral, solve_bsde_integral_from, threshold,
    ContractionBudget, RATIO_SLACK, STRICT_MARGIN,
};
pub use nonexpansive::{enumerate_counterexample_solutions, solve_nonexpansive, ConditionalBall, NonexpansiveOutcome};
pub use oracle::brute_force_oracle;
pub use zu::{solve_bsde_delayed, solve_bsde_zu, solve_bsde_zu_with, subinterval_counts, zu_gamma};

use crate::bsecore::{BseSolution, GeneratorSpec};
use crate::error::{Error, Result};
use crate::probspace::{FilteredSpace, L0Value, Partition};
use crate::processes::doob_constant;
use crate::rnmodule::{CondNorm, SolveReport};

/// Which base the conditional norms use: the space's F₀ or the trivial
/// sigma-algebra (the classical, deterministic-constant setting).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Conditional,
    Classical,
}

impl Mode {
    pub fn base(self, space: &FilteredSpace) -> Partition {
        match self {
            Mode::Conditional => space.base().clone(),
            Mode::Classical => Partition::trivial(space.n_atoms()),
        }
    }
}

/// Largest value of an F₀-measurable scalar on each block of `base`.
pub fn block_max(c: &L0Value, base: &Partition) -> Vec<f64> {
    base.blocks().iter().map(|blk| blk.iter().fold(f64::NEG_INFINITY, |m, &a| m.max(c.s(a)))).collect()
}

/// Picks a solver from the generator kind.
///
/// Integral and Y-only pointwise drivers go through the integral solver, Z/U
/// drivers through the subinterval solver, bounded-Lipschitz generators
/// through Mann iteration on the ball of radius `|||ξ|||_p + B/(2C_p)`.
pub fn solve_auto(f: &GeneratorSpec, xi: &L0Value, p: f64, tol: f64, mode: Mode) -> Result<(BseSolution, SolveReport)> {
    let space = xi.space().clone();
    match f {
        GeneratorSpec::Zero { .. } => {
            let base = mode.base(&space);
            let budget = ContractionBudget::from_blocks(&space, p, &base, vec![0.0; base.n_blocks()], vec![1; base.n_blocks()])?;
            solve_bse_contraction(f, xi, &budget, tol, 1000)
        }
        GeneratorSpec::Integral(_) => solve_bsde_integral(f, xi, p, tol, mode),
        GeneratorSpec::Pointwise(d) if !d.uses_zu() => solve_bsde_integral(f, xi, p, tol, mode),
        GeneratorSpec::Pointwise(d) => {
            require_p2(p)?;
            solve_bsde_zu_with(d, xi, tol, None, mode)
        }
        GeneratorSpec::Delayed { g, v } => {
            require_p2(p)?;
            solve_bsde_delayed(g, None, v, xi, tol, mode)
        }
        GeneratorSpec::PathFunctional { a } => {
            let base = mode.base(&space);
            let c = block_max(&a.map(|x| x.abs() * space.horizon()), &base);
            let budget = ContractionBudget::from_blocks(&space, p, &base, c, vec![1; base.n_blocks()])?;
            solve_bse_contraction(f, xi, &budget, tol, 1000)
        }
        GeneratorSpec::BoundedLipschitz { bound, p: fp } => {
            if (fp - p).abs() > 0.0 {
                return Err(Error::ParameterDomain(format!("generator exponent {fp} differs from solve exponent {p}")));
            }
            let norm = CondNorm::new(&space, p, mode.base(&space))?;
            let rxi = norm.to_l0(&norm.block_norms(xi));
            let radius = &rxi + &(bound * (1.0 / (2.0 * doob_constant(p))));
            let ball = ConditionalBall { center: L0Value::zeros(&space, xi.dim()), radius };
            let out = solve_nonexpansive(f, xi, &ball, 0.5, tol, 10_000, p, mode)?;
            match out.solution {
                Some(sol) => Ok((sol, out.report)),
                None => Err(Error::NonConvergence {
                    iterations: out.report.iterations,
                    residual: out.report.final_residual.iter().cloned().fold(0.0, f64::max),
                }),
            }
        }
    }
}

fn require_p2(p: f64) -> Result<()> {
    if p != 2.0 {
        return Err(Error::ParameterDomain(format!("Z/U drivers need p = 2, got {p}")));
    }
    Ok(())
}

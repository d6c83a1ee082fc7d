//! Solutions glued from classical per-block solves.

use super::{solve_auto, Mode};
use crate::bsecore::{BseSolution, GeneratorSpec};
use crate::error::{Error, Result};
use crate::l0algebra::{concatenate_on, EventPartition};
use crate::probspace::L0Value;
use crate::rnmodule::SolveReport;

#[derive(Debug, Clone)]
pub struct ConcatOutcome {
    pub glued: BseSolution,
    /// The glued terminal value `Σ Ĩ_{A_n} ξ_n`.
    pub xi: L0Value,
    pub residual: f64,
    pub part_reports: Vec<SolveReport>,
    /// Direct conditional solve on the glued data, when it succeeds.
    pub direct: Option<BseSolution>,
    pub agreement: Option<f64>,
}

/// Solves `ξ_n` classically for every part `(A_n, ξ_n)`, glues the solutions
/// along the F₀-measurable `A_n`, and checks the equation for the glued data.
/// The direct conditional solve is attempted too; when it exists the two
/// must agree to 1e-8.
pub fn solve_by_concatenation(
    f: &GeneratorSpec,
    parts: &[(Vec<usize>, L0Value)],
    p: f64,
    tol: f64,
) -> Result<ConcatOutcome> {
    let first = parts.first().ok_or(Error::EmptyFamily)?;
    let space = first.1.space().clone();
    let blocks = EventPartition::new(&space, parts.iter().map(|(b, _)| b.clone()).collect(), 0)?;
    // EventPartition orders blocks by their first atom
    let mut order: Vec<usize> = (0..parts.len()).collect();
    order.sort_by_key(|&i| blocks.partition().block_of(parts[i].0[0]));
    let mut sols = Vec::with_capacity(parts.len());
    let mut reports = Vec::with_capacity(parts.len());
    for &i in &order {
        let (s, r) = solve_auto(f, &parts[i].1, p, tol, Mode::Classical)?;
        sols.push(s);
        reports.push(r);
    }
    let xis: Vec<&L0Value> = order.iter().map(|&i| &parts[i].1).collect();
    let xi = concatenate_on(&blocks, &xis)?;
    let refs: Vec<&BseSolution> = sols.iter().collect();
    let glued = concatenate_on(&blocks, &refs)?;
    let residual = glued.residual(f, &xi)?;
    if residual > tol {
        return Err(Error::NonConvergence { iterations: 0, residual });
    }
    let (direct, agreement) = match solve_auto(f, &xi, p, tol, Mode::Conditional) {
        Ok((d, _)) => {
            let gap = d.max_abs_diff(&glued);
            if gap > 1e-8 {
                return Err(Error::Precondition(format!("glued and direct solutions differ by {gap:e}")));
            }
            (Some(d), Some(gap))
        }
        Err(Error::BudgetViolated { .. }) | Err(Error::ParameterDomain(_)) => (None, None),
        Err(e) => return Err(e),
    };
    Ok(ConcatOutcome { glued, xi, residual, part_reports: reports, direct, agreement })
}

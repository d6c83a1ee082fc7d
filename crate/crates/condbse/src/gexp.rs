//! Conditional g-expectations `E^g[ξ | F_{t₀}]` and the risk measures they induce.
//!
//! Here the BSDE reads `Y_t = ξ + Σ g(s, Y_s, Z_s)Δ − Σ Z_s ΔW_s (− K)`, so the
//! martingale part of the solver is `M = −∫Z dW` and `g` is handed to the
//! pointwise solver as `f(y, z^M) = g(y, −z^M)`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::l0algebra::{concatenate_on, EventPartition};
use crate::probspace::{cond_expect, is_measurable, L0Value};
use crate::processes::DriverBasis;
use crate::report::CheckReport;
use crate::bsecore::PointwiseDriver;
use crate::solvers::solve_bsde_zu;

/// Solver tolerance used for every g-expectation.
pub const GEXP_TOL: f64 = 1e-11;

/// `g(t, y, z) = constant + y_lin y + z_lin z + z_abs |z|` (componentwise),
/// evaluated from grid index `t0` on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GDriver {
    pub constant: f64,
    pub y_lin: f64,
    pub z_lin: f64,
    pub z_abs: f64,
    pub t0: usize,
}

impl GDriver {
    pub fn zero(t0: usize) -> Self {
        GDriver { constant: 0.0, y_lin: 0.0, z_lin: 0.0, z_abs: 0.0, t0 }
    }

    pub fn linear(mu: f64, t0: usize) -> Self {
        GDriver { z_lin: mu, ..Self::zero(t0) }
    }

    pub fn abs(kappa: f64, t0: usize) -> Self {
        GDriver { z_abs: kappa, ..Self::zero(t0) }
    }

    /// `C` with `|g(y,z) − g(y',z')| ≤ C(|y−y'| + |z−z'|)`.
    pub fn lipschitz(&self) -> f64 {
        self.y_lin.abs().max(self.z_lin.abs() + self.z_abs.abs())
    }

    /// `C₁ = e^{8(1+C²)(T−t₀)}`.
    pub fn estimate_constant(&self, horizon_from_t0: f64) -> f64 {
        let c = self.lipschitz();
        (8.0 * (1.0 + c * c) * horizon_from_t0).exp()
    }

    fn validate(&self) -> Result<()> {
        for (name, v) in [("constant", self.constant), ("y_lin", self.y_lin), ("z_lin", self.z_lin), ("z_abs", self.z_abs)] {
            if !v.is_finite() {
                return Err(Error::Config { field: format!("g.{name}"), message: "must be finite".into() });
            }
        }
        Ok(())
    }
}

/// `E^g[ξ | F_{t₀}]`, measurable w.r.t. `partitions[t0]`.
pub fn g_expectation(g: &GDriver, xi: &L0Value) -> Result<L0Value> {
    g.validate()?;
    let full = xi.space().clone();
    if g.t0 > full.steps() {
        return Err(Error::ParameterDomain(format!("t0 = {} beyond the grid", g.t0)));
    }
    if g.t0 == full.steps() {
        if !is_measurable(xi, full.finest()) {
            return Err(Error::NotMeasurable("terminal value".into()));
        }
        return Ok(xi.clone());
    }
    let space = full.restrict_from(g.t0)?;
    let x = xi.rebase(&space)?;
    let basis = Arc::new(DriverBasis::standard(&space, false)?);
    let d = x.dim();
    let mut drv = PointwiseDriver::zero(&space, d).with_basis(basis);
    drv.constant = L0Value::constant(&space, &vec![g.constant; d]);
    drv.y_lin = L0Value::constant(&space, &[g.y_lin]);
    drv.z_lin = L0Value::constant(&space, &[-g.z_lin]);
    drv.z_abs = L0Value::constant(&space, &[g.z_abs]);
    let (sol, _) = solve_bsde_zu(&drv, &x, GEXP_TOL)?;
    sol.y.initial().rebase(&full)
}

/// `ρ^g(ξ) = E^g[−ξ | F_{t₀}]` for a convex, Y-free `g` with `g(·, 0) = 0`.
pub fn g_risk_measure(g: &GDriver, xi: &L0Value) -> Result<L0Value> {
    if g.y_lin != 0.0 || g.constant != 0.0 {
        return Err(Error::ParameterDomain("risk measures need g independent of y with g(0) = 0".into()));
    }
    if g.z_abs < 0.0 {
        return Err(Error::ParameterDomain("risk measures need g convex in z (z_abs ≥ 0)".into()));
    }
    g_expectation(g, &(-xi))
}

/// `|E^g[ξ₁|F_{t₀}] − E^g[ξ₂|F_{t₀}]| ≤ C₁ E[|ξ₁−ξ₂|² | F_{t₀}]^{1/2}` atomwise,
/// with a slack of twice the solver tolerance on the left.
pub fn lipschitz_estimate_check(g: &GDriver, xi1: &L0Value, xi2: &L0Value) -> Result<CheckReport> {
    let space = xi1.space().clone();
    let c1 = g.estimate_constant(space.time(space.steps()) - space.time(g.t0.min(space.steps())));
    let e1 = g_expectation(g, xi1)?;
    let e2 = g_expectation(g, xi2)?;
    let diff = xi1 - xi2;
    let sq = diff.map_atoms(1, |_, v| vec![v.iter().map(|x| x * x).sum()]);
    let rhs = cond_expect(&sq, space.partition(g.t0))?.map(|v| c1 * v.sqrt());
    let lhs = (&e1 - &e2).norm();
    let mut rep = CheckReport::new("g-expectation Lipschitz estimate", 0.0);
    for a in 0..space.n_atoms() {
        let excess = lhs.s(a) - rhs.s(a) - 2.0 * GEXP_TOL;
        rep.record(excess.max(0.0), || format!("atom {a}: {} > {}", lhs.s(a), rhs.s(a)));
    }
    Ok(rep)
}

/// `E^g[Σ Ĩ_{A_n} ξ_n | F_{t₀}] = Σ Ĩ_{A_n} E^g[ξ_n | F_{t₀}]` to 1e-9.
pub fn g_stability_check(g: &GDriver, blocks: &EventPartition, xis: &[L0Value]) -> Result<CheckReport> {
    let space = xis.first().ok_or(Error::EmptyFamily)?.space().clone();
    if !space.partition(g.t0).refines(blocks.partition()) {
        return Err(Error::NotMeasurable("blocks must be F_{t0}-measurable".into()));
    }
    let refs: Vec<&L0Value> = xis.iter().collect();
    let glued = concatenate_on(blocks, &refs)?;
    let lhs = g_expectation(g, &glued)?;
    let parts = xis.iter().map(|x| g_expectation(g, x)).collect::<Result<Vec<_>>>()?;
    let prefs: Vec<&L0Value> = parts.iter().collect();
    let rhs = concatenate_on(blocks, &prefs)?;
    let mut rep = CheckReport::new("g-expectation stability", 1e-9);
    let d = lhs.max_abs_diff(&rhs);
    rep.record(d, || format!("deviation {d:e}"));
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::probspace::{build_space, cond_expect_at, FilteredSpace};

    fn tree(h: f64) -> Arc<FilteredSpace> {
        FilteredSpace::tree(&[2, 2, 2], &[Some(vec![0.4, 0.6]), None, Some(vec![0.7, 0.3])], h).unwrap()
    }

    #[test]
    fn zero_driver_is_conditional_expectation() {
        let s = tree(1.0);
        let xi = L0Value::scalar(&s, (0..8).map(|a| (a as f64 * 0.7).cos()).collect()).unwrap();
        for t0 in 0..=3 {
            let e = g_expectation(&GDriver::zero(t0), &xi).unwrap();
            assert!(e.max_abs_diff(&cond_expect_at(&xi, t0)) < 1e-12);
        }
    }

    #[test]
    fn base_measurable_terminal_is_fixed() {
        let s = tree(0.1);
        let xi = L0Value::scalar(&s, vec![1.0, 1.0, 1.0, 1.0, 2.0, 2.0, 2.0, 2.0]).unwrap();
        let e = g_expectation(&GDriver::abs(0.5, 1), &xi).unwrap();
        assert!(e.max_abs_diff(&xi) < 1e-12);
    }

    #[test]
    fn risk_measure_translation() {
        let s = build_space(&[2, 2], &[]).unwrap();
        let xi = L0Value::scalar(&s, vec![1.0, -1.0, 0.3, 0.0]).unwrap();
        let g = GDriver::abs(0.1, 0);
        let r = g_risk_measure(&g, &xi).unwrap();
        let r2 = g_risk_measure(&g, &xi.map(|v| v + 0.25)).unwrap();
        assert!((r.s(0) - 0.25 - r2.s(0)).abs() < 1e-10);
        assert!(g_risk_measure(&GDriver { y_lin: 0.1, ..g }, &xi).is_err());
    }
}

//! Node-by-node backward induction on binomial trees, independent of the
//! decomposition and fixed-point machinery.

use std::sync::Arc;

use crate::bsecore::BseSolution;
use crate::error::{Error, Result};
use crate::probspace::{FilteredSpace, L0Value};
use crate::processes::{AdaptedProcess, MartingaleProcess};

const IMPLICIT_TOL: f64 = 1e-13;

/// Backward induction for `Y_k = E_k Y_{k+1} + f(t_k, atom, Y_k, Z_k) Δ`
/// on a binomial tree, where `Z_k = Cov_k(Y_{k+1}, ΔW)/Var_k(ΔW)` and the
/// walk takes `±√Δ √(q_∓/q_±)` on the two children. `ΔM_k = −(Y_{k+1} − E_k Y_{k+1})`.
///
/// `Z` here is the coefficient of `Y` itself, the negative of the coefficient of `M`.
pub fn brute_force_oracle<F>(f: F, xi: &L0Value, space: &Arc<FilteredSpace>) -> Result<BseSolution>
where
    F: Fn(f64, usize, &[f64], &[f64]) -> Vec<f64>,
{
    if !xi.space().same_atoms(space) {
        return Err(Error::SpaceMismatch);
    }
    let n = space.steps();
    let d = xi.dim();
    let dt = space.delta();
    let mut ys: Vec<Vec<f64>> = vec![Vec::new(); n + 1];
    let mut dms: Vec<Vec<f64>> = vec![Vec::new(); n];
    ys[n] = xi.values().to_vec();
    for k in (0..n).rev() {
        let part = space.partition(k);
        let fine = space.partition(k + 1);
        let mut yk = vec![0.0; space.n_atoms() * d];
        let mut dm = vec![0.0; space.n_atoms() * d];
        for node in 0..part.n_blocks() {
            let ch = space.children(k, node);
            if ch.len() != 2 {
                return Err(Error::Precondition(format!("node {node} at step {k} has {} children, need 2", ch.len())));
            }
            let wn = space.block_weight(part.block(node));
            let q: Vec<f64> = ch.iter().map(|&c| space.block_weight(fine.block(c)) / wn).collect();
            let dw = [dt.sqrt() * (q[1] / q[0]).sqrt(), -dt.sqrt() * (q[0] / q[1]).sqrt()];
            let var: f64 = q[0] * dw[0] * dw[0] + q[1] * dw[1] * dw[1];
            let next: Vec<&[f64]> = ch.iter().map(|&c| &ys[k + 1][fine.block(c)[0] * d..][..d]).collect();
            let mean: Vec<f64> = (0..d).map(|i| q[0] * next[0][i] + q[1] * next[1][i]).collect();
            let z: Vec<f64> = (0..d)
                .map(|i| (q[0] * next[0][i] * dw[0] + q[1] * next[1][i] * dw[1]) / var)
                .collect();
            let atom = part.block(node)[0];
            let y = implicit_step(&f, space.time(k), atom, &mean, &z, dt)
                .map_err(|_| Error::Precondition(format!("implicit step at node {node}, step {k} is not contractive")))?;
            for &a in part.block(node) {
                yk[a * d..(a + 1) * d].copy_from_slice(&y);
                let nx = &ys[k + 1][a * d..(a + 1) * d];
                for i in 0..d {
                    dm[a * d + i] = -(nx[i] - mean[i]);
                }
            }
        }
        ys[k] = yk;
        dms[k] = dm;
    }
    let y_vals = ys.into_iter().map(|v| L0Value::new(space, d, v)).collect::<Result<Vec<_>>>()?;
    let mut acc = vec![0.0; space.n_atoms() * d];
    let mut m_vals = vec![L0Value::new(space, d, acc.clone())?];
    for inc in &dms {
        for (a, x) in acc.iter_mut().zip(inc) {
            *a += x;
        }
        m_vals.push(L0Value::new(space, d, acc.clone())?);
    }
    let y = AdaptedProcess::new(space, y_vals)?;
    let m = MartingaleProcess::new(AdaptedProcess::new(space, m_vals)?)?;
    Ok(BseSolution { y, m })
}

/// `y = mean + f(y) Δ` by fixed-point iteration.
fn implicit_step<F>(f: &F, t: f64, atom: usize, mean: &[f64], z: &[f64], dt: f64) -> std::result::Result<Vec<f64>, ()>
where
    F: Fn(f64, usize, &[f64], &[f64]) -> Vec<f64>,
{
    let mut y = mean.to_vec();
    let mut prev_step = f64::INFINITY;
    let mut growth = 0;
    for _ in 0..10_000 {
        let fy = f(t, atom, &y, z);
        let next: Vec<f64> = mean.iter().zip(&fy).map(|(m, v)| m + v * dt).collect();
        let step = next.iter().zip(&y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let size = next.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        y = next;
        if !step.is_finite() {
            return Err(());
        }
        if step <= IMPLICIT_TOL * (1.0 + size) {
            return Ok(y);
        }
        if step >= prev_step {
            growth += 1;
            if growth >= 3 {
                return Err(());
            }
        }
        prev_step = step;
    }
    Err(())
}

//! CSV and JSON artifacts.

use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::bsecore::{BseSolution, Generator};
use crate::error::{Error, Result};
use crate::probspace::{L0Value, Partition};
use crate::processes::{martingale_decompose, DriverBasis, DriverKind};

/// Shortest round-trip decimal form, switching to exponent notation for
/// very small or very large magnitudes.
pub fn num(x: f64) -> String {
    format!("{x:?}")
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

/// One row per `(time, atom)`: `Y`, `M`, then the representation
/// coefficients on the step leaving that time (blank at the horizon) and the
/// orthogonal remainder `K`.
pub fn write_solution_csv(path: &Path, sol: &BseSolution, basis: Option<&DriverBasis>) -> Result<()> {
    let d = sol.y.dim();
    let space = sol.y.space().clone();
    let n = space.steps();
    let dec = match basis {
        Some(b) => Some(martingale_decompose(&sol.m, b)?),
        None => None,
    };
    let mut header = vec!["time".to_string(), "atom".to_string()];
    header.extend((0..d).map(|i| format!("y{i}")));
    header.extend((0..d).map(|i| format!("m{i}")));
    if let Some(dec) = &dec {
        for kind in &dec.kinds {
            let prefix = match kind {
                DriverKind::Walk => "z".to_string(),
                DriverKind::Jump { mark } => format!("u{mark}_"),
            };
            header.extend((0..d).map(|i| format!("{prefix}{i}")));
        }
        header.extend((0..d).map(|i| format!("k{i}")));
    }
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(&header).map_err(csv_err)?;
    for k in 0..=n {
        for a in 0..space.n_atoms() {
            let mut row = vec![num(space.time(k)), a.to_string()];
            row.extend(sol.y.at(k).at(a).iter().map(|v| num(*v)));
            row.extend(sol.m.at(k).at(a).iter().map(|v| num(*v)));
            if let Some(dec) = &dec {
                for c in &dec.coefficients {
                    if k < n {
                        row.extend(c[k].at(a).iter().map(|v| num(*v)));
                    } else {
                        row.extend((0..d).map(|_| String::new()));
                    }
                }
                row.extend(dec.remainder.at(k).at(a).iter().map(|v| num(*v)));
            }
            w.write_record(&row).map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Counterexample family: `member, y0, time, atom, Y, M`.
pub fn write_family_csv(path: &Path, family: &[BseSolution]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    let d = family.first().map_or(1, |s| s.y.dim());
    let mut header = vec!["member".to_string(), "time".to_string(), "atom".to_string()];
    header.extend((0..d).map(|i| format!("y{i}")));
    header.extend((0..d).map(|i| format!("m{i}")));
    w.write_record(&header).map_err(csv_err)?;
    for (j, sol) in family.iter().enumerate() {
        let space = sol.y.space();
        for k in 0..=space.steps() {
            for a in 0..space.n_atoms() {
                let mut row = vec![j.to_string(), num(space.time(k)), a.to_string()];
                row.extend(sol.y.at(k).at(a).iter().map(|v| num(*v)));
                row.extend(sol.m.at(k).at(a).iter().map(|v| num(*v)));
                w.write_record(&row).map_err(csv_err)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Io(e.to_string()))?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Largest equation residual over times and atoms of each block of `base`.
pub fn block_residuals(sol: &BseSolution, f: &dyn Generator, xi: &L0Value, base: &Partition) -> Result<Vec<f64>> {
    let fy = f.eval(&sol.y, &sol.m)?;
    let n = sol.y.steps();
    let rhs = &(xi + fy.at(n)) + sol.m.at(n);
    let mut out = vec![0.0f64; base.n_blocks()];
    for t in 0..=n {
        let lhs = &(sol.y.at(t) + fy.at(t)) + sol.m.at(t);
        for (b, blk) in base.blocks().iter().enumerate() {
            for &a in blk {
                for (l, r) in lhs.at(a).iter().zip(rhs.at(a)) {
                    out[b] = out[b].max((l - r).abs());
                }
            }
        }
    }
    Ok(out)
}

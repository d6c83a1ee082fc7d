use std::sync::Arc;
use std::time::Instant;

use condbse::bsecore::{GeneratorSpec, PointwiseDriver};
use condbse::processes::DriverBasis;
use condbse::sampling;
use condbse::solvers::{brute_force_oracle, solve_bsde_integral, solve_bsde_zu, Mode};
use condbse::L0Value;

#[test]
fn integral_y_driver_matches_oracle_depth8() {
    let mut rng = sampling::rng(21);
    let s = sampling::binomial_tree(&mut rng, 2, 8, true).unwrap();
    let xi = sampling::random_terminal(&mut rng, &s, 1, 1.0);
    let a = sampling::random_f0_scalar(&mut rng, &s, -0.5, 0.5);
    let mut drv = PointwiseDriver::zero(&s, 1);
    drv.constant = a.clone();
    drv.y_lin = L0Value::constant(&s, &[0.08]);
    drv.y_sin = L0Value::constant(&s, &[0.05]);
    let f = GeneratorSpec::Pointwise(drv);
    let t = Instant::now();
    let (sol, rep) = solve_bsde_integral(&f, &xi, 2.0, 1e-10, Mode::Conditional).unwrap();
    let el = t.elapsed().as_secs_f64();
    assert!(rep.converged());
    let oracle = brute_force_oracle(|_, atom, y, _| vec![a.s(atom) + 0.08 * y[0] + 0.05 * y[0].sin()], &xi, &s).unwrap();
    let gap = sol.max_abs_diff(&oracle);
    eprintln!("integral depth 8: gap {gap:e}, {el:.2}s, iterations {}", rep.iterations);
    assert!(gap < 1e-8);
}

#[test]
fn zu_driver_matches_oracle_depth8() {
    let mut rng = sampling::rng(22);
    let s = sampling::binomial_tree(&mut rng, 2, 8, false).unwrap();
    let xi = sampling::random_terminal(&mut rng, &s, 1, 1.0);
    let basis = Arc::new(DriverBasis::standard(&s, false).unwrap());
    let mut drv = PointwiseDriver::zero(&s, 1).with_basis(basis);
    drv.z_lin = sampling::random_f0_scalar(&mut rng, &s, 0.02, 0.2);
    drv.y_lin = L0Value::constant(&s, &[0.03]);
    let zl = drv.z_lin.clone();
    let t = Instant::now();
    let (sol, rep) = solve_bsde_zu(&drv, &xi, 1e-10).unwrap();
    let el = t.elapsed().as_secs_f64();
    let oracle = brute_force_oracle(|_, atom, y, z| vec![0.03 * y[0] - zl.s(atom) * z[0]], &xi, &s).unwrap();
    let gap = sol.max_abs_diff(&oracle);
    eprintln!("zu depth 8: gap {gap:e}, {el:.2}s, k {:?}", rep.extra["subinterval_count"]);
    assert!(gap < 1e-8);
}

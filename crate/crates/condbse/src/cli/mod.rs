//! Command-line front end: `solve`, `verify` and `demo`.
//!
//! Exit codes: 0 success, 2 reported non-convergence, 1 for configuration
//! errors, budget violations and every other failure.

pub mod config;
pub mod output;
pub mod suites;

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::bsecore::{pi, BseSolution, GeneratorSpec, InnerPlan};
use crate::error::{Error, Result};
use crate::probspace::{FilteredSpace, L0Value};
use crate::processes::{doob_constant, DriverBasis};
use crate::rnmodule::{CondNorm, SolveReport, Status};
use crate::solvers::{
    block_max, enumerate_counterexample_solutions, solve_auto, solve_bse_contraction, solve_bsde_delayed, solve_bsde_integral,
    solve_bsde_zu_with, solve_by_concatenation, solve_nonexpansive, ConditionalBall, ContractionBudget, Mode,
};
use config::{Method, RunConfig};

pub const COUNTEREXAMPLE_TOML: &str = include_str!("../../configs/counterexample.toml");
pub const CONTRACTION_TOML: &str = include_str!("../../configs/contraction.toml");

#[derive(Debug, Parser)]
#[command(name = "condbse", version, about = "Backward stochastic equations on finite filtered spaces")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the equation described by a TOML config.
    Solve {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (overrides `output.dir`).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run a property suite.
    Verify {
        #[arg(long)]
        suite: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Case count per check, or `small` for the minimal size (each suite has its own default).
        #[arg(long, value_parser = parse_cases)]
        cases: Option<usize>,
        /// Directory for `verify_report.json`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Built-in walkthroughs: `counterexample` (default) or `contraction`.
    Demo {
        #[arg(default_value = "counterexample")]
        name: String,
        /// Use this config instead of the built-in one.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

/// Exit code of a failed run.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::NonConvergence { .. } | Error::Diverged { .. } => 2,
        _ => 1,
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match cli.command {
        Command::Solve { config, out, tol, seed } => match RunConfig::load(&config) {
            Ok(cfg) => solve_command(cfg, out, tol, seed),
            Err(e) => fail(&e),
        },
        Command::Verify { suite, seed, cases, out } => verify_command(&suite, seed, cases, out.as_deref()),
        Command::Demo { name, config, out, tol, seed } => {
            let cfg = match (config, name.as_str()) {
                (Some(path), _) => RunConfig::load(&path),
                (None, "counterexample") => RunConfig::from_toml(COUNTEREXAMPLE_TOML),
                (None, "contraction") => RunConfig::from_toml(CONTRACTION_TOML),
                (None, other) => Err(Error::Config { field: "demo".into(), message: format!("unknown demo `{other}`") }),
            };
            match cfg {
                Ok(cfg) => solve_command(cfg, out, tol, seed),
                Err(e) => fail(&e),
            }
        }
    }
}

/// Case count used by `--cases small`.
pub const SMALL_CASES: usize = 2;

fn parse_cases(s: &str) -> std::result::Result<usize, String> {
    match s {
        "small" => Ok(SMALL_CASES),
        _ => s.parse::<usize>().map_err(|e| format!("{e}; expected a count or `small`")),
    }
}

fn fail(e: &Error) -> i32 {
    eprintln!("error: {e}");
    exit_code(e)
}

#[derive(Debug, Clone, Serialize)]
pub struct SpaceSummary {
    pub atoms: usize,
    pub steps: usize,
    pub horizon: f64,
    pub base_blocks: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct FamilyMember {
    pub member: usize,
    /// `Y₀` per F₀ block.
    pub y0: Vec<f64>,
    pub bse_residual: f64,
    pub fixed_point_gap: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConcatSummary {
    pub glued_residual: f64,
    pub direct_agreement: Option<f64>,
    pub part_iterations: Vec<usize>,
}

/// Contents of `report.json`; field order is the serialisation order.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub command: String,
    pub status: String,
    pub exit_code: i32,
    pub error: Option<String>,
    pub seed: u64,
    pub method: String,
    pub generator: Option<String>,
    pub mode: Mode,
    pub p: f64,
    pub tol: f64,
    pub t0: usize,
    pub space: Option<SpaceSummary>,
    pub iterations: Option<usize>,
    pub bse_residual: Option<f64>,
    /// Equation residual per base block.
    pub per_block_residual: Vec<f64>,
    pub observed_ratio_max: Vec<f64>,
    pub ratio_bound: Vec<f64>,
    /// Random iteration count `L` per base block.
    pub iteration_count: Vec<usize>,
    /// Subinterval counts `k` per F₀ block (Z/U and delayed solvers).
    pub subinterval_count: Option<serde_json::Value>,
    pub family: Vec<FamilyMember>,
    pub concatenation: Option<ConcatSummary>,
    pub solver: Option<SolveReport>,
}

/// A finished solve: the report plus whatever should land in the CSV.
#[derive(Debug, Clone)]
pub struct SolveRun {
    pub report: RunReport,
    pub solution: Option<BseSolution>,
    pub family: Vec<BseSolution>,
    pub basis: Option<Arc<DriverBasis>>,
}

impl SolveRun {
    pub fn exit_code(&self) -> i32 {
        self.report.exit_code
    }
}

/// Runs the configured solve without touching the file system.
pub fn run_solve(cfg: &RunConfig) -> SolveRun {
    let mut report = RunReport {
        command: "solve".into(),
        status: "error".into(),
        exit_code: 1,
        error: None,
        seed: cfg.seed,
        method: cfg.solver.method.name().into(),
        generator: None,
        mode: cfg.mode(),
        p: cfg.p,
        tol: cfg.solver.tol,
        t0: cfg.t0,
        space: None,
        iterations: None,
        bse_residual: None,
        per_block_residual: Vec::new(),
        observed_ratio_max: Vec::new(),
        ratio_bound: Vec::new(),
        iteration_count: Vec::new(),
        subinterval_count: None,
        family: Vec::new(),
        concatenation: None,
        solver: None,
    };
    let mut run = SolveRun { report: report.clone(), solution: None, family: Vec::new(), basis: None };
    match solve_inner(cfg, &mut report, &mut run) {
        Ok(()) => {}
        Err(e) => {
            report.exit_code = exit_code(&e);
            report.status = if report.exit_code == 2 { "non-convergence".into() } else { "error".into() };
            report.error = Some(e.to_string());
        }
    }
    run.report = report;
    run
}

fn solve_inner(cfg: &RunConfig, report: &mut RunReport, run: &mut SolveRun) -> Result<()> {
    let space = cfg.build_space()?;
    report.space = Some(SpaceSummary {
        atoms: space.n_atoms(),
        steps: space.steps(),
        horizon: space.horizon(),
        base_blocks: space.base().n_blocks(),
    });
    let xi = if cfg.solver.method == Method::Concatenation { None } else { Some(cfg.terminal(&space)?) };
    let dim = xi.as_ref().map_or(cfg.terminal.blocks.first().map_or(cfg.terminal.dim, |b| b.dim), |x| x.dim());
    let f = cfg.generator(&space, dim)?;
    report.generator = Some(f.kind().into());
    run.basis = DriverBasis::standard(&space, cfg.generator.jumps).ok().map(Arc::new);
    let mode = cfg.mode();
    let (p, tol) = (cfg.p, cfg.solver.tol);
    let base = mode.base(&space);

    let (sol, xi, rep) = match cfg.solver.method {
        Method::Counterexample => {
            let xi = xi.expect("terminal built");
            let a = match &f {
                GeneratorSpec::PathFunctional { a } => a.clone(),
                _ => return Err(config_error("generator.kind", "the counterexample needs kind = \"path-functional\"")),
            };
            let y0s = if cfg.solver.y0.is_empty() {
                [-2.0, -1.0, 0.0, 1.0, 2.0].iter().map(|c| config::Param::Scalar(*c)).collect()
            } else {
                cfg.solver.y0.clone()
            };
            let y0s = y0s
                .iter()
                .enumerate()
                .map(|(i, y)| Ok(y.to_l0(&space, &format!("solver.y0[{i}]"))?.map_atoms(dim, |_, v| vec![v[0]; dim])))
                .collect::<Result<Vec<L0Value>>>()?;
            let family = enumerate_counterexample_solutions(&xi, &a, &y0s)?;
            let plan = InnerPlan::causal(&space, p)?;
            for (j, (sol, y0)) in family.iter().zip(&y0s).enumerate() {
                let v = pi(&sol.y, &sol.m);
                let gv = crate::bsecore::g_map(&f, &xi, &v, 1e-13, &plan)?;
                report.family.push(FamilyMember {
                    member: j,
                    y0: space.base().blocks().iter().map(|b| y0.s(b[0])).collect(),
                    bse_residual: sol.residual(&f, &xi)?,
                    fixed_point_gap: gv.max_abs_diff(&v),
                });
            }
            report.status = "converged".into();
            report.exit_code = 0;
            report.per_block_residual = vec![report.family.iter().map(|m| m.bse_residual).fold(0.0, f64::max); base.n_blocks()];
            run.family = family;
            return Ok(());
        }
        Method::Concatenation => {
            let parts = cfg.terminal_parts(&space)?;
            let out = solve_by_concatenation(&f, &parts, p, tol)?;
            report.concatenation = Some(ConcatSummary {
                glued_residual: out.residual,
                direct_agreement: out.agreement,
                part_iterations: out.part_reports.iter().map(|r| r.iterations).collect(),
            });
            report.iterations = Some(out.part_reports.iter().map(|r| r.iterations).sum());
            let rep = out.part_reports.into_iter().next();
            (out.glued, out.xi, rep)
        }
        Method::Nonexpansive => {
            let xi = xi.expect("terminal built");
            let radius = match &cfg.solver.radius {
                Some(r) => r.to_l0(&space, "solver.radius")?,
                None => {
                    let norm = CondNorm::new(&space, p, base.clone())?;
                    let rxi = norm.to_l0(&norm.block_norms(&xi));
                    match &f {
                        GeneratorSpec::BoundedLipschitz { bound, .. } => &rxi + &(bound * (1.0 / (2.0 * doob_constant(p)))),
                        _ => return Err(config_error("solver.radius", "required unless the generator is bounded-lipschitz")),
                    }
                }
            };
            let center = match &f {
                GeneratorSpec::BoundedLipschitz { .. } => L0Value::zeros(&space, dim),
                _ => xi.clone(),
            };
            let ball = ConditionalBall { center, radius };
            let out = solve_nonexpansive(&f, &xi, &ball, cfg.solver.lambda, tol, cfg.solver.max_iter, p, mode)?;
            match out.solution {
                Some(sol) => (sol, xi, Some(out.report)),
                None => {
                    fill_from_solver(report, &out.report);
                    report.status = match out.report.status {
                        Status::Diverged => "diverged".into(),
                        _ => "inconclusive".into(),
                    };
                    report.exit_code = 2;
                    report.error = Some(format!("Mann iteration stopped after {} iterations without meeting the tolerance", out.report.iterations));
                    report.solver = Some(out.report);
                    return Ok(());
                }
            }
        }
        method => {
            let xi = xi.expect("terminal built");
            let (sol, rep) = dispatch(method, cfg, &f, &xi, &space)?;
            (sol, xi, Some(rep))
        }
    };
    report.bse_residual = Some(sol.residual(&f, &xi)?);
    report.per_block_residual = output::block_residuals(&sol, &f, &xi, &base)?;
    if let Some(rep) = rep {
        fill_from_solver(report, &rep);
        report.solver = Some(rep);
    }
    report.status = "converged".into();
    report.exit_code = 0;
    run.solution = Some(sol);
    Ok(())
}

fn fill_from_solver(report: &mut RunReport, rep: &SolveReport) {
    if report.iterations.is_none() {
        report.iterations = Some(rep.iterations);
    }
    report.observed_ratio_max = rep.max_observed_ratio.clone();
    report.ratio_bound = rep.ratio_bound.clone();
    report.iteration_count = rep.iteration_count.clone();
    report.subinterval_count = rep.extra.get("subinterval_count").cloned();
}

fn config_error(field: &str, message: &str) -> Error {
    Error::Config { field: field.into(), message: message.into() }
}

fn dispatch(
    method: Method,
    cfg: &RunConfig,
    f: &GeneratorSpec,
    xi: &L0Value,
    space: &Arc<FilteredSpace>,
) -> Result<(BseSolution, SolveReport)> {
    let mode = cfg.mode();
    let (p, tol) = (cfg.p, cfg.solver.tol);
    match method {
        Method::Auto => solve_auto(f, xi, p, tol, mode),
        Method::Contraction => {
            let c = cfg
                .solver
                .lipschitz
                .as_ref()
                .ok_or_else(|| config_error("solver.lipschitz", "required for method = \"contraction\""))?
                .to_l0(space, "solver.lipschitz")?;
            let base = mode.base(space);
            let l = cfg.solver.iterations.clone().unwrap_or_else(|| vec![1; base.n_blocks()]);
            if l.len() != base.n_blocks() {
                return Err(config_error("solver.iterations", &format!("{} entries for {} base blocks", l.len(), base.n_blocks())));
            }
            let budget = ContractionBudget::from_blocks(space, p, &base, block_max(&c.map(f64::abs), &base), l)?;
            solve_bse_contraction(f, xi, &budget, tol, cfg.solver.max_iter)
        }
        Method::Integral => solve_bsde_integral(f, xi, p, tol, mode),
        Method::Zu => match f {
            GeneratorSpec::Pointwise(d) => {
                if p != 2.0 {
                    return Err(config_error("p", "the Z/U solver needs p = 2"));
                }
                solve_bsde_zu_with(d, xi, tol, None, mode)
            }
            _ => Err(config_error("generator.kind", "method = \"zu\" needs a pointwise generator")),
        },
        Method::Delayed => match f {
            GeneratorSpec::Delayed { g, v } => {
                if p != 2.0 {
                    return Err(config_error("p", "the delayed solver needs p = 2"));
                }
                solve_bsde_delayed(g, None, v, xi, tol, mode)
            }
            _ => Err(config_error("generator.kind", "method = \"delayed\" needs a delayed generator")),
        },
        Method::Nonexpansive | Method::Counterexample | Method::Concatenation => unreachable!("handled by the caller"),
    }
}

/// Writes `report.json` and `solution.csv` (or `family.csv`) into `dir`.
pub fn write_artifacts(run: &SolveRun, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    output::write_json(&dir.join("report.json"), &run.report)?;
    if let Some(sol) = &run.solution {
        output::write_solution_csv(&dir.join("solution.csv"), sol, run.basis.as_deref())?;
    }
    if !run.family.is_empty() {
        output::write_family_csv(&dir.join("family.csv"), &run.family)?;
    }
    Ok(())
}

fn solve_command(mut cfg: RunConfig, out: Option<PathBuf>, tol: Option<f64>, seed: Option<u64>) -> i32 {
    if let Some(t) = tol {
        if !(t > 0.0) || !t.is_finite() {
            return fail(&config_error("--tol", "must be a positive number"));
        }
        cfg.solver.tol = t;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let dir = out.unwrap_or_else(|| cfg.output.dir.clone());
    let run = run_solve(&cfg);
    if let Err(e) = write_artifacts(&run, &dir) {
        return fail(&e);
    }
    let r = &run.report;
    match &r.error {
        Some(msg) => eprintln!("error: {msg}"),
        None => {
            println!("status: {}", r.status);
            if let Some(res) = r.bse_residual {
                println!("equation residual: {}", output::num(res));
            }
            if let Some(it) = r.iterations {
                println!("iterations: {it}");
            }
            if !r.iteration_count.is_empty() {
                println!("iteration count per block: {:?}", r.iteration_count);
            }
            for m in &r.family {
                println!(
                    "member {}: Y0 = {:?}, residual {}, |G(V) - V| = {}",
                    m.member,
                    m.y0,
                    output::num(m.bse_residual),
                    output::num(m.fixed_point_gap)
                );
            }
        }
    }
    println!("artifacts: {}", dir.display());
    r.exit_code
}

fn verify_command(suite: &str, seed: u64, cases: Option<usize>, out: Option<&Path>) -> i32 {
    let start = std::time::Instant::now();
    let reports = match suites::run_suite(suite, seed, cases) {
        Ok(r) => r,
        Err(e) => return fail(&e),
    };
    let mut all = true;
    for s in &reports {
        for c in &s.checks {
            println!(
                "{} {:<14} {:<48} cases {:>6} worst {:<12} tol {}",
                if c.passed { "PASS" } else { "FAIL" },
                s.suite,
                c.name,
                c.cases,
                output::num(c.worst),
                output::num(c.tolerance)
            );
            for v in &c.violations {
                println!("       {v}");
            }
        }
        all &= s.passed;
    }
    eprintln!("elapsed {:.2}s", start.elapsed().as_secs_f64());
    if let Some(dir) = out {
        let doc = suites::VerifyReport { suite: suite.to_string(), seed, passed: all, suites: reports };
        if let Err(e) = std::fs::create_dir_all(dir).map_err(Error::from).and_then(|_| output::write_json(&dir.join("verify_report.json"), &doc)) {
            return fail(&e);
        }
    }
    if all {
        0
    } else {
        1
    }
}

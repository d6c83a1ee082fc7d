//! TOML run configuration and its translation into spaces, generators and
//! terminal values. Field names are documented in `docs/config.md`.

use std::path::PathBuf;
use std::sync::Arc;

use serde::Deserialize;

use crate::bsecore::{GeneratorSpec, IntegralDriver, Phi, PointwiseDriver, RandomMeasure};
use crate::error::{Error, Result};
use crate::probspace::{cond_expect_at, FilteredSpace, L0Value};
use crate::processes::DriverBasis;
use crate::sampling;
use crate::solvers::Mode;

fn cfg_err(field: &str, message: impl Into<String>) -> Error {
    Error::Config { field: field.to_string(), message: message.into() }
}

/// A number, or one number per F₀ block.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum Param {
    Scalar(f64),
    PerBlock(Vec<f64>),
}

impl Param {
    /// F₀-measurable scalar on `space`.
    pub fn to_l0(&self, space: &Arc<FilteredSpace>, field: &str) -> Result<L0Value> {
        let base = space.base();
        let per = match self {
            Param::Scalar(v) => vec![*v; base.n_blocks()],
            Param::PerBlock(v) if v.len() == base.n_blocks() => v.clone(),
            Param::PerBlock(v) => {
                return Err(cfg_err(field, format!("{} values given for {} F₀ blocks", v.len(), base.n_blocks())))
            }
        };
        if let Some(x) = per.iter().find(|x| !x.is_finite()) {
            return Err(cfg_err(field, format!("value {x} is not finite")));
        }
        L0Value::from_blocks(space, base, &per)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_p")]
    pub p: f64,
    /// Grid index whose partition serves as the initial sigma-algebra.
    #[serde(default)]
    pub t0: usize,
    pub space: SpaceConfig,
    #[serde(default)]
    pub generator: GeneratorConfig,
    pub terminal: TerminalConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

fn default_p() -> f64 {
    2.0
}

fn default_horizon() -> f64 {
    1.0
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceConfig {
    /// Children per node at each step; a single entry is repeated `steps` times.
    pub branching: Vec<usize>,
    pub steps: Option<usize>,
    /// Child probabilities per step; an empty row or a missing row means uniform.
    #[serde(default)]
    pub probabilities: Vec<Vec<f64>>,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    /// Number of atoms-groups of F₀ (1 for a trivial F₀).
    #[serde(default = "one")]
    pub base_blocks: usize,
    /// Probabilities of the F₀ blocks, uniform when absent.
    pub base_probabilities: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GeneratorKind {
    #[default]
    Zero,
    Integral,
    Pointwise,
    Delayed,
    PathFunctional,
    BoundedLipschitz,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorConfig {
    #[serde(default)]
    pub kind: GeneratorKind,
    // integral driver
    pub h: Option<Param>,
    pub c1: Option<Param>,
    pub c2: Option<Param>,
    pub phi: Option<String>,
    // pointwise / delayed driver
    pub constant: Option<Param>,
    pub y_lin: Option<Param>,
    pub y_sin: Option<Param>,
    pub z_lin: Option<Param>,
    pub z_abs: Option<Param>,
    pub u_lin: Option<Param>,
    /// Add one compensated jump driver per child beyond the second.
    #[serde(default)]
    pub jumps: bool,
    /// Delay weights `v_0..v_N`, one list or one list per F₀ block.
    pub delay: Option<DelayWeights>,
    // path functional / bounded Lipschitz
    pub a: Option<Param>,
    pub bound: Option<Param>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum DelayWeights {
    Shared(Vec<f64>),
    PerBlock(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TerminalKind {
    #[default]
    Values,
    /// Terminal value of the standard walk.
    Walk,
    /// Running maximum of the walk up to the horizon.
    RunningMax,
    /// `max(W_T − strike, 0)`.
    Call,
    /// `max(strike − W_T, 0)`.
    Put,
    /// `1{W_T > strike}`.
    Digital,
    /// Uniform in `[−1, 1]` per atom, drawn from the run seed.
    Random,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TerminalConfig {
    #[serde(default)]
    pub kind: TerminalKind,
    /// Per-atom values (`dim` consecutive numbers per atom).
    pub values: Option<Vec<f64>>,
    #[serde(default = "one")]
    pub dim: usize,
    #[serde(default)]
    pub strike: f64,
    pub scale: Option<f64>,
    #[serde(default)]
    pub offset: f64,
    /// Subtract `E₀ξ`.
    #[serde(default)]
    pub center: bool,
    /// One terminal spec per F₀ block, glued along the blocks.
    #[serde(default)]
    pub blocks: Vec<TerminalConfig>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    #[default]
    Auto,
    Contraction,
    Integral,
    Zu,
    Delayed,
    Nonexpansive,
    Counterexample,
    Concatenation,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Auto => "auto",
            Method::Contraction => "contraction",
            Method::Integral => "integral",
            Method::Zu => "zu",
            Method::Delayed => "delayed",
            Method::Nonexpansive => "nonexpansive",
            Method::Counterexample => "counterexample",
            Method::Concatenation => "concatenation",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeConfig {
    #[default]
    Conditional,
    Classical,
}

impl From<ModeConfig> for Mode {
    fn from(m: ModeConfig) -> Mode {
        match m {
            ModeConfig::Conditional => Mode::Conditional,
            ModeConfig::Classical => Mode::Classical,
        }
    }
}

fn default_tol() -> f64 {
    1e-10
}

fn default_max_iter() -> usize {
    1000
}

fn default_lambda() -> f64 {
    0.5
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default)]
    pub method: Method,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default)]
    pub mode: ModeConfig,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    /// Contraction constant `C` for `method = "contraction"`.
    pub lipschitz: Option<Param>,
    /// Iteration count `L` per F₀ block for `method = "contraction"`.
    pub iterations: Option<Vec<usize>>,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    /// Ball radius for `method = "nonexpansive"` (default `|||ξ||| + B/(2C_p)`).
    pub radius: Option<Param>,
    /// Initial values `Y₀` listed by the counterexample family.
    #[serde(default)]
    pub y0: Vec<Param>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            method: Method::Auto,
            tol: default_tol(),
            mode: ModeConfig::Conditional,
            max_iter: default_max_iter(),
            lipschitz: None,
            iterations: None,
            lambda: default_lambda(),
            radius: None,
            y0: Vec::new(),
        }
    }
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_out")]
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: default_out() }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| {
            let field = e.span().map(|s| field_at(text, s.start)).unwrap_or_else(|| "config".into());
            cfg_err(&field, e.message().to_string())
        })?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    fn check(&self) -> Result<()> {
        if !(self.p > 1.0) {
            return Err(cfg_err("p", format!("need p > 1, got {}", self.p)));
        }
        if !(self.solver.tol > 0.0) || !self.solver.tol.is_finite() {
            return Err(cfg_err("solver.tol", "must be a positive number"));
        }
        if self.solver.max_iter == 0 {
            return Err(cfg_err("solver.max_iter", "must be positive"));
        }
        if !(self.solver.lambda > 0.0 && self.solver.lambda <= 1.0) {
            return Err(cfg_err("solver.lambda", "must lie in (0, 1]"));
        }
        if self.space.base_blocks == 0 {
            return Err(cfg_err("space.base_blocks", "must be at least 1"));
        }
        Ok(())
    }

    /// The full tree; F₀ has `base_blocks` blocks.
    pub fn build_full_space(&self) -> Result<Arc<FilteredSpace>> {
        let sc = &self.space;
        let branching = match (sc.steps, sc.branching.as_slice()) {
            (Some(n), [b]) => vec![*b; n],
            (Some(n), bs) if bs.len() == n => bs.to_vec(),
            (Some(n), bs) => {
                return Err(cfg_err("space.steps", format!("{n} steps but {} branching entries", bs.len())))
            }
            (None, []) => return Err(cfg_err("space.branching", "at least one step is needed")),
            (None, bs) => bs.to_vec(),
        };
        if sc.probabilities.len() > branching.len() {
            return Err(cfg_err("space.probabilities", "more rows than steps"));
        }
        let mut steps = Vec::with_capacity(branching.len() + 1);
        let mut probs: Vec<Option<Vec<f64>>> = Vec::new();
        if sc.base_blocks > 1 {
            steps.push(sc.base_blocks);
            probs.push(sc.base_probabilities.clone());
        } else if sc.base_probabilities.is_some() {
            return Err(cfg_err("space.base_probabilities", "needs base_blocks > 1"));
        }
        steps.extend_from_slice(&branching);
        for k in 0..branching.len() {
            probs.push(sc.probabilities.get(k).filter(|r| !r.is_empty()).cloned());
        }
        let n = branching.len() as f64;
        let wrap = |e: Error| cfg_err("space", e.to_string());
        if sc.base_blocks > 1 {
            // one leading step builds F₀; the horizon is stretched so that the
            // remaining grid covers [t₁, t₁ + horizon]
            FilteredSpace::tree(&steps, &probs, sc.horizon * (n + 1.0) / n).and_then(|s| s.restrict_from(1)).map_err(wrap)
        } else {
            FilteredSpace::tree(&steps, &probs, sc.horizon).map_err(wrap)
        }
    }

    /// The space the equation is posed on (from grid index `t0`).
    pub fn build_space(&self) -> Result<Arc<FilteredSpace>> {
        let full = self.build_full_space()?;
        if self.t0 == 0 {
            return Ok(full);
        }
        if self.t0 >= full.steps() {
            return Err(cfg_err("t0", format!("must be below the number of steps {}", full.steps())));
        }
        full.restrict_from(self.t0).map_err(|e| cfg_err("t0", e.to_string()))
    }

    pub fn driver_basis(&self, space: &Arc<FilteredSpace>) -> Result<Arc<DriverBasis>> {
        DriverBasis::standard(space, self.generator.jumps).map(Arc::new).map_err(|e| cfg_err("generator.jumps", e.to_string()))
    }

    pub fn generator(&self, space: &Arc<FilteredSpace>, dim: usize) -> Result<GeneratorSpec> {
        let g = &self.generator;
        let get = |name: &str, v: &Option<Param>| -> Result<L0Value> {
            match v {
                Some(p) => p.to_l0(space, &format!("generator.{name}")),
                None => Ok(L0Value::zeros(space, 1)),
            }
        };
        let need = |name: &str, v: &Option<Param>| -> Result<L0Value> {
            if v.is_none() {
                return Err(cfg_err(&format!("generator.{name}"), "required for this generator kind"));
            }
            get(name, v)
        };
        let broadcast = |c: &L0Value| c.map_atoms(dim, |_, v| vec![v[0]; dim]);
        let pointwise = |with_y: bool| -> Result<PointwiseDriver> {
            let mut d = PointwiseDriver::zero(space, dim);
            d.constant = broadcast(&get("constant", &g.constant)?);
            if with_y {
                d.y_lin = get("y_lin", &g.y_lin)?;
                d.y_sin = get("y_sin", &g.y_sin)?;
            } else if g.y_lin.is_some() || g.y_sin.is_some() {
                return Err(cfg_err("generator.y_lin", "delayed drivers do not depend on y"));
            }
            d.z_lin = get("z_lin", &g.z_lin)?;
            d.z_abs = get("z_abs", &g.z_abs)?;
            d.u_lin = get("u_lin", &g.u_lin)?;
            if d.uses_zu() {
                d = d.with_basis(self.driver_basis(space)?);
            }
            Ok(d)
        };
        let spec = match g.kind {
            GeneratorKind::Zero => GeneratorSpec::Zero { dim },
            GeneratorKind::Integral => {
                let phi = match g.phi.as_deref() {
                    None | Some("identity") => Phi::Identity,
                    Some("sin") => Phi::Sin,
                    Some(other) => return Err(cfg_err("generator.phi", format!("unknown nonlinearity `{other}`"))),
                };
                GeneratorSpec::Integral(IntegralDriver {
                    h: broadcast(&get("h", &g.h)?),
                    c1: get("c1", &g.c1)?,
                    c2: get("c2", &g.c2)?,
                    phi,
                    p: self.p,
                })
            }
            GeneratorKind::Pointwise => GeneratorSpec::Pointwise(pointwise(true)?),
            GeneratorKind::Delayed => {
                let n = space.steps();
                let per = match &g.delay {
                    None => return Err(cfg_err("generator.delay", "required for delayed generators")),
                    Some(DelayWeights::Shared(w)) => vec![w.clone(); space.base().n_blocks()],
                    Some(DelayWeights::PerBlock(w)) => w.clone(),
                };
                if per.iter().any(|w| w.len() > n + 1) {
                    return Err(cfg_err("generator.delay", format!("at most {} weights (v_0..v_N)", n + 1)));
                }
                let v = RandomMeasure::new(space.base(), per).map_err(|e| cfg_err("generator.delay", e.to_string()))?;
                GeneratorSpec::Delayed { g: pointwise(false)?, v }
            }
            GeneratorKind::PathFunctional => GeneratorSpec::PathFunctional { a: need("a", &g.a)? },
            GeneratorKind::BoundedLipschitz => {
                let bound = need("bound", &g.bound)?;
                if bound.values().iter().any(|b| *b < 0.0) {
                    return Err(cfg_err("generator.bound", "must be nonnegative"));
                }
                GeneratorSpec::BoundedLipschitz { bound, p: self.p }
            }
        };
        spec.validate(space).map_err(|e| cfg_err("generator", e.to_string()))?;
        Ok(spec)
    }

    /// Terminal value on the full tree, then on the solve space.
    pub fn terminal(&self, space: &Arc<FilteredSpace>) -> Result<L0Value> {
        let full = self.build_full_space()?;
        let xi = terminal_on(&self.terminal, &full, self.seed, "terminal")?;
        let xi = xi.rebase(space).map_err(|e| cfg_err("terminal", e.to_string()))?;
        Ok(xi)
    }

    /// `(block atoms, ξ_n)` pairs when the terminal is glued per F₀ block.
    pub fn terminal_parts(&self, space: &Arc<FilteredSpace>) -> Result<Vec<(Vec<usize>, L0Value)>> {
        let tc = &self.terminal;
        if tc.blocks.is_empty() {
            return Err(cfg_err("terminal.blocks", "concatenation needs one terminal spec per F₀ block"));
        }
        let full = self.build_full_space()?;
        let base = space.base();
        if tc.blocks.len() != base.n_blocks() {
            return Err(cfg_err("terminal.blocks", format!("{} specs for {} F₀ blocks", tc.blocks.len(), base.n_blocks())));
        }
        tc.blocks
            .iter()
            .enumerate()
            .map(|(b, t)| {
                let field = format!("terminal.blocks[{b}]");
                let x = terminal_on(t, &full, self.seed.wrapping_add(b as u64), &field)?;
                Ok((base.block(b).to_vec(), x.rebase(space).map_err(|e| cfg_err(&field, e.to_string()))?))
            })
            .collect()
    }

    pub fn mode(&self) -> Mode {
        self.solver.mode.into()
    }
}

/// Walk path `W_0..W_N` of the standard basis, or an error naming `field`.
fn walk_path(space: &Arc<FilteredSpace>, field: &str) -> Result<Vec<L0Value>> {
    let basis = DriverBasis::standard(space, false).map_err(|e| cfg_err(field, e.to_string()))?;
    let w = basis.walk_index().ok_or_else(|| cfg_err(field, "the tree carries no walk"))?;
    Ok(basis.drivers()[w].process().values().to_vec())
}

fn terminal_on(tc: &TerminalConfig, space: &Arc<FilteredSpace>, seed: u64, field: &str) -> Result<L0Value> {
    if !tc.blocks.is_empty() {
        let base = space.base().clone();
        if tc.blocks.len() != base.n_blocks() {
            return Err(cfg_err(&format!("{field}.blocks"), format!("{} specs for {} F₀ blocks", tc.blocks.len(), base.n_blocks())));
        }
        let parts = tc
            .blocks
            .iter()
            .enumerate()
            .map(|(b, t)| terminal_on(t, space, seed.wrapping_add(b as u64), &format!("{field}.blocks[{b}]")))
            .collect::<Result<Vec<_>>>()?;
        let refs: Vec<&L0Value> = parts.iter().collect();
        let glued = <L0Value as crate::l0algebra::Glue>::glue(&base, &refs).map_err(|e| cfg_err(field, e.to_string()))?;
        return finish(tc, glued, field);
    }
    let n = space.n_atoms();
    let raw = match tc.kind {
        TerminalKind::Values => {
            let v = tc.values.clone().ok_or_else(|| cfg_err(&format!("{field}.values"), "required for kind = \"values\""))?;
            if tc.dim == 0 || v.len() != n * tc.dim {
                return Err(cfg_err(&format!("{field}.values"), format!("expected {} numbers ({n} atoms × dim {})", n * tc.dim, tc.dim)));
            }
            L0Value::new(space, tc.dim, v).map_err(|e| cfg_err(field, e.to_string()))?
        }
        TerminalKind::Random => {
            let mut rng = sampling::rng(seed);
            sampling::random_terminal(&mut rng, space, tc.dim, 1.0)
        }
        kind => {
            if tc.dim != 1 {
                return Err(cfg_err(&format!("{field}.dim"), "walk expressions are scalar"));
            }
            let path = walk_path(space, field)?;
            let wt = path.last().expect("grid has a terminal time").clone();
            let k = tc.strike;
            match kind {
                TerminalKind::Walk => wt,
                TerminalKind::RunningMax => {
                    wt.map_atoms(1, |a, _| vec![path.iter().map(|w| w.s(a)).fold(f64::NEG_INFINITY, f64::max)])
                }
                TerminalKind::Call => wt.map(|w| (w - k).max(0.0)),
                TerminalKind::Put => wt.map(|w| (k - w).max(0.0)),
                TerminalKind::Digital => wt.map(|w| if w > k { 1.0 } else { 0.0 }),
                TerminalKind::Values | TerminalKind::Random => unreachable!(),
            }
        }
    };
    finish(tc, raw, field)
}

fn finish(tc: &TerminalConfig, x: L0Value, field: &str) -> Result<L0Value> {
    let scale = tc.scale.unwrap_or(1.0);
    if !scale.is_finite() || !tc.offset.is_finite() {
        return Err(cfg_err(field, "scale and offset must be finite"));
    }
    let mut out = x.map(|v| scale * v + tc.offset);
    if tc.center {
        out = &out - &cond_expect_at(&out, 0);
    }
    if !out.is_finite() {
        return Err(cfg_err(field, "terminal value is not finite"));
    }
    Ok(out)
}

/// Dotted path of the innermost TOML table/key enclosing byte offset `pos`.
fn field_at(text: &str, pos: usize) -> String {
    let mut table = String::new();
    let mut key = String::new();
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        let start = offset;
        offset += line.len();
        let t = line.trim();
        if start > pos {
            break;
        }
        if let Some(inner) = t.strip_prefix('[') {
            table = inner.trim_start_matches('[').split(']').next().unwrap_or("").trim().to_string();
            key.clear();
        } else if let Some((k, _)) = t.split_once('=') {
            key = k.trim().to_string();
        }
    }
    match (table.is_empty(), key.is_empty()) {
        (true, true) => "config".into(),
        (true, false) => key,
        (false, true) => table,
        (false, false) => format!("{table}.{key}"),
    }
}

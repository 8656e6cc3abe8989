//! Experiment configuration files.
//!
//! Each subcommand reads its own JSON object. Unknown keys are rejected so that a misspelled
//! option never silently falls back to a default.

use std::path::PathBuf;

use dclab::fields::Grid;
use dclab::geometry::DomainSpec;
use dclab::inequalities::InequalityCase;
use dclab::operators::BogovskiiKernel;
use dclab::solver::{ConvectiveForm, ForcingSpec, LocalBall, ModelParams, RegFlavor, SolverConfig};
use dclab::truncation::NullSequenceSpec;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Solve,
    Sweep,
    Inequality,
    Muckenhoupt,
    Bogovskii,
    Truncate,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::Sweep => "sweep",
            Command::Inequality => "inequality",
            Command::Muckenhoupt => "muckenhoupt",
            Command::Bogovskii => "bogovskii",
            Command::Truncate => "truncate",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Cells {
    Uniform(usize),
    PerAxis([usize; 3]),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(default = "DomainSpec::unit_cube")]
    pub domain: DomainSpec,
    pub cells: Cells,
}

impl GridSpec {
    pub fn build(&self) -> Result<Grid, CliError> {
        let cells = match self.cells {
            Cells::Uniform(n) => [n; 3],
            Cells::PerAxis(c) => c,
        };
        Grid::new(self.domain.clone(), cells).map_err(|e| CliError::Config(format!("grid: {e}")))
    }
}

fn yes() -> bool {
    true
}

/// Output format flags.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputOptions {
    /// Write gnuplot scripts next to the CSV files.
    #[serde(default = "yes")]
    pub plots: bool,
    /// Store solution fields (binary with a JSON header).
    #[serde(default = "yes")]
    pub fields: bool,
}

impl Default for OutputOptions {
    fn default() -> Self {
        Self { plots: true, fields: true }
    }
}

fn default_weak_tests() -> usize {
    20
}
fn zero() -> f64 {
    0.0
}
fn no_forcing() -> ForcingSpec {
    ForcingSpec::Zero
}
fn default_tol() -> f64 {
    SolverConfig::default().tol
}
fn default_max_iter() -> usize {
    SolverConfig::default().max_iter
}
fn default_damping() -> f64 {
    SolverConfig::default().damping
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveConfig {
    pub grid: GridSpec,
    pub p: f64,
    pub alpha: f64,
    #[serde(default = "zero")]
    pub kappa: f64,
    #[serde(default = "zero")]
    pub nu0: f64,
    /// Single regularization parameter; exclusive with `eps_schedule`.
    #[serde(default)]
    pub eps: Option<f64>,
    /// Strictly decreasing parameters for a warm-started continuation.
    #[serde(default)]
    pub eps_schedule: Option<Vec<f64>>,
    #[serde(default)]
    pub p_reg: Option<f64>,
    #[serde(default)]
    pub reg_flavor: RegFlavor,
    #[serde(default)]
    pub convective_form: ConvectiveForm,
    #[serde(default = "no_forcing")]
    pub forcing: ForcingSpec,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_damping")]
    pub damping: f64,
    /// Number of random solenoidal test fields for the weak-form check.
    #[serde(default = "default_weak_tests")]
    pub weak_tests: usize,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub output: OutputOptions,
}

impl SolveConfig {
    /// Model at the first (or only) regularization parameter.
    pub fn model(&self) -> ModelParams {
        let eps = self.eps.or_else(|| self.eps_schedule.as_ref().and_then(|s| s.first().copied())).unwrap_or(0.0);
        ModelParams {
            p: self.p,
            alpha: self.alpha,
            kappa: self.kappa,
            nu0: self.nu0,
            eps,
            p_reg: self.p_reg,
            reg_flavor: self.reg_flavor,
            convective_form: self.convective_form,
        }
    }

    pub fn solver(&self) -> SolverConfig {
        SolverConfig { tol: self.tol, max_iter: self.max_iter, damping: self.damping }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    Alpha,
    P,
    Eps,
    Nu0,
    Kappa,
    ForcingScale,
}

impl SweepParameter {
    pub fn name(self) -> &'static str {
        match self {
            SweepParameter::Alpha => "alpha",
            SweepParameter::P => "p",
            SweepParameter::Eps => "eps",
            SweepParameter::Nu0 => "nu0",
            SweepParameter::Kappa => "kappa",
            SweepParameter::ForcingScale => "forcing_scale",
        }
    }

    /// Model and forcing of one sweep point.
    pub fn apply(self, model: &ModelParams, forcing: &ForcingSpec, value: f64) -> (ModelParams, ForcingSpec) {
        let mut m = *model;
        let mut f = forcing.clone();
        match self {
            SweepParameter::Alpha => m.alpha = value,
            SweepParameter::P => m.p = value,
            SweepParameter::Eps => m.eps = value,
            SweepParameter::Nu0 => m.nu0 = value,
            SweepParameter::Kappa => m.kappa = value,
            SweepParameter::ForcingScale => f = forcing.with_scale(value),
        }
        (m, f)
    }
}

/// A solve repeated over the values of one parameter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub grid: GridSpec,
    pub p: f64,
    pub alpha: f64,
    #[serde(default = "zero")]
    pub kappa: f64,
    #[serde(default = "zero")]
    pub nu0: f64,
    #[serde(default = "zero")]
    pub eps: f64,
    #[serde(default)]
    pub p_reg: Option<f64>,
    #[serde(default)]
    pub reg_flavor: RegFlavor,
    #[serde(default)]
    pub convective_form: ConvectiveForm,
    #[serde(default = "no_forcing")]
    pub forcing: ForcingSpec,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_damping")]
    pub damping: f64,
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
    #[serde(default = "default_weak_tests")]
    pub weak_tests: usize,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub output: OutputOptions,
}

impl SweepConfig {
    pub fn model(&self) -> ModelParams {
        ModelParams {
            p: self.p,
            alpha: self.alpha,
            kappa: self.kappa,
            nu0: self.nu0,
            eps: self.eps,
            p_reg: self.p_reg,
            reg_flavor: self.reg_flavor,
            convective_form: self.convective_form,
        }
    }

    pub fn solver(&self) -> SolverConfig {
        SolverConfig { tol: self.tol, max_iter: self.max_iter, damping: self.damping }
    }

    /// Model and forcing of every point, in order.
    pub fn points(&self) -> Vec<(f64, ModelParams, ForcingSpec)> {
        let model = self.model();
        self.values
            .iter()
            .map(|&v| {
                let (m, f) = self.parameter.apply(&model, &self.forcing, v);
                (v, m, f)
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InequalityConfig {
    pub grid: GridSpec,
    pub cases: Vec<InequalityCase>,
    /// Repeat every case on the refined grid and report the drift.
    #[serde(default)]
    pub refine: bool,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub output: OutputOptions,
}

fn default_quadrature() -> usize {
    2
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MuckenhouptConfig {
    #[serde(default = "DomainSpec::unit_cube")]
    pub domain: DomainSpec,
    pub p: f64,
    pub alphas: Vec<f64>,
    /// Finest dyadic levels, one constant per entry.
    pub levels: Vec<usize>,
    #[serde(default = "default_quadrature")]
    pub quadrature_order: usize,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub output: OutputOptions,
}

fn one() -> usize {
    1
}

fn default_exponents() -> Vec<f64> {
    vec![1.5, 2.0, 3.0]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BogovskiiConfig {
    pub grid: GridSpec,
    /// Defaults to the inscribed ball of the grid's domain.
    #[serde(default)]
    pub kernel: Option<BogovskiiKernel>,
    /// Scalar field file holding the data; when absent, `samples` zero-mean data are generated.
    #[serde(default)]
    pub input: Option<PathBuf>,
    #[serde(default = "one")]
    pub samples: usize,
    #[serde(default = "default_exponents")]
    pub exponents: Vec<f64>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub output: OutputOptions,
}

fn default_j_max() -> u32 {
    3
}
fn default_s() -> f64 {
    2.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruncateConfig {
    pub grid: GridSpec,
    pub ball: LocalBall,
    #[serde(default)]
    pub sequence: NullSequenceSpec,
    #[serde(default)]
    pub j0: u32,
    #[serde(default = "default_j_max")]
    pub j_max: u32,
    #[serde(default = "default_s")]
    pub s: f64,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub output: OutputOptions,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Payload {
    Solve(SolveConfig),
    Sweep(SweepConfig),
    Inequality(InequalityConfig),
    Muckenhoupt(MuckenhouptConfig),
    Bogovskii(BogovskiiConfig),
    Truncate(TruncateConfig),
}

/// A parsed and validated experiment.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub command: Command,
    pub payload: Payload,
    /// Seed in effect: the command line wins over the file.
    pub seed: Option<u64>,
    pub out_dir: PathBuf,
}

fn parse<T: for<'de> Deserialize<'de>>(text: &str) -> Result<T, CliError> {
    serde_json::from_str(text).map_err(|e| CliError::Config(format!("config: {e}")))
}

impl ExperimentConfig {
    /// Parses `text` for `command`, applies the seed override and validates everything that
    /// can be checked before computing.
    pub fn parse(command: Command, text: &str, seed: Option<u64>, out_dir: PathBuf) -> Result<Self, CliError> {
        let payload = match command {
            Command::Solve => Payload::Solve(parse(text)?),
            Command::Sweep => Payload::Sweep(parse(text)?),
            Command::Inequality => Payload::Inequality(parse(text)?),
            Command::Muckenhoupt => Payload::Muckenhoupt(parse(text)?),
            Command::Bogovskii => Payload::Bogovskii(parse(text)?),
            Command::Truncate => Payload::Truncate(parse(text)?),
        };
        let mut cfg = Self { command, payload, seed: None, out_dir };
        cfg.seed = seed.or(cfg.file_seed());
        if let Some(s) = cfg.seed {
            cfg.apply_seed(s);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn file_seed(&self) -> Option<u64> {
        match &self.payload {
            Payload::Solve(c) => c.seed,
            Payload::Sweep(c) => c.seed,
            Payload::Inequality(c) => c.seed,
            Payload::Muckenhoupt(c) => c.seed,
            Payload::Bogovskii(c) => c.seed,
            Payload::Truncate(c) => c.seed,
        }
    }

    /// Replaces every random seed of the payload by one derived from `seed`.
    fn apply_seed(&mut self, seed: u64) {
        let reseed = |f: &ForcingSpec| match f {
            ForcingSpec::Zero => ForcingSpec::Zero,
            ForcingSpec::Bumps { scale, .. } => ForcingSpec::Bumps { scale: *scale, seed },
            ForcingSpec::Potential { scale, .. } => ForcingSpec::Potential { scale: *scale, seed },
        };
        match &mut self.payload {
            Payload::Solve(c) => {
                c.forcing = reseed(&c.forcing);
                c.seed = Some(seed);
            }
            Payload::Sweep(c) => {
                c.forcing = reseed(&c.forcing);
                c.seed = Some(seed);
            }
            Payload::Inequality(c) => {
                // Cases get disjoint seed ranges.
                let mut next = seed;
                for case in &mut c.cases {
                    case.ensemble.seed = next;
                    next = next.wrapping_add(case.ensemble.samples as u64);
                }
                c.seed = Some(seed);
            }
            Payload::Muckenhoupt(c) => c.seed = Some(seed),
            Payload::Bogovskii(c) => c.seed = Some(seed),
            Payload::Truncate(c) => c.seed = Some(seed),
        }
    }

    pub fn output(&self) -> &OutputOptions {
        match &self.payload {
            Payload::Solve(c) => &c.output,
            Payload::Sweep(c) => &c.output,
            Payload::Inequality(c) => &c.output,
            Payload::Muckenhoupt(c) => &c.output,
            Payload::Bogovskii(c) => &c.output,
            Payload::Truncate(c) => &c.output,
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |key: &str, e: dclab::error::Error| CliError::Config(format!("{key}: {e}"));
        let require = |ok: bool, msg: &str| if ok { Ok(()) } else { Err(CliError::Config(msg.to_string())) };
        match &self.payload {
            Payload::Solve(c) => {
                c.grid.build()?;
                c.solver().validate().map_err(|e| bad("solver", e))?;
                require(c.forcing.scale().is_finite() && c.forcing.scale() >= 0.0, "forcing.scale must be finite and >= 0")?;
                require(!(c.eps.is_some() && c.eps_schedule.is_some()), "eps and eps_schedule are exclusive")?;
                match &c.eps_schedule {
                    None => c.model().validate().map_err(|e| bad("model", e))?,
                    Some(schedule) => {
                        require(
                            !schedule.is_empty()
                                && schedule.iter().all(|e| *e > 0.0)
                                && schedule.windows(2).all(|w| w[1] < w[0]),
                            "eps_schedule must be non-empty, positive and strictly decreasing",
                        )?;
                        for e in schedule {
                            c.model().with_eps(*e).validate().map_err(|e| bad("eps_schedule", e))?;
                        }
                    }
                }
            }
            Payload::Sweep(c) => {
                c.grid.build()?;
                c.solver().validate().map_err(|e| bad("solver", e))?;
                require(!c.values.is_empty(), "values must not be empty")?;
                for (v, m, f) in c.points() {
                    m.validate().map_err(|e| bad(&format!("values ({} = {v})", c.parameter.name()), e))?;
                    require(f.scale().is_finite() && f.scale() >= 0.0, "forcing scale must be finite and >= 0")?;
                }
            }
            Payload::Inequality(c) => {
                c.grid.build()?;
                require(!c.cases.is_empty(), "cases must not be empty")?;
                for (i, case) in c.cases.iter().enumerate() {
                    case.validate().map_err(|e| bad(&format!("cases[{i}]"), e))?;
                    require(case.ensemble.samples > 0, "ensemble.samples must be positive")?;
                }
            }
            Payload::Muckenhoupt(c) => {
                c.domain.validate().map_err(|e| bad("domain", e))?;
                require(c.p > 1.0 && c.p.is_finite(), "p must exceed 1")?;
                require(!c.alphas.is_empty() && c.alphas.iter().all(|a| a.is_finite()), "alphas must be finite and non-empty")?;
                require(!c.levels.is_empty(), "levels must not be empty")?;
                require(c.levels.iter().all(|l| *l <= 12), "levels above 12 are refused")?;
                require(c.quadrature_order > 0, "quadrature_order must be positive")?;
            }
            Payload::Bogovskii(c) => {
                c.grid.build()?;
                self.kernel()?.validate().map_err(|e| bad("kernel", e))?;
                require(c.samples > 0, "samples must be positive")?;
                require(c.input.is_none() || c.samples == 1, "samples must be 1 when input is given")?;
                require(c.exponents.iter().all(|p| *p >= 1.0 && p.is_finite()), "exponents must be finite and >= 1")?;
            }
            Payload::Truncate(c) => {
                let grid = c.grid.build()?;
                require(grid.is_box(), "truncation needs a box domain")?;
                c.sequence.validate().map_err(|e| bad("sequence", e))?;
                require(c.s > 1.0 && c.s.is_finite(), "s must exceed 1")?;
                require(c.j0 <= c.j_max, "j0 must not exceed j_max")?;
                dclab::truncation::TruncationLevels::lowest(c.j0, c.j_max).map_err(|e| bad("j_max", e))?;
            }
        }
        Ok(())
    }

    /// Bogovskiĭ kernel in effect: explicit, or the inscribed ball of the domain.
    pub fn kernel(&self) -> Result<BogovskiiKernel, CliError> {
        let Payload::Bogovskii(c) = &self.payload else {
            return Err(CliError::Config("no kernel outside the bogovskii command".into()));
        };
        if let Some(k) = c.kernel {
            return Ok(k);
        }
        let d = &c.grid.domain;
        Ok(match d.kind {
            dclab::geometry::DomainKind::Ball => BogovskiiKernel::for_ball([0.0; 3], d.extents[0]),
            dclab::geometry::DomainKind::Box => {
                let r = 0.5 * d.extents.iter().cloned().fold(f64::INFINITY, f64::min);
                let c: [f64; 3] = std::array::from_fn(|a| 0.5 * d.extents.get(a).copied().unwrap_or(0.0));
                BogovskiiKernel::for_ball(c, r)
            }
        })
    }
}

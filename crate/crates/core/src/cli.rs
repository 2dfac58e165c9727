//! Command-line front end: argument parsing, config merging and the four
//! subcommands `certify`, `simulate`, `validate` and `sweep`.
//!
//! Exit codes: 0 success, 1 unverified certificate or failed check,
//! 2 usage error, 3 I/O failure.

use std::ffi::OsString;
use std::fmt;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, ValueEnum};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::function_classes::{ComponentAssumption, FunctionClass};
use crate::lmi_engine::{
    analytic_certificate, bisect_rate, katyusha_certificate, search_certificate, Bisection, Certificate,
    PFamily, SearchOptions, SearchOutcome, SystemMatrices, DEFAULT_TOL,
};
use crate::linalg::to_rows;
use crate::optimizers::{lyapunov, run_epochs_traced, run_sg, EpochSummary, MethodFamily, MethodSpec};
use crate::problems::{generate_problem, FiniteSumProblem, ProblemSpec, Regularizer};
use crate::rate_bounds::{closed_form_rate, RateReport, RateTerm};
use crate::supply_rates::{supply_rates_for, SupplyRate};
use crate::validation::{
    check_appendix_inequalities, check_dissipation_on_trace, check_epoch_contraction, check_katyusha_coupling,
    check_katyusha_supply, InequalityReport,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;

/// First line of every CSV output.
pub const CSV_HEADER: &str = "# dissipacert-csv v1";
/// Environment variable read when `--seed` is absent.
pub const SEED_ENV: &str = "DISSIPACERT_SEED";

const DEFAULT_SIGMA: f64 = 0.1;
const DEFAULT_LIPSCHITZ: f64 = 1.0;
const DEFAULT_SG_STEPS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Subcommand {
    Certify,
    Simulate,
    Validate,
    Sweep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Human,
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Appendix,
    Katyusha,
    Dissipation,
    Contraction,
    All,
}

impl Suite {
    fn name(self) -> &'static str {
        match self {
            Suite::Appendix => "appendix",
            Suite::Katyusha => "katyusha",
            Suite::Dissipation => "dissipation",
            Suite::Contraction => "contraction",
            Suite::All => "all",
        }
    }
}

/// Function class as written in config files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FunctionClassConfig {
    pub sigma: f64,
    pub lipschitz: f64,
    pub component_assumption: ComponentAssumption,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemShape {
    pub n: usize,
    pub p: usize,
    pub seed: u64,
}

impl Default for ProblemShape {
    fn default() -> Self {
        Self { n: 10, p: 5, seed: 0 }
    }
}

/// Grid of the `sweep` subcommand: `η` for SG and SVRG, `(τ₁, τ₂)` for Katyusha.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepGrid {
    pub eta_min: f64,
    pub eta_max: f64,
    pub tau2_min: f64,
    pub tau2_max: f64,
    pub points: usize,
}

/// Fully resolved run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub subcommand: Subcommand,
    /// `None` only for `validate`, which then covers every family.
    pub method: Option<MethodFamily>,
    pub function_class: FunctionClassConfig,
    pub eta: Option<f64>,
    pub m: Option<usize>,
    pub tau1: Option<f64>,
    pub tau2: Option<f64>,
    pub alpha: Option<f64>,
    pub zeta: Option<f64>,
    pub rho2: Option<f64>,
    pub tol: f64,
    pub tol_rho: f64,
    pub max_evaluations: usize,
    pub problem: ProblemShape,
    pub seed: u64,
    pub epochs: usize,
    pub suite: Suite,
    pub trials: usize,
    pub sweep: SweepGrid,
    pub format: OutputFormat,
    pub output: Option<PathBuf>,
    pub dump_lmi: Option<PathBuf>,
    pub dump_supply_rates: Option<PathBuf>,
}

#[derive(Debug)]
pub enum CliError {
    /// Help or version text requested; not an error.
    Info(String),
    Usage { flag: Option<String>, message: String },
    Io { path: Option<PathBuf>, source: io::Error },
    Run(Error),
}

impl CliError {
    fn usage(flag: &str, message: impl Into<String>) -> Self {
        CliError::Usage { flag: Some(flag.into()), message: message.into() }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Info(_) => EXIT_OK,
            CliError::Usage { .. } => EXIT_USAGE,
            CliError::Io { .. } => EXIT_IO,
            CliError::Run(_) => EXIT_FAILED,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Info(text) => f.write_str(text),
            CliError::Usage { flag: Some(flag), message } => write!(f, "usage error (--{flag}): {message}"),
            CliError::Usage { flag: None, message } => write!(f, "usage error: {message}"),
            CliError::Io { path: Some(p), source } => write!(f, "I/O error on {}: {source}", p.display()),
            CliError::Io { path: None, source } => write!(f, "I/O error: {source}"),
            CliError::Run(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Run(e)
    }
}

// ---------------------------------------------------------------------------
// Argument definitions

#[derive(Parser, Debug)]
#[command(name = "dissipacert", version, about = "Dissipativity certificates for SG, SVRG and Katyusha")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Subcommand, Debug)]
enum Command {
    /// Verify a method's closed-form certificate and bisect its rate.
    Certify {
        #[command(flatten)]
        common: CommonFlags,
        #[command(flatten)]
        method: MethodFlags,
        /// Check this rho^2 with a multiplier search instead of bisecting.
        #[arg(long)]
        rho2: Option<f64>,
        /// Bisection tolerance on rho^2.
        #[arg(long)]
        tol_rho: Option<f64>,
        /// LMI evaluation budget per search.
        #[arg(long)]
        max_evaluations: Option<usize>,
        /// Write the assembled LMI to this JSON file.
        #[arg(long, value_name = "FILE")]
        dump_lmi: Option<PathBuf>,
        /// Write the supply rates to this JSON file.
        #[arg(long, value_name = "FILE")]
        dump_supply_rates: Option<PathBuf>,
    },
    /// Run a method on a generated problem and report epoch summaries.
    Simulate {
        #[command(flatten)]
        common: CommonFlags,
        #[command(flatten)]
        method: MethodFlags,
        #[command(flatten)]
        problem: ProblemFlags,
        /// Number of epochs to run.
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Check the inequalities behind the certificates numerically.
    Validate {
        #[command(flatten)]
        common: CommonFlags,
        #[command(flatten)]
        method: MethodFlags,
        #[command(flatten)]
        problem: ProblemFlags,
        /// Which checks to run.
        #[arg(long, value_enum)]
        suite: Option<Suite>,
        /// Random states per check, or sample paths for path-based suites.
        #[arg(long)]
        trials: Option<usize>,
        /// Epochs per run in the contraction suite.
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Evaluate certificates and rates over a parameter grid.
    Sweep {
        #[command(flatten)]
        common: CommonFlags,
        #[command(flatten)]
        method: MethodFlags,
        /// Smallest step size (sg, svrg1, svrg2).
        #[arg(long)]
        eta_min: Option<f64>,
        /// Largest step size (sg, svrg1, svrg2).
        #[arg(long)]
        eta_max: Option<f64>,
        /// Smallest tau2 (katyusha).
        #[arg(long)]
        tau2_min: Option<f64>,
        /// Largest tau2 (katyusha).
        #[arg(long)]
        tau2_max: Option<f64>,
        /// Grid points per axis.
        #[arg(long)]
        points: Option<usize>,
    },
}

#[derive(Args, Debug)]
struct CommonFlags {
    /// JSON config file; command-line flags take precedence.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Shorthand for `--format json`.
    #[arg(long)]
    json: bool,
    /// Report format [default: human].
    #[arg(long, value_enum)]
    format: Option<OutputFormat>,
    /// Write the report here instead of stdout.
    #[arg(long, value_name = "FILE")]
    output: Option<PathBuf>,
    /// Seed for sampling; defaults to $DISSIPACERT_SEED, then 0.
    #[arg(long)]
    seed: Option<u64>,
    /// Tolerance on the largest LMI eigenvalue.
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Args, Debug)]
struct MethodFlags {
    /// sg, svrg1, svrg2 or katyusha.
    #[arg(long, value_parser = parse_method)]
    method: Option<MethodFamily>,
    /// Strong convexity modulus (of psi for katyusha).
    #[arg(long)]
    sigma: Option<f64>,
    /// Smoothness constant of each component.
    #[arg(long)]
    lipschitz: Option<f64>,
    /// smooth_convex, smooth_strongly_convex or smooth_only.
    #[arg(long, value_parser = parse_assumption)]
    component_assumption: Option<ComponentAssumption>,
    /// Step size (sg, svrg1, svrg2).
    #[arg(long)]
    eta: Option<f64>,
    /// Inner steps per epoch.
    #[arg(long)]
    m: Option<usize>,
    /// Katyusha weight on z in the coupling step.
    #[arg(long)]
    tau1: Option<f64>,
    /// Katyusha negative-momentum weight on the anchor.
    #[arg(long)]
    tau2: Option<f64>,
    /// Katyusha z-step size [default: 1/(3 tau1 L)].
    #[arg(long)]
    alpha: Option<f64>,
    /// Katyusha y-step size [default: 1/(3L)].
    #[arg(long)]
    zeta: Option<f64>,
}

#[derive(Args, Debug)]
struct ProblemFlags {
    /// Number of components.
    #[arg(long)]
    n: Option<usize>,
    /// Dimension.
    #[arg(long)]
    p: Option<usize>,
    /// Seed of the generated problem instance.
    #[arg(long)]
    problem_seed: Option<u64>,
}

fn parse_method(s: &str) -> Result<MethodFamily, String> {
    MethodFamily::from_cli_name(s).ok_or_else(|| format!("unknown method `{s}` (expected sg, svrg1, svrg2, katyusha)"))
}

fn parse_assumption(s: &str) -> Result<ComponentAssumption, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

// ---------------------------------------------------------------------------
// Config files

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PartialFunctionClass {
    sigma: Option<f64>,
    lipschitz: Option<f64>,
    component_assumption: Option<ComponentAssumption>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PartialProblem {
    n: Option<usize>,
    p: Option<usize>,
    seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PartialSweep {
    eta_min: Option<f64>,
    eta_max: Option<f64>,
    tau2_min: Option<f64>,
    tau2_max: Option<f64>,
    points: Option<usize>,
}

/// Any subset of the [`RunConfig`] keys.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PartialConfig {
    #[serde(default)]
    subcommand: Option<Subcommand>,
    method: Option<MethodFamily>,
    #[serde(default)]
    function_class: PartialFunctionClass,
    eta: Option<f64>,
    m: Option<usize>,
    tau1: Option<f64>,
    tau2: Option<f64>,
    alpha: Option<f64>,
    zeta: Option<f64>,
    rho2: Option<f64>,
    tol: Option<f64>,
    tol_rho: Option<f64>,
    max_evaluations: Option<usize>,
    #[serde(default)]
    problem: PartialProblem,
    seed: Option<u64>,
    epochs: Option<usize>,
    suite: Option<Suite>,
    trials: Option<usize>,
    #[serde(default)]
    sweep: PartialSweep,
    format: Option<OutputFormat>,
    output: Option<PathBuf>,
    dump_lmi: Option<PathBuf>,
    dump_supply_rates: Option<PathBuf>,
}

fn read_config(path: &Path) -> Result<PartialConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io { path: Some(path.into()), source })?;
    serde_json::from_str(&text).map_err(|e| CliError::usage("config", format!("{}: {e}", path.display())))
}

// ---------------------------------------------------------------------------
// Parsing

/// Parses `argv` (program name first) into a validated configuration,
/// reading the default seed from `DISSIPACERT_SEED`.
pub fn parse_args<I, T>(argv: I) -> Result<RunConfig, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let env_seed = std::env::var(SEED_ENV).ok();
    parse_args_with_env(argv, env_seed.as_deref())
}

/// [`parse_args`] with the seed fallback passed explicitly.
pub fn parse_args_with_env<I, T>(argv: I, env_seed: Option<&str>) -> Result<RunConfig, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(argv).map_err(|e| {
        use clap::error::{ContextKind, ErrorKind};
        match e.kind() {
            ErrorKind::DisplayHelp | ErrorKind::DisplayVersion | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => {
                CliError::Info(e.render().to_string())
            }
            _ => CliError::Usage {
                flag: e.get(ContextKind::InvalidArg).map(|a| a.to_string().trim_start_matches('-').to_string()),
                message: e.render().to_string().trim_end().to_string(),
            },
        }
    })?;

    let mut extra = Extra::default();
    let (subcommand, common, method) = match cli.command {
        Command::Certify { common, method, rho2, tol_rho, max_evaluations, dump_lmi, dump_supply_rates } => {
            extra.rho2 = rho2;
            extra.tol_rho = tol_rho;
            extra.max_evaluations = max_evaluations;
            extra.dump_lmi = dump_lmi;
            extra.dump_supply_rates = dump_supply_rates;
            (Subcommand::Certify, common, method)
        }
        Command::Simulate { common, method, problem, epochs } => {
            extra.problem = Some(problem);
            extra.epochs = epochs;
            (Subcommand::Simulate, common, method)
        }
        Command::Validate { common, method, problem, suite, trials, epochs } => {
            extra.problem = Some(problem);
            extra.suite = suite;
            extra.trials = trials;
            extra.epochs = epochs;
            (Subcommand::Validate, common, method)
        }
        Command::Sweep { common, method, eta_min, eta_max, tau2_min, tau2_max, points } => {
            extra.sweep = PartialSweep { eta_min, eta_max, tau2_min, tau2_max, points };
            (Subcommand::Sweep, common, method)
        }
    };
    let file = match &common.config {
        Some(path) => read_config(path)?,
        None => PartialConfig::default(),
    };
    if let Some(s) = file.subcommand {
        if s != subcommand {
            return Err(CliError::usage("config", format!("config file is for `{s:?}`, not this subcommand")));
        }
    }
    resolve(subcommand, common, method, extra, file, env_seed)
}

#[derive(Default)]
struct Extra {
    rho2: Option<f64>,
    tol_rho: Option<f64>,
    max_evaluations: Option<usize>,
    dump_lmi: Option<PathBuf>,
    dump_supply_rates: Option<PathBuf>,
    problem: Option<ProblemFlags>,
    epochs: Option<usize>,
    suite: Option<Suite>,
    trials: Option<usize>,
    sweep: PartialSweep,
}

fn resolve(
    subcommand: Subcommand,
    common: CommonFlags,
    flags: MethodFlags,
    extra: Extra,
    file: PartialConfig,
    env_seed: Option<&str>,
) -> Result<RunConfig, CliError> {
    let format = match (common.json, common.format) {
        (true, Some(f)) if f != OutputFormat::Json => {
            return Err(CliError::usage("format", "--json contradicts --format"));
        }
        (true, _) => OutputFormat::Json,
        (false, Some(f)) => f,
        (false, None) => file.format.unwrap_or(OutputFormat::Human),
    };
    if format == OutputFormat::Csv && subcommand == Subcommand::Certify {
        return Err(CliError::usage("format", "certify has no CSV output; use json or human"));
    }

    let seed = match common.seed.or(file.seed) {
        Some(s) => s,
        None => match env_seed {
            Some(text) => text
                .trim()
                .parse()
                .map_err(|_| CliError::usage("seed", format!("{SEED_ENV}=`{text}` is not an unsigned integer")))?,
            None => 0,
        },
    };

    let method = flags.method.or(file.method);
    let mut params = Params {
        eta: flags.eta.or(file.eta),
        m: flags.m.or(file.m),
        tau1: flags.tau1.or(file.tau1),
        tau2: flags.tau2.or(file.tau2),
        alpha: flags.alpha.or(file.alpha),
        zeta: flags.zeta.or(file.zeta),
    };
    match method {
        None => {
            if matches!(subcommand, Subcommand::Certify | Subcommand::Simulate | Subcommand::Sweep) {
                return Err(CliError::usage("method", "missing required parameter"));
            }
            if let Some(flag) = params.first_set() {
                return Err(CliError::usage(flag, "method parameters need --method"));
            }
        }
        Some(family) => params.require(family, subcommand)?,
    }

    let needs_class = matches!(subcommand, Subcommand::Certify | Subcommand::Sweep);
    let sigma = flags.sigma.or(file.function_class.sigma);
    let lipschitz = flags.lipschitz.or(file.function_class.lipschitz);
    let (sigma, lipschitz) = match (sigma, lipschitz) {
        (Some(s), Some(l)) => (s, l),
        (None, _) if needs_class => return Err(CliError::usage("sigma", "missing required parameter")),
        (_, None) if needs_class => return Err(CliError::usage("lipschitz", "missing required parameter")),
        (s, l) => (s.unwrap_or(DEFAULT_SIGMA), l.unwrap_or(DEFAULT_LIPSCHITZ)),
    };
    let assumption = flags
        .component_assumption
        .or(file.function_class.component_assumption)
        .unwrap_or(ComponentAssumption::SmoothConvex);
    let fc = FunctionClass::new(sigma, lipschitz, assumption, false).map_err(|e| {
        let flag = if e.to_string().contains("lipschitz must") { "lipschitz" } else { "sigma" };
        CliError::usage(flag, e.to_string())
    })?;
    if let Some(family) = method {
        params.complete(family, subcommand, &fc)?;
    }

    let problem_flags = extra.problem.unwrap_or(ProblemFlags { n: None, p: None, problem_seed: None });
    let defaults = ProblemShape::default();
    let problem = ProblemShape {
        n: problem_flags.n.or(file.problem.n).unwrap_or(defaults.n),
        p: problem_flags.p.or(file.problem.p).unwrap_or(defaults.p),
        seed: problem_flags.problem_seed.or(file.problem.seed).unwrap_or(defaults.seed),
    };
    if problem.n == 0 {
        return Err(CliError::usage("n", "need at least one component"));
    }
    if problem.p == 0 {
        return Err(CliError::usage("p", "dimension must be positive"));
    }

    let sweep = SweepGrid {
        eta_min: extra.sweep.eta_min.or(file.sweep.eta_min).unwrap_or(1e-3 / lipschitz),
        eta_max: extra.sweep.eta_max.or(file.sweep.eta_max).unwrap_or(0.5 / lipschitz),
        tau2_min: extra.sweep.tau2_min.or(file.sweep.tau2_min).unwrap_or(0.2),
        tau2_max: extra.sweep.tau2_max.or(file.sweep.tau2_max).unwrap_or(0.9),
        points: extra.sweep.points.or(file.sweep.points).unwrap_or(20),
    };
    if subcommand == Subcommand::Sweep {
        check_sweep(&sweep)?;
    }

    let rho2 = extra.rho2.or(file.rho2);
    if let Some(r) = rho2 {
        if !(0.0..=1.0).contains(&r) {
            return Err(CliError::usage("rho2", format!("must lie in [0, 1], got {r}")));
        }
    }
    let tol = common.tol.or(file.tol).unwrap_or(DEFAULT_TOL);
    if !(tol.is_finite() && tol >= 0.0) {
        return Err(CliError::usage("tol", format!("must be a non-negative number, got {tol}")));
    }
    let tol_rho = extra.tol_rho.or(file.tol_rho).unwrap_or(1e-4);
    if !(tol_rho.is_finite() && tol_rho > 0.0) {
        return Err(CliError::usage("tol-rho", format!("must be positive, got {tol_rho}")));
    }
    let epochs = extra.epochs.or(file.epochs).unwrap_or(3);
    if epochs == 0 {
        return Err(CliError::usage("epochs", "must be at least 1"));
    }
    let trials = extra.trials.or(file.trials).unwrap_or(200);
    if trials == 0 {
        return Err(CliError::usage("trials", "must be at least 1"));
    }

    Ok(RunConfig {
        subcommand,
        method,
        function_class: FunctionClassConfig { sigma, lipschitz, component_assumption: assumption },
        eta: params.eta,
        m: params.m,
        tau1: params.tau1,
        tau2: params.tau2,
        alpha: params.alpha,
        zeta: params.zeta,
        rho2,
        tol,
        tol_rho,
        max_evaluations: extra.max_evaluations.or(file.max_evaluations).unwrap_or(20_000),
        problem,
        seed,
        epochs,
        suite: extra.suite.or(file.suite).unwrap_or(Suite::All),
        trials,
        sweep,
        format,
        output: common.output.or(file.output),
        dump_lmi: extra.dump_lmi.or(file.dump_lmi),
        dump_supply_rates: extra.dump_supply_rates.or(file.dump_supply_rates),
    })
}

fn check_sweep(g: &SweepGrid) -> Result<(), CliError> {
    if g.points == 0 {
        return Err(CliError::usage("points", "must be at least 1"));
    }
    if !(g.eta_min > 0.0 && g.eta_min <= g.eta_max && g.eta_max.is_finite()) {
        return Err(CliError::usage("eta-min", "need 0 < eta-min <= eta-max"));
    }
    if !(0.0..=1.0).contains(&g.tau2_min) || !(g.tau2_min..=1.0).contains(&g.tau2_max) || g.tau2_max >= 1.0 {
        return Err(CliError::usage("tau2-min", "need 0 <= tau2-min <= tau2-max < 1"));
    }
    Ok(())
}

struct Params {
    eta: Option<f64>,
    m: Option<usize>,
    tau1: Option<f64>,
    tau2: Option<f64>,
    alpha: Option<f64>,
    zeta: Option<f64>,
}

impl Params {
    fn first_set(&self) -> Option<&'static str> {
        [
            ("eta", self.eta.is_some()),
            ("m", self.m.is_some()),
            ("tau1", self.tau1.is_some()),
            ("tau2", self.tau2.is_some()),
            ("alpha", self.alpha.is_some()),
            ("zeta", self.zeta.is_some()),
        ]
        .into_iter()
        .find_map(|(name, set)| set.then_some(name))
    }

    /// Checks required and contradictory parameters for `family`.
    fn require(&self, family: MethodFamily, subcommand: Subcommand) -> Result<(), CliError> {
        let sweep = subcommand == Subcommand::Sweep;
        let missing = |flag: &str| Err(CliError::usage(flag, format!("missing required parameter for {family}")));
        match family {
            MethodFamily::Katyusha => {
                if self.eta.is_some() {
                    return Err(CliError::usage("eta", "katyusha uses --alpha and --zeta, not --eta"));
                }
                if sweep {
                    if self.tau1.is_some() {
                        return Err(CliError::usage("tau1", "sweep takes tau1 and tau2 from the grid"));
                    }
                    if self.tau2.is_some() {
                        return Err(CliError::usage("tau2", "sweep takes tau1 and tau2 from the grid"));
                    }
                } else {
                    if self.tau1.is_none() {
                        return missing("tau1");
                    }
                    if self.tau2.is_none() {
                        return missing("tau2");
                    }
                }
                if self.m.is_none() {
                    return missing("m");
                }
            }
            _ => {
                for (name, set) in [
                    ("tau1", self.tau1.is_some()),
                    ("tau2", self.tau2.is_some()),
                    ("alpha", self.alpha.is_some()),
                    ("zeta", self.zeta.is_some()),
                ] {
                    if set {
                        return Err(CliError::usage(name, format!("{name} only applies to katyusha")));
                    }
                }
                if sweep {
                    if self.eta.is_some() {
                        return Err(CliError::usage("eta", "sweep takes eta from the grid; use --eta-min/--eta-max"));
                    }
                } else if self.eta.is_none() {
                    return missing("eta");
                }
                if family != MethodFamily::Sg && self.m.is_none() {
                    return missing("m");
                }
            }
        }
        Ok(())
    }

    /// Fills the documented defaults and validates the resulting spec.
    fn complete(&mut self, family: MethodFamily, subcommand: Subcommand, fc: &FunctionClass) -> Result<(), CliError> {
        let l = fc.lipschitz;
        match family {
            MethodFamily::Katyusha => {
                if let Some(tau1) = self.tau1 {
                    if !(tau1 > 0.0) {
                        return Err(CliError::usage("tau1", format!("must be positive, got {tau1}")));
                    }
                    self.alpha.get_or_insert(1.0 / (3.0 * tau1 * l));
                }
                self.zeta.get_or_insert(1.0 / (3.0 * l));
            }
            MethodFamily::Sg => {
                self.m.get_or_insert(DEFAULT_SG_STEPS);
            }
            _ => {}
        }
        if subcommand != Subcommand::Sweep {
            let spec = self.spec(family)?;
            spec.validated().map_err(|e| CliError::usage(invalid_flag(&e, family), e.to_string()))?;
        }
        Ok(())
    }

    fn spec(&self, family: MethodFamily) -> Result<MethodSpec, CliError> {
        Ok(MethodSpec {
            family,
            eta: self.eta.unwrap_or(0.0),
            m: self.m.unwrap_or(0),
            tau1: self.tau1.unwrap_or(0.0),
            tau2: self.tau2.unwrap_or(0.0),
            alpha: self.alpha.unwrap_or(0.0),
            zeta: self.zeta.unwrap_or(0.0),
        })
    }
}

fn invalid_flag(e: &Error, family: MethodFamily) -> &'static str {
    let text = e.to_string();
    ["tau1", "tau2", "alpha", "zeta", "eta"]
        .into_iter()
        .find(|f| text.contains(f))
        .unwrap_or(if text.contains("epoch length") || family != MethodFamily::Katyusha { "m" } else { "method" })
}

impl RunConfig {
    /// The function class, composite for Katyusha.
    pub fn function_class_for(&self, family: MethodFamily) -> FunctionClass {
        let c = self.function_class;
        FunctionClass {
            sigma: c.sigma,
            lipschitz: c.lipschitz,
            component_assumption: c.component_assumption,
            composite: family == MethodFamily::Katyusha,
        }
    }

    /// The method parameters given on the command line or in the config.
    pub fn method_spec(&self) -> Option<MethodSpec> {
        let family = self.method?;
        Some(MethodSpec {
            family,
            eta: self.eta.unwrap_or(0.0),
            m: self.m.unwrap_or(0),
            tau1: self.tau1.unwrap_or(0.0),
            tau2: self.tau2.unwrap_or(0.0),
            alpha: self.alpha.unwrap_or(0.0),
            zeta: self.zeta.unwrap_or(0.0),
        })
    }

    /// The given parameters when `family` is the configured method, otherwise
    /// [`default_spec`].
    pub fn spec_for(&self, family: MethodFamily) -> crate::error::Result<MethodSpec> {
        match self.method_spec() {
            Some(spec) if spec.family == family => spec.validated(),
            _ => default_spec(family, &self.function_class_for(family)),
        }
    }

    /// Generated problem for `family`: Katyusha gets `ψ = (σ/2)‖x‖²`.
    pub fn problem_for(&self, family: MethodFamily) -> crate::error::Result<FiniteSumProblem> {
        let fc = self.function_class_for(family);
        let reg = if family == MethodFamily::Katyusha {
            Regularizer::quadratic_l2(fc.sigma)?
        } else {
            Regularizer::none()
        };
        generate_problem(self.problem.seed, self.problem.n, self.problem.p, fc, reg)
    }
}

/// Parameters used by `validate` for families not given on the command line.
///
/// SG: `η = 1/(10L)`, 100 steps. Option I: `η = σ/(5L²)`, `m = ⌈1/(ση)⌉`.
/// Option II: `η = 1/(10L)`, `m = ⌈50L/σ⌉`. Katyusha: the standard recipe
/// with `m = ⌈10L/σ⌉`.
pub fn default_spec(family: MethodFamily, fc: &FunctionClass) -> crate::error::Result<MethodSpec> {
    use crate::optimizers::SvrgOption;
    let (s, l) = (fc.sigma, fc.lipschitz);
    match family {
        MethodFamily::Sg => MethodSpec::sg(0.1 / l, DEFAULT_SG_STEPS),
        MethodFamily::SvrgOptionI => {
            let eta = s / (5.0 * l * l);
            MethodSpec::svrg(SvrgOption::I, eta, (1.0 / (s * eta)).ceil() as usize)
        }
        MethodFamily::SvrgOptionII => MethodSpec::svrg(SvrgOption::II, 0.1 / l, (50.0 * l / s).ceil() as usize),
        MethodFamily::Katyusha => MethodSpec::katyusha_recipe(fc, (10.0 * l / s).ceil() as usize),
    }
}

// ---------------------------------------------------------------------------
// Output formatting

/// `%.17g`: 17 significant digits, trailing zeros dropped. Always round-trips.
pub fn format_g17(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return v.to_string();
    }
    let sci = format!("{v:.16e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific format has an exponent");
    let exp: i32 = exp.parse().expect("exponent is an integer");
    if !(-5..17).contains(&exp) {
        format!("{}e{exp}", trim_fraction(mantissa))
    } else {
        trim_fraction(&format!("{v:.*}", (16 - exp) as usize)).to_string()
    }
}

fn trim_fraction(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

struct G17Formatter;

impl serde_json::ser::Formatter for G17Formatter {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        writer.write_all(format_g17(value).as_bytes())
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        writer.write_all(format_g17(value as f64).as_bytes())
    }
}

/// Compact JSON with every float printed by [`format_g17`].
pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, G17Formatter);
    value.serialize(&mut ser).expect("report types serialize");
    String::from_utf8(buf).expect("serde_json writes UTF-8")
}

fn csv_cell(v: Option<f64>) -> String {
    v.map(format_g17).unwrap_or_default()
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|source| CliError::Io { path: Some(path.into()), source })
}

// ---------------------------------------------------------------------------
// Running

/// Runs `config`, printing to stdout (or `config.output`) and errors to
/// stderr. Returns the process exit code.
pub fn run(config: &RunConfig) -> i32 {
    let stdout = io::stdout();
    let mut lock = stdout.lock();
    match execute(config, &mut lock) {
        Ok(true) => EXIT_OK,
        Ok(false) => EXIT_FAILED,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}

/// Parses and runs; the whole command line in one call.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match parse_args(argv) {
        Ok(config) => run(&config),
        Err(CliError::Info(text)) => {
            print!("{text}");
            EXIT_OK
        }
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}

/// Runs `config` and writes its report to `out` (or `config.output`).
/// `Ok(true)` when certificates verify and checks pass.
pub fn execute(config: &RunConfig, out: &mut dyn Write) -> Result<bool, CliError> {
    let (text, success) = match config.subcommand {
        Subcommand::Certify => certify(config)?,
        Subcommand::Simulate => simulate(config)?,
        Subcommand::Validate => validate(config)?,
        Subcommand::Sweep => sweep(config)?,
    };
    match &config.output {
        Some(path) => write_file(path, &text)?,
        None => out
            .write_all(text.as_bytes())
            .and_then(|_| out.flush())
            .map_err(|source| CliError::Io { path: None, source })?,
    }
    Ok(success)
}

#[derive(Debug, Serialize)]
struct KatyushaPredicate {
    predicate: Option<bool>,
    margin: Option<f64>,
}

#[derive(Debug, Serialize)]
struct CertifyReport {
    method: MethodFamily,
    function_class: FunctionClass,
    spec: MethodSpec,
    verified: bool,
    certificate: Certificate,
    katyusha: Option<KatyushaPredicate>,
    rate: Option<RateReport>,
    rate_error: Option<String>,
    search: Option<SearchOutcome>,
    bisection: Option<Bisection>,
    bisection_error: Option<String>,
}

#[derive(Debug, Serialize)]
struct LmiDump<'a> {
    rho_sq: f64,
    lambdas: &'a [f64],
    #[serde(serialize_with = "rows")]
    pbar: &'a nalgebra::DMatrix<f64>,
    #[serde(serialize_with = "rows")]
    abar: &'a nalgebra::DMatrix<f64>,
    #[serde(serialize_with = "rows")]
    bbar: &'a nalgebra::DMatrix<f64>,
    #[serde(serialize_with = "rows")]
    lhs: &'a nalgebra::DMatrix<f64>,
    lhs_max_eig: f64,
    tolerance: f64,
    verified: bool,
}

fn rows<S: serde::Serializer>(m: &&nalgebra::DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
    to_rows(m).serialize(s)
}

fn certify(config: &RunConfig) -> Result<(String, bool), CliError> {
    let spec = config.method_spec().expect("certify requires a method").validated()?;
    let fc = config.function_class_for(spec.family);
    let rates: Vec<SupplyRate> = supply_rates_for(&fc, &spec)?;
    let (certificate, katyusha) = if spec.family == MethodFamily::Katyusha {
        let k = katyusha_certificate(&fc, &spec, config.tol)?;
        (k.certificate, Some(KatyushaPredicate { predicate: k.predicate, margin: k.margin }))
    } else {
        (analytic_certificate(&fc, &spec, config.tol)?, None)
    };
    let (rate, rate_error) = match closed_form_rate(&fc, &spec) {
        Ok(r) => (Some(r), None),
        Err(e) => (None, Some(e.to_string())),
    };

    let system = SystemMatrices::for_method(&spec);
    let p_family = PFamily::default_for(spec.family);
    let options = SearchOptions {
        tol: config.tol,
        max_evaluations: config.max_evaluations,
        seed: config.seed,
        hints: vec![certificate.instance.lambdas.iter().map(|l| l / certificate.instance.pbar[(0, 0)].max(f64::MIN_POSITIVE)).collect()],
    };
    let (mut search, mut bisection, mut bisection_error) = (None, None, None);
    let verified = match config.rho2 {
        Some(rho2) => {
            let outcome = search_certificate(&system, &rates, rho2, p_family, &options)?;
            let ok = outcome.is_certified();
            search = Some(outcome);
            ok
        }
        None => {
            match bisect_rate(&system, &rates, p_family, config.tol_rho, &options) {
                Ok(b) => bisection = Some(b),
                Err(e) => bisection_error = Some(e.to_string()),
            }
            certificate.verified
        }
    };

    let dumped = search.as_ref().map(|s| s.certificate()).unwrap_or(&certificate);
    if let Some(path) = &config.dump_lmi {
        let inst = &dumped.instance;
        let dump = LmiDump {
            rho_sq: inst.rho_sq,
            lambdas: &inst.lambdas,
            pbar: &inst.pbar,
            abar: &inst.system.abar,
            bbar: &inst.system.bbar,
            lhs: &dumped.lhs,
            lhs_max_eig: dumped.lhs_max_eig,
            tolerance: dumped.tolerance,
            verified: dumped.verified,
        };
        write_file(path, &(to_json(&dump) + "\n"))?;
    }
    if let Some(path) = &config.dump_supply_rates {
        write_file(path, &(to_json(&rates) + "\n"))?;
    }

    let report = CertifyReport {
        method: spec.family,
        function_class: fc,
        spec,
        verified,
        certificate,
        katyusha,
        rate,
        rate_error,
        search,
        bisection,
        bisection_error,
    };
    let text = match config.format {
        OutputFormat::Json => to_json(&report) + "\n",
        _ => certify_human(&report),
    };
    Ok((text, verified))
}

fn certify_human(r: &CertifyReport) -> String {
    let mut s = String::new();
    let spec = &r.spec;
    let params = match spec.family {
        MethodFamily::Katyusha => format!(
            "m={}, tau1={}, tau2={}, alpha={}, zeta={}",
            spec.m, spec.tau1, spec.tau2, spec.alpha, spec.zeta
        ),
        _ => format!("eta={}, m={}", spec.eta, spec.m),
    };
    s += &format!(
        "method {} (sigma={}, L={}, {}; {params})\n",
        spec.family, r.function_class.sigma, r.function_class.lipschitz, r.function_class.component_assumption
    );
    let c = &r.certificate;
    s += &format!(
        "closed-form certificate: {} (max eigenvalue {:e}, tolerance {:e})\n",
        if c.verified { "verified" } else { "NOT verified" },
        c.lhs_max_eig,
        c.tolerance
    );
    s += &format!("  rho^2 = {}\n  multipliers = {:?}\n", c.instance.rho_sq, c.instance.lambdas);
    for f in &c.failures {
        s += &format!("  failure: {f}\n");
    }
    if let Some(k) = &r.katyusha {
        if let (Some(p), Some(m)) = (k.predicate, k.margin) {
            s += &format!("  closed-form feasibility test: {p} (margin {m:e})\n");
        }
    }
    match (&r.rate, &r.rate_error) {
        (Some(rate), _) => {
            s += &format!("epoch rate nu = {}\n", rate.nu);
            for t in &rate.terms {
                s += &format!("  {} = {}\n", t.name, t.value);
            }
        }
        (None, Some(e)) => s += &format!("epoch rate unavailable: {e}\n"),
        _ => {}
    }
    if let Some(search) = &r.search {
        let c = search.certificate();
        s += &format!(
            "search at rho^2 = {}: {} (max eigenvalue {:e})\n",
            c.instance.rho_sq,
            if search.is_certified() { "certified" } else { "not found within budget" },
            c.lhs_max_eig
        );
    }
    if let Some(b) = &r.bisection {
        s += &format!("bisection: smallest certified rho^2 = {} ({} steps)\n", b.rho_sq, b.iterations);
    }
    if let Some(e) = &r.bisection_error {
        s += &format!("bisection: {e}\n");
    }
    s
}

#[derive(Debug, Serialize)]
struct SimulateReport {
    method: MethodFamily,
    spec: MethodSpec,
    problem: ProblemSpec,
    seed: u64,
    nu: Option<f64>,
    epochs: Vec<EpochSummary>,
}

fn simulate(config: &RunConfig) -> Result<(String, bool), CliError> {
    let spec = config.method_spec().expect("simulate requires a method").validated()?;
    let fc = config.function_class_for(spec.family);
    let prob = config.problem_for(spec.family)?;
    let x0 = DVector::zeros(prob.p());
    let (summaries, traces) = run_epochs_traced(&prob, &spec, &x0, config.epochs, config.seed)?;
    let nu = closed_form_rate(&fc, &spec).ok().map(|r| r.nu);
    let text = match config.format {
        OutputFormat::Json => {
            let report = SimulateReport {
                method: spec.family,
                spec,
                problem: prob.spec().expect("generated problem").clone(),
                seed: config.seed,
                nu,
                epochs: summaries,
            };
            to_json(&report) + "\n"
        }
        OutputFormat::Csv => {
            let mut s = format!("{CSV_HEADER}\nepoch,step,index,v_value,iterate_norm\n");
            for (epoch, trace) in traces.iter().enumerate() {
                for k in 1..trace.states.len() {
                    let x = trace.states[k].iterate();
                    s += &format!(
                        "{epoch},{k},{},{},{}\n",
                        trace.indices[k - 1],
                        format_g17(lyapunov(&prob, spec.family, x)),
                        format_g17(x.norm())
                    );
                }
            }
            s
        }
        OutputFormat::Human => {
            let mut s = format!(
                "{} on n={}, p={} (problem seed {}), sampling seed {}\n",
                spec.family, config.problem.n, config.problem.p, config.problem.seed, config.seed
            );
            if let Some(nu) = nu {
                s += &format!("certified epoch rate nu = {nu}\n");
            }
            s += "epoch  V(start)                V(end)                  ratio\n";
            for e in &summaries {
                let ratio = if e.v_start > 0.0 { e.v_end / e.v_start } else { f64::NAN };
                s += &format!("{:<6} {:<23e} {:<23e} {:.6}\n", e.epoch, e.v_start, e.v_end, ratio);
            }
            s
        }
    };
    Ok((text, true))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct ValidationEntry {
    suite: &'static str,
    method: Option<MethodFamily>,
    #[serde(flatten)]
    report: InequalityReport,
}

#[derive(Debug, Serialize)]
struct ValidateReport {
    suite: Suite,
    seed: u64,
    trials: usize,
    problem: ProblemShape,
    pass: bool,
    reports: Vec<ValidationEntry>,
}

fn path_families(config: &RunConfig, all: &[MethodFamily]) -> Vec<MethodFamily> {
    match config.method {
        Some(f) if all.contains(&f) => vec![f],
        Some(_) => Vec::new(),
        None => all.to_vec(),
    }
}

fn seeds(config: &RunConfig) -> Vec<u64> {
    (0..config.trials as u64).map(|k| config.seed.wrapping_add(k)).collect()
}

fn skipped_entry(suite: &'static str, method: Option<MethodFamily>, name: &str, e: impl fmt::Display) -> ValidationEntry {
    ValidationEntry { suite, method, report: InequalityReport::skipped(name, e.to_string()) }
}

fn validate_appendix(config: &RunConfig, out: &mut Vec<ValidationEntry>) -> Result<(), CliError> {
    let prob = config.problem_for(MethodFamily::SvrgOptionI)?;
    for report in check_appendix_inequalities(&prob, config.trials, config.seed) {
        out.push(ValidationEntry { suite: "appendix", method: None, report });
    }
    Ok(())
}

fn validate_katyusha(config: &RunConfig, out: &mut Vec<ValidationEntry>) -> Result<(), CliError> {
    let family = Some(MethodFamily::Katyusha);
    if config.method.is_some_and(|m| m != MethodFamily::Katyusha) {
        return Ok(());
    }
    let (prob, spec) = match (config.problem_for(MethodFamily::Katyusha), config.spec_for(MethodFamily::Katyusha)) {
        (Ok(p), Ok(s)) => (p, s),
        (Err(e), _) | (_, Err(e)) => {
            out.push(skipped_entry("katyusha", family, "KAT.S1", &e));
            return Ok(());
        }
    };
    match check_katyusha_supply(&prob, &spec, config.trials, config.seed) {
        Ok(reports) => out.extend(reports.into_iter().map(|report| ValidationEntry { suite: "katyusha", method: family, report })),
        Err(e) => out.push(skipped_entry("katyusha", family, "KAT.S1", e)),
    }
    let x0 = DVector::zeros(prob.p());
    let report = check_katyusha_coupling(&prob, &spec, &x0, &seeds(config))?;
    out.push(ValidationEntry { suite: "katyusha", method: family, report });
    Ok(())
}

fn validate_dissipation(config: &RunConfig, out: &mut Vec<ValidationEntry>) -> Result<(), CliError> {
    const ALL: [MethodFamily; 4] =
        [MethodFamily::Sg, MethodFamily::SvrgOptionI, MethodFamily::SvrgOptionII, MethodFamily::Katyusha];
    for family in path_families(config, &ALL) {
        let fc = config.function_class_for(family);
        let setup = config
            .spec_for(family)
            .and_then(|spec| Ok((spec, analytic_certificate(&fc, &spec, config.tol)?, config.problem_for(family)?)));
        let (spec, cert, prob) = match setup {
            Ok(v) => v,
            Err(e) => {
                out.push(skipped_entry("dissipation", Some(family), "DISS", e));
                continue;
            }
        };
        if !cert.verified {
            out.push(skipped_entry("dissipation", Some(family), "DISS", "certificate does not verify"));
            continue;
        }
        let x0 = DVector::zeros(prob.p());
        let mut combined: Option<InequalityReport> = None;
        for seed in seeds(config) {
            let trace = match family {
                MethodFamily::Sg => run_sg(&prob, spec.eta, &x0, spec.m, seed),
                _ => crate::optimizers::run_epoch(&prob, &spec, &x0, seed, 0)?,
            };
            let r = check_dissipation_on_trace(&trace, &cert)?;
            combined = Some(match combined {
                None => r,
                Some(mut acc) => {
                    acc.trials += r.trials;
                    acc.max_violation = acc.max_violation.max(r.max_violation);
                    acc.pass &= r.pass;
                    acc
                }
            });
        }
        if let Some(report) = combined {
            out.push(ValidationEntry { suite: "dissipation", method: Some(family), report });
        }
    }
    Ok(())
}

fn validate_contraction(config: &RunConfig, out: &mut Vec<ValidationEntry>) -> Result<(), CliError> {
    const ALL: [MethodFamily; 3] = [MethodFamily::SvrgOptionI, MethodFamily::SvrgOptionII, MethodFamily::Katyusha];
    for family in path_families(config, &ALL) {
        let fc = config.function_class_for(family);
        let setup = config.spec_for(family).and_then(|spec| {
            let nu = closed_form_rate(&fc, &spec)?.nu;
            Ok((spec, nu, config.problem_for(family)?))
        });
        let (spec, nu, prob) = match setup {
            Ok(v) => v,
            Err(e) => {
                out.push(skipped_entry("contraction", Some(family), "CONTRACTION", e));
                continue;
            }
        };
        let x0 = DVector::zeros(prob.p());
        let report = check_epoch_contraction(&prob, &spec, &x0, config.epochs, &seeds(config), nu)?;
        out.push(ValidationEntry { suite: "contraction", method: Some(family), report });
    }
    Ok(())
}

fn validate(config: &RunConfig) -> Result<(String, bool), CliError> {
    let mut entries = Vec::new();
    let run_suite = |s: Suite| config.suite == Suite::All || config.suite == s;
    if run_suite(Suite::Appendix) {
        validate_appendix(config, &mut entries)?;
    }
    if run_suite(Suite::Katyusha) {
        validate_katyusha(config, &mut entries)?;
    }
    if run_suite(Suite::Dissipation) {
        validate_dissipation(config, &mut entries)?;
    }
    if run_suite(Suite::Contraction) {
        validate_contraction(config, &mut entries)?;
    }
    let pass = entries.iter().all(|e| e.report.pass);
    let text = match config.format {
        OutputFormat::Json => {
            let report = ValidateReport {
                suite: config.suite,
                seed: config.seed,
                trials: config.trials,
                problem: config.problem,
                pass,
                reports: entries,
            };
            to_json(&report) + "\n"
        }
        OutputFormat::Csv => {
            let mut s = format!("{CSV_HEADER}\nsuite,method,name,trials,max_violation,slack,pass,skipped\n");
            for e in &entries {
                let r = &e.report;
                s += &format!(
                    "{},{},{},{},{},{},{},{}\n",
                    e.suite,
                    e.method.map(|m| m.cli_name()).unwrap_or(""),
                    r.name,
                    r.trials,
                    format_g17(r.max_violation),
                    format_g17(r.slack),
                    r.pass,
                    r.skipped.as_deref().unwrap_or("").replace(',', ";")
                );
            }
            s
        }
        OutputFormat::Human => {
            let mut s = format!(
                "validation suite {} (n={}, p={}, trials={}, seed={})\n",
                config.suite.name(),
                config.problem.n,
                config.problem.p,
                config.trials,
                config.seed
            );
            for e in &entries {
                let r = &e.report;
                let method = e.method.map(|m| format!(" [{m}]")).unwrap_or_default();
                match &r.skipped {
                    Some(reason) => s += &format!("SKIP {}/{}{method}: {reason}\n", e.suite, r.name),
                    None => {
                        s += &format!(
                            "{} {}/{}{method}: {} trials, max violation {:e} (slack {:e})\n",
                            if r.pass { "PASS" } else { "FAIL" },
                            e.suite,
                            r.name,
                            r.trials,
                            r.max_violation,
                            r.slack
                        )
                    }
                }
            }
            s += if pass { "all checks passed\n" } else { "some checks FAILED\n" };
            s
        }
    };
    Ok((text, pass))
}

#[derive(Debug, Serialize)]
struct SweepRow {
    method: MethodFamily,
    eta: Option<f64>,
    tau1: Option<f64>,
    tau2: Option<f64>,
    alpha: Option<f64>,
    zeta: Option<f64>,
    m: usize,
    rho_sq: f64,
    lhs_max_eig: f64,
    verified: bool,
    predicate: Option<bool>,
    nu: Option<f64>,
    terms: Vec<RateTerm>,
}

fn grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    if points == 1 {
        return vec![lo];
    }
    (0..points).map(|k| lo + (hi - lo) * k as f64 / (points - 1) as f64).collect()
}

fn sweep(config: &RunConfig) -> Result<(String, bool), CliError> {
    let family = config.method.expect("sweep requires a method");
    let fc = config.function_class_for(family);
    let g = config.sweep;
    let m = config.m.unwrap_or(DEFAULT_SG_STEPS);
    let mut rows = Vec::new();
    let push = |spec: MethodSpec, rows: &mut Vec<SweepRow>| -> Result<(), CliError> {
        let (cert, predicate) = if family == MethodFamily::Katyusha {
            let k = katyusha_certificate(&fc, &spec, config.tol)?;
            (k.certificate, k.predicate)
        } else {
            (analytic_certificate(&fc, &spec, config.tol)?, None)
        };
        let rate = if cert.verified { closed_form_rate(&fc, &spec).ok() } else { None };
        let katyusha = family == MethodFamily::Katyusha;
        rows.push(SweepRow {
            method: family,
            eta: (!katyusha).then_some(spec.eta),
            tau1: katyusha.then_some(spec.tau1),
            tau2: katyusha.then_some(spec.tau2),
            alpha: katyusha.then_some(spec.alpha),
            zeta: katyusha.then_some(spec.zeta),
            m: spec.m,
            rho_sq: cert.instance.rho_sq,
            lhs_max_eig: cert.lhs_max_eig,
            verified: cert.verified,
            predicate,
            nu: rate.as_ref().map(|r| r.nu),
            terms: rate.map(|r| r.terms).unwrap_or_default(),
        });
        Ok(())
    };
    if family == MethodFamily::Katyusha {
        let l = fc.lipschitz;
        for tau2 in grid(g.tau2_min, g.tau2_max, g.points) {
            for j in 0..g.points {
                let tau1 = (1.0 - tau2) * (j + 1) as f64 / g.points as f64;
                let alpha = config.alpha.unwrap_or(1.0 / (3.0 * tau1 * l));
                let zeta = config.zeta.unwrap_or(1.0 / (3.0 * l));
                let spec = MethodSpec::katyusha(m, tau1, tau2, alpha, zeta)?;
                push(spec, &mut rows)?;
            }
        }
    } else {
        for eta in grid(g.eta_min, g.eta_max, g.points) {
            let spec = MethodSpec { family, eta, m, tau1: 0.0, tau2: 0.0, alpha: 0.0, zeta: 0.0 }.validated()?;
            push(spec, &mut rows)?;
        }
    }

    let text = match config.format {
        OutputFormat::Json => to_json(&rows) + "\n",
        OutputFormat::Csv | OutputFormat::Human => {
            let mut names: Vec<String> = Vec::new();
            for r in &rows {
                for t in &r.terms {
                    if !names.contains(&t.name) {
                        names.push(t.name.clone());
                    }
                }
            }
            let mut s = String::new();
            if config.format == OutputFormat::Csv {
                s += CSV_HEADER;
                s.push('\n');
            }
            s += "method,eta,tau1,tau2,alpha,zeta,m,rho_sq,lhs_max_eig,verified,predicate,nu";
            for n in &names {
                s += &format!(",{n}");
            }
            s.push('\n');
            for r in &rows {
                s += &format!(
                    "{},{},{},{},{},{},{},{},{},{},{},{}",
                    r.method,
                    csv_cell(r.eta),
                    csv_cell(r.tau1),
                    csv_cell(r.tau2),
                    csv_cell(r.alpha),
                    csv_cell(r.zeta),
                    r.m,
                    format_g17(r.rho_sq),
                    format_g17(r.lhs_max_eig),
                    r.verified,
                    r.predicate.map(|p| p.to_string()).unwrap_or_default(),
                    csv_cell(r.nu)
                );
                for n in &names {
                    s += &format!(",{}", csv_cell(r.terms.iter().find(|t| &t.name == n).map(|t| t.value)));
                }
                s.push('\n');
            }
            s
        }
    };
    Ok((text, true))
}

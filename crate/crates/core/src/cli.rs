//! Command-line front end.
//!
//! Exit codes: 0 success, 2 gate or domain rejection, 64 usage, 74 I/O.
//! CSV artifacts start with one `#` comment line carrying the library version
//! and the full run configuration as JSON; JSON artifacts carry the same under
//! `version` and `config`, next to `schema: 1`.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::error::CirError;
use crate::experiments::{
    sign_flip_study, strong_self_convergence, weak_moment_error, ErrorReport, Model,
};
use crate::one_factor::{run_path, Noise};
use crate::params::{
    validate_semidiscrete, validate_split, validate_two_factor, CirParams, GridSpec, SchemeKind,
    SchemeSpec, TwoFactorInput, TwoFactorParams,
};
use crate::randomness::SeedSpec;
use crate::two_factor::run_pair_path;
use crate::VERSION;

pub const EXIT_OK: i32 = 0;
pub const EXIT_REJECTED: i32 = 2;
pub const EXIT_USAGE: i32 = 64;
pub const EXIT_IO: i32 = 74;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Parser, Serialize)]
#[command(
    name = "cirsim",
    version,
    about = "Positivity-preserving CIR schemes and convergence experiments"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(tag = "subcommand", rename_all = "snake_case")]
pub enum Command {
    /// Check the validity gates of a scheme.
    Validate(ModelArgs),
    /// Simulate paths and write them as CSV or JSON.
    Simulate(SimulateArgs),
    /// Strong self-convergence ladder or weak moment error.
    Converge(ConvergeArgs),
    /// Sign-flip frequency of the semi-discrete scheme on a dyadic ladder.
    Signflip(SignflipArgs),
}

fn parse_scheme(s: &str) -> Result<SchemeKind, String> {
    s.parse::<SchemeKind>().map_err(|e| e.to_string())
}

fn scheme_name<S: serde::Serializer>(kind: &SchemeKind, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(kind.cli_name())
}

#[derive(Debug, Clone, Args, Serialize)]
#[command(allow_negative_numbers = true)]
pub struct ModelArgs {
    /// sd, split, exact, euler, 2f-split, 2f-sq or 2f-cross.
    #[arg(long, value_parser = parse_scheme)]
    #[serde(serialize_with = "scheme_name")]
    pub scheme: SchemeKind,
    /// Implicitness weight in [0, 1] (sd only).
    #[arg(long)]
    pub a: Option<f64>,
    /// Mean-reversion speed (one factor) or drift constant of the first coordinate.
    #[arg(long)]
    pub k: Option<f64>,
    /// Long-run level (one factor) or drift constant of the second coordinate.
    #[arg(long)]
    pub l: Option<f64>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub x0: f64,
    #[arg(long, default_value_t = 0.0)]
    pub lambda11: f64,
    #[arg(long, default_value_t = 0.0)]
    pub lambda12: f64,
    #[arg(long, default_value_t = 0.0)]
    pub lambda21: f64,
    #[arg(long, default_value_t = 0.0)]
    pub lambda22: f64,
    #[arg(long)]
    pub sigma1: Option<f64>,
    #[arg(long)]
    pub sigma2: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub x10: f64,
    #[arg(long, default_value_t = 1.0)]
    pub x20: f64,
    #[arg(long, default_value_t = 1.0)]
    pub t_max: f64,
    /// Number of uniform steps (coarsest level for ladders).
    #[arg(long)]
    pub steps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Strong,
    Weak,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct RunArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub paths: usize,
    /// Worker threads; defaults to the number of cores.
    #[arg(long)]
    #[serde(skip)]
    pub workers: Option<usize>,
    /// Output file; stdout when absent.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
#[command(allow_negative_numbers = true)]
pub struct SimulateArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub run: RunArgs,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(Debug, Clone, Args, Serialize)]
#[command(allow_negative_numbers = true)]
pub struct ConvergeArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub run: RunArgs,
    #[arg(long, value_enum, default_value_t = Mode::Strong)]
    pub mode: Mode,
    /// Ladder levels (strong mode), at least 3.
    #[arg(long, default_value_t = 4)]
    pub levels: u32,
    /// Ladder CSV; defaults to the output path with a `.csv` extension.
    #[arg(long)]
    pub ladder_csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
#[command(allow_negative_numbers = true)]
pub struct SignflipArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub run: RunArgs,
    /// Number of dyadic levels starting at `--steps`.
    #[arg(long, default_value_t = 6)]
    pub levels: u32,
    /// Ladder CSV; defaults to the output path with a `.csv` extension.
    #[arg(long)]
    pub ladder_csv: Option<PathBuf>,
}

/// Failure of a CLI run, carrying its exit code.
#[derive(Debug)]
pub enum CliError {
    Rejected(String),
    Usage(String),
    Io(io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Rejected(_) => EXIT_REJECTED,
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Io(_) => EXIT_IO,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Rejected(m) => write!(f, "rejected: {m}"),
            CliError::Usage(m) => write!(f, "usage: {m}"),
            CliError::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl From<CirError> for CliError {
    fn from(e: CirError) -> Self {
        match e {
            CirError::InvalidParameter { .. } => CliError::Usage(e.to_string()),
            CirError::Domain(_) | CirError::Usage(_) => CliError::Rejected(e.to_string()),
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Io(e)
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn require(name: &str, value: Option<f64>, scheme: SchemeKind) -> CliResult<f64> {
    value.ok_or_else(|| CliError::Usage(format!("--{name} is required for scheme `{scheme}`")))
}

impl ModelArgs {
    fn grid(&self) -> CliResult<GridSpec> {
        Ok(GridSpec::new(self.t_max, self.steps)?)
    }

    fn spec(&self) -> CliResult<SchemeSpec> {
        SchemeSpec::new(self.scheme, self.a).map_err(|e| CliError::Usage(e.to_string()))
    }

    fn model(&self) -> CliResult<Model> {
        let kind = self.scheme;
        let k = require("k", self.k, kind)?;
        let l = require("l", self.l, kind)?;
        if kind.is_two_factor() {
            Ok(Model::TwoFactor(TwoFactorParams::new(TwoFactorInput {
                k,
                l,
                lambda11: self.lambda11,
                lambda12: self.lambda12,
                lambda21: self.lambda21,
                lambda22: self.lambda22,
                sigma1: require("sigma1", self.sigma1, kind)?,
                sigma2: require("sigma2", self.sigma2, kind)?,
                x10: self.x10,
                x20: self.x20,
            })?))
        } else {
            let sigma = require("sigma", self.sigma, kind)?;
            Ok(Model::OneFactor(CirParams::new(k, l, sigma, self.x0)?))
        }
    }
}

fn one_factor(model: Model, what: &str) -> CliResult<CirParams> {
    match model {
        Model::OneFactor(p) => Ok(p),
        Model::TwoFactor(_) => Err(CliError::Rejected(format!(
            "{what} is only available for one-factor schemes"
        ))),
    }
}

/// Serializable echo of the invocation.
fn config_json(command: &Command) -> serde_json::Value {
    serde_json::to_value(command).expect("configuration serializes")
}

fn csv_preamble(command: &Command) -> String {
    format!("# cirsim {VERSION} {}\n", config_json(command))
}

fn json_document(command: &Command, key: &str, body: serde_json::Value) -> String {
    let doc = json!({
        "schema": SCHEMA_VERSION,
        "version": VERSION,
        "config": config_json(command),
        key: body,
    });
    let mut s = serde_json::to_string_pretty(&doc).expect("report serializes");
    s.push('\n');
    s
}

fn write_artifact(path: Option<&Path>, contents: &str) -> CliResult<()> {
    match path {
        Some(path) => {
            let mut w = BufWriter::new(File::create(path)?);
            w.write_all(contents.as_bytes())?;
            w.flush()?;
        }
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            lock.write_all(contents.as_bytes())?;
            lock.flush()?;
        }
    }
    Ok(())
}

fn ladder_csv_path(explicit: &Option<PathBuf>, output: &Option<PathBuf>) -> Option<PathBuf> {
    explicit
        .clone()
        .or_else(|| output.as_ref().map(|p| p.with_extension("csv")))
}

fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> CliResult<T> {
    match workers {
        None => Ok(f()),
        Some(0) => Err(CliError::Usage("--workers must be at least 1".into())),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::Usage(e.to_string()))?;
            Ok(pool.install(f))
        }
    }
}

fn cmd_validate(args: &ModelArgs) -> CliResult<String> {
    let g = args.grid()?;
    let model = args.model()?;
    let mut out = format!("scheme {} with Δ = {}\n", args.scheme, g.delta());
    let verdict = match (args.scheme, model) {
        (SchemeKind::SemiDiscreteSquared, Model::OneFactor(p)) => {
            let spec = args.spec()?;
            validate_semidiscrete(&p, &g, spec.a().unwrap())
        }
        (SchemeKind::SplitExact, Model::OneFactor(p)) => {
            let sv = validate_split(&p, &g)?;
            out.push_str(&format!(
                "d = {}, k1 = {}, k2 = {}\n",
                sv.split.degree, sv.split.frozen, sv.split.exact
            ));
            sv.verdict
        }
        (SchemeKind::ExactSim, Model::OneFactor(p)) => {
            if p.sigma() > 0.0 && p.degree().is_positive_integer() {
                crate::params::ValidityVerdict::Valid
            } else {
                return Err(CliError::Rejected(format!(
                    "exact simulation needs a positive integer degree 4kl/σ², got {}",
                    p.degree().value()
                )));
            }
        }
        (SchemeKind::TruncatedEuler, Model::OneFactor(_)) => crate::params::ValidityVerdict::Valid,
        (kind, Model::TwoFactor(p)) => {
            let tv = validate_two_factor(&p, &g, kind)?;
            if let Some((s1, s2)) = tv.splits {
                out.push_str(&format!(
                    "d1 = {}, k1 = {}, k2 = {}; d2 = {}, l1 = {}, l2 = {}\n",
                    s1.degree, s1.frozen, s1.exact, s2.degree, s2.frozen, s2.exact
                ));
            }
            tv.verdict
        }
        (kind, Model::OneFactor(_)) => {
            return Err(CliError::Usage(format!("unexpected scheme `{kind}`")))
        }
    };
    out.push_str(&format!("{verdict}\n"));
    if verdict.is_valid() {
        Ok(out)
    } else {
        Err(CliError::Rejected(out))
    }
}

struct SimulatedPath {
    rows: Vec<(f64, f64, f64)>,
    aborted: Option<String>,
}

fn cmd_simulate(command: &Command, args: &SimulateArgs) -> CliResult<()> {
    let g = args.model.grid()?;
    let spec = args.model.spec()?;
    let model = args.model.model()?;
    let seed = args.run.seed;
    // Fail on invalid gates before writing anything.
    match &model {
        Model::OneFactor(p) => crate::one_factor::check_gates(p, &g, &spec)?,
        Model::TwoFactor(p) => validate_two_factor(p, &g, spec.kind())?
            .verdict
            .into_result()?,
    }
    let paths: Vec<SimulatedPath> = with_workers(args.run.workers, || {
        (0..args.run.paths as u64)
            .into_par_iter()
            .map(|i| {
                let noise = Noise::Seed(SeedSpec::new(seed, i, 0));
                let mut rows = Vec::with_capacity(g.n_steps() + 1);
                let result = match &model {
                    Model::OneFactor(p) => run_path(p, &g, &spec, noise, |j, y| {
                        rows.push((g.node(j), y, f64::NAN))
                    })
                    .map(|_| ()),
                    Model::TwoFactor(p) => {
                        run_pair_path(p, &g, &spec, noise, |j, a, b| rows.push((g.node(j), a, b)))
                            .map(|_| ())
                    }
                };
                match result {
                    Ok(()) => Ok(SimulatedPath {
                        rows,
                        aborted: None,
                    }),
                    Err(CirError::Domain(m))
                        if spec.kind() == SchemeKind::TwoFactorCrossDiffusion =>
                    {
                        Ok(SimulatedPath {
                            rows,
                            aborted: Some(m),
                        })
                    }
                    Err(e) => Err(e),
                }
            })
            .collect::<Result<Vec<_>, CirError>>()
    })??;

    let aborted = paths.iter().filter(|p| p.aborted.is_some()).count();
    if aborted > 0 {
        eprintln!(
            "warning: {aborted} of {} paths aborted on a negative radicand",
            paths.len()
        );
    }
    let two = matches!(model, Model::TwoFactor(_));
    let contents = match args.format {
        Format::Csv => {
            let mut s = csv_preamble(command);
            s.push_str(if two {
                "path_id,t,y1,y2\n"
            } else {
                "path_id,t,y\n"
            });
            for (id, path) in paths.iter().enumerate() {
                for &(t, a, b) in &path.rows {
                    if two {
                        s.push_str(&format!("{id},{t},{a},{b}\n"));
                    } else {
                        s.push_str(&format!("{id},{t},{a}\n"));
                    }
                }
            }
            s
        }
        Format::Json => {
            let body: Vec<serde_json::Value> = paths
                .iter()
                .enumerate()
                .map(|(id, path)| {
                    let t: Vec<f64> = path.rows.iter().map(|r| r.0).collect();
                    let mut v = json!({ "path_id": id, "t": t, "aborted": path.aborted });
                    if two {
                        v["y1"] = json!(path.rows.iter().map(|r| r.1).collect::<Vec<_>>());
                        v["y2"] = json!(path.rows.iter().map(|r| r.2).collect::<Vec<_>>());
                    } else {
                        v["y"] = json!(path.rows.iter().map(|r| r.1).collect::<Vec<_>>());
                    }
                    v
                })
                .collect();
            json_document(command, "paths", serde_json::Value::Array(body))
        }
    };
    write_artifact(args.run.output.as_deref(), &contents)
}

fn report_value(report: &ErrorReport) -> serde_json::Value {
    serde_json::to_value(report).expect("report serializes")
}

fn cmd_converge(command: &Command, args: &ConvergeArgs) -> CliResult<()> {
    let g = args.model.grid()?;
    let spec = args.model.spec()?;
    let model = args.model.model()?;
    let (report, csv) = match args.mode {
        Mode::Strong => {
            let p = one_factor(model, "strong self-convergence")?;
            let report = with_workers(args.run.workers, || {
                strong_self_convergence(&p, &g, args.levels, &spec, args.run.paths, args.run.seed)
            })??;
            let mut csv = csv_preamble(command);
            csv.push_str("delta,strong_error,std_error\n");
            for level in &report.ladder {
                csv.push_str(&format!(
                    "{},{},{}\n",
                    level.delta,
                    level.strong_error_l2.unwrap_or(f64::NAN),
                    level.std_error.unwrap_or(f64::NAN)
                ));
            }
            (report, csv)
        }
        Mode::Weak => {
            let report = with_workers(args.run.workers, || {
                weak_moment_error(&model, &g, &spec, args.run.paths, args.run.seed, None)
            })??;
            let mut csv = csv_preamble(command);
            csv.push_str("delta,weak_mean_error,mean_std_error\n");
            for level in &report.ladder {
                let se = level
                    .coordinates
                    .iter()
                    .map(|c| c.mean_std_error)
                    .fold(0.0, f64::max);
                csv.push_str(&format!(
                    "{},{},{}\n",
                    level.delta, level.weak_mean_error, se
                ));
            }
            (report, csv)
        }
    };
    let doc = json_document(command, "report", report_value(&report));
    write_artifact(args.run.output.as_deref(), &doc)?;
    if let Some(path) = ladder_csv_path(&args.ladder_csv, &args.run.output) {
        write_artifact(Some(&path), &csv)?;
    }
    Ok(())
}

fn cmd_signflip(command: &Command, args: &SignflipArgs) -> CliResult<()> {
    if args.model.scheme != SchemeKind::SemiDiscreteSquared {
        return Err(CliError::Rejected(format!(
            "the sign-flip study runs the sd scheme only, got `{}`",
            args.model.scheme
        )));
    }
    let g = args.model.grid()?;
    let spec = args.model.spec()?;
    let p = one_factor(args.model.model()?, "the sign-flip study")?;
    if args.levels == 0 {
        return Err(CliError::Rejected("--levels must be at least 1".into()));
    }
    let ladder: Vec<GridSpec> = (0..args.levels).map(|m| g.refined(m)).collect();
    let report = with_workers(args.run.workers, || {
        sign_flip_study(
            &p,
            &ladder,
            spec.a().unwrap(),
            args.run.paths,
            args.run.seed,
        )
    })??;
    let mut csv = csv_preamble(command);
    csv.push_str("delta,flip_fraction\n");
    for level in &report.ladder {
        csv.push_str(&format!("{},{}\n", level.delta, level.flip_fraction));
    }
    let doc = json_document(
        command,
        "report",
        serde_json::to_value(&report).expect("report serializes"),
    );
    write_artifact(args.run.output.as_deref(), &doc)?;
    if let Some(path) = ladder_csv_path(&args.ladder_csv, &args.run.output) {
        write_artifact(Some(&path), &csv)?;
    }
    Ok(())
}

/// Runs a parsed command.
pub fn run(cli: &Cli) -> CliResult<()> {
    let command = &cli.command;
    match command {
        Command::Validate(args) => {
            let text = cmd_validate(args)?;
            print!("{text}");
            Ok(())
        }
        Command::Simulate(args) => cmd_simulate(command, args),
        Command::Converge(args) => cmd_converge(command, args),
        Command::Signflip(args) => cmd_signflip(command, args),
    }
}

/// Parses `std::env::args`, runs, and returns the exit code.
pub fn main() -> i32 {
    main_with_args(std::env::args_os())
}

pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match run(&cli) {
        Ok(()) => EXIT_OK,
        Err(CliError::Rejected(m)) => {
            eprint!("{m}");
            if !m.ends_with('\n') {
                eprintln!();
            }
            EXIT_REJECTED
        }
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}

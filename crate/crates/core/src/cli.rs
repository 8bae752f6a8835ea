//! Batch front end: load a JSON problem spec, run one solver or check and
//! write deterministic CSV/JSON artifacts.
//!
//! Exit status is 0 on success, 1 when a check fails and 2 on configuration,
//! build or I/O errors.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::chain::{build_chain, TimeStateGrid};
use crate::error::Error;
use crate::export::{field_csv, pde_csv, strategy_csv, write_artifact};
use crate::game::{dpp_residual, lsc_envelope_sequence, mixed_value};
use crate::instances::bundled_by_name;
use crate::model::{validate, ProblemSpec, ValidationConfig};
use crate::oracle::{oracle_record, random_instance_record, OracleRecord};
use crate::pde::{hjbvi_penalty_solve, hjbvi_project_solve};
use crate::study::cross_solver_study;

pub const CONFIG_SCHEMA: u32 = 1;

const DEFAULT_CROSS_TOL: f64 = 5e-3;
const DEFAULT_ORACLE_TOL: f64 = 1e-10;
const DEFAULT_DPP_TOL: f64 = 1e-12;
const DEFAULT_PENALTY: f64 = 100.0;
const DEFAULT_ORACLE_COUNT: usize = 50;
const DEFAULT_ENVELOPE_LEVELS: [f64; 5] = [1.0, 2.0, 4.0, 8.0, 16.0];

#[derive(Debug, Parser)]
#[command(name = "mixed-dynkin", version, about = "Mixed Dynkin game / control solver and verification harness")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub flags: Flags,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Sample the standing assumptions; exit 0 iff nothing is violated.
    Validate,
    /// Solve with the chosen method and write value/strategy CSVs.
    Solve,
    /// Lattice against finite differences; exit 0 iff the gap is within tolerance.
    CrossCheck,
    /// Brute-force game enumeration against the lattice; exit 0 iff all gaps are within tolerance.
    Oracle,
    /// Dynamic programming residuals at every interior time.
    DppCheck,
    /// Value sequence under Lipschitz approximations of the terminal reward.
    Envelope,
    /// Summarise every artifact in the output directory.
    Report,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    #[default]
    Lattice,
    FdProjection,
    FdPenalty,
}

/// Command-line overrides; each wins over the config file.
#[derive(Clone, Debug, Default, Args)]
pub struct Flags {
    /// Run config JSON (`"schema": 1`).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Problem spec JSON.
    #[arg(long, global = true)]
    pub spec: Option<PathBuf>,
    /// Time steps N.
    #[arg(long, global = true)]
    pub n_steps: Option<usize>,
    /// Grid states M.
    #[arg(long, global = true)]
    pub n_states: Option<usize>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub x_min: Option<f64>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub x_max: Option<f64>,
    #[arg(long, global = true, value_enum)]
    pub method: Option<Method>,
    /// Penalty parameter for `fd-penalty`.
    #[arg(long, global = true)]
    pub penalty: Option<f64>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub output_dir: Option<PathBuf>,
    /// Overrides the pass threshold of the chosen check.
    #[arg(long, global = true)]
    pub tolerance: Option<f64>,
    /// Worker threads; artifacts do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Refinement levels for `cross-check`.
    #[arg(long, global = true)]
    pub levels: Option<usize>,
    /// Random instances for `oracle` without a spec.
    #[arg(long, global = true)]
    pub count: Option<usize>,
    /// Comma-separated Lipschitz levels for `envelope`.
    #[arg(long, global = true, value_delimiter = ',')]
    pub envelope_levels: Option<Vec<f64>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub n_steps: usize,
    pub n_states: usize,
    pub x_min: f64,
    pub x_max: f64,
}

/// The config file as written on disk.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    schema: u32,
    spec_path: Option<PathBuf>,
    grid: Option<GridConfig>,
    method: Option<Method>,
    penalty_n: Option<f64>,
    seed: Option<u64>,
    output_dir: Option<PathBuf>,
    tolerance: Option<f64>,
    threads: Option<usize>,
    levels: Option<usize>,
    count: Option<usize>,
    envelope_levels: Option<Vec<f64>>,
}

/// Fully resolved run settings.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub spec_path: Option<PathBuf>,
    pub grid: Option<GridConfig>,
    pub method: Method,
    pub penalty_n: f64,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub tolerance: Option<f64>,
    pub threads: Option<usize>,
    pub levels: usize,
    pub count: usize,
    pub envelope_levels: Vec<f64>,
}

#[derive(Debug)]
pub enum Failure {
    /// A check ran and failed: exit 1.
    Check(String),
    /// Bad configuration, unbuildable problem or I/O trouble: exit 2.
    Config(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Check(_) => 1,
            Self::Config(_) => 2,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Self::Config(e.to_string())
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Check(m) => write!(f, "check failed: {m}"),
            Self::Config(m) => write!(f, "error: {m}"),
        }
    }
}

type Outcome = Result<Vec<PathBuf>, Failure>;

impl RunConfig {
    /// Merges the optional config file with command-line flags.
    pub fn resolve(flags: &Flags) -> Result<Self, Failure> {
        let (file, base) = match &flags.config {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| Failure::Config(format!("cannot read config {}: {e}", path.display())))?;
                let file: ConfigFile =
                    serde_json::from_str(&text).map_err(|e| Failure::Config(format!("config {}: {e}", path.display())))?;
                if file.schema != CONFIG_SCHEMA {
                    return Err(Failure::Config(format!("config schema {} is not supported (expected {CONFIG_SCHEMA})", file.schema)));
                }
                (file, path.parent().map(Path::to_path_buf).unwrap_or_default())
            }
            None => (ConfigFile { schema: CONFIG_SCHEMA, ..Default::default() }, PathBuf::new()),
        };
        let spec_path = flags.spec.clone().or_else(|| file.spec_path.map(|p| base.join(p)));
        let grid = match (flags.n_steps, flags.n_states, flags.x_min, flags.x_max, file.grid) {
            (None, None, None, None, g) => g,
            (n, m, lo, hi, Some(g)) => Some(GridConfig {
                n_steps: n.unwrap_or(g.n_steps),
                n_states: m.unwrap_or(g.n_states),
                x_min: lo.unwrap_or(g.x_min),
                x_max: hi.unwrap_or(g.x_max),
            }),
            (Some(n_steps), Some(n_states), Some(x_min), Some(x_max), None) => Some(GridConfig { n_steps, n_states, x_min, x_max }),
            _ => return Err(Failure::Config("grid flags need all of --n-steps, --n-states, --x-min, --x-max without a config grid".into())),
        };
        let cfg = Self {
            spec_path,
            grid,
            method: flags.method.or(file.method).unwrap_or_default(),
            penalty_n: flags.penalty.or(file.penalty_n).unwrap_or(DEFAULT_PENALTY),
            seed: flags.seed.or(file.seed).unwrap_or(0),
            output_dir: flags.output_dir.clone().or_else(|| file.output_dir.map(|p| base.join(p))).unwrap_or_else(|| "out".into()),
            tolerance: flags.tolerance.or(file.tolerance),
            threads: flags.threads.or(file.threads),
            levels: flags.levels.or(file.levels).unwrap_or(1),
            count: flags.count.or(file.count).unwrap_or(DEFAULT_ORACLE_COUNT),
            envelope_levels: flags.envelope_levels.clone().or(file.envelope_levels).unwrap_or_else(|| DEFAULT_ENVELOPE_LEVELS.to_vec()),
        };
        cfg.check()?;
        Ok(cfg)
    }

    fn check(&self) -> Result<(), Failure> {
        if let Some(g) = &self.grid {
            if g.n_steps == 0 || g.n_states < 2 || !(g.x_min < g.x_max) {
                return Err(Failure::Config(format!("grid must have N ≥ 1, M ≥ 2 and x_min < x_max, got {g:?}")));
            }
        }
        if !(self.penalty_n >= 0.0) {
            return Err(Failure::Config(format!("penalty must be nonnegative, got {}", self.penalty_n)));
        }
        if self.levels == 0 {
            return Err(Failure::Config("levels must be at least 1".into()));
        }
        if self.threads == Some(0) {
            return Err(Failure::Config("threads must be at least 1".into()));
        }
        if let Some(t) = self.tolerance {
            if !(t >= 0.0) {
                return Err(Failure::Config(format!("tolerance must be nonnegative, got {t}")));
            }
        }
        Ok(())
    }

    fn load_spec(&self) -> Result<ProblemSpec<f64>, Failure> {
        let path = self.spec_path.as_ref().ok_or_else(|| Failure::Config("no problem spec given (--spec or spec_path)".into()))?;
        let text = fs::read_to_string(path).map_err(|e| Failure::Config(format!("cannot read spec {}: {e}", path.display())))?;
        ProblemSpec::from_json_str(&text).map_err(|e| Failure::Config(format!("spec {}: {e}", path.display())))
    }

    /// Grid from flags or config, else the default grid of the bundled
    /// instance whose name matches the spec file stem.
    fn grid_for(&self, spec: &ProblemSpec<f64>) -> Result<TimeStateGrid<f64>, Failure> {
        let g = match self.grid {
            Some(g) => g,
            None => {
                let stem = self.spec_path.as_ref().and_then(|p| p.file_stem()).and_then(|s| s.to_str()).unwrap_or("");
                let (n_steps, n_states, x_min, x_max) = bundled_by_name(stem)
                    .ok_or_else(|| Failure::Config("no grid given (--n-steps/--n-states/--x-min/--x-max or config grid)".into()))?
                    .grid;
                GridConfig { n_steps, n_states, x_min, x_max }
            }
        };
        Ok(TimeStateGrid::new(g.n_steps, g.n_states, g.x_min, g.x_max, spec.horizon)?)
    }

    fn tolerance_or(&self, default: f64) -> f64 {
        self.tolerance.unwrap_or(default)
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// exit status.
pub fn run<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let outcome = RunConfig::resolve(&cli.flags).and_then(|cfg| run_with_threads(cfg.threads, || execute(cli.command, &cfg)));
    match outcome {
        Ok(paths) => {
            for p in paths {
                println!("wrote {}", p.display());
            }
            0
        }
        Err(f) => {
            eprintln!("{f}");
            f.exit_code()
        }
    }
}

/// Runs `f` on a dedicated pool of `threads` workers, or the global pool.
pub fn run_with_threads<R: Send>(threads: Option<usize>, f: impl FnOnce() -> Result<R, Failure> + Send) -> Result<R, Failure> {
    match threads {
        None => f(),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Failure::Config(format!("thread pool: {e}")))?
            .install(f),
    }
}

/// Runs one command; returns the artifacts it wrote.
pub fn execute(command: Command, cfg: &RunConfig) -> Outcome {
    match command {
        Command::Validate => cmd_validate(cfg),
        Command::Solve => cmd_solve(cfg),
        Command::CrossCheck => cmd_cross_check(cfg),
        Command::Oracle => cmd_oracle(cfg),
        Command::DppCheck => cmd_dpp(cfg),
        Command::Envelope => cmd_envelope(cfg),
        Command::Report => cmd_report(cfg),
    }
}

fn json_artifact(cfg: &RunConfig, name: &str, value: &impl Serialize) -> Result<PathBuf, Failure> {
    let text = serde_json::to_string_pretty(value).map_err(Error::from)? + "\n";
    Ok(write_artifact(&cfg.output_dir, name, &text)?)
}

fn verdict(paths: Vec<PathBuf>, ok: bool, message: impl FnOnce() -> String) -> Outcome {
    if ok {
        Ok(paths)
    } else {
        Err(Failure::Check(message()))
    }
}

fn cmd_validate(cfg: &RunConfig) -> Outcome {
    let spec = cfg.load_spec()?;
    let report = validate(&spec, &ValidationConfig { seed: cfg.seed, ..Default::default() })?;
    println!("{}", serde_json::to_string_pretty(&report).map_err(Error::from)?);
    verdict(vec![], report.is_empty(), || format!("{} assumption violation(s)", report.violations.len()))
}

fn cmd_solve(cfg: &RunConfig) -> Outcome {
    let spec = cfg.load_spec()?;
    let grid = cfg.grid_for(&spec)?;
    let dir = &cfg.output_dir;
    match cfg.method {
        Method::Lattice => {
            let chain = build_chain(&spec, &grid)?;
            let (u, strategy) = mixed_value(&chain, &spec)?;
            Ok(vec![
                write_artifact(dir, "value.csv", &field_csv(&u, &grid)?)?,
                write_artifact(dir, "strategy.csv", &strategy_csv(&u, &strategy, &grid)?)?,
            ])
        }
        Method::FdProjection | Method::FdPenalty => {
            let sol = if cfg.method == Method::FdProjection {
                hjbvi_project_solve(&spec, &grid)?
            } else {
                hjbvi_penalty_solve(&spec, &grid, cfg.penalty_n)?
            };
            Ok(vec![
                write_artifact(dir, "value.csv", &field_csv(&sol.u, &grid)?)?,
                write_artifact(dir, "pde.csv", &pde_csv(&sol, &grid)?)?,
            ])
        }
    }
}

fn cmd_cross_check(cfg: &RunConfig) -> Outcome {
    let spec = cfg.load_spec()?;
    let grid = cfg.grid_for(&spec)?;
    let tol = cfg.tolerance_or(DEFAULT_CROSS_TOL);
    let study = cross_solver_study(&spec, &grid, cfg.levels)?;
    let gap = study.levels[0].gap;
    let ok = gap <= tol;
    let path = json_artifact(cfg, "cross_check.json", &json!({
        "tolerance": tol,
        "gap": gap,
        "passed": ok,
        "comparison_structure": spec.driver.has_comparison_structure(),
        "study": study,
    }))?;
    verdict(vec![path], ok, || format!("lattice/PDE gap {gap:e} exceeds tolerance {tol:e}"))
}

fn cmd_oracle(cfg: &RunConfig) -> Outcome {
    let tol = cfg.tolerance_or(DEFAULT_ORACLE_TOL);
    let records: Vec<OracleRecord> = if cfg.spec_path.is_some() {
        let spec = cfg.load_spec()?;
        let grid = cfg.grid_for(&spec)?;
        let chain = build_chain(&spec, &grid)?;
        let root = grid.nearest(0.0);
        (0..spec.n_controls())
            .map(|a| oracle_record(cfg.seed, &chain, &spec, a, root))
            .collect::<Result<_, Error>>()?
    } else {
        (cfg.seed..cfg.seed + cfg.count as u64)
            .into_par_iter()
            .map(random_instance_record)
            .collect::<Result<_, Error>>()?
    };
    let max_gap = records.iter().map(|r| r.gap).fold(0.0, f64::max);
    let ok = records.iter().all(|r| r.gap <= tol);
    let path = json_artifact(cfg, "oracle.json", &json!({ "tolerance": tol, "max_gap": max_gap, "passed": ok, "records": records }))?;
    verdict(vec![path], ok, || format!("oracle gap {max_gap:e} exceeds tolerance {tol:e}"))
}

fn cmd_dpp(cfg: &RunConfig) -> Outcome {
    let spec = cfg.load_spec()?;
    let grid = cfg.grid_for(&spec)?;
    let tol = cfg.tolerance_or(DEFAULT_DPP_TOL);
    let chain = build_chain(&spec, &grid)?;
    let (u, _) = mixed_value(&chain, &spec)?;
    let residuals = (1..grid.n_steps)
        .map(|s| Ok(json!({ "s": s, "t": grid.t(s), "residual": dpp_residual(&chain, &spec, &u, s)? })))
        .collect::<Result<Vec<_>, Error>>()?;
    let worst = residuals.iter().filter_map(|r| r["residual"].as_f64()).fold(0.0, f64::max);
    let ok = worst <= tol;
    let path = json_artifact(cfg, "dpp.json", &json!({ "tolerance": tol, "max_residual": worst, "passed": ok, "residuals": residuals }))?;
    verdict(vec![path], ok, || format!("DPP residual {worst:e} exceeds tolerance {tol:e}"))
}

fn cmd_envelope(cfg: &RunConfig) -> Outcome {
    let spec = cfg.load_spec()?;
    let grid = cfg.grid_for(&spec)?;
    let chain = build_chain(&spec, &grid)?;
    let seq = lsc_envelope_sequence(&chain, &spec, &cfg.envelope_levels)?;
    let mut paths = seq
        .levels
        .iter()
        .zip(&seq.u_n)
        .map(|(n, u)| Ok(write_artifact(&cfg.output_dir, &format!("u_n_{n}.csv"), &field_csv(u, &grid)?)?))
        .collect::<Result<Vec<_>, Failure>>()?;
    let first_decrease = seq.first_decrease();
    let ok = seq.is_monotone();
    let decrease = first_decrease.map(|(l, k, i)| json!({ "level": seq.levels[l], "k": k, "i": i }));
    paths.push(json_artifact(
        cfg,
        "envelope.json",
        &json!({ "levels": seq.levels, "monotone": ok, "first_decrease": decrease, "g_n": seq.g_n }),
    )?);
    verdict(paths, ok, || match first_decrease {
        Some((l, k, i)) => format!("u_n decreases at level {} node (k={k}, i={i})", seq.levels[l]),
        None => "terminal approximations g_n are not nondecreasing".into(),
    })
}

#[derive(Serialize)]
struct ArtifactSummary {
    name: String,
    bytes: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    data_rows: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    content: Option<serde_json::Value>,
}

const REPORT_NAME: &str = "report.json";

fn cmd_report(cfg: &RunConfig) -> Outcome {
    let dir = &cfg.output_dir;
    let io = |e: std::io::Error| Failure::Config(format!("cannot read output dir {}: {e}", dir.display()));
    let mut names = fs::read_dir(dir)
        .map_err(io)?
        .map(|entry| entry.map(|e| e.file_name().to_string_lossy().into_owned()))
        .collect::<Result<Vec<_>, _>>()
        .map_err(io)?;
    names.retain(|n| n != REPORT_NAME);
    names.sort();
    let artifacts = names
        .into_iter()
        .filter(|n| dir.join(n).is_file())
        .map(|name| {
            let text = fs::read_to_string(dir.join(&name)).map_err(io)?;
            let (data_rows, content) = match Path::new(&name).extension().and_then(|e| e.to_str()) {
                Some("csv") => (Some(text.lines().count().saturating_sub(1)), None),
                Some("json") => (None, serde_json::from_str(&text).ok()),
                _ => (None, None),
            };
            Ok(ArtifactSummary { bytes: text.len() as u64, name, data_rows, content })
        })
        .collect::<Result<Vec<_>, Failure>>()?;
    Ok(vec![json_artifact(cfg, REPORT_NAME, &json!({ "artifacts": artifacts }))?])
}

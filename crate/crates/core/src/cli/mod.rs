//! Command-line front end: `simulate`, `certify`, `report`, `scenarios`.
//!
//! Settings resolve in this order: command-line flag, `CORE_SIM_*`
//! environment variable, `--config` file, built-in default.

mod report;

use crate::certificate::{certify, CertifyOptions, Prior};
use crate::grounding::TreatUnknown;
use crate::sim::{
    run_episode, run_suite, write_deliveries_csv, write_trajectory_csv, EpisodeConfig, EpisodeError, EpisodeOutcome,
    Mode, SuiteJob,
};
use crate::world::{builtin_names, builtin_scenario, builtin_scenarios, load_scenario, Scenario, ScenarioError};
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

pub use report::{cmd_report, ReportSummary};

#[derive(Debug, Parser)]
#[command(name = "core-sim", version, about = "Contextual safety filter simulator and certificate calculator")]
pub struct Cli {
    /// TOML file with defaults for any command (see README).
    #[arg(long, global = true, env = "CORE_SIM_CONFIG")]
    pub config: Option<PathBuf>,
    /// Output directory for artifacts.
    #[arg(long, global = true, env = "CORE_SIM_OUTPUT")]
    pub output: Option<PathBuf>,
    /// Worker threads for suites and Monte Carlo [count, default: all cores].
    #[arg(long, global = true, env = "CORE_SIM_JOBS")]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one episode or the full suite.
    Simulate(SimulateArgs),
    /// Compute a traversal-safety certificate.
    Certify(CertifyArgs),
    /// Aggregate a previous `simulate` output directory.
    Report(ReportArgs),
    /// List the builtin scenarios.
    Scenarios,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateArgs {
    /// Builtin scenario name or path to a scenario TOML file.
    #[arg(long, env = "CORE_SIM_SCENARIO")]
    pub scenario: Option<String>,
    /// core | oracle | no_context | geometric.
    #[arg(long, env = "CORE_SIM_MODE")]
    pub mode: Option<String>,
    /// Run every builtin scenario under every mode in `--modes`.
    #[arg(long)]
    #[serde(skip)]
    pub suite: bool,
    /// Comma-separated modes for `--suite` [default: all four].
    #[arg(long, env = "CORE_SIM_MODES", value_delimiter = ',')]
    pub modes: Option<Vec<String>>,
    /// Repeats per scenario in a suite [count, default: 5].
    #[arg(long, env = "CORE_SIM_REPEATS")]
    pub repeats: Option<usize>,
    /// Episode seed, or the base seed of a suite [default: 0].
    #[arg(long, env = "CORE_SIM_SEED")]
    pub seed: Option<u64>,
    /// Time between frame captures [s, default: 3].
    #[arg(long, env = "CORE_SIM_FRAME_PERIOD")]
    pub frame_period: Option<f64>,
    /// Capture-to-delivery perception latency [s, default: 3].
    #[arg(long, env = "CORE_SIM_LATENCY")]
    pub latency: Option<f64>,
    /// Detection probability at zero range [probability, default: 0.75].
    #[arg(long, env = "CORE_SIM_P0")]
    pub p0: Option<f64>,
    /// Detection probability drop across the sensing radius [probability, default: 0.001].
    #[arg(long, env = "CORE_SIM_EPSILON")]
    pub epsilon: Option<f64>,
    /// Detector sensing radius [m, default: 8].
    #[arg(long, env = "CORE_SIM_SENSING_RADIUS")]
    pub sensing_radius: Option<f64>,
    /// Lower edge of the projection range band [m, default: 3].
    #[arg(long, env = "CORE_SIM_MIN_RANGE")]
    pub min_range: Option<f64>,
    /// Upper edge of the projection range band [m, default: 7].
    #[arg(long, env = "CORE_SIM_MAX_RANGE")]
    pub max_range: Option<f64>,
    /// AROUND dilation kernel side [px, default: 50].
    #[arg(long, env = "CORE_SIM_DILATION")]
    pub dilation: Option<usize>,
    /// Grid cell size [m, default: 0.2].
    #[arg(long, env = "CORE_SIM_RESOLUTION")]
    pub resolution: Option<f64>,
    /// Safe-set probability threshold [probability, default: 0.5].
    #[arg(long, env = "CORE_SIM_TAU")]
    pub tau: Option<f64>,
    /// Unobserved cells: safe | unsafe [default: safe].
    #[arg(long, env = "CORE_SIM_TREAT_UNKNOWN")]
    pub treat_unknown: Option<String>,
    /// Class-K slope [1/s, default: 0.25].
    #[arg(long, env = "CORE_SIM_ALPHA")]
    pub alpha: Option<f64>,
    /// Planar speed limit [m/s, default: 0.35].
    #[arg(long, env = "CORE_SIM_V_MAX")]
    pub v_max: Option<f64>,
    /// Yaw-rate limit [rad/s, default: 1].
    #[arg(long, env = "CORE_SIM_OMEGA_MAX")]
    pub omega_max: Option<f64>,
    /// Control period [s, default: 0.1].
    #[arg(long, env = "CORE_SIM_DT")]
    pub dt: Option<f64>,
    /// Position gain of the waypoint follower [1/s, default: 0.8].
    #[arg(long, env = "CORE_SIM_KP")]
    pub kp: Option<f64>,
    /// Heading gain of the waypoint follower [1/s, default: 1].
    #[arg(long, env = "CORE_SIM_K_HEADING")]
    pub k_heading: Option<f64>,
    /// Episode length limit [s, default: 90].
    #[arg(long, env = "CORE_SIM_HORIZON")]
    pub horizon: Option<f64>,
    /// Start-position randomization radius [m, default: 0.5].
    #[arg(long, env = "CORE_SIM_START_RADIUS")]
    pub start_radius: Option<f64>,
    /// Soft-min temperature of the filter's field, 0 to filter on the raw barrier [m, default: 0.05].
    #[arg(long, env = "CORE_SIM_SMOOTHING")]
    pub smoothing: Option<f64>,
    /// Clearance kept from the safe-set boundary by the filter [m, default: 0.15].
    #[arg(long, env = "CORE_SIM_CLEARANCE")]
    pub clearance: Option<f64>,
    /// Disable the safety filter (fault injection).
    #[arg(long)]
    #[serde(skip)]
    pub no_filter: bool,
    /// Also write grid and SDF snapshots for every suite episode.
    #[arg(long)]
    #[serde(skip)]
    pub snapshots: bool,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CertifyArgs {
    /// Detection probability at zero range [probability, default: 0.75].
    #[arg(long, env = "CORE_SIM_P0")]
    pub p0: Option<f64>,
    /// Detection probability drop across the sensing radius [probability, default: 0.001].
    #[arg(long, env = "CORE_SIM_EPSILON")]
    pub epsilon: Option<f64>,
    /// Sensing radius D [m, default: 4].
    #[arg(long, env = "CORE_SIM_SENSING_RADIUS")]
    pub sensing_radius: Option<f64>,
    /// Initial safe radius R [m, default: 4].
    #[arg(long, env = "CORE_SIM_SAFE_RADIUS")]
    pub safe_radius: Option<f64>,
    /// Traversal speed [m/s, default: 0.35].
    #[arg(long, env = "CORE_SIM_SPEED")]
    pub speed: Option<f64>,
    /// Time per measurement [s, default: 3].
    #[arg(long, env = "CORE_SIM_LATENCY")]
    pub latency: Option<f64>,
    /// Target failure probability [probability, default: 0.1].
    #[arg(long, env = "CORE_SIM_DELTA")]
    pub delta: Option<f64>,
    /// Failure probability absorbed elsewhere [probability, default: 0].
    #[arg(long, env = "CORE_SIM_GAMMA")]
    pub gamma: Option<f64>,
    /// Prior on the initial distance: uniform | point_mass_at_r [default: uniform].
    #[arg(long, env = "CORE_SIM_PRIOR")]
    pub prior: Option<String>,
    /// Inverse-distance scale c [1, default: searched].
    #[arg(long)]
    pub c: Option<f64>,
    /// Inverse-distance offset l [m, default: searched].
    #[arg(long)]
    pub ell: Option<f64>,
    /// Cap on measurement counts [count, default: 200].
    #[arg(long)]
    pub k_max: Option<usize>,
    /// Monte Carlo validation trials [count, default: off].
    #[arg(long)]
    pub validate: Option<u64>,
    /// Monte Carlo seed [default: 0].
    #[arg(long, env = "CORE_SIM_SEED")]
    pub seed: Option<u64>,
    /// Detections closer than this do not count [m, default: 0].
    #[arg(long)]
    pub stopping_margin: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    /// Directory written by `simulate` [default: the output directory].
    #[arg(value_name = "DIR")]
    pub input: Option<PathBuf>,
}

/// Contents of a `--config` file.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GlobalConfig {
    pub output: Option<PathBuf>,
    pub jobs: Option<usize>,
    pub simulate: SimulateArgs,
    pub certify: CertifyArgs,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("reading config {path}: {reason}")]
    Config { path: String, reason: String },
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Episode(#[from] EpisodeError),
    #[error(transparent)]
    Certificate(#[from] crate::certificate::CertificateError),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: io::Error,
    },
}

pub(crate) fn io_err(context: impl Into<String>) -> impl FnOnce(io::Error) -> CliError {
    let context = context.into();
    move |source| CliError::Io { context, source }
}

fn load_config(path: Option<&Path>) -> Result<GlobalConfig, CliError> {
    let Some(path) = path else {
        return Ok(GlobalConfig::default());
    };
    let text = fs::read_to_string(path).map_err(|e| CliError::Config {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    toml::from_str(&text).map_err(|e| CliError::Config {
        path: path.display().to_string(),
        reason: e.to_string(),
    })
}

macro_rules! layer {
    ($cli:expr, $file:expr; $($f:ident),* $(,)?) => {
        $( if $cli.$f.is_none() { $cli.$f = $file.$f.clone(); } )*
    };
}

impl SimulateArgs {
    fn layered(mut self, file: &SimulateArgs) -> Self {
        layer!(self, file; scenario, mode, modes, repeats, seed, frame_period, latency, p0, epsilon,
            sensing_radius, min_range, max_range, dilation, resolution, tau, treat_unknown, alpha, v_max,
            omega_max, dt, kp, k_heading, horizon, start_radius, smoothing, clearance);
        self
    }

    /// Episode template with every override applied.
    pub fn episode_config(&self) -> Result<EpisodeConfig, CliError> {
        let mut c = EpisodeConfig::default();
        macro_rules! set {
            ($($src:ident => $($dst:ident).+),* $(,)?) => {
                $( if let Some(v) = self.$src { c.$($dst).+ = v; } )*
            };
        }
        set!(seed => seed, frame_period => frame_period, latency => latency, p0 => detection.p0,
            epsilon => detection.epsilon, sensing_radius => detection.sensing_radius,
            min_range => grounding.min_range, max_range => grounding.max_range,
            dilation => grounding.dilation_px, resolution => grid_resolution, tau => tau, alpha => alpha,
            v_max => bounds.v_max, omega_max => bounds.omega_max, dt => dt, kp => gains.kp,
            k_heading => gains.k_heading, horizon => horizon, start_radius => start_radius,
            smoothing => smoothing, clearance => clearance);
        c.detection.min_range = c.grounding.min_range;
        c.detection.max_range = c.grounding.max_range;
        if let Some(m) = &self.mode {
            c.mode = m.parse().map_err(CliError::Usage)?;
        }
        if let Some(t) = &self.treat_unknown {
            c.treat_unknown = match t.as_str() {
                "safe" => TreatUnknown::Safe,
                "unsafe" => TreatUnknown::Unsafe,
                other => return Err(CliError::Usage(format!("treat_unknown must be safe or unsafe, got `{other}`"))),
            };
        }
        c.filter_enabled = !self.no_filter;
        Ok(c)
    }
}

impl CertifyArgs {
    fn layered(mut self, file: &CertifyArgs) -> Self {
        layer!(self, file; p0, epsilon, sensing_radius, safe_radius, speed, latency, delta, gamma, prior, c, ell,
            k_max, validate, seed, stopping_margin);
        self
    }

    pub fn options(&self) -> Result<CertifyOptions, CliError> {
        let d = CertifyOptions::default();
        let prior = match self.prior.as_deref() {
            None | Some("uniform") => Prior::Uniform,
            Some("point_mass_at_r") => Prior::PointMassAtR,
            Some(o) => return Err(CliError::Usage(format!("prior must be uniform or point_mass_at_r, got `{o}`"))),
        };
        Ok(CertifyOptions {
            p0: self.p0.unwrap_or(d.p0),
            epsilon: self.epsilon.unwrap_or(d.epsilon),
            sensing_radius: self.sensing_radius.unwrap_or(d.sensing_radius),
            safe_radius: self.safe_radius.unwrap_or(d.safe_radius),
            speed: self.speed.unwrap_or(d.speed),
            latency: self.latency.unwrap_or(d.latency),
            delta: self.delta.unwrap_or(d.delta),
            gamma: self.gamma.unwrap_or(d.gamma),
            prior,
            c: self.c,
            ell: self.ell,
            k_max: self.k_max.unwrap_or(d.k_max),
            validate: self.validate,
            seed: self.seed.unwrap_or(d.seed),
            stopping_margin: self.stopping_margin.unwrap_or(d.stopping_margin),
        })
    }
}

/// Builtin name or a path to a TOML file. Unknown names list close matches.
pub fn resolve_scenario(name: &str) -> Result<Scenario<f64>, CliError> {
    if let Some(s) = builtin_scenario(name) {
        return Ok(s);
    }
    let path = Path::new(name);
    if path.extension().is_some_and(|e| e == "toml") || path.exists() {
        return Ok(load_scenario(path)?);
    }
    let mut close: Vec<(f64, &str)> = builtin_names()
        .map(|n| (strsim::jaro_winkler(name, n), n))
        .filter(|(s, _)| *s > 0.7)
        .collect();
    close.sort_by(|a, b| b.0.total_cmp(&a.0));
    let hint = if close.is_empty() {
        format!("available: {}", builtin_names().collect::<Vec<_>>().join(", "))
    } else {
        format!("did you mean: {}?", close.iter().map(|(_, n)| *n).collect::<Vec<_>>().join(", "))
    };
    Err(CliError::Usage(format!("unknown scenario `{name}`; {hint}")))
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(io_err(format!("creating {}", dir.display())))
}

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<fs::File>) -> io::Result<()>) -> Result<(), CliError> {
    let file = fs::File::create(path).map_err(io_err(format!("creating {}", path.display())))?;
    let mut w = BufWriter::new(file);
    f(&mut w)
        .and_then(|_| w.flush())
        .map_err(io_err(format!("writing {}", path.display())))
}

/// Writes trajectory, deliveries, metrics and optionally grid/SDF snapshots.
pub fn write_episode(dir: &Path, out: &EpisodeOutcome, snapshots: bool) -> Result<(), CliError> {
    create_dir(dir)?;
    write_file(&dir.join("trajectory.csv"), |w| write_trajectory_csv(&out.log, w))?;
    write_file(&dir.join("deliveries.csv"), |w| write_deliveries_csv(&out.log, w))?;
    write_file(&dir.join("metrics.json"), |w| {
        serde_json::to_writer_pretty(&mut *w, &out.metrics).map_err(io::Error::other)?;
        writeln!(w)
    })?;
    if snapshots {
        let b = &out.barrier;
        write_file(&dir.join("grid.txt"), |w| b.grid().write_snapshot(w, b.tau()))?;
        write_file(&dir.join("sdf.csv"), |w| b.write_sdf_csv(w))?;
    }
    Ok(())
}

fn parse_modes(list: &Option<Vec<String>>) -> Result<Vec<Mode>, CliError> {
    match list {
        None => Ok(Mode::ALL.to_vec()),
        Some(v) => v.iter().map(|m| m.parse().map_err(CliError::Usage)).collect(),
    }
}

fn episode_line(name: &str, cfg: &EpisodeConfig, out: &EpisodeOutcome) -> String {
    let m = &out.metrics;
    format!(
        "{name} mode={} seed={} success={} violation={} goal_reached={} attribution={} min_h={:.3} path={:.2}m t={:.1}s",
        cfg.mode, cfg.seed, m.success, m.violation, m.goal_reached, m.failure_attribution, m.min_h, m.path_length, m.duration
    )
}

pub fn cmd_simulate(args: &SimulateArgs, output: &Path) -> Result<(), CliError> {
    let template = args.episode_config()?;
    if args.suite {
        let modes = parse_modes(&args.modes)?;
        let repeats = args.repeats.unwrap_or(5);
        if repeats == 0 {
            return Err(CliError::Usage("repeats must be >= 1".into()));
        }
        let scenarios = match &args.scenario {
            Some(s) => vec![resolve_scenario(s)?],
            None => builtin_scenarios(),
        };
        let root = output.join("suite");
        create_dir(&root)?;
        let snapshots = args.snapshots;
        let write = |job: &SuiteJob, s: &Scenario<f64>, out: &EpisodeOutcome| {
            let dir = root
                .join(job.mode.as_str())
                .join(format!("{}_r{}", s.name, job.repeat));
            write_episode(&dir, out, snapshots).map_err(|e| EpisodeError::Config(e.to_string()))
        };
        let res = run_suite(&scenarios, &modes, repeats, template.seed, &template, write)?;
        let table = res.table();
        emit(&format!("{table}\n{}", res.breakdown()))?;
        write_file(&root.join("table.txt"), |w| {
            w.write_all(table.as_bytes())?;
            writeln!(w)?;
            w.write_all(res.breakdown().as_bytes())
        })?;
        write_file(&root.join("summary.json"), |w| {
            serde_json::to_writer_pretty(&mut *w, &res).map_err(io::Error::other)?;
            writeln!(w)
        })?;
        return Ok(());
    }
    let name = args
        .scenario
        .as_deref()
        .ok_or_else(|| CliError::Usage("simulate needs --scenario <name|path> or --suite".into()))?;
    let scenario = resolve_scenario(name)?;
    let cfg = EpisodeConfig {
        scenario: scenario.name.clone(),
        ..template
    };
    let out = run_episode(&scenario, &cfg)?;
    let dir = output.join(format!("{}_{}_s{}", scenario.name, cfg.mode, cfg.seed));
    write_episode(&dir, &out, true)?;
    emit(&format!(
        "{}\nartifacts: {}\n",
        episode_line(&scenario.name, &cfg, &out),
        dir.display()
    ))
}

pub fn cmd_certify(args: &CertifyArgs) -> Result<(), CliError> {
    let report = certify(&args.options()?)?;
    emit(&report.to_string())
}

pub fn cmd_scenarios() -> Result<(), CliError> {
    let mut text = format!("{:<20} {:<7} {:>8} {:>8}\n", "name", "label", "entities", "regions");
    for s in builtin_scenarios::<f64>() {
        let label = match s.task_label {
            crate::world::TaskLabel::Safe => "safe",
            crate::world::TaskLabel::Unsafe => "unsafe",
        };
        text.push_str(&format!(
            "{:<20} {:<7} {:>8} {:>8}\n",
            s.name,
            label,
            s.entities.len(),
            s.ground_truth_unsafe.len()
        ));
    }
    emit(&text)
}

/// Writes to stdout; a closed pipe (`| head`) is not an error.
fn emit(text: &str) -> Result<(), CliError> {
    match io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() == io::ErrorKind::BrokenPipe => Ok(()),
        r => r.map_err(io_err("writing stdout".to_string())),
    }
}

/// Parses `args` and runs the command.
pub fn run(cli: Cli) -> Result<(), CliError> {
    let config = load_config(cli.config.as_deref())?;
    let output = cli
        .output
        .or(config.output.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    if let Some(j) = cli.jobs.or(config.jobs) {
        // Fails only if a pool already exists, e.g. when called twice in-process.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(j.max(1)).build_global();
    }
    match cli.command {
        Command::Simulate(a) => cmd_simulate(&a.layered(&config.simulate), &output),
        Command::Certify(a) => cmd_certify(&a.layered(&config.certify)),
        Command::Report(a) => {
            let dir = a.input.unwrap_or(output);
            emit(&cmd_report(&dir)?.text)
        }
        Command::Scenarios => cmd_scenarios(),
    }
}

/// Process entry point; exit status reflects tool health only.
pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

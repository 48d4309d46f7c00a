//! Command-line front end: two-user region sweeps and common-rate studies.
//!
//! Settings come from command-line flags, then a TOML config file, then the
//! built-in defaults, in that order of precedence.

use std::io::{self, BufWriter};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::Parser;
use serde::Deserialize;

use irs_capacity::channel::{ChannelParams, SystemConfig, DEFAULT_ENUMERATION_BUDGET};
use irs_capacity::experiment::{
    common_rate_study, sweep_region, write_points, write_study, ExperimentSpec, Mode, OutputFormat, StudyAxis,
};
use irs_capacity::units::{db_to_linear, dbm_to_watts};

/// Pareto boundaries of NOMA capacity and OMA rate regions for an
/// IRS-assisted two-user downlink.
#[derive(Debug, Parser)]
#[command(name = "irs-capacity", version)]
struct Cli {
    /// Engine(s), comma-separated: noma-inf, noma-finite, oma-inf, oma-finite,
    /// baseline-noma, baseline-oma, no-irs-noma, no-irs-oma, oma-continuous.
    #[arg(long, value_delimiter = ',')]
    mode: Option<Vec<String>>,
    /// Rate profiles per sweep, endpoints included (at least 2).
    #[arg(long)]
    alpha_steps: Option<usize>,
    /// Seeds, comma-separated; `a-b` denotes an inclusive range.
    #[arg(long)]
    seeds: Option<String>,
    /// Block counts for the finite-N modes, comma-separated.
    #[arg(long, value_delimiter = ',')]
    n_blocks: Option<Vec<usize>>,
    /// Maximum transmit power in dBm.
    #[arg(long, allow_hyphen_values = true)]
    pmax_dbm: Option<f64>,
    /// Number of IRS elements.
    #[arg(long)]
    mr: Option<usize>,
    /// Phase resolution in bits.
    #[arg(long)]
    bits: Option<u32>,
    /// Elements per independently controlled sub-surface.
    #[arg(long)]
    subsurface: Option<usize>,
    /// TOML file with any of the settings above (snake_case keys).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output file; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Output format: csv or json.
    #[arg(long)]
    format: Option<String>,
    /// Largest number of configurations/schedules an enumeration may visit.
    #[arg(long)]
    budget: Option<u64>,
    /// Worker threads (defaults to the number of cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Run a common-rate study at alpha = (0.5, 0.5) over `pmax` or `mr`
    /// instead of a region sweep.
    #[arg(long)]
    study: Option<String>,
    /// Grid values for the study axis, comma-separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    grid: Option<Vec<f64>>,
    /// Record wall-clock time per row (output is then not reproducible).
    #[arg(long)]
    timing: bool,
}

/// Keys accepted in the config file.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    mode: Option<ModeList>,
    alpha_steps: Option<usize>,
    seeds: Option<Vec<u64>>,
    n_blocks: Option<Vec<usize>>,
    pmax_dbm: Option<f64>,
    noise_dbm: Option<f64>,
    mr: Option<usize>,
    bits: Option<u32>,
    subsurface: Option<usize>,
    out: Option<PathBuf>,
    format: Option<String>,
    budget: Option<u64>,
    workers: Option<usize>,
    study: Option<String>,
    grid: Option<Vec<f64>>,
    timing: Option<bool>,
    /// Rician factor (dB) applied to both reflected links.
    rician_db: Option<f64>,
    user_x: Option<Vec<f64>>,
    irs_x: Option<f64>,
    irs_y: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum ModeList {
    One(String),
    Many(Vec<String>),
}

impl ModeList {
    fn into_vec(self) -> Vec<String> {
        match self {
            ModeList::One(s) => s.split(',').map(|m| m.trim().to_string()).collect(),
            ModeList::Many(v) => v,
        }
    }
}

enum Job {
    Sweep,
    Study(StudyAxis, Vec<f64>),
}

struct Settings {
    spec: ExperimentSpec,
    job: Job,
    out: Option<PathBuf>,
    format: OutputFormat,
    workers: Option<usize>,
}

fn parse_seeds(text: &str) -> Result<Vec<u64>> {
    let mut seeds = Vec::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part.split_once('-') {
            Some((a, b)) => {
                let (a, b): (u64, u64) = (a.trim().parse()?, b.trim().parse()?);
                if a > b {
                    bail!("seed range `{part}` is empty");
                }
                seeds.extend(a..=b);
            }
            None => seeds.push(part.parse().with_context(|| format!("invalid seed `{part}`"))?),
        }
    }
    Ok(seeds)
}

fn load_file(path: &Path) -> Result<FileConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn resolve(cli: Cli) -> Result<Settings> {
    let file = match &cli.config {
        Some(path) => load_file(path)?,
        None => FileConfig::default(),
    };
    let defaults = ExperimentSpec::default();

    let modes: Vec<String> = match (cli.mode, file.mode) {
        (Some(m), _) => m,
        (None, Some(m)) => m.into_vec(),
        (None, None) => defaults.modes.iter().map(|m| m.to_string()).collect(),
    };
    let modes = modes.iter().map(|m| m.parse::<Mode>()).collect::<Result<Vec<_>, _>>()?;
    let seeds = match (cli.seeds, file.seeds) {
        (Some(s), _) => parse_seeds(&s)?,
        (None, Some(s)) => s,
        (None, None) => defaults.seeds.clone(),
    };

    let base = SystemConfig::default();
    let system = SystemConfig {
        elements: cli.mr.or(file.mr).unwrap_or(base.elements),
        subsurface_size: cli.subsurface.or(file.subsurface).unwrap_or(base.subsurface_size),
        phase_bits: cli.bits.or(file.bits).unwrap_or(base.phase_bits),
        p_max: cli.pmax_dbm.or(file.pmax_dbm).map_or(base.p_max, dbm_to_watts),
        noise: file.noise_dbm.map_or(base.noise, dbm_to_watts),
        enumeration_budget: cli.budget.or(file.budget).unwrap_or(DEFAULT_ENUMERATION_BUDGET),
        ..base
    };
    let mut channel = ChannelParams::default();
    if let Some(k) = file.rician_db {
        channel.rician_ap_irs = db_to_linear(k);
        channel.rician_irs_user = db_to_linear(k);
    }
    if let Some(x) = file.user_x {
        channel.user_x = x;
    }
    channel.irs_x = file.irs_x.unwrap_or(channel.irs_x);
    channel.irs_y = file.irs_y.unwrap_or(channel.irs_y);

    let spec = ExperimentSpec {
        modes,
        alpha_steps: cli.alpha_steps.or(file.alpha_steps).unwrap_or(defaults.alpha_steps),
        seeds,
        system,
        channel,
        n_blocks: cli.n_blocks.or(file.n_blocks).unwrap_or(defaults.n_blocks),
        timing: cli.timing || file.timing.unwrap_or(false),
    };
    spec.validate()?;

    let job = match cli.study.or(file.study) {
        None => Job::Sweep,
        Some(axis) => {
            let axis: StudyAxis = axis.parse()?;
            let grid = cli.grid.or(file.grid).ok_or_else(|| anyhow!("--study needs --grid values"))?;
            Job::Study(axis, grid)
        }
    };
    let format = cli.format.or(file.format).as_deref().unwrap_or("csv").parse()?;
    Ok(Settings { spec, job, out: cli.out.or(file.out), format, workers: cli.workers.or(file.workers) })
}

/// Runs the job and returns the number of failed rows.
fn run(settings: &Settings) -> Result<usize> {
    let label = settings.out.clone().unwrap_or_else(|| PathBuf::from("<stdout>"));
    let sink: Box<dyn io::Write> = match &settings.out {
        Some(path) => Box::new(BufWriter::new(
            std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    };
    match &settings.job {
        Job::Sweep => {
            let points = sweep_region(&settings.spec)?;
            write_points(&points, settings.format, sink, &label)?;
            let failed = points.iter().filter(|p| p.error.is_some()).count();
            log::info!("{} rows, {failed} failed", points.len());
            Ok(failed)
        }
        Job::Study(axis, grid) => {
            let rows = common_rate_study(&settings.spec, *axis, grid)?;
            write_study(&rows, settings.format, sink, &label)?;
            Ok(rows.iter().map(|r| r.failures).sum())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = resolve(cli).and_then(|settings| {
        if let Some(n) = settings.workers {
            rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
        }
        run(&settings)
    });
    match outcome {
        Ok(0) => ExitCode::SUCCESS,
        Ok(failed) => {
            eprintln!("warning: {failed} row(s) failed; see the log for details");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

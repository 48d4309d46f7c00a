//! Region sweeps, common-rate studies and their output files.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baseline::{baseline_noma_with_table, baseline_oma_with_table};
use crate::channel::{sample_channels, ChannelParams, ChannelRealization, GainTable, SystemConfig};
use crate::error::{Error, Result};
use crate::noma::{solve_noma_finite_from, solve_noma_infinite, NomaOptions, ScaOptions};
use crate::oma::{solve_oma_finite, solve_oma_infinite, solve_oma_infinite_continuous};
use crate::profile::RateProfile;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    NomaInf,
    NomaFinite,
    OmaInf,
    OmaFinite,
    BaselineNoma,
    BaselineOma,
    NoIrsNoma,
    NoIrsOma,
    OmaContinuous,
}

impl Mode {
    pub const ALL: [Mode; 9] = [
        Mode::NomaInf,
        Mode::NomaFinite,
        Mode::OmaInf,
        Mode::OmaFinite,
        Mode::BaselineNoma,
        Mode::BaselineOma,
        Mode::NoIrsNoma,
        Mode::NoIrsOma,
        Mode::OmaContinuous,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::NomaInf => "noma-inf",
            Mode::NomaFinite => "noma-finite",
            Mode::OmaInf => "oma-inf",
            Mode::OmaFinite => "oma-finite",
            Mode::BaselineNoma => "baseline-noma",
            Mode::BaselineOma => "baseline-oma",
            Mode::NoIrsNoma => "no-irs-noma",
            Mode::NoIrsOma => "no-irs-oma",
            Mode::OmaContinuous => "oma-continuous",
        }
    }

    /// Whether the mode depends on the number of blocks `N`.
    pub fn uses_blocks(self) -> bool {
        matches!(self, Mode::NomaFinite | Mode::OmaFinite | Mode::BaselineNoma | Mode::BaselineOma)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown mode `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

impl FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            _ => Err(Error::InvalidConfig(format!("unknown output format `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub modes: Vec<Mode>,
    /// Number of rate profiles in a two-user sweep, endpoints included.
    pub alpha_steps: usize,
    pub seeds: Vec<u64>,
    pub system: SystemConfig,
    pub channel: ChannelParams,
    /// Block counts for the finite-`N` modes.
    pub n_blocks: Vec<usize>,
    /// Record wall-clock time per row. Off by default so that identical
    /// specs give byte-identical files.
    pub timing: bool,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            modes: vec![Mode::NomaInf, Mode::OmaInf],
            alpha_steps: 11,
            seeds: vec![1],
            system: SystemConfig::default(),
            channel: ChannelParams::default(),
            n_blocks: vec![1],
            timing: false,
        }
    }
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.alpha_steps < 2 {
            return Err(Error::InvalidConfig("a sweep needs at least two rate profiles".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::InvalidConfig("at least one seed is required".into()));
        }
        if self.modes.is_empty() {
            return Err(Error::InvalidConfig("at least one mode is required".into()));
        }
        if self.modes.iter().any(|m| m.uses_blocks()) && (self.n_blocks.is_empty() || self.n_blocks.contains(&0)) {
            return Err(Error::InvalidConfig("finite-block modes need positive block counts".into()));
        }
        if self.system.users != 2 {
            return Err(Error::InvalidConfig("sweeps are defined for two users".into()));
        }
        self.system.validate()?;
        self.channel.validate()
    }

    /// Two-user profiles `(a, 1 - a)` with `a = 0, 1/(S-1), ..., 1`.
    pub fn profiles(&self) -> Result<Vec<RateProfile>> {
        let last = (self.alpha_steps - 1) as f64;
        (0..self.alpha_steps).map(|i| RateProfile::two_user(i as f64 / last)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionPoint {
    pub mode: Mode,
    pub seed: u64,
    /// Number of blocks; `None` for unlimited reconfiguration.
    pub n_blocks: Option<usize>,
    pub alpha: Vec<f64>,
    pub rates: Vec<f64>,
    pub common_rate: f64,
    pub wall_ms: f64,
    /// Failure message when the engine could not produce this point.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Channel and gain table for one seed, with and without the IRS.
pub struct SeedInstance {
    pub seed: u64,
    pub channel: ChannelRealization,
    pub config: SystemConfig,
    pub table: GainTable,
    pub no_irs_config: SystemConfig,
    pub no_irs_table: GainTable,
}

impl SeedInstance {
    pub fn new(system: &SystemConfig, params: &ChannelParams, seed: u64) -> Result<Self> {
        let channel = sample_channels(system, params, seed)?;
        let table = GainTable::build(&channel, system)?;
        let no_irs_config = SystemConfig { elements: 0, ..system.clone() };
        let no_irs_table = GainTable::build(&channel.without_irs(), &no_irs_config)?;
        Ok(Self { seed, channel, config: system.clone(), table, no_irs_config, no_irs_table })
    }

    /// Evaluates one `(mode, N, alpha)` point; `n_blocks` is ignored by
    /// modes with unlimited reconfiguration.
    pub fn evaluate(&self, mode: Mode, alpha: &RateProfile, n_blocks: usize) -> Result<Vec<f64>> {
        let (config, table) = (&self.config, &self.table);
        let noma = NomaOptions::default();
        let sca = ScaOptions::default();
        Ok(match mode {
            Mode::NomaInf => solve_noma_infinite(alpha, table, config, &noma)?.rates,
            Mode::NomaFinite => {
                let optimal = solve_noma_infinite(alpha, table, config, &noma)?;
                solve_noma_finite_from(&optimal, alpha, table, config, n_blocks, &sca)?.rates
            }
            Mode::OmaInf => solve_oma_infinite(alpha, table, config)?.rates,
            Mode::OmaFinite => solve_oma_finite(alpha, table, config, n_blocks)?.rates,
            Mode::BaselineNoma => baseline_noma_with_table(alpha, table, config, n_blocks, &sca)?.rates,
            Mode::BaselineOma => baseline_oma_with_table(alpha, table, config, n_blocks)?.rates,
            Mode::NoIrsNoma => {
                solve_noma_infinite(alpha, &self.no_irs_table, &self.no_irs_config, &noma)?.rates
            }
            Mode::NoIrsOma => solve_oma_infinite(alpha, &self.no_irs_table, &self.no_irs_config)?.rates,
            Mode::OmaContinuous => solve_oma_infinite_continuous(alpha, &self.channel, config)?.rates,
        })
    }
}

struct Task {
    mode: Mode,
    seed_index: usize,
    n_blocks: Option<usize>,
    alpha_index: usize,
}

/// Evaluates every `(mode, seed, N, alpha)` combination. Rows come out in
/// mode, seed, `N`, then alpha order regardless of completion order.
/// Engine failures are recorded on their row and do not stop the sweep.
pub fn sweep_region(spec: &ExperimentSpec) -> Result<Vec<RegionPoint>> {
    spec.validate()?;
    let profiles = spec.profiles()?;
    let instances: Vec<SeedInstance> = spec
        .seeds
        .par_iter()
        .map(|&seed| SeedInstance::new(&spec.system, &spec.channel, seed))
        .collect::<Result<_>>()?;
    let mut tasks = Vec::new();
    for &mode in &spec.modes {
        let blocks: Vec<Option<usize>> =
            if mode.uses_blocks() { spec.n_blocks.iter().map(|&n| Some(n)).collect() } else { vec![None] };
        for seed_index in 0..instances.len() {
            for &n_blocks in &blocks {
                for alpha_index in 0..profiles.len() {
                    tasks.push(Task { mode, seed_index, n_blocks, alpha_index });
                }
            }
        }
    }
    Ok(tasks
        .par_iter()
        .map(|task| {
            let instance = &instances[task.seed_index];
            let alpha = &profiles[task.alpha_index];
            let start = Instant::now();
            let outcome = instance.evaluate(task.mode, alpha, task.n_blocks.unwrap_or(1));
            let wall_ms = if spec.timing { start.elapsed().as_secs_f64() * 1e3 } else { 0.0 };
            let (rates, common_rate, error) = match outcome {
                Ok(rates) => {
                    let r = alpha.common_rate(&rates);
                    (rates, r, None)
                }
                Err(e) => {
                    log::warn!("{} seed {} alpha {:?}: {e}", task.mode, instance.seed, alpha.alpha());
                    (vec![f64::NAN; alpha.users()], f64::NAN, Some(e.to_string()))
                }
            };
            RegionPoint {
                mode: task.mode,
                seed: instance.seed,
                n_blocks: task.n_blocks,
                alpha: alpha.alpha().to_vec(),
                rates,
                common_rate,
                wall_ms,
                error,
            }
        })
        .collect())
}

/// Parameter varied by a common-rate study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StudyAxis {
    /// Maximum transmit power in dBm.
    PmaxDbm,
    /// Number of IRS elements.
    Elements,
}

impl StudyAxis {
    pub fn as_str(self) -> &'static str {
        match self {
            StudyAxis::PmaxDbm => "pmax_dbm",
            StudyAxis::Elements => "mr",
        }
    }
}

impl FromStr for StudyAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pmax" | "pmax-dbm" | "pmax_dbm" => Ok(StudyAxis::PmaxDbm),
            "mr" | "elements" => Ok(StudyAxis::Elements),
            _ => Err(Error::InvalidConfig(format!("unknown study axis `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub mode: Mode,
    pub n_blocks: Option<usize>,
    pub axis: StudyAxis,
    pub value: f64,
    /// Mean common rate over the successful seeds.
    pub mean_common_rate: f64,
    pub samples: usize,
    pub failures: usize,
}

/// Mean common rate at `alpha = (1/2, 1/2)` over the seeds for every mode
/// and grid value. Failed seeds are excluded from the mean and counted.
pub fn common_rate_study(spec: &ExperimentSpec, axis: StudyAxis, grid: &[f64]) -> Result<Vec<StudyRow>> {
    spec.validate()?;
    if grid.is_empty() {
        return Err(Error::InvalidConfig("a study needs at least one grid value".into()));
    }
    let alpha = RateProfile::two_user(0.5)?;
    let mut rows = Vec::new();
    for &value in grid {
        let mut system = spec.system.clone();
        match axis {
            StudyAxis::PmaxDbm => system.p_max = crate::units::dbm_to_watts(value),
            StudyAxis::Elements => {
                if !(value >= 0.0 && value.fract() == 0.0) {
                    return Err(Error::InvalidConfig(format!("{value} is not an element count")));
                }
                system.elements = value as usize;
            }
        }
        system.validate()?;
        let instances: Vec<SeedInstance> = spec
            .seeds
            .par_iter()
            .map(|&seed| SeedInstance::new(&system, &spec.channel, seed))
            .collect::<Result<_>>()?;
        for &mode in &spec.modes {
            let blocks: Vec<Option<usize>> =
                if mode.uses_blocks() { spec.n_blocks.iter().map(|&n| Some(n)).collect() } else { vec![None] };
            for n_blocks in blocks {
                let outcomes: Vec<Option<f64>> = instances
                    .par_iter()
                    .map(|inst| match inst.evaluate(mode, &alpha, n_blocks.unwrap_or(1)) {
                        Ok(rates) => Some(alpha.common_rate(&rates)),
                        Err(e) => {
                            log::warn!("{mode} seed {} at {} = {value}: {e}", inst.seed, axis.as_str());
                            None
                        }
                    })
                    .collect();
                let ok: Vec<f64> = outcomes.iter().flatten().copied().collect();
                let mean = if ok.is_empty() { f64::NAN } else { ok.iter().sum::<f64>() / ok.len() as f64 };
                rows.push(StudyRow {
                    mode,
                    n_blocks,
                    axis,
                    value,
                    mean_common_rate: mean,
                    samples: ok.len(),
                    failures: outcomes.len() - ok.len(),
                });
            }
        }
    }
    Ok(rows)
}

/// Formats with 12 significant digits.
pub fn format_float(v: f64) -> String {
    if !v.is_finite() {
        return if v.is_nan() { "NaN".into() } else if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return "0".into();
    }
    let s = format!("{:.11e}", v);
    // Shortest round-trippable form of the 12-digit value.
    let parsed: f64 = s.parse().expect("formatted float parses");
    format!("{parsed}")
}

fn blocks_field(n: Option<usize>) -> String {
    n.map_or_else(|| "inf".into(), |n| n.to_string())
}

/// CSV header for `users` users.
pub fn csv_header(users: usize) -> Vec<String> {
    let mut h = vec!["mode".to_string(), "seed".into(), "N".into()];
    h.extend((1..=users).map(|k| format!("alpha_{k}")));
    h.extend((1..=users).map(|k| format!("rate_{k}")));
    h.push("common_rate".into());
    h.push("wall_ms".into());
    h
}

fn io_error(path: &Path, source: std::io::Error) -> Error {
    Error::Io { path: path.to_path_buf(), source }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::Serialization { path: path.to_path_buf(), message: e.to_string() }
}

fn write_points_csv<W: Write>(points: &[RegionPoint], users: usize, out: W) -> std::result::Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(csv_header(users))?;
    for p in points {
        let mut row = vec![p.mode.to_string(), p.seed.to_string(), blocks_field(p.n_blocks)];
        row.extend(p.alpha.iter().map(|&v| format_float(v)));
        row.extend(p.rates.iter().map(|&v| format_float(v)));
        row.push(format_float(p.common_rate));
        row.push(format_float(p.wall_ms));
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes sweep rows as CSV or JSON to any writer; `path` only labels
/// errors. The CSV has the columns
/// `mode,seed,N,alpha_1..alpha_K,rate_1..rate_K,common_rate,wall_ms` with
/// `N = inf` for unlimited reconfiguration.
pub fn write_points<W: Write>(points: &[RegionPoint], format: OutputFormat, mut out: W, path: &Path) -> Result<()> {
    let users = points.first().map_or(2, |p| p.alpha.len());
    match format {
        OutputFormat::Csv => write_points_csv(points, users, &mut out).map_err(|e| csv_error(path, e))?,
        OutputFormat::Json => {
            serde_json::to_writer_pretty(&mut out, points)
                .map_err(|e| Error::Serialization { path: path.to_path_buf(), message: e.to_string() })?;
            out.write_all(b"\n").map_err(|e| io_error(path, e))?;
        }
    }
    out.flush().map_err(|e| io_error(path, e))
}

/// Writes sweep rows to `path` (see [`write_points`]).
pub fn emit_output(points: &[RegionPoint], format: OutputFormat, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| io_error(path, e))?;
    write_points(points, format, BufWriter::new(file), path)
}

/// Reads a CSV written by [`emit_output`].
pub fn read_points_csv(path: &Path) -> Result<Vec<RegionPoint>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let users = (headers.len().saturating_sub(5)) / 2;
    if headers.len() != 5 + 2 * users || headers.iter().ne(csv_header(users).iter().map(String::as_str)) {
        return Err(Error::Serialization { path: path.to_path_buf(), message: "unexpected CSV header".into() });
    }
    let bad = |msg: String| Error::Serialization { path: path.to_path_buf(), message: msg };
    let float = |s: &str| s.parse::<f64>().map_err(|e| bad(format!("`{s}`: {e}")));
    let mut points = Vec::new();
    for record in reader.records() {
        let r = record.map_err(|e| csv_error(path, e))?;
        let n_blocks = match &r[2] {
            "inf" => None,
            s => Some(s.parse().map_err(|e| bad(format!("`{s}`: {e}")))?),
        };
        points.push(RegionPoint {
            mode: r[0].parse()?,
            seed: r[1].parse().map_err(|e| bad(format!("`{}`: {e}", &r[1])))?,
            n_blocks,
            alpha: (0..users).map(|k| float(&r[3 + k])).collect::<Result<_>>()?,
            rates: (0..users).map(|k| float(&r[3 + users + k])).collect::<Result<_>>()?,
            common_rate: float(&r[3 + 2 * users])?,
            wall_ms: float(&r[4 + 2 * users])?,
            error: None,
        });
    }
    Ok(points)
}

/// Writes study rows as CSV (`mode,N,axis,value,mean_common_rate,samples,failures`)
/// or JSON to any writer; `path` only labels errors.
pub fn write_study<W: Write>(rows: &[StudyRow], format: OutputFormat, mut out: W, path: &Path) -> Result<()> {
    match format {
        OutputFormat::Csv => {
            let mut w = csv::Writer::from_writer(&mut out);
            let result = (|| {
                w.write_record(["mode", "N", "axis", "value", "mean_common_rate", "samples", "failures"])?;
                for r in rows {
                    w.write_record([
                        r.mode.to_string(),
                        blocks_field(r.n_blocks),
                        r.axis.as_str().to_string(),
                        format_float(r.value),
                        format_float(r.mean_common_rate),
                        r.samples.to_string(),
                        r.failures.to_string(),
                    ])?;
                }
                w.flush()?;
                Ok::<_, csv::Error>(())
            })();
            result.map_err(|e| csv_error(path, e))?;
        }
        OutputFormat::Json => {
            serde_json::to_writer_pretty(&mut out, rows)
                .map_err(|e| Error::Serialization { path: path.to_path_buf(), message: e.to_string() })?;
            out.write_all(b"\n").map_err(|e| io_error(path, e))?;
        }
    }
    out.flush().map_err(|e| io_error(path, e))
}

/// Writes study rows to `path` (see [`write_study`]).
pub fn emit_study(rows: &[StudyRow], format: OutputFormat, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| io_error(path, e))?;
    write_study(rows, format, BufWriter::new(file), path)
}

//! Command-line front end of the `otfs` binary.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage error, 3 capacity or
//! unsupported dimension, 4 sampling fallback under `--require-exhaustive`.

pub mod config;
pub mod plotdata;
pub mod selfcheck;

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analysis::{difference_vector_count, diversity_gain, DiversityOptions, Scenario};
use crate::channel::{bem_order, doppler_from_velocity, sample_bem, sample_bem_order, sample_fir, ChannelFamily};
use crate::detector::{DetectorKind, DEFAULT_ML_BUDGET};
use crate::error::Error;
use crate::linalg::CMatrix;
use crate::modem::{Alphabet, OtfsDims};
use crate::montecarlo::{
    monotonicity_violations, run_ber, snr_grid, to_csv_string, to_json_string, ChannelScenario, SimConfig,
    DEFAULT_CARRIER_HZ, DEFAULT_DELTA_F_HZ, DEFAULT_MAX_FRAMES, DEFAULT_TARGET_ERRORS,
};
use crate::precoder::{vandermonde_theta, PrecoderChoice};
use config::ConfigFile;

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_CAPACITY: i32 = 3;
pub const EXIT_NON_EXHAUSTIVE: i32 = 4;

/// Environment variable that overrides `--seed`.
pub const SEED_ENV: &str = "OTFS_SEED";

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub msg: String,
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError { code: EXIT_USAGE, msg: msg.into() }
    }

    pub fn runtime(msg: impl Into<String>) -> Self {
        CliError { code: EXIT_RUNTIME, msg: msg.into() }
    }
}

/// Exit code for a library error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Capacity(_) | Error::UnsupportedDimension(_) => EXIT_CAPACITY,
        Error::Parameter(_) | Error::Dimension(_) | Error::Precondition(_) => EXIT_USAGE,
        _ => EXIT_RUNTIME,
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError { code: exit_code(&e), msg: e.to_string() }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(name = "otfs", version, about = "Precoded OTFS link simulation and diversity analysis")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Monte Carlo bit error rate over an SNR grid.
    Ber(BerArgs),
    /// Certify diversity and coding gain by enumerating difference vectors.
    Diversity(DiversityArgs),
    /// Precoder utilities.
    Precoder {
        #[command(subcommand)]
        cmd: PrecoderCmd,
    },
    /// Run the built-in property checks.
    Selfcheck,
    /// Merge BER CSV files into plot-ready columns.
    Plotdata(PlotArgs),
    /// Export one sampled channel realization as CSV.
    Channel(ChannelArgs),
}

#[derive(Subcommand, Debug)]
enum PrecoderCmd {
    /// Write the generator or precoding matrix as `row,col,re,im` CSV.
    Dump(DumpArgs),
}

#[derive(Args, Debug, Default)]
struct CommonArgs {
    /// Delay bins.
    #[arg(long = "M")]
    m: Option<usize>,
    /// Doppler bins.
    #[arg(long = "N")]
    n: Option<usize>,
    /// fir:L=<n> | bem:v=<km/h> | bem:fmax=<Hz> | bem:q=<n>
    #[arg(long)]
    scenario: Option<String>,
    /// proposed | identity | phase[:<theta>]
    #[arg(long)]
    precoder: Option<String>,
    /// bpsk | qpsk
    #[arg(long)]
    alphabet: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Flat key=value file; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Carrier frequency in Hz.
    #[arg(long)]
    carrier: Option<f64>,
    /// Subcarrier spacing in Hz.
    #[arg(long = "delta-f")]
    delta_f: Option<f64>,
}

impl CommonArgs {
    fn any_set(&self) -> bool {
        self.m.is_some()
            || self.n.is_some()
            || self.scenario.is_some()
            || self.precoder.is_some()
            || self.alphabet.is_some()
            || self.seed.is_some()
            || self.config.is_some()
            || self.carrier.is_some()
            || self.delta_f.is_some()
    }
}

#[derive(Args, Debug)]
struct BerArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// ml | lmmse
    #[arg(long)]
    detector: Option<String>,
    /// <lo:step:hi> or a comma-separated list, in dB.
    #[arg(long)]
    snr: Option<String>,
    /// Maximum frames per SNR point.
    #[arg(long)]
    frames: Option<u64>,
    /// Stop a point once this many bit errors are counted.
    #[arg(long = "target-errors")]
    target_errors: Option<u64>,
    /// Cyclic prefix length (default L-1 for FIR, 0 for BEM).
    #[arg(long)]
    cp: Option<usize>,
    #[arg(long = "ml-budget")]
    ml_budget: Option<u64>,
    /// csv | json
    #[arg(long)]
    format: Option<String>,
    /// Output file; records go to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Replay a previous run from its manifest.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Where to write this run's manifest.
    #[arg(long = "manifest-out")]
    manifest_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct DiversityArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Largest number of difference vectors enumerated exhaustively.
    #[arg(long = "pair-budget")]
    pair_budget: Option<u64>,
    #[arg(long = "rank-tol")]
    rank_tol: Option<f64>,
    /// Exit 4 instead of sampling when the enumeration exceeds the budget.
    #[arg(long = "require-exhaustive")]
    require_exhaustive: bool,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long = "manifest-out")]
    manifest_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct DumpArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// theta | v
    #[arg(long, default_value = "theta")]
    which: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct PlotArgs {
    /// BER CSV files written by `otfs ber`.
    #[arg(long = "in", num_args = 1..)]
    inputs: Vec<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ChannelArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Fully resolved record of a run, sufficient to replay it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub timestamp_unix: u64,
    pub master_seed: u64,
    /// `flag`, `config`, `env` or `default`.
    pub seed_source: String,
    pub scenario_input: String,
    /// Velocity given on the command line, already folded into the Doppler.
    pub velocity_kmh: Option<f64>,
    pub format: Option<String>,
    pub config: serde_json::Value,
}

/// Settings of a `diversity` run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiversityRun {
    pub dims: OtfsDims,
    pub scenario: Scenario,
    pub precoder: PrecoderChoice,
    pub alphabet: Alphabet,
    pub options: DiversityOptions,
    pub require_exhaustive: bool,
}

/// Channel description from the command line.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ParsedScenario {
    pub scenario: ChannelScenario,
    pub velocity_kmh: Option<f64>,
}

/// Parses `fir:L=<n>`, `bem:v=<km/h>`, `bem:fmax=<Hz>` or `bem:q=<n>`.
pub fn parse_scenario(s: &str, carrier: f64) -> CliResult<ParsedScenario> {
    let bad = || CliError::usage(format!("--scenario: '{s}' is not fir:L=<n>, bem:v=<km/h>, bem:fmax=<Hz> or bem:q=<n>"));
    let (kind, arg) = s.trim().split_once(':').ok_or_else(bad)?;
    let (key, val) = arg.split_once('=').ok_or_else(bad)?;
    let key = key.trim().to_ascii_lowercase();
    let num: f64 = val.trim().parse().map_err(|_| bad())?;
    let count = || -> CliResult<usize> {
        if num >= 0.0 && num.fract() == 0.0 && num.is_finite() {
            Ok(num as usize)
        } else {
            Err(bad())
        }
    };
    let scenario = match (kind.trim().to_ascii_lowercase().as_str(), key.as_str()) {
        ("fir", "l") => {
            let taps = count()?;
            if taps == 0 {
                return Err(CliError::usage("--scenario: L must be at least 1"));
            }
            ChannelScenario::FreqSel { taps }
        }
        ("bem", "v") => {
            if !(num >= 0.0) || !num.is_finite() {
                return Err(CliError::usage("--scenario: velocity must be non-negative"));
            }
            return Ok(ParsedScenario {
                scenario: ChannelScenario::TimeSel { f_max_hz: doppler_from_velocity(num, carrier) },
                velocity_kmh: Some(num),
            });
        }
        ("bem", "fmax") => {
            if !(num >= 0.0) || !num.is_finite() {
                return Err(CliError::usage("--scenario: fmax must be non-negative"));
            }
            ChannelScenario::TimeSel { f_max_hz: num }
        }
        ("bem", "q") => ChannelScenario::TimeSelOrder { order: count()? },
        _ => return Err(bad()),
    };
    Ok(ParsedScenario { scenario, velocity_kmh: None })
}

/// Parses `lo:step:hi` or a comma-separated list.
pub fn parse_snr(s: &str) -> CliResult<Vec<f64>> {
    let bad = |what: &str| CliError::usage(format!("--snr: {what} in '{s}'"));
    let parts: Vec<&str> = s.split(':').collect();
    let values = if parts.len() == 3 {
        let v: Vec<f64> = parts
            .iter()
            .map(|p| p.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| bad("bad number"))?;
        snr_grid(v[0], v[1], v[2]).map_err(|e| CliError::usage(format!("--snr: {e}")))?
    } else if parts.len() == 1 {
        s.split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| bad("bad number"))?
    } else {
        return Err(bad("expected lo:step:hi"));
    };
    if values.is_empty() || values.windows(2).any(|w| w[1] <= w[0]) {
        return Err(bad("grid must be nonempty and strictly increasing"));
    }
    Ok(values)
}

fn parse_flag<T: std::str::FromStr>(value: &str, flag: &str) -> CliResult<T>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e| CliError::usage(format!("{flag}: {e}")))
}

struct Resolved {
    cfg_file: ConfigFile,
    dims: Option<OtfsDims>,
    carrier: f64,
    delta_f: f64,
    seed: u64,
    seed_source: &'static str,
}

fn resolve_common(c: &CommonArgs) -> CliResult<Resolved> {
    let cfg_file = ConfigFile::load(c.config.as_deref())?;
    let m = cfg_file.pick(c.m, "M", "--M")?;
    let n = cfg_file.pick(c.n, "N", "--N")?;
    let dims = match (m, n) {
        (Some(m), Some(n)) => Some(OtfsDims::new(m, n).map_err(|e| CliError::usage(format!("--M/--N: {e}")))?),
        _ => None,
    };
    let carrier = cfg_file.pick(c.carrier, "carrier", "--carrier")?.unwrap_or(DEFAULT_CARRIER_HZ);
    let delta_f = cfg_file.pick(c.delta_f, "delta_f", "--delta-f")?.unwrap_or(DEFAULT_DELTA_F_HZ);
    if !(carrier > 0.0) {
        return Err(CliError::usage("--carrier: must be positive"));
    }
    if !(delta_f > 0.0) {
        return Err(CliError::usage("--delta-f: must be positive"));
    }
    let (seed, seed_source) = match std::env::var(SEED_ENV) {
        Ok(v) => (parse_flag(v.trim(), SEED_ENV)?, "env"),
        Err(_) => match (c.seed, cfg_file.pick::<u64>(None, "seed", "--seed")?) {
            (Some(s), _) => (s, "flag"),
            (None, Some(s)) => (s, "config"),
            (None, None) => (0, "default"),
        },
    };
    Ok(Resolved { cfg_file, dims, carrier, delta_f, seed, seed_source })
}

fn require_dims(r: &Resolved) -> CliResult<OtfsDims> {
    r.dims.ok_or_else(|| CliError::usage("missing required --M and --N"))
}

fn require_scenario(c: &CommonArgs, r: &Resolved) -> CliResult<(String, ParsedScenario)> {
    let s = r
        .cfg_file
        .pick_str(c.scenario.clone(), "scenario")
        .ok_or_else(|| CliError::usage("missing required --scenario"))?;
    let parsed = parse_scenario(&s, r.carrier)?;
    Ok((s, parsed))
}

fn precoder_choice(c: &CommonArgs, r: &Resolved) -> CliResult<PrecoderChoice> {
    let s = r.cfg_file.pick_str(c.precoder.clone(), "precoder").unwrap_or_else(|| "proposed".into());
    s.parse().map_err(|e: Error| CliError::usage(format!("--precoder: {e}")))
}

fn alphabet(c: &CommonArgs, r: &Resolved) -> CliResult<Alphabet> {
    let s = r.cfg_file.pick_str(c.alphabet.clone(), "alphabet").unwrap_or_else(|| "qpsk".into());
    s.parse().map_err(|e: Error| CliError::usage(format!("--alphabet: {e}")))
}

fn now_unix() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

fn write_output(out: Option<&Path>, text: &str) -> CliResult<()> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::runtime(format!("cannot write {}: {e}", p.display()))),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|e| CliError::runtime(format!("cannot write to stdout: {e}")))
        }
    }
}

/// `--manifest-out`, else `<out>.manifest.json`, else `otfs-<command>.manifest.json`.
fn manifest_path(explicit: Option<&Path>, out: Option<&Path>, command: &str) -> PathBuf {
    if let Some(p) = explicit {
        return p.to_path_buf();
    }
    match out {
        Some(o) => {
            let mut s = o.as_os_str().to_owned();
            s.push(".manifest.json");
            PathBuf::from(s)
        }
        None => PathBuf::from(format!("otfs-{command}.manifest.json")),
    }
}

fn write_manifest(path: &Path, manifest: &RunManifest) -> CliResult<()> {
    let text = serde_json::to_string_pretty(manifest).expect("manifest serializes") + "\n";
    std::fs::write(path, text).map_err(|e| CliError::runtime(format!("cannot write manifest {}: {e}", path.display())))
}

fn load_manifest(path: &Path, command: &str) -> CliResult<RunManifest> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::usage(format!("--manifest: cannot read {}: {e}", path.display())))?;
    let m: RunManifest =
        serde_json::from_str(&text).map_err(|e| CliError::usage(format!("--manifest: {}: {e}", path.display())))?;
    if m.command != command {
        return Err(CliError::usage(format!("--manifest: recorded command is '{}', not '{command}'", m.command)));
    }
    Ok(m)
}

fn ber_has_config_flags(a: &BerArgs) -> bool {
    a.common.any_set()
        || a.detector.is_some()
        || a.snr.is_some()
        || a.frames.is_some()
        || a.target_errors.is_some()
        || a.cp.is_some()
        || a.ml_budget.is_some()
        || a.format.is_some()
}

fn cmd_ber(a: BerArgs) -> CliResult<()> {
    let manifest = if let Some(path) = &a.manifest {
        if ber_has_config_flags(&a) {
            return Err(CliError::usage("--manifest: replay takes only --out and --manifest-out"));
        }
        let mut m = load_manifest(path, "ber")?;
        let cfg: SimConfig = serde_json::from_value(m.config.clone())
            .map_err(|e| CliError::usage(format!("--manifest: bad config: {e}")))?;
        m.timestamp_unix = now_unix();
        m.config = serde_json::to_value(&cfg).expect("config serializes");
        m
    } else {
        let r = resolve_common(&a.common)?;
        let dims = require_dims(&r)?;
        let (scenario_input, parsed) = require_scenario(&a.common, &r)?;
        let detector: DetectorKind = r
            .cfg_file
            .pick_str(a.detector.clone(), "detector")
            .unwrap_or_else(|| "ml".into())
            .parse()
            .map_err(|e: Error| CliError::usage(format!("--detector: {e}")))?;
        let snr_grid_db = parse_snr(&r.cfg_file.pick_str(a.snr.clone(), "snr").unwrap_or_else(|| "0:2:20".into()))?;
        let format = r.cfg_file.pick_str(a.format.clone(), "format").unwrap_or_else(|| "csv".into());
        if format != "csv" && format != "json" {
            return Err(CliError::usage(format!("--format: '{format}' is not csv or json")));
        }
        let max_frames = r.cfg_file.pick(a.frames, "frames", "--frames")?.unwrap_or(DEFAULT_MAX_FRAMES);
        if max_frames == 0 {
            return Err(CliError::usage("--frames: must be at least 1"));
        }
        let cfg = SimConfig {
            dims,
            scenario: parsed.scenario,
            precoder: precoder_choice(&a.common, &r)?,
            alphabet: alphabet(&a.common, &r)?,
            detector,
            snr_grid_db,
            max_frames,
            target_bit_errors: r
                .cfg_file
                .pick(a.target_errors, "target_errors", "--target-errors")?
                .unwrap_or(DEFAULT_TARGET_ERRORS),
            master_seed: r.seed,
            delta_f: r.delta_f,
            carrier: r.carrier,
            cp_len: r.cfg_file.pick(a.cp, "cp", "--cp")?,
            ml_budget: r.cfg_file.pick(a.ml_budget, "ml_budget", "--ml-budget")?.unwrap_or(DEFAULT_ML_BUDGET),
        };
        RunManifest {
            command: "ber".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            timestamp_unix: now_unix(),
            master_seed: cfg.master_seed,
            seed_source: r.seed_source.into(),
            scenario_input,
            velocity_kmh: parsed.velocity_kmh,
            format: Some(format),
            config: serde_json::to_value(&cfg).expect("config serializes"),
        }
    };
    let cfg: SimConfig = serde_json::from_value(manifest.config.clone()).expect("round trip");
    cfg.validate()?;
    let records = run_ber(&cfg)?;
    let text = match manifest.format.as_deref() {
        Some("json") => to_json_string(&records) + "\n",
        _ => to_csv_string(&records),
    };
    write_output(a.out.as_deref(), &text)?;
    write_manifest(&manifest_path(a.manifest_out.as_deref(), a.out.as_deref(), "ber"), &manifest)?;

    let mut table = format!("{:>8} {:>10} {:>10} {:>12}\n", "snr_db", "frames", "errors", "ber");
    for r in &records {
        let _ = writeln!(table, "{:>8} {:>10} {:>10} {:>12.4e}", r.snr_db, r.frames, r.bit_errors, r.ber);
    }
    eprint!("{table}");
    for snr in monotonicity_violations(&records) {
        eprintln!("warning: BER rises significantly at {snr} dB");
    }
    Ok(())
}

fn analysis_scenario(s: ChannelScenario, dims: OtfsDims, delta_f: f64) -> CliResult<Scenario> {
    Ok(match s {
        ChannelScenario::FreqSel { taps } => Scenario::FreqSel { taps },
        ChannelScenario::TimeSel { f_max_hz } => Scenario::TimeSel { order: bem_order(dims, f_max_hz, delta_f)? },
        ChannelScenario::TimeSelOrder { order } => Scenario::TimeSel { order },
    })
}

fn cmd_diversity(a: DiversityArgs) -> CliResult<()> {
    let manifest = if let Some(path) = &a.manifest {
        if a.common.any_set() || a.pair_budget.is_some() || a.rank_tol.is_some() || a.require_exhaustive {
            return Err(CliError::usage("--manifest: replay takes only --out and --manifest-out"));
        }
        let mut m = load_manifest(path, "diversity")?;
        m.timestamp_unix = now_unix();
        m
    } else {
        let r = resolve_common(&a.common)?;
        let dims = require_dims(&r)?;
        let (scenario_input, parsed) = require_scenario(&a.common, &r)?;
        let mut options = DiversityOptions { seed: r.seed, ..Default::default() };
        if let Some(b) = r.cfg_file.pick(a.pair_budget, "pair_budget", "--pair-budget")? {
            if b == 0 {
                return Err(CliError::usage("--pair-budget: must be at least 1"));
            }
            options.pair_budget = b;
        }
        if let Some(t) = r.cfg_file.pick(a.rank_tol, "rank_tol", "--rank-tol")? {
            if !(t > 0.0) {
                return Err(CliError::usage("--rank-tol: must be positive"));
            }
            options.rank_tol = t;
        }
        let run = DiversityRun {
            dims,
            scenario: analysis_scenario(parsed.scenario, dims, r.delta_f)?,
            precoder: precoder_choice(&a.common, &r)?,
            alphabet: alphabet(&a.common, &r)?,
            options,
            require_exhaustive: a.require_exhaustive,
        };
        RunManifest {
            command: "diversity".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            timestamp_unix: now_unix(),
            master_seed: r.seed,
            seed_source: r.seed_source.into(),
            scenario_input,
            velocity_kmh: parsed.velocity_kmh,
            format: Some("json".into()),
            config: serde_json::to_value(&run).expect("config serializes"),
        }
    };
    let run: DiversityRun = serde_json::from_value(manifest.config.clone())
        .map_err(|e| CliError::usage(format!("--manifest: bad config: {e}")))?;

    let total = difference_vector_count(run.alphabet, run.dims.mn());
    if run.require_exhaustive && !matches!(total, Some(t) if t <= run.options.pair_budget) {
        let count = total.map_or_else(|| "more than 2^64".to_string(), |t| t.to_string());
        return Err(CliError {
            code: EXIT_NON_EXHAUSTIVE,
            msg: format!(
                "exhaustive enumeration needs {count} difference vectors, above the budget of {}",
                run.options.pair_budget
            ),
        });
    }
    let family = run.scenario.family();
    let p = run.precoder.build(family, run.dims)?;
    let report = diversity_gain(run.scenario, &p.v, p.kind, run.dims, run.alphabet, &run.options)?;
    let text = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
    write_output(a.out.as_deref(), &text)?;
    write_manifest(&manifest_path(a.manifest_out.as_deref(), a.out.as_deref(), "diversity"), &manifest)?;
    eprintln!("{}", report.summary);
    Ok(())
}

fn matrix_csv(m: &CMatrix) -> String {
    let mut out = String::from("row,col,re,im\n");
    for i in 0..m.rows() {
        for j in 0..m.cols() {
            let z = m[(i, j)];
            let _ = writeln!(out, "{i},{j},{},{}", z.re, z.im);
        }
    }
    out
}

fn family_of(s: Option<&str>) -> CliResult<ChannelFamily> {
    match s.map(|v| v.trim().to_ascii_lowercase()) {
        None => Ok(ChannelFamily::Fir),
        Some(v) if v == "fir" || v.starts_with("fir:") => Ok(ChannelFamily::Fir),
        Some(v) if v == "bem" || v.starts_with("bem:") => Ok(ChannelFamily::Bem),
        Some(v) => Err(CliError::usage(format!("--scenario: '{v}' is neither fir nor bem"))),
    }
}

fn cmd_dump(a: DumpArgs) -> CliResult<()> {
    let r = resolve_common(&a.common)?;
    let dims = require_dims(&r)?;
    let text = match a.which.as_str() {
        "theta" => matrix_csv(&vandermonde_theta(dims.mn())?.0),
        "v" => {
            let family = family_of(r.cfg_file.pick_str(a.common.scenario.clone(), "scenario").as_deref())?;
            matrix_csv(&precoder_choice(&a.common, &r)?.build(family, dims)?.v)
        }
        other => return Err(CliError::usage(format!("--which: '{other}' is not theta or v"))),
    };
    write_output(a.out.as_deref(), &text)
}

fn cmd_selfcheck() -> CliResult<()> {
    let checks = selfcheck::run_all();
    let mut failed = 0;
    for (name, result) in &checks {
        match result {
            Ok(()) => println!("PASS {name}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail}");
            }
        }
    }
    if failed == 0 {
        Ok(())
    } else {
        Err(CliError::runtime(format!("{failed} of {} checks failed", checks.len())))
    }
}

fn cmd_plotdata(a: PlotArgs) -> CliResult<()> {
    let merged = plotdata::merge(&a.inputs)?;
    for w in &merged.warnings {
        eprintln!("warning: {w}");
    }
    write_output(a.out.as_deref(), &merged.text)
}

fn cmd_channel(a: ChannelArgs) -> CliResult<()> {
    let r = resolve_common(&a.common)?;
    let dims = require_dims(&r)?;
    let (_, parsed) = require_scenario(&a.common, &r)?;
    let mut rng = ChaCha8Rng::seed_from_u64(r.seed);
    let text = match parsed.scenario {
        ChannelScenario::FreqSel { taps } => {
            if taps > dims.mn() {
                return Err(CliError::usage(format!("--scenario: L = {taps} exceeds MN = {}", dims.mn())));
            }
            sample_fir(taps, &mut rng)?.to_csv()
        }
        ChannelScenario::TimeSel { f_max_hz } => sample_bem(dims, f_max_hz, r.delta_f, &mut rng)?.to_csv(),
        ChannelScenario::TimeSelOrder { order } => sample_bem_order(dims, order, &mut rng).to_csv(),
    };
    write_output(a.out.as_deref(), &text)
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.cmd {
        Command::Ber(a) => cmd_ber(a),
        Command::Diversity(a) => cmd_diversity(a),
        Command::Precoder { cmd: PrecoderCmd::Dump(a) } => cmd_dump(a),
        Command::Selfcheck => cmd_selfcheck(),
        Command::Plotdata(a) => cmd_plotdata(a),
        Command::Channel(a) => cmd_channel(a),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {}", e.msg);
            e.code
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scenario_strings() {
        assert_eq!(parse_scenario("fir:L=3", 4e9).unwrap().scenario, ChannelScenario::FreqSel { taps: 3 });
        let v = parse_scenario("bem:v=500", 4e9).unwrap();
        assert_eq!(v.velocity_kmh, Some(500.0));
        match v.scenario {
            ChannelScenario::TimeSel { f_max_hz } => assert!((f_max_hz - 500.0 / 3.6 * 4e9 / 3e8).abs() < 1e-9),
            other => panic!("{other:?}"),
        }
        assert_eq!(
            parse_scenario("bem:fmax=100", 4e9).unwrap().scenario,
            ChannelScenario::TimeSel { f_max_hz: 100.0 }
        );
        assert_eq!(parse_scenario("bem:q=2", 4e9).unwrap().scenario, ChannelScenario::TimeSelOrder { order: 2 });
        for bad in ["fir", "fir:L=0", "fir:L=1.5", "bem:v=-1", "foo:L=2", "bem:x=1"] {
            assert_eq!(parse_scenario(bad, 4e9).unwrap_err().code, EXIT_USAGE, "{bad}");
        }
    }

    #[test]
    fn snr_strings() {
        assert_eq!(parse_snr("0:2:16").unwrap().len(), 9);
        assert_eq!(parse_snr("12,14,16").unwrap(), vec![12.0, 14.0, 16.0]);
        assert_eq!(parse_snr("14").unwrap(), vec![14.0]);
        assert!(parse_snr("16,14").is_err());
        assert!(parse_snr("0:2").is_err());
        assert!(parse_snr("a:1:2").is_err());
    }

    #[test]
    fn error_codes() {
        assert_eq!(exit_code(&Error::Capacity("x".into())), EXIT_CAPACITY);
        assert_eq!(exit_code(&Error::UnsupportedDimension(5)), EXIT_CAPACITY);
        assert_eq!(exit_code(&Error::Parameter("x".into())), EXIT_USAGE);
        assert_eq!(exit_code(&Error::Numerical("x".into())), EXIT_RUNTIME);
    }

    #[test]
    fn manifest_paths() {
        assert_eq!(manifest_path(None, Some(Path::new("a/b.csv")), "ber"), PathBuf::from("a/b.csv.manifest.json"));
        assert_eq!(manifest_path(None, None, "ber"), PathBuf::from("otfs-ber.manifest.json"));
        assert_eq!(manifest_path(Some(Path::new("m.json")), None, "ber"), PathBuf::from("m.json"));
    }
}

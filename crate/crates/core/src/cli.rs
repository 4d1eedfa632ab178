//! The `oamturb` command-line front end.
//!
//! Every subcommand writes one file (or stdout): CSV for data, JSON for
//! summaries, flat binary or CSV for phase screens. Each output records the
//! crate version and the fully resolved configuration, so a file can be
//! regenerated from its own header. Worker count never changes the output.

use std::ffi::OsString;
use std::fmt;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::parser::ValueSource;
use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use ini::Ini;
use rayon::prelude::*;
use serde::{Serialize, Serializer};
use serde_json::{json, Value};

use crate::channel;
use crate::experiments::{self, CollapseRecord};
use crate::lgmode::LGMode;
use crate::quadrature::QuadratureSpec;
use crate::screen_mc::{self, McOptions, ScreenGrid};
use crate::turbulence::{self, TurbulenceModel};
use crate::{Error, Result};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

const VERSION: &str = env!("CARGO_PKG_VERSION");

/// CSV columns of concurrence sweeps.
pub const CSV_COLUMNS: [&str; 8] = ["l0", "x", "r0", "a", "b", "atilde", "concurrence", "status"];

const AFTER_HELP: &str = "\
Units: SI throughout. Lengths (w0, r0, distance, wavelength, extent) in meters,
phases in radians, Cn2 in m^(-2/3). --wavelength is converted to k = 2*pi/lambda.
Turbulence is given either as --r0 or as the triple --cn2 --wavelength --distance.

Config files: --config FILE reads INI-style `key = value` lines; lines starting
with `;` or `#` are comments. Keys are flag names without dashes. Keys before any section apply to every subcommand that
has that flag; keys under [map], [sweep], ... apply to that subcommand only.
Flags on the command line override the file.

Exit codes: 0 success, 2 usage or invalid input, 3 numeric failure.";

const SCREEN_HELP: &str = "\
Binary format (little endian): 8-byte magic `OAMSCRN1`, u64 n, f64 extent [m],
u64 seed, u64 index, then n*n f64 phase values [rad] in row-major order
(row = y index). CSV format: a `# oamturb phase screen ...` comment line with
the same metadata, then n rows of n comma-separated values.";

#[derive(Debug, Parser)]
#[command(
    name = "oamturb",
    version,
    about = "Entanglement decay of OAM photon qubits in weak Kolmogorov turbulence",
    after_help = AFTER_HELP
)]
pub struct Cli {
    /// INI-style file with default flag values; command-line flags win.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Worker threads, 0 for one per core. Outputs do not depend on it.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(tag = "command", rename_all = "lowercase")]
pub enum Command {
    /// Survival and crosstalk amplitudes and the output concurrence for one channel.
    Map(MapArgs),
    /// Concurrence curves C(x), x = xi/r0, for several l0 (CSV).
    Sweep(SweepArgs),
    /// Fit C = exp(-alpha x^beta) to one curve of a sweep CSV.
    Fit(FitArgs),
    /// Smallest x at which the concurrence vanishes.
    Critical(CriticalArgs),
    /// Distance at which C falls to a threshold, and its power law in l0.
    Scaling(ScalingArgs),
    /// Monte-Carlo amplitudes from random phase screens.
    Mc(McArgs),
    /// Write one random phase screen.
    #[command(after_help = SCREEN_HELP)]
    Screen(ScreenArgs),
}

/// Either a Fried parameter or the path that produces one.
#[derive(Debug, Clone, Args, Serialize)]
pub struct TurbulenceArgs {
    /// Fried parameter r0 [m].
    #[arg(
        long,
        value_parser = positive,
        conflicts_with_all = ["cn2", "wavelength", "distance"],
        required_unless_present_all = ["cn2", "wavelength", "distance"]
    )]
    pub r0: Option<f64>,
    /// Refractive-index structure constant Cn2 [m^(-2/3)].
    #[arg(long, value_parser = positive, requires_all = ["wavelength", "distance"])]
    pub cn2: Option<f64>,
    /// Optical wavelength [m].
    #[arg(long, value_parser = positive, requires_all = ["cn2", "distance"])]
    pub wavelength: Option<f64>,
    /// Propagation distance [m].
    #[arg(long, value_parser = positive, requires_all = ["cn2", "wavelength"])]
    pub distance: Option<f64>,
}

impl TurbulenceArgs {
    fn model(&self) -> Result<TurbulenceModel> {
        match (self.r0, self.cn2, self.wavelength, self.distance) {
            (Some(r0), None, None, None) => TurbulenceModel::from_fried(r0),
            (None, Some(cn2), Some(wl), Some(d)) => TurbulenceModel::from_wavelength(cn2, wl, d),
            _ => Err(Error::config(
                "give either --r0 or all of --cn2, --wavelength, --distance",
            )),
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct MapArgs {
    /// OAM index of the qubit modes (+-l0).
    #[arg(long, allow_hyphen_values = true, value_parser = nonzero)]
    pub l0: i64,
    /// Beam waist w0 [m].
    #[arg(long, value_parser = positive)]
    pub w0: f64,
    #[command(flatten)]
    #[serde(flatten)]
    pub turbulence: TurbulenceArgs,
    /// Relative accuracy target of the quadrature.
    #[arg(long, default_value_t = 1e-9, value_parser = positive)]
    pub tol: f64,
    /// Output file; stdout when absent.
    #[arg(long, value_name = "FILE")]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SweepArgs {
    /// Comma-separated OAM indices.
    #[arg(long, required = true, value_delimiter = ',', allow_hyphen_values = true, value_parser = nonzero)]
    pub l0: Vec<i64>,
    /// Beam waist w0 [m].
    #[arg(long, value_parser = positive)]
    pub w0: f64,
    /// Grid of x = xi/r0 as start:stop:step.
    #[arg(long, default_value = "0.02:1.5:0.01")]
    pub x: XRange,
    /// Relative accuracy target of the quadrature.
    #[arg(long, default_value_t = 1e-9, value_parser = positive)]
    pub tol: f64,
    /// CSV output file; stdout when absent.
    #[arg(long, value_name = "FILE")]
    #[serde(skip)]
    pub out: Option<PathBuf>,
    /// Optional JSON file with the pairwise sup-deviations of the curves.
    #[arg(long, value_name = "FILE")]
    #[serde(skip)]
    pub summary: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FitArgs {
    /// Sweep CSV to read.
    #[arg(long = "in", value_name = "FILE")]
    pub input: PathBuf,
    /// Curve to fit.
    #[arg(long, allow_hyphen_values = true, value_parser = nonzero)]
    pub l0: i64,
    /// x-window lo:hi of the fit.
    #[arg(long, default_value = "0.2:0.95")]
    pub window: Window,
    /// JSON output file; stdout when absent.
    #[arg(long, value_name = "FILE")]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CriticalArgs {
    /// Comma-separated OAM indices.
    #[arg(long, required = true, value_delimiter = ',', allow_hyphen_values = true, value_parser = nonzero)]
    pub l0: Vec<i64>,
    /// Beam waist w0 [m].
    #[arg(long, value_parser = positive)]
    pub w0: f64,
    /// Relative accuracy target of the quadrature.
    #[arg(long, default_value_t = 1e-9, value_parser = positive)]
    pub tol: f64,
    /// JSON output file; stdout when absent.
    #[arg(long, value_name = "FILE")]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ScalingArgs {
    /// Comma-separated OAM indices spanning at least one decade.
    #[arg(
        long,
        value_delimiter = ',',
        allow_hyphen_values = true,
        value_parser = nonzero,
        default_value = "16,32,64,128,256,512"
    )]
    pub l0: Vec<i64>,
    /// Beam waist w0 [m].
    #[arg(long, value_parser = positive)]
    pub w0: f64,
    /// Refractive-index structure constant Cn2 [m^(-2/3)].
    #[arg(long, value_parser = positive)]
    pub cn2: f64,
    /// Optical wavelength [m].
    #[arg(long, value_parser = positive)]
    pub wavelength: f64,
    /// Concurrence level that defines the distance.
    #[arg(long, default_value_t = 0.01, value_parser = positive)]
    pub threshold: f64,
    /// Relative accuracy target of the quadrature.
    #[arg(long, default_value_t = 1e-9, value_parser = positive)]
    pub tol: f64,
    /// JSON output file; stdout when absent.
    #[arg(long, value_name = "FILE")]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct McArgs {
    /// OAM index of the qubit modes (+-l0).
    #[arg(long, allow_hyphen_values = true, value_parser = nonzero)]
    pub l0: i64,
    /// Beam waist w0 [m].
    #[arg(long, value_parser = positive)]
    pub w0: f64,
    #[command(flatten)]
    #[serde(flatten)]
    pub turbulence: TurbulenceArgs,
    /// Number of phase screens.
    #[arg(long, default_value_t = 2000)]
    pub samples: usize,
    /// Seed of the screen ensemble.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Samples per side of the screen grid; chosen from the beam when absent.
    #[arg(long)]
    pub grid: Option<usize>,
    /// Gauss-Legendre radial nodes of the estimator.
    #[arg(long, default_value_t = 64)]
    pub radial_nodes: usize,
    /// JSON output file; stdout when absent.
    #[arg(long, value_name = "FILE")]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ScreenFormat {
    Bin,
    Csv,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ScreenArgs {
    /// Samples per side, a power of two.
    #[arg(long)]
    pub n: usize,
    /// Side length of the screen [m].
    #[arg(long, value_parser = positive)]
    pub extent: f64,
    #[command(flatten)]
    #[serde(flatten)]
    pub turbulence: TurbulenceArgs,
    /// Seed of the screen ensemble.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Ensemble member to write.
    #[arg(long, default_value_t = 0)]
    pub index: u64,
    #[arg(long, value_enum, default_value_t = ScreenFormat::Bin)]
    pub format: ScreenFormat,
    /// Output file.
    #[arg(long, value_name = "FILE")]
    #[serde(skip)]
    pub out: PathBuf,
}

/// `start:stop:step`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct XRange {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

/// `lo:hi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window {
    pub lo: f64,
    pub hi: f64,
}

fn split_floats(s: &str, n: usize) -> std::result::Result<Vec<f64>, String> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != n {
        return Err(format!("expected {n} numbers separated by ':', got `{s}`"));
    }
    parts
        .iter()
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("`{p}`: {e}")))
        .collect()
}

impl FromStr for XRange {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let v = split_floats(s, 3)?;
        let r = XRange { start: v[0], stop: v[1], step: v[2] };
        experiments::x_grid(r.start, r.stop, r.step).map_err(|e| e.to_string())?;
        Ok(r)
    }
}

impl FromStr for Window {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let v = split_floats(s, 2)?;
        if !(v[0] < v[1]) {
            return Err(format!("window needs lo < hi, got `{s}`"));
        }
        Ok(Window { lo: v[0], hi: v[1] })
    }
}

impl fmt::Display for XRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.start, self.stop, self.step)
    }
}

impl fmt::Display for Window {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.lo, self.hi)
    }
}

impl Serialize for XRange {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl Serialize for Window {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

fn positive(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("`{s}`: {e}"))?;
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("must be positive and finite, got {s}"))
    }
}

fn nonzero(s: &str) -> std::result::Result<i64, String> {
    let v: i64 = s.parse().map_err(|e| format!("`{s}`: {e}"))?;
    if v == 0 {
        Err("qubit modes need l0 ≠ 0".into())
    } else {
        Ok(v)
    }
}

/// Exit status for a library error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Numeric { .. } => EXIT_NUMERIC,
        Error::Domain(_) | Error::Config(_) | Error::Io(_) => EXIT_USAGE,
    }
}

/// Parse, merge the config file, run, and return the process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let raw: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let argv = match merge_config(&raw) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("oamturb: {e}");
            return EXIT_USAGE;
        }
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("oamturb: {e}");
            exit_code(&e)
        }
    }
}

/// Flags that cannot be combined with `key`.
fn exclusive_with(key: &str) -> &'static [&'static str] {
    match key {
        "r0" => &["cn2", "wavelength", "distance"],
        "cn2" | "wavelength" | "distance" => &["r0"],
        _ => &[],
    }
}

/// Append config-file values for every flag of the chosen subcommand that
/// the command line leaves unset.
fn merge_config(raw: &[OsString]) -> Result<Vec<OsString>> {
    let probe = Cli::command().ignore_errors(true).try_get_matches_from(raw);
    let Ok(matches) = probe else {
        return Ok(raw.to_vec());
    };
    let Some((name, sub)) = matches.subcommand() else {
        return Ok(raw.to_vec());
    };
    let path = sub
        .get_one::<PathBuf>("config")
        .or_else(|| matches.get_one::<PathBuf>("config"));
    let Some(path) = path else {
        return Ok(raw.to_vec());
    };
    let ini = Ini::load_from_file(path)
        .map_err(|e| Error::config(format!("cannot read config {}: {e}", path.display())))?;

    let root = Cli::command();
    let cmd = root
        .find_subcommand(name)
        .ok_or_else(|| Error::config(format!("unknown subcommand {name}")))?;
    let known_anywhere = |key: &str| {
        root.get_subcommands()
            .flat_map(|c| c.get_arguments())
            .chain(root.get_arguments())
            .any(|a| a.get_long() == Some(key))
    };
    let on_command_line = |id: &str| {
        [sub, &matches].into_iter().any(|m| {
            m.ids().any(|i| i.as_str() == id)
                && m.value_source(id) == Some(ValueSource::CommandLine)
        })
    };

    let mut extra: Vec<OsString> = Vec::new();
    let mut seen: Vec<String> = Vec::new();
    // the subcommand section first, so it shadows general keys
    let sections = [Some(name), None];
    for section in sections {
        let Some(props) = ini.section(section) else {
            continue;
        };
        for (key, value) in props.iter() {
            let key = key.trim().replace('_', "-");
            if key == "config" {
                return Err(Error::config("config files cannot include other config files"));
            }
            let arg = cmd
                .get_arguments()
                .chain(root.get_arguments())
                .find(|a| a.get_long() == Some(key.as_str()));
            let Some(arg) = arg else {
                if section.is_some() || !known_anywhere(&key) {
                    return Err(Error::config(format!(
                        "config key `{key}` is not a flag of `{}`",
                        section.unwrap_or(name)
                    )));
                }
                continue;
            };
            let id = arg.get_id().as_str();
            if seen.iter().any(|s| s == &key)
                || on_command_line(id)
                || exclusive_with(&key).iter().any(|k| on_command_line(k))
            {
                continue;
            }
            seen.push(key.clone());
            let value = value.trim();
            if arg.get_action().takes_values() {
                extra.push(format!("--{key}={value}").into());
            } else if value.parse::<bool>().map_err(|_| {
                Error::config(format!("config key `{key}` needs true or false, got `{value}`"))
            })? {
                extra.push(format!("--{key}").into());
            }
        }
    }
    let mut argv = raw.to_vec();
    argv.extend(extra);
    Ok(argv)
}

/// Run a parsed command line on a pool of `cli.threads` workers.
pub fn execute(cli: &Cli) -> Result<()> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build()
        .map_err(|e| Error::config(format!("cannot start worker pool: {e}")))?;
    pool.install(|| match &cli.command {
        Command::Map(a) => cmd_map(a, &cli.command),
        Command::Sweep(a) => cmd_sweep(a, &cli.command),
        Command::Fit(a) => cmd_fit(a, &cli.command),
        Command::Critical(a) => cmd_critical(a, &cli.command),
        Command::Scaling(a) => cmd_scaling(a, &cli.command),
        Command::Mc(a) => cmd_mc(a, &cli.command),
        Command::Screen(a) => cmd_screen(a, &cli.command),
    })
}

fn config_value(cmd: &Command) -> Value {
    serde_json::to_value(cmd).expect("command line serialises to JSON")
}

/// `# oamturb <version> <config as JSON>`
pub fn header_line(cmd: &Command) -> String {
    format!("# oamturb {VERSION} {}", config_value(cmd))
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => {
            let mut w = BufWriter::new(File::create(path)?);
            w.write_all(text.as_bytes())?;
            w.flush()?;
        }
        None => {
            let mut w = io::stdout().lock();
            w.write_all(text.as_bytes())?;
            w.flush()?;
        }
    }
    Ok(())
}

fn emit_json(out: Option<&Path>, cmd: &Command, body: Value) -> Result<()> {
    let mut doc = json!({ "version": VERSION, "config": config_value(cmd) });
    if let (Value::Object(d), Value::Object(b)) = (&mut doc, body) {
        d.extend(b);
    }
    let mut text = serde_json::to_string_pretty(&doc).expect("JSON value serialises");
    text.push('\n');
    emit(out, &text)
}

fn spec(tol: f64) -> QuadratureSpec {
    QuadratureSpec::default().with_target(tol)
}

fn cmd_map(args: &MapArgs, cmd: &Command) -> Result<()> {
    let model = args.turbulence.model()?;
    let amps = channel::amplitudes(args.l0, args.w0, &model, &spec(args.tol))?;
    let atilde = amps.ratio()?;
    let concurrence = crate::entangle::concurrence_closed_form(atilde)?;
    let xi = LGMode::new(args.l0, args.w0)?.phase_correlation_length()?;
    emit_json(
        args.out.as_deref(),
        cmd,
        json!({
            "l0": args.l0,
            "w0": args.w0,
            "r0": model.r0(),
            "x": xi / model.r0(),
            "a": amps.a,
            "a_err": amps.a_err,
            "b": amps.b,
            "b_err": amps.b_err,
            "atilde": atilde,
            "concurrence": concurrence,
            "cutoff": amps.cutoff,
        }),
    )
}

/// Rows of a sweep CSV, header comment and column row included.
pub fn sweep_csv(header: &str, records: &[CollapseRecord]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_COLUMNS).map_err(csv_error)?;
    for r in records {
        w.write_record([
            r.l0.to_string(),
            r.x.to_string(),
            r.r0.to_string(),
            r.a.to_string(),
            r.b.to_string(),
            r.atilde.to_string(),
            r.concurrence.to_string(),
            r.status.clone(),
        ])
        .map_err(csv_error)?;
    }
    let body = w.into_inner().map_err(|e| Error::config(e.to_string()))?;
    let body = String::from_utf8(body).map_err(|e| Error::config(e.to_string()))?;
    Ok(format!("{header}\n{body}"))
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::config(format!("CSV: {other:?}")),
    }
}

/// Records of a sweep CSV; comment lines are skipped.
pub fn read_sweep_csv(path: &Path) -> Result<Vec<CollapseRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(csv_error)?;
    let headers = rdr.headers().map_err(csv_error)?.clone();
    if headers.iter().ne(CSV_COLUMNS) {
        return Err(Error::config(format!(
            "{} does not have the columns {}",
            path.display(),
            CSV_COLUMNS.join(",")
        )));
    }
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row.map_err(csv_error)?;
        let num = |j: usize| -> Result<f64> {
            row[j].parse::<f64>().map_err(|e| {
                Error::config(format!("row {}: column {}: {e}", i + 1, CSV_COLUMNS[j]))
            })
        };
        out.push(CollapseRecord {
            l0: row[0]
                .parse()
                .map_err(|e| Error::config(format!("row {}: column l0: {e}", i + 1)))?,
            x: num(1)?,
            r0: num(2)?,
            a: num(3)?,
            b: num(4)?,
            atilde: num(5)?,
            concurrence: num(6)?,
            status: row[7].to_string(),
        });
    }
    Ok(out)
}

fn cmd_sweep(args: &SweepArgs, cmd: &Command) -> Result<()> {
    let xs = experiments::x_grid(args.x.start, args.x.stop, args.x.step)?;
    let data = experiments::collapse_dataset(&args.l0, args.w0, &xs, &spec(args.tol))?;
    let records: Vec<CollapseRecord> = data.records().cloned().collect();
    let failed = records.iter().filter(|r| !r.is_ok()).count();
    if failed > 0 {
        eprintln!("oamturb: {failed} of {} points failed; see the status column", records.len());
    }
    emit(args.out.as_deref(), &sweep_csv(&header_line(cmd), &records)?)?;
    if let Some(path) = &args.summary {
        let monotone: Vec<Value> = data
            .curves
            .iter()
            .map(|c| {
                json!({
                    "l0": c.first().map(|r| r.l0),
                    "monotone": experiments::is_monotone_non_increasing(c),
                })
            })
            .collect();
        emit_json(
            Some(path),
            cmd,
            json!({
                "points": records.len(),
                "failed": failed,
                "curves": monotone,
                "deviations": data.deviations,
            }),
        )?;
    }
    Ok(())
}

/// Windows shifted by ±0.05 at either end.
fn neighbour_windows(w: Window) -> Vec<Window> {
    const SHIFT: f64 = 0.05;
    [
        (w.lo - SHIFT, w.hi),
        (w.lo + SHIFT, w.hi),
        (w.lo, w.hi - SHIFT),
        (w.lo, w.hi + SHIFT),
    ]
    .into_iter()
    .filter(|(lo, hi)| *lo > 0.0 && lo < hi)
    .map(|(lo, hi)| Window { lo: tidy(lo), hi: tidy(hi) })
    .collect()
}

/// Drop binary noise from a shifted window edge.
fn tidy(v: f64) -> f64 {
    (v * 1e9).round() / 1e9
}

fn cmd_fit(args: &FitArgs, cmd: &Command) -> Result<()> {
    let records: Vec<CollapseRecord> = read_sweep_csv(&args.input)?
        .into_iter()
        .filter(|r| r.l0 == args.l0)
        .collect();
    if records.is_empty() {
        return Err(Error::config(format!(
            "{} has no rows with l0 = {}",
            args.input.display(),
            args.l0
        )));
    }
    let fit = experiments::fit_stretched_exponential(&records, (args.window.lo, args.window.hi))?;
    let sensitivity: Vec<Value> = neighbour_windows(args.window)
        .into_iter()
        .map(|w| match experiments::fit_stretched_exponential(&records, (w.lo, w.hi)) {
            Ok(f) => json!({ "window": w, "alpha": f.alpha, "beta": f.beta, "residual": f.residual }),
            Err(e) => json!({ "window": w, "error": e.to_string() }),
        })
        .collect();
    emit_json(
        args.out.as_deref(),
        cmd,
        json!({
            "l0": args.l0,
            "alpha": fit.alpha,
            "beta": fit.beta,
            "residual": fit.residual,
            "points": fit.points,
            "iterations": fit.iterations,
            "window_sensitivity": sensitivity,
        }),
    )
}

fn cmd_critical(args: &CriticalArgs, cmd: &Command) -> Result<()> {
    let qs = spec(args.tol);
    let results = args
        .l0
        .par_iter()
        .map(|&l0| {
            let x = experiments::critical_x(l0, args.w0, &qs)?;
            let xi = LGMode::new(l0, args.w0)?.phase_correlation_length()?;
            Ok(json!({ "l0": l0, "x_critical": x, "xi": xi, "r0": xi / x }))
        })
        .collect::<Result<Vec<Value>>>()?;
    emit_json(
        args.out.as_deref(),
        cmd,
        json!({ "tolerance": experiments::CRITICAL_TOL, "results": results }),
    )
}

fn cmd_scaling(args: &ScalingArgs, cmd: &Command) -> Result<()> {
    let k = turbulence::wavenumber(args.wavelength)?;
    let res = experiments::distance_scaling(
        &args.l0,
        args.cn2,
        k,
        args.w0,
        args.threshold,
        &spec(args.tol),
    )?;
    emit_json(
        args.out.as_deref(),
        cmd,
        json!({
            "k": k,
            "slope": res.slope,
            "intercept": res.intercept,
            "oracle_slope": res.oracle_slope,
            "asymptotic_slope": 5.0 / 6.0,
            "threshold": res.threshold,
            "points": res.points,
        }),
    )
}

fn cmd_mc(args: &McArgs, cmd: &Command) -> Result<()> {
    let model = args.turbulence.model()?;
    let opts = McOptions {
        grid_size: args.grid,
        radial_nodes: args.radial_nodes,
        ..McOptions::default()
    };
    let est = screen_mc::mc_amplitudes(args.l0, args.w0, &model, args.samples, args.seed, &opts)?;
    if est.warning {
        eprintln!("oamturb: standard error exceeds the budget; raise --samples");
    }
    emit_json(
        args.out.as_deref(),
        cmd,
        json!({
            "l0": args.l0,
            "w0": args.w0,
            "r0": model.r0(),
            "a_mc": est.a,
            "sigma_a": est.sigma_a,
            "b_mc": est.b,
            "sigma_b": est.sigma_b,
            "samples": est.samples,
            "seed": est.seed,
            "grid": est.grid,
            "angular_samples": est.angular_samples,
            "warning": est.warning,
        }),
    )
}

fn cmd_screen(args: &ScreenArgs, _cmd: &Command) -> Result<()> {
    let model = args.turbulence.model()?;
    let grid = ScreenGrid::new(args.n, args.extent)?;
    grid.check_turbulence(model.r0())?;
    let screen = screen_mc::sample_screen_indexed(&grid, &model, args.seed, args.index)?;
    let mut w = BufWriter::new(File::create(&args.out)?);
    match args.format {
        ScreenFormat::Bin => screen.write_binary(&mut w)?,
        ScreenFormat::Csv => screen.write_csv(&mut w)?,
    }
    w.flush()?;
    Ok(())
}

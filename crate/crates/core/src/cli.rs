//! The `distexp` command-line tool.
//!
//! Every subcommand writes a table. Without `--out-dir` the table goes to
//! stdout; with it, the table is written to `<out-dir>/<subcommand>.csv` (or
//! `.json` for `layers`) next to a `<subcommand>.manifest.json` recording the
//! parameters, seed, tool version and wall-clock time.
//!
//! Exit codes: 0 on success, 2 on usage errors, 1 on runtime errors.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::dmt::{AntennaConfig, DmtCurve};
use crate::error::Error;
use crate::exponent::{delta_line, upper_bound_exponent};
use crate::layering::{
    assign_layers, assign_layers_tuned, exponent_terms, single_layer_gain, verify_equal_exponents,
};
use crate::simulator::{run_sim, DistortionReport, Oracle, SimConfig};

#[derive(Debug, Parser)]
#[command(
    name = "distexp",
    version,
    about = "Distortion exponent of layered transmission with ARQ feedback"
)]
pub struct Cli {
    /// Directory for output tables and manifests (stdout when omitted).
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,

    /// Worker threads for Monte Carlo runs (results do not depend on it).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// DMT curve: corners and optional interpolation grid.
    Dmt(DmtArgs),
    /// Optimal exponent over a range of bandwidth ratios.
    Exponent(ExponentArgs),
    /// Layer-rate allocation for n layers.
    Layers(LayersArgs),
    /// Finite-SNR distortion of the layered scheme.
    Simulate(SimulateArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct DmtArgs {
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    pub mt: u32,
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    pub mr: u32,
    /// Step of an extra interpolation grid over [0, min(mt, mr)].
    #[arg(long)]
    pub grid: Option<f64>,
}

#[derive(Debug, Args, Serialize)]
pub struct ExponentArgs {
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    pub mt: u32,
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    pub mr: u32,
    #[arg(long, default_value_t = 0.0)]
    pub b_min: f64,
    #[arg(long, default_value_t = 10.0)]
    pub b_max: f64,
    #[arg(long, default_value_t = 0.5)]
    pub step: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct LayersArgs {
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    pub mt: u32,
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    pub mr: u32,
    #[arg(long)]
    pub b: f64,
    /// Number of layers (even).
    #[arg(long)]
    pub n: usize,
    /// Tie perturbation; chosen per n when omitted.
    #[arg(long)]
    pub eps: Option<f64>,
}

/// `simulate` flags. Unset flags fall back to the config file, then to
/// [`SimulateSettings::default`].
#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    /// TOML, JSON or CSV settings file; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub mt: Option<u32>,
    #[arg(long)]
    pub mr: Option<u32>,
    /// Bandwidth ratio (required, here or in the config file).
    #[arg(long)]
    pub b: Option<f64>,
    /// Number of layers of the two-pass allocation (even).
    #[arg(long)]
    pub n: Option<usize>,
    /// Explicit layer multiplexing gains, overriding --n.
    #[arg(long, value_delimiter = ',')]
    pub gains: Option<Vec<f64>>,
    /// Use the best single-layer gain instead of a multi-layer allocation.
    #[arg(long)]
    pub single_layer: bool,
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub snr_db_min: Option<f64>,
    #[arg(long)]
    pub snr_db_max: Option<f64>,
    #[arg(long)]
    pub snr_db_step: Option<f64>,
    /// Channel draws per grid point.
    #[arg(long)]
    pub trials: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// `mc` or `exact` (closed form, 1x1 only).
    #[arg(long, value_parser = parse_oracle)]
    pub oracle: Option<Oracle>,
}

fn parse_oracle(s: &str) -> Result<Oracle, String> {
    match s {
        "mc" => Ok(Oracle::Mc),
        "exact" => Ok(Oracle::Exact),
        _ => Err(format!("expected `mc` or `exact`, got `{s}`")),
    }
}

/// Settings as read from a config file; every field is optional.
#[derive(Debug, Default, Clone, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SimulateFile {
    pub mt: Option<u32>,
    pub mr: Option<u32>,
    pub b: Option<f64>,
    pub n: Option<usize>,
    pub gains: Option<Vec<f64>>,
    pub single_layer: Option<bool>,
    pub eps: Option<f64>,
    pub snr_db_min: Option<f64>,
    pub snr_db_max: Option<f64>,
    pub snr_db_step: Option<f64>,
    pub trials: Option<u64>,
    pub seed: Option<u64>,
    pub oracle: Option<Oracle>,
}

/// Fully resolved `simulate` settings.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct SimulateSettings {
    pub mt: u32,
    pub mr: u32,
    pub b: f64,
    pub n: usize,
    pub gains: Option<Vec<f64>>,
    pub single_layer: bool,
    pub eps: Option<f64>,
    pub snr_db_min: f64,
    pub snr_db_max: f64,
    pub snr_db_step: f64,
    pub trials: u64,
    pub seed: u64,
    pub oracle: Oracle,
}

impl Default for SimulateSettings {
    fn default() -> Self {
        SimulateSettings {
            mt: 1,
            mr: 1,
            b: f64::NAN,
            n: 2,
            gains: None,
            single_layer: false,
            eps: None,
            snr_db_min: 10.0,
            snr_db_max: 30.0,
            snr_db_step: 5.0,
            trials: 100_000,
            seed: 0,
            oracle: Oracle::Mc,
        }
    }
}

fn defaults_listing() -> String {
    let d = SimulateSettings::default();
    format!(
        "defaults: --mt {} --mr {} --n {} --snr-db-min {} --snr-db-max {} --snr-db-step {} --trials {} --seed {} --oracle mc; --b has no default",
        d.mt, d.mr, d.n, d.snr_db_min, d.snr_db_max, d.snr_db_step, d.trials, d.seed
    )
}

/// Flags over config file over defaults.
pub fn resolve_simulate(
    args: &SimulateArgs,
    file: &SimulateFile,
) -> Result<SimulateSettings, CliError> {
    let d = SimulateSettings::default();
    let b = args.b.or(file.b).ok_or_else(|| {
        CliError::Usage(format!(
            "missing required setting --b (bandwidth ratio)\n{}",
            defaults_listing()
        ))
    })?;
    Ok(SimulateSettings {
        mt: args.mt.or(file.mt).unwrap_or(d.mt),
        mr: args.mr.or(file.mr).unwrap_or(d.mr),
        b,
        n: args.n.or(file.n).unwrap_or(d.n),
        gains: args.gains.clone().or_else(|| file.gains.clone()),
        single_layer: args.single_layer || file.single_layer.unwrap_or(false),
        eps: args.eps.or(file.eps),
        snr_db_min: args.snr_db_min.or(file.snr_db_min).unwrap_or(d.snr_db_min),
        snr_db_max: args.snr_db_max.or(file.snr_db_max).unwrap_or(d.snr_db_max),
        snr_db_step: args
            .snr_db_step
            .or(file.snr_db_step)
            .unwrap_or(d.snr_db_step),
        trials: args.trials.or(file.trials).unwrap_or(d.trials),
        seed: args.seed.or(file.seed).unwrap_or(d.seed),
        oracle: args.oracle.or(file.oracle).unwrap_or(d.oracle),
    })
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Runtime(#[from] Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

fn usage(e: Error) -> CliError {
    match e {
        Error::Domain(msg) => CliError::Usage(msg),
        other => CliError::Runtime(other),
    }
}

/// A CSV table with fixed columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(header: &[&str]) -> Self {
        Table {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn write<W: Write>(&self, out: W) -> Result<(), Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }
}

/// Reals are written with 17 significant digits in scientific notation.
pub fn fmt_real(x: f64) -> String {
    format!("{x:.16e}")
}

fn inclusive_grid(lo: f64, hi: f64, step: f64) -> Result<Vec<f64>, CliError> {
    if !(step > 0.0) || !lo.is_finite() || !hi.is_finite() || hi < lo {
        return Err(CliError::Usage(format!(
            "invalid grid {lo}..{hi} step {step}"
        )));
    }
    let count = ((hi - lo) / step + 1e-9).floor() as usize;
    Ok((0..=count).map(|i| lo + i as f64 * step).collect())
}

fn antennas(mt: u32, mr: u32) -> Result<AntennaConfig, CliError> {
    AntennaConfig::new(mt, mr).map_err(usage)
}

/// Corner rows plus, with `grid`, interpolated rows; sorted by `r`.
pub fn dmt_table(args: &DmtArgs) -> Result<Table, CliError> {
    let curve = DmtCurve::new(antennas(args.mt, args.mr)?);
    let mut rows: Vec<(f64, f64, bool)> = curve
        .corners()
        .iter()
        .map(|c| (c.gain as f64, c.diversity as f64, true))
        .collect();
    if let Some(step) = args.grid {
        for r in inclusive_grid(0.0, curve.max_gain() as f64, step)? {
            if !rows.iter().any(|row| row.0 == r) {
                rows.push((r, curve.eval(r)?, false));
            }
        }
    }
    rows.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut table = Table::new(&["r", "d", "corner"]);
    table.rows = rows
        .into_iter()
        .map(|(r, d, corner)| vec![fmt_real(r), fmt_real(d), corner.to_string()])
        .collect();
    Ok(table)
}

/// One row per `b`: closed-form exponent, supporting-line intercept, touching
/// corner and tie flag. `b = 0` has no supporting line; its corner is blank.
pub fn exponent_table(args: &ExponentArgs) -> Result<Table, CliError> {
    let cfg = antennas(args.mt, args.mr)?;
    if args.b_min < 0.0 {
        return Err(CliError::Usage(format!(
            "--b-min must be >= 0 (got {})",
            args.b_min
        )));
    }
    let mut table = Table::new(&["b", "upper_bound", "line_intercept", "touch_corner", "tie"]);
    for b in inclusive_grid(args.b_min, args.b_max, args.step)? {
        let upper = upper_bound_exponent(cfg, b)?;
        let row = if b == 0.0 {
            vec![
                fmt_real(b),
                fmt_real(upper),
                fmt_real(0.0),
                String::new(),
                "false".into(),
            ]
        } else {
            let line = delta_line(cfg, b)?;
            vec![
                fmt_real(b),
                fmt_real(upper),
                fmt_real(line.intercept),
                line.touch_corner.to_string(),
                line.tie.to_string(),
            ]
        };
        table.rows.push(row);
    }
    Ok(table)
}

/// Allocation, equal-exponent residuals and exponent terms as JSON.
pub fn layers_json(args: &LayersArgs) -> Result<Value, CliError> {
    let cfg = antennas(args.mt, args.mr)?;
    if args.n < 2 || !args.n.is_multiple_of(2) {
        return Err(CliError::Usage(format!(
            "--n must be even and >= 2 (got {})",
            args.n
        )));
    }
    let alloc = match args.eps {
        Some(eps) => assign_layers(cfg, args.b, args.n, eps),
        None => assign_layers_tuned(cfg, args.b, args.n),
    }
    .map_err(usage)?;
    let curve = DmtCurve::new(cfg);
    let check = verify_equal_exponents(&alloc, &curve)?;
    let terms = exponent_terms(&alloc, &curve)?;
    let limit = delta_line(cfg, args.b)?.intercept;
    Ok(json!({
        "allocation": alloc,
        "delta_n": alloc.delta_n,
        "limit": limit,
        "exponent_terms": terms,
        "residuals": check,
    }))
}

/// Reads a simulation config; the format follows the extension (`.json`,
/// `.csv`, anything else is TOML). A CSV config is a header row of keys
/// and one row of values, with `gains` separated by `;`.
pub fn load_simulate_file(path: &Path) -> Result<SimulateFile, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    let bad = |e: String| CliError::Usage(format!("bad config {}: {e}", path.display()));
    match path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .as_deref()
    {
        Some("json") => serde_json::from_str(&text).map_err(|e| bad(e.to_string())),
        Some("csv") => {
            let value = csv_config(&text).map_err(bad)?;
            serde_json::from_value(value).map_err(|e| bad(e.to_string()))
        }
        _ => toml::from_str(&text).map_err(|e| bad(e.to_string())),
    }
}

fn csv_config(text: &str) -> Result<Value, String> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| e.to_string())?.clone();
    let mut records = reader.records();
    let record = records
        .next()
        .ok_or("no value row")?
        .map_err(|e| e.to_string())?;
    if records.next().is_some() {
        return Err("expected a single value row".into());
    }
    let scalar = |v: &str| -> Value {
        if let Ok(b) = v.parse::<bool>() {
            Value::Bool(b)
        } else if let Ok(i) = v.parse::<u64>() {
            json!(i)
        } else if let Ok(x) = v.parse::<f64>() {
            json!(x)
        } else {
            Value::String(v.to_string())
        }
    };
    let mut map = serde_json::Map::new();
    for (key, v) in header.iter().zip(record.iter()) {
        if v.is_empty() {
            continue;
        }
        let value = if key == "gains" {
            let gains: Result<Vec<f64>, _> =
                v.split(';').map(|g| g.trim().parse::<f64>()).collect();
            json!(gains.map_err(|e| format!("gains: {e}"))?)
        } else {
            scalar(v)
        };
        map.insert(key.to_string(), value);
    }
    Ok(Value::Object(map))
}

/// Builds the simulation from resolved settings.
pub fn simulate_config(s: &SimulateSettings) -> Result<SimConfig, CliError> {
    let cfg = antennas(s.mt, s.mr)?;
    let gains = if let Some(gains) = &s.gains {
        gains.clone()
    } else if s.single_layer {
        vec![single_layer_gain(cfg, s.b).map_err(usage)?]
    } else {
        if s.n < 2 || !s.n.is_multiple_of(2) {
            return Err(CliError::Usage(format!(
                "--n must be even and >= 2 (got {})",
                s.n
            )));
        }
        let alloc = match s.eps {
            Some(eps) => assign_layers(cfg, s.b, s.n, eps),
            None => assign_layers_tuned(cfg, s.b, s.n),
        }
        .map_err(usage)?;
        alloc.rates
    };
    Ok(SimConfig {
        cfg,
        b: s.b,
        gains,
        snr_grid_db: inclusive_grid(s.snr_db_min, s.snr_db_max, s.snr_db_step)?,
        trials: s.trials,
        seed: s.seed,
        oracle: s.oracle,
    })
}

/// One row per SNR. `p_k` is the probability of decoding exactly `k`
/// layers; Monte Carlo runs add the raw counts `count_k`.
pub fn report_table(report: &DistortionReport) -> Table {
    let layers = report
        .points
        .first()
        .map_or(0, |p| p.layer_probabilities.len());
    let with_counts = report.points.iter().any(|p| !p.layer_counts.is_empty());
    let mut header: Vec<String> = [
        "snr_db",
        "snr",
        "mean_distortion",
        "std_error",
        "trials",
        "fit_residual",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    header.extend((0..layers).map(|k| format!("p_{k}")));
    if with_counts {
        header.extend((0..layers).map(|k| format!("count_{k}")));
    }
    let rows = report
        .points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let mut row = vec![
                fmt_real(p.snr_db),
                fmt_real(p.snr),
                fmt_real(p.mean_distortion),
                fmt_real(p.std_error),
                p.trials.to_string(),
                report
                    .fit_residuals
                    .get(i)
                    .map_or(String::new(), |r| fmt_real(*r)),
            ];
            row.extend(p.layer_probabilities.iter().map(|&q| fmt_real(q)));
            if with_counts {
                row.extend(p.layer_counts.iter().map(u64::to_string));
            }
            row
        })
        .collect();
    Table { header, rows }
}

/// Provenance written next to every output file.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RunManifest {
    pub subcommand: String,
    pub parameters: Value,
    pub seed: Option<u64>,
    pub version: String,
    pub outputs: Vec<PathBuf>,
    pub wall_clock_seconds: f64,
    #[serde(default)]
    pub results: Value,
}

enum Output {
    Csv(Table),
    Json(Value),
}

fn emit(
    out_dir: Option<&Path>,
    name: &str,
    output: Output,
    parameters: Value,
    seed: Option<u64>,
    results: Value,
    started: Instant,
) -> Result<(), CliError> {
    let Some(dir) = out_dir else {
        let stdout = std::io::stdout();
        match output {
            Output::Csv(t) => t.write(stdout.lock())?,
            Output::Json(v) => {
                let mut lock = stdout.lock();
                serde_json::to_writer_pretty(&mut lock, &v).map_err(Error::from)?;
                writeln!(lock).map_err(Error::from)?;
            }
        }
        return Ok(());
    };
    fs::create_dir_all(dir).map_err(Error::from)?;
    let path = match output {
        Output::Csv(t) => {
            let path = dir.join(format!("{name}.csv"));
            t.write(fs::File::create(&path).map_err(Error::from)?)?;
            path
        }
        Output::Json(v) => {
            let path = dir.join(format!("{name}.json"));
            fs::write(
                &path,
                serde_json::to_string_pretty(&v).map_err(Error::from)?,
            )
            .map_err(Error::from)?;
            path
        }
    };
    let manifest = RunManifest {
        subcommand: name.to_string(),
        parameters,
        seed,
        version: env!("CARGO_PKG_VERSION").to_string(),
        outputs: vec![path],
        wall_clock_seconds: started.elapsed().as_secs_f64(),
        results,
    };
    let manifest_path = dir.join(format!("{name}.manifest.json"));
    fs::write(
        manifest_path,
        serde_json::to_string_pretty(&manifest).map_err(Error::from)?,
    )
    .map_err(Error::from)?;
    Ok(())
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).unwrap_or(Value::Null)
}

/// Executes a parsed command line.
pub fn execute(cli: Cli) -> Result<(), CliError> {
    let started = Instant::now();
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return Err(CliError::Usage("--threads must be >= 1".into()));
        }
        // Fails only if a global pool already exists (e.g. repeated calls in
        // one process); the existing pool is then used.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
    let out_dir = cli.out_dir.as_deref();
    match &cli.command {
        Command::Dmt(args) => {
            let table = dmt_table(args)?;
            emit(
                out_dir,
                "dmt",
                Output::Csv(table),
                to_value(args),
                None,
                Value::Null,
                started,
            )
        }
        Command::Exponent(args) => {
            let table = exponent_table(args)?;
            emit(
                out_dir,
                "exponent",
                Output::Csv(table),
                to_value(args),
                None,
                Value::Null,
                started,
            )
        }
        Command::Layers(args) => {
            let value = layers_json(args)?;
            emit(
                out_dir,
                "layers",
                Output::Json(value),
                to_value(args),
                None,
                Value::Null,
                started,
            )
        }
        Command::Simulate(args) => {
            let file = match &args.config {
                Some(path) => load_simulate_file(path)?,
                None => SimulateFile::default(),
            };
            let settings = resolve_simulate(args, &file)?;
            let sc = simulate_config(&settings)?;
            let report = run_sim(&sc).map_err(usage)?;
            if let Some(slope) = report.fitted_exponent {
                eprintln!("fitted exponent: {slope:.6}");
            }
            let results = json!({
                "gains": sc.gains,
                "fitted_exponent": report.fitted_exponent,
                "fit_residuals": report.fit_residuals,
            });
            let seed = (sc.oracle == Oracle::Mc).then_some(sc.seed);
            emit(
                out_dir,
                "simulate",
                Output::Csv(report_table(&report)),
                to_value(&settings),
                seed,
                results,
                started,
            )
        }
    }
}

/// Parses `args` and runs; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

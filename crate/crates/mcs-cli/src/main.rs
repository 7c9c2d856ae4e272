//! Command-line front end: runs the spectral computations and emits
//! CSV/JSON/SVG artifacts.
//!
//! Parameters resolve in three layers — command-line flags override the
//! optional JSON config file (`--config`), which overrides the built-in
//! defaults (`n = 2`, unit tunnelings, `N = 16`). All outputs are
//! deterministic: identical parameters produce byte-identical bytes, with
//! LF line endings and shortest round-trip float formatting. Exit codes:
//! `0` success, `2` numerically inconclusive (failed convergence or an
//! undecidable classification), `3` I/O failure.

use std::fs;
use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64 as c64;
use serde::Deserialize;
use serde_json::Value;

use mcs_core::bands::{band_path, classify_with, ClassifyOptions, KPath, Waypoint};
use mcs_core::jordan::{effective_block, jordan_chain};
use mcs_core::operators::ModelConfig;
use mcs_core::spectra::{birman_schwinger_set, dirac_set, BsMode, SpectralSet, GENERIC_K};
use mcs_core::{McsError, Result};

#[derive(Parser)]
#[command(
    name = "mcs",
    version,
    about = "Spectral toolkit for the chiral model of twisted multilayer graphene"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Clone)]
struct Common {
    /// Number of layers
    #[arg(long, global = true)]
    n: Option<usize>,
    /// Interlayer tunnelings, comma-separated (n−1 values)
    #[arg(long, value_delimiter = ',', global = true)]
    t: Option<Vec<f64>>,
    /// Coupling α as `re` or `re,im`
    #[arg(long, global = true)]
    alpha: Option<String>,
    /// Lattice truncation radius N
    #[arg(long, global = true)]
    trunc: Option<u32>,
    /// Output file (stdout when omitted)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Output format (commands other than `bands` emit JSON only)
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// JSON parameter file; flags override its entries
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Assert that the run involves no randomness (always true; accepted
    /// for interface compatibility)
    #[arg(long, global = true)]
    seedless: bool,
}

#[derive(Subcommand)]
enum Command {
    /// First couplings of the flat-band set, with convergence deltas
    Magic(MagicArgs),
    /// First couplings of the degenerate set, with the twist-angle
    /// prediction derived from the flat-band set
    DiracSet(DiracSetArgs),
    /// Band values along a momentum path
    Bands(BandsArgs),
    /// Flat/Dirac/generic classification of the coupling
    Classify(ClassifyArgs),
    /// Jordan chain data at the pinned momentum
    Chain(ChainArgs),
    /// Effective 2×2 Hamiltonian blocks near the pinned momentum
    Effective(EffectiveArgs),
}

#[derive(Args)]
struct MagicArgs {
    /// How many values to print
    #[arg(long)]
    count: Option<usize>,
    /// Exit 2 when any printed value moved more than this since the
    /// coarser companion truncation
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Args)]
struct DiracSetArgs {
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    /// Reference first magic twist angle θ_A in degrees
    #[arg(long)]
    theta_a: Option<f64>,
}

#[derive(Args)]
struct BandsArgs {
    /// Comma list of waypoints: preset names (K, K', Gamma/G, M) or
    /// explicit momenta `re+im` pairs written as `re:im`
    #[arg(long, value_delimiter = ',')]
    path: Option<Vec<String>>,
    /// Samples per path segment
    #[arg(long)]
    samples: Option<usize>,
    /// Number of bands per row
    #[arg(long)]
    bands: Option<usize>,
}

#[derive(Args)]
struct ClassifyArgs {
    #[arg(long)]
    flat_tol: Option<f64>,
    #[arg(long)]
    flat_grid: Option<usize>,
    #[arg(long)]
    fit_tol: Option<f64>,
    #[arg(long)]
    dirac_tol: Option<f64>,
}

#[derive(Args)]
struct ChainArgs {
    /// Directory for raw chain-vector dumps (binary + JSON sidecar)
    #[arg(long)]
    dump_vectors: Option<PathBuf>,
}

#[derive(Args)]
struct EffectiveArgs {
    /// Momentum displacement from the pinned point, `re` or `re,im`
    #[arg(long)]
    k: Option<String>,
}

#[derive(ValueEnum, Clone, Copy, PartialEq, Debug)]
enum Format {
    Csv,
    Json,
    Svg,
}

/// Optional JSON parameter file. Every key matches the flag of the same
/// name; unknown keys are rejected.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    n: Option<usize>,
    t: Option<Vec<f64>>,
    alpha: Option<Value>,
    trunc: Option<u32>,
    out: Option<PathBuf>,
    format: Option<String>,
    count: Option<usize>,
    tol: Option<f64>,
    theta_a: Option<f64>,
    path: Option<Vec<String>>,
    samples: Option<usize>,
    bands: Option<usize>,
    flat_tol: Option<f64>,
    flat_grid: Option<usize>,
    fit_tol: Option<f64>,
    dirac_tol: Option<f64>,
    k: Option<Value>,
    dump_vectors: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    }
}

fn exit_code_for(e: &McsError) -> ExitCode {
    match e {
        McsError::Io(_) | McsError::Json(_) => ExitCode::from(3),
        McsError::Inconclusive(_)
        | McsError::KernelAmbiguous(_)
        | McsError::ContourCollision(_)
        | McsError::WindowTooCoarse(_)
        | McsError::BandNotPinned { .. }
        | McsError::ChainBreak { .. }
        | McsError::TruncationFailure(_) => ExitCode::from(2),
        _ => ExitCode::FAILURE,
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    if let Ok(s) = std::env::var("MCS_THREADS") {
        let workers: usize = s.trim().parse().map_err(|_| {
            McsError::Config(format!("MCS_THREADS must be a positive integer, got {s:?}"))
        })?;
        // Ignore the error from a pool that is already initialized.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global();
    }
    let file = load_file(&cli.common.config)?;
    let p = Params::resolve(&cli.common, file)?;
    match &cli.command {
        Command::Magic(args) => cmd_magic(&p, args),
        Command::DiracSet(args) => cmd_dirac_set(&p, args),
        Command::Bands(args) => cmd_bands(&p, args),
        Command::Classify(args) => cmd_classify(&p, args),
        Command::Chain(args) => cmd_chain(&p, args),
        Command::Effective(args) => cmd_effective(&p, args),
    }
}

fn load_file(path: &Option<PathBuf>) -> Result<FileConfig> {
    match path {
        None => Ok(FileConfig::default()),
        Some(p) => {
            let text = fs::read_to_string(p)?;
            serde_json::from_str(&text)
                .map_err(|e| McsError::Config(format!("config file {}: {e}", p.display())))
        }
    }
}

/// Flags merged over the config file merged over defaults.
struct Params {
    model: ModelConfig,
    out: Option<PathBuf>,
    format: Option<Format>,
    file: FileConfig,
}

impl Params {
    fn resolve(common: &Common, file: FileConfig) -> Result<Self> {
        let n = common.n.or(file.n).unwrap_or(2);
        let t = common
            .t
            .clone()
            .or_else(|| file.t.clone())
            .unwrap_or_else(|| vec![1.0; n.saturating_sub(1)]);
        let alpha = match (&common.alpha, &file.alpha) {
            (Some(s), _) => parse_complex(s)?,
            (None, Some(v)) => complex_from_value(v)?,
            (None, None) => c64::new(1.0, 0.0),
        };
        let trunc = common.trunc.or(file.trunc).unwrap_or(16);
        let model = ModelConfig::new(n, t, alpha, trunc)?;
        let format = match (common.format, &file.format) {
            (Some(f), _) => Some(f),
            (None, Some(s)) => Some(parse_format(s)?),
            (None, None) => None,
        };
        let out = common.out.clone().or_else(|| file.out.clone());
        Ok(Self {
            model,
            out,
            format,
            file,
        })
    }

    /// Reject formats a command cannot produce.
    fn format_among(&self, allowed: &[Format], default: Format) -> Result<Format> {
        match self.format {
            None => Ok(default),
            Some(f) if allowed.contains(&f) => Ok(f),
            Some(f) => Err(McsError::Config(format!(
                "format {f:?} is not available for this command"
            ))),
        }
    }

    fn emit(&self, text: &str) -> Result<()> {
        match &self.out {
            Some(path) => fs::write(path, text)?,
            None => std::io::stdout().write_all(text.as_bytes())?,
        }
        Ok(())
    }
}

fn parse_complex(s: &str) -> Result<c64> {
    let bad = || McsError::Config(format!("expected `re` or `re,im`, got {s:?}"));
    let mut parts = s.split(',');
    let re: f64 = parts.next().ok_or_else(bad)?.trim().parse().map_err(|_| bad())?;
    let im: f64 = match parts.next() {
        None => 0.0,
        Some(p) => p.trim().parse().map_err(|_| bad())?,
    };
    if parts.next().is_some() {
        return Err(bad());
    }
    Ok(c64::new(re, im))
}

fn complex_from_value(v: &Value) -> Result<c64> {
    let bad = || McsError::Config(format!("expected a number or [re, im], got {v}"));
    match v {
        Value::Number(x) => Ok(c64::new(x.as_f64().ok_or_else(bad)?, 0.0)),
        Value::Array(items) => match items.as_slice() {
            [re] => Ok(c64::new(re.as_f64().ok_or_else(bad)?, 0.0)),
            [re, im] => Ok(c64::new(
                re.as_f64().ok_or_else(bad)?,
                im.as_f64().ok_or_else(bad)?,
            )),
            _ => Err(bad()),
        },
        _ => Err(bad()),
    }
}

fn parse_format(s: &str) -> Result<Format> {
    match s.to_ascii_lowercase().as_str() {
        "csv" => Ok(Format::Csv),
        "json" => Ok(Format::Json),
        "svg" => Ok(Format::Svg),
        other => Err(McsError::Config(format!("unknown format {other:?}"))),
    }
}

fn to_json_line(value: &impl serde::Serialize) -> Result<String> {
    Ok(format!("{}\n", serde_json::to_string_pretty(value)?))
}

// ---------------------------------------------------------------------------
// Spectral-set commands
// ---------------------------------------------------------------------------

/// The flat-band (magic) set at the given truncation.
fn magic_set(trunc: u32) -> Result<SpectralSet> {
    let config = ModelConfig::new(1, Vec::new(), c64::new(1.0, 0.0), trunc)?;
    let basis = config.basis(GENERIC_K)?;
    birman_schwinger_set(&config, &basis, BsMode::A)
}

/// Companion truncation used for convergence deltas.
fn coarser(trunc: u32) -> u32 {
    trunc.saturating_sub(4).max(2)
}

/// Keep the first `count` real values of a set.
fn real_first(mut set: SpectralSet, count: usize) -> SpectralSet {
    set.values.retain(|v| v.is_real());
    set.values.truncate(count);
    set
}

/// Serialize a set plus its convergence deltas; returns the JSON text and
/// whether every delta is within `tol`.
fn render_set(set: &SpectralSet, extra: &[(&str, Value)], tol: f64) -> Result<(String, bool)> {
    let mut value = serde_json::to_value(set)?;
    let obj = value.as_object_mut().expect("set serializes to an object");
    obj.insert("deltas".into(), serde_json::to_value(&set.deltas)?);
    for (key, v) in extra {
        obj.insert((*key).into(), v.clone());
    }
    let converged = set.deltas.iter().all(|&d| d <= tol);
    Ok((format!("{}\n", serde_json::to_string_pretty(&value)?), converged))
}

fn cmd_magic(p: &Params, args: &MagicArgs) -> Result<ExitCode> {
    let count = args.count.or(p.file.count).unwrap_or(6);
    let tol = args.tol.or(p.file.tol).unwrap_or(1e-3);
    p.format_among(&[Format::Json], Format::Json)?;
    let trunc = p.model.trunc;
    let fine = real_first(magic_set(trunc)?, count);
    let coarse = real_first(magic_set(coarser(trunc))?, usize::MAX);
    let set = fine.with_deltas(&coarse);
    let (text, converged) = render_set(&set, &[], tol)?;
    p.emit(&text)?;
    Ok(if converged {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    })
}

fn cmd_dirac_set(p: &Params, args: &DiracSetArgs) -> Result<ExitCode> {
    let count = args.count.or(p.file.count).unwrap_or(6);
    let tol = args.tol.or(p.file.tol).unwrap_or(1e-3);
    let theta_a = args.theta_a.or(p.file.theta_a).unwrap_or(1.1);
    p.format_among(&[Format::Json], Format::Json)?;
    let trunc = p.model.trunc;

    let full = dirac_set(&p.model)?;
    let fine = real_first(full, count);
    let coarse_model = ModelConfig::new(
        p.model.layers,
        p.model.tunnelings.clone(),
        p.model.alpha,
        coarser(trunc),
    )?;
    let coarse = real_first(dirac_set(&coarse_model)?, usize::MAX);
    let set = fine.with_deltas(&coarse);

    // Twist-angle prediction: the degenerate set sits at the angle scaled
    // down from the first magic angle by the ratio of the two sets' first
    // couplings.
    let alpha1 = real_first(magic_set(trunc)?, usize::MAX)
        .real_values()
        .into_iter()
        .find(|&a| a > 0.01);
    let beta1 = set.real_values().into_iter().find(|&b| b > 0.01);
    let prediction = match (alpha1, beta1) {
        (Some(a1), Some(b1)) => serde_json::json!({
            "theta_a_deg": theta_a,
            "alpha1": a1,
            "beta1": b1,
            "ratio": a1 / b1,
            "theta_b_deg": theta_a * a1 / b1,
        }),
        _ => Value::Null,
    };

    let (text, converged) = render_set(&set, &[("prediction", prediction)], tol)?;
    p.emit(&text)?;
    Ok(if converged {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    })
}

// ---------------------------------------------------------------------------
// Band-structure commands
// ---------------------------------------------------------------------------

fn parse_waypoint(name: &str) -> Result<Waypoint> {
    if let Some(w) = Waypoint::preset(name) {
        return Ok(w);
    }
    // Explicit momenta use `re:im` so the comma stays a list separator.
    if let Some((re, im)) = name.split_once(':') {
        if let (Ok(re), Ok(im)) = (re.trim().parse(), im.trim().parse()) {
            return Ok(Waypoint::new(name, c64::new(re, im)));
        }
    }
    Err(McsError::Config(format!(
        "unknown waypoint {name:?}: use K, K', Gamma, M or an explicit `re:im`"
    )))
}

fn cmd_bands(p: &Params, args: &BandsArgs) -> Result<ExitCode> {
    let format = p.format_among(&[Format::Csv, Format::Json, Format::Svg], Format::Csv)?;
    let names = args
        .path
        .clone()
        .or_else(|| p.file.path.clone())
        .unwrap_or_else(|| vec!["Gamma".into(), "K".into(), "M".into(), "K'".into()]);
    let samples = args.samples.or(p.file.samples).unwrap_or(24);
    let bands = args.bands.or(p.file.bands).unwrap_or(4);
    let waypoints = names
        .iter()
        .map(|s| parse_waypoint(s))
        .collect::<Result<Vec<_>>>()?;
    let path = KPath::new(waypoints, samples)?;
    let table = band_path(&p.model, &path, bands)?;
    let text = match format {
        Format::Csv => table.to_csv(),
        Format::Json => to_json_line(&table)?,
        Format::Svg => table.to_svg(640, 480),
    };
    p.emit(&text)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_classify(p: &Params, args: &ClassifyArgs) -> Result<ExitCode> {
    p.format_among(&[Format::Json], Format::Json)?;
    let defaults = ClassifyOptions::default();
    let opts = ClassifyOptions {
        flat_tol: args.flat_tol.or(p.file.flat_tol).unwrap_or(defaults.flat_tol),
        flat_grid: args
            .flat_grid
            .or(p.file.flat_grid)
            .unwrap_or(defaults.flat_grid),
        fit_tol: args.fit_tol.or(p.file.fit_tol).unwrap_or(defaults.fit_tol),
        dirac_tol: args
            .dirac_tol
            .or(p.file.dirac_tol)
            .unwrap_or(defaults.dirac_tol),
    };
    let result = classify_with(&p.model, &opts)?;
    let value = serde_json::json!({
        "class": result.class.label(),
        "order": result.class.order(),
        "fits": serde_json::to_value(&result.fits)?,
        "flat_residual": result.flat_residual,
    });
    p.emit(&format!("{}\n", serde_json::to_string_pretty(&value)?))?;
    Ok(ExitCode::SUCCESS)
}

// ---------------------------------------------------------------------------
// Kernel-structure commands
// ---------------------------------------------------------------------------

fn cmd_chain(p: &Params, args: &ChainArgs) -> Result<ExitCode> {
    p.format_among(&[Format::Json], Format::Json)?;
    let data = jordan_chain(&p.model)?;
    if let Some(dir) = args.dump_vectors.as_ref().or(p.file.dump_vectors.as_ref()) {
        data.dump_vectors(dir)?;
    }
    p.emit(&to_json_line(&data)?)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_effective(p: &Params, args: &EffectiveArgs) -> Result<ExitCode> {
    p.format_among(&[Format::Json], Format::Json)?;
    let k = match (&args.k, &p.file.k) {
        (Some(s), _) => parse_complex(s)?,
        (None, Some(v)) => complex_from_value(v)?,
        (None, None) => c64::new(1e-3, 0.0),
    };
    let blocks = effective_block(&p.model, k)?;
    let value = serde_json::json!({
        "k": [k.re, k.im],
        "blocks": serde_json::to_value(&blocks)?,
    });
    p.emit(&format!("{}\n", serde_json::to_string_pretty(&value)?))?;
    Ok(ExitCode::SUCCESS)
}

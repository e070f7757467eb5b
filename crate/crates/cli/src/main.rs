use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use chrono::{DateTime, Utc};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use lumiprep::cfg::{CfgDocument, TrainingParams};
use lumiprep::convert::OutputFormat;
use lumiprep::dataset::{
    emit_filelists, format_annotations, process_dataset, split_dataset, Manifest, MetaSource, ProcessOptions,
    SplitSpec, CLASSES_FILE, MANIFEST_FILE,
};
use lumiprep::histogram::{stats_report, tabulate, StatsReport};
use lumiprep::select::{mode_for_elevation, selection_for_mode};
use lumiprep::synth::{apply_tint, compensation_report, gen_scene, report_csv_row, SceneSpec, TintSpec, REPORT_CSV_HEADER};
use lumiprep::{
    convert, load_rgb, pooled_histogram, save_gray, save_rgb, stats_of, AcquisitionMeta, ChannelStats, FilterMode,
    Selection,
};

const EXIT_USAGE: u8 = 1;
const EXIT_RUNTIME: u8 = 2;

/// Sun-elevation-aware grayscale preprocessing for aerial RGB imagery.
#[derive(Debug, Parser)]
#[command(name = "lumiprep", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Pooled channel statistics and a before/after mean and std report.
    Stats(StatsArgs),
    /// Pooled histogram table (DN, Npix, Perc, CumNpix, CumPerc).
    Table(TableArgs),
    /// Convert one RGB image to grayscale.
    Convert(ConvertArgs),
    /// Convert a directory of images and annotations into a dataset.
    Batch(BatchArgs),
    /// Label a manifest with train/test splits and write file lists.
    Split(SplitArgs),
    /// Rewrite a darknet .cfg for single-channel input.
    Cfg(CfgArgs),
    /// Generate tinted synthetic scenes and a compensation report.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, ValueEnum)]
enum ModeArg {
    /// Pick the filter from sun elevation (needs metadata).
    Auto,
    Red,
    Blue,
    /// Fixed coefficients 0.3, 0.1, 0.5.
    Default,
}

#[derive(Debug, Args)]
struct MetaArgs {
    /// Sun elevation at acquisition, degrees.
    #[arg(long, allow_negative_numbers = true, conflicts_with = "timestamp")]
    elevation: Option<f64>,
    /// Acquisition time, RFC 3339 (e.g. 2024-06-21T12:00:00Z).
    #[arg(long, requires_all = ["lat", "lon"])]
    timestamp: Option<String>,
    /// Latitude, degrees north.
    #[arg(long, allow_negative_numbers = true, requires = "timestamp")]
    lat: Option<f64>,
    /// Longitude, degrees east.
    #[arg(long, allow_negative_numbers = true, requires = "timestamp")]
    lon: Option<f64>,
}

impl MetaArgs {
    fn meta(&self) -> Result<AcquisitionMeta> {
        let mut meta = AcquisitionMeta { sun_elevation_deg: self.elevation, ..AcquisitionMeta::default() };
        if let Some(ts) = &self.timestamp {
            let t = DateTime::parse_from_rfc3339(ts).with_context(|| format!("invalid --timestamp {ts:?}"))?;
            meta.timestamp_utc = Some(t.with_timezone(&Utc));
            meta.latitude_deg = self.lat;
            meta.longitude_deg = self.lon;
        }
        Ok(meta)
    }

    fn is_empty(&self) -> bool {
        self.elevation.is_none() && self.timestamp.is_none()
    }
}

#[derive(Debug, Args)]
struct StatsArgs {
    image: PathBuf,
    /// Filter used for the processed side of the report.
    #[arg(long, value_enum, default_value = "default")]
    mode: ModeArg,
    #[command(flatten)]
    meta: MetaArgs,
    /// Emit JSON instead of text.
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Args)]
struct TableArgs {
    image: PathBuf,
    /// Emit CSV with all 256 rows.
    #[arg(long)]
    csv: bool,
    /// Print every DN in text mode, including empty ones.
    #[arg(long)]
    all: bool,
}

#[derive(Debug, Args)]
struct ConvertArgs {
    image: PathBuf,
    #[arg(long, value_enum, default_value = "auto")]
    mode: ModeArg,
    #[command(flatten)]
    meta: MetaArgs,
    /// Output image (.pgm or .png).
    #[arg(short, long)]
    output: PathBuf,
    /// Emit the weight report as JSON.
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Pgm,
    Png,
}

#[derive(Debug, Args)]
struct BatchArgs {
    /// Directory of .png/.ppm images with optional .txt annotations and
    /// .json metadata sidecars.
    dir: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
    #[arg(long, value_enum, default_value = "auto")]
    mode: ModeArg,
    /// Metadata applied to every image; sidecar fields take precedence.
    #[command(flatten)]
    meta: MetaArgs,
    #[arg(long, value_enum, default_value = "pgm")]
    format: FormatArg,
    /// Worker threads (capped by LUMIPREP_THREADS).
    #[arg(long)]
    workers: Option<usize>,
    /// Exit nonzero when any image fails.
    #[arg(long)]
    strict: bool,
}

#[derive(Debug, Args)]
struct SplitArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Fraction of records assigned to train, in (0, 1).
    #[arg(long, default_value_t = 0.8)]
    fraction: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Split each class separately (class of the first annotation).
    #[arg(long)]
    stratify: bool,
    /// Directory for the labeled manifest and file lists (default: the
    /// manifest's directory).
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CfgArgs {
    file: PathBuf,
    /// Input channel count for the [net] section.
    #[arg(long)]
    channels: Option<u32>,
    /// Apply the single-channel training schedule (lr 0.001, momentum 0.9,
    /// max_batches 2500, steps 2000,2250, batch 64, subdivisions 16).
    #[arg(long)]
    paper_preset: bool,
    /// Output file (default: stdout).
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, ValueEnum)]
enum SynthMode {
    Red,
    Blue,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Seed of the first scene; scene i uses seed + i.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 10)]
    count: u64,
    /// Per-channel multiplicative tint FR,FG,FB.
    #[arg(long, default_value = "0.9,1,1.25")]
    tint: String,
    /// Filter evaluated in the compensation report.
    #[arg(long, value_enum, default_value = "red")]
    mode: SynthMode,
    #[arg(long, default_value_t = 64)]
    width: u32,
    #[arg(long, default_value_t = 64)]
    height: u32,
    /// Targets per scene.
    #[arg(long, default_value_t = 3)]
    targets: usize,
    #[arg(short, long)]
    output: PathBuf,
}

/// Failure that maps to the usage exit code.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.is::<Usage>() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::from(EXIT_RUNTIME)
            }
        }
    }
}

fn run(command: Command) -> Result<ExitCode> {
    match command {
        Command::Stats(a) => stats(a),
        Command::Table(a) => table(a),
        Command::Convert(a) => convert_one(a),
        Command::Batch(a) => batch(a),
        Command::Split(a) => split(a),
        Command::Cfg(a) => cfg(a),
        Command::Synth(a) => synth(a),
    }?;
    Ok(ExitCode::SUCCESS)
}

/// Filter for a single image given the mode flag and metadata.
fn resolve_mode(mode: ModeArg, meta: &MetaArgs) -> Result<(FilterMode, Option<f64>)> {
    match mode {
        ModeArg::Red => Ok((FilterMode::Red, None)),
        ModeArg::Blue => Ok((FilterMode::Blue, None)),
        ModeArg::Default => Ok((FilterMode::Night, None)),
        ModeArg::Auto => {
            if meta.is_empty() {
                return Err(usage("--mode auto needs --elevation or --timestamp/--lat/--lon"));
            }
            let e = meta.meta()?.elevation()?;
            Ok((mode_for_elevation(e), Some(e)))
        }
    }
}

fn forced_mode(mode: ModeArg) -> Option<FilterMode> {
    match mode {
        ModeArg::Auto => None,
        ModeArg::Red => Some(FilterMode::Red),
        ModeArg::Blue => Some(FilterMode::Blue),
        ModeArg::Default => Some(FilterMode::Night),
    }
}

fn selection_json(sel: &Selection, elevation: Option<f64>) -> serde_json::Value {
    json!({
        "mode": sel.mode,
        "elevation_deg": elevation,
        "weights": sel.weights().map(|w| json!({"w_r": w.w_r, "w_g": w.w_g, "w_b": w.w_b})),
        "coefficients": sel.spec.coefficients(),
        "clamped": sel.clamped(),
        "fallback": sel.fallback,
    })
}

fn selection_text(sel: &Selection, elevation: Option<f64>) -> String {
    let mut out = String::new();
    if let Some(e) = elevation {
        out.push_str(&format!("elevation_deg {e:.3}\n"));
    }
    out.push_str(&format!("mode {}\n", sel.mode.name()));
    if let FilterMode::Blend { t } = sel.mode {
        out.push_str(&format!("blend_t {t}\n"));
    }
    let [r, g, b] = sel.spec.coefficients();
    let kind = if sel.weights().is_some() { "weights" } else { "default" };
    out.push_str(&format!("{kind} {r} {g} {b}\n"));
    if sel.clamped() {
        out.push_str("clamped true\n");
    }
    if sel.fallback {
        out.push_str("fallback true\n");
    }
    out
}

fn stats(a: StatsArgs) -> Result<()> {
    let (mode, elevation) = resolve_mode(a.mode, &a.meta)?;
    let img = load_rgb(&a.image)?;
    let s: ChannelStats = stats_of(&pooled_histogram(&img))?;
    let sel = selection_for_mode(mode, &s);
    let label = a.image.file_stem().map_or_else(|| a.image.display().to_string(), |s| s.to_string_lossy().into());
    let report = stats_report(label, &img, &convert(&img, &sel.spec));
    if a.json {
        let out = json!({ "stats": s, "selection": selection_json(&sel, elevation), "report": report });
        println!("{out}");
    } else {
        println!("perc {}\nmean {}\nstd_dev {}", s.perc, s.mean, s.std_dev);
        print!("{}", selection_text(&sel, elevation));
        println!("{}\n{}", StatsReport::HEADER, report.row());
    }
    Ok(())
}

fn table(a: TableArgs) -> Result<()> {
    let img = load_rgb(&a.image)?;
    let t = tabulate(&pooled_histogram(&img))?;
    if a.csv {
        print!("{}", t.to_csv());
    } else {
        print!("{}", t.to_text(!a.all));
    }
    Ok(())
}

fn convert_one(a: ConvertArgs) -> Result<()> {
    let (mode, elevation) = resolve_mode(a.mode, &a.meta)?;
    let img = load_rgb(&a.image)?;
    let s: ChannelStats = stats_of(&pooled_histogram(&img))?;
    let sel = selection_for_mode(mode, &s);
    save_gray(&convert(&img, &sel.spec), &a.output)?;
    if a.json {
        println!("{}", selection_json(&sel, elevation));
    } else {
        print!("{}", selection_text(&sel, elevation));
    }
    Ok(())
}

fn worker_count(requested: Option<usize>) -> usize {
    let available = std::thread::available_parallelism().map_or(1, |n| n.get());
    let cap = std::env::var("LUMIPREP_THREADS").ok().and_then(|v| v.parse::<usize>().ok()).filter(|&n| n > 0);
    let n = requested.unwrap_or(available).max(1);
    cap.map_or(n, |c| n.min(c))
}

fn batch(a: BatchArgs) -> Result<()> {
    if !a.dir.is_dir() {
        bail!("{}: not a directory", a.dir.display());
    }
    let mut source = MetaSource::sidecars();
    source.global = a.meta.meta()?;
    let opts = ProcessOptions {
        format: match a.format {
            FormatArg::Pgm => OutputFormat::Pgm,
            FormatArg::Png => OutputFormat::Png,
        },
        workers: worker_count(a.workers),
        forced_mode: forced_mode(a.mode),
    };
    let manifest = process_dataset(&a.dir, &source, &a.output, &opts)?;
    let ok = manifest.successes().count();
    let failed = manifest.records.len() - ok;
    for r in manifest.records.iter().filter(|r| !r.is_ok()) {
        eprintln!("{}: {}", r.source_path, r.error.as_deref().unwrap_or("failed"));
    }
    eprintln!("{ok} converted, {failed} failed; manifest {}", a.output.join(MANIFEST_FILE).display());
    if a.strict && failed > 0 {
        bail!("{failed} image(s) failed");
    }
    Ok(())
}

fn split(a: SplitArgs) -> Result<()> {
    let spec = SplitSpec::new(a.fraction, a.seed).map_err(|e| usage(e.to_string()))?;
    let spec = if a.stratify { spec.stratified() } else { spec };
    let manifest = Manifest::read(&a.manifest)?;
    let out_dir = match a.output {
        Some(d) => d,
        None => a.manifest.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf),
    };
    fs::create_dir_all(&out_dir).with_context(|| out_dir.display().to_string())?;
    let labeled = split_dataset(&manifest, &spec)?;
    labeled.write(&out_dir.join(MANIFEST_FILE))?;
    let (train, test) = emit_filelists(&labeled, &out_dir)?;
    eprintln!("wrote {} and {}", train.display(), test.display());
    Ok(())
}

fn cfg(a: CfgArgs) -> Result<()> {
    if a.channels.is_none() && !a.paper_preset {
        return Err(usage("nothing to do: pass --channels and/or --paper-preset"));
    }
    let text = fs::read_to_string(&a.file).with_context(|| a.file.display().to_string())?;
    let mut doc = CfgDocument::parse(&text);
    let mut changed = Vec::new();
    let mut warnings = Vec::new();
    if let Some(n) = a.channels {
        let edit = doc.set_channels(n)?;
        changed.extend(edit.changed_lines.iter().copied());
        warnings.extend(edit.warnings);
        doc = edit.doc;
    }
    if a.paper_preset {
        let edit = doc.set_training_params(&TrainingParams::preset())?;
        changed.extend(edit.changed_lines.iter().copied());
        warnings.extend(edit.warnings);
        doc = edit.doc;
    }
    warnings.dedup();
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    changed.sort_unstable();
    changed.dedup();
    for &i in &changed {
        eprintln!("line {}: {}", i + 1, doc.lines()[i].trim_end());
    }
    if changed.is_empty() {
        eprintln!("no changes");
    }
    match a.output {
        Some(out) => fs::write(&out, doc.serialize()).with_context(|| out.display().to_string())?,
        None => print!("{}", doc.serialize()),
    }
    Ok(())
}

fn parse_tint(s: &str) -> Result<TintSpec> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| usage(format!("--tint expects FR,FG,FB, got {s:?}")))?;
    match parts[..] {
        [r, g, b] => TintSpec::new(r, g, b).map_err(|e| usage(e.to_string())),
        _ => Err(usage(format!("--tint expects three factors, got {s:?}"))),
    }
}

fn synth(a: SynthArgs) -> Result<()> {
    let tint = parse_tint(&a.tint)?;
    let (mode, elevation) = match a.mode {
        SynthMode::Red => (FilterMode::Red, 45.0),
        SynthMode::Blue => (FilterMode::Blue, 5.0),
    };
    fs::create_dir_all(&a.output).with_context(|| a.output.display().to_string())?;
    fs::write(a.output.join(CLASSES_FILE), "aircraft\nhelicopter\ntruck\nship\ntent\n")?;
    let mut report = String::from(REPORT_CSV_HEADER);
    report.push('\n');
    for seed in a.seed..a.seed + a.count {
        let scene = gen_scene(&SceneSpec::new(a.width, a.height, seed, a.targets))?;
        let stem = a.output.join(format!("scene_{seed:06}"));
        save_rgb(&apply_tint(&scene.image, &tint), stem.with_extension("png"))?;
        fs::write(stem.with_extension("txt"), format_annotations(&scene.annotations))?;
        fs::write(stem.with_extension("json"), format!("{}\n", json!({ "sun_elevation_deg": elevation })))?;
        report.push_str(&report_csv_row(seed, &compensation_report(&scene.image, &tint, mode)));
        report.push('\n');
    }
    let report_path = a.output.join("report.csv");
    fs::write(&report_path, &report)?;
    eprintln!("{} scenes; report {}", a.count, report_path.display());
    Ok(())
}

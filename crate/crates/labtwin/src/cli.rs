//! `labtwin` command line.
//!
//! Exit codes: 0 success, 1 validation failure or bad arguments, 2 resource
//! or I/O failure.

use std::fmt;
use std::io::Write;
use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use labtwin_core::geom::Aabb;
use labtwin_core::octree::{BuildConfig, BuildError, RootSpacing};
use labtwin_core::scene::validate_scene;
use labtwin_core::sim::KinematicsConfig;
use labtwin_core::subsample::{SubsampleConfig, SubsampleError, Subsampler, DEFAULT_CELL_BUDGET, DEFAULT_SPACING};

use crate::cloud_io::{read_cloud, scan_cloud, try_write_cloud, CloudError, CloudFormat, CloudSummary};
use crate::dataset::{build_octree, source_fingerprint, DatasetError, LodDataset};
use crate::replay::{replay_log, InputLog, ReplayError};
use crate::scene_io::{demo_scene, load_scene, save_scene, SceneError};
use crate::server::{router, serve, AppState, RouterOptions};
use crate::synth::{SynthShape, SynthSpec};
use crate::tour_report::{run_tour, write_report, TourSettings};

#[derive(Debug, Parser)]
#[command(name = "labtwin", version, about = "Point-cloud virtual laboratory pipeline, simulator and server")]
#[command(after_help = "Logging: set LABTWIN_LOG to error, warn, info or debug.")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert a cloud between formats, streaming.
    Convert(ConvertArgs),
    /// Drop points closer than a minimum spacing to an earlier kept point.
    Subsample(SubsampleArgs),
    /// Build an octree LOD dataset directory.
    Build(BuildArgs),
    /// Check a dataset's digest, checksums and optional audits.
    Validate(ValidateArgs),
    /// Play the scene's guided tour and report per-step LOD selection as CSV.
    Tour(TourArgs),
    /// Replay a JSON-lines input log.
    Replay(ReplayArgs),
    /// Serve the dataset, scene and assets over HTTP.
    Serve(ServeArgs),
    /// Generate a synthetic cloud and, optionally, the matching demo scene.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct ConvertArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    /// xyzrgb, las or internal-binary; guessed from the extension if omitted.
    #[arg(long)]
    pub in_format: Option<CloudFormat>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub out_format: Option<CloudFormat>,
}

#[derive(Debug, Args)]
pub struct SubsampleArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub in_format: Option<CloudFormat>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub out_format: Option<CloudFormat>,
    /// Minimum distance between kept points, meters.
    #[arg(long, default_value_t = DEFAULT_SPACING)]
    pub spacing: f64,
    /// Maximum occupied grid cells held in memory.
    #[arg(long, default_value_t = DEFAULT_CELL_BUDGET)]
    pub cell_hash_budget: usize,
}

#[derive(Debug, Args)]
pub struct BuildArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub in_format: Option<CloudFormat>,
    #[arg(long)]
    pub out: PathBuf,
    /// "auto" (root cube diagonal / 250) or meters.
    #[arg(long, default_value = "auto")]
    pub root_spacing: SpacingArg,
    #[arg(long, default_value_t = 20_000)]
    pub leaf_capacity: u32,
    #[arg(long, default_value_t = 12)]
    pub max_level: u8,
    /// Bytes, with optional KiB/MiB/GiB (or K/M/G) suffix.
    #[arg(long, default_value = "1GiB")]
    pub memory_budget: ByteSize,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// Scene to validate against the dataset bounds.
    #[arg(long)]
    pub scene: Option<PathBuf>,
    /// Check the spacing of every stored point pair per node.
    #[arg(long)]
    pub audit_poisson: bool,
    /// Source cloud for the partition audit.
    #[arg(long)]
    pub source: Option<PathBuf>,
    #[arg(long)]
    pub source_format: Option<CloudFormat>,
}

#[derive(Debug, Args)]
pub struct TourArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub scene: PathBuf,
    #[arg(long, default_value_t = 0.1)]
    pub dt: f64,
    #[arg(long, default_value_t = 500_000)]
    pub budget: u64,
    /// Smallest projected node extent, pixels, that is still refined.
    #[arg(long, default_value_t = 0.0)]
    pub min_pixels: f64,
    #[arg(long)]
    pub report: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub scene: PathBuf,
    #[arg(long)]
    pub log: PathBuf,
    /// Fail unless the final state hash equals the one in the log header.
    #[arg(long)]
    pub verify: bool,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub scene: PathBuf,
    /// Asset root for /api/assets (viewer files and hotspot images).
    #[arg(long = "static")]
    pub static_dir: Option<PathBuf>,
    #[arg(long, default_value_t = IpAddr::V4(Ipv4Addr::LOCALHOST))]
    pub bind: IpAddr,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    /// Do not send permissive CORS headers.
    #[arg(long)]
    pub no_cors: bool,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value = "room-with-aisles")]
    pub shape: SynthShape,
    #[arg(long)]
    pub count: u64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub out_format: Option<CloudFormat>,
    /// Also write the demo scene for the room shape here.
    #[arg(long)]
    pub scene_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpacingArg(pub RootSpacing);

impl FromStr for SpacingArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "auto" {
            return Ok(SpacingArg(RootSpacing::Auto));
        }
        match s.parse::<f64>() {
            Ok(v) if v > 0.0 && v.is_finite() => Ok(SpacingArg(RootSpacing::Fixed(v))),
            _ => Err(format!("expected \"auto\" or a positive number of meters, got {s:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ByteSize(pub u64);

impl FromStr for ByteSize {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        let split = t.find(|c: char| !c.is_ascii_digit()).unwrap_or(t.len());
        let (num, unit) = t.split_at(split);
        let n: u64 = num.parse().map_err(|_| format!("invalid byte size {s:?}"))?;
        let mult: u64 = match unit.trim().to_ascii_lowercase().as_str() {
            "" | "b" => 1,
            "k" | "kb" | "kib" => 1 << 10,
            "m" | "mb" | "mib" => 1 << 20,
            "g" | "gb" | "gib" => 1 << 30,
            _ => return Err(format!("invalid byte size unit in {s:?}")),
        };
        n.checked_mul(mult).map(ByteSize).ok_or_else(|| format!("byte size {s:?} overflows"))
    }
}

/// A failed command with its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn validation(message: impl fmt::Display) -> Self {
        CliError { code: 1, message: message.to_string() }
    }

    pub fn resource(message: impl fmt::Display) -> Self {
        CliError { code: 2, message: message.to_string() }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<CloudError> for CliError {
    fn from(e: CloudError) -> Self {
        match e {
            CloudError::Io { .. } => CliError::resource(e),
            _ => CliError::validation(e),
        }
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        match e {
            DatasetError::Io { .. } | DatasetError::Build(BuildError::MemoryBudget { .. }) => CliError::resource(e),
            DatasetError::Input(c) => c.into(),
            _ => CliError::validation(e),
        }
    }
}

impl From<SceneError> for CliError {
    fn from(e: SceneError) -> Self {
        match e {
            SceneError::Io { .. } => CliError::resource(e),
            _ => CliError::validation(e),
        }
    }
}

impl From<ReplayError> for CliError {
    fn from(e: ReplayError) -> Self {
        match e {
            ReplayError::Io { .. } => CliError::resource(e),
            _ => CliError::validation(e),
        }
    }
}

impl From<SubsampleError> for CliError {
    fn from(e: SubsampleError) -> Self {
        match e {
            SubsampleError::BudgetExceeded { .. } => CliError::resource(e),
            _ => CliError::validation(e),
        }
    }
}

/// Error type of the subsample stream: either side may fail.
enum SubsampleFailure {
    Cloud(CloudError),
    Subsample(SubsampleError),
}

impl From<CloudError> for SubsampleFailure {
    fn from(e: CloudError) -> Self {
        SubsampleFailure::Cloud(e)
    }
}

impl From<SubsampleFailure> for CliError {
    fn from(e: SubsampleFailure) -> Self {
        match e {
            SubsampleFailure::Cloud(e) => e.into(),
            SubsampleFailure::Subsample(e) => e.into(),
        }
    }
}

fn format_or_guess(f: Option<CloudFormat>, path: &Path) -> CloudFormat {
    f.unwrap_or_else(|| CloudFormat::from_extension(path))
}

fn describe(summary: &CloudSummary) -> String {
    match summary.bounds {
        Some(b) => format!(
            "count {} bounds [{}, {}, {}] .. [{}, {}, {}]",
            summary.count, b.min.x, b.min.y, b.min.z, b.max.x, b.max.y, b.max.z
        ),
        None => format!("count {} bounds undefined", summary.count),
    }
}

/// Peak resident set size of this process, from `/proc/self/status`.
pub fn peak_rss_bytes() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    let kib: u64 = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kib * 1024)
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::Convert(a) => convert(a, out),
        Command::Subsample(a) => subsample(a, out),
        Command::Build(a) => build(a, out),
        Command::Validate(a) => validate(a, out),
        Command::Tour(a) => tour(a, out),
        Command::Replay(a) => replay(a, out),
        Command::Serve(a) => serve_cmd(a, out),
        Command::Synth(a) => synth(a, out),
    }
}

fn say(out: &mut dyn Write, text: impl fmt::Display) -> Result<(), CliError> {
    writeln!(out, "{text}").map_err(CliError::resource)
}

fn convert(a: ConvertArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let reader = read_cloud(&a.input, format_or_guess(a.in_format, &a.input))?;
    let summary = try_write_cloud::<_, CloudError>(reader, &a.out, format_or_guess(a.out_format, &a.out))?;
    say(out, format!("converted {}", describe(&summary)))
}

fn subsample(a: SubsampleArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let mut sampler = Subsampler::new(SubsampleConfig { spacing: a.spacing, cell_hash_budget: a.cell_hash_budget })?;
    let reader = read_cloud(&a.input, format_or_guess(a.in_format, &a.input))?;
    let kept = reader.filter_map(|p| match p {
        Err(e) => Some(Err(SubsampleFailure::Cloud(e))),
        Ok(p) => match sampler.offer(&p) {
            Ok(true) => Some(Ok(p)),
            Ok(false) => None,
            Err(e) => Some(Err(SubsampleFailure::Subsample(e))),
        },
    });
    let summary = try_write_cloud(kept, &a.out, format_or_guess(a.out_format, &a.out))?;
    say(out, format!("kept {} dropped {} spacing {}", sampler.kept(), sampler.dropped(), a.spacing))?;
    say(out, format!("output {}", describe(&summary)))
}

fn build(a: BuildArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let cfg = BuildConfig {
        root_spacing: a.root_spacing.0,
        max_level: a.max_level,
        leaf_capacity: a.leaf_capacity,
        memory_budget: a.memory_budget.0,
    };
    cfg.validate().map_err(CliError::validation)?;
    let format = format_or_guess(a.in_format, &a.input);
    let started = Instant::now();
    let summary = scan_cloud(&a.input, format)?;
    let bounds: Aabb = summary.bounds.ok_or_else(|| CliError::validation(BuildError::EmptyInput))?;
    log::info!("scanned {} points in {:.2?}", summary.count, started.elapsed());
    let reader = read_cloud(&a.input, format)?;
    let report = build_octree(reader, bounds, &cfg, &a.out, Some(summary.count))?;
    log::info!("built in {:.2?}, {} spill chunks", started.elapsed(), report.spill_chunks);
    say(out, format!("nodes {}", report.node_count))?;
    say(out, format!("depth {}", report.depth))?;
    say(out, format!("total_points {}", report.manifest.total_points))?;
    say(out, format!("hierarchy_digest {}", report.manifest.hierarchy_digest))?;
    if let Some(rss) = peak_rss_bytes() {
        say(out, format!("peak_rss_bytes {rss}"))?;
    }
    Ok(())
}

fn validate(a: ValidateArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let ds = LodDataset::open(&a.dataset)?;
    say(out, format!("PASS digest {}", ds.manifest().hierarchy_digest))?;
    let mut failed = false;
    let corrupt = ds.corrupt_nodes()?;
    if corrupt.is_empty() {
        say(out, format!("PASS checksums {} nodes", ds.entries().len()))?;
    } else {
        failed = true;
        for n in &corrupt {
            say(out, format!("FAIL checksum node {n}"))?;
        }
    }
    if let Some(src) = &a.source {
        let reader = read_cloud(src, format_or_guess(a.source_format, src))?;
        let expected = source_fingerprint(reader, ds.geometry())?;
        let actual = ds.fingerprint()?;
        if expected == actual {
            say(out, format!("PASS partition {} points", actual.count))?;
        } else {
            failed = true;
            say(out, format!("FAIL partition: source {expected:?}, dataset {actual:?}"))?;
        }
    }
    if a.audit_poisson {
        let violations = ds.audit_poisson()?;
        if violations.is_empty() {
            let skipped = ds.manifest().overflow_nodes.len();
            say(out, format!("PASS poisson {} nodes ({skipped} overflow nodes exempt)", ds.entries().len()))?;
        } else {
            failed = true;
            for v in &violations {
                say(out, format!("FAIL poisson node {} spacing {} closest pair {}", v.node, v.spacing, v.distance))?;
            }
        }
    }
    if let Some(path) = &a.scene {
        let scene = load_scene(path)?;
        let bounds = ds.manifest().bounds;
        let report = validate_scene(&scene, Some(&bounds));
        for w in &report.warnings {
            say(out, format!("WARN scene {w}"))?;
        }
        if report.is_valid() {
            say(out, format!("PASS scene {}", path.display()))?;
        } else {
            failed = true;
            for e in &report.errors {
                say(out, format!("FAIL scene {e}"))?;
            }
        }
    }
    if failed {
        Err(CliError::validation("validation failed"))
    } else {
        say(out, "PASS")
    }
}

fn tour(a: TourArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let ds = LodDataset::open(&a.dataset)?;
    let scene = load_scene(&a.scene)?;
    let settings = TourSettings { dt: a.dt, budget: a.budget, min_pixels: a.min_pixels, ..Default::default() };
    let rows = run_tour(&scene, &ds.hierarchy(), &settings).map_err(CliError::validation)?;
    let file = std::fs::File::create(&a.report).map_err(|e| CliError::resource(format!("{}: {e}", a.report.display())))?;
    write_report(&rows, std::io::BufWriter::new(file)).map_err(CliError::resource)?;
    let fetched: u64 = rows.iter().map(|r| r.new_bytes).sum();
    let peak = rows.iter().map(|r| r.points_selected).max().unwrap_or(0);
    say(out, format!("rows {} duration {:.3} s", rows.len(), rows.last().map_or(0.0, |r| r.t)))?;
    say(out, format!("max points_selected {peak} budget {}", a.budget))?;
    say(out, format!("bytes fetched {fetched} of {}", ds.bin_len()))
}

fn replay(a: ReplayArgs, out: &mut dyn Write) -> Result<(), CliError> {
    if let Some(dir) = &a.dataset {
        LodDataset::open(dir)?;
    }
    let scene = load_scene(&a.scene)?;
    let log = InputLog::load(&a.log)?;
    let outcome = replay_log(&log, &scene, &KinematicsConfig::default())?;
    let p = outcome.state.pose.position;
    say(out, format!("frames {}", outcome.frames))?;
    say(out, format!("mode {}", outcome.state.mode.as_str()))?;
    say(out, format!("position [{}, {}, {}]", p.x, p.y, p.z))?;
    say(out, format!("viewed {}", outcome.state.viewed.len()))?;
    if let Some(exit) = outcome.escaped_to() {
        say(out, format!("escaped {exit}"))?;
    }
    say(out, format!("state_hash {}", outcome.hash))?;
    if a.verify {
        if outcome.hash != log.header.final_state_hash {
            return Err(CliError::validation(format!(
                "hash mismatch: log header has {}, replay gives {}",
                log.header.final_state_hash, outcome.hash
            )));
        }
        say(out, "verify PASS")?;
    }
    Ok(())
}

fn serve_cmd(a: ServeArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let state = AppState::load(&a.dataset, &a.scene, a.static_dir.clone())?;
    if let Err(e) = state.dataset() {
        return Err(CliError::validation(format!("refusing to serve: {e}")));
    }
    let app = router(Arc::new(state), RouterOptions { cors: !a.no_cors });
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build().map_err(CliError::resource)?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(SocketAddr::new(a.bind, a.port))
            .await
            .map_err(|e| CliError::resource(format!("bind {}:{}: {e}", a.bind, a.port)))?;
        let addr = listener.local_addr().map_err(CliError::resource)?;
        say(out, format!("listening on http://{addr}"))?;
        out.flush().map_err(CliError::resource)?;
        let shutdown = async {
            let _ = tokio::signal::ctrl_c().await;
        };
        serve(listener, app, shutdown).await.map_err(CliError::resource)
    })
}

fn synth(a: SynthArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let spec = SynthSpec { shape: a.shape, count: a.count, seed: a.seed };
    let summary =
        try_write_cloud::<_, CloudError>(spec.points().map(Ok), &a.out, format_or_guess(a.out_format, &a.out))?;
    say(out, format!("synthesized {} {}", a.shape, describe(&summary)))?;
    if let Some(path) = &a.scene_out {
        save_scene(&demo_scene(), path)?;
        say(out, format!("scene {}", path.display()))?;
    }
    Ok(())
}

/// Parses arguments, runs the command and maps the outcome to an exit code.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    match run(cli, &mut lock) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let _ = lock.flush();
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}

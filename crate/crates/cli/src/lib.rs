//! `speclight` command line driver: synthetic scenes, detection, evaluation
//! and timing.
//!
//! Exit codes: 0 success, 1 data error (unreadable or inconsistent scene
//! content, missing masks), 2 environment error (unwritable output, bad
//! configuration, thread pool setup).

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use speclight_core::detect_multi::AggregationConfig;
use speclight_core::io;
use speclight_core::pipeline::{self, DetectionConfig};
use speclight_core::{
    SingleViewConfig, SingleViewMethod, SpecularMask, ThresholdComparison, ThresholdRange,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_DATA: i32 = 1;
pub const EXIT_ENVIRONMENT: i32 = 2;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Data(#[source] speclight_core::Error),
    #[error("{0}")]
    Environment(#[source] speclight_core::Error),
    #[error("no mask for views with groundtruth: {}", .0.join(", "))]
    MissingMasks(Vec<String>),
    #[error("config: {0}")]
    Config(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Data(_) | Self::MissingMasks(_) => EXIT_DATA,
            Self::Environment(_) | Self::Config(_) => EXIT_ENVIRONMENT,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

fn data(e: speclight_core::Error) -> CliError {
    CliError::Data(e)
}

fn env(e: speclight_core::Error) -> CliError {
    CliError::Environment(e)
}

fn config_err(e: speclight_core::Error) -> CliError {
    CliError::Config(e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "speclight", version, about = "Face-based multi-view specular highlight detection")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a synthetic scene with exact specular groundtruth.
    Synth(SynthArgs),
    /// Detect specular masks for every view of a scene.
    Detect(DetectArgs),
    /// Score predicted masks against the scene's groundtruth.
    Eval(EvalArgs),
    /// Time the detection pipeline.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u32).range(2..))]
    pub cameras: u32,
    /// Square render size in pixels.
    #[arg(long, default_value_t = speclight_core::synth::DEFAULT_RENDER_SIZE, value_parser = clap::value_parser!(u32).range(8..))]
    pub size: u32,
    #[arg(long)]
    pub out: PathBuf,
}

/// Detection parameters; unset flags fall back to the config file, then to defaults.
#[derive(Debug, Args, Default, Clone)]
pub struct DetectionFlags {
    /// TOML file with `[aggregation]`, `[single_view]` and `[metric]` tables.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub phi: Option<f64>,
    #[arg(long)]
    pub trim: Option<f64>,
    #[arg(long)]
    pub majority: Option<f64>,
    #[arg(long)]
    pub sv_high: Option<u8>,
    #[arg(long)]
    pub sv_low: Option<u8>,
    #[arg(long, env = "SPECLIGHT_WORKERS", value_parser = clap::value_parser!(u32).range(1..))]
    pub workers: Option<u32>,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    #[arg(long)]
    pub scene: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub flags: DetectionFlags,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub scene: PathBuf,
    /// Directory holding `Mask_<view>.png`.
    #[arg(long)]
    pub masks: PathBuf,
    /// Where `eval.csv` goes; defaults to the masks directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub threshold_lo: Option<u8>,
    #[arg(long)]
    pub threshold_hi: Option<u8>,
    /// Binarize groundtruth with `>` instead of `>=`.
    #[arg(long)]
    pub strict: bool,
    #[command(flatten)]
    pub flags: DetectionFlags,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub scene: PathBuf,
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u32).range(1..))]
    pub repeats: u32,
    /// Also write the JSON report to this file.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub flags: DetectionFlags,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FileConfig {
    aggregation: FileAggregation,
    single_view: FileSingleView,
    metric: FileMetric,
    workers: Option<u32>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FileAggregation {
    phi: Option<f64>,
    trim_fraction: Option<f64>,
    mask_majority: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FileSingleView {
    method: Option<SingleViewMethod>,
    percentile: Option<f64>,
    high: Option<u8>,
    low: Option<u8>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FileMetric {
    lo: Option<u8>,
    hi: Option<u8>,
    comparison: Option<ThresholdComparison>,
}

/// Fully resolved settings for one invocation.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct RunConfig {
    pub detection: DetectionConfig<f64>,
    pub range: ThresholdRange,
    pub comparison: ThresholdComparison,
    pub workers: Option<u32>,
}

impl RunConfig {
    /// Merges flags over the optional config file over defaults.
    pub fn resolve(
        flags: &DetectionFlags,
        threshold_lo: Option<u8>,
        threshold_hi: Option<u8>,
        strict: bool,
    ) -> CliResult<Self> {
        let file = match &flags.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
                toml::from_str::<FileConfig>(&text)
                    .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
            }
            None => FileConfig::default(),
        };
        let defaults = RunConfig::default();
        let agg = defaults.detection.aggregation;
        let sv = defaults.detection.single_view;
        let aggregation = AggregationConfig {
            phi: flags.phi.or(file.aggregation.phi).unwrap_or(agg.phi),
            trim_fraction: flags
                .trim
                .or(file.aggregation.trim_fraction)
                .unwrap_or(agg.trim_fraction),
            mask_majority: flags
                .majority
                .or(file.aggregation.mask_majority)
                .unwrap_or(agg.mask_majority),
        };
        let single_view = SingleViewConfig {
            method: file.single_view.method.unwrap_or(sv.method),
            percentile: file.single_view.percentile.unwrap_or(sv.percentile),
            high: flags.sv_high.or(file.single_view.high).unwrap_or(sv.high),
            low: flags.sv_low.or(file.single_view.low).unwrap_or(sv.low),
        };
        let detection = DetectionConfig {
            aggregation,
            single_view,
        };
        detection.validate().map_err(config_err)?;
        let range = ThresholdRange::new(
            threshold_lo.or(file.metric.lo).unwrap_or(defaults.range.lo()),
            threshold_hi.or(file.metric.hi).unwrap_or(defaults.range.hi()),
        )
        .map_err(config_err)?;
        let comparison = if strict {
            ThresholdComparison::Above
        } else {
            file.metric.comparison.unwrap_or_default()
        };
        let workers = flags.workers.or(file.workers);
        if workers == Some(0) {
            return Err(CliError::Config("workers must be at least 1".into()));
        }
        Ok(Self {
            detection,
            range,
            comparison,
            workers,
        })
    }

    fn pool(&self) -> CliResult<rayon::ThreadPool> {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(n) = self.workers {
            builder = builder.num_threads(n as usize);
        }
        builder
            .build()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))
    }
}

pub fn cmd_synth(seed: u64, num_cameras: usize, size: u32, out: &Path) -> CliResult<()> {
    fs::create_dir_all(out).map_err(|e| {
        env(speclight_core::Error::Io {
            path: out.to_path_buf(),
            source: e,
        })
    })?;
    // Everything below only fails on writes.
    let scene = speclight_core::synth::build_scene_sized::<f64>(seed, num_cameras, size, size)
        .map_err(config_err)?;
    let renders = {
        use rayon::prelude::*;
        (0..scene.cameras.len())
            .into_par_iter()
            .map(|k| speclight_core::synth::render_direct(&scene, k))
            .collect::<speclight_core::Result<Vec<_>>>()
            .map_err(data)?
    };
    speclight_core::synth::write_scene(&scene, &renders, out).map_err(env)?;
    log::info!(
        "wrote {} views, {} faces to {}",
        scene.cameras.len(),
        scene.mesh.face_count(),
        out.display()
    );
    Ok(())
}

/// Outcome of a detect run, for callers that want more than the files.
#[derive(Clone, Debug, PartialEq)]
pub struct DetectSummary {
    pub views: usize,
    pub surviving_faces: usize,
    pub degenerate: bool,
}

pub fn cmd_detect(scene: &Path, cfg: &RunConfig, out: &Path) -> CliResult<DetectSummary> {
    cfg.pool()?.install(|| {
        let manifest = io::load_scene(scene).map_err(data)?;
        let (mesh, views) = pipeline::load_views::<f64>(&manifest).map_err(data)?;
        if views.len() < 2 {
            log::warn!(
                "{} view(s) in {}: no cross-view evidence, masks equal the single-view labeling",
                views.len(),
                scene.display()
            );
        }
        let det = pipeline::detect(&mesh, &views, &cfg.detection).map_err(data)?;
        pipeline::write_detection(&det, &cfg.detection, out).map_err(env)?;
        Ok(DetectSummary {
            views: det.views.len(),
            surviving_faces: det.verdict.surviving_count(),
            degenerate: det.verdict.degenerate,
        })
    })
}

/// Scores `Mask_<view>.png` files; returns the report after writing `eval.csv`.
pub fn cmd_eval(
    scene: &Path,
    masks: &Path,
    cfg: &RunConfig,
    out: &Path,
) -> CliResult<speclight_core::EvalReport> {
    cfg.pool()?.install(|| {
        let manifest = io::load_scene(scene).map_err(data)?;
        let mut missing = Vec::new();
        let mut predicted: Vec<(String, SpecularMask)> = Vec::new();
        for view in manifest.evaluable_views() {
            let path = masks.join(io::image_file_name("Mask", &view.id));
            if !path.is_file() {
                missing.push(view.id.clone());
                continue;
            }
            predicted.push((view.id.clone(), io::read_mask_png(&path).map_err(data)?));
        }
        if !missing.is_empty() {
            return Err(CliError::MissingMasks(missing));
        }
        let report =
            pipeline::evaluate::<f64>(&manifest, &predicted, cfg.range, cfg.comparison).map_err(data)?;
        fs::create_dir_all(out).map_err(|e| env(io_error(out, e)))?;
        let csv_path = out.join("eval.csv");
        let file = fs::File::create(&csv_path).map_err(|e| env(io_error(&csv_path, e)))?;
        report
            .write_csv(file)
            .map_err(|e| env(io_error(&csv_path, e)))?;
        Ok(report)
    })
}

fn io_error(path: &Path, source: std::io::Error) -> speclight_core::Error {
    speclight_core::Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchReport {
    pub views: usize,
    pub faces: usize,
    pub repeats: u32,
    pub workers: usize,
    /// Wall-clock seconds of each repeat.
    pub samples: Vec<f64>,
    pub median: f64,
    /// `median / views`.
    pub per_view: f64,
}

/// Times detection (rasterization, labeling, cross-view filter) with inputs preloaded.
pub fn cmd_bench(scene: &Path, cfg: &RunConfig, repeats: u32) -> CliResult<BenchReport> {
    let pool = cfg.pool()?;
    let manifest = io::load_scene(scene).map_err(data)?;
    let (mesh, views) = pipeline::load_views::<f64>(&manifest).map_err(data)?;
    if views.is_empty() {
        return Err(data(speclight_core::Error::Empty("scene has no views")));
    }
    let mut samples = Vec::with_capacity(repeats as usize);
    for _ in 0..repeats {
        let start = Instant::now();
        pool.install(|| pipeline::detect(&mesh, &views, &cfg.detection))
            .map_err(data)?;
        samples.push(start.elapsed().as_secs_f64());
    }
    let median = median(&samples);
    Ok(BenchReport {
        views: views.len(),
        faces: mesh.face_count(),
        repeats,
        workers: pool.current_num_threads(),
        per_view: median / views.len() as f64,
        median,
        samples,
    })
}

pub fn median(samples: &[f64]) -> f64 {
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        s[n / 2]
    } else {
        (s[n / 2 - 1] + s[n / 2]) / 2.0
    }
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    match dispatch(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Synth(a) => cmd_synth(a.seed, a.cameras as usize, a.size, &a.out),
        Command::Detect(a) => {
            let cfg = RunConfig::resolve(&a.flags, None, None, false)?;
            let s = cmd_detect(&a.scene, &cfg, &a.out)?;
            println!(
                "{} views, {} surviving faces{}",
                s.views,
                s.surviving_faces,
                if s.degenerate { " (degenerate)" } else { "" }
            );
            Ok(())
        }
        Command::Eval(a) => {
            let cfg = RunConfig::resolve(&a.flags, a.threshold_lo, a.threshold_hi, a.strict)?;
            let out = a.out.clone().unwrap_or_else(|| a.masks.clone());
            let report = cmd_eval(&a.scene, &a.masks, &cfg, &out)?;
            println!("{}", report.summary_line());
            Ok(())
        }
        Command::Bench(a) => {
            let cfg = RunConfig::resolve(&a.flags, None, None, false)?;
            let report = cmd_bench(&a.scene, &cfg, a.repeats)?;
            let json = serde_json::to_string_pretty(&report).expect("plain data");
            if let Some(path) = &a.out {
                fs::write(path, &json).map_err(|e| env(io_error(path, e)))?;
            }
            println!("{json}");
            Ok(())
        }
    }
}

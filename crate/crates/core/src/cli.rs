//! Command-line front end.
//!
//! Every subcommand reads and writes the library's file formats. Failures
//! print one `tilefuse: <kind>: <message>` line on stderr and exit with
//! 2 (bad input or contract), 3 (detector plugin) or 4 (I/O, image, JSON).

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::annotations::AnnotationSet;
use crate::detector::plugin::tile_file_name;
use crate::detector::DetectorSpec;
use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalConfig, Interpolation, DEFAULT_MATCH_IOU};
use crate::fusion::{FragmentConfig, FusedSet, FusionConfig};
use crate::overlay::render_overlay;
use crate::pipeline::{
    detect_all, fuse_all, run_pipeline, sweep_table, DetectionBundle, PipelineConfig, Scene, SweepRow,
};
use crate::poisson::{verify_min_distance, DEFAULT_ATTEMPTS};
use crate::raster::ImageRaster;
use crate::rng::derive_seed;
use crate::synthgen::{list_labeled_tiles, mix_datasets, sample_crops, write_crops, DEFAULT_CROP_SIDE};
use crate::tiling::{extract_tile, plan_tiles_with_points, TilePlan};

#[derive(Debug, Parser)]
#[command(name = "tilefuse", version, about = "Tiled detection for very large images")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Plan Poisson-centered tiles over an image.
    Plan(PlanArgs),
    /// Cut the tiles of a plan out of an image.
    Tile(TileArgs),
    /// Run detectors over a plan and write global-frame detections.
    Detect(DetectArgs),
    /// Fuse detections into one deduplicated set.
    Fuse(FuseArgs),
    /// Score detections against ground truth.
    Eval(EvalArgs),
    /// Cut random labeled crops for retraining.
    Synth(SynthArgs),
    /// Mix original and synthetic tiles at a given ratio.
    Mix(MixArgs),
    /// Plan, tile, detect, fuse and evaluate in one go.
    Pipeline(PipelineArgs),
}

#[derive(Debug, Args)]
pub struct ImageDims {
    /// Image to plan for; its size is read from the file.
    #[arg(long)]
    pub image: Option<PathBuf>,
    #[arg(long, requires = "height", conflicts_with = "image")]
    pub width: Option<u32>,
    #[arg(long, requires = "width", conflicts_with = "image")]
    pub height: Option<u32>,
    /// Identifier mixed into the seed; defaults to the image file stem.
    #[arg(long)]
    pub image_id: Option<String>,
}

#[derive(Debug, Args)]
pub struct PlanArgs {
    #[command(flatten)]
    pub dims: ImageDims,
    #[arg(long, default_value_t = 640)]
    pub side: u32,
    /// Poisson radius; defaults to side / 2.
    #[arg(long)]
    pub r: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_ATTEMPTS)]
    pub k: u32,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, short)]
    pub out: PathBuf,
    /// Also write the Poisson samples as JSON lines.
    #[arg(long)]
    pub emit_points: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TileArgs {
    #[arg(long)]
    pub image: PathBuf,
    #[arg(long)]
    pub plan: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    #[arg(long)]
    pub plan: PathBuf,
    /// JSON array of detector specs.
    #[arg(long)]
    pub detectors: PathBuf,
    /// Directory of tile rasters, as written by `tile` (plugins only).
    #[arg(long, default_value = "tiles")]
    pub tiles: PathBuf,
    /// Ground truth (synthetic detectors only).
    #[arg(long)]
    pub gt: Option<PathBuf>,
    #[arg(long)]
    pub image_id: Option<String>,
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FuseArgs {
    /// Detections written by `detect`.
    #[arg(long)]
    pub dets: PathBuf,
    #[arg(long)]
    pub plan: PathBuf,
    /// Fusion settings (JSON); flags below override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub score_threshold: Option<f64>,
    #[arg(long)]
    pub iou: Option<f64>,
    /// Keep tile-edge fragments instead of dropping them.
    #[arg(long)]
    pub keep_fragments: bool,
    #[arg(long, short)]
    pub out: PathBuf,
    /// Also write YOLO labels.
    #[arg(long)]
    pub yolo: Option<PathBuf>,
    /// Render fused boxes over `--image` into this PNG.
    #[arg(long, requires = "image")]
    pub overlay: Option<PathBuf>,
    #[arg(long)]
    pub image: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub gt: PathBuf,
    /// Fused set or annotation set.
    #[arg(long)]
    pub dets: PathBuf,
    #[arg(long, default_value_t = DEFAULT_MATCH_IOU)]
    pub iou: f64,
    #[arg(long)]
    pub eleven_point: bool,
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub image: PathBuf,
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long, default_value_t = DEFAULT_CROP_SIDE)]
    pub side: u32,
    #[arg(long)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = crate::synthgen::DEFAULT_VISIBILITY)]
    pub visibility: f64,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value = "synth")]
    pub stem: String,
}

#[derive(Debug, Args)]
pub struct MixArgs {
    /// Directory of original `png` + `txt` pairs.
    #[arg(long)]
    pub original: PathBuf,
    #[arg(long)]
    pub synthetic: PathBuf,
    /// Percentage of original tiles in the result.
    #[arg(long)]
    pub ratio: f64,
    /// Manifest size; defaults to the original pool size.
    #[arg(long)]
    pub size: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    /// Pipeline configuration (JSON). Flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub image: Option<PathBuf>,
    #[arg(long)]
    pub gt: Option<PathBuf>,
    /// JSON array of detector specs, replacing the configured ones.
    #[arg(long)]
    pub detectors: Option<PathBuf>,
    #[arg(long)]
    pub side: Option<u32>,
    #[arg(long)]
    pub r: Option<f64>,
    #[arg(long)]
    pub k: Option<u32>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub score_threshold: Option<f64>,
    #[arg(long)]
    pub iou: Option<f64>,
    /// Run tile sides 320, 640 and 1280 and print a comparison table.
    #[arg(long)]
    pub sweep: bool,
    #[arg(long)]
    pub whole_image: bool,
    #[arg(long)]
    pub overlay: bool,
    #[arg(long)]
    pub write_tiles: bool,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn stem_of(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "image".into())
}

fn cmd_plan(a: PlanArgs) -> Result<()> {
    let (w, h, id) = match (&a.dims.image, a.dims.width.zip(a.dims.height)) {
        (Some(p), _) => {
            let r = ImageRaster::read(p)?;
            (r.width(), r.height(), a.dims.image_id.clone().unwrap_or_else(|| stem_of(p)))
        }
        (None, Some((w, h))) => (w, h, a.dims.image_id.clone().unwrap_or_else(|| "image".into())),
        (None, None) => return Err(Error::validation("give --image or --width/--height")),
    };
    let r = a.r.unwrap_or(f64::from(a.side) / 2.0);
    let (plan, points) = plan_tiles_with_points(w, h, a.side, r, a.k, derive_seed(a.seed, &id))?;
    plan.write(&a.out)?;
    if let Some(path) = &a.emit_points {
        debug_assert!(verify_min_distance(&points));
        write_file(path, &points.to_json_lines())?;
    }
    eprintln!(
        "{} tiles ({} poisson, {} fallback), coverage {:.6}",
        plan.tiles.len(),
        plan.poisson_count(),
        plan.fallback_count(),
        plan.coverage_fraction
    );
    Ok(())
}

fn cmd_tile(a: TileArgs) -> Result<()> {
    use rayon::prelude::*;
    let raster = ImageRaster::read(&a.image)?;
    let plan = TilePlan::read(&a.plan)?;
    if (raster.width(), raster.height()) != (plan.image_width, plan.image_height) {
        return Err(Error::validation("image size does not match the plan"));
    }
    std::fs::create_dir_all(&a.out_dir).map_err(|e| Error::io(&a.out_dir, e))?;
    plan.tiles.par_iter().try_for_each(|t| {
        extract_tile(&raster, t).write_png(a.out_dir.join(tile_file_name(t.tile_id)))
    })?;
    eprintln!("wrote {} tiles", plan.tiles.len());
    Ok(())
}

fn cmd_detect(a: DetectArgs) -> Result<()> {
    let plan = TilePlan::read(&a.plan)?;
    let detectors: Vec<DetectorSpec> = read_json(&a.detectors)?;
    for d in &detectors {
        d.validate()?;
    }
    let gt = a.gt.as_ref().map(AnnotationSet::read).transpose()?;
    let image_id = a
        .image_id
        .clone()
        .or_else(|| gt.as_ref().map(|g| g.image_id.clone()))
        .unwrap_or_else(|| "image".into());
    let scene = Scene::new(image_id.clone(), plan.image_width, plan.image_height, None, gt)?;
    let runs = detect_all(&scene, &plan, &detectors, &a.tiles)?;
    let bundle = DetectionBundle {
        image: image_id,
        image_width: plan.image_width,
        image_height: plan.image_height,
        runs,
    };
    bundle.write(&a.out)?;
    let total: usize = bundle.runs.iter().flat_map(|r| &r.sets).map(|s| s.boxes.len()).sum();
    eprintln!("{total} detections from {} detectors", bundle.runs.len());
    Ok(())
}

fn cmd_fuse(a: FuseArgs) -> Result<()> {
    let bundle = DetectionBundle::read(&a.dets)?;
    let plan = TilePlan::read(&a.plan)?;
    let mut cfg: FusionConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => FusionConfig::default(),
    };
    if let Some(t) = a.score_threshold {
        cfg.score_threshold = t;
    }
    if let Some(t) = a.iou {
        cfg.suppression_iou = t;
    }
    let fragments = FragmentConfig {
        enabled: !a.keep_fragments,
        ..FragmentConfig::default()
    };
    let (fused, dropped) = fuse_all(&bundle.runs, &plan, &fragments, &cfg, &bundle.image)?;
    fused.write(&a.out)?;
    if let Some(p) = &a.yolo {
        write_file(p, &fused.to_yolo())?;
    }
    if let (Some(p), Some(img)) = (&a.overlay, &a.image) {
        render_overlay(&ImageRaster::read(img)?, &fused.bboxes(), 2).write_png(p)?;
    }
    eprintln!("{} fused boxes ({dropped} edge fragments dropped)", fused.boxes.len());
    Ok(())
}

/// A fused set, or an annotation set used as detections.
fn read_detections(path: &Path) -> Result<Vec<crate::geometry::BBox>> {
    let value: serde_json::Value = read_json(path)?;
    if value.get("image_id").is_some() {
        let set: AnnotationSet =
            serde_json::from_value(value).map_err(|e| Error::json(path.display().to_string(), e))?;
        Ok(set.boxes)
    } else {
        let set: FusedSet =
            serde_json::from_value(value).map_err(|e| Error::json(path.display().to_string(), e))?;
        Ok(set.bboxes())
    }
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    if !(0.0..=1.0).contains(&a.iou) {
        return Err(Error::validation(format!("--iou {} outside [0, 1]", a.iou)));
    }
    let gt = AnnotationSet::read(&a.gt)?.clipped();
    let dets = read_detections(&a.dets)?;
    let cfg = EvalConfig {
        iou_threshold: a.iou,
        interpolation: if a.eleven_point {
            Interpolation::ElevenPoint
        } else {
            Interpolation::AllPoint
        },
    };
    let report = evaluate(&dets, &gt, &cfg);
    if let Some(p) = &a.out {
        write_file(p, &(report.to_json() + "\n"))?;
    }
    print!("{report}");
    Ok(())
}

fn cmd_synth(a: SynthArgs) -> Result<()> {
    let raster = ImageRaster::read(&a.image)?;
    let gt = AnnotationSet::read(&a.gt)?;
    let crops = sample_crops(&raster, &gt, a.side, a.count, a.seed, a.visibility)?;
    let tiles = write_crops(&crops, &a.out_dir, &a.stem)?;
    eprintln!("wrote {} labeled crops to {}", tiles.len(), a.out_dir.display());
    Ok(())
}

fn cmd_mix(a: MixArgs) -> Result<()> {
    let original = list_labeled_tiles(&a.original)?;
    let synthetic = list_labeled_tiles(&a.synthetic)?;
    let manifest = mix_datasets(&original, &synthetic, a.ratio, a.size, a.seed)?;
    write_file(&a.out, &manifest.to_json_lines())?;
    eprintln!(
        "{} entries: {} original, {} synthetic",
        manifest.len(),
        manifest.original_count,
        manifest.synthetic_count
    );
    Ok(())
}

fn cmd_pipeline(a: PipelineArgs) -> Result<()> {
    let mut cfg = match &a.config {
        Some(p) => PipelineConfig::read(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(p) = a.detectors {
        cfg.detectors = read_json(&p)?;
    }
    if let Some(v) = a.side {
        cfg.side = v;
    }
    if let Some(v) = a.k {
        cfg.k = v;
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    if let Some(v) = a.image {
        cfg.image = Some(v);
    }
    if let Some(v) = a.gt {
        cfg.gt = Some(v);
    }
    if let Some(v) = a.r {
        cfg.r = Some(v);
    }
    if let Some(v) = a.workers {
        cfg.workers = Some(v);
    }
    if let Some(v) = a.out_dir {
        cfg.output_dir = v;
    }
    if let Some(v) = a.score_threshold {
        cfg.fusion.score_threshold = v;
    }
    if let Some(v) = a.iou {
        cfg.fusion.suppression_iou = v;
    }
    cfg.sweep |= a.sweep;
    cfg.whole_image |= a.whole_image;
    cfg.overlay |= a.overlay;
    cfg.write_tiles |= a.write_tiles;

    let runs = run_pipeline(&cfg)?;
    if cfg.sweep {
        let rows: Vec<SweepRow> = runs.iter().map(SweepRow::from_run).collect();
        print!("{}", sweep_table(&rows));
    } else if let Some(run) = runs.first() {
        let s = &run.summary;
        println!(
            "{}: {} tiles, {} raw detections, {} fragments dropped, {} fused",
            s.image, s.tiles, s.detections_before_fusion, s.fragments_suppressed, s.fused_boxes
        );
        if let Some(report) = &run.report {
            print!("{report}");
        }
    }
    Ok(())
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Plan(a) => cmd_plan(a),
        Command::Tile(a) => cmd_tile(a),
        Command::Detect(a) => cmd_detect(a),
        Command::Fuse(a) => cmd_fuse(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Mix(a) => cmd_mix(a),
        Command::Pipeline(a) => cmd_pipeline(a),
    }
}

fn kind(e: &Error) -> &'static str {
    match e {
        Error::Validation(_) => "validation",
        Error::Contract(_) => "contract",
        Error::PluginFailed { .. } => "plugin",
        Error::Protocol { .. } => "protocol",
        Error::Io { .. } => "io",
        Error::Image { .. } => "image",
        Error::Json { .. } => "json",
    }
}

/// Parse `args`, run, and return the process exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("tilefuse: {}: {e}", kind(&e));
            e.exit_code()
        }
    }
}

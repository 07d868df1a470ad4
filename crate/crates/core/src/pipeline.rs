//! Plan, tile, detect, fuse and evaluate one image end to end.
//!
//! Outputs written per run (under `output_dir`, or `output_dir/side_<N>` in
//! sweep mode):
//!
//! | file           | contents                                         |
//! |----------------|--------------------------------------------------|
//! | `plan.json`    | the tile plan                                    |
//! | `fused.json`   | fused detections with source counts              |
//! | `fused.txt`    | the same boxes as YOLO labels                    |
//! | `report.json`  | evaluation report (only with ground truth)       |
//! | `report.txt`   | human-readable report                            |
//! | `summary.json` | tile and detection counts per stage              |
//! | `timings.json` | wall-clock milliseconds per stage                |
//! | `overlay.png`  | fused boxes drawn over the image (on request)    |
//!
//! Everything except `timings.json` is a pure function of the inputs and
//! the seed, whatever the worker count.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::annotations::AnnotationSet;
use crate::detector::plugin::{requests_for, run_plugin, tile_file_name};
use crate::detector::{synthetic_detect, DetectionSet, DetectorKind, DetectorSpec};
use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalConfig, EvalReport};
use crate::fusion::{ensemble_merge, suppress_edge_fragments, FragmentConfig, FusedSet, FusionConfig};
use crate::overlay::render_overlay;
use crate::poisson::DEFAULT_ATTEMPTS;
use crate::raster::ImageRaster;
use crate::rng::{derive_seed, derive_seed_u64};
use crate::tiling::{extract_tile, plan_tiles, TilePlan};

pub const DEFAULT_SIDE: u32 = 640;
pub const SWEEP_SIDES: [u32; 3] = [320, 640, 1280];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// PNG or TIFF input. May be omitted when every detector is synthetic
    /// and `width`/`height` or a ground-truth file give the dimensions.
    pub image: Option<PathBuf>,
    /// Defaults to the image (or ground-truth) file stem.
    pub image_id: Option<String>,
    pub width: Option<u32>,
    pub height: Option<u32>,
    /// Ground-truth annotation set (JSON).
    pub gt: Option<PathBuf>,
    pub side: u32,
    /// Use one tile spanning the whole image instead of `side`.
    pub whole_image: bool,
    /// Poisson radius; defaults to `side / 2`.
    pub r: Option<f64>,
    pub k: u32,
    pub seed: u64,
    pub detectors: Vec<DetectorSpec>,
    pub fusion: FusionConfig,
    pub fragments: FragmentConfig,
    pub eval: EvalConfig,
    pub output_dir: PathBuf,
    /// Worker threads; `None` uses one per logical CPU.
    pub workers: Option<usize>,
    /// Write tile rasters even when no plugin needs them.
    pub write_tiles: bool,
    pub overlay: bool,
    /// Run every side in [`SWEEP_SIDES`] and write a comparison table.
    pub sweep: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            image: None,
            image_id: None,
            width: None,
            height: None,
            gt: None,
            side: DEFAULT_SIDE,
            whole_image: false,
            r: None,
            k: DEFAULT_ATTEMPTS,
            seed: 0,
            detectors: Vec::new(),
            fusion: FusionConfig::default(),
            fragments: FragmentConfig::default(),
            eval: EvalConfig::default(),
            output_dir: PathBuf::from("out"),
            workers: None,
            write_tiles: false,
            overlay: false,
            sweep: false,
        }
    }
}

impl PipelineConfig {
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))
    }

    pub fn validate(&self) -> Result<()> {
        if self.side == 0 {
            return Err(Error::validation("tile side must be at least 1"));
        }
        if let Some(r) = self.r {
            if !(r.is_finite() && r > 0.0) {
                return Err(Error::validation(format!("radius must be positive, got {r}")));
            }
        }
        if self.k == 0 {
            return Err(Error::validation("k must be at least 1"));
        }
        if self.workers == Some(0) {
            return Err(Error::validation("workers must be at least 1"));
        }
        if self.detectors.is_empty() {
            return Err(Error::validation("no detectors configured"));
        }
        let mut names: Vec<&str> = self.detectors.iter().map(|d| d.name.as_str()).collect();
        names.sort_unstable();
        if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::validation(format!("duplicate detector name `{}`", w[0])));
        }
        for d in &self.detectors {
            d.validate()?;
        }
        self.fusion.validate()?;
        for p in self.image.iter().chain(&self.gt) {
            if !p.exists() {
                return Err(Error::validation(format!("{} does not exist", p.display())));
            }
        }
        Ok(())
    }

    fn needs_raster(&self) -> bool {
        self.write_tiles || self.overlay || self.detectors.iter().any(DetectorSpec::is_plugin)
    }

    /// Load the image and ground truth named by this config.
    pub fn load_scene(&self) -> Result<Scene> {
        let raster = self.image.as_ref().map(ImageRaster::read).transpose()?;
        let gt = self.gt.as_ref().map(AnnotationSet::read).transpose()?;
        let stem = |p: &PathBuf| p.file_stem().map(|s| s.to_string_lossy().into_owned());
        let image_id = self
            .image_id
            .clone()
            .or_else(|| self.image.as_ref().and_then(stem))
            .or_else(|| gt.as_ref().map(|g| g.image_id.clone()))
            .unwrap_or_else(|| "image".into());
        let (width, height) = match (&raster, &gt, self.width.zip(self.height)) {
            (Some(r), _, _) => (r.width(), r.height()),
            (None, _, Some(dims)) => dims,
            (None, Some(g), None) => (g.image_width, g.image_height),
            (None, None, None) => {
                return Err(Error::validation(
                    "no image, dimensions or ground truth to size the run",
                ))
            }
        };
        Scene::new(image_id, width, height, raster, gt)
    }
}

/// One image: its dimensions plus whatever pixels and ground truth exist.
#[derive(Debug, Clone)]
pub struct Scene {
    pub image_id: String,
    pub width: u32,
    pub height: u32,
    pub raster: Option<ImageRaster>,
    pub gt: Option<AnnotationSet>,
}

impl Scene {
    pub fn new(
        image_id: impl Into<String>,
        width: u32,
        height: u32,
        raster: Option<ImageRaster>,
        gt: Option<AnnotationSet>,
    ) -> Result<Self> {
        if let Some(r) = &raster {
            if (r.width(), r.height()) != (width, height) {
                return Err(Error::validation("raster size differs from the scene size"));
            }
        }
        if let Some(g) = &gt {
            if (g.image_width, g.image_height) != (width, height) {
                return Err(Error::validation(format!(
                    "ground truth is for a {}x{} image, scene is {width}x{height}",
                    g.image_width, g.image_height
                )));
            }
        }
        Ok(Self {
            image_id: image_id.into(),
            width,
            height,
            raster,
            gt: gt.map(|g| g.clipped()),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub image: String,
    pub image_width: u32,
    pub image_height: u32,
    pub side: u32,
    pub r: f64,
    pub k: u32,
    pub seed: u64,
    pub tiles: usize,
    pub poisson_tiles: usize,
    pub fallback_tiles: usize,
    pub tiles_extracted: usize,
    pub plugin_requests: usize,
    pub detections_per_detector: BTreeMap<String, usize>,
    pub detections_before_fusion: usize,
    pub fragments_suppressed: usize,
    pub fused_boxes: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub plan_ms: f64,
    pub tile_ms: f64,
    pub detect_ms: f64,
    pub fuse_ms: f64,
    pub eval_ms: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub plan: TilePlan,
    pub fused: FusedSet,
    pub report: Option<EvalReport>,
    pub summary: RunSummary,
    pub timings: StageTimings,
}

fn millis(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1e3
}

/// Side actually used for `scene` under `cfg`.
pub fn effective_side(cfg: &PipelineConfig, scene: &Scene) -> u32 {
    if cfg.whole_image {
        scene.width.max(scene.height)
    } else {
        cfg.side
    }
}

/// Run all stages on an in-memory scene. `tile_dir` receives tile rasters
/// when plugins or `write_tiles` need them.
pub fn run_scene(scene: &Scene, cfg: &PipelineConfig, tile_dir: &Path) -> Result<RunOutput> {
    let mut timings = StageTimings::default();
    let side = effective_side(cfg, scene);
    let r = cfg.r.unwrap_or(f64::from(side) / 2.0);
    let seed = derive_seed(cfg.seed, &scene.image_id);

    let t = Instant::now();
    let plan = plan_tiles(scene.width, scene.height, side, r, cfg.k, seed)?;
    timings.plan_ms = millis(t);

    let t = Instant::now();
    let plugins = cfg.detectors.iter().any(DetectorSpec::is_plugin);
    let mut tiles_extracted = 0;
    if plugins || cfg.write_tiles {
        let raster = scene.raster.as_ref().ok_or_else(|| {
            Error::validation("plugin detectors and tile output need an input image")
        })?;
        std::fs::create_dir_all(tile_dir).map_err(|e| Error::io(tile_dir, e))?;
        plan.tiles.par_iter().try_for_each(|tile| {
            extract_tile(raster, tile).write_png(tile_dir.join(tile_file_name(tile.tile_id)))
        })?;
        tiles_extracted = plan.tiles.len();
    }
    timings.tile_ms = millis(t);

    let t = Instant::now();
    let per_detector = detect_all(scene, &plan, &cfg.detectors, tile_dir)?;
    timings.detect_ms = millis(t);

    let t = Instant::now();
    let detections_per_detector: BTreeMap<String, usize> = per_detector
        .iter()
        .map(|run| (run.detector.name.clone(), run.sets.iter().map(|s| s.boxes.len()).sum()))
        .collect();
    let detections_before_fusion = detections_per_detector.values().sum();
    let (fused, fragments_suppressed) = fuse_all(
        &per_detector,
        &plan,
        &cfg.fragments,
        &cfg.fusion,
        &scene.image_id,
    )?;
    timings.fuse_ms = millis(t);

    let t = Instant::now();
    let report = scene
        .gt
        .as_ref()
        .map(|gt| evaluate(&fused.bboxes(), gt, &cfg.eval));
    timings.eval_ms = millis(t);

    let summary = RunSummary {
        image: scene.image_id.clone(),
        image_width: scene.width,
        image_height: scene.height,
        side,
        r,
        k: cfg.k,
        seed,
        tiles: plan.tiles.len(),
        poisson_tiles: plan.poisson_count(),
        fallback_tiles: plan.fallback_count(),
        tiles_extracted,
        plugin_requests: plan.tiles.len() * cfg.detectors.iter().filter(|d| d.is_plugin()).count(),
        detections_per_detector,
        detections_before_fusion,
        fragments_suppressed,
        fused_boxes: fused.boxes.len(),
    };
    Ok(RunOutput {
        plan,
        fused,
        report,
        summary,
        timings,
    })
}

/// Global-frame detections of one detector over a plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorRun {
    pub detector: DetectorSpec,
    pub sets: Vec<DetectionSet>,
}

/// Detections of every detector for one image, as written by `detect`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionBundle {
    pub image: String,
    pub image_width: u32,
    pub image_height: u32,
    pub runs: Vec<DetectorRun>,
}

impl DetectionBundle {
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        write_text(path, &pretty(self))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))
    }
}

/// Run every detector over the plan and remap results to image coordinates.
///
/// Plugins read tile rasters from `tile_dir`; synthetic detectors need
/// ground truth in `scene`. Detectors run concurrently.
pub fn detect_all(
    scene: &Scene,
    plan: &TilePlan,
    detectors: &[DetectorSpec],
    tile_dir: &Path,
) -> Result<Vec<DetectorRun>> {
    let requests = requests_for(tile_dir, &plan.tiles);
    detectors
        .par_iter()
        .map(|spec| {
            let local = match &spec.kind {
                DetectorKind::Plugin { .. } => run_plugin(spec, &requests)?,
                DetectorKind::Synthetic { noise_profile } => {
                    let gt = scene.gt.as_ref().ok_or_else(|| {
                        Error::validation(format!(
                            "synthetic detector `{}` needs ground truth",
                            spec.name
                        ))
                    })?;
                    let profile = noise_profile.clone().with_seed(derive_seed_u64(
                        derive_seed(plan.seed, &spec.name),
                        noise_profile.seed,
                    ));
                    plan.tiles
                        .par_iter()
                        .map(|tile| synthetic_detect(gt, tile, &profile, &spec.name))
                        .collect()
                }
            };
            let sets = local
                .iter()
                .map(|set| {
                    set.check_local_bounds(plan.side)?;
                    set.to_global(plan)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(DetectorRun {
                detector: spec.clone(),
                sets,
            })
        })
        .collect()
}

/// Clean up tile-edge fragments, then merge all detectors. Returns the
/// fused set and the number of fragment boxes removed.
pub fn fuse_all(
    runs: &[DetectorRun],
    plan: &TilePlan,
    fragments: &FragmentConfig,
    fusion: &FusionConfig,
    image_id: &str,
) -> Result<(FusedSet, usize)> {
    let flat: Vec<DetectionSet> = runs.iter().flat_map(|r| r.sets.iter().cloned()).collect();
    let (filtered, dropped) = suppress_edge_fragments(&flat, plan, fragments)?;
    let mut rest = filtered.into_iter();
    let per_detector: Vec<(DetectorSpec, Vec<DetectionSet>)> = runs
        .iter()
        .map(|r| (r.detector.clone(), rest.by_ref().take(r.sets.len()).collect()))
        .collect();
    let fused = ensemble_merge(&per_detector, fusion, image_id, plan.image_width, plan.image_height)?;
    Ok((fused, dropped))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn pretty<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("serializes") + "\n"
}

/// Write every artifact of one run into `dir`.
pub fn write_run(out: &RunOutput, scene: &Scene, dir: &Path, overlay: bool) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    out.plan.write(dir.join("plan.json"))?;
    out.fused.write(dir.join("fused.json"))?;
    write_text(&dir.join("fused.txt"), &out.fused.to_yolo())?;
    if let Some(report) = &out.report {
        write_text(&dir.join("report.json"), &(report.to_json() + "\n"))?;
        write_text(&dir.join("report.txt"), &report.to_string())?;
    }
    write_text(&dir.join("summary.json"), &pretty(&out.summary))?;
    write_text(&dir.join("timings.json"), &pretty(&out.timings))?;
    if overlay {
        let base = scene.raster.as_ref().ok_or_else(|| {
            Error::validation("an overlay needs an input image")
        })?;
        render_overlay(base, &out.fused.bboxes(), 2).write_png(dir.join("overlay.png"))?;
    }
    Ok(())
}

/// One row of the tile-size comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub side: u32,
    pub tiles: usize,
    pub detections_before_fusion: usize,
    pub fused_boxes: usize,
    pub accuracy: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub map: Option<f64>,
}

impl SweepRow {
    pub fn from_run(out: &RunOutput) -> Self {
        let c = out.report.as_ref().map(|r| r.counts);
        Self {
            side: out.summary.side,
            tiles: out.summary.tiles,
            detections_before_fusion: out.summary.detections_before_fusion,
            fused_boxes: out.summary.fused_boxes,
            accuracy: c.map(|c| c.accuracy),
            precision: c.map(|c| c.precision),
            recall: c.map(|c| c.recall),
            f1: c.map(|c| c.f1),
            map: out.report.as_ref().and_then(|r| r.map),
        }
    }
}

pub fn sweep_table(rows: &[SweepRow]) -> String {
    let cell = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.3}"));
    let mut out = format!(
        "{:>6} {:>6} {:>8} {:>7} {:>9} {:>9} {:>7} {:>7} {:>7}\n",
        "side", "tiles", "raw", "fused", "accuracy", "precision", "recall", "f1", "mAP"
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{:>6} {:>6} {:>8} {:>7} {:>9} {:>9} {:>7} {:>7} {:>7}",
            r.side,
            r.tiles,
            r.detections_before_fusion,
            r.fused_boxes,
            cell(r.accuracy),
            cell(r.precision),
            cell(r.recall),
            cell(r.f1),
            cell(r.map)
        );
    }
    out
}

fn in_pool<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::validation(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(f))
}

/// Load inputs, run (or sweep) and write all outputs. Returns the runs in side order.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<Vec<RunOutput>> {
    cfg.validate()?;
    let scene = cfg.load_scene()?;
    if cfg.needs_raster() && scene.raster.is_none() {
        return Err(Error::validation("this configuration needs an input image"));
    }
    in_pool(cfg.workers, || {
        if !cfg.sweep {
            let out = run_scene(&scene, cfg, &cfg.output_dir.join("tiles"))?;
            write_run(&out, &scene, &cfg.output_dir, cfg.overlay)?;
            return Ok(vec![out]);
        }
        let mut runs = Vec::with_capacity(SWEEP_SIDES.len());
        for side in SWEEP_SIDES {
            let sub = PipelineConfig {
                side,
                whole_image: false,
                sweep: false,
                ..cfg.clone()
            };
            let dir = cfg.output_dir.join(format!("side_{side}"));
            let out = run_scene(&scene, &sub, &dir.join("tiles"))?;
            write_run(&out, &scene, &dir, cfg.overlay)?;
            runs.push(out);
        }
        let rows: Vec<SweepRow> = runs.iter().map(SweepRow::from_run).collect();
        write_text(&cfg.output_dir.join("sweep.json"), &pretty(&rows))?;
        write_text(&cfg.output_dir.join("sweep.txt"), &sweep_table(&rows))?;
        Ok(runs)
    })?
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detector::NoiseProfile;
    use crate::geometry::BBox;

    fn scene() -> Scene {
        let gt = AnnotationSet::new("s", 1000, 700).with_boxes(vec![
            BBox::gt(10.0, 10.0, 40.0, 40.0, 0).unwrap(),
            BBox::gt(300.0, 310.0, 350.0, 345.0, 1).unwrap(),
            BBox::gt(900.0, 600.0, 950.0, 690.0, 0).unwrap(),
        ]);
        Scene::new("s", 1000, 700, None, Some(gt)).unwrap()
    }

    fn cfg() -> PipelineConfig {
        PipelineConfig {
            side: 320,
            detectors: vec![DetectorSpec::synthetic("exact", NoiseProfile::identity())],
            ..PipelineConfig::default()
        }
    }

    #[test]
    fn identity_detector_recovers_ground_truth() {
        let out = run_scene(&scene(), &cfg(), Path::new("unused")).unwrap();
        let report = out.report.unwrap();
        assert_eq!(report.counts.recall, 1.0);
        assert_eq!(report.counts.precision, 1.0);
        assert_eq!(out.summary.fused_boxes, 3);
        assert_eq!(out.summary.tiles, out.plan.tiles.len());
        assert_eq!(out.summary.tiles_extracted, 0);
        assert!(out.summary.detections_before_fusion >= 3);
    }

    #[test]
    fn whole_image_uses_one_tile() {
        let c = PipelineConfig {
            whole_image: true,
            ..cfg()
        };
        let out = run_scene(&scene(), &c, Path::new("unused")).unwrap();
        assert_eq!(out.plan.tiles.len(), 1);
        assert_eq!(out.summary.side, 1000);
    }

    #[test]
    fn synthetic_without_gt_is_rejected() {
        let s = Scene::new("s", 100, 100, None, None).unwrap();
        assert!(matches!(
            run_scene(&s, &cfg(), Path::new("unused")),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn config_defaults_and_validation() {
        let c: PipelineConfig = serde_json::from_str(
            r#"{"detectors":[{"name":"a","kind":"synthetic","noise_profile":{}}]}"#,
        )
        .unwrap();
        assert_eq!(c.side, 640);
        assert_eq!(c.k, 30);
        assert_eq!(c.fusion.score_threshold, 0.25);
        assert!(c.validate().is_ok());
        let dup = PipelineConfig {
            detectors: vec![c.detectors[0].clone(), c.detectors[0].clone()],
            ..c.clone()
        };
        assert!(dup.validate().is_err());
        assert!(PipelineConfig::default().validate().is_err());
    }

    #[test]
    fn sweep_table_shape() {
        let rows = vec![SweepRow {
            side: 640,
            tiles: 4,
            detections_before_fusion: 9,
            fused_boxes: 3,
            accuracy: Some(1.0),
            precision: Some(1.0),
            recall: Some(1.0),
            f1: Some(1.0),
            map: None,
        }];
        let table = sweep_table(&rows);
        assert_eq!(table.lines().count(), 2);
        assert!(table.lines().nth(1).unwrap().trim_end().ends_with('-'));
    }
}

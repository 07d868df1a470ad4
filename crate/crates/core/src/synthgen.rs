//! Synthetic training tiles and mixed-ratio training manifests.
//!
//! [`sample_crops`] cuts seeded random square crops out of an annotated large
//! image. [`mix_datasets`] combines an original and a synthetic pool at a
//! requested percentage and writes the result as a JSON-lines manifest, one
//! `{"raster", "label", "origin"}` record per tile.

use std::path::{Path, PathBuf};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::annotations::{parse_yolo, to_yolo, AnnotationSet};
pub use crate::detector::DEFAULT_VISIBILITY;
use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::raster::ImageRaster;
use crate::rng::{derive_seed, derive_seed_u64, rng_from_seed};

pub const DEFAULT_CROP_SIDE: u32 = 640;

/// One random crop with its labels in crop-local pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct Crop {
    pub index: usize,
    pub origin_x: u32,
    pub origin_y: u32,
    pub raster: ImageRaster,
    pub labels: AnnotationSet,
}

impl Crop {
    pub fn yolo(&self) -> String {
        to_yolo(&self.labels.boxes, self.labels.image_width, self.labels.image_height)
    }
}

/// Ground-truth boxes that keep at least `visibility` of their area inside
/// the crop, clipped and rebased to the crop's frame.
pub fn crop_labels(gt: &AnnotationSet, origin_x: u32, origin_y: u32, side: u32, visibility: f64) -> Vec<BBox> {
    let (ox, oy) = (f64::from(origin_x), f64::from(origin_y));
    let s = f64::from(side);
    let window = BBox::gt(ox, oy, ox + s, oy + s, 0).expect("crop window is valid");
    gt.boxes
        .iter()
        .filter_map(|b| {
            let visible = b.intersection(&window)?;
            (b.area() > 0.0 && visible.area() / b.area() >= visibility)
                .then(|| visible.translate(-ox, -oy))
        })
        .collect()
}

/// `count` crops of `crop_side` at uniform random origins.
pub fn sample_crops(
    raster: &ImageRaster,
    gt: &AnnotationSet,
    crop_side: u32,
    count: usize,
    seed: u64,
    visibility: f64,
) -> Result<Vec<Crop>> {
    if crop_side == 0 || count == 0 {
        return Err(Error::validation("crop side and count must be at least 1"));
    }
    if raster.width() < crop_side || raster.height() < crop_side {
        return Err(Error::validation(format!(
            "image {}x{} is smaller than the {crop_side}px crop",
            raster.width(),
            raster.height()
        )));
    }
    if !(0.0..=1.0).contains(&visibility) {
        return Err(Error::validation(format!("visibility {visibility} outside [0, 1]")));
    }

    let mut rng = rng_from_seed(derive_seed(seed, &gt.image_id));
    let origins: Vec<(u32, u32)> = (0..count)
        .map(|_| {
            (
                rng.random_range(0..=raster.width() - crop_side),
                rng.random_range(0..=raster.height() - crop_side),
            )
        })
        .collect();

    Ok(origins
        .into_par_iter()
        .enumerate()
        .map(|(index, (x, y))| {
            let mut labels = AnnotationSet::new(
                format!("{}_crop{index:05}", gt.image_id),
                crop_side,
                crop_side,
            );
            labels.classes = gt.classes.clone();
            labels.boxes = crop_labels(gt, x, y, crop_side, visibility);
            Crop {
                index,
                origin_x: x,
                origin_y: y,
                raster: raster.crop_padded(x, y, crop_side, crop_side),
                labels,
            }
        })
        .collect())
}

/// Parameters for [`random_scene`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneSpec {
    pub width: u32,
    pub height: u32,
    pub objects: usize,
    /// Object side lengths are drawn uniformly from `[min_side, max_side]`.
    pub min_side: f64,
    pub max_side: f64,
    pub classes: u32,
}

/// Non-overlapping random ground truth, integer-aligned.
///
/// Placement is retried up to 1000 times per object; fewer objects are
/// returned if the canvas is too crowded.
pub fn random_scene(image_id: &str, spec: &SceneSpec, seed: u64) -> Result<AnnotationSet> {
    if spec.min_side < 1.0 || spec.max_side < spec.min_side || spec.classes == 0 {
        return Err(Error::validation("scene needs 1 <= min_side <= max_side and classes >= 1"));
    }
    if spec.max_side > f64::from(spec.width.min(spec.height)) {
        return Err(Error::validation("objects larger than the canvas"));
    }
    let mut rng = rng_from_seed(derive_seed(seed, image_id));
    let mut boxes: Vec<BBox> = Vec::with_capacity(spec.objects);
    'objects: for _ in 0..spec.objects {
        for _ in 0..1000 {
            let w = rng.random_range(spec.min_side..=spec.max_side).round();
            let h = rng.random_range(spec.min_side..=spec.max_side).round();
            let x = rng.random_range(0.0..=f64::from(spec.width) - w).floor();
            let y = rng.random_range(0.0..=f64::from(spec.height) - h).floor();
            let b = BBox::gt(x, y, x + w, y + h, rng.random_range(0..spec.classes))?;
            if boxes.iter().all(|o| o.intersection_area(&b) == 0.0) {
                boxes.push(b);
                continue 'objects;
            }
        }
        break;
    }
    Ok(AnnotationSet::new(image_id, spec.width, spec.height).with_boxes(boxes))
}

/// Fill each box's pixels with `value` (one entry per band).
pub fn paint_boxes(raster: &mut ImageRaster, boxes: &[BBox], value: &[u8]) {
    for b in boxes {
        let x0 = b.x_min().max(0.0) as u32;
        let y0 = b.y_min().max(0.0) as u32;
        let x1 = (b.x_max().ceil() as u32).min(raster.width());
        let y1 = (b.y_max().ceil() as u32).min(raster.height());
        for y in y0..y1 {
            for x in x0..x1 {
                raster.set_pixel(x, y, value);
            }
        }
    }
}

/// A tile raster on disk and its YOLO label file.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LabeledTile {
    pub raster: PathBuf,
    pub label: PathBuf,
}

/// Write crops as `{stem}_{index:05}.png` / `.txt` pairs under `dir`.
pub fn write_crops(crops: &[Crop], dir: &Path, stem: &str) -> Result<Vec<LabeledTile>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    crops
        .par_iter()
        .map(|c| {
            let raster = dir.join(format!("{stem}_{:05}.png", c.index));
            let label = dir.join(format!("{stem}_{:05}.txt", c.index));
            c.raster.write_png(&raster)?;
            std::fs::write(&label, c.yolo()).map_err(|e| Error::io(&label, e))?;
            Ok(LabeledTile { raster, label })
        })
        .collect()
}

/// Every `*.png` in `dir` that has a sibling `*.txt` label, sorted by path.
pub fn list_labeled_tiles(dir: &Path) -> Result<Vec<LabeledTile>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut tiles = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().is_some_and(|e| e == "png") {
            let label = path.with_extension("txt");
            if label.is_file() {
                tiles.push(LabeledTile { raster: path, label });
            }
        }
    }
    tiles.sort();
    Ok(tiles)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Original,
    Synthetic,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub raster: PathBuf,
    pub label: PathBuf,
    pub origin: Origin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixManifest {
    pub entries: Vec<ManifestEntry>,
    /// Requested share of original tiles, percent.
    pub ratio_original: f64,
    pub original_count: usize,
    pub synthetic_count: usize,
    pub seed: u64,
}

impl MixManifest {
    pub fn ratio_synthetic(&self) -> f64 {
        100.0 - self.ratio_original
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn to_json_lines(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&serde_json::to_string(e).expect("entry serializes"));
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json_lines()).map_err(|e| Error::io(path, e))
    }

    pub fn read_entries(path: impl AsRef<Path>) -> Result<Vec<ManifestEntry>> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str(l).map_err(|e| Error::json(path.display().to_string(), e)))
            .collect()
    }
}

/// Number of original items in a manifest of `target` items.
pub fn original_share(target: usize, ratio_original: f64) -> usize {
    (target as f64 * ratio_original / 100.0).round() as usize
}

/// Draw a shuffled manifest with `ratio_original` percent original tiles.
///
/// `target_size` defaults to the size of the original pool.
pub fn mix_datasets(
    original: &[LabeledTile],
    synthetic: &[LabeledTile],
    ratio_original: f64,
    target_size: Option<usize>,
    seed: u64,
) -> Result<MixManifest> {
    if !(0.0..=100.0).contains(&ratio_original) {
        return Err(Error::validation(format!(
            "original ratio {ratio_original}% outside [0, 100]"
        )));
    }
    let target = target_size.unwrap_or(original.len());
    let n_orig = original_share(target, ratio_original);
    let n_synth = target - n_orig;
    if n_orig > original.len() {
        return Err(Error::validation(format!(
            "need {n_orig} original tiles, only {} available (short by {})",
            original.len(),
            n_orig - original.len()
        )));
    }
    if n_synth > synthetic.len() {
        return Err(Error::validation(format!(
            "need {n_synth} synthetic tiles, only {} available (short by {})",
            synthetic.len(),
            n_synth - synthetic.len()
        )));
    }

    let mut rng = rng_from_seed(derive_seed_u64(seed, ratio_original.to_bits()));
    let mut entries: Vec<ManifestEntry> = Vec::with_capacity(target);
    for (pool, n, origin) in [
        (original, n_orig, Origin::Original),
        (synthetic, n_synth, Origin::Synthetic),
    ] {
        entries.extend(pool.choose_multiple(&mut rng, n).map(|t| ManifestEntry {
            raster: t.raster.clone(),
            label: t.label.clone(),
            origin,
        }));
    }
    entries.shuffle(&mut rng);
    Ok(MixManifest {
        entries,
        ratio_original,
        original_count: n_orig,
        synthetic_count: n_synth,
        seed,
    })
}

/// Parse every label in the manifest and check its boxes fit a `side`² tile.
pub fn check_manifest_labels(entries: &[ManifestEntry], side: u32) -> Result<usize> {
    let mut total = 0;
    for e in entries {
        let text = std::fs::read_to_string(&e.label).map_err(|err| Error::io(&e.label, err))?;
        let boxes = parse_yolo(&text, side, side)?;
        let s = f64::from(side);
        if let Some(b) = boxes
            .iter()
            .find(|b| b.x_min() < 0.0 || b.y_min() < 0.0 || b.x_max() > s || b.y_max() > s)
        {
            return Err(Error::validation(format!(
                "{}: box {:?} outside the tile",
                e.label.display(),
                b.corners()
            )));
        }
        total += boxes.len();
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scene() -> (ImageRaster, AnnotationSet) {
        let raster = ImageRaster::zeros(1000, 800, 1);
        let gt = AnnotationSet::new("scene", 1000, 800).with_boxes(vec![
            BBox::gt(100.0, 100.0, 140.0, 140.0, 0).unwrap(),
            BBox::gt(500.0, 300.0, 560.0, 330.0, 1).unwrap(),
        ]);
        (raster, gt)
    }

    fn pool(prefix: &str, n: usize) -> Vec<LabeledTile> {
        (0..n)
            .map(|i| LabeledTile {
                raster: format!("{prefix}/{i:05}.png").into(),
                label: format!("{prefix}/{i:05}.txt").into(),
            })
            .collect()
    }

    #[test]
    fn contained_box_is_rebased_with_area_preserved() {
        let (_, gt) = scene();
        let labels = crop_labels(&gt, 50, 60, 200, 0.25);
        assert_eq!(labels.len(), 1);
        assert_eq!(labels[0].corners(), [50.0, 40.0, 90.0, 80.0]);
        assert_eq!(labels[0].area(), gt.boxes[0].area());
    }

    #[test]
    fn mostly_hidden_box_is_dropped() {
        // Window starts at x = 136: 4 of the box's 40 columns remain, 10%.
        let (_, gt) = scene();
        assert!(crop_labels(&gt, 136, 0, 200, 0.25).is_empty());
        // With the threshold lowered the sliver survives.
        assert_eq!(crop_labels(&gt, 136, 0, 200, 0.05)[0].corners(), [0.0, 100.0, 4.0, 140.0]);
    }

    #[test]
    fn crops_are_deterministic() {
        let (raster, gt) = scene();
        let a = sample_crops(&raster, &gt, 640, 5, 11, 0.25).unwrap();
        let b = sample_crops(&raster, &gt, 640, 5, 11, 0.25).unwrap();
        assert_eq!(a, b);
        for c in &a {
            assert!(c.origin_x <= 360 && c.origin_y <= 160);
            assert_eq!((c.raster.width(), c.raster.height()), (640, 640));
        }
        let c = sample_crops(&raster, &gt, 640, 5, 12, 0.25).unwrap();
        assert_ne!(
            a.iter().map(|c| (c.origin_x, c.origin_y)).collect::<Vec<_>>(),
            c.iter().map(|c| (c.origin_x, c.origin_y)).collect::<Vec<_>>()
        );
    }

    #[test]
    fn image_smaller_than_crop_rejected() {
        let (raster, gt) = scene();
        assert!(matches!(
            sample_crops(&raster, &gt, 900, 1, 0, 0.25),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn random_scene_is_disjoint_and_sized() {
        let spec = SceneSpec {
            width: 2000,
            height: 1500,
            objects: 200,
            min_side: 20.0,
            max_side: 60.0,
            classes: 3,
        };
        let a = random_scene("r", &spec, 4).unwrap();
        assert_eq!(a, random_scene("r", &spec, 4).unwrap());
        assert_eq!(a.boxes.len(), 200);
        for (i, b) in a.boxes.iter().enumerate() {
            assert!((20.0..=60.0).contains(&b.width()) && (20.0..=60.0).contains(&b.height()));
            assert!(b.x_max() <= 2000.0 && b.y_max() <= 1500.0 && b.class_id() < 3);
            assert!(a.boxes[..i].iter().all(|o| o.intersection_area(b) == 0.0));
        }
    }

    #[test]
    fn painted_boxes_light_their_pixels() {
        let mut r = ImageRaster::zeros(10, 10, 1);
        paint_boxes(&mut r, &[BBox::gt(2.0, 3.0, 4.0, 5.0, 0).unwrap()], &[200]);
        assert_eq!(r.pixel(2, 3), [200]);
        assert_eq!(r.pixel(3, 4), [200]);
        assert_eq!(r.pixel(4, 4), [0]);
        assert_eq!(r.data().iter().filter(|&&v| v > 0).count(), 4);
    }

    #[test]
    fn all_synthetic_mix() {
        let m = mix_datasets(&pool("o", 10), &pool("s", 10), 0.0, None, 3).unwrap();
        assert_eq!(m.len(), 10);
        assert!(m.entries.iter().all(|e| e.origin == Origin::Synthetic));
    }

    #[test]
    fn all_original_mix_needs_no_synthetic() {
        let m = mix_datasets(&pool("o", 10), &[], 100.0, None, 3).unwrap();
        assert_eq!((m.original_count, m.synthetic_count), (10, 0));
    }

    #[test]
    fn sixty_forty_counts_exact() {
        let m = mix_datasets(&pool("o", 600), &pool("s", 400), 60.0, Some(1000), 3).unwrap();
        let orig = m.entries.iter().filter(|e| e.origin == Origin::Original).count();
        assert_eq!((orig, m.len() - orig), (600, 400));
        let mut seen: Vec<_> = m.entries.iter().map(|e| &e.raster).collect();
        seen.sort();
        seen.dedup();
        assert_eq!(seen.len(), 1000);
    }

    #[test]
    fn shortfall_is_named() {
        let err = mix_datasets(&pool("o", 10), &pool("s", 2), 50.0, None, 3).unwrap_err();
        assert!(err.to_string().contains("short by 3"), "{err}");
    }

    #[test]
    fn manifest_lines() {
        let m = mix_datasets(&pool("o", 2), &pool("s", 2), 50.0, None, 3).unwrap();
        let text = m.to_json_lines();
        assert_eq!(text.lines().count(), 2);
        let v: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert!(v["origin"] == "original" || v["origin"] == "synthetic");
        assert!(v["raster"].is_string() && v["label"].is_string());
    }
}

//! Ensemble fusion of tile detections.
//!
//! Detections from every detector and tile are weighted, pooled, thresholded
//! and reduced by greedy non-maximum suppression.
//!
//! # Ranking
//!
//! Candidates are visited in one fixed total order:
//!
//! 1. score, descending;
//! 2. when `eiou_rescoring` is on, *tie centrality*: among boxes of equal
//!    score, the one that would suppress more same-score duplicates of its
//!    partition goes first, and after that the one with the smaller summed
//!    `eiou_loss` to those duplicates. Of several equally confident copies,
//!    the one geometrically central to the group is kept;
//! 3. input index, ascending.
//!
//! # Suppression
//!
//! A kept box removes every lower-ranked box of its partition (same class, or
//! everything when `class_agnostic`) for which the predicate holds: plain
//! `iou > suppression_iou` by default, or `eiou_loss < max_eiou_loss`. The
//! keeper absorbs the removed boxes' source counts. With `fuse_coordinates`
//! the keeper's corners become the score-weighted mean over its cluster.
//!
//! [`eiou_nms`] buckets boxes on a grid keyed by box center so that only
//! nearby pairs are compared; [`reference_nms`] is the plain quadratic loop.
//! Both produce identical output.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::annotations::to_yolo;
use crate::detector::{DetectionSet, DetectorSpec, Frame};
use crate::error::{Error, Result};
use crate::geometry::{eiou_loss, iou, BBox};
use crate::tiling::{Tile, TilePlan};

/// Detection confidence cut applied before suppression.
pub const DEFAULT_SCORE_THRESHOLD: f64 = 0.25;
/// IoU above which a lower-ranked box is suppressed.
pub const DEFAULT_SUPPRESSION_IOU: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SuppressionMetric {
    Iou,
    Eiou,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FusionConfig {
    pub score_threshold: f64,
    pub suppression_iou: f64,
    pub suppression_metric: SuppressionMetric,
    /// Used only with [`SuppressionMetric::Eiou`].
    pub max_eiou_loss: f64,
    pub eiou_rescoring: bool,
    pub fuse_coordinates: bool,
    pub class_agnostic: bool,
    /// Per-detector weight overrides keyed by detector name.
    pub weights: BTreeMap<String, f64>,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            score_threshold: DEFAULT_SCORE_THRESHOLD,
            suppression_iou: DEFAULT_SUPPRESSION_IOU,
            suppression_metric: SuppressionMetric::Iou,
            max_eiou_loss: 0.5,
            eiou_rescoring: true,
            fuse_coordinates: false,
            class_agnostic: false,
            weights: BTreeMap::new(),
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("score_threshold", self.score_threshold),
            ("suppression_iou", self.suppression_iou),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::validation(format!("{name} {v} outside [0, 1]")));
            }
        }
        if !(self.max_eiou_loss.is_finite() && self.max_eiou_loss >= 0.0) {
            return Err(Error::validation("max_eiou_loss must be non-negative"));
        }
        if let Some((name, w)) = self.weights.iter().find(|(_, w)| !(**w > 0.0 && w.is_finite())) {
            return Err(Error::validation(format!(
                "weight for detector `{name}` must be positive, got {w}"
            )));
        }
        Ok(())
    }

    fn suppresses(&self, keeper: &BBox, other: &BBox) -> bool {
        match self.suppression_metric {
            SuppressionMetric::Iou => iou(keeper, other) > self.suppression_iou,
            SuppressionMetric::Eiou => eiou_loss(keeper, other) < self.max_eiou_loss,
        }
    }

    /// Whether every suppressing pair must have overlapping (or identical) boxes.
    fn local_predicate(&self) -> bool {
        match self.suppression_metric {
            SuppressionMetric::Iou => true,
            // eiou >= 1 - iou, so loss < 1 forces a positive IoU.
            SuppressionMetric::Eiou => self.max_eiou_loss <= 1.0,
        }
    }

    fn partition_key(&self, b: &BBox) -> u32 {
        if self.class_agnostic {
            0
        } else {
            b.class_id()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusedBox {
    #[serde(flatten)]
    pub bbox: BBox,
    pub source_count: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusedSet {
    pub image: String,
    pub image_width: u32,
    pub image_height: u32,
    pub boxes: Vec<FusedBox>,
}

impl FusedSet {
    pub fn bboxes(&self) -> Vec<BBox> {
        self.boxes.iter().map(|f| f.bbox).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("fused set serializes")
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json() + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))
    }

    /// YOLO label text normalized by the image size.
    pub fn to_yolo(&self) -> String {
        to_yolo(&self.bboxes(), self.image_width, self.image_height)
    }
}

/// Position of each candidate in the visiting order.
struct Ranking {
    centrality: Vec<Centrality>,
}

impl Ranking {
    fn cmp(&self, boxes: &[BBox], a: usize, b: usize) -> Ordering {
        rank_cmp(boxes, a, b, &self.centrality[a], &self.centrality[b])
    }
}

/// Equal-score duplicates a box would suppress and its summed loss to them.
#[derive(Debug, Clone, Copy, Default)]
struct Centrality {
    support: u32,
    loss: f64,
}

impl Centrality {
    fn add(&mut self, a: &BBox, b: &BBox) {
        self.support += 1;
        self.loss += eiou_loss(a, b);
    }
}

fn rank_cmp(boxes: &[BBox], a: usize, b: usize, ca: &Centrality, cb: &Centrality) -> Ordering {
    boxes[b]
        .score()
        .total_cmp(&boxes[a].score())
        .then_with(|| cb.support.cmp(&ca.support))
        .then_with(|| ca.loss.total_cmp(&cb.loss))
        .then_with(|| a.cmp(&b))
}

/// Kept candidate: its index and the indices it absorbed, in rank order.
struct Cluster {
    keeper: usize,
    members: Vec<usize>,
}

fn finish(boxes: &[BBox], clusters: Vec<Cluster>, ranking: &Ranking, cfg: &FusionConfig) -> Vec<FusedBox> {
    let mut clusters = clusters;
    clusters.sort_by(|a, b| ranking.cmp(boxes, a.keeper, b.keeper));
    clusters
        .into_iter()
        .map(|c| {
            let keeper = boxes[c.keeper];
            let bbox = if cfg.fuse_coordinates {
                weighted_mean(boxes, &c.members).unwrap_or(keeper)
            } else {
                keeper
            };
            FusedBox {
                bbox,
                source_count: c.members.len() as u32,
            }
        })
        .collect()
}

fn weighted_mean(boxes: &[BBox], members: &[usize]) -> Option<BBox> {
    let keeper = boxes[members[0]];
    let mut acc = [0.0; 4];
    let mut total = 0.0;
    for &m in members {
        let b = &boxes[m];
        for (a, c) in acc.iter_mut().zip(b.corners()) {
            *a += b.score() * c;
        }
        total += b.score();
    }
    if total <= 0.0 {
        return None;
    }
    let [x0, y0, x1, y1] = acc.map(|a| a / total);
    BBox::new(x0, y0, x1.max(x0), y1.max(y0), keeper.class_id(), keeper.score()).ok()
}

// ---------------------------------------------------------------------------
// Quadratic reference.

/// Greedy NMS as a plain O(n^2) loop. Same contract and output as [`eiou_nms`].
pub fn reference_nms(boxes: &[BBox], cfg: &FusionConfig) -> Vec<FusedBox> {
    let n = boxes.len();
    let same = |i: usize, j: usize| cfg.partition_key(&boxes[i]) == cfg.partition_key(&boxes[j]);

    let mut centrality = vec![Centrality::default(); n];
    if cfg.eiou_rescoring {
        for i in 0..n {
            for j in 0..n {
                if i != j
                    && same(i, j)
                    && boxes[i].score() == boxes[j].score()
                    && cfg.suppresses(&boxes[i], &boxes[j])
                {
                    centrality[i].add(&boxes[i], &boxes[j]);
                }
            }
        }
    }
    let ranking = Ranking { centrality };
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| ranking.cmp(boxes, a, b));

    let mut removed = vec![false; n];
    let mut clusters = Vec::new();
    for (pos, &i) in order.iter().enumerate() {
        if removed[i] {
            continue;
        }
        let mut members = vec![i];
        for &j in &order[pos + 1..] {
            if !removed[j] && same(i, j) && cfg.suppresses(&boxes[i], &boxes[j]) {
                removed[j] = true;
                members.push(j);
            }
        }
        clusters.push(Cluster { keeper: i, members });
    }
    finish(boxes, clusters, &ranking, cfg)
}

// ---------------------------------------------------------------------------
// Grid-accelerated path.

struct CenterGrid {
    cell_w: f64,
    cell_h: f64,
    cells: HashMap<(i64, i64), Vec<usize>>,
}

impl CenterGrid {
    /// Cells at least as large as the widest / tallest box, so any two boxes
    /// that intersect have centers in adjacent cells.
    fn new(boxes: &[BBox], members: &[usize]) -> Self {
        let mut cell_w: f64 = 0.0;
        let mut cell_h: f64 = 0.0;
        for &i in members {
            cell_w = cell_w.max(boxes[i].width());
            cell_h = cell_h.max(boxes[i].height());
        }
        let cell_w = if cell_w > 0.0 { cell_w } else { 1.0 };
        let cell_h = if cell_h > 0.0 { cell_h } else { 1.0 };
        let mut grid = Self {
            cell_w,
            cell_h,
            cells: HashMap::new(),
        };
        for &i in members {
            let key = grid.key(&boxes[i]);
            grid.cells.entry(key).or_default().push(i);
        }
        grid
    }

    fn key(&self, b: &BBox) -> (i64, i64) {
        let (cx, cy) = b.center();
        ((cx / self.cell_w).floor() as i64, (cy / self.cell_h).floor() as i64)
    }

    /// Candidate indices near `b`, ascending.
    fn near(&self, b: &BBox, out: &mut Vec<usize>) {
        out.clear();
        let (kx, ky) = self.key(b);
        for dy in -1..=1 {
            for dx in -1..=1 {
                if let Some(v) = self.cells.get(&(kx + dx, ky + dy)) {
                    out.extend_from_slice(v);
                }
            }
        }
        out.sort_unstable();
    }
}

fn partitions(boxes: &[BBox], cfg: &FusionConfig) -> Vec<Vec<usize>> {
    let mut parts: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, b) in boxes.iter().enumerate() {
        parts.entry(cfg.partition_key(b)).or_default().push(i);
    }
    parts.into_values().collect()
}

fn nms_partition(boxes: &[BBox], members: &[usize], cfg: &FusionConfig) -> (Vec<(usize, Centrality)>, Vec<Cluster>) {
    let grid = CenterGrid::new(boxes, members);
    let mut near = Vec::new();

    let mut centrality: HashMap<usize, Centrality> = HashMap::with_capacity(members.len());
    for &i in members {
        let mut c = Centrality::default();
        if cfg.eiou_rescoring {
            grid.near(&boxes[i], &mut near);
            for &j in &near {
                if i != j
                    && boxes[i].score() == boxes[j].score()
                    && cfg.suppresses(&boxes[i], &boxes[j])
                {
                    c.add(&boxes[i], &boxes[j]);
                }
            }
        }
        centrality.insert(i, c);
    }

    let cmp = |a: usize, b: usize| rank_cmp(boxes, a, b, &centrality[&a], &centrality[&b]);
    let mut order: Vec<usize> = members.to_vec();
    order.sort_by(|&a, &b| cmp(a, b));
    let rank: HashMap<usize, usize> = order.iter().enumerate().map(|(r, &i)| (i, r)).collect();

    let mut removed: HashMap<usize, bool> = HashMap::with_capacity(members.len());
    let mut clusters = Vec::new();
    for &i in &order {
        if removed.contains_key(&i) {
            continue;
        }
        grid.near(&boxes[i], &mut near);
        let mut absorbed: Vec<usize> = near
            .iter()
            .copied()
            .filter(|&j| {
                rank[&j] > rank[&i] && !removed.contains_key(&j) && cfg.suppresses(&boxes[i], &boxes[j])
            })
            .collect();
        absorbed.sort_by_key(|j| rank[j]);
        for &j in &absorbed {
            removed.insert(j, true);
        }
        let mut members = Vec::with_capacity(absorbed.len() + 1);
        members.push(i);
        members.extend(absorbed);
        clusters.push(Cluster { keeper: i, members });
    }
    let centrality = members.iter().map(|&i| (i, centrality[&i])).collect();
    (centrality, clusters)
}

type PartitionResult = (Vec<(usize, Centrality)>, Vec<Cluster>);

/// Greedy NMS with EIoU tie ranking, grid accelerated and run per class in parallel.
///
/// Scores are expected to be thresholded already. Output is ordered by rank.
pub fn eiou_nms(boxes: &[BBox], cfg: &FusionConfig) -> Vec<FusedBox> {
    if !cfg.local_predicate() {
        return reference_nms(boxes, cfg);
    }
    let parts = partitions(boxes, cfg);
    let results: Vec<PartitionResult> = parts
        .par_iter()
        .map(|members| nms_partition(boxes, members, cfg))
        .collect();

    let mut centrality = vec![Centrality::default(); boxes.len()];
    let mut clusters = Vec::new();
    for (cent, cl) in results {
        for (i, c) in cent {
            centrality[i] = c;
        }
        clusters.extend(cl);
    }
    finish(boxes, clusters, &Ranking { centrality }, cfg)
}

// ---------------------------------------------------------------------------
// Ensemble merge.

/// Weight, pool, threshold and suppress global-frame detections from several detectors.
pub fn ensemble_merge(
    per_detector: &[(DetectorSpec, Vec<DetectionSet>)],
    cfg: &FusionConfig,
    image: &str,
    image_width: u32,
    image_height: u32,
) -> Result<FusedSet> {
    cfg.validate()?;
    let mut pooled = Vec::new();
    for (spec, sets) in per_detector {
        let weight = cfg.weights.get(&spec.name).copied().unwrap_or(spec.weight);
        for set in sets {
            if set.frame != Frame::Global {
                return Err(Error::Contract(format!(
                    "detector `{}` tile {} detections are tile-local; remap them first",
                    set.detector_name, set.tile_id
                )));
            }
            pooled.extend(
                set.boxes
                    .iter()
                    .map(|b| b.with_score(b.score() * weight))
                    .filter(|b| b.score() >= cfg.score_threshold),
            );
        }
    }
    Ok(FusedSet {
        image: image.to_string(),
        image_width,
        image_height,
        boxes: eiou_nms(&pooled, cfg),
    })
}

// ---------------------------------------------------------------------------
// Tile-edge fragments.

/// Settings for cleaning up objects truncated by interior tile edges.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FragmentConfig {
    pub enabled: bool,
    /// Distance in pixels within which a box edge counts as touching a tile edge.
    pub edge_tolerance: f64,
    /// Share of the fragment's area that must lie inside the whole detection.
    pub containment: f64,
    /// Minimum IoU between two cut boxes over the area both tiles see for
    /// them to be stitched into one.
    pub stitch_iou: f64,
}

impl Default for FragmentConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            edge_tolerance: 1.0,
            containment: 0.9,
            stitch_iou: 0.5,
        }
    }
}

fn touches_inner_edge(b: &BBox, tile: &Tile, width: u32, height: u32, tol: f64) -> bool {
    let x0 = f64::from(tile.origin_x);
    let y0 = f64::from(tile.origin_y);
    let x1 = x0 + f64::from(tile.side);
    let y1 = y0 + f64::from(tile.side);
    (tile.origin_x > 0 && b.x_min() - x0 <= tol)
        || (tile.origin_y > 0 && b.y_min() - y0 <= tol)
        || (x1 < f64::from(width) && x1 - b.x_max() <= tol)
        || (y1 < f64::from(height) && y1 - b.y_max() <= tol)
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// Clean up detections cut by an interior tile edge.
///
/// First, a cut box is dropped when a same-class detection from another
/// tile, not itself cut, contains most of it. Then the remaining cut boxes of
/// one detector and class are stitched: two boxes from different tiles join
/// when, restricted to the area both tiles see, they overlap with IoU at
/// least `stitch_iou`. Each stitched group becomes one box spanning the
/// group, with the group's best score, kept in the set of its first member.
///
/// Inputs must be global-frame. Returns the filtered sets and the number of
/// boxes removed.
pub fn suppress_edge_fragments(
    sets: &[DetectionSet],
    plan: &TilePlan,
    cfg: &FragmentConfig,
) -> Result<(Vec<DetectionSet>, usize)> {
    if !cfg.enabled {
        return Ok((sets.to_vec(), 0));
    }
    let tile_of = |id: u32| {
        plan.tile(id)
            .ok_or_else(|| Error::Contract(format!("tile {id} is not part of the plan")))
    };

    // Whole (uncut) detections bucketed by center on a tile-sized grid.
    let cell = f64::from(plan.side.max(1));
    let key = |b: &BBox| {
        let (cx, cy) = b.center();
        ((cx / cell).floor() as i64, (cy / cell).floor() as i64)
    };
    let mut wholes: HashMap<(i64, i64), Vec<(u32, BBox)>> = HashMap::new();
    let mut cut: Vec<Vec<bool>> = Vec::with_capacity(sets.len());
    let mut tiles: Vec<&Tile> = Vec::with_capacity(sets.len());
    for set in sets {
        if set.frame != Frame::Global {
            return Err(Error::Contract(format!(
                "tile {} detections must be global-frame",
                set.tile_id
            )));
        }
        let tile = tile_of(set.tile_id)?;
        let flags: Vec<bool> = set
            .boxes
            .iter()
            .map(|b| touches_inner_edge(b, tile, plan.image_width, plan.image_height, cfg.edge_tolerance))
            .collect();
        for (b, &is_cut) in set.boxes.iter().zip(&flags) {
            if !is_cut {
                wholes.entry(key(b)).or_default().push((set.tile_id, *b));
            }
        }
        cut.push(flags);
        tiles.push(tile);
    }

    let mut removed = 0;
    // Surviving boxes per set, with their cut flag.
    let mut kept: Vec<Vec<(BBox, bool)>> = Vec::with_capacity(sets.len());
    for (set, flags) in sets.iter().zip(&cut) {
        let mut boxes = Vec::with_capacity(set.boxes.len());
        for (b, &is_cut) in set.boxes.iter().zip(flags) {
            if is_cut && b.area() > 0.0 {
                let (kx, ky) = key(b);
                let covered = (-1..=1).any(|dy| {
                    (-1..=1).any(|dx| {
                        wholes.get(&(kx + dx, ky + dy)).is_some_and(|ws| {
                            ws.iter().any(|(tid, w)| {
                                *tid != set.tile_id
                                    && w.class_id() == b.class_id()
                                    && b.intersection_area(w) / b.area() >= cfg.containment
                            })
                        })
                    })
                });
                if covered {
                    removed += 1;
                    continue;
                }
            }
            boxes.push((*b, is_cut));
        }
        kept.push(boxes);
    }

    // Stitch the remaining cut boxes. Candidates must overlap, so bucketing
    // each box into every grid cell it touches finds all pairs.
    let pieces: Vec<(usize, usize)> = kept
        .iter()
        .enumerate()
        .flat_map(|(s, boxes)| {
            boxes
                .iter()
                .enumerate()
                .filter(|(_, (b, is_cut))| *is_cut && b.area() > 0.0)
                .map(move |(i, _)| (s, i))
        })
        .collect();
    let mut cells: BTreeMap<(i64, i64), Vec<usize>> = BTreeMap::new();
    for (p, &(s, i)) in pieces.iter().enumerate() {
        let b = kept[s][i].0;
        let (cx0, cy0) = ((b.x_min() / cell).floor() as i64, (b.y_min() / cell).floor() as i64);
        let (cx1, cy1) = ((b.x_max() / cell).floor() as i64, (b.y_max() / cell).floor() as i64);
        for cy in cy0..=cy1 {
            for cx in cx0..=cx1 {
                cells.entry((cx, cy)).or_default().push(p);
            }
        }
    }
    let mut parent: Vec<usize> = (0..pieces.len()).collect();
    for members in cells.values() {
        for (n, &p) in members.iter().enumerate() {
            for &q in &members[n + 1..] {
                let ((sp, ip), (sq, iq)) = (pieces[p], pieces[q]);
                let (a, b) = (kept[sp][ip].0, kept[sq][iq].0);
                if sets[sp].tile_id == sets[sq].tile_id
                    || sets[sp].detector_name != sets[sq].detector_name
                    || a.class_id() != b.class_id()
                {
                    continue;
                }
                let shared = (a.intersection(&tiles[sq].bounds()), b.intersection(&tiles[sp].bounds()));
                if let (Some(sa), Some(sb)) = shared {
                    if iou(&sa, &sb) >= cfg.stitch_iou {
                        let (rp, rq) = (find(&mut parent, p), find(&mut parent, q));
                        // The lower index roots the group, so it is its first member.
                        parent[rp.max(rq)] = rp.min(rq);
                    }
                }
            }
        }
    }
    let mut stitched: BTreeMap<usize, BBox> = BTreeMap::new();
    let mut absorbed = vec![false; pieces.len()];
    for p in 0..pieces.len() {
        let root = find(&mut parent, p);
        let (s, i) = pieces[p];
        let b = kept[s][i].0;
        if root != p {
            absorbed[p] = true;
            removed += 1;
        }
        stitched
            .entry(root)
            .and_modify(|g| {
                *g = BBox::new(
                    g.x_min().min(b.x_min()),
                    g.y_min().min(b.y_min()),
                    g.x_max().max(b.x_max()),
                    g.y_max().max(b.y_max()),
                    g.class_id(),
                    g.score().max(b.score()),
                )
                .expect("union of valid boxes")
            })
            .or_insert(b);
    }
    let mut drop: Vec<Vec<bool>> = kept.iter().map(|boxes| vec![false; boxes.len()]).collect();
    for (p, &(s, i)) in pieces.iter().enumerate() {
        if let Some(g) = stitched.get(&p) {
            kept[s][i].0 = *g;
        }
        drop[s][i] = absorbed[p];
    }

    let out = sets
        .iter()
        .zip(kept.into_iter().zip(drop))
        .map(|(set, (boxes, drop))| DetectionSet {
            boxes: boxes
                .into_iter()
                .zip(drop)
                .filter(|(_, d)| !d)
                .map(|((b, _), _)| b)
                .collect(),
            ..set.clone()
        })
        .collect();
    Ok((out, removed))
}

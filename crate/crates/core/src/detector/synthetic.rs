//! Seeded synthetic detector.
//!
//! For each ground-truth box overlapping the tile, the visible part is kept
//! when it holds at least `visibility_threshold` of the box's area. The kept
//! part is moved into tile coordinates, then (in this order) dropped with the
//! combined miss probability, corner-jittered and scored. Spurious boxes are
//! added last, their count drawn from a Poisson distribution with mean
//! `spurious_rate`.
//!
//! The random stream is derived from the profile seed and the tile's id and
//! origin, so results do not depend on which other tiles are processed or in
//! what order.

use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use super::{DetectionSet, Frame};
use crate::annotations::AnnotationSet;
use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::rng::{derive_seed_u64, rng_from_seed, StableRng};
use crate::tiling::Tile;

/// Visible share of an object's area needed for it to count as present in a tile.
pub const DEFAULT_VISIBILITY: f64 = 0.25;

/// Confidence scores: `clamp(N(mean, sd), 0, 1)` for true and spurious boxes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreModel {
    pub true_mean: f64,
    pub true_sd: f64,
    pub spurious_mean: f64,
    pub spurious_sd: f64,
}

impl Default for ScoreModel {
    fn default() -> Self {
        Self {
            true_mean: 0.8,
            true_sd: 0.1,
            spurious_mean: 0.3,
            spurious_sd: 0.1,
        }
    }
}

/// Miss probability driven by how small an object appears at the model's
/// input resolution.
///
/// A tile of side `s` is assumed to be resized to `input_size` before
/// inference, so an object of visible area `a` appears with linear size
/// `sqrt(a) * input_size / s`. Below `min_size` it is always missed, at or
/// above `full_size` never (from this cause), linearly in between.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleMiss {
    pub input_size: f64,
    pub min_size: f64,
    pub full_size: f64,
}

impl Default for ScaleMiss {
    fn default() -> Self {
        Self {
            input_size: 640.0,
            min_size: 8.0,
            full_size: 16.0,
        }
    }
}

impl ScaleMiss {
    pub fn miss_probability(&self, visible_area: f64, tile_side: u32) -> f64 {
        let apparent = visible_area.max(0.0).sqrt() * self.input_size / f64::from(tile_side);
        if apparent <= self.min_size {
            1.0
        } else if apparent >= self.full_size {
            0.0
        } else {
            (self.full_size - apparent) / (self.full_size - self.min_size)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseProfile {
    /// Standard deviation of the Gaussian added to each corner coordinate, pixels.
    #[serde(default)]
    pub jitter_sigma: f64,
    /// Probability of dropping a visible ground-truth object.
    #[serde(default)]
    pub miss_rate: f64,
    /// Expected number of false boxes per tile.
    #[serde(default)]
    pub spurious_rate: f64,
    /// `None` scores true boxes 1.0 and spurious boxes 0.3.
    #[serde(default)]
    pub score_model: Option<ScoreModel>,
    #[serde(default)]
    pub scale_miss: Option<ScaleMiss>,
    #[serde(default = "default_visibility")]
    pub visibility_threshold: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_visibility() -> f64 {
    DEFAULT_VISIBILITY
}

impl Default for NoiseProfile {
    fn default() -> Self {
        Self {
            jitter_sigma: 2.0,
            miss_rate: 0.05,
            spurious_rate: 0.5,
            score_model: Some(ScoreModel::default()),
            scale_miss: None,
            visibility_threshold: DEFAULT_VISIBILITY,
            seed: 0,
        }
    }
}

impl NoiseProfile {
    /// No jitter, no misses, no spurious boxes, every true box scored 1.0.
    pub fn identity() -> Self {
        Self {
            jitter_sigma: 0.0,
            miss_rate: 0.0,
            spurious_rate: 0.0,
            score_model: None,
            scale_miss: None,
            visibility_threshold: DEFAULT_VISIBILITY,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.miss_rate) {
            return Err(Error::validation(format!(
                "miss_rate {} outside [0, 1]",
                self.miss_rate
            )));
        }
        if !(self.jitter_sigma >= 0.0 && self.jitter_sigma.is_finite()) {
            return Err(Error::validation("jitter_sigma must be non-negative"));
        }
        if !(self.spurious_rate >= 0.0 && self.spurious_rate.is_finite()) {
            return Err(Error::validation("spurious_rate must be non-negative"));
        }
        if !(0.0..=1.0).contains(&self.visibility_threshold) {
            return Err(Error::validation("visibility_threshold outside [0, 1]"));
        }
        if let Some(m) = &self.score_model {
            if !(m.true_sd >= 0.0 && m.spurious_sd >= 0.0) {
                return Err(Error::validation("score model deviations must be non-negative"));
            }
        }
        if let Some(s) = &self.scale_miss {
            if !(s.input_size > 0.0 && s.min_size >= 0.0 && s.full_size > s.min_size) {
                return Err(Error::validation(
                    "scale_miss needs input_size > 0 and full_size > min_size >= 0",
                ));
            }
        }
        Ok(())
    }
}

fn gaussian(rng: &mut StableRng, mean: f64, sd: f64) -> f64 {
    if sd == 0.0 {
        return mean;
    }
    Normal::new(mean, sd).expect("sd validated").sample(rng)
}

fn tile_stream(profile: &NoiseProfile, tile: &Tile) -> StableRng {
    let placement = (u64::from(tile.origin_x) << 32) | u64::from(tile.origin_y);
    let seed = derive_seed_u64(
        derive_seed_u64(derive_seed_u64(profile.seed, u64::from(tile.tile_id)), placement),
        u64::from(tile.side),
    );
    rng_from_seed(seed)
}

/// Simulate a detector on one tile from the image's ground truth.
///
/// Output is in the tile-local frame. Deterministic in `(gt, tile, profile)`.
pub fn synthetic_detect(
    gt: &AnnotationSet,
    tile: &Tile,
    profile: &NoiseProfile,
    detector_name: &str,
) -> DetectionSet {
    let mut rng = tile_stream(profile, tile);
    let footprint = tile.bounds();
    let ox = f64::from(tile.origin_x);
    let oy = f64::from(tile.origin_y);
    let side = f64::from(tile.side);
    let mut boxes = Vec::new();

    for object in &gt.boxes {
        let Some(visible) = object.intersection(&footprint) else {
            continue;
        };
        if object.area() <= 0.0 || visible.area() / object.area() < profile.visibility_threshold {
            continue;
        }

        let miss_draw: f64 = rng.random();
        let scale_p = profile
            .scale_miss
            .map_or(0.0, |s| s.miss_probability(visible.area(), tile.side));
        let p_miss = 1.0 - (1.0 - profile.miss_rate) * (1.0 - scale_p);
        if miss_draw < p_miss {
            continue;
        }

        let local = visible.translate(-ox, -oy);
        let local = if profile.jitter_sigma > 0.0 {
            let c = local.corners();
            let j: Vec<f64> = c
                .iter()
                .map(|v| (v + gaussian(&mut rng, 0.0, profile.jitter_sigma)).clamp(0.0, side))
                .collect();
            match BBox::new(
                j[0].min(j[2]),
                j[1].min(j[3]),
                j[0].max(j[2]),
                j[1].max(j[3]),
                object.class_id(),
                1.0,
            ) {
                Ok(b) if b.area() > 0.0 => b,
                _ => continue,
            }
        } else {
            local
        };

        let score = match &profile.score_model {
            Some(m) => gaussian(&mut rng, m.true_mean, m.true_sd),
            None => 1.0,
        };
        boxes.push(local.with_score(score));
    }

    if profile.spurious_rate > 0.0 {
        let count = Poisson::new(profile.spurious_rate)
            .expect("rate validated")
            .sample(&mut rng) as usize;
        let max_extent = (side / 8.0).max(2.0);
        for _ in 0..count {
            let w = rng.random_range(1.0..=max_extent).min(side);
            let h = rng.random_range(1.0..=max_extent).min(side);
            let x = rng.random::<f64>() * (side - w);
            let y = rng.random::<f64>() * (side - h);
            let class_id = if gt.boxes.is_empty() {
                0
            } else {
                gt.boxes[rng.random_range(0..gt.boxes.len())].class_id()
            };
            let score = match &profile.score_model {
                Some(m) => gaussian(&mut rng, m.spurious_mean, m.spurious_sd),
                None => 0.3,
            };
            let b = BBox::new(x, y, x + w, y + h, class_id, 1.0)
                .expect("spurious box is ordered")
                .with_score(score);
            boxes.push(b);
        }
    }

    DetectionSet {
        detector_name: detector_name.to_string(),
        tile_id: tile.tile_id,
        frame: Frame::Local,
        boxes,
    }
}

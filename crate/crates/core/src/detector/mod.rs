//! Per-tile detectors.
//!
//! Two kinds are supported: external plugin processes speaking
//! newline-delimited JSON over stdio ([`plugin`]), and seeded synthetic
//! detectors that perturb ground truth ([`synthetic`]) so the rest of the
//! pipeline can be exercised without trained models.

pub mod plugin;
pub mod synthetic;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::tiling::{remap_to_global, TilePlan};

pub use plugin::{resolve_command, run_plugin, TileRequest, PLUGIN_PATH_ENV};
pub use synthetic::{synthetic_detect, NoiseProfile, ScaleMiss, ScoreModel, DEFAULT_VISIBILITY};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: DetectorKind,
    #[serde(default = "unit_weight")]
    pub weight: f64,
}

fn unit_weight() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DetectorKind {
    /// Executable plus arguments.
    Plugin { command: Vec<String> },
    Synthetic { noise_profile: NoiseProfile },
}

impl DetectorSpec {
    pub fn plugin(name: impl Into<String>, command: Vec<String>) -> Self {
        Self {
            name: name.into(),
            kind: DetectorKind::Plugin { command },
            weight: 1.0,
        }
    }

    pub fn synthetic(name: impl Into<String>, noise_profile: NoiseProfile) -> Self {
        Self {
            name: name.into(),
            kind: DetectorKind::Synthetic { noise_profile },
            weight: 1.0,
        }
    }

    pub fn with_weight(mut self, weight: f64) -> Self {
        self.weight = weight;
        self
    }

    pub fn is_plugin(&self) -> bool {
        matches!(self.kind, DetectorKind::Plugin { .. })
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() {
            return Err(Error::validation("detector name must not be empty"));
        }
        if !(self.weight.is_finite() && self.weight > 0.0) {
            return Err(Error::validation(format!(
                "detector `{}` weight must be positive, got {}",
                self.name, self.weight
            )));
        }
        match &self.kind {
            DetectorKind::Plugin { command } if command.is_empty() || command[0].is_empty() => Err(
                Error::validation(format!("plugin detector `{}` has no command", self.name)),
            ),
            DetectorKind::Plugin { .. } => Ok(()),
            DetectorKind::Synthetic { noise_profile } => noise_profile.validate(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Frame {
    /// Coordinates relative to the tile's top-left corner.
    Local,
    /// Coordinates in the full image.
    Global,
}

/// Detections produced by one detector on one tile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionSet {
    pub detector_name: String,
    pub tile_id: u32,
    pub frame: Frame,
    pub boxes: Vec<BBox>,
}

impl DetectionSet {
    /// Check that a local-frame set fits inside a `side x side` tile.
    pub fn check_local_bounds(&self, side: u32) -> Result<()> {
        if self.frame != Frame::Local {
            return Ok(());
        }
        let s = f64::from(side);
        for b in &self.boxes {
            if b.x_min() < 0.0 || b.y_min() < 0.0 || b.x_max() > s || b.y_max() > s {
                return Err(Error::Contract(format!(
                    "detector `{}` box {:?} outside tile {} extent [0, {side}]^2",
                    self.detector_name,
                    b.corners(),
                    self.tile_id
                )));
            }
        }
        Ok(())
    }

    /// Remap a local-frame set into image coordinates using its tile in `plan`.
    pub fn to_global(&self, plan: &TilePlan) -> Result<DetectionSet> {
        if self.frame == Frame::Global {
            return Ok(self.clone());
        }
        let tile = plan.tile(self.tile_id).ok_or_else(|| {
            Error::Contract(format!("tile {} is not part of the plan", self.tile_id))
        })?;
        let boxes = self
            .boxes
            .iter()
            .map(|b| remap_to_global(b, tile))
            .collect::<Result<Vec<_>>>()?;
        Ok(DetectionSet {
            frame: Frame::Global,
            boxes,
            ..self.clone()
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tiling::plan_tiles;

    #[test]
    fn spec_json_shape() {
        let spec: DetectorSpec = serde_json::from_str(
            r#"{"name":"yolo","kind":"plugin","command":["./yolo.sh","--fast"],"weight":0.8}"#,
        )
        .unwrap();
        assert!(spec.is_plugin());
        assert_eq!(spec.weight, 0.8);
        spec.validate().unwrap();

        let synth: DetectorSpec = serde_json::from_str(
            r#"{"name":"s","kind":"synthetic","noise_profile":{"jitter_sigma":1.0,"seed":3}}"#,
        )
        .unwrap();
        assert_eq!(synth.weight, 1.0);
        synth.validate().unwrap();
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(DetectorSpec::plugin("p", vec![]).validate().is_err());
        assert!(DetectorSpec::plugin("p", vec!["x".into()])
            .with_weight(0.0)
            .validate()
            .is_err());
        let mut profile = NoiseProfile::identity();
        profile.miss_rate = 1.5;
        assert!(DetectorSpec::synthetic("s", profile).validate().is_err());
    }

    #[test]
    fn local_to_global_uses_tile_origin() {
        let plan = plan_tiles(1280, 640, 640, 320.0, 30, 1).unwrap();
        let tile = plan.tiles.iter().find(|t| t.origin_x > 0).unwrap();
        let set = DetectionSet {
            detector_name: "d".into(),
            tile_id: tile.tile_id,
            frame: Frame::Local,
            boxes: vec![BBox::new(1.0, 2.0, 3.0, 4.0, 0, 0.5).unwrap()],
        };
        let g = set.to_global(&plan).unwrap();
        assert_eq!(g.frame, Frame::Global);
        assert_eq!(
            g.boxes[0].corners(),
            [
                1.0 + f64::from(tile.origin_x),
                2.0 + f64::from(tile.origin_y),
                3.0 + f64::from(tile.origin_x),
                4.0 + f64::from(tile.origin_y)
            ]
        );
    }
}

//! Tiled object detection for very large images: Poisson-disk tile
//! placement, per-tile detectors, EIoU-aware ensemble fusion and scoring.

pub mod annotations;
pub mod cli;
pub mod detector;
pub mod error;
pub mod eval;
pub mod fusion;
pub mod geometry;
pub mod overlay;
pub mod pipeline;
pub mod poisson;
pub mod raster;
pub mod rng;
pub mod synthgen;
pub mod tiling;

pub use annotations::AnnotationSet;
pub use error::{Error, Result};
pub use geometry::{eiou_loss, enclosing_box, iou, BBox};

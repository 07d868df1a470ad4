//! Ground-truth annotation sets and the YOLO text label format.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::tiling::clip_to_image;

/// Labeled boxes for one image. Ground-truth boxes carry score 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationSet {
    pub image_id: String,
    pub image_width: u32,
    pub image_height: u32,
    /// Declared class table; empty means class ids are unconstrained.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub classes: Vec<String>,
    pub boxes: Vec<BBox>,
}

impl AnnotationSet {
    pub fn new(image_id: impl Into<String>, image_width: u32, image_height: u32) -> Self {
        Self {
            image_id: image_id.into(),
            image_width,
            image_height,
            classes: Vec::new(),
            boxes: Vec::new(),
        }
    }

    pub fn with_boxes(mut self, boxes: Vec<BBox>) -> Self {
        self.boxes = boxes;
        self
    }

    /// Check class ids against the class table.
    pub fn validate(&self) -> Result<()> {
        if self.image_width == 0 || self.image_height == 0 {
            return Err(Error::validation(format!(
                "annotation set `{}` has empty image dimensions",
                self.image_id
            )));
        }
        if !self.classes.is_empty() {
            if let Some(b) = self
                .boxes
                .iter()
                .find(|b| b.class_id() as usize >= self.classes.len())
            {
                return Err(Error::validation(format!(
                    "class id {} not in the {}-entry class table of `{}`",
                    b.class_id(),
                    self.classes.len(),
                    self.image_id
                )));
            }
        }
        Ok(())
    }

    /// Same set with every box clipped to the image; boxes left without area are dropped.
    pub fn clipped(&self) -> Self {
        Self {
            boxes: self
                .boxes
                .iter()
                .filter_map(|b| clip_to_image(b, self.image_width, self.image_height))
                .collect(),
            ..self.clone()
        }
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let set: Self = serde_json::from_str(&text)
            .map_err(|e| Error::json(path.display().to_string(), e))?;
        set.validate()?;
        Ok(set)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).expect("annotations serialize");
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

/// One `class cx cy w h` line per box, normalized by the frame size.
pub fn to_yolo(boxes: &[BBox], frame_width: u32, frame_height: u32) -> String {
    let (fw, fh) = (f64::from(frame_width), f64::from(frame_height));
    let mut out = String::new();
    for b in boxes {
        let (cx, cy) = b.center();
        out.push_str(&format!(
            "{} {:.6} {:.6} {:.6} {:.6}\n",
            b.class_id(),
            cx / fw,
            cy / fh,
            b.width() / fw,
            b.height() / fh
        ));
    }
    out
}

/// Parse YOLO label text back into pixel boxes (score 1).
pub fn parse_yolo(text: &str, frame_width: u32, frame_height: u32) -> Result<Vec<BBox>> {
    let (fw, fh) = (f64::from(frame_width), f64::from(frame_height));
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, line)| {
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 5 {
                return Err(Error::validation(format!(
                    "YOLO line {}: expected 5 fields, found {}",
                    n + 1,
                    fields.len()
                )));
            }
            let class_id: u32 = fields[0].parse().map_err(|_| {
                Error::validation(format!("YOLO line {}: bad class `{}`", n + 1, fields[0]))
            })?;
            let mut vals = [0.0; 4];
            for (v, f) in vals.iter_mut().zip(&fields[1..]) {
                *v = f.parse().map_err(|_| {
                    Error::validation(format!("YOLO line {}: bad number `{f}`", n + 1))
                })?;
            }
            let [cx, cy, w, h] = vals;
            if !vals.iter().all(|v| (0.0..=1.0).contains(v)) {
                return Err(Error::validation(format!(
                    "YOLO line {}: values must be normalized to [0, 1]",
                    n + 1
                )));
            }
            BBox::gt(
                ((cx - w / 2.0) * fw).max(0.0),
                ((cy - h / 2.0) * fh).max(0.0),
                ((cx + w / 2.0) * fw).min(fw),
                ((cy + h / 2.0) * fh).min(fh),
                class_id,
            )
        })
        .collect()
}

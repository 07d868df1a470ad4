//! Axis-aligned box arithmetic.
//!
//! Boxes are pure continuous geometry: no pixel-grid edge conventions are
//! applied, so a box `(0, 0, 10, 10)` has area exactly 100.
//!
//! The EIoU dissimilarity is
//!
//! ```text
//! eiou(a, b) = 1 - iou(a, b)
//!            + |c_a - c_b|^2 / diag(E)^2
//!            + (w_a - w_b)^2 / w(E)^2
//!            + (h_a - h_b)^2 / h(E)^2
//! ```
//!
//! where `E` is the smallest box enclosing both inputs and `c` denotes box
//! centers. Denominators are floored at [`EIOU_EPSILON`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Floor for EIoU denominators when the enclosing box is degenerate.
pub const EIOU_EPSILON: f64 = 1e-9;

/// An axis-aligned box in pixel coordinates with a class and a confidence.
///
/// Construction validates `x_min <= x_max`, `y_min <= y_max`, finite
/// coordinates and `score` in `[0, 1]`; deserialization goes through the
/// same checks, so every `BBox` value in the program is valid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBox")]
pub struct BBox {
    x_min: f64,
    y_min: f64,
    x_max: f64,
    y_max: f64,
    class_id: u32,
    score: f64,
}

#[derive(Deserialize)]
struct RawBox {
    x_min: f64,
    y_min: f64,
    x_max: f64,
    y_max: f64,
    #[serde(default)]
    class_id: u32,
    #[serde(default = "one")]
    score: f64,
}

fn one() -> f64 {
    1.0
}

impl TryFrom<RawBox> for BBox {
    type Error = Error;

    fn try_from(raw: RawBox) -> Result<Self> {
        BBox::new(raw.x_min, raw.y_min, raw.x_max, raw.y_max, raw.class_id, raw.score)
    }
}

impl BBox {
    pub fn new(
        x_min: f64,
        y_min: f64,
        x_max: f64,
        y_max: f64,
        class_id: u32,
        score: f64,
    ) -> Result<Self> {
        if ![x_min, y_min, x_max, y_max].iter().all(|v| v.is_finite()) {
            return Err(Error::validation(format!(
                "box coordinates must be finite, got ({x_min}, {y_min}, {x_max}, {y_max})"
            )));
        }
        if x_min > x_max || y_min > y_max {
            return Err(Error::validation(format!(
                "box has negative extent: ({x_min}, {y_min}, {x_max}, {y_max})"
            )));
        }
        if !(0.0..=1.0).contains(&score) {
            return Err(Error::validation(format!("score {score} outside [0, 1]")));
        }
        Ok(Self {
            x_min,
            y_min,
            x_max,
            y_max,
            class_id,
            score,
        })
    }

    /// Ground-truth style box: class given, score 1.
    pub fn gt(x_min: f64, y_min: f64, x_max: f64, y_max: f64, class_id: u32) -> Result<Self> {
        Self::new(x_min, y_min, x_max, y_max, class_id, 1.0)
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn y_min(&self) -> f64 {
        self.y_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn y_max(&self) -> f64 {
        self.y_max
    }

    pub fn class_id(&self) -> u32 {
        self.class_id
    }

    pub fn score(&self) -> f64 {
        self.score
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> (f64, f64) {
        (
            0.5 * (self.x_min + self.x_max),
            0.5 * (self.y_min + self.y_max),
        )
    }

    /// Same geometry and class, new score. Scores outside `[0, 1]` are clamped.
    pub fn with_score(mut self, score: f64) -> Self {
        self.score = if score.is_nan() { 0.0 } else { score.clamp(0.0, 1.0) };
        self
    }

    pub fn with_class(mut self, class_id: u32) -> Self {
        self.class_id = class_id;
        self
    }

    /// Shift all four coordinates by `(dx, dy)`.
    pub fn translate(&self, dx: f64, dy: f64) -> Self {
        Self {
            x_min: self.x_min + dx,
            y_min: self.y_min + dy,
            x_max: self.x_max + dx,
            y_max: self.y_max + dy,
            ..*self
        }
    }

    /// Coordinates as `[x_min, y_min, x_max, y_max]`.
    pub fn corners(&self) -> [f64; 4] {
        [self.x_min, self.y_min, self.x_max, self.y_max]
    }

    pub fn same_geometry(&self, other: &BBox) -> bool {
        self.corners() == other.corners()
    }

    pub fn intersection_area(&self, other: &BBox) -> f64 {
        let w = (self.x_max.min(other.x_max) - self.x_min.max(other.x_min)).max(0.0);
        let h = (self.y_max.min(other.y_max) - self.y_min.max(other.y_min)).max(0.0);
        w * h
    }

    /// Intersection with another box, `None` when the overlap has zero area.
    pub fn intersection(&self, other: &BBox) -> Option<BBox> {
        let x_min = self.x_min.max(other.x_min);
        let y_min = self.y_min.max(other.y_min);
        let x_max = self.x_max.min(other.x_max);
        let y_max = self.y_max.min(other.y_max);
        if x_max > x_min && y_max > y_min {
            Some(BBox {
                x_min,
                y_min,
                x_max,
                y_max,
                ..*self
            })
        } else {
            None
        }
    }
}

/// Intersection over union, `0` when the union has zero area.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection_area(b);
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).clamp(0.0, 1.0)
    }
}

/// Smallest axis-aligned box containing both inputs. Class and score are taken from `a`.
pub fn enclosing_box(a: &BBox, b: &BBox) -> BBox {
    BBox {
        x_min: a.x_min.min(b.x_min),
        y_min: a.y_min.min(b.y_min),
        x_max: a.x_max.max(b.x_max),
        y_max: a.y_max.max(b.y_max),
        ..*a
    }
}

/// EIoU dissimilarity between two boxes; `0` for identical geometry.
pub fn eiou_loss(a: &BBox, b: &BBox) -> f64 {
    if a.same_geometry(b) {
        return 0.0;
    }
    let enclosing = enclosing_box(a, b);
    let cw = enclosing.width();
    let ch = enclosing.height();
    let diag_sq = (cw * cw + ch * ch).max(EIOU_EPSILON);

    let (ax, ay) = a.center();
    let (bx, by) = b.center();
    let center_sq = (ax - bx).powi(2) + (ay - by).powi(2);

    let dw = a.width() - b.width();
    let dh = a.height() - b.height();
    let shape = dw * dw / (cw * cw).max(EIOU_EPSILON) + dh * dh / (ch * ch).max(EIOU_EPSILON);

    1.0 - iou(a, b) + center_sq / diag_sq + shape
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn b(x0: f64, y0: f64, x1: f64, y1: f64) -> BBox {
        BBox::gt(x0, y0, x1, y1, 0).unwrap()
    }

    #[test]
    fn iou_examples() {
        assert_eq!(iou(&b(0., 0., 10., 10.), &b(0., 0., 10., 10.)), 1.0);
        assert_eq!(iou(&b(0., 0., 1., 1.), &b(5., 5., 6., 6.)), 0.0);
        assert!((iou(&b(0., 0., 2., 2.), &b(1., 1., 3., 3.)) - 1.0 / 7.0).abs() < 1e-15);
    }

    #[test]
    fn iou_of_zero_area_boxes_is_zero() {
        let p = b(3., 3., 3., 3.);
        assert_eq!(iou(&p, &p), 0.0);
    }

    #[test]
    fn negative_extent_rejected() {
        assert!(matches!(
            BBox::gt(2., 0., 1., 1., 0),
            Err(Error::Validation(_))
        ));
        assert!(BBox::new(0., 0., 1., 1., 0, 1.5).is_err());
        assert!(BBox::new(0., 0., f64::NAN, 1., 0, 0.5).is_err());
    }

    #[test]
    fn deserialization_validates() {
        let ok: BBox =
            serde_json::from_str(r#"{"x_min":0,"y_min":0,"x_max":2,"y_max":3,"class_id":1,"score":0.5}"#)
                .unwrap();
        assert_eq!(ok.height(), 3.0);
        let bad = serde_json::from_str::<BBox>(r#"{"x_min":5,"y_min":0,"x_max":2,"y_max":3}"#);
        assert!(bad.is_err());
    }

    #[test]
    fn eiou_examples() {
        assert_eq!(eiou_loss(&b(0., 0., 10., 10.), &b(0., 0., 10., 10.)), 0.0);
        let loss = eiou_loss(&b(0., 0., 2., 2.), &b(4., 0., 6., 2.));
        assert!((loss - 1.4).abs() < 1e-12, "{loss}");
    }

    #[test]
    fn eiou_identical_points_is_zero() {
        let p = b(1., 1., 1., 1.);
        assert_eq!(eiou_loss(&p, &p), 0.0);
    }

    #[test]
    fn eiou_degenerate_enclosing_box_is_finite() {
        // Two distinct zero-width boxes on the same vertical line.
        let a = b(1., 0., 1., 2.);
        let c = b(1., 4., 1., 6.);
        let loss = eiou_loss(&a, &c);
        assert!(loss.is_finite());
        // IoU 0, center distance 16 over diagonal 36, no shape difference.
        assert!((loss - (1.0 + 16.0 / 36.0)).abs() < 1e-12);
    }

    #[test]
    fn eiou_increases_as_boxes_separate() {
        // Numeric sweep: once disjoint, every step further away costs more.
        let a = b(0., 0., 2., 2.);
        let mut prev = f64::NEG_INFINITY;
        let mut offset = 2.0;
        while offset < 200.0 {
            let loss = eiou_loss(&a, &b(offset, 0., offset + 2., 2.));
            assert!(loss > prev, "offset {offset}: {loss} <= {prev}");
            prev = loss;
            offset += 0.5;
        }
    }

    #[test]
    fn enclosing_examples() {
        assert_eq!(
            enclosing_box(&b(0., 0., 1., 1.), &b(2., 2., 3., 3.)).corners(),
            [0., 0., 3., 3.]
        );
        let outer = b(0., 0., 10., 10.);
        assert_eq!(enclosing_box(&outer, &b(2., 2., 3., 3.)).corners(), outer.corners());
        assert_eq!(
            enclosing_box(&b(0., 0., 2., 2.), &b(1., 1., 3., 3.)).corners(),
            [0., 0., 3., 3.]
        );
    }

    fn arb_box() -> impl Strategy<Value = BBox> {
        (-500.0..500.0f64, -500.0..500.0f64, 0.0..200.0f64, 0.0..200.0f64)
            .prop_map(|(x, y, w, h)| b(x, y, x + w, y + h))
    }

    fn arb_positive_box() -> impl Strategy<Value = BBox> {
        (-500.0..500.0f64, -500.0..500.0f64, 0.5..200.0f64, 0.5..200.0f64)
            .prop_map(|(x, y, w, h)| b(x, y, x + w, y + h))
    }

    proptest! {
        #[test]
        fn iou_symmetric_and_bounded(a in arb_box(), c in arb_box()) {
            let ab = iou(&a, &c);
            prop_assert_eq!(ab, iou(&c, &a));
            prop_assert!((0.0..=1.0).contains(&ab));
        }

        #[test]
        fn iou_self_is_one(a in arb_positive_box()) {
            prop_assert!((iou(&a, &a) - 1.0).abs() < 1e-12);
        }

        #[test]
        fn eiou_non_negative_and_dominates_iou_term(a in arb_positive_box(), c in arb_positive_box()) {
            let loss = eiou_loss(&a, &c);
            prop_assert!(loss >= 0.0);
            prop_assert!(loss >= 1.0 - iou(&a, &c) - 1e-12);
            prop_assert_eq!(eiou_loss(&a, &a), 0.0);
        }

        #[test]
        fn translation_invariance(a in arb_positive_box(), c in arb_positive_box(), dx in -1000.0..1000.0f64, dy in -1000.0..1000.0f64) {
            let (ta, tc) = (a.translate(dx, dy), c.translate(dx, dy));
            prop_assert!((iou(&a, &c) - iou(&ta, &tc)).abs() < 1e-9);
            prop_assert!((eiou_loss(&a, &c) - eiou_loss(&ta, &tc)).abs() < 1e-9);
        }
    }
}

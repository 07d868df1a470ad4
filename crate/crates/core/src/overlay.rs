//! Box overlays for eyeballing results.

use crate::geometry::BBox;
use crate::raster::ImageRaster;

const PALETTE: [[u8; 3]; 8] = [
    [230, 25, 75],
    [60, 180, 75],
    [255, 225, 25],
    [0, 130, 200],
    [245, 130, 48],
    [145, 30, 180],
    [70, 240, 240],
    [240, 50, 230],
];

pub fn class_color(class_id: u32) -> [u8; 3] {
    PALETTE[class_id as usize % PALETTE.len()]
}

/// RGB copy of `base` with each box outlined in its class color.
pub fn render_overlay(base: &ImageRaster, boxes: &[BBox], thickness: u32) -> ImageRaster {
    let mut out = base.to_rgb();
    let (w, h) = (out.width(), out.height());
    if w == 0 || h == 0 {
        return out;
    }
    let t = thickness.max(1);
    for b in boxes {
        let color = class_color(b.class_id());
        let px = |v: f64, max: u32| (v.floor().max(0.0) as u32).min(max - 1);
        let (x0, y0) = (px(b.x_min(), w), px(b.y_min(), h));
        let (x1, y1) = (px(b.x_max(), w), px(b.y_max(), h));
        for y in y0..=y1 {
            if y < y0 + t || y + t > y1 {
                for x in x0..=x1 {
                    out.set_pixel(x, y, &color);
                }
            } else {
                let left = x0..(x0 + t).min(x1 + 1);
                let right = x1.saturating_sub(t - 1).max(x0)..x1 + 1;
                for x in left.chain(right) {
                    out.set_pixel(x, y, &color);
                }
            }
        }
    }
    out
}

//! Tile planning, tile extraction and tile-to-image coordinate remapping.
//!
//! A plan centers one `side x side` tile on every Poisson sample, clamps it
//! inside the image and drops exact duplicates. Because the sampler is not
//! maximal, a second pass walks a regular grid of stride `side` and adds a
//! grid-aligned fallback tile wherever the grid cell is not already fully
//! covered. Tile ids are dense: Poisson tiles first, then fallbacks.
//!
//! Images smaller than `side` in a dimension get origin 0 in that dimension
//! and the tile raster is zero padded.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::poisson::{sample_poisson, PointSet, SampleDomain};
use crate::raster::ImageRaster;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Poisson,
    Fallback,
}

/// A square crop of the source image in global pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Tile {
    #[serde(rename = "id")]
    pub tile_id: u32,
    #[serde(rename = "x")]
    pub origin_x: u32,
    #[serde(rename = "y")]
    pub origin_y: u32,
    pub side: u32,
    pub provenance: Provenance,
}

impl Tile {
    /// Tile footprint as a box, class 0 / score 1.
    pub fn bounds(&self) -> BBox {
        BBox::gt(
            f64::from(self.origin_x),
            f64::from(self.origin_y),
            f64::from(self.origin_x) + f64::from(self.side),
            f64::from(self.origin_y) + f64::from(self.side),
            0,
        )
        .expect("tile bounds are non-negative")
    }

    /// Footprint clipped to the image, as half-open integer intervals.
    fn clipped(&self, width: u32, height: u32) -> Rect {
        Rect {
            x0: u64::from(self.origin_x.min(width)),
            y0: u64::from(self.origin_y.min(height)),
            x1: u64::from((self.origin_x + self.side).min(width)),
            y1: u64::from((self.origin_y + self.side).min(height)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TilePlan {
    pub image_width: u32,
    pub image_height: u32,
    pub side: u32,
    pub r: f64,
    pub k: u32,
    pub seed: u64,
    pub coverage_fraction: f64,
    pub tiles: Vec<Tile>,
}

impl TilePlan {
    pub fn poisson_count(&self) -> usize {
        self.tiles
            .iter()
            .filter(|t| t.provenance == Provenance::Poisson)
            .count()
    }

    pub fn fallback_count(&self) -> usize {
        self.tiles.len() - self.poisson_count()
    }

    pub fn tile(&self, tile_id: u32) -> Option<&Tile> {
        self.tiles
            .get(tile_id as usize)
            .filter(|t| t.tile_id == tile_id)
            .or_else(|| self.tiles.iter().find(|t| t.tile_id == tile_id))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan serializes")
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
}

/// Half-open integer rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Rect {
    x0: u64,
    y0: u64,
    x1: u64,
    y1: u64,
}

impl Rect {
    fn area(&self) -> u64 {
        (self.x1 - self.x0) * (self.y1 - self.y0)
    }

    fn intersect(&self, other: &Rect) -> Option<Rect> {
        let r = Rect {
            x0: self.x0.max(other.x0),
            y0: self.y0.max(other.y0),
            x1: self.x1.min(other.x1),
            y1: self.y1.min(other.y1),
        };
        (r.x1 > r.x0 && r.y1 > r.y0).then_some(r)
    }
}

/// Exact area of a union of rectangles, by vertical slabs with merged y-intervals.
fn union_area(rects: &[Rect]) -> u64 {
    let mut xs: Vec<u64> = rects.iter().flat_map(|r| [r.x0, r.x1]).collect();
    xs.sort_unstable();
    xs.dedup();
    let mut spans: Vec<(u64, u64)> = Vec::new();
    let mut total = 0;
    for w in xs.windows(2) {
        let (xa, xb) = (w[0], w[1]);
        spans.clear();
        spans.extend(
            rects
                .iter()
                .filter(|r| r.x0 <= xa && r.x1 >= xb)
                .map(|r| (r.y0, r.y1)),
        );
        if spans.is_empty() {
            continue;
        }
        spans.sort_unstable();
        let mut covered = 0;
        let (mut start, mut end) = spans[0];
        for &(s, e) in &spans[1..] {
            if s > end {
                covered += end - start;
                start = s;
                end = e;
            } else {
                end = end.max(e);
            }
        }
        covered += end - start;
        total += covered * (xb - xa);
    }
    total
}

fn clamp_origin(center: f64, side: u32, extent: u32) -> u32 {
    let max_origin = extent.saturating_sub(side);
    let origin = (center - f64::from(side) / 2.0).round();
    if origin <= 0.0 {
        0
    } else {
        (origin as u64).min(u64::from(max_origin)) as u32
    }
}

/// Exact fraction of image pixels covered by at least one tile.
pub fn coverage_fraction(tiles: &[Tile], image_width: u32, image_height: u32) -> f64 {
    let total = u64::from(image_width) * u64::from(image_height);
    if total == 0 {
        return 0.0;
    }
    let rects: Vec<Rect> = tiles
        .iter()
        .map(|t| t.clipped(image_width, image_height))
        .filter(|r| r.area() > 0)
        .collect();
    union_area(&rects) as f64 / total as f64
}

/// Plan tiles and also return the Poisson samples they were centered on.
pub fn plan_tiles_with_points(
    image_width: u32,
    image_height: u32,
    side: u32,
    r: f64,
    k: u32,
    seed: u64,
) -> Result<(TilePlan, PointSet)> {
    if image_width == 0 || image_height == 0 {
        return Err(Error::validation(format!(
            "image dimensions must be positive, got {image_width}x{image_height}"
        )));
    }
    if side == 0 {
        return Err(Error::validation("tile side must be at least 1"));
    }
    let domain = SampleDomain::new(f64::from(image_width), f64::from(image_height))?;
    let points = sample_poisson(domain, r, k, seed)?;

    let mut seen = HashSet::new();
    let mut tiles = Vec::new();
    for p in &points.points {
        let ox = clamp_origin(p.x, side, image_width);
        let oy = clamp_origin(p.y, side, image_height);
        if seen.insert((ox, oy)) {
            tiles.push(Tile {
                tile_id: tiles.len() as u32,
                origin_x: ox,
                origin_y: oy,
                side,
                provenance: Provenance::Poisson,
            });
        }
    }

    add_fallback_tiles(&mut tiles, &mut seen, image_width, image_height, side);

    let coverage_fraction = coverage_fraction(&tiles, image_width, image_height);
    let plan = TilePlan {
        image_width,
        image_height,
        side,
        r,
        k,
        seed,
        coverage_fraction,
        tiles,
    };
    Ok((plan, points))
}

/// Poisson-centered tile plan with a guaranteed full-coverage fallback pass.
pub fn plan_tiles(
    image_width: u32,
    image_height: u32,
    side: u32,
    r: f64,
    k: u32,
    seed: u64,
) -> Result<TilePlan> {
    plan_tiles_with_points(image_width, image_height, side, r, k, seed).map(|(plan, _)| plan)
}

fn add_fallback_tiles(
    tiles: &mut Vec<Tile>,
    seen: &mut HashSet<(u32, u32)>,
    width: u32,
    height: u32,
    side: u32,
) {
    // Every tile of this side overlaps at most a 2x2 block of stride-`side` cells.
    let mut buckets: HashMap<(u32, u32), Vec<Rect>> = HashMap::new();
    for t in tiles.iter() {
        let bx = t.origin_x / side;
        let by = t.origin_y / side;
        buckets
            .entry((bx, by))
            .or_default()
            .push(t.clipped(width, height));
    }

    let cols = width.div_ceil(side);
    let rows = height.div_ceil(side);
    let mut local = Vec::new();
    for gy in 0..rows {
        for gx in 0..cols {
            let cell = Rect {
                x0: u64::from(gx * side),
                y0: u64::from(gy * side),
                x1: u64::from((gx * side).saturating_add(side).min(width)),
                y1: u64::from((gy * side).saturating_add(side).min(height)),
            };
            local.clear();
            for by in gy.saturating_sub(1)..=gy {
                for bx in gx.saturating_sub(1)..=gx {
                    if let Some(rs) = buckets.get(&(bx, by)) {
                        local.extend(rs.iter().filter_map(|r| r.intersect(&cell)));
                    }
                }
            }
            if union_area(&local) == cell.area() {
                continue;
            }
            let ox = (gx * side).min(width.saturating_sub(side));
            let oy = (gy * side).min(height.saturating_sub(side));
            if seen.insert((ox, oy)) {
                let tile = Tile {
                    tile_id: tiles.len() as u32,
                    origin_x: ox,
                    origin_y: oy,
                    side,
                    provenance: Provenance::Fallback,
                };
                buckets
                    .entry((ox / side, oy / side))
                    .or_default()
                    .push(tile.clipped(width, height));
                tiles.push(tile);
            }
        }
    }
}

fn check_local(local: &BBox, tile: &Tile) -> Result<()> {
    let side = f64::from(tile.side);
    if local.x_min() < 0.0 || local.y_min() < 0.0 || local.x_max() > side || local.y_max() > side
    {
        return Err(Error::Contract(format!(
            "box {:?} lies outside tile {} extent [0, {}]^2",
            local.corners(),
            tile.tile_id,
            tile.side
        )));
    }
    Ok(())
}

/// Translate a tile-local box into global image coordinates.
pub fn remap_to_global(local: &BBox, tile: &Tile) -> Result<BBox> {
    check_local(local, tile)?;
    Ok(local.translate(f64::from(tile.origin_x), f64::from(tile.origin_y)))
}

/// Inverse of [`remap_to_global`]: the box must lie inside the tile footprint.
pub fn remap_to_local(global: &BBox, tile: &Tile) -> Result<BBox> {
    let local = global.translate(-f64::from(tile.origin_x), -f64::from(tile.origin_y));
    check_local(&local, tile)?;
    Ok(local)
}

/// Intersect a box with the image rectangle; `None` if nothing with area remains.
pub fn clip_to_image(bbox: &BBox, image_width: u32, image_height: u32) -> Option<BBox> {
    let image = BBox::gt(0.0, 0.0, f64::from(image_width), f64::from(image_height), 0).ok()?;
    bbox.intersection(&image)
}

/// `side x side` crop of `raster` at the tile origin, zero padded past the image edge.
pub fn extract_tile(raster: &ImageRaster, tile: &Tile) -> ImageRaster {
    raster.crop_padded(tile.origin_x, tile.origin_y, tile.side, tile.side)
}

#![allow(dead_code)]

use tilefuse::tiling::Tile;

/// Uncovered pixel count, by a 2-D difference array over compressed
/// coordinates (every tile edge becomes a grid line).
pub fn uncovered_pixels(tiles: &[Tile], w: u32, h: u32) -> u64 {
    let clip = |v: u32, max: u32| v.min(max);
    let mut xs = vec![0, w];
    let mut ys = vec![0, h];
    for t in tiles {
        xs.extend([clip(t.origin_x, w), clip(t.origin_x + t.side, w)]);
        ys.extend([clip(t.origin_y, h), clip(t.origin_y + t.side, h)]);
    }
    xs.sort_unstable();
    xs.dedup();
    ys.sort_unstable();
    ys.dedup();
    let ix = |v: u32| xs.binary_search(&v).unwrap();
    let iy = |v: u32| ys.binary_search(&v).unwrap();
    let (nx, ny) = (xs.len(), ys.len());
    let mut diff = vec![0i64; (nx + 1) * (ny + 1)];
    let at = |x: usize, y: usize| y * (nx + 1) + x;
    for t in tiles {
        let (x0, x1) = (ix(clip(t.origin_x, w)), ix(clip(t.origin_x + t.side, w)));
        let (y0, y1) = (iy(clip(t.origin_y, h)), iy(clip(t.origin_y + t.side, h)));
        diff[at(x0, y0)] += 1;
        diff[at(x1, y0)] -= 1;
        diff[at(x0, y1)] -= 1;
        diff[at(x1, y1)] += 1;
    }
    // Prefix sums turn the difference array into per-cell cover counts.
    for y in 0..ny {
        for x in 0..nx {
            let mut v = diff[at(x, y)];
            if x > 0 {
                v += diff[at(x - 1, y)];
            }
            if y > 0 {
                v += diff[at(x, y - 1)];
            }
            if x > 0 && y > 0 {
                v -= diff[at(x - 1, y - 1)];
            }
            diff[at(x, y)] = v;
        }
    }
    let mut uncovered = 0u64;
    for y in 0..ny - 1 {
        for x in 0..nx - 1 {
            if diff[at(x, y)] == 0 {
                uncovered += u64::from(xs[x + 1] - xs[x]) * u64::from(ys[y + 1] - ys[y]);
            }
        }
    }
    uncovered
}

/// Direct per-pixel check, for small images.
pub fn uncovered_pixels_naive(tiles: &[Tile], w: u32, h: u32) -> u64 {
    let mut covered = vec![false; (w * h) as usize];
    for t in tiles {
        for y in t.origin_y..(t.origin_y + t.side).min(h) {
            for x in t.origin_x..(t.origin_x + t.side).min(w) {
                covered[(y * w + x) as usize] = true;
            }
        }
    }
    covered.iter().filter(|c| !**c).count() as u64
}

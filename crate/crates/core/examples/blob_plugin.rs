//! A toy plugin detector: bright connected blobs in each tile become boxes.
//!
//! Speaks the stdio protocol, one JSON request per line in, one response
//! per line out. Build it and point a plugin detector spec at the binary:
//!
//!     cargo build --example blob_plugin
//!     {"name": "blobs", "kind": "plugin", "command": ["target/debug/examples/blob_plugin"]}

use std::io::{self, BufRead, Write};

use serde_json::{json, Value};
use tilefuse::raster::ImageRaster;

const THRESHOLD: u8 = 128;

fn blobs(tile: &ImageRaster) -> Vec<[u32; 4]> {
    let (w, h) = (tile.width(), tile.height());
    let bright = |x: u32, y: u32| tile.pixel(x, y).iter().any(|&v| v >= THRESHOLD);
    let mut seen = vec![false; (w * h) as usize];
    let mut out = Vec::new();
    for y0 in 0..h {
        for x0 in 0..w {
            if seen[(y0 * w + x0) as usize] || !bright(x0, y0) {
                continue;
            }
            let mut bounds = [x0, y0, x0 + 1, y0 + 1];
            let mut stack = vec![(x0, y0)];
            seen[(y0 * w + x0) as usize] = true;
            while let Some((x, y)) = stack.pop() {
                bounds = [bounds[0].min(x), bounds[1].min(y), bounds[2].max(x + 1), bounds[3].max(y + 1)];
                let neighbours = [(x.wrapping_sub(1), y), (x + 1, y), (x, y.wrapping_sub(1)), (x, y + 1)];
                for (nx, ny) in neighbours {
                    if nx < w && ny < h && !seen[(ny * w + nx) as usize] && bright(nx, ny) {
                        seen[(ny * w + nx) as usize] = true;
                        stack.push((nx, ny));
                    }
                }
            }
            out.push(bounds);
        }
    }
    out
}

fn main() {
    let stdin = io::stdin();
    let mut stdout = io::stdout().lock();
    for line in stdin.lock().lines() {
        let line = line.expect("stdin");
        if line.trim().is_empty() {
            continue;
        }
        let req: Value = serde_json::from_str(&line).expect("request json");
        let path = req["raster"].as_str().expect("raster path");
        let tile = match ImageRaster::read(path) {
            Ok(t) => t,
            Err(e) => {
                eprintln!("blob_plugin: {e}");
                std::process::exit(1);
            }
        };
        let detections: Vec<Value> = blobs(&tile)
            .into_iter()
            .map(|[x0, y0, x1, y1]| {
                json!({"x_min": x0, "y_min": y0, "x_max": x1, "y_max": y1, "class_id": 0, "score": 0.9})
            })
            .collect();
        let resp = json!({"tile_id": req["tile_id"], "detections": detections});
        writeln!(stdout, "{resp}").expect("stdout");
    }
}

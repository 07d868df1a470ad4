//! Plan tiles over a large image and move a box between frames.
//!
//!     cargo run --example tile_plan -- 6400 6400 640

use tilefuse::tiling::{plan_tiles, remap_to_global, remap_to_local, Provenance};
use tilefuse::BBox;

fn main() -> tilefuse::Result<()> {
    let args: Vec<u32> = std::env::args()
        .skip(1)
        .map(|a| a.parse().expect("integer argument"))
        .collect();
    let (w, h, side) = (
        args.first().copied().unwrap_or(6400),
        args.get(1).copied().unwrap_or(6400),
        args.get(2).copied().unwrap_or(640),
    );
    let plan = plan_tiles(w, h, side, f64::from(side) / 2.0, 30, 7)?;
    println!(
        "{w}x{h}, side {side}: {} tiles ({} poisson, {} fallback), coverage {}",
        plan.tiles.len(),
        plan.poisson_count(),
        plan.fallback_count(),
        plan.coverage_fraction
    );
    for t in plan.tiles.iter().filter(|t| t.provenance == Provenance::Fallback).take(3) {
        println!("  fallback tile {} at ({}, {})", t.tile_id, t.origin_x, t.origin_y);
    }

    let tile = &plan.tiles[plan.tiles.len() / 2];
    let local = BBox::new(10.0, 20.0, 30.0, 40.0, 0, 0.9)?;
    let global = remap_to_global(&local, tile)?;
    let back = remap_to_local(&global, tile)?;
    println!(
        "tile {} at ({}, {}): local {:?} -> global {:?} -> local {:?}",
        tile.tile_id,
        tile.origin_x,
        tile.origin_y,
        local.corners(),
        global.corners(),
        back.corners()
    );
    Ok(())
}

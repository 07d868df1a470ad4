mod common;

use proptest::prelude::*;

use tilefuse::poisson::{sample_poisson, verify_min_distance, SampleDomain};
use tilefuse::raster::ImageRaster;
use tilefuse::tiling::{extract_tile, plan_tiles, remap_to_global, remap_to_local, Tile};
use tilefuse::BBox;

use common::{uncovered_pixels, uncovered_pixels_naive};

#[test]
fn coverage_oracles_agree_on_a_gappy_set() {
    let tiles = vec![
        Tile { tile_id: 0, origin_x: 0, origin_y: 0, side: 10, provenance: tilefuse::tiling::Provenance::Poisson },
        Tile { tile_id: 1, origin_x: 15, origin_y: 5, side: 10, provenance: tilefuse::tiling::Provenance::Poisson },
    ];
    assert_eq!(uncovered_pixels(&tiles, 30, 20), uncovered_pixels_naive(&tiles, 30, 20));
    assert_eq!(uncovered_pixels(&tiles, 30, 20), 600 - 200);
}

#[test]
fn spec_plan_6400() {
    let plan = plan_tiles(6400, 6400, 640, 320.0, 30, 7).unwrap();
    assert_eq!(plan.coverage_fraction, 1.0);
    assert_eq!(uncovered_pixels(&plan.tiles, 6400, 6400), 0);
    assert!(plan.tiles.len() >= 100);
}

#[test]
fn tile_pixels_match_the_image() {
    let data: Vec<u8> = (0..300u32 * 200).map(|i| (i * 7 % 256) as u8).collect();
    let img = ImageRaster::from_raw(300, 200, 1, data).unwrap();
    let plan = plan_tiles(300, 200, 64, 32.0, 30, 1).unwrap();
    let mut rebuilt = ImageRaster::zeros(300, 200, 1);
    for t in &plan.tiles {
        let crop = extract_tile(&img, t);
        assert_eq!(crop.pixel(0, 0), img.pixel(t.origin_x, t.origin_y));
        rebuilt.embed(&crop, t.origin_x, t.origin_y);
    }
    assert_eq!(rebuilt, img);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn plans_cover_every_pixel(
        w in 1u32..3000,
        h in 1u32..3000,
        side in prop::sample::select(vec![32u32, 100, 320, 640]),
        seed in any::<u64>(),
    ) {
        let plan = plan_tiles(w, h, side, f64::from(side) / 2.0, 30, seed).unwrap();
        prop_assert_eq!(plan.coverage_fraction, 1.0);
        prop_assert_eq!(uncovered_pixels(&plan.tiles, w, h), 0);
        for (i, t) in plan.tiles.iter().enumerate() {
            prop_assert_eq!(t.tile_id, i as u32);
            prop_assert!(t.origin_x <= w.saturating_sub(side));
            prop_assert!(t.origin_y <= h.saturating_sub(side));
        }
        let mut origins: Vec<_> = plan.tiles.iter().map(|t| (t.origin_x, t.origin_y)).collect();
        origins.sort_unstable();
        origins.dedup();
        prop_assert_eq!(origins.len(), plan.tiles.len());
        prop_assert_eq!(plan_tiles(w, h, side, f64::from(side) / 2.0, 30, seed).unwrap(), plan);
    }

    #[test]
    fn small_plans_pass_the_naive_oracle(w in 1u32..200, h in 1u32..200, seed in any::<u64>()) {
        let plan = plan_tiles(w, h, 48, 24.0, 5, seed).unwrap();
        prop_assert_eq!(uncovered_pixels_naive(&plan.tiles, w, h), 0);
    }

    #[test]
    fn remap_round_trip_is_exact(
        ox in 0u32..100_000,
        oy in 0u32..100_000,
        side in 1u32..2048,
        a in 0.0..1.0f32, b in 0.0..1.0f32, c in 0.0..1.0f32, d in 0.0..1.0f32,
    ) {
        // Single-precision inputs, as detectors emit them.
        let s = side as f32;
        let (a, b, c, d) = (f64::from(a * s), f64::from(b * s), f64::from(c * s), f64::from(d * s));
        let (x0, x1) = (a.min(b), a.max(b));
        let (y0, y1) = (c.min(d), c.max(d));
        let tile = Tile { tile_id: 0, origin_x: ox, origin_y: oy, side, provenance: tilefuse::tiling::Provenance::Poisson };
        let local = BBox::new(x0, y0, x1, y1, 1, 0.5).unwrap();
        let global = remap_to_global(&local, &tile).unwrap();
        prop_assert_eq!(remap_to_local(&global, &tile).unwrap(), local);
        prop_assert_eq!(global.width(), local.width());
        prop_assert_eq!(global.height(), local.height());
    }

    #[test]
    fn poisson_points_are_separated_and_in_domain(
        w in 1.0..1500.0f64,
        h in 1.0..1500.0f64,
        r in 5.0..200.0f64,
        k in 1u32..40,
        seed in any::<u64>(),
    ) {
        let set = sample_poisson(SampleDomain::new(w, h).unwrap(), r, k, seed).unwrap();
        prop_assert!(!set.is_empty());
        prop_assert!(verify_min_distance(&set));
        for p in &set.points {
            prop_assert!((0.0..=w).contains(&p.x) && (0.0..=h).contains(&p.y));
        }
        // Disks of radius r/2 around the points are disjoint and lie inside
        // the domain grown by r/2 on every side.
        let grown = (w + r) * (h + r);
        prop_assert!(set.len() as f64 <= 4.0 * grown / (std::f64::consts::PI * r * r) * 1.05);
        prop_assert_eq!(sample_poisson(SampleDomain::new(w, h).unwrap(), r, k, seed).unwrap(), set);
    }
}

use proptest::prelude::*;

use tilefuse::raster::ImageRaster;
use tilefuse::synthgen::{
    check_manifest_labels, mix_datasets, original_share, paint_boxes, random_scene, sample_crops,
    write_crops, LabeledTile, MixManifest, Origin, SceneSpec,
};

fn pool(prefix: &str, n: usize) -> Vec<LabeledTile> {
    (0..n)
        .map(|i| LabeledTile {
            raster: format!("{prefix}/{i}.png").into(),
            label: format!("{prefix}/{i}.txt").into(),
        })
        .collect()
}

#[test]
fn written_crops_round_trip_through_a_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let spec = SceneSpec {
        width: 1500,
        height: 1200,
        objects: 60,
        min_side: 20.0,
        max_side: 60.0,
        classes: 2,
    };
    let gt = random_scene("scene", &spec, 8).unwrap();
    let mut img = ImageRaster::zeros(1500, 1200, 3);
    paint_boxes(&mut img, &gt.boxes, &[255, 255, 255]);

    let orig = write_crops(&sample_crops(&img, &gt, 640, 12, 1, 0.25).unwrap(), &dir.path().join("o"), "o").unwrap();
    let synth = write_crops(&sample_crops(&img, &gt, 640, 12, 2, 0.25).unwrap(), &dir.path().join("s"), "s").unwrap();
    assert_eq!(tilefuse::synthgen::list_labeled_tiles(&dir.path().join("o")).unwrap(), orig);

    let m = mix_datasets(&orig, &synth, 40.0, Some(10), 5).unwrap();
    let path = dir.path().join("mix.jsonl");
    m.write(&path).unwrap();
    let entries = MixManifest::read_entries(&path).unwrap();
    assert_eq!(entries, m.entries);
    assert!(check_manifest_labels(&entries, 640).unwrap() > 0);

    let crop = ImageRaster::read(&entries[0].raster).unwrap();
    assert_eq!((crop.width(), crop.height(), crop.channels()), (640, 640, 3));
}

#[test]
fn crop_labels_cover_painted_pixels() {
    // Every fully contained object's label box encloses exactly its painted block.
    let spec = SceneSpec {
        width: 800,
        height: 800,
        objects: 30,
        min_side: 10.0,
        max_side: 30.0,
        classes: 1,
    };
    let gt = random_scene("p", &spec, 2).unwrap();
    let mut img = ImageRaster::zeros(800, 800, 1);
    paint_boxes(&mut img, &gt.boxes, &[200]);
    for crop in sample_crops(&img, &gt, 320, 8, 4, 0.25).unwrap() {
        let lit = crop.raster.data().iter().filter(|&&v| v > 0).count() as f64;
        let labelled: f64 = crop.labels.boxes.iter().map(|b| b.area()).sum();
        // Labels drop slivers under 25% visibility, never add pixels.
        assert!(labelled <= lit + 1e-9);
    }
}

proptest! {
    #[test]
    fn mix_proportions_within_one_item(
        target in 1usize..2000,
        pct in 0.0..=100.0f64,
        seed in any::<u64>(),
    ) {
        let m = mix_datasets(&pool("o", 2000), &pool("s", 2000), pct, Some(target), seed).unwrap();
        let orig = m.entries.iter().filter(|e| e.origin == Origin::Original).count();
        prop_assert_eq!(m.len(), target);
        prop_assert!((orig as f64 - target as f64 * pct / 100.0).abs() <= 1.0);
        prop_assert_eq!(orig, original_share(target, pct));
        prop_assert_eq!(m.clone(), mix_datasets(&pool("o", 2000), &pool("s", 2000), pct, Some(target), seed).unwrap());
    }
}

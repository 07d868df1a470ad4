//! Cut labeled crops from an annotated canvas and mix them with an
//! "original" pool at every ratio used for retraining experiments.

use tilefuse::raster::ImageRaster;
use tilefuse::synthgen::{
    mix_datasets, paint_boxes, random_scene, sample_crops, write_crops, Origin, SceneSpec,
};

fn main() -> tilefuse::Result<()> {
    let dir = std::env::temp_dir().join("tilefuse-synthetic-mix");
    let spec = SceneSpec {
        width: 2000,
        height: 2000,
        objects: 40,
        min_side: 20.0,
        max_side: 60.0,
        classes: 3,
    };
    let gt = random_scene("canvas", &spec, 5)?;
    let mut canvas = ImageRaster::zeros(2000, 2000, 1);
    paint_boxes(&mut canvas, &gt.boxes, &[255]);

    let original = write_crops(&sample_crops(&canvas, &gt, 640, 50, 1, 0.25)?, &dir.join("orig"), "orig")?;
    let synthetic = write_crops(&sample_crops(&canvas, &gt, 640, 50, 2, 0.25)?, &dir.join("synth"), "synth")?;
    println!("{} original / {} synthetic tiles under {}", original.len(), synthetic.len(), dir.display());

    for pct in [0.0, 20.0, 40.0, 60.0, 80.0] {
        let m = mix_datasets(&original, &synthetic, pct, None, 9)?;
        let orig = m.entries.iter().filter(|e| e.origin == Origin::Original).count();
        println!("{pct:>3}% original -> {orig:>2} original + {:>2} synthetic", m.len() - orig);
    }
    Ok(())
}

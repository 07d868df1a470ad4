//! Compare tile sides 320 / 640 / 1280 on one synthetic scene.

use std::path::Path;

use tilefuse::detector::{DetectorSpec, NoiseProfile, ScaleMiss};
use tilefuse::pipeline::{run_scene, sweep_table, PipelineConfig, Scene, SweepRow, SWEEP_SIDES};
use tilefuse::synthgen::{random_scene, SceneSpec};

fn main() -> tilefuse::Result<()> {
    let spec = SceneSpec {
        width: 4000,
        height: 3000,
        objects: 150,
        min_side: 12.0,
        max_side: 48.0,
        classes: 2,
    };
    let scene = Scene::new("sweep", 4000, 3000, None, Some(random_scene("sweep", &spec, 3)?))?;
    let profile = NoiseProfile {
        scale_miss: Some(ScaleMiss::default()),
        ..NoiseProfile::default()
    };
    let mut rows = Vec::new();
    for side in SWEEP_SIDES {
        let cfg = PipelineConfig {
            side,
            detectors: vec![DetectorSpec::synthetic("scaled", profile.clone())],
            ..PipelineConfig::default()
        };
        rows.push(SweepRow::from_run(&run_scene(&scene, &cfg, Path::new("tiles"))?));
    }
    print!("{}", sweep_table(&rows));
    Ok(())
}

//! Merge two detectors' overlapping outputs with EIoU-ranked NMS.

use tilefuse::detector::{DetectionSet, DetectorSpec, Frame, NoiseProfile};
use tilefuse::fusion::{ensemble_merge, FusionConfig};
use tilefuse::BBox;

fn set(name: &str, boxes: Vec<BBox>) -> DetectionSet {
    DetectionSet {
        detector_name: name.into(),
        tile_id: 0,
        frame: Frame::Global,
        boxes,
    }
}

fn main() -> tilefuse::Result<()> {
    let a = DetectorSpec::synthetic("yolo-like", NoiseProfile::identity());
    let b = DetectorSpec::synthetic("ssd-like", NoiseProfile::identity()).with_weight(0.8);

    let from_a = set(
        &a.name,
        vec![
            BBox::new(100.0, 100.0, 140.0, 130.0, 0, 0.92)?,
            BBox::new(300.0, 40.0, 330.0, 90.0, 1, 0.40)?,
        ],
    );
    let from_b = set(
        &b.name,
        vec![
            BBox::new(102.0, 99.0, 141.0, 131.0, 0, 0.95)?,
            BBox::new(500.0, 500.0, 520.0, 520.0, 0, 0.20)?,
        ],
    );

    let cfg = FusionConfig::default();
    let fused = ensemble_merge(&[(a, vec![from_a]), (b, vec![from_b])], &cfg, "demo", 640, 640)?;
    for f in &fused.boxes {
        println!(
            "class {} score {:.3} from {} source(s): {:?}",
            f.bbox.class_id(),
            f.bbox.score(),
            f.source_count,
            f.bbox.corners()
        );
    }
    print!("{}", fused.to_yolo());
    Ok(())
}

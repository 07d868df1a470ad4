//! Score a ranked detection list: counts, P/R/F1 and AP.

use tilefuse::eval::{average_precision, evaluate, EvalConfig, Interpolation};
use tilefuse::{AnnotationSet, BBox};

fn main() -> tilefuse::Result<()> {
    let gt = AnnotationSet::new("scene", 200, 200).with_boxes(vec![
        BBox::gt(0.0, 0.0, 10.0, 10.0, 0)?,
        BBox::gt(20.0, 20.0, 30.0, 30.0, 0)?,
        BBox::gt(50.0, 50.0, 80.0, 70.0, 1)?,
    ]);
    // hit, miss, hit for class 0; one clean hit for class 1.
    let dets = vec![
        BBox::new(0.0, 0.0, 10.0, 10.0, 0, 0.9)?,
        BBox::new(100.0, 100.0, 110.0, 110.0, 0, 0.8)?,
        BBox::new(21.0, 20.0, 31.0, 30.0, 0, 0.7)?,
        BBox::new(50.0, 51.0, 80.0, 70.0, 1, 0.6)?,
    ];

    let report = evaluate(&dets, &gt, &EvalConfig::default());
    print!("{report}");

    let class0: Vec<BBox> = dets.iter().filter(|b| b.class_id() == 0).copied().collect();
    let gt0: Vec<BBox> = gt.boxes.iter().filter(|b| b.class_id() == 0).copied().collect();
    let eleven = average_precision(&class0, &gt0, 0.5, Interpolation::ElevenPoint);
    println!("class 0 AP, 11-point: {eleven:.4}");
    Ok(())
}

//! Greedy NMS versus APC suppression on a small object in front of a large one.

use apc_detect::io::small_object_fixture;
use apc_detect::suppression::{apc_suppress, nms_all, ApcSuppressionConfig};

fn main() -> apc_detect::Result<()> {
    let (vocab, scene) = small_object_fixture();
    let cfg = ApcSuppressionConfig::default();
    for o in &scene.annotations.objects {
        println!(
            "ground truth {}: {:.3?}",
            vocab.name_of(o.label),
            o.bbox.to_array()
        );
    }
    let nms = nms_all(&scene.detections, &cfg.suppression);
    let apc = apc_suppress(&scene.detections, Some(&scene.image), &cfg)?;
    for (name, kept) in [("nms", &nms), ("apc", &apc)] {
        println!("{name}: {} detections", kept.len());
        for d in kept {
            println!(
                "  row {} conf {:.2} box {:.3?}",
                d.row,
                d.confidence,
                d.bbox.to_array()
            );
        }
    }
    Ok(())
}

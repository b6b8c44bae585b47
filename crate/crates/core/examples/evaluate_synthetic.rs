//! Synthesize a corpus, suppress with NMS and APC, and compare mAP.

use apc_detect::eval::{compare, evaluate, render_table, EvalConfig};
use apc_detect::io::{synth_corpus, ImageDetections, SynthSpec};
use apc_detect::suppression::{apc_suppress, nms_all, ApcSuppressionConfig};

fn main() -> apc_detect::Result<()> {
    let spec = SynthSpec {
        seed: 7,
        ..SynthSpec::default()
    };
    let (vocab, scenes) = synth_corpus(&spec, 50)?;
    let cfg = ApcSuppressionConfig::default();
    let gts: Vec<_> = scenes.iter().map(|s| s.annotations.clone()).collect();

    let mut nms = Vec::new();
    let mut apc = Vec::new();
    for s in &scenes {
        let image_id = s.detections.image_id.clone();
        nms.push(ImageDetections {
            image_id: image_id.clone(),
            detections: nms_all(&s.detections, &cfg.suppression),
        });
        apc.push(ImageDetections {
            image_id,
            detections: apc_suppress(&s.detections, Some(&s.image), &cfg)?,
        });
    }
    let eval = EvalConfig::default();
    let a = evaluate(&nms, &gts, &vocab, &eval)?;
    let b = evaluate(&apc, &gts, &vocab, &eval)?;
    print!("{}", render_table(&[("NMS", &a), ("APC", &b)]));
    let c = compare(&a, &b)?;
    println!(
        "mAP change: {:+.2} points",
        c.map_delta_points.unwrap_or(f64::NAN)
    );
    Ok(())
}

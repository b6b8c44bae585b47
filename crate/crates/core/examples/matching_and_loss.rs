//! Match two objects to the default boxes and score a perfect and a noisy prediction.

use apc_detect::anchors::{generate, AnchorConfig};
use apc_detect::geometry::{BBox, Offsets};
use apc_detect::losses::{total_loss, LossOptions, PredictionMatrix};
use apc_detect::matching::{match_boxes, GroundTruthObject, BACKGROUND};

fn main() -> apc_detect::Result<()> {
    let defaults = generate(&AnchorConfig::ssd300())?.boxes;
    let objects = [
        GroundTruthObject {
            label: 2,
            bbox: BBox::new(0.3, 0.4, 0.25, 0.3),
        },
        GroundTruthObject {
            label: 3,
            bbox: BBox::new(0.7, 0.6, 0.4, 0.5),
        },
    ];
    let m = match_boxes(&defaults, &objects, 0.5, 3)?;
    println!("{} positives, {} negatives", m.pos.len(), m.neg.len());

    let one_hot = m
        .labels()
        .into_iter()
        .map(|l| {
            let mut row = vec![0.0; 3];
            row[l.unwrap_or(BACKGROUND) - 1] = 1.0;
            row
        })
        .collect();
    let perfect = PredictionMatrix {
        class_probs: one_hot,
        offsets: m.targets.clone(),
    };
    let loss = total_loss(&perfect, &m, &LossOptions::default())?;
    println!("perfect prediction: total {:.6}", loss.total);

    let noisy = PredictionMatrix {
        class_probs: vec![vec![0.6, 0.2, 0.2]; defaults.len()],
        offsets: m
            .targets
            .iter()
            .map(|t| Offsets(t.0.map(|v| v + 0.3)))
            .collect(),
    };
    let loss = total_loss(&noisy, &m, &LossOptions::default())?;
    println!(
        "noisy prediction: summed classification {:.4}, summed localization {:.4}, total {:.4}",
        loss.classification, loss.localization, loss.total
    );
    Ok(())
}

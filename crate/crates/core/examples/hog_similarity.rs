//! HOG appearance similarity between boxes of the small-object fixture.

use apc_detect::features::{appearance_similarity, describe_box, HogConfig};
use apc_detect::io::small_object_fixture;

fn main() -> apc_detect::Result<()> {
    let (_, scene) = small_object_fixture();
    let cfg = HogConfig::default();
    let rows = &scene.detections.rows;
    let descriptors = rows
        .iter()
        .map(|r| describe_box(&scene.image, &r.bbox, &cfg))
        .collect::<apc_detect::Result<Vec<_>>>()?;
    println!("descriptor length {}", descriptors[0].len());
    for (i, a) in descriptors.iter().enumerate() {
        let line: Vec<String> = descriptors
            .iter()
            .map(|b| appearance_similarity(a, b).map(|s| format!("{s:8.3}")))
            .collect::<apc_detect::Result<_>>()?;
        println!("row {i}: {}", line.join(" "));
    }
    Ok(())
}

//! Default boxes for the SSD-300 feature-map layout.

use apc_detect::anchors::{generate, AnchorConfig};

fn main() -> apc_detect::Result<()> {
    let config = AnchorConfig::ssd300();
    let set = generate(&config)?;
    println!("{} default boxes", set.len());
    for (k, range) in set.per_map_ranges.iter().enumerate() {
        let (s, s_next) = config.scale(k + 1);
        let first = set.boxes[range.start];
        println!(
            "map {}: {:>5} boxes, scale {s:.2} (next {s_next:.2}), first box {:.4?}",
            k + 1,
            range.len(),
            first.to_array()
        );
    }
    Ok(())
}

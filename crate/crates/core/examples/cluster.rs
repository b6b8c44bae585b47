//! Affinity propagation on two groups of points.

use apc_detect::clustering::{median, run, ApcParams, SimilarityMatrix};

fn main() -> apc_detect::Result<()> {
    let points: [(f64, f64); 6] = [
        (0.1, 0.1),
        (0.15, 0.12),
        (0.12, 0.2),
        (0.8, 0.8),
        (0.85, 0.75),
        (0.9, 0.85),
    ];
    let q = points.len();
    let mut data = vec![0.0; q * q];
    for (i, a) in points.iter().enumerate() {
        for (j, b) in points.iter().enumerate() {
            data[i * q + j] = -((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2));
        }
    }
    let mut s = SimilarityMatrix::new(q, data)?;
    let pref = median(&s.off_diagonal()).unwrap_or(0.0);
    s.set_preferences(&vec![pref; q]);

    let out = run(&s, &ApcParams::default())?;
    println!(
        "{} iterations (converged: {}), exemplars {:?}",
        out.iterations, out.converged, out.exemplars
    );
    for (i, e) in out.assignments.iter().enumerate() {
        println!("point {i} {:?} -> exemplar {e}", points[i]);
    }
    Ok(())
}

//! Independent reference implementations shared by the integration suites.
#![allow(dead_code, clippy::needless_range_loop)]

use apc_detect::clustering::SimilarityMatrix;
use apc_detect::geometry::BBox;
use apc_detect::suppression::{DetectionRow, DetectionSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// IoU by counting pixel centres of a `res × res` raster covering the unit square.
pub fn pixel_iou(a: &BBox, b: &BBox, res: usize) -> f64 {
    let inside = |bx: &BBox, x: f64, y: f64| {
        x >= bx.cx - bx.w / 2.0
            && x < bx.cx + bx.w / 2.0
            && y >= bx.cy - bx.h / 2.0
            && y < bx.cy + bx.h / 2.0
    };
    let (mut inter, mut union) = (0usize, 0usize);
    for py in 0..res {
        let y = (py as f64 + 0.5) / res as f64;
        for px in 0..res {
            let x = (px as f64 + 0.5) / res as f64;
            let (ia, ib) = (inside(a, x, y), inside(b, x, y));
            inter += (ia && ib) as usize;
            union += (ia || ib) as usize;
        }
    }
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Best net similarity over every non-empty exemplar set, by enumeration.
pub fn brute_force_optimum(s: &SimilarityMatrix) -> (f64, Vec<usize>) {
    let q = s.len();
    assert!(q <= 16);
    let mut best = (f64::NEG_INFINITY, vec![]);
    for mask in 1u32..(1 << q) {
        let ex: Vec<usize> = (0..q).filter(|i| mask & (1 << i) != 0).collect();
        let mut net = 0.0;
        for i in 0..q {
            if mask & (1 << i) != 0 {
                net += s.get(i, i);
            } else {
                net += ex
                    .iter()
                    .map(|&e| s.get(i, e))
                    .fold(f64::NEG_INFINITY, f64::max);
            }
        }
        if net > best.0 {
            best = (net, ex);
        }
    }
    best
}

/// Literal loop transcription of the message updates (damped), kept
/// deliberately naive: every max and sum is recomputed from scratch.
pub fn naive_messages(
    s: &SimilarityMatrix,
    damping: f64,
    iterations: usize,
) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let q = s.len();
    let mut r = vec![vec![0.0; q]; q];
    let mut a = vec![vec![0.0; q]; q];
    for _ in 0..iterations {
        let mut r_new = vec![vec![0.0; q]; q];
        for i in 0..q {
            for j in 0..q {
                let mut m = f64::NEG_INFINITY;
                for k in 0..q {
                    if k != j {
                        m = m.max(s.get(i, k) + a[i][k]);
                    }
                }
                r_new[i][j] = damping * r[i][j] + (1.0 - damping) * (s.get(i, j) - m);
            }
        }
        r = r_new;
        let mut a_new = vec![vec![0.0; q]; q];
        for i in 0..q {
            for j in 0..q {
                let update = if i == j {
                    let mut sum = 0.0;
                    for k in 0..q {
                        if k != i {
                            sum += r[k][j].max(0.0);
                        }
                    }
                    sum
                } else {
                    let mut sum = 0.0;
                    for k in 0..q {
                        if k != i && k != j {
                            sum += r[k][j].max(0.0);
                        }
                    }
                    (r[j][j] + sum).min(0.0)
                };
                a_new[i][j] = damping * a[i][j] + (1.0 - damping) * update;
            }
        }
        a = a_new;
    }
    (r, a)
}

/// Similarity `-‖x_i - x_j‖²` with a shared preference on the diagonal.
pub fn points_similarity(points: &[(f64, f64)], preference: Option<f64>) -> SimilarityMatrix {
    let q = points.len();
    let mut rows = vec![vec![0.0; q]; q];
    for i in 0..q {
        for j in 0..q {
            let (dx, dy) = (points[i].0 - points[j].0, points[i].1 - points[j].1);
            rows[i][j] = -(dx * dx + dy * dy);
        }
    }
    let mut s = SimilarityMatrix::from_rows(rows).unwrap();
    let pref = preference
        .unwrap_or_else(|| apc_detect::clustering::median(&s.off_diagonal()).unwrap_or(0.0));
    s.set_preferences(&vec![pref; q]);
    s
}

/// Two tight groups far apart; returns points and group membership.
pub fn two_groups(seed: u64, sizes: (usize, usize)) -> (Vec<(f64, f64)>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers = [(0.0, 0.0), (10.0, 10.0)];
    let mut pts = Vec::new();
    let mut groups = Vec::new();
    for (g, n) in [sizes.0, sizes.1].into_iter().enumerate() {
        for _ in 0..n {
            pts.push((
                centers[g].0 + rng.random_range(-0.3..0.3),
                centers[g].1 + rng.random_range(-0.3..0.3),
            ));
            groups.push(g);
        }
    }
    (pts, groups)
}

/// `achieved` within 5% of `optimum`, measured relative to `|optimum|`.
pub fn within_five_percent(achieved: f64, optimum: f64) -> bool {
    achieved >= optimum - 0.05 * optimum.abs() - 1e-12
}

/// Corner-form IoU written out from first principles.
pub fn reference_iou(a: &BBox, b: &BBox) -> f64 {
    let (ax0, ax1, ay0, ay1) = (
        a.cx - a.w / 2.0,
        a.cx + a.w / 2.0,
        a.cy - a.h / 2.0,
        a.cy + a.h / 2.0,
    );
    let (bx0, bx1, by0, by1) = (
        b.cx - b.w / 2.0,
        b.cx + b.w / 2.0,
        b.cy - b.h / 2.0,
        b.cy + b.h / 2.0,
    );
    let iw = (ax1.min(bx1) - ax0.max(bx0)).max(0.0);
    let ih = (ay1.min(by1) - ay0.max(by0)).max(0.0);
    let inter = iw * ih;
    let union = a.w * a.h + b.w * b.h - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// Greedy suppression as a literal loop: while candidates remain, take the
/// most confident (lowest row on ties), keep it, and drop every remaining
/// candidate overlapping it by more than `threshold`. Returns kept rows.
pub fn reference_nms(set: &DetectionSet, class: usize, threshold: f64, floor: f64) -> Vec<usize> {
    let mut remaining: Vec<usize> = (0..set.rows.len())
        .filter(|&i| {
            let s = &set.rows[i].scores;
            let max = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let first_max = s.iter().position(|v| *v == max).unwrap() + 1;
            first_max == class && max >= floor
        })
        .collect();
    let conf = |i: usize| set.rows[i].scores[class - 1];
    let mut kept = Vec::new();
    while !remaining.is_empty() {
        let mut best = remaining[0];
        for &i in &remaining {
            if conf(i) > conf(best) || (conf(i) == conf(best) && i < best) {
                best = i;
            }
        }
        kept.push(best);
        remaining.retain(|&i| {
            i != best && reference_iou(&set.rows[i].bbox, &set.rows[best].bbox) <= threshold
        });
    }
    kept
}

/// Random detection set over `num_classes` classes. Confidences are drawn
/// from a coarse grid when `ties` is set.
pub fn random_detection_set(
    rng: &mut ChaCha8Rng,
    q: usize,
    num_classes: usize,
    ties: bool,
) -> DetectionSet {
    let rows = (0..q)
        .map(|_| {
            let mut scores: Vec<f64> = (0..num_classes)
                .map(|_| {
                    let v: f64 = rng.random();
                    if ties {
                        (v * 8.0).round() / 8.0 + 0.01
                    } else {
                        v + 0.01
                    }
                })
                .collect();
            let z: f64 = scores.iter().sum();
            scores.iter_mut().for_each(|s| *s /= z);
            let (cx, cy) = (rng.random_range(0.1..0.9), rng.random_range(0.1..0.9));
            let (w, h) = (rng.random_range(0.05..0.4), rng.random_range(0.05..0.4));
            DetectionRow {
                scores,
                bbox: BBox::new(cx, cy, w, h),
            }
        })
        .collect();
    DetectionSet {
        image_id: "random".into(),
        rows,
    }
}

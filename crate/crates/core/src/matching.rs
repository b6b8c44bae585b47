//! Threshold matching of default boxes against ground truth.
//!
//! A default box is positive when its best overlap with any ground-truth box
//! reaches the threshold; it is assigned that best ground truth (lowest index
//! on ties) and regresses towards it with [`encode`] offsets. Every other box
//! is negative. There is no bipartite "best default per object" pre-pass.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{encode, iou, BBox, Offsets};

/// Class ids are 1-based; id 1 is the background class.
pub type ClassId = usize;

pub const BACKGROUND: ClassId = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthObject {
    pub label: ClassId,
    #[serde(rename = "box")]
    pub bbox: BBox,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub gt_index: usize,
    pub label: ClassId,
    pub overlap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub num_classes: usize,
    /// Per default box, the matched ground truth or `None` for negatives.
    pub assignments: Vec<Option<Assignment>>,
    /// Regression targets; zero for negatives.
    pub targets: Vec<Offsets>,
    /// 0-based indices of positive default boxes, ascending.
    pub pos: Vec<usize>,
    /// 0-based indices of negative default boxes, ascending.
    pub neg: Vec<usize>,
}

impl MatchResult {
    pub fn len(&self) -> usize {
        self.assignments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignments.is_empty()
    }

    /// Per-box class label, `None` for negatives.
    pub fn labels(&self) -> Vec<Option<ClassId>> {
        self.assignments
            .iter()
            .map(|a| a.map(|a| a.label))
            .collect()
    }

    /// Dense one-hot class matrix, `n × num_classes`.
    pub fn class_matrix(&self) -> Vec<Vec<f64>> {
        self.assignments
            .iter()
            .map(|a| {
                let mut row = vec![0.0; self.num_classes];
                if let Some(a) = a {
                    row[a.label - 1] = 1.0;
                }
                row
            })
            .collect()
    }
}

pub fn match_boxes(
    defaults: &[BBox],
    gts: &[GroundTruthObject],
    threshold: f64,
    num_classes: usize,
) -> Result<MatchResult> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::Invalid(format!(
            "overlap threshold must lie in (0, 1], got {threshold}"
        )));
    }
    if defaults.is_empty() {
        return Err(Error::Invalid("no default boxes".into()));
    }
    for (j, g) in gts.iter().enumerate() {
        if g.label == BACKGROUND || g.label > num_classes || g.label == 0 {
            return Err(Error::Invalid(format!(
                "ground truth {j} has label {} outside 2..={num_classes}",
                g.label
            )));
        }
    }

    let mut assignments = Vec::with_capacity(defaults.len());
    let mut targets = Vec::with_capacity(defaults.len());
    let (mut pos, mut neg) = (Vec::new(), Vec::new());
    for (i, d) in defaults.iter().enumerate() {
        let mut best: Option<(usize, f64)> = None;
        for (j, g) in gts.iter().enumerate() {
            let o = iou(d, &g.bbox);
            if best.is_none_or(|(_, b)| o > b) {
                best = Some((j, o));
            }
        }
        match best {
            Some((j, overlap)) if overlap >= threshold => {
                let g = &gts[j];
                assignments.push(Some(Assignment {
                    gt_index: j,
                    label: g.label,
                    overlap,
                }));
                targets.push(encode(&g.bbox, d));
                pos.push(i);
            }
            _ => {
                assignments.push(None);
                targets.push(Offsets::default());
                neg.push(i);
            }
        }
    }
    Ok(MatchResult {
        num_classes,
        assignments,
        targets,
        pos,
        neg,
    })
}

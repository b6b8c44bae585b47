//! Final-detection selection from per-box class confidences.
//!
//! Two strategies are provided: greedy non-maximum suppression and
//! exemplar selection by affinity propagation over a similarity that mixes
//! box overlap with HOG appearance distance.

use serde::{Deserialize, Serialize};

use crate::clustering::{self, ApcParams, SimilarityMatrix};
use crate::error::{Error, Result};
use crate::features::{appearance_similarity, describe_box, HogConfig, HogDescriptor, ImageRaster};
use crate::geometry::{iou, jaccard_distance, BBox};
use crate::matching::{ClassId, BACKGROUND};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRow {
    pub scores: Vec<f64>,
    #[serde(rename = "box")]
    pub bbox: BBox,
}

impl DetectionRow {
    /// Highest-scoring class (lowest id on ties) and its score.
    pub fn top_class(&self) -> (ClassId, f64) {
        let mut best = 0;
        for (c, s) in self.scores.iter().enumerate() {
            if *s > self.scores[best] {
                best = c;
            }
        }
        (best + 1, self.scores[best])
    }

    pub fn score(&self, class: ClassId) -> f64 {
        self.scores[class - 1]
    }
}

/// All predicted rows of one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionSet {
    pub image_id: String,
    pub rows: Vec<DetectionRow>,
}

impl DetectionSet {
    pub fn num_classes(&self) -> Option<usize> {
        self.rows.first().map(|r| r.scores.len())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FinalDetection {
    pub class_id: ClassId,
    pub confidence: f64,
    #[serde(rename = "box")]
    pub bbox: BBox,
    /// Index of the source row in the input [`DetectionSet`].
    pub row: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PreferenceMode {
    /// Diagonal is the raw top-class confidence.
    Raw,
    /// Confidences mapped affinely onto `[min, median]` of the off-diagonal
    /// similarities, keeping their order.
    Scaled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimilarityConvention {
    /// Location term `1 - iou` added as is.
    Literal,
    /// Location term `-(1 - iou)`, so overlapping boxes are more similar.
    Negated,
}

/// The `suppression` section of the configuration file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SuppressionConfig {
    /// Overlap above which greedy NMS discards a box.
    pub iou_threshold: f64,
    pub confidence_floor: f64,
    /// Weight of the appearance term, in `[0, 1]`.
    pub lambda: f64,
    pub per_class: bool,
    pub preference_mode: PreferenceMode,
    pub similarity_convention: SimilarityConvention,
}

impl Default for SuppressionConfig {
    fn default() -> Self {
        Self {
            iou_threshold: 0.5,
            confidence_floor: 0.01,
            lambda: 1.0,
            per_class: true,
            preference_mode: PreferenceMode::Scaled,
            similarity_convention: SimilarityConvention::Negated,
        }
    }
}

impl SuppressionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.iou_threshold > 0.0 && self.iou_threshold <= 1.0) {
            return Err(Error::Config(format!(
                "iou_threshold must lie in (0, 1], got {}",
                self.iou_threshold
            )));
        }
        if !(0.0..=1.0).contains(&self.confidence_floor) {
            return Err(Error::Config("confidence_floor must lie in [0, 1]".into()));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::Config(format!(
                "lambda must lie in [0, 1], got {}",
                self.lambda
            )));
        }
        Ok(())
    }
}

/// Everything the clustering pipeline needs.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ApcSuppressionConfig {
    pub suppression: SuppressionConfig,
    pub apc: ApcParams,
    pub hog: HogConfig,
}

impl ApcSuppressionConfig {
    pub fn validate(&self) -> Result<()> {
        self.suppression.validate()?;
        self.apc.validate()?;
        self.hog.validate()
    }

    pub fn needs_pixels(&self) -> bool {
        self.suppression.lambda > 0.0
    }
}

/// Greedy NMS for one class over rows whose top class is `class`.
///
/// Confidence ties resolve towards the lower row index.
pub fn nms(
    dets: &DetectionSet,
    class: ClassId,
    iou_threshold: f64,
    confidence_floor: f64,
) -> Vec<FinalDetection> {
    let mut candidates: Vec<FinalDetection> = dets
        .rows
        .iter()
        .enumerate()
        .filter_map(|(row, r)| {
            let (top, conf) = r.top_class();
            (top == class && conf >= confidence_floor).then_some(FinalDetection {
                class_id: class,
                confidence: conf,
                bbox: r.bbox,
                row,
            })
        })
        .collect();
    candidates.sort_by(|a, b| {
        b.confidence
            .total_cmp(&a.confidence)
            .then(a.row.cmp(&b.row))
    });

    let mut kept: Vec<FinalDetection> = Vec::new();
    let mut suppressed = vec![false; candidates.len()];
    for i in 0..candidates.len() {
        if suppressed[i] {
            continue;
        }
        let keep = candidates[i];
        for (j, other) in candidates.iter().enumerate().skip(i + 1) {
            if !suppressed[j] && iou(&keep.bbox, &other.bbox) > iou_threshold {
                suppressed[j] = true;
            }
        }
        kept.push(keep);
    }
    kept
}

/// Per-class NMS over every non-background class, in class order.
pub fn nms_all(dets: &DetectionSet, cfg: &SuppressionConfig) -> Vec<FinalDetection> {
    let Some(l) = dets.num_classes() else {
        return Vec::new();
    };
    (1..=l)
        .filter(|&c| c != BACKGROUND)
        .flat_map(|c| nms(dets, c, cfg.iou_threshold, cfg.confidence_floor))
        .collect()
}

/// Top-class confidence of every row.
pub fn preference(rows: &[DetectionRow]) -> Vec<f64> {
    rows.iter().map(|r| r.top_class().1).collect()
}

/// Diagonal values for the chosen preference mode.
pub fn preference_diagonal(
    confidences: &[f64],
    off_diagonal: &[f64],
    mode: PreferenceMode,
) -> Vec<f64> {
    match mode {
        PreferenceMode::Raw => confidences.to_vec(),
        PreferenceMode::Scaled => {
            let Some(median) = clustering::median(off_diagonal) else {
                return confidences.to_vec();
            };
            let min = off_diagonal.iter().copied().fold(f64::INFINITY, f64::min);
            let lo = confidences.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = confidences
                .iter()
                .copied()
                .fold(f64::NEG_INFINITY, f64::max);
            confidences
                .iter()
                .map(|c| {
                    if hi > lo {
                        min + (c - lo) / (hi - lo) * (median - min)
                    } else {
                        median
                    }
                })
                .collect()
        }
    }
}

/// Assembles the similarity matrix from boxes, optional descriptors and
/// confidences. Descriptors may be omitted only when `lambda == 0`.
pub fn assemble_similarity(
    boxes: &[BBox],
    descriptors: Option<&[HogDescriptor]>,
    confidences: &[f64],
    cfg: &SuppressionConfig,
) -> Result<SimilarityMatrix> {
    let q = boxes.len();
    let mut data = vec![0.0; q * q];
    let mut off = Vec::with_capacity(q * q.saturating_sub(1));
    for i in 0..q {
        for j in 0..q {
            if i == j {
                continue;
            }
            let alpha = jaccard_distance(&boxes[i], &boxes[j]);
            let location = match cfg.similarity_convention {
                SimilarityConvention::Literal => alpha,
                SimilarityConvention::Negated => -alpha,
            };
            let appearance = if cfg.lambda > 0.0 {
                let d = descriptors.ok_or_else(|| {
                    Error::Invalid("appearance weight is positive but no descriptors given".into())
                })?;
                appearance_similarity(&d[i], &d[j])?
            } else {
                0.0
            };
            let v = 0.5 * (location + cfg.lambda * appearance);
            data[i * q + j] = v;
            off.push(v);
        }
    }
    let diag = preference_diagonal(confidences, &off, cfg.preference_mode);
    for (i, p) in diag.into_iter().enumerate() {
        data[i * q + i] = p;
    }
    SimilarityMatrix::new(q, data)
}

/// Similarity matrix of `rows` over `image`.
pub fn similarity_matrix(
    rows: &[DetectionRow],
    image: Option<&ImageRaster>,
    cfg: &ApcSuppressionConfig,
) -> Result<SimilarityMatrix> {
    let boxes: Vec<BBox> = rows.iter().map(|r| r.bbox).collect();
    let descriptors = if cfg.needs_pixels() {
        let img = image.ok_or_else(|| Error::Invalid("appearance weight needs an image".into()))?;
        Some(
            boxes
                .iter()
                .map(|b| describe_box(img, b, &cfg.hog))
                .collect::<Result<Vec<_>>>()?,
        )
    } else {
        None
    };
    assemble_similarity(
        &boxes,
        descriptors.as_deref(),
        &preference(rows),
        &cfg.suppression,
    )
}

/// Clusters the surviving rows and returns one detection per exemplar.
///
/// Rows are visited in descending confidence, so index ties inside the
/// clustering favour the more confident box. `image` may be `None` when
/// `lambda == 0` or when no row survives the floor.
pub fn apc_suppress(
    dets: &DetectionSet,
    image: Option<&ImageRaster>,
    cfg: &ApcSuppressionConfig,
) -> Result<Vec<FinalDetection>> {
    cfg.validate()?;
    let floor = cfg.suppression.confidence_floor;
    let mut survivors: Vec<(usize, ClassId, f64)> = dets
        .rows
        .iter()
        .enumerate()
        .filter_map(|(i, r)| {
            let (c, conf) = r.top_class();
            (c != BACKGROUND && conf >= floor).then_some((i, c, conf))
        })
        .collect();
    survivors.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)));
    if survivors.is_empty() {
        return Ok(Vec::new());
    }
    if cfg.needs_pixels() && image.is_none() {
        return Err(Error::MissingImage(dets.image_id.clone()));
    }

    let mut groups: Vec<Vec<usize>> = Vec::new();
    if cfg.suppression.per_class {
        let mut classes: Vec<ClassId> = survivors.iter().map(|s| s.1).collect();
        classes.sort_unstable();
        classes.dedup();
        for c in classes {
            groups.push(survivors.iter().filter(|s| s.1 == c).map(|s| s.0).collect());
        }
    } else {
        groups.push(survivors.iter().map(|s| s.0).collect());
    }

    let mut out = Vec::new();
    for group in groups {
        let rows: Vec<DetectionRow> = group.iter().map(|&i| dets.rows[i].clone()).collect();
        let s = similarity_matrix(&rows, image, cfg)?;
        let result = clustering::run(&s, &cfg.apc)?;
        for e in result.exemplars {
            let row = group[e];
            let (class_id, confidence) = dets.rows[row].top_class();
            out.push(FinalDetection {
                class_id,
                confidence,
                bbox: dets.rows[row].bbox,
                row,
            });
        }
    }
    out.sort_by(|a, b| {
        a.class_id
            .cmp(&b.class_id)
            .then(b.confidence.total_cmp(&a.confidence))
            .then(a.row.cmp(&b.row))
    });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::CornerBox;

    fn row(scores: &[f64], b: BBox) -> DetectionRow {
        DetectionRow {
            scores: scores.to_vec(),
            bbox: b,
        }
    }

    fn set(rows: Vec<DetectionRow>) -> DetectionSet {
        DetectionSet {
            image_id: "img".into(),
            rows,
        }
    }

    #[test]
    fn nms_single_box() {
        let d = set(vec![row(&[0.1, 0.9], BBox::new(0.5, 0.5, 0.2, 0.2))]);
        assert_eq!(nms(&d, 2, 0.5, 0.01).len(), 1);
    }

    #[test]
    fn nms_hand_trace() {
        // B overlaps A at iou 0.6; C is disjoint.
        let a = BBox::from_corners(CornerBox::new(0.0, 0.0, 0.5, 0.5));
        let b = BBox::from_corners(CornerBox::new(0.0, 0.0, 0.5, 0.3));
        assert!((iou(&a, &b) - 0.6).abs() < 1e-12);
        let c = BBox::from_corners(CornerBox::new(0.7, 0.7, 0.9, 0.9));
        let d = set(vec![
            row(&[0.1, 0.9], a),
            row(&[0.2, 0.8], b),
            row(&[0.3, 0.7], c),
        ]);
        let kept: Vec<usize> = nms(&d, 2, 0.5, 0.01).iter().map(|k| k.row).collect();
        assert_eq!(kept, vec![0, 2]);
    }

    #[test]
    fn nms_respects_floor_and_class() {
        let b = BBox::new(0.5, 0.5, 0.2, 0.2);
        let d = set(vec![row(&[0.995, 0.005], b), row(&[0.3, 0.7], b)]);
        assert_eq!(nms(&d, 2, 0.5, 0.01).len(), 1);
        assert!(nms_all(
            &set(vec![row(&[0.9, 0.1], b)]),
            &SuppressionConfig::default()
        )
        .is_empty());
    }

    #[test]
    fn preference_examples() {
        let b = BBox::new(0.5, 0.5, 0.2, 0.2);
        assert_eq!(preference(&[row(&[0.25; 4], b)]), vec![0.25]);
        assert_eq!(preference(&[row(&[0.0, 0.0, 1.0], b)]), vec![1.0]);
        assert_eq!(preference(&[row(&[0.1, 0.7, 0.2], b)]), vec![0.7]);
    }

    #[test]
    fn scaled_preferences_keep_order() {
        let off = [-4.0, -1.0, -2.0, -3.0, -5.0, -0.5];
        let d = preference_diagonal(&[0.9, 0.5, 0.7], &off, PreferenceMode::Scaled);
        assert_eq!(d[1], -5.0);
        assert_eq!(d[0], -2.5);
        assert!(d[1] < d[2] && d[2] < d[0]);
        let raw = preference_diagonal(&[0.9, 0.5], &off, PreferenceMode::Raw);
        assert_eq!(raw, vec![0.9, 0.5]);
    }

    fn desc(v: Vec<f64>) -> HogDescriptor {
        HogDescriptor { values: v }
    }

    #[test]
    fn similarity_arithmetic() {
        let b = BBox::new(0.5, 0.5, 0.2, 0.2);
        let cfg = SuppressionConfig {
            preference_mode: PreferenceMode::Raw,
            ..SuppressionConfig::default()
        };
        let same = [desc(vec![0.1, 0.2]), desc(vec![0.1, 0.2])];
        let s = assemble_similarity(&[b, b], Some(&same), &[0.9, 0.8], &cfg).unwrap();
        assert_eq!(s.get(0, 1), 0.0);
        assert_eq!(s.get(1, 1), 0.8);

        let far = BBox::new(0.9, 0.9, 0.1, 0.1);
        let no_app = SuppressionConfig { lambda: 0.0, ..cfg };
        let s = assemble_similarity(&[b, far], None, &[0.9, 0.8], &no_app).unwrap();
        assert_eq!(s.get(0, 1), -0.5);
        let literal = SuppressionConfig {
            similarity_convention: SimilarityConvention::Literal,
            ..no_app
        };
        let s = assemble_similarity(&[b, far], None, &[0.9, 0.8], &literal).unwrap();
        assert_eq!(s.get(0, 1), 0.5);

        let apart = [desc(vec![0.0, 0.0]), desc(vec![2.0, 0.0])];
        let s = assemble_similarity(&[b, b], Some(&apart), &[0.9, 0.8], &cfg).unwrap();
        assert_eq!(s.get(0, 1), -2.0);
        assert_eq!(s.get(1, 0), -2.0);
    }

    #[test]
    fn missing_descriptors_is_error() {
        let b = BBox::new(0.5, 0.5, 0.2, 0.2);
        assert!(
            assemble_similarity(&[b, b], None, &[0.9, 0.8], &SuppressionConfig::default()).is_err()
        );
    }

    #[test]
    fn apc_single_survivor() {
        let d = set(vec![
            row(&[0.1, 0.9], BBox::new(0.5, 0.5, 0.2, 0.2)),
            row(&[0.9, 0.1], BBox::new(0.2, 0.2, 0.2, 0.2)),
        ]);
        let cfg = ApcSuppressionConfig {
            suppression: SuppressionConfig {
                lambda: 0.0,
                ..SuppressionConfig::default()
            },
            ..ApcSuppressionConfig::default()
        };
        let out = apc_suppress(&d, None, &cfg).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].row, 0);
        assert_eq!(out[0].class_id, 2);
    }

    #[test]
    fn apc_empty_and_missing_image() {
        let cfg = ApcSuppressionConfig::default();
        let empty = set(vec![]);
        let img = ImageRaster::filled(8, 8, 1, 0.0);
        assert!(apc_suppress(&empty, Some(&img), &cfg).unwrap().is_empty());
        let d = set(vec![row(&[0.1, 0.9], BBox::new(0.5, 0.5, 0.2, 0.2))]);
        assert!(matches!(
            apc_suppress(&d, None, &cfg),
            Err(Error::MissingImage(_))
        ));
    }

    #[test]
    fn config_validation() {
        let bad = SuppressionConfig {
            lambda: 1.5,
            ..SuppressionConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = SuppressionConfig {
            iou_threshold: 0.0,
            ..SuppressionConfig::default()
        };
        assert!(bad.validate().is_err());
        let parsed: SuppressionConfig = serde_json::from_str(
            r#"{"lambda":0.5,"preference_mode":"raw","similarity_convention":"literal"}"#,
        )
        .unwrap();
        assert_eq!(parsed.preference_mode, PreferenceMode::Raw);
        assert!(serde_json::from_str::<SuppressionConfig>(r#"{"lamda":0.5}"#).is_err());
    }
}

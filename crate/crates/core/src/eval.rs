//! PASCAL-VOC style average precision, mAP and paired method comparison.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{iou, BBox};
use crate::io::{ImageAnnotations, ImageDetections, Vocabulary};
use crate::matching::{ClassId, BACKGROUND};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApMode {
    /// Area under the monotonized precision/recall curve (VOC 2010+).
    AllPoints,
    /// Mean interpolated precision at recall 0, 0.1, …, 1 (VOC 2007).
    ElevenPoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub iou_threshold: f64,
    pub ap_mode: ApMode,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            iou_threshold: 0.5,
            ap_mode: ApMode::AllPoints,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.iou_threshold > 0.0 && self.iou_threshold <= 1.0) {
            return Err(Error::Config(format!(
                "eval iou_threshold must lie in (0, 1], got {}",
                self.iou_threshold
            )));
        }
        Ok(())
    }
}

/// One scored detection of a single class.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredBox {
    pub image_id: String,
    pub confidence: f64,
    pub bbox: BBox,
    pub row: usize,
}

/// Ground-truth box of a single class.
#[derive(Debug, Clone, PartialEq)]
pub struct GtBox {
    pub image_id: String,
    pub bbox: BBox,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassAp {
    /// `None` when the class has no ground truth.
    pub ap: Option<f64>,
    pub num_gt: usize,
    pub num_detections: usize,
    pub true_positives: usize,
    pub false_positives: usize,
}

/// Ranks detections and labels each as a true (`true`) or false positive.
///
/// Order: confidence descending, then image id, then row. A detection is a
/// true positive when its best-overlapping ground truth in the same image
/// reaches the threshold and has not been claimed yet.
pub fn label_detections(dets: &[ScoredBox], gts: &[GtBox], iou_threshold: f64) -> Vec<bool> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| {
        let (x, y) = (&dets[a], &dets[b]);
        y.confidence
            .total_cmp(&x.confidence)
            .then_with(|| x.image_id.cmp(&y.image_id))
            .then(x.row.cmp(&y.row))
    });
    let mut by_image: HashMap<&str, Vec<usize>> = HashMap::new();
    for (i, g) in gts.iter().enumerate() {
        by_image.entry(g.image_id.as_str()).or_default().push(i);
    }
    let mut claimed = vec![false; gts.len()];
    order
        .into_iter()
        .map(|d| {
            let det = &dets[d];
            let mut best: Option<(usize, f64)> = None;
            for &g in by_image.get(det.image_id.as_str()).into_iter().flatten() {
                let o = iou(&det.bbox, &gts[g].bbox);
                if best.is_none_or(|(_, b)| o > b) {
                    best = Some((g, o));
                }
            }
            match best {
                Some((g, o)) if o >= iou_threshold && !claimed[g] => {
                    claimed[g] = true;
                    true
                }
                _ => false,
            }
        })
        .collect()
}

/// Cumulative `(recall, precision)` after each ranked detection.
pub fn precision_recall(labels: &[bool], num_gt: usize) -> Vec<(f64, f64)> {
    let mut tp = 0usize;
    labels
        .iter()
        .enumerate()
        .map(|(k, &hit)| {
            tp += hit as usize;
            (tp as f64 / num_gt as f64, tp as f64 / (k + 1) as f64)
        })
        .collect()
}

pub fn ap_from_curve(curve: &[(f64, f64)], mode: ApMode) -> f64 {
    match mode {
        ApMode::AllPoints => {
            let mut rec = vec![0.0];
            let mut pre = vec![0.0];
            for &(r, p) in curve {
                rec.push(r);
                pre.push(p);
            }
            rec.push(1.0);
            pre.push(0.0);
            for i in (0..pre.len() - 1).rev() {
                pre[i] = pre[i].max(pre[i + 1]);
            }
            (1..rec.len())
                .filter(|&i| rec[i] != rec[i - 1])
                .map(|i| (rec[i] - rec[i - 1]) * pre[i])
                .sum()
        }
        ApMode::ElevenPoint => {
            (0..=10)
                .map(|t| {
                    let t = t as f64 / 10.0;
                    curve
                        .iter()
                        .filter(|(r, _)| *r >= t)
                        .map(|(_, p)| *p)
                        .fold(0.0, f64::max)
                })
                .sum::<f64>()
                / 11.0
        }
    }
}

pub fn average_precision(dets: &[ScoredBox], gts: &[GtBox], cfg: &EvalConfig) -> ClassAp {
    let labels = label_detections(dets, gts, cfg.iou_threshold);
    let tp = labels.iter().filter(|l| **l).count();
    let ap = if gts.is_empty() {
        None
    } else {
        Some(ap_from_curve(
            &precision_recall(&labels, gts.len()),
            cfg.ap_mode,
        ))
    };
    ClassAp {
        ap,
        num_gt: gts.len(),
        num_detections: dets.len(),
        true_positives: tp,
        false_positives: labels.len() - tp,
    }
}

/// Mean of the defined per-class APs.
pub fn mean_ap<'a>(aps: impl IntoIterator<Item = &'a ClassAp>) -> Option<f64> {
    let defined: Vec<f64> = aps.into_iter().filter_map(|c| c.ap).collect();
    (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub class_id: ClassId,
    pub name: String,
    #[serde(flatten)]
    pub ap: ClassAp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub iou_threshold: f64,
    pub ap_mode: ApMode,
    pub classes: Vec<ClassReport>,
    /// Mean over classes present in the ground truth.
    pub map: Option<f64>,
    pub num_detections: usize,
    /// Classes without ground truth, excluded from the mean.
    pub undefined_classes: Vec<String>,
}

fn class_inputs(
    dets: &[ImageDetections],
    gts: &[ImageAnnotations],
    class: ClassId,
) -> (Vec<ScoredBox>, Vec<GtBox>) {
    let scored = dets
        .iter()
        .flat_map(|img| {
            img.detections
                .iter()
                .filter(|d| d.class_id == class)
                .map(|d| ScoredBox {
                    image_id: img.image_id.clone(),
                    confidence: d.confidence,
                    bbox: d.bbox,
                    row: d.row,
                })
        })
        .collect();
    let truth = gts
        .iter()
        .flat_map(|img| {
            img.objects
                .iter()
                .filter(|o| o.label == class)
                .map(|o| GtBox {
                    image_id: img.image_id.clone(),
                    bbox: o.bbox,
                })
        })
        .collect();
    (scored, truth)
}

/// Precision/recall curve of one class; empty without ground truth.
pub fn class_curve(
    dets: &[ImageDetections],
    gts: &[ImageAnnotations],
    class: ClassId,
    cfg: &EvalConfig,
) -> Vec<(f64, f64)> {
    let (scored, truth) = class_inputs(dets, gts, class);
    if truth.is_empty() {
        return Vec::new();
    }
    precision_recall(
        &label_detections(&scored, &truth, cfg.iou_threshold),
        truth.len(),
    )
}

pub fn evaluate(
    dets: &[ImageDetections],
    gts: &[ImageAnnotations],
    vocab: &Vocabulary,
    cfg: &EvalConfig,
) -> Result<EvalReport> {
    cfg.validate()?;
    let mut classes = Vec::new();
    for c in (1..=vocab.num_classes).filter(|&c| c != BACKGROUND) {
        let (scored, truth) = class_inputs(dets, gts, c);
        classes.push(ClassReport {
            class_id: c,
            name: vocab.name_of(c).to_string(),
            ap: average_precision(&scored, &truth, cfg),
        });
    }
    let map = mean_ap(classes.iter().map(|c| &c.ap));
    let undefined_classes = classes
        .iter()
        .filter(|c| c.ap.ap.is_none())
        .map(|c| c.name.clone())
        .collect();
    let num_detections = classes.iter().map(|c| c.ap.num_detections).sum();
    Ok(EvalReport {
        iou_threshold: cfg.iou_threshold,
        ap_mode: cfg.ap_mode,
        classes,
        map,
        num_detections,
        undefined_classes,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassDelta {
    pub name: String,
    pub ap_a: Option<f64>,
    pub ap_b: Option<f64>,
    /// `ap_b - ap_a` in percentage points.
    pub delta_points: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub classes: Vec<ClassDelta>,
    pub map_a: Option<f64>,
    pub map_b: Option<f64>,
    /// `map_b - map_a` in percentage points.
    pub map_delta_points: Option<f64>,
    /// `(map_b - map_a) / map_a` in percent.
    pub map_relative_percent: Option<f64>,
}

pub fn compare(a: &EvalReport, b: &EvalReport) -> Result<Comparison> {
    let names = |r: &EvalReport| r.classes.iter().map(|c| c.name.clone()).collect::<Vec<_>>();
    if names(a) != names(b) {
        return Err(Error::Vocabulary(format!(
            "reports cover different classes: {:?} vs {:?}",
            names(a),
            names(b)
        )));
    }
    let points = |x: Option<f64>, y: Option<f64>| x.zip(y).map(|(x, y)| (y - x) * 100.0);
    let classes = a
        .classes
        .iter()
        .zip(&b.classes)
        .map(|(x, y)| ClassDelta {
            name: x.name.clone(),
            ap_a: x.ap.ap,
            ap_b: y.ap.ap,
            delta_points: points(x.ap.ap, y.ap.ap),
        })
        .collect();
    Ok(Comparison {
        classes,
        map_a: a.map,
        map_b: b.map,
        map_delta_points: points(a.map, b.map),
        map_relative_percent: a
            .map
            .zip(b.map)
            .filter(|(x, _)| *x > 0.0)
            .map(|(x, y)| (y - x) / x * 100.0),
    })
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{:.2}", v * 100.0))
}

/// Aligned table with one row per method: per-class AP (%), mAP (%) and,
/// for the second method, the improvement in points.
pub fn render_table(methods: &[(&str, &EvalReport)]) -> String {
    let Some((_, first)) = methods.first() else {
        return String::new();
    };
    let mut header = vec!["Method".to_string()];
    header.extend(first.classes.iter().map(|c| c.name.clone()));
    header.push("mAP (%)".into());
    header.push("Improvement (pts)".into());

    let base_map = first.map;
    let rows: Vec<Vec<String>> = methods
        .iter()
        .enumerate()
        .map(|(i, (name, r))| {
            let mut row = vec![name.to_string()];
            row.extend(r.classes.iter().map(|c| pct(c.ap.ap)));
            row.push(pct(r.map));
            row.push(if i == 0 {
                String::new()
            } else {
                base_map
                    .zip(r.map)
                    .map_or("-".into(), |(a, b)| format!("{:+.2}", (b - a) * 100.0))
            });
            row
        })
        .collect();

    let widths: Vec<usize> = (0..header.len())
        .map(|k| {
            rows.iter()
                .map(|r| r.get(k).map_or(0, String::len))
                .chain([header[k].len()])
                .max()
                .unwrap_or(0)
        })
        .collect();
    let mut out = String::new();
    let line = |cells: &[String], out: &mut String| {
        let joined: Vec<String> = cells
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(k, (c, w))| {
                if k == 0 {
                    format!("{c:<w$}")
                } else {
                    format!("{c:>w$}")
                }
            })
            .collect();
        let _ = writeln!(out, "| {} |", joined.join(" | "));
    };
    line(&header, &mut out);
    let _ = writeln!(
        out,
        "|{}|",
        widths
            .iter()
            .map(|w| "-".repeat(w + 2))
            .collect::<Vec<_>>()
            .join("|")
    );
    for r in &rows {
        line(r, &mut out);
    }
    out
}

/// `recall,precision` lines for one class.
pub fn curve_csv(curve: &[(f64, f64)]) -> String {
    let mut out = String::from("recall,precision\n");
    for (r, p) in curve {
        let _ = writeln!(out, "{r},{p}");
    }
    out
}

//! SSD training objective as pure functions of predictions and match results.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Offsets;
use crate::matching::{ClassId, MatchResult, BACKGROUND};

/// Floor applied to probabilities before taking logarithms.
pub const LOG_FLOOR: f64 = 1e-12;

/// Per-box class probabilities and offset predictions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionMatrix {
    pub class_probs: Vec<Vec<f64>>,
    pub offsets: Vec<Offsets>,
}

impl PredictionMatrix {
    pub fn len(&self) -> usize {
        self.class_probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.class_probs.is_empty()
    }

    /// Checks shapes and that each row lies on the probability simplex.
    pub fn validate(&self, num_classes: usize) -> Result<()> {
        if self.class_probs.len() != self.offsets.len() {
            return Err(Error::Invalid(format!(
                "{} probability rows but {} offset rows",
                self.class_probs.len(),
                self.offsets.len()
            )));
        }
        for (i, row) in self.class_probs.iter().enumerate() {
            if row.len() != num_classes {
                return Err(Error::Invalid(format!(
                    "row {i} has {} classes, expected {num_classes}",
                    row.len()
                )));
            }
            if row.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(Error::Invalid(format!(
                    "row {i} has entries outside [0, 1]"
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::Invalid(format!("row {i} sums to {sum}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossOptions {
    /// Weight of the localization term.
    pub alpha: f64,
    pub background: ClassId,
    /// Keep at most `ratio · N` negatives, the highest-loss ones. Off by default.
    pub neg_pos_ratio: Option<f64>,
}

impl Default for LossOptions {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            background: BACKGROUND,
            neg_pos_ratio: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    /// Cross-entropy summed over positives and negatives, before dividing by N.
    pub classification: f64,
    /// Smooth-L1 summed over positives, before dividing by N.
    pub localization: f64,
    pub total: f64,
    pub num_positive: usize,
    /// Set when there are no positives; `total` is then reported as 0.
    pub no_positives: bool,
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn neg_log(p: f64) -> f64 {
    -p.max(LOG_FLOOR).ln()
}

/// Cross-entropy over positives (true class) plus negatives (background).
///
/// `labels[i]` is the assigned class for positives and `None` for negatives.
pub fn classification_loss(
    probs: &[Vec<f64>],
    labels: &[Option<ClassId>],
    background: ClassId,
) -> f64 {
    classification_terms(probs, labels, background)
        .map(|(_, t)| t)
        .sum()
}

/// Per-row loss terms, tagged with whether the row is positive.
fn classification_terms<'a>(
    probs: &'a [Vec<f64>],
    labels: &'a [Option<ClassId>],
    background: ClassId,
) -> impl Iterator<Item = (bool, f64)> + 'a {
    probs
        .iter()
        .zip(labels)
        .map(move |(row, label)| match label {
            Some(c) => (true, neg_log(row[c - 1])),
            None => (false, neg_log(row[background - 1])),
        })
}

pub fn smooth_l1(x: f64) -> f64 {
    let ax = x.abs();
    if ax < 1.0 {
        0.5 * x * x
    } else {
        ax - 0.5
    }
}

/// Derivative of [`smooth_l1`].
pub fn smooth_l1_grad(x: f64) -> f64 {
    if x.abs() < 1.0 {
        x
    } else {
        x.signum()
    }
}

/// Smooth-L1 summed over the four components of positive rows.
pub fn localization_loss(predicted: &[Offsets], targets: &[Offsets], pos: &[usize]) -> f64 {
    pos.iter()
        .map(|&i| {
            predicted[i]
                .0
                .iter()
                .zip(targets[i].0)
                .map(|(p, t)| smooth_l1(p - t))
                .sum::<f64>()
        })
        .sum()
}

pub fn total_loss(
    pred: &PredictionMatrix,
    matched: &MatchResult,
    opts: &LossOptions,
) -> Result<LossBreakdown> {
    if opts.alpha.is_nan() || opts.alpha < 0.0 {
        return Err(Error::Invalid(format!(
            "alpha must be >= 0, got {}",
            opts.alpha
        )));
    }
    if opts.background == 0 || opts.background > matched.num_classes {
        return Err(Error::Invalid(format!(
            "background class {} outside 1..={}",
            opts.background, matched.num_classes
        )));
    }
    if pred.len() != matched.len() {
        return Err(Error::Invalid(format!(
            "{} predictions for {} default boxes",
            pred.len(),
            matched.len()
        )));
    }
    pred.validate(matched.num_classes)?;

    let labels = matched.labels();
    let num_positive = matched.pos.len();
    let classification = match opts.neg_pos_ratio {
        None => classification_loss(&pred.class_probs, &labels, opts.background),
        Some(ratio) => {
            let mut pos_sum = 0.0;
            let mut neg_terms = Vec::new();
            for (positive, t) in classification_terms(&pred.class_probs, &labels, opts.background) {
                if positive {
                    pos_sum += t;
                } else {
                    neg_terms.push(t);
                }
            }
            neg_terms.sort_by(|a, b| b.total_cmp(a));
            let keep = ((ratio * num_positive as f64).floor() as usize).min(neg_terms.len());
            pos_sum + neg_terms[..keep].iter().sum::<f64>()
        }
    };
    let localization = localization_loss(&pred.offsets, &matched.targets, &matched.pos);
    let total = if num_positive == 0 {
        0.0
    } else {
        (classification + opts.alpha * localization) / num_positive as f64
    };
    Ok(LossBreakdown {
        classification,
        localization,
        total,
        num_positive,
        no_positives: num_positive == 0,
    })
}

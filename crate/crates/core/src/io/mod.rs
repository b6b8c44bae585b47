//! File formats: JSON-lines detection dumps, annotations and final
//! detections, PPM/PNG rasters, the configuration document, and synthetic
//! scene generation.
//!
//! Every JSON-lines file starts with a header object naming the class
//! vocabulary; class id `k` is `classes[k - 1]` and id 1 is background.
//! Coordinates are normalized `[cx, cy, w, h]` throughout.

mod config;
mod image;
mod synth;

pub use self::config::Config;
pub use self::image::{load_image, save_png, save_ppm};
pub use self::synth::{small_object_fixture, synth, synth_corpus, SynthSpec, SyntheticScene};

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{BBox, Offsets};
use crate::losses::PredictionMatrix;
use crate::matching::{ClassId, GroundTruthObject, BACKGROUND};
use crate::suppression::{DetectionRow, DetectionSet, FinalDetection};

/// Class names, index 0 being the background class (id 1).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Vocabulary {
    pub num_classes: usize,
    pub classes: Vec<String>,
}

impl Vocabulary {
    pub fn new(classes: Vec<String>) -> Self {
        Self {
            num_classes: classes.len(),
            classes,
        }
    }

    /// `background` followed by `class-2 .. class-l`.
    pub fn generic(num_classes: usize) -> Self {
        let mut classes = vec!["background".to_string()];
        classes.extend((2..=num_classes).map(|c| format!("class-{c}")));
        Self::new(classes)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes != self.classes.len() {
            return Err(Error::Invalid(format!(
                "header declares {} classes but names {}",
                self.num_classes,
                self.classes.len()
            )));
        }
        if self.num_classes < 2 {
            return Err(Error::Invalid(
                "vocabulary needs background plus at least one class".into(),
            ));
        }
        let mut seen = std::collections::HashSet::new();
        if let Some(dup) = self.classes.iter().find(|c| !seen.insert(c.as_str())) {
            return Err(Error::Invalid(format!("duplicate class name {dup:?}")));
        }
        Ok(())
    }

    pub fn id_of(&self, name: &str) -> Option<ClassId> {
        self.classes.iter().position(|c| c == name).map(|i| i + 1)
    }

    pub fn name_of(&self, id: ClassId) -> &str {
        &self.classes[id - 1]
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DumpRecord {
    image_id: String,
    scores: Vec<f64>,
    #[serde(rename = "box")]
    bbox: [f64; 4],
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AnnotationRecord {
    image_id: String,
    label: String,
    #[serde(rename = "box")]
    bbox: [f64; 4],
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DetectionRecord {
    image_id: String,
    label: String,
    confidence: f64,
    #[serde(rename = "box")]
    bbox: [f64; 4],
    row: usize,
}

/// Ground truth of one image.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageAnnotations {
    pub image_id: String,
    pub objects: Vec<GroundTruthObject>,
}

/// Final detections of one image.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageDetections {
    pub image_id: String,
    pub detections: Vec<FinalDetection>,
}

fn read_text(path: &Path) -> Result<String> {
    fs::read(path)
        .map_err(|e| Error::io(path, e))
        .and_then(|bytes| {
            String::from_utf8(bytes).map_err(|e| Error::parse(path, 0, format!("not UTF-8: {e}")))
        })
}

/// Non-empty lines with their 1-based line numbers.
fn lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
}

fn parse_header<'a>(
    path: &Path,
    iter: &mut impl Iterator<Item = (usize, &'a str)>,
) -> Result<Vocabulary> {
    let (line, text) = iter
        .next()
        .ok_or_else(|| Error::parse(path, 1, "missing header line"))?;
    let vocab: Vocabulary =
        serde_json::from_str(text).map_err(|e| Error::parse(path, line, e.to_string()))?;
    vocab
        .validate()
        .map_err(|e| Error::parse(path, line, e.to_string()))?;
    Ok(vocab)
}

fn check_box(path: &Path, line: usize, b: [f64; 4]) -> Result<BBox> {
    if b.iter().any(|v| !v.is_finite()) {
        return Err(Error::parse(path, line, "box has non-finite components"));
    }
    if b[2] < 0.0 || b[3] < 0.0 {
        return Err(Error::parse(path, line, "box has negative extent"));
    }
    Ok(BBox::from(b))
}

/// Group records by image id, keeping first-appearance order.
fn group<T>(items: Vec<(String, T)>) -> Vec<(String, Vec<T>)> {
    let mut order: Vec<String> = Vec::new();
    let mut map: BTreeMap<String, Vec<T>> = BTreeMap::new();
    for (id, item) in items {
        if !map.contains_key(&id) {
            order.push(id.clone());
        }
        map.entry(id).or_default().push(item);
    }
    order
        .into_iter()
        .map(|id| {
            let v = map.remove(&id).unwrap_or_default();
            (id, v)
        })
        .collect()
}

fn write_lines(path: &Path, header: &Vocabulary, body: Vec<String>) -> Result<()> {
    let mut out = Vec::new();
    writeln!(out, "{}", serde_json::to_string(header)?).expect("write to vec");
    for l in body {
        writeln!(out, "{l}").expect("write to vec");
    }
    fs::write(path, out).map_err(|e| Error::write(path, e))
}

pub fn parse_dump(path: &Path, text: &str) -> Result<(Vocabulary, Vec<DetectionSet>)> {
    let mut iter = lines(text);
    let vocab = parse_header(path, &mut iter)?;
    let mut items = Vec::new();
    for (line, text) in iter {
        let rec: DumpRecord =
            serde_json::from_str(text).map_err(|e| Error::parse(path, line, e.to_string()))?;
        if rec.scores.len() != vocab.num_classes {
            return Err(Error::parse(
                path,
                line,
                format!(
                    "expected {} scores, found {}",
                    vocab.num_classes,
                    rec.scores.len()
                ),
            ));
        }
        if rec
            .scores
            .iter()
            .any(|s| !(s.is_finite() && (0.0..=1.0).contains(s)))
        {
            return Err(Error::parse(path, line, "scores must lie in [0, 1]"));
        }
        let bbox = check_box(path, line, rec.bbox)?;
        items.push((
            rec.image_id,
            DetectionRow {
                scores: rec.scores,
                bbox,
            },
        ));
    }
    let sets = group(items)
        .into_iter()
        .map(|(image_id, rows)| DetectionSet { image_id, rows })
        .collect();
    Ok((vocab, sets))
}

/// Loads a raw detection dump (per-row class scores and decoded boxes).
pub fn load_dump(path: &Path) -> Result<(Vocabulary, Vec<DetectionSet>)> {
    parse_dump(path, &read_text(path)?)
}

pub fn dump_to_string(vocab: &Vocabulary, sets: &[DetectionSet]) -> Result<String> {
    let mut out = serde_json::to_string(vocab)? + "\n";
    for set in sets {
        for row in &set.rows {
            out += &serde_json::to_string(&DumpRecord {
                image_id: set.image_id.clone(),
                scores: row.scores.clone(),
                bbox: row.bbox.to_array(),
            })?;
            out.push('\n');
        }
    }
    Ok(out)
}

pub fn save_dump(path: &Path, vocab: &Vocabulary, sets: &[DetectionSet]) -> Result<()> {
    fs::write(path, dump_to_string(vocab, sets)?).map_err(|e| Error::write(path, e))
}

pub fn load_annotations(path: &Path) -> Result<(Vocabulary, Vec<ImageAnnotations>)> {
    let text = read_text(path)?;
    let mut iter = lines(&text);
    let vocab = parse_header(path, &mut iter)?;
    let mut items = Vec::new();
    for (line, text) in iter {
        let rec: AnnotationRecord =
            serde_json::from_str(text).map_err(|e| Error::parse(path, line, e.to_string()))?;
        let label = vocab
            .id_of(&rec.label)
            .ok_or_else(|| Error::parse(path, line, format!("unknown label {:?}", rec.label)))?;
        if label == BACKGROUND {
            return Err(Error::parse(
                path,
                line,
                "annotation uses the background class",
            ));
        }
        let bbox = check_box(path, line, rec.bbox)?;
        items.push((rec.image_id, GroundTruthObject { label, bbox }));
    }
    Ok((
        vocab,
        group(items)
            .into_iter()
            .map(|(image_id, objects)| ImageAnnotations { image_id, objects })
            .collect(),
    ))
}

pub fn save_annotations(
    path: &Path,
    vocab: &Vocabulary,
    images: &[ImageAnnotations],
) -> Result<()> {
    let mut body = Vec::new();
    for img in images {
        for o in &img.objects {
            body.push(serde_json::to_string(&AnnotationRecord {
                image_id: img.image_id.clone(),
                label: vocab.name_of(o.label).to_string(),
                bbox: o.bbox.to_array(),
            })?);
        }
    }
    write_lines(path, vocab, body)
}

pub fn load_detections(path: &Path) -> Result<(Vocabulary, Vec<ImageDetections>)> {
    let text = read_text(path)?;
    let mut iter = lines(&text);
    let vocab = parse_header(path, &mut iter)?;
    let mut items = Vec::new();
    for (line, text) in iter {
        let rec: DetectionRecord =
            serde_json::from_str(text).map_err(|e| Error::parse(path, line, e.to_string()))?;
        let class_id = vocab
            .id_of(&rec.label)
            .ok_or_else(|| Error::parse(path, line, format!("unknown label {:?}", rec.label)))?;
        if !(rec.confidence.is_finite() && (0.0..=1.0).contains(&rec.confidence)) {
            return Err(Error::parse(path, line, "confidence must lie in [0, 1]"));
        }
        let bbox = check_box(path, line, rec.bbox)?;
        items.push((
            rec.image_id,
            FinalDetection {
                class_id,
                confidence: rec.confidence,
                bbox,
                row: rec.row,
            },
        ));
    }
    Ok((
        vocab,
        group(items)
            .into_iter()
            .map(|(image_id, detections)| ImageDetections {
                image_id,
                detections,
            })
            .collect(),
    ))
}

pub fn save_detections(path: &Path, vocab: &Vocabulary, images: &[ImageDetections]) -> Result<()> {
    let mut body = Vec::new();
    for img in images {
        for d in &img.detections {
            body.push(serde_json::to_string(&DetectionRecord {
                image_id: img.image_id.clone(),
                label: vocab.name_of(d.class_id).to_string(),
                confidence: d.confidence,
                bbox: d.bbox.to_array(),
                row: d.row,
            })?);
        }
    }
    write_lines(path, vocab, body)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PredictionRecord {
    image_id: String,
    class_probs: Vec<Vec<f64>>,
    offsets: Vec<Offsets>,
}

/// Per-image network outputs over the default boxes.
#[derive(Debug, Clone, PartialEq)]
pub struct ImagePredictions {
    pub image_id: String,
    pub predictions: PredictionMatrix,
}

/// Loads per-image predictions, one JSON line per image after the header.
pub fn load_predictions(path: &Path) -> Result<(Vocabulary, Vec<ImagePredictions>)> {
    let text = read_text(path)?;
    let mut iter = lines(&text);
    let vocab = parse_header(path, &mut iter)?;
    let mut out = Vec::new();
    for (line, text) in iter {
        let rec: PredictionRecord =
            serde_json::from_str(text).map_err(|e| Error::parse(path, line, e.to_string()))?;
        let predictions = PredictionMatrix {
            class_probs: rec.class_probs,
            offsets: rec.offsets,
        };
        predictions
            .validate(vocab.num_classes)
            .map_err(|e| Error::parse(path, line, e.to_string()))?;
        out.push(ImagePredictions {
            image_id: rec.image_id,
            predictions,
        });
    }
    Ok((vocab, out))
}

pub fn save_predictions(
    path: &Path,
    vocab: &Vocabulary,
    images: &[ImagePredictions],
) -> Result<()> {
    let body = images
        .iter()
        .map(|img| {
            serde_json::to_string(&PredictionRecord {
                image_id: img.image_id.clone(),
                class_probs: img.predictions.class_probs.clone(),
                offsets: img.predictions.offsets.clone(),
            })
        })
        .collect::<std::result::Result<Vec<_>, _>>()?;
    write_lines(path, vocab, body)
}

//! Seeded synthetic scenes: textured rectangles on a flat background, their
//! annotations, and noisy detector rows around every object.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ImageAnnotations, Vocabulary};
use crate::error::{Error, Result};
use crate::features::ImageRaster;
use crate::geometry::{BBox, CornerBox};
use crate::matching::{ClassId, GroundTruthObject, BACKGROUND};
use crate::suppression::{DetectionRow, DetectionSet};

/// Mid gray on the 8-bit grid, so saved images reload unchanged.
const BACKGROUND_LEVEL: f64 = 128.0 / 255.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSpec {
    pub width: usize,
    pub height: usize,
    /// Including background.
    pub num_classes: usize,
    /// Isolated objects per scene.
    pub objects: usize,
    /// Large/small same-class pairs per scene; the small object covers the
    /// top part of the large one.
    pub contested_pairs: usize,
    /// Object side as a fraction of the image side.
    pub size_range: [f64; 2],
    /// Height of the small object relative to its large partner; equals the
    /// IoU of the two ground-truth boxes.
    pub pair_overlap: [f64; 2],
    /// Detector rows emitted per object.
    pub detections_per_object: [usize; 2],
    /// Box jitter as a fraction of the object size.
    pub jitter: f64,
    /// Low-confidence rows at random places.
    pub clutter: usize,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            width: 160,
            height: 160,
            num_classes: 4,
            objects: 3,
            contested_pairs: 1,
            size_range: [0.18, 0.3],
            pair_overlap: [0.6, 0.75],
            detections_per_object: [2, 4],
            jitter: 0.03,
            clutter: 4,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Invalid(format!("synth spec: {m}")));
        if self.width < 16 || self.height < 16 {
            return bad("image must be at least 16x16");
        }
        if self.num_classes < 2 {
            return bad("num_classes must include background and one class");
        }
        let [lo, hi] = self.size_range;
        if !(lo > 0.0 && lo <= hi && hi <= 0.5) {
            return bad("size_range must satisfy 0 < lo <= hi <= 0.5");
        }
        let [lo, hi] = self.pair_overlap;
        if !(lo > 0.0 && lo <= hi && hi < 1.0) {
            return bad("pair_overlap must satisfy 0 < lo <= hi < 1");
        }
        let [lo, hi] = self.detections_per_object;
        if lo == 0 || lo > hi {
            return bad("detections_per_object must satisfy 1 <= lo <= hi");
        }
        if !(0.0..0.5).contains(&self.jitter) {
            return bad("jitter must lie in [0, 0.5)");
        }
        Ok(())
    }
}

/// One generated scene.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    pub image: ImageRaster,
    pub annotations: ImageAnnotations,
    pub detections: DetectionSet,
    pub seed: u64,
    pub index: u64,
}

/// Oriented sinusoidal stripes.
#[derive(Debug, Clone, Copy)]
struct Texture {
    angle: f64,
    period: f64,
    phase: f64,
    base: f64,
    amplitude: f64,
}

impl Texture {
    fn random(rng: &mut ChaCha8Rng, angle: f64) -> Self {
        Self {
            angle,
            period: rng.random_range(5.0..10.0),
            phase: rng.random_range(0.0..std::f64::consts::TAU),
            base: rng.random_range(0.3..0.7),
            amplitude: rng.random_range(0.2..0.3),
        }
    }

    fn value(&self, x: f64, y: f64) -> f64 {
        let t = x * self.angle.cos() + y * self.angle.sin();
        let v = self.base
            + self.amplitude * (std::f64::consts::TAU * t / self.period + self.phase).sin();
        // Quantized so the raster survives an 8-bit round trip unchanged.
        (v.clamp(0.0, 1.0) * 255.0).round() / 255.0
    }
}

struct Placed {
    class: ClassId,
    rect: CornerBox,
    texture: Texture,
}

fn paint(img: &mut ImageRaster, rect: &CornerBox, texture: &Texture) {
    let (w, h) = (img.width as f64, img.height as f64);
    let x0 = (rect.xmin * w).round() as usize;
    let x1 = ((rect.xmax * w).round() as usize).min(img.width);
    let y0 = (rect.ymin * h).round() as usize;
    let y1 = ((rect.ymax * h).round() as usize).min(img.height);
    for y in y0..y1 {
        for x in x0..x1 {
            let v = texture.value(x as f64, y as f64);
            let i = (y * img.width + x) * img.channels;
            img.data[i..i + img.channels].fill(v);
        }
    }
}

/// Pixel-aligned rectangle of the given pixel size at a pixel offset.
fn pixel_rect(spec: &SynthSpec, x: usize, y: usize, w: usize, h: usize) -> CornerBox {
    let (iw, ih) = (spec.width as f64, spec.height as f64);
    CornerBox::new(
        x as f64 / iw,
        y as f64 / ih,
        (x + w) as f64 / iw,
        (y + h) as f64 / ih,
    )
}

fn expanded(r: &CornerBox, margin: f64) -> CornerBox {
    CornerBox::new(
        r.xmin - margin,
        r.ymin - margin,
        r.xmax + margin,
        r.ymax + margin,
    )
}

/// Draws a free spot for a `w × h` pixel rectangle, or `None` after many tries.
fn free_spot(
    rng: &mut ChaCha8Rng,
    spec: &SynthSpec,
    taken: &[CornerBox],
    w: usize,
    h: usize,
) -> Option<CornerBox> {
    let margin = 2.0 / spec.width.min(spec.height) as f64;
    for _ in 0..200 {
        let x = rng.random_range(1..spec.width - w);
        let y = rng.random_range(1..spec.height - h);
        let r = pixel_rect(spec, x, y, w, h);
        if taken
            .iter()
            .all(|t| expanded(t, margin).intersection_area(&r) == 0.0)
        {
            return Some(r);
        }
    }
    None
}

fn softmax_row(
    rng: &mut ChaCha8Rng,
    num_classes: usize,
    class: ClassId,
    strength: f64,
) -> Vec<f64> {
    let logits: Vec<f64> = (1..=num_classes)
        .map(|c| {
            if c == class {
                strength
            } else if c == BACKGROUND {
                0.0
            } else {
                rng.random_range(-1.0..0.5)
            }
        })
        .collect();
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.iter().map(|v| v / z).collect()
}

fn jittered(rng: &mut ChaCha8Rng, b: &BBox, jitter: f64) -> BBox {
    let mut j = |scale: f64| {
        if jitter > 0.0 {
            rng.random_range(-jitter..jitter) * scale
        } else {
            0.0
        }
    };
    let cx = b.cx + j(b.w);
    let cy = b.cy + j(b.h);
    let w = b.w * (1.0 + j(1.0));
    let h = b.h * (1.0 + j(1.0));
    BBox::new(cx, cy, w, h).clipped()
}

fn scene_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

pub fn scene_id(index: u64) -> String {
    format!("scene-{index:04}")
}

/// Generates scene `index` of the corpus defined by `spec` (seeded by
/// `spec.seed`). Identical inputs give bit-identical scenes.
pub fn synth(spec: &SynthSpec, index: u64) -> Result<SyntheticScene> {
    spec.validate()?;
    let mut rng = scene_rng(spec.seed, index);
    let side = spec.width.min(spec.height) as f64;
    let classes: Vec<ClassId> = (1..=spec.num_classes)
        .filter(|&c| c != BACKGROUND)
        .collect();
    let mut placed: Vec<Placed> = Vec::new();
    let mut taken: Vec<CornerBox> = Vec::new();
    let size = |rng: &mut ChaCha8Rng, scale: f64| {
        ((rng.random_range(spec.size_range[0]..=spec.size_range[1]) * side * scale).round()
            as usize)
            .max(8)
    };

    for _ in 0..spec.contested_pairs {
        let class = classes[rng.random_range(0..classes.len())];
        let (w, h) = (size(&mut rng, 1.0), size(&mut rng, 1.4));
        let Some(large) = free_spot(&mut rng, spec, &taken, w, h) else {
            continue;
        };
        let f = rng.random_range(spec.pair_overlap[0]..=spec.pair_overlap[1]);
        let small_h = ((h as f64 * f).round() as usize).clamp(1, h - 1);
        let x = (large.xmin * spec.width as f64).round() as usize;
        let y = (large.ymin * spec.height as f64).round() as usize;
        let small = pixel_rect(spec, x, y, w, small_h);
        let angle = rng.random_range(0.0..std::f64::consts::PI);
        let tl = Texture::random(&mut rng, angle);
        let ts = Texture::random(&mut rng, angle + std::f64::consts::FRAC_PI_2);
        taken.push(large);
        placed.push(Placed {
            class,
            rect: large,
            texture: tl,
        });
        placed.push(Placed {
            class,
            rect: small,
            texture: ts,
        });
    }
    for _ in 0..spec.objects {
        let class = classes[rng.random_range(0..classes.len())];
        let (w, h) = (size(&mut rng, 1.0), size(&mut rng, 1.0));
        let Some(rect) = free_spot(&mut rng, spec, &taken, w, h) else {
            continue;
        };
        let angle = rng.random_range(0.0..std::f64::consts::PI);
        let texture = Texture::random(&mut rng, angle);
        taken.push(rect);
        placed.push(Placed {
            class,
            rect,
            texture,
        });
    }

    let mut image = ImageRaster::filled(spec.width, spec.height, 3, BACKGROUND_LEVEL);
    for p in &placed {
        paint(&mut image, &p.rect, &p.texture);
    }

    let objects: Vec<GroundTruthObject> = placed
        .iter()
        .map(|p| GroundTruthObject {
            label: p.class,
            bbox: BBox::from_corners(p.rect),
        })
        .collect();

    let mut rows = Vec::new();
    for obj in &objects {
        let n = rng.random_range(spec.detections_per_object[0]..=spec.detections_per_object[1]);
        for _ in 0..n {
            let strength = rng.random_range(2.5..4.0);
            rows.push(DetectionRow {
                scores: softmax_row(&mut rng, spec.num_classes, obj.label, strength),
                bbox: jittered(&mut rng, &obj.bbox, spec.jitter),
            });
        }
    }
    for _ in 0..spec.clutter {
        let class = classes[rng.random_range(0..classes.len())];
        let (w, h) = (size(&mut rng, 1.0), size(&mut rng, 1.0));
        let x = rng.random_range(0..spec.width - w);
        let y = rng.random_range(0..spec.height - h);
        let strength = rng.random_range(-1.0..1.0);
        rows.push(DetectionRow {
            scores: softmax_row(&mut rng, spec.num_classes, class, strength),
            bbox: BBox::from_corners(pixel_rect(spec, x, y, w, h)),
        });
    }
    // Interleave rows so that file order carries no information.
    for i in (1..rows.len()).rev() {
        let j = rng.random_range(0..=i);
        rows.swap(i, j);
    }

    let image_id = scene_id(index);
    Ok(SyntheticScene {
        image,
        annotations: ImageAnnotations {
            image_id: image_id.clone(),
            objects,
        },
        detections: DetectionSet { image_id, rows },
        seed: spec.seed,
        index,
    })
}

/// Scenes `0..count` of the corpus, with the matching vocabulary.
pub fn synth_corpus(spec: &SynthSpec, count: u64) -> Result<(Vocabulary, Vec<SyntheticScene>)> {
    let scenes = (0..count)
        .map(|i| synth(spec, i))
        .collect::<Result<Vec<_>>>()?;
    Ok((Vocabulary::generic(spec.num_classes), scenes))
}

/// A large object whose top part is covered by a small object of the same
/// class, each seen by two detector rows. Ground-truth IoU is 0.6 and the
/// two textures run at right angles.
pub fn small_object_fixture() -> (Vocabulary, SyntheticScene) {
    let spec = SynthSpec {
        width: 128,
        height: 128,
        num_classes: 2,
        ..SynthSpec::default()
    };
    let large = pixel_rect(&spec, 24, 24, 48, 80);
    let small = pixel_rect(&spec, 24, 24, 48, 48);
    let tl = Texture {
        angle: 0.0,
        period: 8.0,
        phase: 0.0,
        base: 0.45,
        amplitude: 0.3,
    };
    let ts = Texture {
        angle: std::f64::consts::FRAC_PI_2,
        period: 6.0,
        phase: 1.0,
        base: 0.55,
        amplitude: 0.3,
    };
    let mut image = ImageRaster::filled(spec.width, spec.height, 3, BACKGROUND_LEVEL);
    paint(&mut image, &large, &tl);
    paint(&mut image, &small, &ts);

    let lb = BBox::from_corners(large);
    let sb = BBox::from_corners(small);
    let nudge = |b: BBox, dx: f64, dy: f64| BBox::new(b.cx + dx, b.cy + dy, b.w, b.h);
    let row = |p: f64, b: BBox| DetectionRow {
        scores: vec![1.0 - p, p],
        bbox: b,
    };
    let rows = vec![
        row(0.92, lb),
        row(0.85, sb),
        row(0.80, nudge(lb, 1.0 / 128.0, 0.0)),
        row(0.74, nudge(sb, 0.0, 1.0 / 128.0)),
    ];
    let image_id = "small-object".to_string();
    let scene = SyntheticScene {
        image,
        annotations: ImageAnnotations {
            image_id: image_id.clone(),
            objects: vec![
                GroundTruthObject { label: 2, bbox: lb },
                GroundTruthObject { label: 2, bbox: sb },
            ],
        },
        detections: DetectionSet { image_id, rows },
        seed: 0,
        index: 0,
    };
    (Vocabulary::generic(2), scene)
}

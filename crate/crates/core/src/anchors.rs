//! Default-box (anchor) generation over square feature maps.
//!
//! For every feature map `k` and every cell centroid, one box is emitted per
//! aspect ratio `a` with size `[s_k·√a, s_k/√a]`, followed by two squares of
//! side `s_k` and `s'_k = √(s_k·s_{k+1})`.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BBox;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnchorConfig {
    /// Side length of each square feature map, coarse maps last.
    pub feature_maps: Vec<usize>,
    #[serde(default = "default_s_min")]
    pub s_min: f64,
    #[serde(default = "default_s_max")]
    pub s_max: f64,
    #[serde(default = "default_aspect_ratios")]
    pub aspect_ratios: Vec<f64>,
    /// Overrides the extrapolated scale `s_{p+1}` used for the last map's
    /// intermediate square.
    #[serde(default)]
    pub s_next: Option<f64>,
}

fn default_s_min() -> f64 {
    0.2
}

fn default_s_max() -> f64 {
    0.9
}

fn default_aspect_ratios() -> Vec<f64> {
    vec![2.0, 3.0, 1.0 / 2.0, 1.0 / 3.0]
}

impl AnchorConfig {
    pub fn new(feature_maps: Vec<usize>) -> Self {
        Self {
            feature_maps,
            s_min: default_s_min(),
            s_max: default_s_max(),
            aspect_ratios: default_aspect_ratios(),
            s_next: None,
        }
    }

    /// The six-map SSD-300 layout.
    pub fn ssd300() -> Self {
        Self::new(vec![38, 19, 10, 5, 3, 1])
    }

    pub fn num_maps(&self) -> usize {
        self.feature_maps.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.feature_maps.is_empty() {
            return Err(Error::Config("at least one feature map is required".into()));
        }
        if self.feature_maps.contains(&0) {
            return Err(Error::Config("feature map sizes must be positive".into()));
        }
        if !(self.s_min > 0.0 && self.s_min <= self.s_max && self.s_max <= 1.0) {
            return Err(Error::Config(format!(
                "scales must satisfy 0 < s_min <= s_max <= 1, got s_min={} s_max={}",
                self.s_min, self.s_max
            )));
        }
        if self
            .aspect_ratios
            .iter()
            .any(|a| !(a.is_finite() && *a > 0.0))
        {
            return Err(Error::Config(
                "aspect ratios must be positive and finite".into(),
            ));
        }
        if let Some(s) = self.s_next {
            if !(s.is_finite() && s > 0.0) {
                return Err(Error::Config("s_next must be positive".into()));
            }
        }
        Ok(())
    }

    /// Linear scale of 1-based map `k`; extends past `p` along the same progression.
    fn linear_scale(&self, k: usize) -> f64 {
        let p = self.num_maps();
        if p == 1 {
            return self.s_min;
        }
        self.s_min + (self.s_max - self.s_min) * (k - 1) as f64 / (p - 1) as f64
    }

    /// Returns `(s_k, s'_k)` for 1-based map index `k`.
    pub fn scale(&self, k: usize) -> (f64, f64) {
        let p = self.num_maps();
        assert!((1..=p).contains(&k), "map index {k} outside 1..={p}");
        let s_k = self.linear_scale(k);
        let s_following = if k < p {
            self.linear_scale(k + 1)
        } else if let Some(s) = self.s_next {
            s
        } else if p == 1 {
            1.0
        } else {
            self.s_max + (self.s_max - self.s_min) / (p - 1) as f64
        };
        (s_k, (s_k * s_following).sqrt())
    }

    /// Boxes per centroid.
    pub fn boxes_per_location(&self) -> usize {
        self.aspect_ratios.len() + 2
    }

    pub fn expected_count(&self) -> usize {
        self.boxes_per_location() * self.feature_maps.iter().map(|f| f * f).sum::<usize>()
    }
}

/// Cell centroids of an `f × f` map, `cx` varying slowest.
pub fn centroids(f: usize) -> Vec<(f64, f64)> {
    let fk = f as f64;
    (0..f)
        .flat_map(|i| (0..f).map(move |j| ((i as f64 + 0.5) / fk, (j as f64 + 0.5) / fk)))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DefaultBoxSet {
    pub boxes: Vec<BBox>,
    /// Index range of each feature map's boxes within `boxes`.
    pub per_map_ranges: Vec<Range<usize>>,
}

impl DefaultBoxSet {
    pub fn len(&self) -> usize {
        self.boxes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }
}

pub fn generate(config: &AnchorConfig) -> Result<DefaultBoxSet> {
    config.validate()?;
    let mut boxes = Vec::with_capacity(config.expected_count());
    let mut per_map_ranges = Vec::with_capacity(config.num_maps());
    let ratio_roots: Vec<f64> = config.aspect_ratios.iter().map(|a| a.sqrt()).collect();

    for (idx, &f) in config.feature_maps.iter().enumerate() {
        let start = boxes.len();
        let (s_k, s_prime) = config.scale(idx + 1);
        for (cx, cy) in centroids(f) {
            for root in &ratio_roots {
                boxes.push(BBox::new(cx, cy, s_k * root, s_k / root));
            }
            boxes.push(BBox::new(cx, cy, s_k, s_k));
            boxes.push(BBox::new(cx, cy, s_prime, s_prime));
        }
        per_map_ranges.push(start..boxes.len());
    }
    Ok(DefaultBoxSet {
        boxes,
        per_map_ranges,
    })
}

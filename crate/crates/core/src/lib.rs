//! Detection post-processing toolkit: default boxes, ground-truth matching,
//! multibox losses, greedy non-maximum suppression, affinity-propagation
//! suppression over box overlap and HOG appearance, and VOC evaluation.

pub mod anchors;
pub mod cli;
pub mod clustering;
pub mod error;
pub mod eval;
pub mod features;
pub mod geometry;
pub mod io;
pub mod losses;
pub mod matching;
pub mod suppression;

pub use error::{Error, Result};

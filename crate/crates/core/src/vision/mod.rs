//! Droplet detection and scoring: watershed segmentation followed by the
//! geometric, yield and combined losses.

mod loss;
mod overlay;
mod segment;

pub use loss::{combined_loss, geometric_loss, score_image, yield_loss, LossScore, LossWeights};
pub use overlay::render_overlay;
pub use segment::{
    dilate, erode, label_components, otsu_threshold, segment, segment_detailed,
    squared_distance_transform, Polarity, SegmentParams, SegmentationDetail,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::{transform_grid, Transform};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VisionError {
    #[error("loss weights must be finite and non-negative with a positive sum (got w_g={w_g}, w_e={w_e})")]
    Weights { w_g: f64, w_e: f64 },
    #[error("label grid holds {got} entries, expected {expected}")]
    LabelShape { expected: usize, got: usize },
}

/// Per-droplet summary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Droplet {
    pub label: u32,
    pub pixel_count: usize,
    /// Mean `(x, y)` pixel index of the droplet.
    pub centroid: (f64, f64),
}

/// A label per pixel (0 = background) and the matching droplet table.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSegmentation {
    width: usize,
    height: usize,
    labels: Vec<u32>,
    droplets: Vec<Droplet>,
}

impl LabeledSegmentation {
    /// Builds the droplet table from a label grid. Labels need not be
    /// contiguous; droplets are listed in increasing label order.
    pub fn from_labels(width: usize, height: usize, labels: Vec<u32>) -> Result<Self, VisionError> {
        if labels.len() != width * height {
            return Err(VisionError::LabelShape {
                expected: width * height,
                got: labels.len(),
            });
        }
        let mut acc: std::collections::BTreeMap<u32, (usize, u64, u64)> = Default::default();
        for (i, &l) in labels.iter().enumerate() {
            if l != 0 {
                let e = acc.entry(l).or_default();
                e.0 += 1;
                e.1 += (i % width) as u64;
                e.2 += (i / width) as u64;
            }
        }
        let droplets = acc
            .into_iter()
            .map(|(label, (n, sx, sy))| Droplet {
                label,
                pixel_count: n,
                centroid: (sx as f64 / n as f64, sy as f64 / n as f64),
            })
            .collect();
        Ok(Self {
            width,
            height,
            labels,
            droplets,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn droplets(&self) -> &[Droplet] {
        &self.droplets
    }

    pub fn label_at(&self, x: usize, y: usize) -> u32 {
        self.labels[y * self.width + x]
    }

    pub fn droplet_pixels(&self) -> usize {
        self.labels.iter().filter(|&&l| l != 0).count()
    }

    /// The same labelling carried through a dihedral map of the grid.
    pub fn transformed(&self, t: Transform) -> LabeledSegmentation {
        let (labels, w, h) = transform_grid(&self.labels, self.width, self.height, t);
        Self::from_labels(w, h, labels).expect("shape preserved")
    }
}

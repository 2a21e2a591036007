use serde::{Deserialize, Serialize};

use crate::raster::Raster;

use super::{segment, LabeledSegmentation, SegmentParams, VisionError};

/// Relative weights of the geometric and yield components.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawWeights")]
pub struct LossWeights {
    w_g: f64,
    w_e: f64,
}

#[derive(Deserialize)]
struct RawWeights {
    w_g: f64,
    w_e: f64,
}

impl TryFrom<RawWeights> for LossWeights {
    type Error = VisionError;

    fn try_from(raw: RawWeights) -> Result<Self, Self::Error> {
        LossWeights::new(raw.w_g, raw.w_e)
    }
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { w_g: 1.0, w_e: 1.0 }
    }
}

impl LossWeights {
    pub fn new(w_g: f64, w_e: f64) -> Result<Self, VisionError> {
        let ok = w_g.is_finite() && w_e.is_finite() && w_g >= 0.0 && w_e >= 0.0 && w_g + w_e > 0.0;
        if ok {
            Ok(Self { w_g, w_e })
        } else {
            Err(VisionError::Weights { w_g, w_e })
        }
    }

    pub fn geometric(&self) -> f64 {
        self.w_g
    }

    pub fn yield_weight(&self) -> f64 {
        self.w_e
    }

    pub fn combine(&self, geometric: f64, yield_: f64) -> f64 {
        (self.w_g * geometric + self.w_e * yield_) / (self.w_g + self.w_e)
    }
}

/// Loss components of one image; all in `[0, 1]`, lower is better.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossScore {
    pub geometric: f64,
    #[serde(rename = "yield")]
    pub yield_: f64,
    pub combined: f64,
}

impl LossScore {
    pub fn from_components(geometric: f64, yield_: f64, w: &LossWeights) -> Self {
        Self {
            geometric,
            yield_,
            combined: w.combine(geometric, yield_),
        }
    }
}

/// Mean over droplets of the fraction of droplet pixels whose centres lie
/// outside the equal-area circle about the droplet centroid. An image
/// without droplets scores 1.
pub fn geometric_loss(seg: &LabeledSegmentation) -> f64 {
    let droplets = seg.droplets();
    if droplets.is_empty() {
        return 1.0;
    }
    let w = seg.width();
    let max_label = droplets.last().map_or(0, |d| d.label) as usize;
    // (n, sum x, sum y) per label, exact
    let mut sums = vec![(0i64, 0i64, 0i64); max_label + 1];
    for (i, &l) in seg.labels().iter().enumerate() {
        if l != 0 {
            let s = &mut sums[l as usize];
            s.0 += 1;
            s.1 += (i % w) as i64;
            s.2 += (i / w) as i64;
        }
    }
    // Pixel p lies outside when |p - c|^2 > A/pi with c = (sx, sy)/n and
    // A = n; both sides are scaled by n^2 so the left is an integer.
    let mut outside = vec![0usize; max_label + 1];
    for (i, &l) in seg.labels().iter().enumerate() {
        if l == 0 {
            continue;
        }
        let (n, sx, sy) = sums[l as usize];
        let dx = (n * (i % w) as i64 - sx) as i128;
        let dy = (n * (i / w) as i64 - sy) as i128;
        let radius2 = (n as f64).powi(3) / std::f64::consts::PI;
        if (dx * dx + dy * dy) as f64 > radius2 {
            outside[l as usize] += 1;
        }
    }
    let total: f64 = droplets
        .iter()
        .map(|d| outside[d.label as usize] as f64 / d.pixel_count as f64)
        .sum();
    total / droplets.len() as f64
}

/// Fraction of image pixels not assigned to any droplet.
pub fn yield_loss(seg: &LabeledSegmentation) -> f64 {
    let total = seg.labels().len();
    (total - seg.droplet_pixels()) as f64 / total as f64
}

pub fn combined_loss(seg: &LabeledSegmentation, w: &LossWeights) -> LossScore {
    LossScore::from_components(geometric_loss(seg), yield_loss(seg), w)
}

/// Segments and scores one image.
pub fn score_image(img: &Raster, params: &SegmentParams, w: &LossWeights) -> LossScore {
    combined_loss(&segment(img, params), w)
}

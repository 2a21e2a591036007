use serde::{Deserialize, Serialize};

use crate::raster::{Raster, Transform, MIN_EDGE};
use crate::sampling::PrintConditions;
use crate::vision::{score_image, LossScore, LossWeights, SegmentParams};

use super::SgdError;

pub const TILE_ROWS: usize = 2;
pub const TILE_COLS: usize = 3;
/// Identity plus the six non-trivial dihedral maps.
pub const RECORDS_PER_IMAGE: usize = TILE_ROWS * TILE_COLS * 7;

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedRecord {
    /// Conditions of the parent image.
    pub conditions: PrintConditions,
    pub parent: usize,
    /// Tile index in raster order over the 2 x 3 grid.
    pub tile: usize,
    pub transform: Transform,
    pub sub_image: Raster,
    pub score: LossScore,
}

/// Compact view of a record for training and export.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredCondition {
    pub conditions: PrintConditions,
    pub loss: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AugmentedSet {
    pub records: Vec<AugmentedRecord>,
}

impl AugmentedSet {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn scored(&self) -> Vec<ScoredCondition> {
        self.records
            .iter()
            .map(|r| ScoredCondition {
                conditions: r.conditions,
                loss: r.score.combined,
            })
            .collect()
    }

    pub fn extend(&mut self, other: AugmentedSet) {
        let offset = self.records.last().map_or(0, |r| r.parent + 1);
        self.records.extend(other.records.into_iter().map(|mut r| {
            r.parent += offset;
            r
        }));
    }
}

/// Cuts one image into a 2 x 3 grid of equal tiles, discarding remainder
/// pixels on the right and bottom.
pub fn tiles(img: &Raster) -> Result<Vec<Raster>, SgdError> {
    let (tw, th) = (img.width() / TILE_COLS, img.height() / TILE_ROWS);
    if tw < MIN_EDGE || th < MIN_EDGE {
        return Err(SgdError::ImageSize {
            width: img.width(),
            height: img.height(),
        });
    }
    let mut out = Vec::with_capacity(TILE_ROWS * TILE_COLS);
    for r in 0..TILE_ROWS {
        for c in 0..TILE_COLS {
            out.push(img.crop(c * tw, r * th, tw, th).expect("tile lies inside the image"));
        }
    }
    Ok(out)
}

/// Every image becomes 42 records: six tiles, each under all seven maps,
/// each re-scored and labelled with its parent's conditions.
pub fn augment(
    samples: &[(PrintConditions, Raster)],
    params: &SegmentParams,
    w: &LossWeights,
) -> Result<AugmentedSet, SgdError> {
    let mut records = Vec::with_capacity(samples.len() * RECORDS_PER_IMAGE);
    for (parent, (cond, img)) in samples.iter().enumerate() {
        for (tile, sub) in tiles(img)?.into_iter().enumerate() {
            for t in Transform::ALL {
                let sub_image = sub.transformed(t);
                let score = score_image(&sub_image, params, w);
                records.push(AugmentedRecord {
                    conditions: *cond,
                    parent,
                    tile,
                    transform: t,
                    sub_image,
                    score,
                });
            }
        }
    }
    Ok(AugmentedSet { records })
}

//! Marker-controlled watershed segmentation of droplet images.
//!
//! Every stage (histogram threshold, 3x3 opening, exact Euclidean distance
//! transform, marker thresholding, flooding) commutes with the dihedral
//! transforms of the pixel grid. The flood is level-synchronous: all pixels
//! that become reachable at the same distance level in the same wave are
//! decided together from the same snapshot of labels, and contested pixels
//! are resolved with orientation-free criteria. Scan order never leaks into
//! the partition, so a rotated or mirrored image segments into the rotated
//! or mirrored labeling.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::raster::Raster;

use super::LabeledSegmentation;

/// Which intensity class holds the droplets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    /// Dark droplets on a light substrate.
    DarkOnLight,
    LightOnDark,
    /// The class holding the majority of border pixels is background.
    Auto,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SegmentParams {
    pub polarity: Polarity,
    /// Rounds of 3x3 opening applied to the binary foreground.
    pub opening_iterations: usize,
    /// Marker threshold as a fraction of the maximum distance.
    pub marker_fraction: f64,
    /// Droplets with fewer pixels are returned to the background.
    pub min_area: usize,
}

impl Default for SegmentParams {
    fn default() -> Self {
        Self {
            polarity: Polarity::DarkOnLight,
            opening_iterations: 1,
            marker_fraction: 0.4,
            min_area: 5,
        }
    }
}

/// Segmentation plus the intermediate binary mask, for inspection and tests.
#[derive(Debug, Clone)]
pub struct SegmentationDetail {
    pub segmentation: LabeledSegmentation,
    /// Foreground after thresholding and opening.
    pub foreground: Vec<bool>,
    pub threshold: Option<u8>,
}

pub fn segment(img: &Raster, params: &SegmentParams) -> LabeledSegmentation {
    segment_detailed(img, params).segmentation
}

pub fn segment_detailed(img: &Raster, params: &SegmentParams) -> SegmentationDetail {
    let (w, h) = (img.width(), img.height());
    let threshold = otsu_threshold(img.pixels());
    let mut foreground = match threshold {
        Some(t) => {
            let dark_is_fg = match params.polarity {
                Polarity::DarkOnLight => true,
                Polarity::LightOnDark => false,
                Polarity::Auto => !border_majority_dark(img, t),
            };
            img.pixels()
                .iter()
                .map(|&v| (v <= t) == dark_is_fg)
                .collect()
        }
        None => vec![false; w * h],
    };
    for _ in 0..params.opening_iterations {
        foreground = dilate(&erode(&foreground, w, h), w, h);
    }

    let labels = watershed(&foreground, w, h, params.marker_fraction);
    let labels = drop_small(labels, params.min_area);
    SegmentationDetail {
        segmentation: LabeledSegmentation::from_labels(w, h, labels)
            .expect("watershed produces a consistent label grid"),
        foreground,
        threshold,
    }
}

/// Otsu's threshold: the level `t` maximizing between-class variance of
/// `{v <= t}` versus `{v > t}`. `None` for single-valued images.
pub fn otsu_threshold(pixels: &[u8]) -> Option<u8> {
    let mut hist = [0u64; 256];
    for &v in pixels {
        hist[v as usize] += 1;
    }
    if hist.iter().filter(|&&c| c > 0).count() < 2 {
        return None;
    }
    let total = pixels.len() as f64;
    let sum_all: f64 = hist.iter().enumerate().map(|(i, &c)| i as f64 * c as f64).sum();
    let (mut w0, mut sum0) = (0.0, 0.0);
    let mut best = (f64::NEG_INFINITY, 0u8);
    for (t, &c) in hist.iter().enumerate().take(255) {
        w0 += c as f64;
        sum0 += t as f64 * c as f64;
        let w1 = total - w0;
        if w0 == 0.0 || w1 == 0.0 {
            continue;
        }
        let diff = sum0 / w0 - (sum_all - sum0) / w1;
        let between = w0 * w1 * diff * diff;
        if between > best.0 {
            best = (between, t as u8);
        }
    }
    Some(best.1)
}

fn border_majority_dark(img: &Raster, t: u8) -> bool {
    let (w, h) = (img.width(), img.height());
    let (mut dark, mut total) = (0usize, 0usize);
    for y in 0..h {
        for x in 0..w {
            if x == 0 || y == 0 || x == w - 1 || y == h - 1 {
                total += 1;
                dark += usize::from(img.get(x, y) <= t);
            }
        }
    }
    2 * dark > total
}

fn morph(mask: &[bool], w: usize, h: usize, keep: impl Fn(bool, bool) -> bool, init: bool) -> Vec<bool> {
    let mut out = vec![false; mask.len()];
    for y in 0..h {
        for x in 0..w {
            let mut acc = init;
            for ny in y.saturating_sub(1)..=(y + 1).min(h - 1) {
                for nx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                    acc = keep(acc, mask[ny * w + nx]);
                }
            }
            out[y * w + x] = acc;
        }
    }
    out
}

/// 3x3 erosion; out-of-image neighbours are ignored.
pub fn erode(mask: &[bool], w: usize, h: usize) -> Vec<bool> {
    morph(mask, w, h, |a, b| a && b, true)
}

/// 3x3 dilation; out-of-image neighbours are ignored.
pub fn dilate(mask: &[bool], w: usize, h: usize) -> Vec<bool> {
    morph(mask, w, h, |a, b| a || b, false)
}

/// Exact squared Euclidean distance from each foreground pixel to the
/// nearest background pixel, with everything outside the image counted as
/// background. Background pixels get 0.
pub fn squared_distance_transform(mask: &[bool], w: usize, h: usize) -> Vec<i64> {
    // Pad by one background pixel on every side.
    let (pw, ph) = (w + 2, h + 2);
    let mut grid: Vec<Option<i64>> = vec![Some(0); pw * ph];
    for y in 0..h {
        for x in 0..w {
            if mask[y * w + x] {
                grid[(y + 1) * pw + x + 1] = None;
            }
        }
    }
    let mut col = vec![None; ph];
    let mut tmp = vec![0; ph.max(pw)];
    for x in 0..pw {
        for y in 0..ph {
            col[y] = grid[y * pw + x];
        }
        lower_envelope(&col, &mut tmp[..ph]);
        for y in 0..ph {
            grid[y * pw + x] = Some(tmp[y]);
        }
    }
    let mut out = vec![0; w * h];
    let mut row = vec![None; pw];
    for y in 1..=h {
        row.copy_from_slice(&grid[y * pw..(y + 1) * pw]);
        lower_envelope(&row, &mut tmp[..pw]);
        out[(y - 1) * w..y * w].copy_from_slice(&tmp[1..=w]);
    }
    out
}

/// One-dimensional squared distance transform of sampled functions
/// (lower envelope of parabolas). `None` entries are +inf and every input
/// slice contains at least one finite value.
fn lower_envelope(f: &[Option<i64>], out: &mut [i64]) {
    let n = f.len();
    let mut v = Vec::with_capacity(n);
    let mut z: Vec<f64> = Vec::with_capacity(n + 1);
    for q in 0..n {
        let Some(fq) = f[q] else { continue };
        let q_i = q as i64;
        loop {
            let Some(&p) = v.last() else {
                v.push(q);
                z.clear();
                z.push(f64::NEG_INFINITY);
                z.push(f64::INFINITY);
                break;
            };
            let p_i = p as i64;
            let fp = f[p].unwrap();
            let s = ((fq + q_i * q_i) - (fp + p_i * p_i)) as f64 / (2 * (q_i - p_i)) as f64;
            if s <= z[z.len() - 2] {
                v.pop();
                z.pop();
            } else {
                let last = z.len() - 1;
                z[last] = s;
                z.push(f64::INFINITY);
                v.push(q);
                break;
            }
        }
    }
    let mut k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let d = q as i64 - v[k] as i64;
        *o = d * d + f[v[k]].unwrap();
    }
}

const NEIGHBOURS: [(isize, isize); 8] = [
    (-1, -1),
    (0, -1),
    (1, -1),
    (-1, 0),
    (1, 0),
    (-1, 1),
    (0, 1),
    (1, 1),
];

fn neighbours(i: usize, w: usize, h: usize) -> impl Iterator<Item = (usize, bool)> {
    let (x, y) = ((i % w) as isize, (i / w) as isize);
    NEIGHBOURS.iter().filter_map(move |&(dx, dy)| {
        let (nx, ny) = (x + dx, y + dy);
        (nx >= 0 && ny >= 0 && nx < w as isize && ny < h as isize)
            .then(|| (ny as usize * w + nx as usize, dx == 0 || dy == 0))
    })
}

/// 8-connected components of `mask`, labelled from 1 in raster order.
pub fn label_components(mask: &[bool], w: usize, h: usize) -> (Vec<u32>, u32) {
    let mut labels = vec![0u32; mask.len()];
    let mut next = 0;
    let mut queue = VecDeque::new();
    for start in 0..mask.len() {
        if !mask[start] || labels[start] != 0 {
            continue;
        }
        next += 1;
        labels[start] = next;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            for (j, _) in neighbours(i, w, h) {
                if mask[j] && labels[j] == 0 {
                    labels[j] = next;
                    queue.push_back(j);
                }
            }
        }
    }
    (labels, next)
}

/// Pixel count and coordinate sums of a marker, used to break ties.
#[derive(Debug, Clone, Copy, Default)]
struct MarkerStats {
    n: i64,
    sx: i64,
    sy: i64,
}

impl MarkerStats {
    /// n^2 times the squared distance from pixel `(x, y)` to the centroid.
    fn scaled_dist2(&self, x: i64, y: i64) -> i128 {
        let dx = (self.n * x - self.sx) as i128;
        let dy = (self.n * y - self.sy) as i128;
        dx * dx + dy * dy
    }
}

fn watershed(fg: &[bool], w: usize, h: usize, marker_fraction: f64) -> Vec<u32> {
    let dist = squared_distance_transform(fg, w, h);
    let max = dist.iter().copied().max().unwrap_or(0);
    if max == 0 {
        return vec![0; fg.len()];
    }
    // Compared as distances, not squares: sqrt is exact on perfect squares,
    // so a neck of exactly fraction * max is never misread as above it.
    let cut = marker_fraction * (max as f64).sqrt();
    let sure: Vec<bool> = dist.iter().map(|&d| d > 0 && (d as f64).sqrt() > cut).collect();
    let (mut labels, mut count) = label_components(&sure, w, h);

    // Foreground blobs without any sure pixel are seeded at their peaks.
    let (blobs, nblobs) = label_components(fg, w, h);
    let mut has_marker = vec![false; nblobs as usize + 1];
    let mut peak = vec![0i64; nblobs as usize + 1];
    for i in 0..fg.len() {
        let b = blobs[i] as usize;
        if b != 0 {
            has_marker[b] |= labels[i] != 0;
            peak[b] = peak[b].max(dist[i]);
        }
    }
    let mut seeded = vec![0u32; nblobs as usize + 1];
    for i in 0..fg.len() {
        let b = blobs[i] as usize;
        if b != 0 && !has_marker[b] && dist[i] == peak[b] {
            if seeded[b] == 0 {
                count += 1;
                seeded[b] = count;
            }
            labels[i] = seeded[b];
        }
    }
    // Peak pixels of one blob need not touch; flooding below joins them.

    let mut stats = vec![MarkerStats::default(); count as usize + 1];
    for (i, &l) in labels.iter().enumerate() {
        if l != 0 {
            let s = &mut stats[l as usize];
            s.n += 1;
            s.sx += (i % w) as i64;
            s.sy += (i / w) as i64;
        }
    }

    let mut queued = vec![false; fg.len()];
    let mut buckets: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
    let push_neighbours = |i: usize,
                           labels: &[u32],
                           queued: &mut [bool],
                           buckets: &mut BTreeMap<i64, Vec<usize>>| {
        for (j, _) in neighbours(i, w, h) {
            if fg[j] && labels[j] == 0 && !queued[j] {
                queued[j] = true;
                buckets.entry(dist[j]).or_default().push(j);
            }
        }
    };
    for i in 0..fg.len() {
        if labels[i] != 0 {
            push_neighbours(i, &labels, &mut queued, &mut buckets);
        }
    }

    let mut decisions = Vec::new();
    while let Some((_, wave)) = buckets.pop_last() {
        decisions.clear();
        for &i in &wave {
            decisions.push((i, choose_label(i, w, h, &labels, &stats)));
        }
        for &(i, l) in &decisions {
            labels[i] = l;
        }
        for &(i, _) in &decisions {
            push_neighbours(i, &labels, &mut queued, &mut buckets);
        }
    }
    labels
}

/// Picks the label for a contested pixel from its labelled neighbours:
/// most edge-adjacent neighbours, then most neighbours overall, then the
/// larger marker, then the nearer marker centroid. Only exact symmetric
/// ties fall through to the label id.
fn choose_label(i: usize, w: usize, h: usize, labels: &[u32], stats: &[MarkerStats]) -> u32 {
    let mut cands: Vec<(u32, u32, u32)> = Vec::with_capacity(4);
    for (j, edge) in neighbours(i, w, h) {
        let l = labels[j];
        if l == 0 {
            continue;
        }
        match cands.iter_mut().find(|c| c.0 == l) {
            Some(c) => {
                c.1 += u32::from(edge);
                c.2 += 1;
            }
            None => cands.push((l, u32::from(edge), 1)),
        }
    }
    let (x, y) = ((i % w) as i64, (i / w) as i64);
    cands
        .into_iter()
        .min_by(|a, b| {
            let (sa, sb) = (&stats[a.0 as usize], &stats[b.0 as usize]);
            b.1.cmp(&a.1)
                .then(b.2.cmp(&a.2))
                .then(sb.n.cmp(&sa.n))
                .then_with(|| {
                    let da = sa.scaled_dist2(x, y) * (sb.n as i128 * sb.n as i128);
                    let db = sb.scaled_dist2(x, y) * (sa.n as i128 * sa.n as i128);
                    da.cmp(&db)
                })
                .then(a.0.cmp(&b.0))
        })
        .map(|c| c.0)
        .expect("queued pixels always have a labelled neighbour")
}

/// Removes regions below `min_area` and renumbers the rest 1..N in raster
/// order of their first pixel.
fn drop_small(labels: Vec<u32>, min_area: usize) -> Vec<u32> {
    let max = labels.iter().copied().max().unwrap_or(0) as usize;
    let mut sizes = vec![0usize; max + 1];
    for &l in &labels {
        sizes[l as usize] += 1;
    }
    let mut remap = vec![u32::MAX; max + 1];
    remap[0] = 0;
    let mut next = 0;
    labels
        .into_iter()
        .map(|l| {
            let l = l as usize;
            if remap[l] == u32::MAX {
                remap[l] = if sizes[l] >= min_area {
                    next += 1;
                    next
                } else {
                    0
                };
            }
            remap[l]
        })
        .collect()
}

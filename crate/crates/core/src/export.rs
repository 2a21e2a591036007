//! File outputs: atomic writes and PNG renderings of fields and curves.

use std::io::Write;
use std::path::Path;

use crate::raster::{encode_png, RasterError};
use crate::surrogate::Projection;

/// Writes through a temporary sibling file and renames it into place, so
/// readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let name = path
        .file_name()
        .ok_or_else(|| std::io::Error::new(std::io::ErrorKind::InvalidInput, "path has no file name"))?;
    let tmp = dir.join(format!(".{}.tmp", name.to_string_lossy()));
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)
}

/// Black, red, yellow, white.
fn heat(t: f64) -> [u8; 3] {
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.0 };
    let ramp = |a: f64| ((a.clamp(0.0, 1.0)) * 255.0).round() as u8;
    [ramp(3.0 * t), ramp(3.0 * t - 1.0), ramp(3.0 * t - 2.0)]
}

/// RGB heatmap of a cross-section, `scale` pixels per cell, with the first
/// axis running right and the second up. The value range and axis names
/// are embedded as `tEXt` chunks.
pub fn heatmap_png(p: &Projection, axis_names: (&str, &str), title: &str, scale: usize) -> Result<Vec<u8>, RasterError> {
    let scale = scale.max(1);
    let (lo, hi) = (p.min(), p.max());
    let span = hi - lo;
    let (w, h) = (p.nx * scale, p.ny * scale);
    let mut rgb = Vec::with_capacity(w * h * 3);
    for row in 0..h {
        let j = p.ny - 1 - row / scale;
        for col in 0..w {
            let v = p.values[j * p.nx + col / scale];
            let t = if span > 0.0 { (v - lo) / span } else { 0.0 };
            rgb.extend_from_slice(&heat(t));
        }
    }
    encode_png(
        w,
        h,
        png::ColorType::Rgb,
        &rgb,
        &[
            ("Title", title.to_owned()),
            ("value_min", format!("{lo}")),
            ("value_max", format!("{hi}")),
            ("x_axis", axis_names.0.to_owned()),
            ("y_axis", axis_names.1.to_owned()),
        ],
    )
}

/// Line plot of `ys` on a white canvas `height` pixels tall and one column
/// per point, with a red cross at `mark` (index, value) if given.
pub fn curve_png(ys: &[f64], height: usize, mark: Option<(usize, f64)>, title: &str) -> Result<Vec<u8>, RasterError> {
    let w = ys.len().max(1);
    let h = height.max(8);
    let finite = ys.iter().copied().chain(mark.map(|m| m.1)).filter(|v| v.is_finite());
    let (lo, hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, u), v| (l.min(v), u.max(v)));
    let row_of = |v: f64| {
        let t = if hi > lo { (v - lo) / (hi - lo) } else { 0.5 };
        ((1.0 - t) * (h - 1) as f64).round() as usize
    };
    let mut rgb = vec![255u8; w * h * 3];
    let mut paint = |x: usize, y: usize, c: [u8; 3]| {
        if x < w && y < h {
            rgb[(y * w + x) * 3..(y * w + x) * 3 + 3].copy_from_slice(&c);
        }
    };
    for (x, v) in ys.iter().enumerate().filter(|(_, v)| v.is_finite()) {
        paint(x, row_of(*v), [0, 0, 0]);
    }
    if let Some((x, v)) = mark {
        let y = row_of(v);
        for d in 0..=3 {
            for (dx, dy) in [(d as isize, d as isize), (d as isize, -(d as isize))] {
                for s in [-1isize, 1] {
                    let (px, py) = (x as isize + s * dx, y as isize + s * dy);
                    if px >= 0 && py >= 0 {
                        paint(px as usize, py as usize, [220, 0, 0]);
                    }
                }
            }
        }
    }
    encode_png(
        w,
        h,
        png::ColorType::Rgb,
        &rgb,
        &[
            ("Title", title.to_owned()),
            ("value_min", format!("{lo}")),
            ("value_max", format!("{hi}")),
        ],
    )
}

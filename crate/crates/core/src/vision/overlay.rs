use crate::raster::{encode_png, Raster, RasterError};

use super::LabeledSegmentation;

/// RGB PNG with each droplet tinted by a label-dependent colour over the
/// source image; for debugging segmentations.
pub fn render_overlay(img: &Raster, seg: &LabeledSegmentation) -> Result<Vec<u8>, RasterError> {
    let mut rgb = Vec::with_capacity(img.pixels().len() * 3);
    for (&v, &l) in img.pixels().iter().zip(seg.labels()) {
        if l == 0 {
            rgb.extend_from_slice(&[v, v, v]);
        } else {
            let c = palette(l);
            rgb.extend(c.iter().map(|&c| ((c as u16 + v as u16) / 2) as u8));
        }
    }
    let note = format!("{} droplets", seg.droplets().len());
    encode_png(
        img.width(),
        img.height(),
        png::ColorType::Rgb,
        &rgb,
        &[("Comment", note)],
    )
}

fn palette(label: u32) -> [u8; 3] {
    // golden-ratio hue walk
    let h = (label as f64 * 0.618_033_988_75).fract() * 6.0;
    let x = (1.0 - (h % 2.0 - 1.0).abs()) * 255.0;
    let (r, g, b) = match h as u32 {
        0 => (255.0, x, 0.0),
        1 => (x, 255.0, 0.0),
        2 => (0.0, 255.0, x),
        3 => (0.0, x, 255.0),
        4 => (x, 0.0, 255.0),
        _ => (255.0, 0.0, x),
    };
    [r as u8, g as u8, b as u8]
}

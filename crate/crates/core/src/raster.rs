//! 8-bit grayscale rasters, the dihedral transforms used for augmentation
//! and PNG input/output.

use std::io::{BufWriter, Cursor};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Smallest accepted raster edge, in pixels.
pub const MIN_EDGE: usize = 16;

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("raster {width}x{height} is smaller than the {MIN_EDGE}x{MIN_EDGE} minimum")]
    TooSmall { width: usize, height: usize },
    #[error("intensity buffer holds {got} values, expected {expected}")]
    Length { expected: usize, got: usize },
    #[error("crop {w}x{h}+{x}+{y} exceeds the {width}x{height} raster")]
    Crop {
        x: usize,
        y: usize,
        w: usize,
        h: usize,
        width: usize,
        height: usize,
    },
    #[error("cannot decode image: {0}")]
    Decode(String),
    #[error("cannot encode image: {0}")]
    Encode(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Row-major grayscale image; 0 is the darkest value.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Raster {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

/// The seven maps of the augmentation set: the identity plus six
/// non-trivial elements of the square's symmetry group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    Identity,
    Rotate90,
    Rotate180,
    Rotate270,
    MirrorVertical,
    MirrorHorizontal,
    Transpose,
}

impl Transform {
    pub const ALL: [Transform; 7] = [
        Transform::Identity,
        Transform::Rotate90,
        Transform::Rotate180,
        Transform::Rotate270,
        Transform::MirrorVertical,
        Transform::MirrorHorizontal,
        Transform::Transpose,
    ];

    /// Output dimensions for an input of the given size.
    pub fn output_size(self, width: usize, height: usize) -> (usize, usize) {
        match self {
            Transform::Rotate90 | Transform::Rotate270 | Transform::Transpose => (height, width),
            _ => (width, height),
        }
    }

    /// Source coordinate feeding output pixel `(x, y)`.
    fn source(self, x: usize, y: usize, width: usize, height: usize) -> (usize, usize) {
        match self {
            Transform::Identity => (x, y),
            // clockwise
            Transform::Rotate90 => (y, height - 1 - x),
            Transform::Rotate180 => (width - 1 - x, height - 1 - y),
            Transform::Rotate270 => (width - 1 - y, x),
            // flips rows top-to-bottom
            Transform::MirrorVertical => (x, height - 1 - y),
            Transform::MirrorHorizontal => (width - 1 - x, y),
            Transform::Transpose => (y, x),
        }
    }
}

/// Applies a dihedral map to any row-major grid.
pub fn transform_grid<T: Copy>(
    data: &[T],
    width: usize,
    height: usize,
    t: Transform,
) -> (Vec<T>, usize, usize) {
    let (ow, oh) = t.output_size(width, height);
    let mut out = Vec::with_capacity(data.len());
    for y in 0..oh {
        for x in 0..ow {
            let (sx, sy) = t.source(x, y, width, height);
            out.push(data[sy * width + sx]);
        }
    }
    (out, ow, oh)
}

impl Raster {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self, RasterError> {
        if width < MIN_EDGE || height < MIN_EDGE {
            return Err(RasterError::TooSmall { width, height });
        }
        if data.len() != width * height {
            return Err(RasterError::Length {
                expected: width * height,
                got: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Result<Self, RasterError> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        self.data[y * self.width + x] = v;
    }

    pub fn transformed(&self, t: Transform) -> Raster {
        let (data, width, height) = transform_grid(&self.data, self.width, self.height, t);
        Raster {
            width,
            height,
            data,
        }
    }

    pub fn crop(&self, x: usize, y: usize, w: usize, h: usize) -> Result<Raster, RasterError> {
        if x + w > self.width || y + h > self.height {
            return Err(RasterError::Crop {
                x,
                y,
                w,
                h,
                width: self.width,
                height: self.height,
            });
        }
        let mut data = Vec::with_capacity(w * h);
        for row in y..y + h {
            let start = row * self.width + x;
            data.extend_from_slice(&self.data[start..start + w]);
        }
        Raster::new(w, h, data)
    }

    /// Decodes an 8-bit grayscale or color PNG. Color is reduced to luma
    /// with Y = 0.299R + 0.587G + 0.114B, rounded half up; alpha is ignored.
    pub fn from_png_bytes(bytes: &[u8]) -> Result<Raster, RasterError> {
        let mut decoder = png::Decoder::new(Cursor::new(bytes));
        decoder.set_transformations(png::Transformations::normalize_to_color8());
        let mut reader = decoder
            .read_info()
            .map_err(|e| RasterError::Decode(e.to_string()))?;
        let size = reader
            .output_buffer_size()
            .ok_or_else(|| RasterError::Decode("image too large".into()))?;
        let mut buf = vec![0; size];
        let info = reader
            .next_frame(&mut buf)
            .map_err(|e| RasterError::Decode(e.to_string()))?;
        let (width, height) = (info.width as usize, info.height as usize);
        let channels = info.color_type.samples();
        let mut data = Vec::with_capacity(width * height);
        for row in buf.chunks(info.line_size).take(height) {
            for px in row[..width * channels].chunks(channels) {
                data.push(match channels {
                    1 | 2 => px[0],
                    _ => luma(px[0], px[1], px[2]),
                });
            }
        }
        Raster::new(width, height, data)
    }

    pub fn read_png(path: &Path) -> Result<Raster, RasterError> {
        Self::from_png_bytes(&std::fs::read(path)?)
    }

    pub fn to_png_bytes(&self) -> Result<Vec<u8>, RasterError> {
        encode_png(self.width, self.height, png::ColorType::Grayscale, &self.data, &[])
    }

    pub fn write_png(&self, path: &Path) -> Result<(), RasterError> {
        std::fs::write(path, self.to_png_bytes()?)?;
        Ok(())
    }
}

/// Integer luma with half-up rounding.
pub fn luma(r: u8, g: u8, b: u8) -> u8 {
    ((299 * r as u32 + 587 * g as u32 + 114 * b as u32 + 500) / 1000) as u8
}

/// Encodes an 8-bit image with optional `tEXt` annotations.
pub fn encode_png(
    width: usize,
    height: usize,
    color: png::ColorType,
    data: &[u8],
    text: &[(&str, String)],
) -> Result<Vec<u8>, RasterError> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(BufWriter::new(&mut out), width as u32, height as u32);
        enc.set_color(color);
        enc.set_depth(png::BitDepth::Eight);
        for (k, v) in text {
            enc.add_text_chunk((*k).to_owned(), v.clone())
                .map_err(|e| RasterError::Encode(e.to_string()))?;
        }
        let mut writer = enc
            .write_header()
            .map_err(|e| RasterError::Encode(e.to_string()))?;
        writer
            .write_image_data(data)
            .map_err(|e| RasterError::Encode(e.to_string()))?;
        writer
            .finish()
            .map_err(|e| RasterError::Encode(e.to_string()))?;
    }
    Ok(out)
}

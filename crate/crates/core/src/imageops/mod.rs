//! Pixel-level primitives: decoding, grayscale, cropping, padding, resizing.
//!
//! Conventions used throughout the crate:
//! - rasters are 8-bit, row-major, RGB interleaved;
//! - float intermediates are written back with round-half-up then clamp;
//! - borders reflect without repeating the edge pixel (`abc` pads to `b|abc|b`);
//! - grayscale is the classic SDTV weighting 0.299 R + 0.587 G + 0.114 B.

mod glcm;
mod select;

pub use glcm::{compute_glcm, quantize_level, GlcmMatrix, GlcmParams, DEFAULT_OFFSETS};
pub use select::{candidate_origins, select_top_patches, PatchSelectParams};

use crate::{Error, Result};

/// Patch side used by the shipped pipeline.
pub const PATCH_SIDE: u32 = 224;

/// File formats the toolkit reads and writes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImageFileFormat {
    Png,
    Jpeg,
}

/// Interleaved 8-bit RGB raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbBuffer {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl RgbBuffer {
    /// Black raster of the given size.
    pub fn new(width: u32, height: u32) -> Self {
        assert!(width > 0 && height > 0, "raster dims must be positive");
        RgbBuffer {
            width,
            height,
            data: vec![0; width as usize * height as usize * 3],
        }
    }

    pub fn from_raw(width: u32, height: u32, data: Vec<u8>) -> Result<Self> {
        let expected = width as usize * height as usize * 3;
        if width == 0 || height == 0 || data.len() != expected {
            return Err(Error::Parameter(format!(
                "raw buffer of {} bytes does not match {width}x{height} RGB",
                data.len()
            )));
        }
        Ok(RgbBuffer {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    #[inline]
    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set_pixel(&mut self, x: u32, y: u32, rgb: [u8; 3]) {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }
}

/// Single-channel 8-bit raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayBuffer {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl GrayBuffer {
    pub fn from_raw(width: u32, height: u32, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 || data.len() != width as usize * height as usize {
            return Err(Error::Parameter(format!(
                "raw buffer of {} bytes does not match {width}x{height} gray",
                data.len()
            )));
        }
        Ok(GrayBuffer {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn value(&self, x: u32, y: u32) -> u8 {
        self.data[y as usize * self.width as usize + x as usize]
    }
}

/// Square crop plus where it came from.
#[derive(Debug, Clone)]
pub struct Patch {
    pub pixels: RgbBuffer,
    /// Crop origin in source coordinates; 0 on any axis that needed padding.
    pub origin_x: u32,
    pub origin_y: u32,
    /// Identifier of the source image (manifest path for dataset runs).
    pub source_id: String,
    /// True when the source was smaller than the patch on some axis.
    pub padded: bool,
}

/// Round-half-up write-back used by every float-to-pixel conversion.
#[inline]
pub(crate) fn round_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// Mirror an out-of-range coordinate back into `0..n` without repeating the
/// edge sample (`-1` maps to `1`, `n` maps to `n-2`). Single-pixel axes clamp.
#[inline]
pub(crate) fn reflect_index(i: i64, n: u32) -> u32 {
    debug_assert!(n > 0);
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as i64 - 1);
    let mut m = i.rem_euclid(period);
    if m >= n as i64 {
        m = period - m;
    }
    m as u32
}

/// Decode PNG or JPEG bytes into an RGB raster.
///
/// An alpha channel, if present, is composited over white. With no format
/// hint the container is sniffed from the stream.
pub fn decode_image(bytes: &[u8], hint: Option<ImageFileFormat>) -> Result<RgbBuffer> {
    let decoded = match hint {
        Some(ImageFileFormat::Png) => {
            image::load_from_memory_with_format(bytes, image::ImageFormat::Png)
        }
        Some(ImageFileFormat::Jpeg) => {
            image::load_from_memory_with_format(bytes, image::ImageFormat::Jpeg)
        }
        None => image::load_from_memory(bytes),
    };
    let decoded = decoded.map_err(|e| match e {
        image::ImageError::Unsupported(u) => Error::UnsupportedFormat(u.to_string()),
        other => Error::Decode {
            consumed: bytes.len(),
            detail: other.to_string(),
        },
    })?;

    let (width, height) = (decoded.width(), decoded.height());
    if width == 0 || height == 0 {
        return Err(Error::Decode {
            consumed: bytes.len(),
            detail: "zero-sized image".into(),
        });
    }
    let data = if decoded.color().has_alpha() {
        let rgba = decoded.to_rgba8();
        let mut out = Vec::with_capacity(width as usize * height as usize * 3);
        for px in rgba.pixels() {
            let a = px[3] as f64 / 255.0;
            for c in 0..3 {
                out.push(round_u8(a * px[c] as f64 + (1.0 - a) * 255.0));
            }
        }
        out
    } else {
        decoded.to_rgb8().into_raw()
    };
    RgbBuffer::from_raw(width, height, data)
}

/// Encode a raster as PNG bytes.
pub fn encode_png(img: &RgbBuffer) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    let encoder = image::codecs::png::PngEncoder::new(&mut out);
    image::ImageEncoder::write_image(
        encoder,
        img.data(),
        img.width(),
        img.height(),
        image::ExtendedColorType::Rgb8,
    )
    .map_err(|e| Error::Parameter(format!("PNG encode failed: {e}")))?;
    Ok(out)
}

/// SDTV luma, rounded half up: pure red 76, pure blue 29.
#[inline]
pub fn luma(rgb: [u8; 3]) -> u8 {
    round_u8(0.299 * rgb[0] as f64 + 0.587 * rgb[1] as f64 + 0.114 * rgb[2] as f64)
}

/// Collapse RGB to single-channel luma.
pub fn to_grayscale(img: &RgbBuffer) -> GrayBuffer {
    let mut data = Vec::with_capacity(img.width as usize * img.height as usize);
    for px in img.data.chunks_exact(3) {
        data.push(luma([px[0], px[1], px[2]]));
    }
    GrayBuffer {
        width: img.width,
        height: img.height,
        data,
    }
}

/// Extract a `side`-sized square patch with its top-left corner at
/// (`origin_x`, `origin_y`) in source coordinates.
///
/// Any axis shorter than `side` is reflect-padded symmetrically (extra pixel
/// on the trailing edge) and the origin on that axis is forced to 0.
pub(crate) fn extract_patch(
    img: &RgbBuffer,
    origin_x: u32,
    origin_y: u32,
    side: u32,
    source_id: &str,
) -> Patch {
    let pad_x = img.width < side;
    let pad_y = img.height < side;
    let origin_x = if pad_x { 0 } else { origin_x };
    let origin_y = if pad_y { 0 } else { origin_y };
    debug_assert!(pad_x || origin_x + side <= img.width);
    debug_assert!(pad_y || origin_y + side <= img.height);

    let pad_left = if pad_x { (side - img.width) / 2 } else { 0 };
    let pad_top = if pad_y { (side - img.height) / 2 } else { 0 };

    let mut pixels = RgbBuffer::new(side, side);
    for py in 0..side {
        let sy = if pad_y {
            reflect_index(py as i64 - pad_top as i64, img.height)
        } else {
            origin_y + py
        };
        for px in 0..side {
            let sx = if pad_x {
                reflect_index(px as i64 - pad_left as i64, img.width)
            } else {
                origin_x + px
            };
            pixels.set_pixel(px, py, img.pixel(sx, sy));
        }
    }
    Patch {
        pixels,
        origin_x,
        origin_y,
        source_id: source_id.to_string(),
        padded: pad_x || pad_y,
    }
}

/// Centered square crop; sources smaller than `side` are reflect-padded.
///
/// The origin is `floor((extent - side) / 2)` per axis, so a 300x300 source
/// cropped to 224 starts at (38, 38).
pub fn center_crop(img: &RgbBuffer, side: u32, source_id: &str) -> Patch {
    let ox = img.width.saturating_sub(side) / 2;
    let oy = img.height.saturating_sub(side) / 2;
    extract_patch(img, ox, oy, side, source_id)
}

/// Bilinear resize with half-pixel centers: source coordinate is
/// `(dst + 0.5) * in / out - 0.5`, samples clamped to the source rect.
///
/// Resizing to the identical size is byte-identical to the input.
pub fn resize_bilinear(img: &RgbBuffer, out_w: u32, out_h: u32) -> Result<RgbBuffer> {
    if out_w == 0 || out_h == 0 {
        return Err(Error::Parameter("resize target must be positive".into()));
    }
    let (in_w, in_h) = (img.width as f64, img.height as f64);
    let mut out = RgbBuffer::new(out_w, out_h);

    // Precompute per-axis sample pairs; axes are separable.
    let x_taps: Vec<(u32, u32, f64)> = (0..out_w)
        .map(|dx| axis_tap(dx, out_w, in_w, img.width))
        .collect();
    let y_taps: Vec<(u32, u32, f64)> = (0..out_h)
        .map(|dy| axis_tap(dy, out_h, in_h, img.height))
        .collect();

    for (dy, &(y0, y1, fy)) in y_taps.iter().enumerate() {
        for (dx, &(x0, x1, fx)) in x_taps.iter().enumerate() {
            let p00 = img.pixel(x0, y0);
            let p10 = img.pixel(x1, y0);
            let p01 = img.pixel(x0, y1);
            let p11 = img.pixel(x1, y1);
            let mut rgb = [0u8; 3];
            for c in 0..3 {
                let top = p00[c] as f64 * (1.0 - fx) + p10[c] as f64 * fx;
                let bot = p01[c] as f64 * (1.0 - fx) + p11[c] as f64 * fx;
                rgb[c] = round_u8(top * (1.0 - fy) + bot * fy);
            }
            out.set_pixel(dx as u32, dy as u32, rgb);
        }
    }
    Ok(out)
}

/// Left/right sample indices and right-sample weight for one output index.
#[inline]
fn axis_tap(dst: u32, out_extent: u32, in_extent: f64, in_px: u32) -> (u32, u32, f64) {
    let src = (dst as f64 + 0.5) * in_extent / out_extent as f64 - 0.5;
    let src = src.clamp(0.0, in_extent - 1.0);
    let i0 = src.floor() as u32;
    let i1 = (i0 + 1).min(in_px - 1);
    (i0, i1, src - i0 as f64)
}

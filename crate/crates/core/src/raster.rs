//! 2D rasters: grayscale intensity images, binary masks, bounding boxes,
//! and the PNG file IO used throughout the pipeline.
//!
//! Images are stored as `u16` regardless of declared bit depth; 12/14-bit
//! data lives in a 16-bit container with `bit_depth` recording the true
//! dynamic range (the manifest carries it between runs).

use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};

/// A single-channel intensity raster, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    bit_depth: u8,
    pixels: Vec<u16>,
}

impl GrayImage {
    /// Supported bit depths: values fit the declared range.
    pub const SUPPORTED_DEPTHS: [u8; 4] = [8, 12, 14, 16];

    pub fn new(width: usize, height: usize, bit_depth: u8, pixels: Vec<u16>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Validation(format!(
                "image dimensions must be positive, got {width}x{height}"
            )));
        }
        if !Self::SUPPORTED_DEPTHS.contains(&bit_depth) {
            return Err(Error::Validation(format!(
                "unsupported bit depth {bit_depth} (expected 8, 12, 14, or 16)"
            )));
        }
        if pixels.len() != width * height {
            return Err(Error::Validation(format!(
                "pixel count {} does not match {width}x{height}",
                pixels.len()
            )));
        }
        let max = Self::max_value_for(bit_depth);
        if let Some(&v) = pixels.iter().find(|&&v| v > max) {
            return Err(Error::Validation(format!(
                "pixel value {v} exceeds {bit_depth}-bit range (max {max})"
            )));
        }
        Ok(GrayImage {
            width,
            height,
            bit_depth,
            pixels,
        })
    }

    /// All-zero image of the given geometry.
    pub fn zeros(width: usize, height: usize, bit_depth: u8) -> Result<Self> {
        Self::new(width, height, bit_depth, vec![0; width * height])
    }

    fn max_value_for(bit_depth: u8) -> u16 {
        if bit_depth >= 16 {
            u16::MAX
        } else {
            ((1u32 << bit_depth) - 1) as u16
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bit_depth(&self) -> u8 {
        self.bit_depth
    }

    /// Maximum representable intensity for this image's declared depth.
    pub fn max_value(&self) -> u16 {
        Self::max_value_for(self.bit_depth)
    }

    pub fn pixels(&self) -> &[u16] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> u16 {
        self.pixels[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: u16) {
        self.pixels[y * self.width + x] = v;
    }

    /// Reinterprets the same pixel data under a different declared depth,
    /// revalidating the range.
    pub fn with_bit_depth(self, bit_depth: u8) -> Result<Self> {
        Self::new(self.width, self.height, bit_depth, self.pixels)
    }

    /// Intensities scaled to `[0, 1]` by the declared dynamic range.
    pub fn to_normalized(&self) -> Array2<f64> {
        let max = self.max_value() as f64;
        Array2::from_shape_vec(
            (self.height, self.width),
            self.pixels.iter().map(|&v| v as f64 / max).collect(),
        )
        .expect("pixel count matches dimensions")
    }

    /// Builds an 8-bit image from `[0, 1]` values, clamping and rounding.
    pub fn from_normalized(values: &Array2<f64>) -> Result<Self> {
        let (h, w) = values.dim();
        let pixels = values
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u16)
            .collect();
        Self::new(w, h, 8, pixels)
    }
}

/// A row-major boolean raster paired with an image of the same geometry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Validation(format!(
                "mask dimensions must be positive, got {width}x{height}"
            )));
        }
        if bits.len() != width * height {
            return Err(Error::Validation(format!(
                "bit count {} does not match {width}x{height}",
                bits.len()
            )));
        }
        Ok(BinaryMask {
            width,
            height,
            bits,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        BinaryMask {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.bits[y * self.width + x] = v;
    }

    /// Number of true pixels.
    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.iter().all(|&b| !b)
    }

    pub fn same_dims(&self, other: &BinaryMask) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Coordinates of true pixels in scan order, as (x, y).
    pub fn true_pixels(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y) {
                    out.push((x, y));
                }
            }
        }
        out
    }

    /// Tight bounding box of the true pixels, if any.
    pub fn tight_box(&self) -> Option<BoundingBox> {
        let (mut x0, mut y0) = (usize::MAX, usize::MAX);
        let (mut x1, mut y1) = (0usize, 0usize);
        let mut any = false;
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y) {
                    any = true;
                    x0 = x0.min(x);
                    y0 = y0.min(y);
                    x1 = x1.max(x);
                    y1 = y1.max(y);
                }
            }
        }
        any.then(|| BoundingBox {
            x0,
            y0,
            w: x1 - x0 + 1,
            h: y1 - y0 + 1,
        })
    }
}

/// Axis-aligned pixel rectangle; `(x0, y0)` inclusive top-left.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct BoundingBox {
    pub x0: usize,
    pub y0: usize,
    pub w: usize,
    pub h: usize,
}

impl BoundingBox {
    pub fn new(x0: usize, y0: usize, w: usize, h: usize) -> Result<Self> {
        if w == 0 || h == 0 {
            return Err(Error::Validation(format!(
                "bounding box extent must be positive, got {w}x{h}"
            )));
        }
        Ok(BoundingBox { x0, y0, w, h })
    }

    pub fn fits_within(&self, width: usize, height: usize) -> bool {
        self.x0 + self.w <= width && self.y0 + self.h <= height
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x0 && x < self.x0 + self.w && y >= self.y0 && y < self.y0 + self.h
    }
}

// ---------------------------------------------------------------------------
// PNG IO
// ---------------------------------------------------------------------------

/// Reads a grayscale PNG. 8-bit files load with `bit_depth = 8`; 16-bit files
/// load with `bit_depth = 16` (callers holding a declared 12/14-bit depth
/// reinterpret via [`GrayImage::with_bit_depth`]). Color images are rejected.
pub fn read_image(path: &Path) -> Result<GrayImage> {
    let img = image::open(path).map_err(|e| Error::image(path, e.to_string()))?;
    match img {
        image::DynamicImage::ImageLuma8(buf) => {
            let (w, h) = buf.dimensions();
            GrayImage::new(
                w as usize,
                h as usize,
                8,
                buf.into_raw().into_iter().map(u16::from).collect(),
            )
        }
        image::DynamicImage::ImageLuma16(buf) => {
            let (w, h) = buf.dimensions();
            GrayImage::new(w as usize, h as usize, 16, buf.into_raw())
        }
        _ => Err(Error::image(path, "color image unsupported")),
    }
}

/// Writes a grayscale PNG: an 8-bit container for 8-bit data, a 16-bit
/// container otherwise. Lossless round trip in both cases.
pub fn write_image(img: &GrayImage, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let (w, h) = (img.width as u32, img.height as u32);
    if img.bit_depth == 8 {
        let buf: image::ImageBuffer<image::Luma<u8>, Vec<u8>> =
            image::ImageBuffer::from_raw(w, h, img.pixels.iter().map(|&v| v as u8).collect())
                .expect("buffer sized from image");
        buf.save(path)
            .map_err(|e| Error::image(path, e.to_string()))
    } else {
        let buf: image::ImageBuffer<image::Luma<u16>, Vec<u16>> =
            image::ImageBuffer::from_raw(w, h, img.pixels.clone()).expect("buffer sized from image");
        buf.save(path)
            .map_err(|e| Error::image(path, e.to_string()))
    }
}

/// Reads an 8-bit PNG as a mask: any nonzero value is true.
pub fn read_mask(path: &Path) -> Result<BinaryMask> {
    let img = read_image(path)?;
    BinaryMask::new(
        img.width,
        img.height,
        img.pixels.iter().map(|&v| v != 0).collect(),
    )
}

/// Writes a mask as an 8-bit PNG with 0 = background, 255 = lesion.
pub fn write_mask(mask: &BinaryMask, path: &Path) -> Result<()> {
    let img = GrayImage::new(
        mask.width,
        mask.height,
        8,
        mask.bits.iter().map(|&b| if b { 255 } else { 0 }).collect(),
    )?;
    write_image(&img, path)
}

// ---------------------------------------------------------------------------
// Resampling
// ---------------------------------------------------------------------------

/// Bilinear resample of a `[0, 1]`-valued raster (pixel-center convention).
pub fn resize_bilinear(src: &Array2<f64>, out_h: usize, out_w: usize) -> Array2<f64> {
    let (in_h, in_w) = src.dim();
    let scale_y = in_h as f64 / out_h as f64;
    let scale_x = in_w as f64 / out_w as f64;
    Array2::from_shape_fn((out_h, out_w), |(oy, ox)| {
        let sy = ((oy as f64 + 0.5) * scale_y - 0.5).clamp(0.0, (in_h - 1) as f64);
        let sx = ((ox as f64 + 0.5) * scale_x - 0.5).clamp(0.0, (in_w - 1) as f64);
        let y0 = sy.floor() as usize;
        let x0 = sx.floor() as usize;
        let y1 = (y0 + 1).min(in_h - 1);
        let x1 = (x0 + 1).min(in_w - 1);
        let fy = sy - y0 as f64;
        let fx = sx - x0 as f64;
        src[[y0, x0]] * (1.0 - fy) * (1.0 - fx)
            + src[[y0, x1]] * (1.0 - fy) * fx
            + src[[y1, x0]] * fy * (1.0 - fx)
            + src[[y1, x1]] * fy * fx
    })
}

/// Nearest-neighbour resample of a mask.
pub fn resize_mask_nearest(src: &BinaryMask, out_h: usize, out_w: usize) -> BinaryMask {
    let mut out = BinaryMask::zeros(out_w, out_h);
    let scale_y = src.height as f64 / out_h as f64;
    let scale_x = src.width as f64 / out_w as f64;
    for oy in 0..out_h {
        for ox in 0..out_w {
            let sy = (((oy as f64 + 0.5) * scale_y - 0.5).round() as i64)
                .clamp(0, src.height as i64 - 1) as usize;
            let sx = (((ox as f64 + 0.5) * scale_x - 0.5).round() as i64)
                .clamp(0, src.width as i64 - 1) as usize;
            out.set(ox, oy, src.get(sx, sy));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    #[test]
    fn round_trip_8bit_is_lossless() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("img.png");
        let pixels: Vec<u16> = (0..32 * 32).map(|i| (i % 256) as u16).collect();
        let img = GrayImage::new(32, 32, 8, pixels).unwrap();
        write_image(&img, &path).unwrap();
        let back = read_image(&path).unwrap();
        assert_eq!(img, back);
    }

    #[test]
    fn fourteen_bit_ramp_survives_16bit_container() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("ramp.png");
        // ramp spanning the full 14-bit range
        let n = 64usize;
        let max = (1u32 << 14) - 1;
        let pixels: Vec<u16> = (0..n * n)
            .map(|i| ((i as u32 * max) / (n as u32 * n as u32 - 1)) as u16)
            .collect();
        let img = GrayImage::new(n, n, 14, pixels.clone()).unwrap();
        write_image(&img, &path).unwrap();
        let back = read_image(&path).unwrap();
        assert_eq!(back.bit_depth(), 16);
        let recovered = back.with_bit_depth(14).unwrap();
        assert_eq!(recovered.pixels(), &pixels[..]);
        assert_eq!(recovered.bit_depth(), 14);
    }

    #[test]
    fn color_image_is_rejected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("rgb.png");
        let buf: image::ImageBuffer<image::Rgb<u8>, Vec<u8>> =
            image::ImageBuffer::from_fn(4, 4, |x, y| image::Rgb([x as u8, y as u8, 7]));
        buf.save(&path).unwrap();
        let err = read_image(&path).unwrap_err();
        assert!(err.to_string().contains("color image unsupported"));
    }

    #[test]
    fn out_of_range_pixel_rejected() {
        let err = GrayImage::new(2, 2, 12, vec![0, 1, 4095, 4096]).unwrap_err();
        assert!(err.to_string().contains("exceeds 12-bit range"));
    }

    #[test]
    fn mask_round_trip_nonzero_reads_true() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("mask.png");
        // write an image with a mid-gray value; it must read back as true
        let img = GrayImage::new(2, 2, 8, vec![0, 1, 128, 255]).unwrap();
        write_image(&img, &path).unwrap();
        let mask = read_mask(&path).unwrap();
        assert_eq!(mask.bits(), &[false, true, true, true]);
    }

    #[test]
    fn resize_constant_stays_constant() {
        let src = Array2::from_elem((5, 7), 0.42);
        let out = resize_bilinear(&src, 13, 3);
        for &v in out.iter() {
            assert!((v - 0.42).abs() < 1e-12);
        }
    }

    #[test]
    fn tight_box_of_single_pixel() {
        let mut m = BinaryMask::zeros(8, 8);
        m.set(3, 5, true);
        let b = m.tight_box().unwrap();
        assert_eq!(b, BoundingBox { x0: 3, y0: 5, w: 1, h: 1 });
    }
}

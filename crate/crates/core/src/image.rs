//! RGB rasters: 8-bit images as read from disk and normalized `[0, 1]`
//! working images fed to the transforms.

use std::path::Path;

use crate::error::{Error, Result};

/// Interleaved 8-bit RGB image, row-major `H×W×3`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ImageU8 {
    height: usize,
    width: usize,
    pixels: Vec<u8>,
}

/// Interleaved RGB image with values in `[0, 1]`, row-major `H×W×3`.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageF {
    height: usize,
    width: usize,
    pixels: Vec<f32>,
}

/// Dimensions of an image before padding, kept so it can be cropped back.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Dims {
    pub height: usize,
    pub width: usize,
}

impl ImageU8 {
    pub fn new(height: usize, width: usize, pixels: Vec<u8>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidArgument(format!("empty image {height}x{width}")));
        }
        if pixels.len() != height * width * 3 {
            return Err(crate::error::shape_err("ImageU8::new", height * width * 3, pixels.len()));
        }
        Ok(ImageU8 { height, width, pixels })
    }

    pub fn from_fn(height: usize, width: usize, f: impl Fn(usize, usize, usize) -> u8) -> Self {
        assert!(height > 0 && width > 0);
        let mut pixels = Vec::with_capacity(height * width * 3);
        for y in 0..height {
            for x in 0..width {
                for c in 0..3 {
                    pixels.push(f(y, x, c));
                }
            }
        }
        ImageU8 { height, width, pixels }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> Dims {
        Dims {
            height: self.height,
            width: self.width,
        }
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn get(&self, y: usize, x: usize, c: usize) -> u8 {
        self.pixels[(y * self.width + x) * 3 + c]
    }

    /// Maps `0..=255` onto `[0, 1]`.
    pub fn to_float(&self) -> ImageF {
        ImageF {
            height: self.height,
            width: self.width,
            pixels: self.pixels.iter().map(|&v| v as f32 / 255.0).collect(),
        }
    }

    /// Decodes a PNG or binary PPM/PNM file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let img = image::open(path.as_ref())?.into_rgb8();
        let (w, h) = img.dimensions();
        ImageU8::new(h as usize, w as usize, img.into_raw())
    }

    /// Encodes by extension: `.ppm`/`.pnm` as binary PPM, anything else as PNG.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let buf = image::RgbImage::from_raw(self.width as u32, self.height as u32, self.pixels.clone())
            .expect("pixel buffer sized at construction");
        let is_pnm = matches!(
            path.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase()).as_deref(),
            Some("ppm" | "pnm")
        );
        let format = if is_pnm { image::ImageFormat::Pnm } else { image::ImageFormat::Png };
        buf.save_with_format(path, format)?;
        Ok(())
    }
}

impl ImageF {
    pub fn new(height: usize, width: usize, pixels: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidArgument(format!("empty image {height}x{width}")));
        }
        if pixels.len() != height * width * 3 {
            return Err(crate::error::shape_err("ImageF::new", height * width * 3, pixels.len()));
        }
        if let Some(v) = pixels.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidArgument(format!("pixel value {v} outside [0, 1]")));
        }
        Ok(ImageF { height, width, pixels })
    }

    /// Builds an image from arbitrary reals, clamping into `[0, 1]`
    /// (non-finite values become 0).
    pub fn from_clamped(height: usize, width: usize, mut pixels: Vec<f32>) -> Self {
        assert_eq!(pixels.len(), height * width * 3);
        for v in &mut pixels {
            *v = if v.is_finite() { v.clamp(0.0, 1.0) } else { 0.0 };
        }
        ImageF { height, width, pixels }
    }

    /// Builds from a planar `3×H×W` buffer, clamping into `[0, 1]`.
    pub fn from_planar_clamped(height: usize, width: usize, planar: &[f32]) -> Self {
        assert_eq!(planar.len(), height * width * 3);
        let hw = height * width;
        let mut pixels = vec![0.0; hw * 3];
        for c in 0..3 {
            for i in 0..hw {
                pixels[i * 3 + c] = planar[c * hw + i];
            }
        }
        ImageF::from_clamped(height, width, pixels)
    }

    pub fn filled(height: usize, width: usize, v: f32) -> Self {
        ImageF::from_clamped(height, width, vec![v; height * width * 3])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> Dims {
        Dims {
            height: self.height,
            width: self.width,
        }
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    pub fn get(&self, y: usize, x: usize, c: usize) -> f32 {
        self.pixels[(y * self.width + x) * 3 + c]
    }

    /// Planar `3×H×W` copy, the layout the transforms consume.
    pub fn to_planar(&self) -> Vec<f32> {
        let hw = self.height * self.width;
        let mut out = vec![0.0; hw * 3];
        for i in 0..hw {
            for c in 0..3 {
                out[c * hw + i] = self.pixels[i * 3 + c];
            }
        }
        out
    }

    /// Multiplies every value by `s` in `(0, 1]`.
    pub fn scaled(&self, s: f32) -> ImageF {
        debug_assert!(s > 0.0 && s <= 1.0);
        ImageF {
            height: self.height,
            width: self.width,
            pixels: self.pixels.iter().map(|&v| v * s).collect(),
        }
    }

    /// Quantizes `round(255 · v / s)` onto the 8-bit grid, clamping to
    /// `[0, 255]`. With `s = 1` this is the plain 8-bit conversion.
    pub fn to_u8_rescaled(&self, s: f32) -> ImageU8 {
        let inv = 1.0 / s as f64;
        ImageU8 {
            height: self.height,
            width: self.width,
            pixels: self
                .pixels
                .iter()
                .map(|&v| (255.0 * v as f64 * inv).round().clamp(0.0, 255.0) as u8)
                .collect(),
        }
    }

    pub fn to_u8(&self) -> ImageU8 {
        self.to_u8_rescaled(1.0)
    }

    /// Crops the `h×w` window whose top-left corner is `(y0, x0)`.
    pub fn crop(&self, y0: usize, x0: usize, h: usize, w: usize) -> Result<ImageF> {
        if h == 0 || w == 0 || y0 + h > self.height || x0 + w > self.width {
            return Err(Error::InvalidArgument(format!(
                "crop {h}x{w} at ({y0},{x0}) exceeds {}x{}",
                self.height, self.width
            )));
        }
        let mut pixels = Vec::with_capacity(h * w * 3);
        for y in y0..y0 + h {
            let row = (y * self.width + x0) * 3;
            pixels.extend_from_slice(&self.pixels[row..row + w * 3]);
        }
        Ok(ImageF { height: h, width: w, pixels })
    }

    /// Swaps colour channels: output channel `c` takes input channel `perm[c]`.
    pub fn permute_channels(&self, perm: [usize; 3]) -> ImageF {
        let mut pixels = self.pixels.clone();
        for (dst, src) in pixels.chunks_mut(3).zip(self.pixels.chunks(3)) {
            for c in 0..3 {
                dst[c] = src[perm[c]];
            }
        }
        ImageF {
            height: self.height,
            width: self.width,
            pixels,
        }
    }
}

/// Pads with edge replication up to the next multiples of `stride`.
pub fn pad_to_stride(x: &ImageF, stride: usize) -> Result<(ImageF, Dims)> {
    if stride == 0 {
        return Err(Error::InvalidArgument("stride must be at least 1".into()));
    }
    let dims = x.dims();
    let h = dims.height.div_ceil(stride) * stride;
    let w = dims.width.div_ceil(stride) * stride;
    if (h, w) == (dims.height, dims.width) {
        return Ok((x.clone(), dims));
    }
    let mut pixels = Vec::with_capacity(h * w * 3);
    for y in 0..h {
        let sy = y.min(dims.height - 1);
        for xx in 0..w {
            let sx = xx.min(dims.width - 1);
            let i = (sy * dims.width + sx) * 3;
            pixels.extend_from_slice(&x.pixels[i..i + 3]);
        }
    }
    Ok((ImageF { height: h, width: w, pixels }, dims))
}

/// Top-left crop back to `original`.
pub fn unpad(x: &ImageF, original: Dims) -> Result<ImageF> {
    if original.height > x.height || original.width > x.width {
        return Err(Error::InvalidArgument(format!(
            "cannot unpad {}x{} to larger {}x{}",
            x.height, x.width, original.height, original.width
        )));
    }
    x.crop(0, 0, original.height, original.width)
}

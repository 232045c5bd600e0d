//! Image containers, gamma transforms, the intensity/chroma split, and PSNR.
//!
//! [`ImageF`] is the shared pixel container for the whole crate: a flat
//! row-major `f64` buffer addressed by `(x, y, channel)`. Images are
//! immutable once constructed; every operation returns a new image, so
//! read-only sharing across threads is safe.

use crate::error::{dim_mismatch, Error, Result};

/// Multi-channel floating image in linear radiance space.
///
/// Values are nominally in `[0, 1]`; intermediate math may exceed this and
/// is clamped at documented points. All values are finite.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageF {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl ImageF {
    /// Builds an image from a flat row-major buffer. Rejects empty
    /// dimensions, channel counts other than 1 or 3, buffer length
    /// mismatches, and non-finite values.
    pub fn from_vec(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidParam(format!(
                "image dimensions must be positive, got {width}x{height}"
            )));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidParam(format!(
                "channel count must be 1 or 3, got {channels}"
            )));
        }
        if data.len() != width * height * channels {
            return Err(dim_mismatch(
                "pixel buffer length",
                width * height * channels,
                data.len(),
            ));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("image construction"));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    /// Constant-valued image.
    pub fn filled(width: usize, height: usize, channels: usize, value: f64) -> Result<Self> {
        Self::from_vec(width, height, channels, vec![value; width * height * channels])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, c: usize) -> usize {
        (y * self.width + x) * self.channels + c
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[self.index(x, y, c)]
    }

    /// All channels of one pixel.
    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> &[f64] {
        let i = (y * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }

    pub fn same_shape(&self, other: &ImageF) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    pub(crate) fn ensure_same_shape(&self, other: &ImageF, context: &'static str) -> Result<()> {
        if !self.same_shape(other) {
            return Err(dim_mismatch(
                context,
                format!("{}x{}x{}", self.width, self.height, self.channels),
                format!("{}x{}x{}", other.width, other.height, other.channels),
            ));
        }
        Ok(())
    }

    /// Applies `f` to every value, producing a new image. The callee must
    /// keep values finite.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> ImageF {
        let data = self.data.iter().map(|&v| f(v)).collect();
        ImageF {
            width: self.width,
            height: self.height,
            channels: self.channels,
            data,
        }
    }

    pub(crate) fn from_parts_unchecked(
        width: usize,
        height: usize,
        channels: usize,
        data: Vec<f64>,
    ) -> ImageF {
        debug_assert_eq!(data.len(), width * height * channels);
        debug_assert!(data.iter().all(|v| v.is_finite()));
        ImageF {
            width,
            height,
            channels,
            data,
        }
    }
}

/// Single-channel scalar grid used for transmission maps, log-transmission
/// maps, lower bounds, and depth.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Field {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(dim_mismatch("field buffer length", width * height, data.len()));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("field construction"));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.data[y * self.width + x] = v;
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn same_shape_as_image(&self, img: &ImageF) -> bool {
        self.width == img.width() && self.height == img.height()
    }

    /// Single-channel image view of this field (values copied).
    pub fn to_image(&self) -> ImageF {
        ImageF::from_parts_unchecked(self.width, self.height, 1, self.data.clone())
    }
}

/// Pure power-law gamma. `to_linear` raises to `exponent`, `to_display`
/// to `1/exponent`; exponent 1.0 is a pass-through.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaSpec {
    exponent: f64,
}

impl GammaSpec {
    pub fn new(exponent: f64) -> Result<Self> {
        if !exponent.is_finite() || exponent <= 0.0 {
            return Err(Error::InvalidParam(format!(
                "gamma exponent must be a positive real, got {exponent}"
            )));
        }
        Ok(Self { exponent })
    }

    pub fn exponent(&self) -> f64 {
        self.exponent
    }

    /// Identity gamma (no encoding).
    pub fn linear() -> Self {
        Self { exponent: 1.0 }
    }
}

impl Default for GammaSpec {
    fn default() -> Self {
        Self { exponent: 2.2 }
    }
}

/// Inverse gamma correction: display-encoded values to linear radiance.
/// Values are clamped to `[0, 1]` before the power law.
pub fn to_linear(img: &ImageF, g: GammaSpec) -> ImageF {
    if g.exponent == 1.0 {
        return img.map(|v| v.clamp(0.0, 1.0));
    }
    img.map(|v| v.clamp(0.0, 1.0).powf(g.exponent))
}

/// Display gamma encoding: linear radiance to display values. Inputs are
/// clamped to `[0, 1]` first.
pub fn to_display(img: &ImageF, g: GammaSpec) -> ImageF {
    if g.exponent == 1.0 {
        return img.map(|v| v.clamp(0.0, 1.0));
    }
    let inv = 1.0 / g.exponent;
    img.map(|v| v.clamp(0.0, 1.0).powf(inv))
}

/// Peak signal-to-noise ratio in decibels: `10·log10(peak²/MSE)` over all
/// values of both images. Returns `f64::INFINITY` when the images are
/// identical (MSE = 0).
pub fn psnr(a: &ImageF, b: &ImageF, peak: f64) -> Result<f64> {
    a.ensure_same_shape(b, "psnr operands")?;
    let mse = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| {
            let d = x - y;
            d * d
        })
        .sum::<f64>()
        / a.data().len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / mse).log10())
}

/// Intensity is defined below this threshold as "undefined"; chroma ratios
/// there are stored as 1.
const INTENSITY_FLOOR: f64 = 1e-6;

/// Channel-mean intensity plus the per-channel ratios needed to rebuild
/// the color image exactly.
#[derive(Debug, Clone)]
pub struct IntensityChroma {
    pub intensity: ImageF,
    /// Per-channel ratio `value / intensity`, 1 where intensity is below
    /// the floor.
    pub chroma: ImageF,
}

/// Splits a 3-channel image into channel-mean intensity and chroma ratios.
pub fn split_intensity(img: &ImageF) -> Result<IntensityChroma> {
    if img.channels() != 3 {
        return Err(dim_mismatch("split_intensity channels", 3, img.channels()));
    }
    let n = img.pixel_count();
    let mut intensity = Vec::with_capacity(n);
    let mut chroma = Vec::with_capacity(n * 3);
    for px in img.data().chunks_exact(3) {
        let m = (px[0] + px[1] + px[2]) / 3.0;
        intensity.push(m);
        if m < INTENSITY_FLOOR {
            chroma.extend_from_slice(&[1.0, 1.0, 1.0]);
        } else {
            chroma.extend_from_slice(&[px[0] / m, px[1] / m, px[2] / m]);
        }
    }
    Ok(IntensityChroma {
        intensity: ImageF::from_parts_unchecked(img.width(), img.height(), 1, intensity),
        chroma: ImageF::from_parts_unchecked(img.width(), img.height(), 3, chroma),
    })
}

/// Rebuilds a color image from a (possibly modified) intensity and stored
/// chroma ratios, clamping to `[0, 1]`.
pub fn merge_intensity(ic: &IntensityChroma) -> Result<ImageF> {
    if ic.intensity.channels() != 1 || ic.chroma.channels() != 3 {
        return Err(dim_mismatch(
            "merge_intensity channels",
            "1 intensity / 3 chroma",
            format!("{} / {}", ic.intensity.channels(), ic.chroma.channels()),
        ));
    }
    if ic.intensity.pixel_count() != ic.chroma.pixel_count() {
        return Err(dim_mismatch(
            "merge_intensity pixels",
            ic.intensity.pixel_count(),
            ic.chroma.pixel_count(),
        ));
    }
    let mut data = Vec::with_capacity(ic.chroma.data().len());
    for (i, ratios) in ic.chroma.data().chunks_exact(3).enumerate() {
        let m = ic.intensity.data()[i];
        for c in 0..3 {
            data.push((m * ratios[c]).clamp(0.0, 1.0));
        }
    }
    Ok(ImageF::from_parts_unchecked(
        ic.chroma.width(),
        ic.chroma.height(),
        3,
        data,
    ))
}

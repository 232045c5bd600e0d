//! Structure-map extraction: iterated edge-preserving smoothing that
//! suppresses fine texture while keeping large-scale edges.
//!
//! Each round replaces every pixel by a weighted average over a square
//! window, weight = spatial Gaussian x range Gaussian on the previous
//! round's values (joint bilateral, guided by itself). The result shapes
//! the transmission solver's guided weights; it is never displayed.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::ImageF;

/// Parameters of the structure extractor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StructureParams {
    /// Spatial Gaussian sigma in pixels. Default: 3.0
    pub spatial_sigma: f64,
    /// Range Gaussian sigma in value units. Default: 0.1
    pub range_sigma: f64,
    /// Smoothing rounds; 0 returns the input unchanged. Default: 3
    pub iterations: usize,
}

impl Default for StructureParams {
    fn default() -> Self {
        Self {
            spatial_sigma: 3.0,
            range_sigma: 0.1,
            iterations: 3,
        }
    }
}

impl StructureParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.spatial_sigma > 0.0) || !(self.range_sigma > 0.0) {
            return Err(Error::InvalidParam(format!(
                "structure sigmas must be positive, got spatial {} range {}",
                self.spatial_sigma, self.range_sigma
            )));
        }
        Ok(())
    }
}

/// Texture-suppressed, edge-preserving version of the input, same shape.
#[derive(Debug, Clone)]
pub struct StructureMap {
    image: ImageF,
}

impl StructureMap {
    /// Pass-through map (`S = I`), used by the no-structure ablation.
    pub fn identity(img: &ImageF) -> Self {
        Self {
            image: img.map(|v| v.clamp(0.0, 1.0)),
        }
    }

    pub fn image(&self) -> &ImageF {
        &self.image
    }
}

/// Runs `iterations` rounds of joint edge-preserving smoothing over a
/// `(2*ceil(2*spatial_sigma)+1)^2` window, clamped to `[0, 1]`.
pub fn extract_structure(img: &ImageF, params: &StructureParams) -> Result<StructureMap> {
    params.validate()?;
    if params.iterations == 0 {
        return Ok(StructureMap::identity(img));
    }

    let radius = (2.0 * params.spatial_sigma).ceil() as i64;
    let spatial: Vec<f64> = {
        let inv = -0.5 / (params.spatial_sigma * params.spatial_sigma);
        (0..(2 * radius + 1) * (2 * radius + 1))
            .map(|k| {
                let dy = k / (2 * radius + 1) - radius;
                let dx = k % (2 * radius + 1) - radius;
                ((dx * dx + dy * dy) as f64 * inv).exp()
            })
            .collect()
    };
    let range_inv = -0.5 / (params.range_sigma * params.range_sigma);
    let (w, h, c) = (img.width(), img.height(), img.channels());

    let mut current: Vec<f64> = img.data().to_vec();
    for _ in 0..params.iterations {
        // Per-channel bounds of the previous round; weighted averages of
        // those values can only exceed them by rounding.
        let mut lo = vec![f64::INFINITY; c];
        let mut hi = vec![f64::NEG_INFINITY; c];
        for px in current.chunks_exact(c) {
            for ch in 0..c {
                lo[ch] = lo[ch].min(px[ch]);
                hi[ch] = hi[ch].max(px[ch]);
            }
        }

        let prev = current;
        let mut next = vec![0.0f64; prev.len()];
        next.par_chunks_mut(w * c)
            .enumerate()
            .for_each(|(y, row_out)| {
                let y = y as i64;
                let mut num = vec![0.0f64; c];
                for x in 0..w as i64 {
                    let center = &prev[((y as usize) * w + x as usize) * c..][..c];
                    num.iter_mut().for_each(|v| *v = 0.0);
                    let mut den = 0.0f64;
                    for dy in -radius..=radius {
                        let yy = y + dy;
                        if yy < 0 || yy >= h as i64 {
                            continue;
                        }
                        for dx in -radius..=radius {
                            let xx = x + dx;
                            if xx < 0 || xx >= w as i64 {
                                continue;
                            }
                            let nb = &prev[((yy as usize) * w + xx as usize) * c..][..c];
                            let mut d2 = 0.0;
                            for ch in 0..c {
                                let d = nb[ch] - center[ch];
                                d2 += d * d;
                            }
                            d2 /= c as f64;
                            let wgt = spatial
                                [((dy + radius) * (2 * radius + 1) + dx + radius) as usize]
                                * (d2 * range_inv).exp();
                            den += wgt;
                            for ch in 0..c {
                                // Accumulate offsets from the center so a
                                // constant window stays bit-identical.
                                num[ch] += wgt * (nb[ch] - center[ch]);
                            }
                        }
                    }
                    let out = &mut row_out[(x as usize) * c..][..c];
                    for ch in 0..c {
                        out[ch] = (center[ch] + num[ch] / den)
                            .clamp(lo[ch], hi[ch])
                            .clamp(0.0, 1.0);
                    }
                }
            });
        current = next;
    }

    Ok(StructureMap {
        image: ImageF::from_parts_unchecked(w, h, c, current),
    })
}

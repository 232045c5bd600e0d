//! Backscattered-light estimation, automatic or from a user scribble mask.
//!
//! The automatic estimator ranks pixels by their min-over-channels value
//! (a haze-opacity proxy that avoids bright non-haze objects), takes the
//! top quantile, and averages their colors. Ties at the quantile boundary
//! break by raw intensity, then by full color, so the result does not
//! depend on pixel order.

use std::path::Path;

use crate::error::{dim_mismatch, Error, Result};
use crate::image::ImageF;
use crate::scatter::Airlight;

/// Boolean selection mask authored externally (any nonzero pixel of a
/// gray PNG counts as selected).
#[derive(Debug, Clone)]
pub struct ScribbleMask {
    width: usize,
    height: usize,
    selected: Vec<bool>,
}

impl ScribbleMask {
    pub fn new(width: usize, height: usize, selected: Vec<bool>) -> Result<Self> {
        if selected.len() != width * height {
            return Err(dim_mismatch("scribble mask length", width * height, selected.len()));
        }
        Ok(Self {
            width,
            height,
            selected,
        })
    }

    /// Loads a mask from an image file; nonzero pixels are selected.
    pub fn from_file(path: &Path) -> Result<Self> {
        let img = crate::io::read_image(path)?;
        let c = img.channels();
        let selected = img
            .data()
            .chunks_exact(c)
            .map(|px| px.iter().any(|&v| v > 0.0))
            .collect();
        Self::new(img.width(), img.height(), selected)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn selected(&self) -> &[bool] {
        &self.selected
    }

    pub fn count(&self) -> usize {
        self.selected.iter().filter(|&&s| s).count()
    }
}

/// Estimates `B` as the mean color of the brightest-haze pixels.
///
/// Pixels are ranked by min-over-channels value; the top `quantile`
/// fraction (at least one pixel) is averaged. Errors if the image is all
/// black or the mean has a zero component.
pub fn estimate_airlight_auto(img: &ImageF, quantile: f64) -> Result<Airlight> {
    if !(quantile > 0.0 && quantile <= 0.5) {
        return Err(Error::InvalidParam(format!(
            "airlight quantile must lie in (0, 0.5], got {quantile}"
        )));
    }
    let c = img.channels();
    let n = img.pixel_count();
    let count = ((n as f64 * quantile).floor() as usize).max(1);

    let mut order: Vec<usize> = (0..n).collect();
    let key = |i: usize| {
        let px = &img.data()[i * c..(i + 1) * c];
        let min = px.iter().cloned().fold(f64::INFINITY, f64::min);
        let sum: f64 = px.iter().sum();
        (min, sum)
    };
    order.sort_unstable_by(|&a, &b| {
        let (ma, sa) = key(a);
        let (mb, sb) = key(b);
        mb.total_cmp(&ma)
            .then(sb.total_cmp(&sa))
            // Full-color tiebreak keeps the selection permutation-invariant;
            // the final index tiebreak only orders identical colors.
            .then_with(|| {
                let pa = &img.data()[a * c..(a + 1) * c];
                let pb = &img.data()[b * c..(b + 1) * c];
                pb.iter()
                    .zip(pa)
                    .map(|(x, y)| x.total_cmp(y))
                    .find(|o| o.is_ne())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
            .then(a.cmp(&b))
    });

    let mut mean = vec![0.0; c];
    for &i in &order[..count] {
        for (ch, m) in mean.iter_mut().enumerate() {
            *m += img.data()[i * c + ch];
        }
    }
    for m in mean.iter_mut() {
        *m /= count as f64;
    }
    if mean.iter().any(|&m| m <= 0.0) {
        return Err(Error::Airlight(
            "selected pixels have a zero mean component (all-black region)".into(),
        ));
    }
    Airlight::new(mean.iter().map(|m| m.min(1.0)).collect())
}

/// Estimates `B` as the mean color over the scribble-selected pixels.
pub fn estimate_airlight_scribble(img: &ImageF, mask: &ScribbleMask) -> Result<Airlight> {
    if mask.width != img.width() || mask.height != img.height() {
        return Err(dim_mismatch(
            "scribble mask shape",
            format!("{}x{}", img.width(), img.height()),
            format!("{}x{}", mask.width, mask.height),
        ));
    }
    let c = img.channels();
    let mut mean = vec![0.0; c];
    let mut count = 0usize;
    for (i, px) in img.data().chunks_exact(c).enumerate() {
        if mask.selected[i] {
            for (ch, m) in mean.iter_mut().enumerate() {
                *m += px[ch];
            }
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::Airlight("scribble mask selects no pixels".into()));
    }
    for m in mean.iter_mut() {
        *m /= count as f64;
    }
    if mean.iter().any(|&m| m <= 0.0) {
        return Err(Error::Airlight(
            "scribble region has a zero mean component".into(),
        ));
    }
    Airlight::new(mean.iter().map(|m| m.min(1.0)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::SeedableRng;

    #[test]
    fn constant_image_returns_its_color() {
        let mut data = Vec::new();
        for _ in 0..100 {
            data.extend_from_slice(&[0.8, 0.9, 1.0]);
        }
        let img = ImageF::from_vec(10, 10, 3, data).unwrap();
        let b = estimate_airlight_auto(&img, 0.001).unwrap();
        assert_eq!(b.components(), &[0.8, 0.9, 1.0]);
    }

    #[test]
    fn top_one_pixel_selection() {
        // 999 pixels at 0.2 plus a single 0.9 pixel; quantile 0.001 picks
        // exactly the bright one.
        let mut data = vec![0.2; 1000 * 3];
        for c in 0..3 {
            data[123 * 3 + c] = 0.9;
        }
        let img = ImageF::from_vec(40, 25, 3, data).unwrap();
        let b = estimate_airlight_auto(&img, 0.001).unwrap();
        for &v in b.components() {
            assert!((v - 0.9).abs() < 1e-12);
        }
    }

    #[test]
    fn tiny_image_falls_back_to_best_pixel() {
        let img = ImageF::from_vec(2, 1, 3, vec![0.1, 0.1, 0.1, 0.6, 0.7, 0.8]).unwrap();
        let b = estimate_airlight_auto(&img, 0.001).unwrap();
        assert_eq!(b.components(), &[0.6, 0.7, 0.8]);
    }

    #[test]
    fn all_black_image_is_an_error() {
        let img = ImageF::filled(4, 4, 3, 0.0).unwrap();
        assert!(estimate_airlight_auto(&img, 0.01).is_err());
    }

    proptest! {
        #[test]
        fn auto_estimate_is_permutation_invariant(seed in 0u64..200) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let n = 64;
            let mut pixels: Vec<[f64; 3]> = (0..n)
                .map(|i| {
                    let v = (i % 17) as f64 / 16.0;
                    [v, (v + 0.1).min(1.0), (v * 0.5) + 0.25]
                })
                .collect();
            let img_of = |pxs: &[[f64; 3]]| {
                let data: Vec<f64> = pxs.iter().flatten().cloned().collect();
                ImageF::from_vec(8, 8, 3, data).unwrap()
            };
            let b1 = estimate_airlight_auto(&img_of(&pixels), 0.1).unwrap();
            pixels.shuffle(&mut rng);
            let b2 = estimate_airlight_auto(&img_of(&pixels), 0.1).unwrap();
            for (x, y) in b1.components().iter().zip(b2.components()) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }

        #[test]
        fn auto_estimate_scales_with_brightness(s in 0.2f64..=1.0) {
            let data: Vec<f64> = (0..48)
                .map(|i| 0.3 + 0.5 * ((i % 12) as f64 / 11.0))
                .collect();
            let img = ImageF::from_vec(4, 4, 3, data).unwrap();
            let b1 = estimate_airlight_auto(&img, 0.25).unwrap();
            let b2 = estimate_airlight_auto(&img.map(|v| s * v), 0.25).unwrap();
            for (x, y) in b1.components().iter().zip(b2.components()) {
                prop_assert!((s * x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn scribble_mean_examples() {
        let img = ImageF::from_vec(2, 1, 3, vec![0.2, 0.2, 0.2, 0.8, 0.8, 0.8]).unwrap();
        let mask = ScribbleMask::new(2, 1, vec![true, true]).unwrap();
        let b = estimate_airlight_scribble(&img, &mask).unwrap();
        for &v in b.components() {
            assert!((v - 0.5).abs() < 1e-12);
        }

        // Only the selected pixel contributes.
        let one = ScribbleMask::new(2, 1, vec![false, true]).unwrap();
        let b = estimate_airlight_scribble(&img, &one).unwrap();
        for &v in b.components() {
            assert!((v - 0.8).abs() < 1e-12);
        }
    }

    #[test]
    fn scribble_errors() {
        let img = ImageF::filled(2, 2, 3, 0.5).unwrap();
        let empty = ScribbleMask::new(2, 2, vec![false; 4]).unwrap();
        assert!(estimate_airlight_scribble(&img, &empty).is_err());
        let wrong = ScribbleMask::new(3, 2, vec![true; 6]).unwrap();
        assert!(estimate_airlight_scribble(&img, &wrong).is_err());
        let black = ImageF::filled(2, 2, 3, 0.0).unwrap();
        let full = ScribbleMask::new(2, 2, vec![true; 4]).unwrap();
        assert!(estimate_airlight_scribble(&black, &full).is_err());
    }
}

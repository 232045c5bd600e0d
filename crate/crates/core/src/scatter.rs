//! The physical scattering model: forward synthesis, direct inversion, the
//! per-pixel transmission lower bound, and the error/noise predictors that
//! motivate the regularized solvers.
//!
//! The observation model is `I(x) = t(x)·L(x) + (1 - t(x))·B` with
//! transmission `t = e^D`, `D = ln t ≤ 0`. Non-negativity of scene
//! radiance gives `t(x) ≥ 1 - min_c I^c(x)/B^c`, which in the log domain
//! becomes the lower-bound map `v(x)`.

use crate::error::{dim_mismatch, Error, Result};
use crate::image::{Field, ImageF};

/// Magnitudes `|B - I|` and `|B - L|` are floored here before logarithms.
pub const LOG_MAGNITUDE_FLOOR: f64 = 1e-6;

/// Backscattered light color vector `B`: one strictly positive component
/// per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct Airlight {
    components: Vec<f64>,
}

impl Airlight {
    pub fn new(components: Vec<f64>) -> Result<Self> {
        if components.len() != 1 && components.len() != 3 {
            return Err(Error::InvalidParam(format!(
                "airlight must have 1 or 3 components, got {}",
                components.len()
            )));
        }
        if !components.iter().all(|b| b.is_finite() && *b > 0.0 && *b <= 1.0) {
            return Err(Error::Airlight(format!(
                "components must lie in (0, 1], got {components:?}"
            )));
        }
        Ok(Self { components })
    }

    pub fn rgb(r: f64, g: f64, b: f64) -> Result<Self> {
        Self::new(vec![r, g, b])
    }

    pub fn gray(v: f64) -> Result<Self> {
        Self::new(vec![v])
    }

    pub fn components(&self) -> &[f64] {
        &self.components
    }

    pub fn channels(&self) -> usize {
        self.components.len()
    }

    /// Scalar airlight for intensity-only processing: the channel mean.
    pub fn to_intensity(&self) -> Result<Airlight> {
        let m = self.components.iter().sum::<f64>() / self.components.len() as f64;
        Airlight::gray(m)
    }

    fn ensure_matches(&self, img: &ImageF, context: &'static str) -> Result<()> {
        if self.channels() != img.channels() {
            return Err(dim_mismatch(context, self.channels(), img.channels()));
        }
        Ok(())
    }
}

/// Per-pixel log-domain lower bound on `D`, each value in `[ln eps, 0]`.
#[derive(Debug, Clone)]
pub struct LowerBoundMap {
    field: Field,
    eps: f64,
}

impl LowerBoundMap {
    pub fn field(&self) -> &Field {
        &self.field
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.field.get(x, y)
    }
}

/// Per-pixel logarithmic transmission `D = ln t ≤ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthLogMap {
    field: Field,
}

impl DepthLogMap {
    /// Wraps a field of log-transmission values; all must be `≤ 0`.
    pub fn new(field: Field) -> Result<Self> {
        if field.data().iter().any(|&d| d > 0.0) {
            return Err(Error::InvalidParam(
                "log transmission must be non-positive".into(),
            ));
        }
        Ok(Self { field })
    }

    pub fn field(&self) -> &Field {
        &self.field
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.field.get(x, y)
    }

    pub fn width(&self) -> usize {
        self.field.width()
    }

    pub fn height(&self) -> usize {
        self.field.height()
    }

    /// Transmission map `t = e^D`.
    pub fn to_transmission(&self) -> Field {
        self.field.map(f64::exp)
    }
}

/// Forward model: `I = t·L + (1 - t)·B` per channel.
pub fn synthesize(latent: &ImageF, t: &Field, airlight: &Airlight) -> Result<ImageF> {
    airlight.ensure_matches(latent, "synthesize airlight channels")?;
    if !t.same_shape_as_image(latent) {
        return Err(dim_mismatch(
            "synthesize transmission shape",
            format!("{}x{}", latent.width(), latent.height()),
            format!("{}x{}", t.width(), t.height()),
        ));
    }
    if t.data().iter().any(|&v| !(v > 0.0 && v <= 1.0)) {
        return Err(Error::InvalidParam(
            "transmission values must lie in (0, 1]".into(),
        ));
    }
    let c = latent.channels();
    let b = airlight.components();
    let mut data = Vec::with_capacity(latent.data().len());
    for (i, px) in latent.data().chunks_exact(c).enumerate() {
        let tv = t.data()[i];
        for ch in 0..c {
            data.push(tv * px[ch] + (1.0 - tv) * b[ch]);
        }
    }
    Ok(ImageF::from_parts_unchecked(
        latent.width(),
        latent.height(),
        c,
        data,
    ))
}

/// Direct inversion: `L0 = B - (B - I)/max(t, t_floor)`, clamped to `[0, 1]`.
pub fn invert(observed: &ImageF, t: &Field, airlight: &Airlight, t_floor: f64) -> Result<ImageF> {
    airlight.ensure_matches(observed, "invert airlight channels")?;
    if !t.same_shape_as_image(observed) {
        return Err(dim_mismatch(
            "invert transmission shape",
            format!("{}x{}", observed.width(), observed.height()),
            format!("{}x{}", t.width(), t.height()),
        ));
    }
    if !(t_floor > 0.0) {
        return Err(Error::InvalidParam(format!(
            "t_floor must be positive, got {t_floor}"
        )));
    }
    let c = observed.channels();
    let b = airlight.components();
    let mut data = Vec::with_capacity(observed.data().len());
    for (i, px) in observed.data().chunks_exact(c).enumerate() {
        let tv = t.data()[i].max(t_floor);
        for ch in 0..c {
            data.push((b[ch] - (b[ch] - px[ch]) / tv).clamp(0.0, 1.0));
        }
    }
    Ok(ImageF::from_parts_unchecked(
        observed.width(),
        observed.height(),
        c,
        data,
    ))
}

/// Computes `v(x) = ln(max(1 - min_c I^c(x)/B^c, eps))` for every pixel.
pub fn transmission_lower_bound(
    observed: &ImageF,
    airlight: &Airlight,
    eps: f64,
) -> Result<LowerBoundMap> {
    airlight.ensure_matches(observed, "lower bound airlight channels")?;
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidParam(format!(
            "eps must lie in (0, 1), got {eps}"
        )));
    }
    let c = observed.channels();
    let b = airlight.components();
    let mut data = Vec::with_capacity(observed.pixel_count());
    for px in observed.data().chunks_exact(c) {
        let mut min_ratio = f64::INFINITY;
        for ch in 0..c {
            min_ratio = min_ratio.min(px[ch] / b[ch]);
        }
        data.push((1.0 - min_ratio).max(eps).ln());
    }
    let field = Field::new(observed.width(), observed.height(), data)?;
    Ok(LowerBoundMap { field, eps })
}

/// Predicted latent-image error caused by a transmission error `dt`:
/// `|((B - I)/t) · (dt/(t + dt))|`.
pub fn predict_transmission_error(b: f64, i: f64, t: f64, dt: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::InvalidParam(format!("t must be positive, got {t}")));
    }
    if t + dt == 0.0 {
        return Err(Error::InvalidParam("t + dt must be nonzero".into()));
    }
    Ok(((b - i) / t * (dt / (t + dt))).abs())
}

/// Predicted noise magnitude after inversion: `|n/t|`.
pub fn predict_noise_gain(n: f64, t: f64) -> Result<f64> {
    if t == 0.0 {
        return Err(Error::InvalidParam("t must be nonzero".into()));
    }
    Ok((n / t).abs())
}

/// Log-domain observation pair for the transmission data term:
/// `i_bar = ln|B - I|` and `l_bar = ln|B - L|` per channel, magnitudes
/// floored at [`LOG_MAGNITUDE_FLOOR`].
#[derive(Debug, Clone)]
pub struct LogObservation {
    width: usize,
    height: usize,
    channels: usize,
    i_bar: Vec<f64>,
    l_bar: Vec<f64>,
}

impl LogObservation {
    pub fn new(observed: &ImageF, latent: &ImageF, airlight: &Airlight) -> Result<Self> {
        observed.ensure_same_shape(latent, "log observation shapes")?;
        airlight.ensure_matches(observed, "log observation airlight channels")?;
        let b = airlight.components();
        let c = observed.channels();
        let log_abs = |img: &ImageF| -> Vec<f64> {
            img.data()
                .chunks_exact(c)
                .flat_map(|px| {
                    (0..c).map(move |ch| (b[ch] - px[ch]).abs().max(LOG_MAGNITUDE_FLOOR).ln())
                })
                .collect()
        };
        Ok(Self {
            width: observed.width(),
            height: observed.height(),
            channels: c,
            i_bar: log_abs(observed),
            l_bar: log_abs(latent),
        })
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

    /// Per-channel data targets `a^c(x) = i_bar^c(x) - l_bar^c(x)` written
    /// into `out`.
    #[inline]
    pub fn data_targets(&self, x: usize, y: usize, out: &mut [f64]) {
        let base = (y * self.width + x) * self.channels;
        for ch in 0..self.channels {
            out[ch] = self.i_bar[base + ch] - self.l_bar[base + ch];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};
    use rand_distr::{Distribution, Normal};

    #[test]
    fn synthesize_identity_and_opaque_limits() {
        let latent = ImageF::filled(4, 4, 3, 0.4).unwrap();
        let b = Airlight::rgb(1.0, 0.9, 0.8).unwrap();

        let clear = synthesize(&latent, &Field::filled(4, 4, 1.0), &b).unwrap();
        assert_eq!(clear, latent);

        let opaque = synthesize(&latent, &Field::filled(4, 4, 1e-9), &b).unwrap();
        for px in opaque.data().chunks_exact(3) {
            assert!((px[0] - 1.0).abs() < 1e-8);
            assert!((px[1] - 0.9).abs() < 1e-8);
            assert!((px[2] - 0.8).abs() < 1e-8);
        }
    }

    #[test]
    fn synthesize_direct_formula() {
        let latent = ImageF::filled(1, 1, 1, 0.4).unwrap();
        let b = Airlight::gray(1.0).unwrap();
        let out = synthesize(&latent, &Field::filled(1, 1, 0.5), &b).unwrap();
        assert!((out.get(0, 0, 0) - 0.7).abs() < 1e-12);
    }

    #[test]
    fn invert_direct_formula_and_identity() {
        let obs = ImageF::filled(1, 1, 1, 0.7).unwrap();
        let b = Airlight::gray(1.0).unwrap();
        let out = invert(&obs, &Field::filled(1, 1, 0.5), &b, 0.01).unwrap();
        assert!((out.get(0, 0, 0) - 0.4).abs() < 1e-12);

        let same = invert(&obs, &Field::filled(1, 1, 1.0), &b, 0.01).unwrap();
        assert!((same.get(0, 0, 0) - 0.7).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn synthesize_invert_round_trip(
            l in 0.0f64..=1.0,
            t in 0.01f64..=1.0,
            b in 0.2f64..=1.0,
        ) {
            let latent = ImageF::filled(3, 2, 1, l).unwrap();
            let air = Airlight::gray(b).unwrap();
            let tf = Field::filled(3, 2, t);
            let obs = synthesize(&latent, &tf, &air).unwrap();
            let back = invert(&obs, &tf, &air, 0.01).unwrap();
            for (a, o) in latent.data().iter().zip(back.data()) {
                // The invert clamp can only help here since l is in [0,1].
                prop_assert!((a - o).abs() <= 1e-6);
            }
        }

        #[test]
        fn lower_bound_is_valid_and_monotone(
            l in 0.0f64..=0.8,
            t in 0.05f64..=1.0,
            b in 0.85f64..=1.0,
        ) {
            let latent = ImageF::filled(2, 2, 3, l).unwrap();
            let air = Airlight::rgb(b, b, b).unwrap();
            let obs = synthesize(&latent, &Field::filled(2, 2, t), &air).unwrap();
            let v = transmission_lower_bound(&obs, &air, 0.01).unwrap();
            // e^v never exceeds the true transmission when L <= B.
            prop_assert!(v.get(0, 0).exp() <= t + 1e-12);
            prop_assert!(v.get(0, 0) <= 0.0 && v.get(0, 0) >= 0.01f64.ln() - 1e-12);
        }
    }

    #[test]
    fn lower_bound_examples() {
        let b = Airlight::rgb(1.0, 1.0, 1.0).unwrap();
        let img = ImageF::from_vec(1, 1, 3, vec![0.5, 0.6, 0.7]).unwrap();
        let v = transmission_lower_bound(&img, &b, 0.01).unwrap();
        assert!((v.get(0, 0) - 0.5f64.ln()).abs() < 1e-12);

        // min ratio >= 1 hits the eps clamp.
        let bright = ImageF::from_vec(1, 1, 3, vec![1.0, 1.0, 1.0]).unwrap();
        let b9 = Airlight::rgb(0.9, 0.9, 0.9).unwrap();
        let v = transmission_lower_bound(&bright, &b9, 0.01).unwrap();
        assert!((v.get(0, 0) - 0.01f64.ln()).abs() < 1e-12);

        let img = ImageF::from_vec(1, 1, 3, vec![0.8, 0.9, 0.95]).unwrap();
        let v = transmission_lower_bound(&img, &b9, 0.01).unwrap();
        assert!((v.get(0, 0) - (1.0f64 / 9.0).ln()).abs() < 1e-9);
    }

    #[test]
    fn lower_bound_monotone_in_intensity() {
        let b = Airlight::rgb(1.0, 1.0, 1.0).unwrap();
        let mut prev = f64::INFINITY;
        for k in 0..20 {
            let i = k as f64 / 19.0;
            let img = ImageF::from_vec(1, 1, 3, vec![i, i, i]).unwrap();
            let v = transmission_lower_bound(&img, &b, 0.01).unwrap();
            let e = v.get(0, 0).exp();
            assert!(e <= prev + 1e-12, "e^v must be non-increasing in I");
            prev = e;
        }
    }

    #[test]
    fn predictors_match_formulas() {
        assert_eq!(predict_transmission_error(1.0, 0.5, 0.5, 0.0).unwrap(), 0.0);
        let e = predict_transmission_error(1.0, 0.5, 0.5, 0.05).unwrap();
        assert!((e - (0.5 / 0.5) * (0.05 / 0.55)).abs() < 1e-12);
        assert!((e - 0.0909).abs() < 1e-4);

        // Sub-linear growth in dt.
        let e1 = predict_transmission_error(1.0, 0.5, 0.5, 0.1).unwrap();
        let e2 = predict_transmission_error(1.0, 0.5, 0.5, 0.2).unwrap();
        assert!(e2 < 2.0 * e1);

        assert_eq!(predict_noise_gain(0.0, 0.4).unwrap(), 0.0);
        assert!((predict_noise_gain(0.05, 0.1).unwrap() - 0.5).abs() < 1e-12);
        assert!(predict_noise_gain(0.05, 0.0).is_err());
        assert!(predict_transmission_error(1.0, 0.5, 0.5, -0.5).is_err());
    }

    #[test]
    fn noise_gain_matches_monte_carlo() {
        // invert() is affine in I away from the clamp, so the empirical
        // std of invert(I+n) - invert(I) must equal sigma/t.
        let mut rng = StdRng::seed_from_u64(7);
        let sigma = 0.001;
        let normal = Normal::new(0.0, sigma).unwrap();
        for t in [0.1, 0.4, 1.0] {
            let air = Airlight::gray(1.0).unwrap();
            let tf = Field::filled(1, 1, t);
            let base = synthesize(&ImageF::filled(1, 1, 1, 0.5).unwrap(), &tf, &air).unwrap();
            let l_base = invert(&base, &tf, &air, 0.01).unwrap().get(0, 0, 0);
            let n_samples = 100_000;
            let mut acc = 0.0;
            for _ in 0..n_samples {
                let n: f64 = normal.sample(&mut rng);
                let noisy = ImageF::filled(1, 1, 1, (base.get(0, 0, 0) + n).clamp(0.0, 1.0)).unwrap();
                let l = invert(&noisy, &tf, &air, 0.01).unwrap().get(0, 0, 0);
                acc += (l - l_base) * (l - l_base);
            }
            let std = (acc / n_samples as f64).sqrt();
            let predicted = predict_noise_gain(sigma, t).unwrap();
            assert!(
                (std - predicted).abs() / predicted < 0.05,
                "t={t}: std {std} vs predicted {predicted}"
            );
        }
        let _ = rng.random::<f64>();
    }

    #[test]
    fn log_observation_targets_are_nonpositive_for_valid_pairs() {
        let mut rng = StdRng::seed_from_u64(11);
        let b = Airlight::rgb(1.0, 0.95, 0.9).unwrap();
        let latent_data: Vec<f64> = (0..6 * 6 * 3).map(|_| rng.random_range(0.0..0.85)).collect();
        let latent = ImageF::from_vec(6, 6, 3, latent_data).unwrap();
        let obs = synthesize(&latent, &Field::filled(6, 6, 0.5), &b).unwrap();
        let lo = LogObservation::new(&obs, &latent, &b).unwrap();
        let mut targets = [0.0; 3];
        for y in 0..6 {
            for x in 0..6 {
                lo.data_targets(x, y, &mut targets);
                for a in targets {
                    assert!(a <= 1e-9, "log ratio of values in (0,1] is non-positive");
                    assert!(a.is_finite());
                }
            }
        }
    }

    #[test]
    fn airlight_validation() {
        assert!(Airlight::rgb(0.0, 0.5, 0.5).is_err());
        assert!(Airlight::new(vec![0.5, 0.5]).is_err());
        assert!(Airlight::rgb(0.5, 0.5, 1.1).is_err());
        assert!(Airlight::gray(1.0).is_ok());
    }

    #[test]
    fn depth_log_map_rejects_positive_values() {
        assert!(DepthLogMap::new(Field::filled(2, 2, 0.1)).is_err());
        let d = DepthLogMap::new(Field::filled(2, 2, -0.5)).unwrap();
        let t = d.to_transmission();
        assert!((t.get(0, 0) - (-0.5f64).exp()).abs() < 1e-15);
    }
}

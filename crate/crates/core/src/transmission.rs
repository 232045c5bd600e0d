//! Stage one: log-transmission estimation by weighted-median relaxation.
//!
//! The per-pixel energy couples a strictly convex quadratic data term
//! (per-channel log targets) with a non-local L1 penalty toward window
//! neighbors, weighted by structure similarity. Each Jacobi pass solves
//! every pixel's subproblem exactly: the minimizer of
//!
//! `sum_c (D - a^c)^2 + lambda * sum_h w_h |D - D_h|`
//!
//! is the median of the neighbor values augmented with the candidates
//! `r_h = mean(a) + lambda/(2C) * (sum_{j>=h} w_j - sum_{j<h} w_j)`.
//!
//! The selective-neighbor rule drops neighbors whose current estimate sits
//! below the center pixel's lower bound, so regularization never drags a
//! pixel under its bound; a final clamp to `[v(x), 0]` makes the invariant
//! unconditional.

use rayon::prelude::*;

use crate::error::{dim_mismatch, Error, Result};
use crate::image::{Field, ImageF};
use crate::scatter::{
    invert, transmission_lower_bound, Airlight, DepthLogMap, LogObservation, LowerBoundMap,
};
use crate::structure::StructureMap;

/// Knobs of the transmission solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransmissionParams {
    /// Regularization weight. Default: 15
    pub lambda: f64,
    /// Window radius in pixels (5 means an 11x11 window). Default: 5
    pub window_radius: usize,
    /// Structure-difference scale of the guided weight. Default: 0.03
    pub sigma_s: f64,
    /// Lower-bound floor, keeps `ln` away from zero. Default: 0.01
    pub eps: f64,
    /// Number of Jacobi passes. Default: 3
    pub iterations: usize,
}

impl Default for TransmissionParams {
    fn default() -> Self {
        Self {
            lambda: 15.0,
            window_radius: 5,
            sigma_s: 0.03,
            eps: 0.01,
            iterations: 3,
        }
    }
}

impl TransmissionParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) {
            return Err(Error::InvalidParam(format!(
                "lambda must be non-negative, got {}",
                self.lambda
            )));
        }
        if self.window_radius < 1 {
            return Err(Error::InvalidParam("window radius must be >= 1".into()));
        }
        if !(self.sigma_s > 0.0) {
            return Err(Error::InvalidParam(format!(
                "sigma_s must be positive, got {}",
                self.sigma_s
            )));
        }
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(Error::InvalidParam(format!(
                "eps must lie in (0, 1), got {}",
                self.eps
            )));
        }
        if self.iterations < 1 {
            return Err(Error::InvalidParam("iterations must be >= 1".into()));
        }
        Ok(())
    }
}

/// Window neighbors of one pixel: values ascending, weights matched and
/// non-negative.
#[derive(Debug, Clone)]
pub struct NeighborSet {
    values: Vec<f64>,
    weights: Vec<f64>,
}

impl NeighborSet {
    /// Sorts `(value, weight)` pairs ascending by value.
    pub fn from_pairs(mut pairs: Vec<(f64, f64)>) -> Result<Self> {
        if pairs
            .iter()
            .any(|(v, w)| !v.is_finite() || !w.is_finite() || *w < 0.0)
        {
            return Err(Error::InvalidParam(
                "neighbor values must be finite with non-negative weights".into(),
            ));
        }
        pairs.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
        Ok(Self {
            values: pairs.iter().map(|p| p.0).collect(),
            weights: pairs.iter().map(|p| p.1).collect(),
        })
    }

    pub fn empty() -> Self {
        Self {
            values: Vec::new(),
            weights: Vec::new(),
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Minimizer of `q*(x - mu)^2 * <unit data>` ... concretely: both solver
/// stages reduce to `min_x q (x - mu)^2 + lambda * sum_h w_h |x - v_h|`
/// up to a constant, whose exact minimizer is the median of the values
/// augmented with `mu + spread * (sum_{j>=h} w_j - sum_{j<h} w_j)` where
/// `spread = lambda / (2q)`. `scratch` is reused across calls.
pub(crate) fn augmented_median(
    mu: f64,
    spread: f64,
    values: &[f64],
    weights: &[f64],
    scratch: &mut Vec<f64>,
) -> f64 {
    let w = values.len();
    debug_assert_eq!(w, weights.len());
    if w == 0 {
        return mu;
    }
    scratch.clear();
    scratch.extend_from_slice(values);
    let total: f64 = weights.iter().sum();
    let mut prefix = 0.0;
    for h in 0..=w {
        scratch.push(mu + spread * (total - 2.0 * prefix));
        if h < w {
            prefix += weights[h];
        }
    }
    // 2W+1 candidates: the median is the element at index W.
    let (_, median, _) = scratch.select_nth_unstable_by(w, f64::total_cmp);
    *median
}

/// Exact minimizer of the per-pixel transmission subproblem
/// `sum_c (D - a^c)^2 + lambda * sum_h w_h |D - D_h|`.
///
/// An empty neighbor set degenerates to the mean data target.
pub fn solve_pixel_d(data_targets: &[f64], neighbors: &NeighborSet, lambda: f64) -> f64 {
    debug_assert!(!data_targets.is_empty());
    let c = data_targets.len() as f64;
    let mu = data_targets.iter().sum::<f64>() / c;
    let mut scratch = Vec::with_capacity(2 * neighbors.len() + 1);
    augmented_median(
        mu,
        lambda / (2.0 * c),
        neighbors.values(),
        neighbors.weights(),
        &mut scratch,
    )
}

/// Guided weights over the window of `(x, y)`: for every in-bounds
/// neighbor (center excluded),
/// `w_d = exp(-msd / (2 sigma_s^2))` with `msd` the mean over channels of
/// squared structure differences. Returns `(nx, ny, weight)` triples.
pub fn guided_weights(
    structure: &StructureMap,
    x: usize,
    y: usize,
    window_radius: usize,
    sigma_s: f64,
) -> Vec<(usize, usize, f64)> {
    let mut out = Vec::new();
    collect_guided_weights(structure, x, y, window_radius, sigma_s, &mut out);
    out
}

fn collect_guided_weights(
    structure: &StructureMap,
    x: usize,
    y: usize,
    window_radius: usize,
    sigma_s: f64,
    out: &mut Vec<(usize, usize, f64)>,
) {
    out.clear();
    let img = structure.image();
    let (w, h, c) = (img.width(), img.height(), img.channels());
    let inv = -0.5 / (sigma_s * sigma_s);
    let center = img.pixel(x, y);
    let x0 = x.saturating_sub(window_radius);
    let x1 = (x + window_radius).min(w - 1);
    let y0 = y.saturating_sub(window_radius);
    let y1 = (y + window_radius).min(h - 1);
    for yy in y0..=y1 {
        for xx in x0..=x1 {
            if xx == x && yy == y {
                continue;
            }
            let nb = img.pixel(xx, yy);
            let mut msd = 0.0;
            for ch in 0..c {
                let d = nb[ch] - center[ch];
                msd += d * d;
            }
            msd /= c as f64;
            out.push((xx, yy, (msd * inv).exp()));
        }
    }
}

/// Selective-neighbor rule: zeroes the weight of every neighbor whose
/// current estimate `D_prev(y)` lies strictly below the center's lower
/// bound `v(x)`; the boundary `D_prev(y) = v(x)` is retained.
pub fn selective_weights(
    weights: &mut [(usize, usize, f64)],
    d_prev: &DepthLogMap,
    v_at_center: f64,
) {
    for (nx, ny, w) in weights.iter_mut() {
        if d_prev.get(*nx, *ny) < v_at_center {
            *w = 0.0;
        }
    }
}

/// Builds the exact subproblem `iterate_d` solves at one pixel: the
/// per-channel data targets and the surviving neighbor set (guided
/// weights, selective rule applied, zero-weight entries dropped, values
/// taken from `d_prev`).
pub fn pixel_subproblem(
    x: usize,
    y: usize,
    d_prev: &DepthLogMap,
    obs: &LogObservation,
    structure: &StructureMap,
    bound: &LowerBoundMap,
    params: &TransmissionParams,
) -> (Vec<f64>, NeighborSet) {
    let mut targets = vec![0.0; obs.channels()];
    obs.data_targets(x, y, &mut targets);
    let mut weights = guided_weights(structure, x, y, params.window_radius, params.sigma_s);
    selective_weights(&mut weights, d_prev, bound.get(x, y));
    let pairs: Vec<(f64, f64)> = weights
        .iter()
        .filter(|(_, _, w)| *w > 0.0)
        .map(|&(nx, ny, w)| (d_prev.get(nx, ny), w))
        .collect();
    (targets, NeighborSet::from_pairs(pairs).expect("finite by construction"))
}

/// One Jacobi pass: every pixel reads only `d_prev`, solves its
/// subproblem, and clamps the result to `[v(x), 0]`.
pub fn iterate_d(
    d_prev: &DepthLogMap,
    obs: &LogObservation,
    structure: &StructureMap,
    bound: &LowerBoundMap,
    params: &TransmissionParams,
) -> Result<DepthLogMap> {
    let (w, h) = (obs.width(), obs.height());
    if d_prev.width() != w || d_prev.height() != h {
        return Err(dim_mismatch(
            "iterate_d map shape",
            format!("{w}x{h}"),
            format!("{}x{}", d_prev.width(), d_prev.height()),
        ));
    }
    if structure.image().width() != w
        || structure.image().height() != h
        || bound.field().width() != w
        || bound.field().height() != h
    {
        return Err(dim_mismatch("iterate_d auxiliary shape", format!("{w}x{h}"), "other"));
    }
    let c = obs.channels();
    let window_cap = (2 * params.window_radius + 1).pow(2) - 1;

    let mut next = vec![0.0f64; w * h];
    next.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        let mut targets = vec![0.0f64; c];
        let mut wbuf: Vec<(usize, usize, f64)> = Vec::with_capacity(window_cap);
        let mut pairs: Vec<(f64, f64)> = Vec::with_capacity(window_cap);
        let mut values: Vec<f64> = Vec::with_capacity(window_cap);
        let mut weights: Vec<f64> = Vec::with_capacity(window_cap);
        let mut scratch: Vec<f64> = Vec::with_capacity(2 * window_cap + 1);
        for (x, out) in row.iter_mut().enumerate() {
            obs.data_targets(x, y, &mut targets);
            collect_guided_weights(structure, x, y, params.window_radius, params.sigma_s, &mut wbuf);
            let v_x = bound.get(x, y);
            selective_weights(&mut wbuf, d_prev, v_x);

            pairs.clear();
            pairs.extend(
                wbuf.iter()
                    .filter(|(_, _, wgt)| *wgt > 0.0)
                    .map(|&(nx, ny, wgt)| (d_prev.get(nx, ny), wgt)),
            );
            pairs.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
            values.clear();
            weights.clear();
            for &(v, wgt) in &pairs {
                values.push(v);
                weights.push(wgt);
            }

            let mu = targets.iter().sum::<f64>() / c as f64;
            let d = augmented_median(
                mu,
                params.lambda / (2.0 * c as f64),
                &values,
                &weights,
                &mut scratch,
            );
            *out = d.clamp(v_x, 0.0);
        }
    });

    DepthLogMap::new(Field::new(w, h, next)?)
}

/// Every artifact of a transmission solve, including the per-iteration
/// maps for diagnostics.
#[derive(Debug, Clone)]
pub struct TransmissionTrace {
    pub depth_log: DepthLogMap,
    pub transmission: Field,
    pub lower_bound: LowerBoundMap,
    /// `D` after each Jacobi pass, in order.
    pub iterations: Vec<Field>,
}

/// Full relaxation: computes the lower bound `v`, initializes `D = v`,
/// derives the log observation from the provisional inversion at `t = e^v`
/// (or from a caller-supplied latent estimate), and runs the configured
/// number of passes. Returns the final `D` and `t = e^D`.
pub fn estimate_transmission(
    observed: &ImageF,
    airlight: &Airlight,
    structure: &StructureMap,
    params: &TransmissionParams,
) -> Result<(DepthLogMap, Field)> {
    let trace = estimate_transmission_traced(observed, airlight, structure, params, None)?;
    Ok((trace.depth_log, trace.transmission))
}

/// As [`estimate_transmission`], with per-iteration maps kept and an
/// optional latent estimate for the data term (used by the outer
/// alternation; defaults to the provisional inversion at the bound).
pub fn estimate_transmission_traced(
    observed: &ImageF,
    airlight: &Airlight,
    structure: &StructureMap,
    params: &TransmissionParams,
    latent_estimate: Option<&ImageF>,
) -> Result<TransmissionTrace> {
    params.validate()?;
    let bound = transmission_lower_bound(observed, airlight, params.eps)?;
    let t_bound = bound.field().map(f64::exp);
    let provisional;
    let latent_ref = match latent_estimate {
        Some(l) => {
            observed.ensure_same_shape(l, "transmission latent estimate shape")?;
            l
        }
        None => {
            provisional = invert(observed, &t_bound, airlight, params.eps)?;
            &provisional
        }
    };
    let obs = LogObservation::new(observed, latent_ref, airlight)?;

    let mut d = DepthLogMap::new(bound.field().clone())?;
    let mut iterations = Vec::with_capacity(params.iterations);
    for _ in 0..params.iterations {
        d = iterate_d(&d, &obs, structure, &bound, params)?;
        iterations.push(d.field().clone());
    }
    let transmission = d.to_transmission();
    Ok(TransmissionTrace {
        depth_log: d,
        transmission,
        lower_bound: bound,
        iterations,
    })
}

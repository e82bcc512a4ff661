//! Linear correlation-filter tracker with density-map fusion.
//!
//! The filter is a single-channel ridge regressor solved per frequency
//! (MOSSE style) on mean/std normalized, Hann-windowed grayscale patches.
//! Fusion multiplies the min-shifted response by the density map under the
//! search window and takes the peak of the product.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::mirror_index;
use crate::grid::{DensityMap, GrayImage, Point2, Raster};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackerConfig {
    /// Search window `(width, height)`, both even.
    pub window: (usize, usize),
    pub learning_rate: f64,
    pub regularization: f64,
    /// Width of the Gaussian training target; `None` means a tenth of the
    /// smaller window side.
    pub target_sigma: Option<f64>,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            window: (32, 32),
            learning_rate: 0.02,
            regularization: 1e-2,
            target_sigma: None,
        }
    }
}

impl TrackerConfig {
    pub fn target_sigma(&self) -> f64 {
        self.target_sigma
            .unwrap_or(self.window.0.min(self.window.1) as f64 / 10.0)
    }

    pub fn validate(&self) -> Result<()> {
        let (w, h) = self.window;
        if w < 2 || h < 2 || w % 2 != 0 || h % 2 != 0 {
            return Err(Error::validation(format!(
                "tracker window must be even and >= 2, got {w}x{h}"
            )));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::validation(format!(
                "learning rate {} outside [0, 1]",
                self.learning_rate
            )));
        }
        if !(self.regularization > 0.0 && self.regularization.is_finite()) {
            return Err(Error::validation(format!(
                "regularization must be positive, got {}",
                self.regularization
            )));
        }
        let s = self.target_sigma();
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::validation(format!(
                "target sigma must be positive, got {s}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackState {
    /// Filter spectrum, row-major over the window.
    pub template: Vec<Complex64>,
    pub window: (usize, usize),
    pub position: Point2,
    pub learning_rate: f64,
    pub regularization: f64,
    pub target_sigma: f64,
}

/// Correlation response over the search window.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseMap {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
    /// Frame column and row of response cell `(0, 0)`.
    pub origin: (i64, i64),
}

impl ResponseMap {
    /// Peak cell as `(row, col)`, lowest row-major index on ties.
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = 0;
        for i in 1..self.values.len() {
            if self.values[i] > self.values[best] {
                best = i;
            }
        }
        (best / self.width, best % self.width)
    }

    /// Frame-coordinate center of response cell `(row, col)`.
    pub fn cell_center(&self, row: usize, col: usize) -> Point2 {
        Point2::new(
            (self.origin.0 + col as i64) as f64 + 0.5,
            (self.origin.1 + row as i64) as f64 + 0.5,
        )
    }

    pub fn peak_position(&self) -> Point2 {
        let (r, c) = self.argmax();
        self.cell_center(r, c)
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

struct Fft2 {
    width: usize,
    height: usize,
    row: Arc<dyn Fft<f64>>,
    col: Arc<dyn Fft<f64>>,
}

impl Fft2 {
    fn new(width: usize, height: usize, inverse: bool) -> Self {
        let mut planner = FftPlanner::new();
        let (row, col) = if inverse {
            (
                planner.plan_fft_inverse(width),
                planner.plan_fft_inverse(height),
            )
        } else {
            (
                planner.plan_fft_forward(width),
                planner.plan_fft_forward(height),
            )
        };
        Self {
            width,
            height,
            row,
            col,
        }
    }

    fn run(&self, data: &mut [Complex64]) {
        for r in data.chunks_exact_mut(self.width) {
            self.row.process(r);
        }
        let mut column = vec![Complex64::default(); self.height];
        for c in 0..self.width {
            for (r, v) in column.iter_mut().enumerate() {
                *v = data[r * self.width + c];
            }
            self.col.process(&mut column);
            for (r, v) in column.iter().enumerate() {
                data[r * self.width + c] = *v;
            }
        }
    }
}

fn forward(values: &[f64], width: usize, height: usize) -> Vec<Complex64> {
    let mut data: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    Fft2::new(width, height, false).run(&mut data);
    data
}

fn inverse_real(mut data: Vec<Complex64>, width: usize, height: usize) -> Vec<f64> {
    Fft2::new(width, height, true).run(&mut data);
    let n = (width * height) as f64;
    data.iter().map(|v| v.re / n).collect()
}

fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (std::f64::consts::TAU * (i as f64 + 0.5) / n as f64).cos())
        .collect()
}

/// Frame column and row of the top-left window cell around `center`.
fn window_origin(center: &Point2, window: (usize, usize)) -> (i64, i64) {
    (
        center.x.floor() as i64 - (window.0 / 2) as i64,
        center.y.floor() as i64 - (window.1 / 2) as i64,
    )
}

/// Mirror-padded, normalized and Hann-weighted patch around `center`.
fn features(image: &GrayImage, center: &Point2, window: (usize, usize)) -> (Vec<f64>, (i64, i64)) {
    let (w, h) = window;
    let origin = window_origin(center, window);
    let mut patch = Vec::with_capacity(w * h);
    for r in 0..h {
        let fr = mirror_index(origin.1 + r as i64, image.height());
        for c in 0..w {
            let fc = mirror_index(origin.0 + c as i64, image.width());
            patch.push(image.at(fr, fc));
        }
    }
    let n = patch.len() as f64;
    let mean = patch.iter().sum::<f64>() / n;
    let std = (patch.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
    let (hx, hy) = (hann(w), hann(h));
    for r in 0..h {
        for c in 0..w {
            let v = &mut patch[r * w + c];
            *v = if std > 1e-12 { (*v - mean) / std } else { 0.0 } * hx[c] * hy[r];
        }
    }
    (patch, origin)
}

/// Gaussian training target peaking at window cell `(h/2, w/2)`.
pub fn target_response(window: (usize, usize), sigma: f64) -> Vec<f64> {
    let (w, h) = window;
    let (cx, cy) = ((w / 2) as f64, (h / 2) as f64);
    let mut out = Vec::with_capacity(w * h);
    for r in 0..h {
        for c in 0..w {
            let (dx, dy) = (c as f64 - cx, r as f64 - cy);
            out.push((-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp());
        }
    }
    out
}

/// Per-frequency ridge solution `G conj(F) / (|F|^2 + lambda)`.
fn fit_filter(patch_spec: &[Complex64], target_spec: &[Complex64], lambda: f64) -> Vec<Complex64> {
    patch_spec
        .iter()
        .zip(target_spec)
        .map(|(f, g)| g * f.conj() / (f.norm_sqr() + lambda))
        .collect()
}

fn check_frame(image: &GrayImage, window: (usize, usize)) -> Result<()> {
    // reflect-101 padding can supply at most len - 1 cells on each side
    if window.0 / 2 + 1 > image.width() || window.1 / 2 + 1 > image.height() {
        return Err(Error::validation(format!(
            "{}x{} window does not fit a {}x{} frame",
            window.0,
            window.1,
            image.width(),
            image.height()
        )));
    }
    Ok(())
}

pub fn init_tracker(image: &GrayImage, center: Point2, cfg: &TrackerConfig) -> Result<TrackState> {
    cfg.validate()?;
    check_frame(image, cfg.window)?;
    if !center.in_frame(image.width(), image.height()) {
        return Err(Error::validation(format!(
            "init center ({}, {}) outside the frame",
            center.x, center.y
        )));
    }
    let (w, h) = cfg.window;
    let sigma = cfg.target_sigma();
    let (patch, _) = features(image, &center, cfg.window);
    let f = forward(&patch, w, h);
    let g = forward(&target_response(cfg.window, sigma), w, h);
    Ok(TrackState {
        template: fit_filter(&f, &g, cfg.regularization),
        window: cfg.window,
        position: center,
        learning_rate: cfg.learning_rate,
        regularization: cfg.regularization,
        target_sigma: sigma,
    })
}

/// Filter response over the search window centered at the current position.
pub fn tracker_response(state: &TrackState, image: &GrayImage) -> Result<ResponseMap> {
    check_frame(image, state.window)?;
    let (w, h) = state.window;
    let (patch, origin) = features(image, &state.position, state.window);
    let z = forward(&patch, w, h);
    let prod: Vec<Complex64> = state.template.iter().zip(&z).map(|(a, b)| a * b).collect();
    Ok(ResponseMap {
        width: w,
        height: h,
        values: inverse_real(prod, w, h),
        origin,
    })
}

/// Density under the response window, zero outside the frame and clamped
/// at zero.
pub fn density_crop(density: &DensityMap, resp: &ResponseMap) -> DensityMap {
    let mut values = Vec::with_capacity(resp.width * resp.height);
    for r in 0..resp.height {
        let fr = resp.origin.1 + r as i64;
        for c in 0..resp.width {
            let fc = resp.origin.0 + c as i64;
            let inside = fr >= 0
                && fc >= 0
                && (fr as usize) < density.height()
                && (fc as usize) < density.width();
            values.push(if inside {
                density.at(fr as usize, fc as usize).max(0.0)
            } else {
                0.0
            });
        }
    }
    DensityMap::new(resp.width, resp.height, values).expect("clamped crop is non-negative")
}

/// Min-shifted response times the aligned density crop.
pub fn fuse_response(resp: &ResponseMap, crop: &DensityMap) -> Result<ResponseMap> {
    if crop.width() != resp.width || crop.height() != resp.height {
        return Err(Error::validation(format!(
            "density crop {}x{} does not match response {}x{}",
            crop.width(),
            crop.height(),
            resp.width,
            resp.height
        )));
    }
    let min = resp.values.iter().cloned().fold(f64::INFINITY, f64::min);
    let values = resp
        .values
        .iter()
        .zip(crop.values())
        .map(|(r, d)| (r - min) * d.max(0.0))
        .collect();
    Ok(ResponseMap {
        values,
        ..resp.clone()
    })
}

/// Locates the target in `image` (fusing with `density` when given) and
/// updates the filter at the new position.
pub fn track_step(
    state: &TrackState,
    image: &GrayImage,
    density: Option<&DensityMap>,
) -> Result<(TrackState, Point2)> {
    let raw = tracker_response(state, image)?;
    let peak = match density {
        Some(d) => {
            let fused = fuse_response(&raw, &density_crop(d, &raw))?;
            if fused.values.iter().all(|&v| v == 0.0) {
                raw.peak_position()
            } else {
                fused.peak_position()
            }
        }
        None => raw.peak_position(),
    };
    let position = Point2::new(
        peak.x.clamp(0.5, image.width() as f64 - 0.5),
        peak.y.clamp(0.5, image.height() as f64 - 0.5),
    );
    let mut next = state.clone();
    next.position = position;
    if state.learning_rate > 0.0 {
        let (w, h) = state.window;
        let (patch, _) = features(image, &position, state.window);
        let f = forward(&patch, w, h);
        let g = forward(&target_response(state.window, state.target_sigma), w, h);
        let fresh = fit_filter(&f, &g, state.regularization);
        let lr = state.learning_rate;
        for (t, n) in next.template.iter_mut().zip(fresh) {
            *t = *t * (1.0 - lr) + n * lr;
        }
    }
    Ok((next, position))
}

/// Exponential moving average over a density sequence; `alpha` is the
/// weight of the newest frame, and 1 disables smoothing.
#[derive(Debug, Clone)]
pub struct DensitySmoother {
    alpha: f64,
    state: Option<DensityMap>,
}

impl DensitySmoother {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::validation(format!(
                "smoothing weight {alpha} outside (0, 1]"
            )));
        }
        Ok(Self { alpha, state: None })
    }

    pub fn push(&mut self, frame: &DensityMap) -> Result<DensityMap> {
        let next = match &self.state {
            Some(prev) if prev.same_shape(frame) => {
                let a = self.alpha;
                let vals = prev
                    .values()
                    .iter()
                    .zip(frame.values())
                    .map(|(p, v)| (1.0 - a) * p + a * v.max(0.0))
                    .collect();
                DensityMap::new(frame.width(), frame.height(), vals)?
            }
            Some(_) => return Err(Error::validation("density frames change size")),
            None => frame.clamped(),
        };
        self.state = Some(next.clone());
        Ok(next)
    }
}

/// Tracks from `init` through `images`, one density map per frame when
/// given; returns the position in every frame (the first is `init`).
pub fn run_tracker(
    images: &[GrayImage],
    densities: Option<&[DensityMap]>,
    init: Point2,
    cfg: &TrackerConfig,
) -> Result<Vec<Point2>> {
    if images.is_empty() {
        return Ok(Vec::new());
    }
    if let Some(d) = densities {
        if d.len() != images.len() {
            return Err(Error::validation(format!(
                "{} frames but {} density maps",
                images.len(),
                d.len()
            )));
        }
    }
    let mut state = init_tracker(&images[0], init, cfg)?;
    let mut out = vec![init];
    for (t, img) in images.iter().enumerate().skip(1) {
        let (next, p) = track_step(&state, img, densities.map(|d| &d[t]))?;
        state = next;
        out.push(p);
    }
    Ok(out)
}

//! Small image-filtering helpers shared by the estimator, detectors and
//! tracker.

use crate::grid::{DensityMap, Raster};

/// Reflects an index into `0..len` without repeating the edge sample
/// (`-1 -> 1`, `len -> len - 2`). `len` must be at least 2 unless `i` is
/// already in range.
pub fn mirror_index(i: i64, len: usize) -> usize {
    let n = len as i64;
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let mut m = i.rem_euclid(period);
    if m >= n {
        m = period - m;
    }
    m as usize
}

/// Normalized 1-D Gaussian taps covering `+-ceil(4 sigma)`.
pub fn gaussian_taps(sigma: f64) -> Vec<f64> {
    let radius = (4.0 * sigma).ceil().max(1.0) as i64;
    let taps: Vec<f64> = (-radius..=radius)
        .map(|k| (-(k * k) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / total).collect()
}

/// Separable Gaussian blur with mirrored borders. `sigma <= 0` is identity.
pub fn gaussian_blur(values: &[f64], width: usize, height: usize, sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return values.to_vec();
    }
    let taps = gaussian_taps(sigma);
    let radius = (taps.len() / 2) as i64;
    let mut tmp = vec![0.0; values.len()];
    for row in 0..height {
        let src = &values[row * width..(row + 1) * width];
        for col in 0..width {
            tmp[row * width + col] = taps
                .iter()
                .enumerate()
                .map(|(k, t)| t * src[mirror_index(col as i64 + k as i64 - radius, width)])
                .sum();
        }
    }
    let mut out = vec![0.0; values.len()];
    for row in 0..height {
        for col in 0..width {
            out[row * width + col] = taps
                .iter()
                .enumerate()
                .map(|(k, t)| {
                    t * tmp[mirror_index(row as i64 + k as i64 - radius, height) * width + col]
                })
                .sum();
        }
    }
    out
}

/// Clamps negatives to zero, then blurs. The ROI is carried over.
pub fn smoothed_clamped(map: &DensityMap, sigma: f64) -> DensityMap {
    let clamped = map.clamped();
    if sigma <= 0.0 {
        return clamped;
    }
    let blurred = gaussian_blur(clamped.values(), map.width(), map.height(), sigma);
    let out = DensityMap::new(
        map.width(),
        map.height(),
        blurred.into_iter().map(|v| v.max(0.0)).collect(),
    )
    .expect("blur of a non-negative map is non-negative");
    match map.roi() {
        Some(roi) => out.with_roi(roi.clone()).expect("same shape"),
        None => out,
    }
}

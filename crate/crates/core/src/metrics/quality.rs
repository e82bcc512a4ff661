//! Per-pixel fidelity, compactness, localization and temporal smoothness.
//!
//! Boxes are continuous rectangles; a cell contributes in proportion to the
//! area of it the box (or union of boxes) covers.

use serde::Serialize;

use super::check_same_shape;
use crate::error::{Error, Result};
use crate::grid::{DensityMap, PerspectiveMap, Point2, Raster};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScatterStats {
    pub pearson: f64,
    pub slope: f64,
    pub intercept: f64,
}

/// Correlation and least-squares line of predicted on ground-truth density
/// over the ground truth's ROI.
pub fn scatter_stats(pred: &DensityMap, gt: &DensityMap) -> Result<ScatterStats> {
    check_same_shape(pred, gt)?;
    let roi = gt.roi_or_full();
    let pairs: Vec<(f64, f64)> = gt
        .values()
        .iter()
        .zip(pred.values())
        .zip(roi.mask())
        .filter(|(_, &inside)| inside)
        .map(|((&g, &p), _)| (g, p))
        .collect();
    if pairs.len() < 2 {
        return Err(Error::Degenerate(
            "scatter statistics need at least 2 ROI cells".into(),
        ));
    }
    let n = pairs.len() as f64;
    let mg = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let mp = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sgg, mut spp, mut sgp) = (0.0, 0.0, 0.0);
    for &(g, p) in &pairs {
        sgg += (g - mg) * (g - mg);
        spp += (p - mp) * (p - mp);
        sgp += (g - mg) * (p - mp);
    }
    if pairs.iter().all(|p| p.0 == pairs[0].0) {
        return Err(Error::Degenerate(
            "ground-truth density is constant over the ROI".into(),
        ));
    }
    let slope = sgp / sgg;
    let pearson = if spp > 0.0 {
        sgp / (sgg * spp).sqrt()
    } else {
        0.0
    };
    Ok(ScatterStats {
        pearson,
        slope,
        intercept: mp - slope * mg,
    })
}

/// Axis-aligned box placed on every annotation, optionally scaled by the
/// perspective at the dot.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxSpec {
    pub base_width: f64,
    pub base_height: f64,
    pub perspective: Option<PerspectiveMap>,
    pub reference_scale: f64,
}

impl BoxSpec {
    pub fn new(base_width: f64, base_height: f64) -> Result<Self> {
        if !(base_width > 0.0
            && base_height > 0.0
            && base_width.is_finite()
            && base_height.is_finite())
        {
            return Err(Error::validation(format!(
                "box dimensions must be positive, got {base_width}x{base_height}"
            )));
        }
        Ok(Self {
            base_width,
            base_height,
            perspective: None,
            reference_scale: 1.0,
        })
    }

    /// Square box of the given half-width.
    pub fn square(half_width: f64) -> Result<Self> {
        Self::new(2.0 * half_width, 2.0 * half_width)
    }

    pub fn with_perspective(
        mut self,
        perspective: PerspectiveMap,
        reference_scale: f64,
    ) -> Result<Self> {
        if !(reference_scale > 0.0 && reference_scale.is_finite()) {
            return Err(Error::validation(format!(
                "reference scale must be positive, got {reference_scale}"
            )));
        }
        self.perspective = Some(perspective);
        self.reference_scale = reference_scale;
        Ok(self)
    }

    /// `[x0, x1, y0, y1]` of the box around `p`, before clipping.
    pub fn rect_at(&self, p: &Point2) -> Result<[f64; 4]> {
        let s = match &self.perspective {
            Some(persp) => persp.scale_at(p)? / self.reference_scale,
            None => 1.0,
        };
        let (hw, hh) = (0.5 * self.base_width * s, 0.5 * self.base_height * s);
        Ok([p.x - hw, p.x + hw, p.y - hh, p.y + hh])
    }
}

/// Cells touched by `rect` with the covered part of each, as
/// `(index, [x0, x1, y0, y1])` in absolute coordinates.
fn clip_to_cells(rect: [f64; 4], width: usize, height: usize) -> Vec<(usize, [f64; 4])> {
    let x0 = rect[0].max(0.0);
    let x1 = rect[1].min(width as f64);
    let y0 = rect[2].max(0.0);
    let y1 = rect[3].min(height as f64);
    let mut out = Vec::new();
    if x0 >= x1 || y0 >= y1 {
        return out;
    }
    let (c0, c1) = (x0.floor() as usize, (x1.ceil() as usize).min(width));
    let (r0, r1) = (y0.floor() as usize, (y1.ceil() as usize).min(height));
    for r in r0..r1 {
        for c in c0..c1 {
            let part = [
                x0.max(c as f64),
                x1.min(c as f64 + 1.0),
                y0.max(r as f64),
                y1.min(r as f64 + 1.0),
            ];
            if part[0] < part[1] && part[2] < part[3] {
                out.push((r * width + c, part));
            }
        }
    }
    out
}

fn area(r: &[f64; 4]) -> f64 {
    (r[1] - r[0]) * (r[3] - r[2])
}

/// Area of a union of rectangles, by coordinate compression.
fn union_area(rects: &[[f64; 4]]) -> f64 {
    match rects {
        [] => 0.0,
        [r] => area(r),
        _ => {
            let mut xs: Vec<f64> = rects.iter().flat_map(|r| [r[0], r[1]]).collect();
            let mut ys: Vec<f64> = rects.iter().flat_map(|r| [r[2], r[3]]).collect();
            xs.sort_by(f64::total_cmp);
            xs.dedup();
            ys.sort_by(f64::total_cmp);
            ys.dedup();
            let mut total = 0.0;
            for xw in xs.windows(2) {
                for yw in ys.windows(2) {
                    let (cx, cy) = (0.5 * (xw[0] + xw[1]), 0.5 * (yw[0] + yw[1]));
                    if rects
                        .iter()
                        .any(|r| r[0] <= cx && cx <= r[1] && r[2] <= cy && cy <= r[3])
                    {
                        total += (xw[1] - xw[0]) * (yw[1] - yw[0]);
                    }
                }
            }
            total
        }
    }
}

/// Fraction of each cell covered by the union of all boxes.
fn union_coverage(
    points: &[Point2],
    spec: &BoxSpec,
    width: usize,
    height: usize,
) -> Result<Vec<f64>> {
    let mut parts: Vec<Vec<[f64; 4]>> = vec![Vec::new(); width * height];
    for p in points {
        for (i, part) in clip_to_cells(spec.rect_at(p)?, width, height) {
            parts[i].push(part);
        }
    }
    Ok(parts
        .iter()
        .map(|rects| {
            if rects.iter().any(|r| area(r) >= 1.0) {
                1.0
            } else {
                union_area(rects).min(1.0)
            }
        })
        .collect())
}

/// Fraction of the (clamped) density that falls inside the union of boxes.
pub fn bbdr(map: &DensityMap, points: &[Point2], spec: &BoxSpec) -> Result<f64> {
    let clamped = map.clamped();
    let total = clamped.sum();
    if total <= 0.0 {
        return Err(Error::Degenerate("BBDR of a map with no density".into()));
    }
    let cover = union_coverage(points, spec, map.width(), map.height())?;
    let inside: f64 = clamped
        .values()
        .iter()
        .zip(&cover)
        .map(|(v, f)| v * f)
        .sum();
    Ok((inside / total).clamp(0.0, 1.0))
}

/// Density summed inside each annotation's box.
pub fn box_sums(map: &DensityMap, points: &[Point2], spec: &BoxSpec) -> Result<Vec<f64>> {
    let vals = map.values();
    points
        .iter()
        .map(|p| {
            let rect = spec.rect_at(p)?;
            Ok(clip_to_cells(rect, map.width(), map.height())
                .iter()
                .map(|(i, part)| vals[*i] * area(part))
                .sum())
        })
        .collect()
}

/// Mean over boxes of the absolute difference of box sums.
pub fn bbmae(pred: &DensityMap, gt: &DensityMap, points: &[Point2], spec: &BoxSpec) -> Result<f64> {
    check_same_shape(pred, gt)?;
    if points.is_empty() {
        return Err(Error::validation("BBMAE needs at least one annotation"));
    }
    let a = box_sums(pred, points, spec)?;
    let b = box_sums(gt, points, spec)?;
    Ok(a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum::<f64>() / points.len() as f64)
}

/// Mean absolute per-cell change between consecutive frames, over the first
/// frame's ROI, averaged over frame pairs.
pub fn temporal_mad(seq: &[DensityMap]) -> Result<f64> {
    if seq.len() < 2 {
        return Err(Error::validation(format!(
            "MAD needs at least 2 frames, got {}",
            seq.len()
        )));
    }
    for m in &seq[1..] {
        check_same_shape(&seq[0], m)?;
    }
    let roi = seq[0].roi_or_full();
    let n = roi.count_inside();
    if n == 0 {
        return Err(Error::validation("ROI has no inside cells"));
    }
    let mut total = 0.0;
    for pair in seq.windows(2) {
        let diff: f64 = pair[0]
            .values()
            .iter()
            .zip(pair[1].values())
            .zip(roi.mask())
            .filter(|(_, &inside)| inside)
            .map(|((a, b), _)| (a - b).abs())
            .sum();
        total += diff / n as f64;
    }
    Ok(total / (seq.len() - 1) as f64)
}

//! Ground-truth density synthesis: a sum of isotropic Gaussians, one per dot.
//!
//! Each kernel is evaluated at cell centers and truncated to the square
//! window `|dx|, |dy| <= truncation_radius * sigma` around the dot. With
//! per-dot renormalization the in-frame part of every kernel is rescaled to
//! sum to exactly one, so the map integrates to the dot count.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{DensityMap, DotAnnotations, PerspectiveMap, Point2, RoiMask};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    None,
    #[default]
    PerDotRenormalize,
}

/// How the kernel width is chosen per dot.
#[derive(Debug, Clone, PartialEq)]
pub enum SigmaMode {
    Fixed,
    /// `sigma * perspective(at) / reference_scale`.
    PerspectiveScaled {
        perspective: PerspectiveMap,
        reference_scale: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisConfig {
    pub sigma: f64,
    pub mode: SigmaMode,
    /// Half-width of the kernel window in multiples of sigma.
    pub truncation_radius: f64,
    pub normalization: Normalization,
}

pub const DEFAULT_TRUNCATION: f64 = 4.0;

impl SynthesisConfig {
    pub fn fixed(sigma: f64) -> Self {
        Self {
            sigma,
            mode: SigmaMode::Fixed,
            truncation_radius: DEFAULT_TRUNCATION,
            normalization: Normalization::PerDotRenormalize,
        }
    }

    pub fn perspective_scaled(
        sigma: f64,
        perspective: PerspectiveMap,
        reference_scale: f64,
    ) -> Self {
        Self {
            mode: SigmaMode::PerspectiveScaled {
                perspective,
                reference_scale,
            },
            ..Self::fixed(sigma)
        }
    }

    pub fn with_normalization(mut self, normalization: Normalization) -> Self {
        self.normalization = normalization;
        self
    }

    pub fn with_truncation(mut self, radius: f64) -> Self {
        self.truncation_radius = radius;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(Error::validation(format!(
                "sigma must be > 0, got {}",
                self.sigma
            )));
        }
        if !(self.truncation_radius.is_finite() && self.truncation_radius >= 3.0) {
            return Err(Error::validation(format!(
                "truncation radius must be >= 3 sigma, got {}",
                self.truncation_radius
            )));
        }
        if let SigmaMode::PerspectiveScaled {
            reference_scale, ..
        } = &self.mode
        {
            if !(reference_scale.is_finite() && *reference_scale > 0.0) {
                return Err(Error::validation(format!(
                    "reference scale must be > 0, got {reference_scale}"
                )));
            }
        }
        Ok(())
    }
}

/// Peak value of a single unit-mass Gaussian of width `sigma`.
pub fn gaussian_peak(sigma: f64) -> f64 {
    1.0 / (2.0 * std::f64::consts::PI * sigma * sigma)
}

/// Kernel width used for a dot at `at`.
pub fn effective_sigma(cfg: &SynthesisConfig, at: &Point2) -> Result<f64> {
    match &cfg.mode {
        SigmaMode::Fixed => Ok(cfg.sigma),
        SigmaMode::PerspectiveScaled {
            perspective,
            reference_scale,
        } => Ok(cfg.sigma * perspective.scale_at(at)? / reference_scale),
    }
}

/// 1-D Gaussian weights for the cells `first..first + len` along one axis.
pub(crate) fn axis_weights(coord: f64, sigma: f64, reach: f64, extent: usize) -> (usize, Vec<f64>) {
    let cell = coord.floor();
    let frac = coord - cell;
    let lo = (frac - 0.5 - reach).ceil() as i64;
    let hi = (frac - 0.5 + reach).floor() as i64;
    let cell = cell as i64;
    let start = (cell + lo).max(0);
    let end = (cell + hi).min(extent as i64 - 1);
    if start > end {
        return (0, Vec::new());
    }
    let denom = 2.0 * sigma * sigma;
    let weights = (start..=end)
        .map(|idx| {
            let d = (idx - cell) as f64 + 0.5 - frac;
            (-d * d / denom).exp()
        })
        .collect();
    (start as usize, weights)
}

/// Adds the (truncated) Gaussian of one dot into `values`.
fn splat_dot(
    values: &mut [f64],
    width: usize,
    height: usize,
    dot: &Point2,
    sigma: f64,
    cfg: &SynthesisConfig,
) {
    let reach = cfg.truncation_radius * sigma;
    let (col0, wx) = axis_weights(dot.x, sigma, reach, width);
    let (row0, wy) = axis_weights(dot.y, sigma, reach, height);
    let scale = match cfg.normalization {
        Normalization::None => gaussian_peak(sigma),
        Normalization::PerDotRenormalize => {
            let total = wx.iter().sum::<f64>() * wy.iter().sum::<f64>();
            if total <= 0.0 {
                return;
            }
            1.0 / total
        }
    };
    for (dr, gy) in wy.iter().enumerate() {
        let row = &mut values[(row0 + dr) * width + col0..][..wx.len()];
        for (cell, gx) in row.iter_mut().zip(&wx) {
            *cell += gy * gx * scale;
        }
    }
}

/// Synthesizes a density map for an explicit point list.
pub fn synthesize_points(
    points: &[Point2],
    cfg: &SynthesisConfig,
    width: usize,
    height: usize,
) -> Result<DensityMap> {
    cfg.validate()?;
    if width == 0 || height == 0 {
        return Err(Error::validation(format!(
            "map size {width}x{height} must be positive"
        )));
    }
    let mut values = vec![0.0; width * height];
    for (i, p) in points.iter().enumerate() {
        if !p.in_frame(width, height) {
            return Err(Error::validation(format!(
                "dot #{i} ({}, {}) outside {width}x{height} frame",
                p.x, p.y
            )));
        }
        let sigma = effective_sigma(cfg, p)?;
        splat_dot(&mut values, width, height, p, sigma, cfg);
    }
    DensityMap::new(width, height, values)
}

/// Ground-truth density map for one annotated frame.
pub fn synthesize_density(
    ann: &DotAnnotations,
    frame_id: u64,
    cfg: &SynthesisConfig,
    width: usize,
    height: usize,
) -> Result<DensityMap> {
    let frame = ann.frame(frame_id)?;
    synthesize_points(&frame.points, cfg, width, height)
}

/// Number of annotated dots whose cell lies inside the ROI.
pub fn ground_truth_count(ann: &DotAnnotations, frame_id: u64, roi: &RoiMask) -> Result<usize> {
    let frame = ann.frame(frame_id)?;
    Ok(frame
        .points
        .iter()
        .filter(|p| roi.contains_point(p))
        .count())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{AnnotatedFrame, Raster};
    use crate::roi::sum_in_roi;

    /// Independent cell-sum oracle: the product of 1-D sums of the Gaussian
    /// at cell-center offsets within the truncation window.
    fn cell_sum_oracle(offset: f64, sigma: f64, reach: f64) -> f64 {
        let one_d = |frac: f64| -> f64 {
            (-200i64..=200)
                .map(|k| k as f64 + 0.5 - frac)
                .filter(|d| d.abs() <= reach)
                .map(|d| {
                    (-d * d / (2.0 * sigma * sigma)).exp()
                        / (sigma * (2.0 * std::f64::consts::PI).sqrt())
                })
                .sum()
        };
        one_d(offset) * one_d(offset)
    }

    fn centered_dot_map(norm: Normalization) -> DensityMap {
        let cfg = SynthesisConfig::fixed(4.0).with_normalization(norm);
        synthesize_points(&[Point2::new(50.5, 50.5)], &cfg, 101, 101).unwrap()
    }

    #[test]
    fn empty_frame_is_zero() {
        let ann = DotAnnotations::new(8, 8, vec![AnnotatedFrame::new(0, vec![])]).unwrap();
        let map = synthesize_density(&ann, 0, &SynthesisConfig::fixed(4.0), 8, 8).unwrap();
        assert_eq!(map.sum(), 0.0);
        assert!(synthesize_density(&ann, 1, &SynthesisConfig::fixed(4.0), 8, 8).is_err());
    }

    #[test]
    fn single_dot_mass() {
        let renorm = centered_dot_map(Normalization::PerDotRenormalize);
        assert!((renorm.sum() - 1.0).abs() < 1e-12);

        let raw = centered_dot_map(Normalization::None);
        let oracle = cell_sum_oracle(0.5, 4.0, 16.0);
        assert!(
            (raw.sum() - oracle).abs() < 1e-12,
            "{} vs {}",
            raw.sum(),
            oracle
        );
        assert!((raw.sum() - 1.0).abs() <= 1e-4, "{}", raw.sum());
    }

    #[test]
    fn superposition() {
        let cfg = SynthesisConfig::fixed(3.0);
        let a = Point2::new(10.3, 12.7);
        let b = Point2::new(25.1, 14.2);
        let both = synthesize_points(&[a, b], &cfg, 40, 30).unwrap();
        let ma = synthesize_points(&[a], &cfg, 40, 30).unwrap();
        let mb = synthesize_points(&[b], &cfg, 40, 30).unwrap();
        for i in 0..both.values().len() {
            assert!((both.values()[i] - ma.values()[i] - mb.values()[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn effective_sigma_modes() {
        let p = Point2::new(1.5, 0.5);
        assert_eq!(
            effective_sigma(&SynthesisConfig::fixed(4.0), &p).unwrap(),
            4.0
        );
        let persp = PerspectiveMap::new(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let cfg = SynthesisConfig::perspective_scaled(4.0, persp.clone(), 2.0);
        assert_eq!(effective_sigma(&cfg, &p).unwrap(), 4.0);
        let cfg = SynthesisConfig::perspective_scaled(4.0, persp, 1.0);
        assert_eq!(effective_sigma(&cfg, &p).unwrap(), 8.0);
        assert!(effective_sigma(&cfg, &Point2::new(5.0, 0.0)).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(SynthesisConfig::fixed(0.0).validate().is_err());
        assert!(SynthesisConfig::fixed(2.0)
            .with_truncation(2.0)
            .validate()
            .is_err());
        let persp = PerspectiveMap::new(1, 1, vec![1.0]).unwrap();
        assert!(SynthesisConfig::perspective_scaled(2.0, persp, 0.0)
            .validate()
            .is_err());
    }

    #[test]
    fn dot_outside_frame_rejected() {
        let err = synthesize_points(&[Point2::new(8.0, 1.0)], &SynthesisConfig::fixed(2.0), 8, 8);
        assert!(matches!(err, Err(Error::Validation(_))));
    }

    #[test]
    fn three_interior_dots_sum_to_three() {
        let cfg = SynthesisConfig::fixed(2.0).with_normalization(Normalization::None);
        let pts = [
            Point2::new(20.0, 20.0),
            Point2::new(40.2, 21.0),
            Point2::new(30.0, 40.9),
        ];
        let map = synthesize_points(&pts, &cfg, 64, 64).unwrap();
        let total = sum_in_roi(&map, &RoiMask::full(64, 64)).unwrap();
        let oracle: f64 = pts
            .iter()
            .map(|p| {
                let fx = p.x - p.x.floor();
                let fy = p.y - p.y.floor();
                let one = |f: f64| -> f64 {
                    (-50i64..=50)
                        .map(|k| k as f64 + 0.5 - f)
                        .filter(|d| d.abs() <= 8.0)
                        .map(|d| (-d * d / 8.0).exp() / (2.0 * (2.0 * std::f64::consts::PI).sqrt()))
                        .sum()
                };
                one(fx) * one(fy)
            })
            .sum();
        assert!((total - oracle).abs() < 1e-12);
        assert!((total - 3.0).abs() < 3e-3);
    }

    #[test]
    fn ground_truth_counts() {
        let pts = vec![
            Point2::new(1.0, 1.0),
            Point2::new(2.0, 5.0),
            Point2::new(3.9, 7.0),
            Point2::new(4.0, 1.0),
            Point2::new(7.5, 2.0),
        ];
        let ann = DotAnnotations::new(
            8,
            8,
            vec![AnnotatedFrame::new(0, pts), AnnotatedFrame::new(1, vec![])],
        )
        .unwrap();
        assert_eq!(
            ground_truth_count(&ann, 1, &RoiMask::full(8, 8)).unwrap(),
            0
        );
        assert_eq!(
            ground_truth_count(&ann, 0, &RoiMask::full(8, 8)).unwrap(),
            5
        );
        let half: Vec<bool> = (0..64).map(|i| i % 8 < 4).collect();
        let roi = RoiMask::new(8, 8, half).unwrap();
        assert_eq!(ground_truth_count(&ann, 0, &roi).unwrap(), 3);
    }

    #[test]
    fn border_dot_renormalized() {
        let cfg = SynthesisConfig::fixed(4.0);
        let map = synthesize_points(&[Point2::new(0.2, 0.7)], &cfg, 20, 20).unwrap();
        assert!((map.sum() - 1.0).abs() < 1e-12);
        assert_eq!(map.width(), 20);
    }
}

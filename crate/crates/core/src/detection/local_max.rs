use super::{target_count, DetectionSet, Method};
use crate::filter::smoothed_clamped;
use crate::grid::{DensityMap, Point2, Raster};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalMaxOptions {
    /// Cells within this distance of a pick are suppressed.
    pub nms_radius: f64,
    /// Gaussian pre-smoothing width; 0 disables it.
    pub presmooth_sigma: f64,
}

impl LocalMaxOptions {
    /// Suppression radius of 1.5 kernel widths, no pre-smoothing.
    pub fn for_sigma(sigma: f64) -> Self {
        Self {
            nms_radius: 1.5 * sigma,
            presmooth_sigma: 0.0,
        }
    }
}

impl Default for LocalMaxOptions {
    fn default() -> Self {
        Self::for_sigma(4.0)
    }
}

/// Greedy non-maximum suppression: repeatedly take the highest remaining
/// ROI cell and suppress its neighborhood, until the map's rounded count is
/// reached or no positive cell is left.
pub fn detect_local_max(map: &DensityMap, opts: &LocalMaxOptions) -> DetectionSet {
    let (source_count, target) = target_count(map);
    let smooth = smoothed_clamped(map, opts.presmooth_sigma);
    let w = map.width();
    let mut order: Vec<usize> = (0..smooth.values().len())
        .filter(|&i| map.in_roi(i / w, i % w) && smooth.values()[i] > 0.0)
        .collect();
    // highest first; equal values in row-major order
    order.sort_by(|&a, &b| {
        smooth.values()[b]
            .total_cmp(&smooth.values()[a])
            .then(a.cmp(&b))
    });

    let mut picks: Vec<Point2> = Vec::new();
    let target = target.max(0) as usize;
    let r2 = opts.nms_radius * opts.nms_radius;
    for i in order {
        if picks.len() >= target {
            break;
        }
        let p = Point2::cell_center(i / w, i % w);
        let suppressed = picks.iter().any(|q| {
            let (dx, dy) = (q.x - p.x, q.y - p.y);
            dx * dx + dy * dy <= r2
        });
        if !suppressed {
            picks.push(p);
        }
    }
    DetectionSet::new(Method::LocalMax, picks, source_count)
}

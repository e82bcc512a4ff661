//! Region-of-interest rasterization and region sums.

use crate::error::{Error, Result};
use crate::grid::{DensityMap, Point2, Raster, RoiMask};

/// Rasterizes a closed polygon with the even-odd rule evaluated at cell
/// centers.
pub fn rasterize_roi(polygon: &[Point2], width: usize, height: usize) -> Result<RoiMask> {
    if polygon.len() < 3 {
        return Err(Error::validation(format!(
            "ROI polygon needs at least 3 vertices, got {}",
            polygon.len()
        )));
    }
    if polygon.iter().any(|p| !p.is_finite()) {
        return Err(Error::validation("ROI polygon has a non-finite vertex"));
    }
    let mut inside = vec![false; width * height];
    for row in 0..height {
        let y = row as f64 + 0.5;
        for col in 0..width {
            let x = col as f64 + 0.5;
            inside[row * width + col] = even_odd(polygon, x, y);
        }
    }
    RoiMask::new(width, height, inside)
}

fn even_odd(polygon: &[Point2], x: f64, y: f64) -> bool {
    let mut inside = false;
    let mut j = polygon.len() - 1;
    for i in 0..polygon.len() {
        let (a, b) = (polygon[i], polygon[j]);
        if (a.y > y) != (b.y > y) {
            let cross = a.x + (y - a.y) / (b.y - a.y) * (b.x - a.x);
            if x < cross {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

/// Sum of the map over the inside cells of `roi`, negative values included.
pub fn sum_in_roi(map: &DensityMap, roi: &RoiMask) -> Result<f64> {
    if !roi.same_shape(map) {
        return Err(Error::validation(format!(
            "ROI {}x{} does not match map {}x{}",
            roi.width(),
            roi.height(),
            map.width(),
            map.height()
        )));
    }
    if roi.count_inside() == 0 {
        return Err(Error::validation("ROI has no inside cells"));
    }
    Ok(map
        .values()
        .iter()
        .zip(roi.mask())
        .filter(|(_, &inside)| inside)
        .map(|(v, _)| v)
        .sum())
}

/// Sum over the map's own ROI, or the whole frame when it has none.
pub fn map_count(map: &DensityMap) -> f64 {
    match map.roi() {
        Some(roi) => map
            .values()
            .iter()
            .zip(roi.mask())
            .filter(|(_, &inside)| inside)
            .map(|(v, _)| v)
            .sum(),
        None => map.sum(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Vec<Point2> {
        vec![
            Point2::new(x0, y0),
            Point2::new(x1, y0),
            Point2::new(x1, y1),
            Point2::new(x0, y1),
        ]
    }

    #[test]
    fn full_frame_rectangle() {
        let roi = rasterize_roi(&rect(0.0, 0.0, 6.0, 4.0), 6, 4).unwrap();
        assert_eq!(roi.count_inside(), 24);
    }

    #[test]
    fn degenerate_polygon_rejected() {
        let err = rasterize_roi(&[Point2::new(0.0, 0.0), Point2::new(3.0, 3.0)], 4, 4);
        assert!(matches!(err, Err(Error::Validation(_))));
    }

    #[test]
    fn half_frame_rectangle() {
        let (w, h) = (10, 7);
        let roi = rasterize_roi(&rect(0.0, 0.0, 5.0, 7.0), w, h).unwrap();
        // direct point-in-rectangle count over cell centers
        let expected = (0..h)
            .flat_map(|r| (0..w).map(move |c| (r, c)))
            .filter(|&(_, c)| (c as f64 + 0.5) < 5.0)
            .count();
        assert_eq!(roi.count_inside(), expected);
        assert_eq!(roi.count_inside(), w * h / 2);
        assert!(roi.is_inside(3, 4));
        assert!(!roi.is_inside(3, 5));
    }

    #[test]
    fn even_odd_self_overlap() {
        // a bow-tie: the crossing region is counted once per lobe
        let poly = vec![
            Point2::new(0.0, 0.0),
            Point2::new(8.0, 8.0),
            Point2::new(8.0, 0.0),
            Point2::new(0.0, 8.0),
        ];
        let roi = rasterize_roi(&poly, 8, 8).unwrap();
        assert!(roi.is_inside(4, 0) || roi.is_inside(3, 0));
        assert!(!roi.is_inside(0, 4));
    }

    #[test]
    fn sums() {
        let map = DensityMap::new(4, 4, vec![1.0; 16]).unwrap();
        assert_eq!(sum_in_roi(&map, &RoiMask::full(4, 4)).unwrap(), 16.0);
        let empty = RoiMask::new(4, 4, vec![false; 16]).unwrap();
        assert!(sum_in_roi(&map, &empty).is_err());
        assert!(sum_in_roi(&map, &RoiMask::full(3, 4)).is_err());

        let pred = DensityMap::prediction(2, 1, vec![2.0, -0.5]).unwrap();
        assert_eq!(sum_in_roi(&pred, &RoiMask::full(2, 1)).unwrap(), 1.5);
    }
}

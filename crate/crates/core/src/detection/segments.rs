use std::collections::VecDeque;

use crate::grid::{DensityMap, Point2, Raster};

/// A 4-connected blob of above-threshold cells.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    /// Row-major cell indices, in discovery order.
    pub cells: Vec<usize>,
    /// Clamped density summed over `cells`.
    pub mass: f64,
}

impl Segment {
    pub fn centers(&self, width: usize) -> Vec<Point2> {
        self.cells
            .iter()
            .map(|&i| Point2::cell_center(i / width, i % width))
            .collect()
    }
}

/// Maximal 4-connected components of ROI cells whose clamped density
/// exceeds `tau`. Segments are ordered by their first cell in row-major
/// order.
pub fn threshold_segments(map: &DensityMap, tau: f64) -> Vec<Segment> {
    let (w, h) = (map.width(), map.height());
    let vals = map.values();
    let above = |i: usize| map.in_roi(i / w, i % w) && vals[i].max(0.0) > tau;
    let mut seen = vec![false; w * h];
    let mut out = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..w * h {
        if seen[start] || !above(start) {
            continue;
        }
        seen[start] = true;
        queue.push_back(start);
        let mut cells = Vec::new();
        let mut mass = 0.0;
        while let Some(i) = queue.pop_front() {
            cells.push(i);
            mass += vals[i].max(0.0);
            let (r, c) = (i / w, i % w);
            let mut visit = |j: usize| {
                if !seen[j] && above(j) {
                    seen[j] = true;
                    queue.push_back(j);
                }
            };
            if r > 0 {
                visit(i - w);
            }
            if c > 0 {
                visit(i - 1);
            }
            if c + 1 < w {
                visit(i + 1);
            }
            if r + 1 < h {
                visit(i + w);
            }
        }
        out.push(Segment { cells, mass });
    }
    out
}

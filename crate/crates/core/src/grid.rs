//! Raster and annotation domain types.
//!
//! Every grid is stored row-major with the origin at the top-left corner and
//! `y` growing downwards. Cell `(row, col)` covers the half-open square
//! `[col, col + 1) x [row, row + 1)` in pixel coordinates, so its center sits
//! at `(col + 0.5, row + 0.5)`. Point annotations share the same convention.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A location in pixel coordinates: `x` along columns, `y` along rows.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    /// Center of cell `(row, col)`.
    pub fn cell_center(row: usize, col: usize) -> Self {
        Self::new(col as f64 + 0.5, row as f64 + 0.5)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn distance(&self, other: &Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    /// Whether the point lies inside a `width` x `height` frame.
    pub fn in_frame(&self, width: usize, height: usize) -> bool {
        self.is_finite()
            && self.x >= 0.0
            && self.y >= 0.0
            && self.x < width as f64
            && self.y < height as f64
    }

    /// `(row, col)` of the cell containing the point, if it is in the frame.
    pub fn cell(&self, width: usize, height: usize) -> Option<(usize, usize)> {
        if !self.in_frame(width, height) {
            return None;
        }
        let col = (self.x.floor() as usize).min(width - 1);
        let row = (self.y.floor() as usize).min(height - 1);
        Some((row, col))
    }
}

impl From<[f64; 2]> for Point2 {
    fn from(v: [f64; 2]) -> Self {
        Self::new(v[0], v[1])
    }
}

impl From<Point2> for [f64; 2] {
    fn from(p: Point2) -> Self {
        [p.x, p.y]
    }
}

impl std::ops::Sub for Point2 {
    type Output = Point2;
    fn sub(self, rhs: Point2) -> Point2 {
        Point2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl std::ops::Add for Point2 {
    type Output = Point2;
    fn add(self, rhs: Point2) -> Point2 {
        Point2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

/// Read-only view shared by every real-valued raster type.
pub trait Raster {
    fn width(&self) -> usize;
    fn height(&self) -> usize;
    fn cells(&self) -> &[f64];

    fn at(&self, row: usize, col: usize) -> f64 {
        self.cells()[row * self.width() + col]
    }
}

fn check_dims(width: usize, height: usize, len: usize, what: &str) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::validation(format!(
            "{what} must have positive dimensions, got {width}x{height}"
        )));
    }
    if width.checked_mul(height) != Some(len) {
        return Err(Error::validation(format!(
            "{what} of {width}x{height} needs {} cells, got {len}",
            width.saturating_mul(height)
        )));
    }
    Ok(())
}

/// Binary region-of-interest mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoiMask {
    width: usize,
    height: usize,
    inside: Vec<bool>,
}

impl RoiMask {
    pub fn new(width: usize, height: usize, inside: Vec<bool>) -> Result<Self> {
        check_dims(width, height, inside.len(), "ROI mask")?;
        Ok(Self {
            width,
            height,
            inside,
        })
    }

    /// Mask with every cell inside.
    pub fn full(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            inside: vec![true; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn mask(&self) -> &[bool] {
        &self.inside
    }

    pub fn is_inside(&self, row: usize, col: usize) -> bool {
        self.inside[row * self.width + col]
    }

    pub fn contains_point(&self, p: &Point2) -> bool {
        p.cell(self.width, self.height)
            .is_some_and(|(r, c)| self.is_inside(r, c))
    }

    pub fn count_inside(&self) -> usize {
        self.inside.iter().filter(|&&b| b).count()
    }

    pub fn same_shape<R: Raster + ?Sized>(&self, other: &R) -> bool {
        self.width == other.width() && self.height == other.height()
    }
}

/// A grid of object densities (objects per unit pixel area).
///
/// Synthesized ground truth is non-negative everywhere. Maps produced by an
/// estimator are flagged as predictions and may carry small negative values.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
    roi: Option<RoiMask>,
    prediction: bool,
}

impl DensityMap {
    /// A non-negative density map.
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        check_dims(width, height, values.len(), "density map")?;
        if let Some(i) = values.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::validation(format!(
                "density value {} at cell {i} is negative or non-finite",
                values[i]
            )));
        }
        Ok(Self {
            width,
            height,
            values,
            roi: None,
            prediction: false,
        })
    }

    /// A raw estimator output; negative values are kept as-is.
    pub fn prediction(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        check_dims(width, height, values.len(), "density map")?;
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::validation(format!(
                "density value at cell {i} is not finite"
            )));
        }
        Ok(Self {
            width,
            height,
            values,
            roi: None,
            prediction: true,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            values: vec![0.0; width * height],
            roi: None,
            prediction: false,
        }
    }

    pub fn with_roi(mut self, roi: RoiMask) -> Result<Self> {
        if !roi.same_shape(&self) {
            return Err(Error::validation(format!(
                "ROI {}x{} does not match map {}x{}",
                roi.width(),
                roi.height(),
                self.width,
                self.height
            )));
        }
        self.roi = Some(roi);
        Ok(self)
    }

    pub fn roi(&self) -> Option<&RoiMask> {
        self.roi.as_ref()
    }

    /// The attached ROI, or a full-frame mask.
    pub fn roi_or_full(&self) -> RoiMask {
        self.roi
            .clone()
            .unwrap_or_else(|| RoiMask::full(self.width, self.height))
    }

    /// Whether cell `(row, col)` is inside the attached ROI (true without one).
    pub fn in_roi(&self, row: usize, col: usize) -> bool {
        self.roi.as_ref().is_none_or(|r| r.is_inside(row, col))
    }

    pub fn is_prediction(&self) -> bool {
        self.prediction
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Copy with every negative value replaced by zero; keeps the ROI.
    pub fn clamped(&self) -> DensityMap {
        DensityMap {
            width: self.width,
            height: self.height,
            values: self.values.iter().map(|v| v.max(0.0)).collect(),
            roi: self.roi.clone(),
            prediction: false,
        }
    }

    pub fn same_shape<R: Raster + ?Sized>(&self, other: &R) -> bool {
        self.width == other.width() && self.height == other.height()
    }
}

impl Raster for DensityMap {
    fn width(&self) -> usize {
        self.width
    }
    fn height(&self) -> usize {
        self.height
    }
    fn cells(&self) -> &[f64] {
        &self.values
    }
}

/// Per-cell apparent object scale, relative to a reference height.
#[derive(Debug, Clone, PartialEq)]
pub struct PerspectiveMap {
    width: usize,
    height: usize,
    scale: Vec<f64>,
}

impl PerspectiveMap {
    pub fn new(width: usize, height: usize, scale: Vec<f64>) -> Result<Self> {
        check_dims(width, height, scale.len(), "perspective map")?;
        if let Some(i) = scale.iter().position(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::validation(format!(
                "perspective scale {} at cell {i} is not positive",
                scale[i]
            )));
        }
        Ok(Self {
            width,
            height,
            scale,
        })
    }

    /// Ground-plane camera: scale varies linearly from `top` (row 0) to
    /// `bottom` (last row), sampled at row centers.
    pub fn linear_rows(width: usize, height: usize, top: f64, bottom: f64) -> Result<Self> {
        let mut scale = Vec::with_capacity(width * height);
        for row in 0..height {
            let t = (row as f64 + 0.5) / height as f64;
            let s = top + (bottom - top) * t;
            scale.extend(std::iter::repeat_n(s, width));
        }
        Self::new(width, height, scale)
    }

    /// Scale at the cell containing `p`.
    pub fn scale_at(&self, p: &Point2) -> Result<f64> {
        let (row, col) = p.cell(self.width, self.height).ok_or_else(|| {
            Error::validation(format!(
                "point ({}, {}) outside {}x{} perspective map",
                p.x, p.y, self.width, self.height
            ))
        })?;
        Ok(self.at(row, col))
    }
}

impl Raster for PerspectiveMap {
    fn width(&self) -> usize {
        self.width
    }
    fn height(&self) -> usize {
        self.height
    }
    fn cells(&self) -> &[f64] {
        &self.scale
    }
}

/// Grayscale image with intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        check_dims(width, height, pixels.len(), "image")?;
        if let Some(i) = pixels
            .iter()
            .position(|v| !(v.is_finite() && (0.0..=1.0).contains(v)))
        {
            return Err(Error::validation(format!(
                "pixel {i} has intensity {} outside [0, 1]",
                pixels[i]
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self {
            width,
            height,
            pixels: vec![value.clamp(0.0, 1.0); width * height],
        }
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }
}

impl Raster for GrayImage {
    fn width(&self) -> usize {
        self.width
    }
    fn height(&self) -> usize {
        self.height
    }
    fn cells(&self) -> &[f64] {
        &self.pixels
    }
}

/// Point annotations of one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedFrame {
    pub id: u64,
    pub points: Vec<Point2>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub track_ids: Option<Vec<u64>>,
}

impl AnnotatedFrame {
    pub fn new(id: u64, points: Vec<Point2>) -> Self {
        Self {
            id,
            points,
            track_ids: None,
        }
    }

    pub fn with_tracks(id: u64, points: Vec<Point2>, track_ids: Vec<u64>) -> Self {
        Self {
            id,
            points,
            track_ids: Some(track_ids),
        }
    }
}

/// Dot annotations for a sequence of frames of a common size.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DotAnnotations {
    pub width: usize,
    pub height: usize,
    pub frames: Vec<AnnotatedFrame>,
}

impl DotAnnotations {
    /// Validates every invariant; frames are sorted by id.
    pub fn new(width: usize, height: usize, mut frames: Vec<AnnotatedFrame>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::validation(format!(
                "annotation frame size must be positive, got {width}x{height}"
            )));
        }
        frames.sort_by_key(|f| f.id);
        for pair in frames.windows(2) {
            if pair[0].id == pair[1].id {
                return Err(Error::validation(format!(
                    "duplicate frame id {}",
                    pair[0].id
                )));
            }
        }
        for frame in &frames {
            if let Some(ids) = &frame.track_ids {
                if ids.len() != frame.points.len() {
                    return Err(Error::validation(format!(
                        "frame {}: {} track ids for {} points",
                        frame.id,
                        ids.len(),
                        frame.points.len()
                    )));
                }
            }
            let offenders: Vec<String> = frame
                .points
                .iter()
                .enumerate()
                .filter(|(_, p)| !p.in_frame(width, height))
                .map(|(i, p)| format!("#{i} ({}, {})", p.x, p.y))
                .collect();
            if !offenders.is_empty() {
                return Err(Error::validation(format!(
                    "frame {}: points outside {width}x{height}: {}",
                    frame.id,
                    offenders.join(", ")
                )));
            }
        }
        Ok(Self {
            width,
            height,
            frames,
        })
    }

    pub fn frame(&self, id: u64) -> Result<&AnnotatedFrame> {
        self.frames
            .binary_search_by_key(&id, |f| f.id)
            .map(|i| &self.frames[i])
            .map_err(|_| Error::NotFound(format!("frame {id}")))
    }

    pub fn has_tracks(&self) -> bool {
        !self.frames.is_empty() && self.frames.iter().all(|f| f.track_ids.is_some())
    }
}

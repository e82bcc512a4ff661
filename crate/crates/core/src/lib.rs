//! Density maps beyond counting.
//!
//! This crate synthesizes object density maps from dot annotations, recovers
//! individual object locations from density maps, fuses density with a
//! correlation-filter tracker, and evaluates density maps with counting,
//! localization, compactness and temporal-stability metrics.
//!
//! Module map:
//!
//! * [`grid`], [`io`], [`roi`]: rasters, annotations and their file formats.
//! * [`synthesis`]: Gaussian ground-truth density from dots.
//! * [`estimator`]: a patch-based ridge-regression density estimator.
//! * [`detection`]: local maxima, k-means, (weighted) GMM and integer
//!   programming detectors.
//! * [`metrics`]: counting errors, GAME, losses, BBDR/BBMAE, temporal
//!   smoothness, matching, P/R/F1 and tracking precision.
//! * [`tracking`]: linear correlation-filter tracker and density fusion.
//! * [`simulator`]: seeded synthetic crowd scenes.

pub mod detection;
pub mod error;
pub mod estimator;
pub mod filter;
pub mod grid;
pub mod io;
pub mod metrics;
pub mod roi;
pub mod simulator;
pub mod synthesis;
pub mod tracking;

pub use error::{Error, Result};
pub use grid::{
    AnnotatedFrame, DensityMap, DotAnnotations, GrayImage, PerspectiveMap, Point2, Raster, RoiMask,
};

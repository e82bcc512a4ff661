//! Evaluation metrics for density maps, detections and tracks.

mod counting;
mod losses;
mod matching;
mod quality;
mod trajectory;

pub use counting::{count_errors, game, game_batch, game_bounds, CountErrors};
pub use losses::{
    loss_aux, loss_combined, loss_density, loss_pixel_count, CountClassDistribution, LossConfig,
    PixelCountLoss,
};
pub use matching::{match_detections, prf, MatchResult, Prf};
pub use quality::{bbdr, bbmae, box_sums, scatter_stats, temporal_mad, BoxSpec, ScatterStats};
pub use trajectory::{
    tracking_precision_curve, trajectory_errors, TrajectoryErrors, TrajectoryFrame,
};

use crate::error::{Error, Result};
use crate::grid::{DensityMap, Raster};

pub(crate) fn check_same_shape(a: &DensityMap, b: &DensityMap) -> Result<()> {
    if a.same_shape(b) {
        Ok(())
    } else {
        Err(Error::validation(format!(
            "map sizes differ: {}x{} vs {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )))
    }
}

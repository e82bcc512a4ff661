use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::Args;
use densemap::io::parse_annotations;
use densemap::metrics::tracking_precision_curve;
use densemap::tracking::{run_tracker, DensitySmoother, TrackerConfig};
use densemap::{DensityMap, DotAnnotations, Point2, Result};
use serde::{Deserialize, Serialize};

use super::d;
use crate::config::{invalid, io_error, required, Command};
use crate::util::{fmt, load_images, load_maps, parse_point, parse_thresholds, Table};

pub const POSITIONS_FILE: &str = "positions.csv";
pub const PRECISION_FILE: &str = "precision.csv";
pub const ERRORS_FILE: &str = "errors.csv";

/// Positions of one track by frame id. Without an id, the lowest track id
/// of the first frame is used.
fn gt_track(ann: &DotAnnotations, track_id: Option<u64>) -> Result<(u64, BTreeMap<u64, Point2>)> {
    if !ann.has_tracks() {
        return Err(invalid("annotations carry no track ids"));
    }
    let id = match track_id {
        Some(id) => id,
        None => ann.frames[0]
            .track_ids
            .as_ref()
            .and_then(|t| t.iter().min().copied())
            .ok_or_else(|| invalid("first annotated frame has no tracks"))?,
    };
    let mut out = BTreeMap::new();
    for f in &ann.frames {
        let ids = f.track_ids.as_ref().expect("checked by has_tracks");
        if let Some(i) = ids.iter().position(|&t| t == id) {
            out.insert(f.id, f.points[i]);
        }
    }
    if out.is_empty() {
        return Err(invalid(format!(
            "track {id} does not occur in the annotations"
        )));
    }
    Ok((id, out))
}

fn precision_table(errors: &[f64], thresholds: &str) -> Result<Table> {
    let curve = tracking_precision_curve(errors, &parse_thresholds(thresholds)?)?;
    let mut t = Table::new(&["threshold", "precision"]);
    for (th, p) in curve {
        t.push(vec![fmt(th), fmt(p)]);
    }
    Ok(t)
}

fn print_precision_summary(t: &Table) {
    for row in &t.rows {
        if row[0] == "5" || row[0] == "4" || row[0] == "20" {
            println!("precision@{}px: {}", row[0], row[1]);
        }
    }
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackOpts {
    /// Directory of frame_*.pgm images
    #[arg(long)]
    pub frames: Option<PathBuf>,
    /// Output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Initial target position "x,y" [default: the track's first annotation]
    #[arg(long)]
    pub init: Option<String>,
    /// Annotation JSON with track ids; enables error and precision output
    #[arg(long)]
    pub ann: Option<PathBuf>,
    /// Track to follow [default: lowest track id in the first frame]
    #[arg(long)]
    pub track_id: Option<u64>,
    /// Directory of frame_*.dmf density maps to fuse with the response [default: none]
    #[arg(long)]
    pub density: Option<PathBuf>,
    /// Square search window side, even [default: 32]
    #[arg(long)]
    pub window: Option<usize>,
    /// Template update rate [default: 0.02]
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Filter regularization [default: 0.01]
    #[arg(long)]
    pub regularization: Option<f64>,
    /// Width of the Gaussian training target [default: window / 10]
    #[arg(long)]
    pub target_sigma: Option<f64>,
    /// Weight of the newest density frame in its moving average; 1 uses per-frame maps [default: 1]
    #[arg(long)]
    pub density_smoothing: Option<f64>,
    /// Precision curve thresholds start:end:step in pixels [default: 0:50:1]
    #[arg(long)]
    pub thresholds: Option<String>,
}

impl TrackOpts {
    fn tracker_config(&self) -> TrackerConfig {
        let w = d(&self.window);
        TrackerConfig {
            window: (w, w),
            learning_rate: d(&self.learning_rate),
            regularization: d(&self.regularization),
            target_sigma: self.target_sigma,
        }
    }
}

impl Command for TrackOpts {
    const NAME: &'static str = "track";

    fn defaults() -> Self {
        let c = TrackerConfig::default();
        Self {
            window: Some(c.window.0),
            learning_rate: Some(c.learning_rate),
            regularization: Some(c.regularization),
            density_smoothing: Some(1.0),
            thresholds: Some("0:50:1".into()),
            ..Default::default()
        }
    }

    fn inputs(&self) -> Vec<PathBuf> {
        self.frames
            .iter()
            .chain(&self.ann)
            .chain(&self.density)
            .cloned()
            .collect()
    }

    fn out(&self) -> Option<&Path> {
        self.out.as_deref()
    }

    fn run(&self, jobs: usize) -> Result<()> {
        let cfg = self.tracker_config();
        cfg.validate()?;
        let images = load_images(jobs, required(&self.frames, "frames")?)?;
        let gt = match &self.ann {
            Some(p) => Some(gt_track(&parse_annotations(p)?, self.track_id)?),
            None => None,
        };
        let first_id = images[0].0;
        let init = match (&self.init, &gt) {
            (Some(s), _) => parse_point(s)?,
            (None, Some((id, track))) => *track.get(&first_id).ok_or_else(|| {
                invalid(format!("track {id} is not annotated in frame {first_id}"))
            })?,
            (None, None) => return Err(invalid("give --init or --ann")),
        };
        let densities: Option<Vec<DensityMap>> = match &self.density {
            Some(dir) => {
                let maps = load_maps(jobs, dir, None)?;
                let ids: Vec<u64> = maps.iter().map(|m| m.0).collect();
                if ids != images.iter().map(|i| i.0).collect::<Vec<_>>() {
                    return Err(invalid("density maps and frames hold different frame ids"));
                }
                let mut smoother = DensitySmoother::new(d(&self.density_smoothing))?;
                Some(
                    maps.iter()
                        .map(|(_, m)| smoother.push(m))
                        .collect::<Result<_>>()?,
                )
            }
            None => None,
        };
        let imgs: Vec<_> = images.iter().map(|(_, i)| i.clone()).collect();
        let positions = run_tracker(&imgs, densities.as_deref(), init, &cfg)?;

        let out = d(&self.out);
        let mut table = Table::new(&["frame", "x", "y", "gt_x", "gt_y", "error"]);
        let mut errors = Vec::new();
        for ((id, _), p) in images.iter().zip(&positions) {
            let truth = gt.as_ref().and_then(|(_, t)| t.get(id));
            let mut row = vec![id.to_string(), fmt(p.x), fmt(p.y)];
            match truth {
                Some(g) => {
                    let e = p.distance(g);
                    errors.push(e);
                    row.extend([fmt(g.x), fmt(g.y), fmt(e)]);
                }
                None => row.extend([String::new(), String::new(), String::new()]),
            }
            table.push(row);
        }
        table.write_csv(&out.join(POSITIONS_FILE))?;
        println!(
            "tracked {} frames -> {}",
            positions.len(),
            out.join(POSITIONS_FILE).display()
        );
        if !errors.is_empty() {
            let prec = precision_table(&errors, &d(&self.thresholds))?;
            prec.write_csv(&out.join(PRECISION_FILE))?;
            println!(
                "mean error: {:.3}px",
                errors.iter().sum::<f64>() / errors.len() as f64
            );
            print_precision_summary(&prec);
        }
        Ok(())
    }
}

#[derive(Debug, Deserialize)]
struct PositionRow {
    frame: u64,
    x: f64,
    y: f64,
}

fn read_positions(path: &Path) -> Result<Vec<(u64, Point2)>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => io_error(path, io),
        other => invalid(format!("{}: {other:?}", path.display())),
    })?;
    r.deserialize::<PositionRow>()
        .map(|row| {
            let row = row.map_err(|e| invalid(format!("{}: {e}", path.display())))?;
            Ok((row.frame, Point2::new(row.x, row.y)))
        })
        .collect()
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalTrackOpts {
    /// Tracked positions CSV with frame,x,y columns
    #[arg(long)]
    pub positions: Option<PathBuf>,
    /// Annotation JSON with track ids
    #[arg(long)]
    pub ann: Option<PathBuf>,
    /// Output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Ground-truth track [default: lowest track id in the first frame]
    #[arg(long)]
    pub track_id: Option<u64>,
    /// Precision curve thresholds start:end:step in pixels [default: 0:50:1]
    #[arg(long)]
    pub thresholds: Option<String>,
}

impl Command for EvalTrackOpts {
    const NAME: &'static str = "eval-track";

    fn defaults() -> Self {
        Self {
            thresholds: Some("0:50:1".into()),
            ..Default::default()
        }
    }

    fn inputs(&self) -> Vec<PathBuf> {
        self.positions.iter().chain(&self.ann).cloned().collect()
    }

    fn out(&self) -> Option<&Path> {
        self.out.as_deref()
    }

    fn run(&self, _jobs: usize) -> Result<()> {
        let positions = read_positions(required(&self.positions, "positions")?)?;
        let (id, track) = gt_track(
            &parse_annotations(required(&self.ann, "ann")?)?,
            self.track_id,
        )?;
        let mut table = Table::new(&["frame", "error"]);
        let mut errors = Vec::new();
        for (frame, p) in &positions {
            if let Some(g) = track.get(frame) {
                let e = p.distance(g);
                errors.push(e);
                table.push(vec![frame.to_string(), fmt(e)]);
            }
        }
        if errors.is_empty() {
            return Err(invalid(format!(
                "no tracked frame has an annotation of track {id}"
            )));
        }
        table.push(vec![
            "mean".into(),
            fmt(errors.iter().sum::<f64>() / errors.len() as f64),
        ]);
        let out = d(&self.out);
        table.write_csv(&out.join(ERRORS_FILE))?;
        let prec = precision_table(&errors, &d(&self.thresholds))?;
        prec.write_csv(&out.join(PRECISION_FILE))?;
        println!(
            "track {id}: {} frames evaluated, mean error {}",
            errors.len(),
            table.rows.last().unwrap()[1]
        );
        print_precision_summary(&prec);
        Ok(())
    }
}

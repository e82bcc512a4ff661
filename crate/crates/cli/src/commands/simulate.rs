use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use densemap::io::{frame_stem, write_annotations, write_pgm, write_raster};
use densemap::simulator::{scenario_distractor, simulate_scene, SceneConfig};
use densemap::Result;
use serde::{Deserialize, Serialize};

use super::d;
use crate::config::Command;
use crate::util::par_map;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    /// Independent walkers reflecting at the margins.
    Crowd,
    /// Two people passing close to each other mid-sequence.
    Distractor,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateOpts {
    /// Output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Frame width in pixels [default: 200]
    #[arg(long)]
    pub width: Option<usize>,
    /// Frame height in pixels [default: 150]
    #[arg(long)]
    pub height: Option<usize>,
    /// Number of people (crowd scenario) [default: 20]
    #[arg(long)]
    pub people: Option<usize>,
    /// Number of frames [default: 50]
    #[arg(long)]
    pub frames: Option<usize>,
    /// Perspective scale of the top row [default: 0.7]
    #[arg(long)]
    pub top_scale: Option<f64>,
    /// Perspective scale of the bottom row [default: 1.3]
    #[arg(long)]
    pub bottom_scale: Option<f64>,
    /// Blob width at perspective scale 1 [default: 3]
    #[arg(long)]
    pub render_sigma: Option<f64>,
    /// Mean speed in pixels per frame [default: 1]
    #[arg(long)]
    pub speed: Option<f64>,
    /// Standard deviation of additive image noise [default: 0.02]
    #[arg(long)]
    pub noise: Option<f64>,
    /// Minimum distance of people from the frame edges [default: 4]
    #[arg(long)]
    pub margin: Option<f64>,
    /// Random seed [default: $DENSEMAP_SEED, else 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Scene layout [default: crowd]
    #[arg(long, value_enum)]
    pub scenario: Option<Scenario>,
}

impl SimulateOpts {
    pub fn scene_config(&self) -> SceneConfig {
        SceneConfig {
            width: d(&self.width),
            height: d(&self.height),
            n_people: d(&self.people),
            n_frames: d(&self.frames),
            top_scale: d(&self.top_scale),
            bottom_scale: d(&self.bottom_scale),
            person_render_sigma: d(&self.render_sigma),
            speed: d(&self.speed),
            noise_sigma: d(&self.noise),
            margin: d(&self.margin),
            seed: d(&self.seed),
        }
    }
}

impl Command for SimulateOpts {
    const NAME: &'static str = "simulate";

    fn defaults() -> Self {
        let c = SceneConfig::default();
        Self {
            out: None,
            width: Some(c.width),
            height: Some(c.height),
            people: Some(c.n_people),
            frames: Some(c.n_frames),
            top_scale: Some(c.top_scale),
            bottom_scale: Some(c.bottom_scale),
            render_sigma: Some(c.person_render_sigma),
            speed: Some(c.speed),
            noise: Some(c.noise_sigma),
            margin: Some(c.margin),
            seed: None,
            scenario: Some(Scenario::Crowd),
        }
    }

    fn seeded() -> bool {
        true
    }

    fn inputs(&self) -> Vec<PathBuf> {
        Vec::new()
    }

    fn out(&self) -> Option<&Path> {
        self.out.as_deref()
    }

    fn seed(&self) -> Option<u64> {
        self.seed
    }

    fn run(&self, jobs: usize) -> Result<()> {
        let out = d(&self.out);
        let cfg = self.scene_config();
        let scene = match d(&self.scenario) {
            Scenario::Crowd => simulate_scene(&cfg)?,
            Scenario::Distractor => scenario_distractor(&cfg)?,
        };
        let frames: Vec<(u64, &densemap::GrayImage)> = scene
            .annotations
            .frames
            .iter()
            .map(|f| f.id)
            .zip(&scene.images)
            .collect();
        par_map(jobs, &frames, |(id, img)| {
            write_pgm(img, out.join(format!("{}.pgm", frame_stem(*id))))
        })?;
        write_annotations(&scene.annotations, out.join("annotations.json"))?;
        write_raster(&scene.perspective, out.join("perspective.dmf"))?;
        println!(
            "simulated {} frames of {}x{} with {} people into {}",
            scene.images.len(),
            cfg.width,
            cfg.height,
            scene
                .annotations
                .frames
                .first()
                .map_or(0, |f| f.points.len()),
            out.display()
        );
        Ok(())
    }
}

use std::path::{Path, PathBuf};

use clap::Args;
use densemap::Result;
use serde::{Deserialize, Serialize};

use super::d;
use super::detect::{DetectOpts, DETECTIONS_FILE};
use super::eval::EvalDetOpts;
use super::simulate::SimulateOpts;
use super::synth::SynthOpts;
use crate::config::{execute, Command};

/// simulate -> synth -> detect -> eval-det, each stage in its own
/// subdirectory with its own manifest. Stage options come from the config
/// file sections of the same names; input and output paths are wired here.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineOpts {
    /// Output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Seed for every stage without its own [default: $DENSEMAP_SEED, else 0]
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(skip)]
    pub simulate: Option<SimulateOpts>,
    #[arg(skip)]
    pub synth: Option<SynthOpts>,
    #[arg(skip)]
    pub detect: Option<DetectOpts>,
    #[arg(skip)]
    pub eval_det: Option<EvalDetOpts>,
}

impl Command for PipelineOpts {
    const NAME: &'static str = "pipeline";

    fn defaults() -> Self {
        Self {
            out: None,
            seed: None,
            simulate: Some(SimulateOpts::defaults()),
            synth: Some(SynthOpts::defaults()),
            detect: Some(DetectOpts::defaults()),
            eval_det: Some(EvalDetOpts::defaults()),
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
        let seed = d(&self.seed);
        let scene_dir = out.join("scene");
        let density_dir = out.join("density");
        let detect_dir = out.join("detect");
        let ann = scene_dir.join("annotations.json");

        let mut sim = d(&self.simulate);
        sim.out = Some(scene_dir.clone());
        sim.seed = sim.seed.or(Some(seed));
        println!("== simulate");
        execute(&sim, jobs)?;

        let mut synth = d(&self.synth);
        synth.ann = Some(ann.clone());
        synth.out = Some(density_dir.clone());
        println!("== synth");
        execute(&synth, jobs)?;

        let mut det = d(&self.detect);
        det.density = Some(density_dir);
        det.out = Some(detect_dir.clone());
        det.seed = det.seed.or(Some(seed));
        println!("== detect");
        execute(&det, jobs)?;

        let mut ev = d(&self.eval_det);
        ev.det = Some(detect_dir.join(DETECTIONS_FILE));
        ev.ann = Some(ann);
        ev.out = Some(out.join("eval"));
        println!("== eval-det");
        execute(&ev, jobs)
    }
}

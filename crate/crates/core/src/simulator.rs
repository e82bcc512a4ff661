//! Seeded synthetic crowd scenes.
//!
//! People move at constant velocity with small Gaussian jitter and reflect
//! off the frame borders. Each is drawn as a bright isotropic Gaussian blob
//! whose width follows a linear top-to-bottom perspective, composited by
//! per-pixel maximum over a dark background, followed by additive Gaussian
//! noise and clipping to `[0, 1]`.
//!
//! All randomness comes from ChaCha8 (`rand_chacha::ChaCha8Rng`) seeded with
//! `SceneConfig::seed`, so scenes are identical across platforms.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{AnnotatedFrame, DotAnnotations, GrayImage, PerspectiveMap, Point2};

pub const BACKGROUND: f64 = 0.1;
pub const BRIGHTNESS: f64 = 0.6;
/// Positional jitter per frame, as a fraction of the mean speed.
pub const JITTER: f64 = 0.1;
/// Blobs are drawn out to this many render sigmas.
const RENDER_REACH: f64 = 4.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneConfig {
    pub width: usize,
    pub height: usize,
    pub n_people: usize,
    pub n_frames: usize,
    pub top_scale: f64,
    pub bottom_scale: f64,
    /// Blob width at perspective scale 1.
    pub person_render_sigma: f64,
    /// Mean speed in pixels per frame.
    pub speed: f64,
    pub noise_sigma: f64,
    /// People stay at least this far from the frame edges.
    pub margin: f64,
    pub seed: u64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            width: 200,
            height: 150,
            n_people: 20,
            n_frames: 50,
            top_scale: 0.7,
            bottom_scale: 1.3,
            person_render_sigma: 3.0,
            speed: 1.0,
            noise_sigma: 0.02,
            margin: 4.0,
            seed: 0,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        let reals = [
            ("top_scale", self.top_scale),
            ("bottom_scale", self.bottom_scale),
            ("person_render_sigma", self.person_render_sigma),
        ];
        if let Some((name, v)) = reals.iter().find(|(_, v)| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::validation(format!(
                "{name} must be positive, got {v}"
            )));
        }
        let non_negative = [
            ("speed", self.speed),
            ("noise_sigma", self.noise_sigma),
            ("margin", self.margin),
        ];
        if let Some((name, v)) = non_negative
            .iter()
            .find(|(_, v)| !(v.is_finite() && *v >= 0.0))
        {
            return Err(Error::validation(format!("{name} must be >= 0, got {v}")));
        }
        if self.width == 0 || self.height == 0 || self.n_frames == 0 {
            return Err(Error::validation(
                "width, height and n_frames must be positive",
            ));
        }
        if self.top_scale > self.bottom_scale {
            return Err(Error::validation(format!(
                "top_scale {} exceeds bottom_scale {}",
                self.top_scale, self.bottom_scale
            )));
        }
        if 2.0 * self.margin >= self.width.min(self.height) as f64 {
            return Err(Error::validation(format!(
                "margin {} leaves no room in a {}x{} frame",
                self.margin, self.width, self.height
            )));
        }
        Ok(())
    }

    pub fn perspective(&self) -> Result<PerspectiveMap> {
        PerspectiveMap::linear_rows(self.width, self.height, self.top_scale, self.bottom_scale)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub images: Vec<GrayImage>,
    pub annotations: DotAnnotations,
    pub perspective: PerspectiveMap,
}

/// Reflects `x` into `[lo, hi]`, flipping `v` on each bounce.
fn reflect(mut x: f64, mut v: f64, lo: f64, hi: f64) -> (f64, f64) {
    let span = hi - lo;
    if span <= 0.0 {
        return (lo, v);
    }
    for _ in 0..64 {
        if x < lo {
            x = 2.0 * lo - x;
            v = -v;
        } else if x > hi {
            x = 2.0 * hi - x;
            v = -v;
        } else {
            break;
        }
    }
    (x.clamp(lo, hi), v)
}

/// Draws people at `points` into a fresh frame (before noise).
pub fn render_clean(
    points: &[Point2],
    cfg: &SceneConfig,
    perspective: &PerspectiveMap,
) -> Result<Vec<f64>> {
    let (w, h) = (cfg.width, cfg.height);
    let mut peak = vec![0.0f64; w * h];
    for p in points {
        let sigma = cfg.person_render_sigma * perspective.scale_at(p)?;
        let reach = RENDER_REACH * sigma;
        let r0 = (p.y - reach).floor().max(0.0) as usize;
        let r1 = ((p.y + reach).ceil().max(0.0) as usize).min(h);
        let c0 = (p.x - reach).floor().max(0.0) as usize;
        let c1 = ((p.x + reach).ceil().max(0.0) as usize).min(w);
        let denom = 2.0 * sigma * sigma;
        for r in r0..r1 {
            let dy = r as f64 + 0.5 - p.y;
            for c in c0..c1 {
                let dx = c as f64 + 0.5 - p.x;
                let v = BRIGHTNESS * (-(dx * dx + dy * dy) / denom).exp();
                let cell = &mut peak[r * w + c];
                *cell = cell.max(v);
            }
        }
    }
    Ok(peak.into_iter().map(|v| BACKGROUND + v).collect())
}

fn finish_frame(clean: Vec<f64>, cfg: &SceneConfig, rng: &mut ChaCha8Rng) -> Result<GrayImage> {
    let noise = Normal::new(0.0, cfg.noise_sigma).map_err(|e| Error::validation(e.to_string()))?;
    let pixels = clean
        .into_iter()
        .map(|v| {
            let n = if cfg.noise_sigma > 0.0 {
                noise.sample(rng)
            } else {
                0.0
            };
            (v + n).clamp(0.0, 1.0)
        })
        .collect();
    GrayImage::new(cfg.width, cfg.height, pixels)
}

fn assemble(tracks: Vec<Vec<Point2>>, cfg: &SceneConfig, rng: &mut ChaCha8Rng) -> Result<Scene> {
    let perspective = cfg.perspective()?;
    let ids: Vec<u64> = (0..tracks.len() as u64).collect();
    let mut images = Vec::with_capacity(cfg.n_frames);
    let mut frames = Vec::with_capacity(cfg.n_frames);
    for t in 0..cfg.n_frames {
        let points: Vec<Point2> = tracks.iter().map(|tr| tr[t]).collect();
        let clean = render_clean(&points, cfg, &perspective)?;
        images.push(finish_frame(clean, cfg, rng)?);
        frames.push(AnnotatedFrame::with_tracks(t as u64, points, ids.clone()));
    }
    Ok(Scene {
        images,
        annotations: DotAnnotations::new(cfg.width, cfg.height, frames)?,
        perspective,
    })
}

pub fn simulate_scene(cfg: &SceneConfig) -> Result<Scene> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (xlo, xhi) = (cfg.margin, cfg.width as f64 - cfg.margin);
    let (ylo, yhi) = (cfg.margin, cfg.height as f64 - cfg.margin);
    let jitter =
        Normal::new(0.0, JITTER * cfg.speed).map_err(|e| Error::validation(e.to_string()))?;
    let mut tracks = Vec::with_capacity(cfg.n_people);
    for _ in 0..cfg.n_people {
        let mut p = Point2::new(rng.random_range(xlo..xhi), rng.random_range(ylo..yhi));
        let angle = rng.random_range(0.0..std::f64::consts::TAU);
        let speed = cfg.speed * rng.random_range(0.5..1.5);
        let (mut vx, mut vy) = (speed * angle.cos(), speed * angle.sin());
        let mut track = Vec::with_capacity(cfg.n_frames);
        track.push(p);
        for _ in 1..cfg.n_frames {
            let (jx, jy) = if cfg.speed > 0.0 {
                (jitter.sample(&mut rng), jitter.sample(&mut rng))
            } else {
                (0.0, 0.0)
            };
            let (x, nvx) = reflect(p.x + vx + jx, vx, xlo, xhi);
            let (y, nvy) = reflect(p.y + vy + jy, vy, ylo, yhi);
            p = Point2::new(x, y);
            (vx, vy) = (nvx, nvy);
            track.push(p);
        }
        tracks.push(track);
    }
    assemble(tracks, cfg, &mut rng)
}

/// Frame at which the two people of [`scenario_distractor`] are closest.
pub fn closest_frame(n_frames: usize) -> usize {
    n_frames / 2
}

/// Two people passing each other: they move in opposite directions along
/// parallel lines `min_separation` apart (perpendicular offset), closest at
/// [`closest_frame`]. `n_people` is ignored; the speed is reduced if needed
/// to keep both inside the margins. No jitter and no reflection.
pub fn scenario_distractor(cfg: &SceneConfig) -> Result<Scene> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let center = Point2::new(
        cfg.width as f64 / 2.0 + rng.random_range(-0.5..0.5),
        cfg.height as f64 / 2.0 + rng.random_range(-0.5..0.5),
    );
    let perspective = cfg.perspective()?;
    let sigma = cfg.person_render_sigma * perspective.scale_at(&center)?;
    // pass within one blob diameter (blob edge taken at 2 sigma)
    let separation = rng.random_range(1.5..2.5) * sigma;
    let angle = rng.random_range(0.0..std::f64::consts::TAU);
    let (ux, uy) = (angle.cos(), angle.sin());
    let (nx, ny) = (-uy, ux);
    let tm = closest_frame(cfg.n_frames) as f64;
    let span = tm.max((cfg.n_frames - 1) as f64 - tm).max(1.0);
    // half-extent of the paths along each axis must fit inside the margins
    let room_x = cfg.width as f64 / 2.0 - cfg.margin - 1.0 - (separation / 2.0 * nx).abs();
    let room_y = cfg.height as f64 / 2.0 - cfg.margin - 1.0 - (separation / 2.0 * ny).abs();
    let mut speed = cfg.speed;
    if ux.abs() * speed * span > room_x {
        speed = room_x.max(0.0) / (ux.abs() * span);
    }
    if uy.abs() * speed * span > room_y {
        speed = room_y.max(0.0) / (uy.abs() * span);
    }
    let mut tracks = vec![
        Vec::with_capacity(cfg.n_frames),
        Vec::with_capacity(cfg.n_frames),
    ];
    for t in 0..cfg.n_frames {
        let s = speed * (t as f64 - tm);
        for (k, sign) in [1.0, -1.0].into_iter().enumerate() {
            let x = center.x + sign * (s * ux + separation / 2.0 * nx);
            let y = center.y + sign * (s * uy + separation / 2.0 * ny);
            tracks[k].push(Point2::new(x, y));
        }
    }
    assemble(tracks, cfg, &mut rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Raster;

    fn small() -> SceneConfig {
        SceneConfig {
            width: 64,
            height: 48,
            n_people: 3,
            n_frames: 6,
            seed: 5,
            ..SceneConfig::default()
        }
    }

    #[test]
    fn deterministic() {
        assert_eq!(
            simulate_scene(&small()).unwrap(),
            simulate_scene(&small()).unwrap()
        );
        let other = SceneConfig { seed: 6, ..small() };
        assert_ne!(
            simulate_scene(&small()).unwrap().annotations,
            simulate_scene(&other).unwrap().annotations
        );
    }

    #[test]
    fn no_people_is_noise_only() {
        let s = simulate_scene(&SceneConfig {
            n_people: 0,
            ..small()
        })
        .unwrap();
        assert!(s.annotations.frames.iter().all(|f| f.points.is_empty()));
        let mean = s.images[0].pixels().iter().sum::<f64>() / s.images[0].pixels().len() as f64;
        assert!((mean - BACKGROUND).abs() < 0.01);
    }

    #[test]
    fn static_single_frame_keeps_initial_positions() {
        let cfg = SceneConfig {
            n_frames: 1,
            speed: 0.0,
            ..small()
        };
        let s = simulate_scene(&cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let x = rng.random_range(cfg.margin..cfg.width as f64 - cfg.margin);
        let y = rng.random_range(cfg.margin..cfg.height as f64 - cfg.margin);
        assert_eq!(s.annotations.frames[0].points[0], Point2::new(x, y));
        let still = simulate_scene(&SceneConfig {
            n_frames: 4,
            speed: 0.0,
            ..small()
        })
        .unwrap();
        let f = &still.annotations.frames;
        assert!(f.iter().all(|fr| fr.points == f[0].points));
    }

    #[test]
    fn brightest_pixel_near_lone_person() {
        let cfg = SceneConfig {
            n_people: 1,
            noise_sigma: 0.0,
            ..small()
        };
        let s = simulate_scene(&cfg).unwrap();
        for (img, fr) in s.images.iter().zip(&s.annotations.frames) {
            let (i, _) = img
                .pixels()
                .iter()
                .enumerate()
                .fold((0, f64::MIN), |b, (i, &v)| if v > b.1 { (i, v) } else { b });
            let cell = Point2::cell_center(i / cfg.width, i % cfg.width);
            let p = fr.points[0];
            assert!((cell.x - p.x).abs() <= 1.0 && (cell.y - p.y).abs() <= 1.0);
        }
    }

    #[test]
    fn annotations_sit_on_local_maxima() {
        let cfg = SceneConfig {
            n_people: 4,
            n_frames: 10,
            width: 120,
            height: 90,
            ..small()
        };
        let s = simulate_scene(&cfg).unwrap();
        for fr in &s.annotations.frames {
            let clean = render_clean(&fr.points, &cfg, &s.perspective).unwrap();
            let (w, h) = (cfg.width as i64, cfg.height as i64);
            let at = |r: i64, c: i64| {
                if r < 0 || c < 0 || r >= h || c >= w {
                    f64::MIN
                } else {
                    clean[(r * w + c) as usize]
                }
            };
            for p in &fr.points {
                // skip people overlapping another's blob
                if fr.points.iter().any(|q| q != p && q.distance(p) < 12.0) {
                    continue;
                }
                let (pr, pc) = (p.y.floor() as i64, p.x.floor() as i64);
                let found = (pr - 1..=pr + 1).any(|r| {
                    (pc - 1..=pc + 1).any(|c| {
                        let v = at(r, c);
                        (-1..=1).all(|dr| (-1..=1).all(|dc| at(r + dr, c + dc) <= v))
                    })
                });
                assert!(found);
            }
        }
    }

    #[test]
    fn reflection_keeps_people_inside() {
        let cfg = SceneConfig {
            speed: 6.0,
            n_frames: 60,
            ..small()
        };
        let s = simulate_scene(&cfg).unwrap();
        for fr in &s.annotations.frames {
            assert_eq!(fr.points.len(), 3);
            for p in &fr.points {
                assert!(p.x >= cfg.margin && p.x <= cfg.width as f64 - cfg.margin);
                assert!(p.y >= cfg.margin && p.y <= cfg.height as f64 - cfg.margin);
            }
        }
        assert_eq!(reflect(11.0, 1.0, 0.0, 10.0), (9.0, -1.0));
        assert_eq!(reflect(-2.0, -1.0, 0.0, 10.0), (2.0, 1.0));
    }

    #[test]
    fn distractor_closest_at_midpoint() {
        for seed in 0..10 {
            let cfg = SceneConfig {
                n_frames: 41,
                speed: 2.0,
                seed,
                ..SceneConfig::default()
            };
            let s = scenario_distractor(&cfg).unwrap();
            let d: Vec<f64> = s
                .annotations
                .frames
                .iter()
                .map(|f| f.points[0].distance(&f.points[1]))
                .collect();
            let argmin = (0..d.len()).min_by(|&a, &b| d[a].total_cmp(&d[b])).unwrap();
            assert!(argmin.abs_diff(closest_frame(41)) <= 1);
            assert!(s
                .annotations
                .frames
                .iter()
                .all(|f| f.track_ids == Some(vec![0, 1])));
            let sigma = cfg.person_render_sigma
                * s.perspective
                    .scale_at(&s.annotations.frames[20].points[0])
                    .unwrap();
            assert!(d[argmin] <= 4.0 * sigma);
            assert!(d[0] > 4.0 * sigma);
            assert_eq!(s.images[0].width(), cfg.width);
        }
    }
}

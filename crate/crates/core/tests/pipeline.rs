use densemap::detection::{
    default_tau, detect_gmm, detect_intprog, detect_local_max, read_detections, write_detections,
    GmmDetectOptions, IntProgConfig, LocalMaxOptions, Method,
};
use densemap::estimator::{predict_density, train_on_frames, TrainOptions};
use densemap::io::{
    parse_annotations, read_density, read_pgm, write_annotations, write_pgm, write_raster,
};
use densemap::metrics::{count_errors, game, match_detections, prf};
use densemap::simulator::{scenario_distractor, simulate_scene, SceneConfig};
use densemap::synthesis::{synthesize_density, SynthesisConfig};
use densemap::tracking::{run_tracker, TrackerConfig};
use densemap::{DensityMap, Raster, RoiMask};

fn scene(n_people: usize, n_frames: usize, seed: u64) -> SceneConfig {
    SceneConfig {
        n_people,
        n_frames,
        seed,
        ..SceneConfig::default()
    }
}

#[test]
fn simulate_synthesize_detect_evaluate_through_files() {
    let cfg = scene(15, 4, 31);
    let sc = simulate_scene(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let ann_path = dir.path().join("annotations.json");
    write_annotations(&sc.annotations, &ann_path).unwrap();
    let ann = parse_annotations(&ann_path).unwrap();
    assert_eq!(ann, sc.annotations);

    let synth = SynthesisConfig::fixed(4.0);
    let mut sets = Vec::new();
    for (frame, img) in ann.frames.iter().zip(&sc.images) {
        let img_path = dir.path().join(format!("frame_{}.pgm", frame.id));
        write_pgm(img, &img_path).unwrap();
        assert_eq!(read_pgm(&img_path).unwrap().width(), cfg.width);

        let gt = synthesize_density(&ann, frame.id, &synth, cfg.width, cfg.height).unwrap();
        let dmf = dir.path().join(format!("frame_{}.dmf", frame.id));
        write_raster(&gt, &dmf).unwrap();
        let gt = read_density(&dmf).unwrap();
        assert!((gt.sum() - frame.points.len() as f64).abs() < 1e-3);

        let det = detect_intprog(&gt, &IntProgConfig::for_sigma(4.0))
            .unwrap()
            .with_frame(frame.id);
        let m = match_detections(&det.points, &frame.points, 4.0).unwrap();
        let s = prf(&m, det.len(), frame.points.len());
        assert!(s.f1 >= 0.9, "frame {} f1 {}", frame.id, s.f1);
        sets.push(det);
    }
    let det_path = dir.path().join("detections.json");
    write_detections(&det_path, cfg.width, cfg.height, Method::Intprog, &sets).unwrap();
    let (w, h, back) = read_detections(&det_path).unwrap();
    assert_eq!((w, h), (cfg.width, cfg.height));
    assert_eq!(back.len(), sets.len());
    for (a, b) in back.iter().zip(&sets) {
        assert_eq!(a.points.len(), b.points.len());
        for (p, q) in a.points.iter().zip(&b.points) {
            assert!(p.distance(q) < 1e-9);
        }
    }
}

#[test]
fn ground_truth_maps_count_the_people() {
    for seed in 0..5 {
        let cfg = scene(10 + 5 * seed as usize, 3, 100 + seed);
        let sc = simulate_scene(&cfg).unwrap();
        let roi = RoiMask::full(cfg.width, cfg.height);
        for f in &sc.annotations.frames {
            let gt = synthesize_density(
                &sc.annotations,
                f.id,
                &SynthesisConfig::fixed(4.0),
                cfg.width,
                cfg.height,
            )
            .unwrap()
            .with_roi(roi.clone())
            .unwrap();
            assert!((gt.sum() - cfg.n_people as f64).abs() < 1e-6);
            // a map against itself has no error at any level
            for level in 0..4 {
                assert_eq!(game(&gt, &gt, level).unwrap(), 0.0);
            }
        }
    }
}

#[test]
fn distractor_pair_is_resolved_before_crossing() {
    for seed in 0..8 {
        let cfg = SceneConfig {
            n_frames: 40,
            seed,
            ..SceneConfig::default()
        };
        let sc = scenario_distractor(&cfg).unwrap();
        let first = &sc.annotations.frames[0];
        assert_eq!(first.points.len(), 2);
        let gt = synthesize_density(
            &sc.annotations,
            first.id,
            &SynthesisConfig::fixed(4.0),
            cfg.width,
            cfg.height,
        )
        .unwrap();
        let detectors = [
            detect_intprog(&gt, &IntProgConfig::for_sigma(4.0)).unwrap(),
            detect_gmm(&gt, &GmmDetectOptions::new(default_tau(4.0), true, seed)).unwrap(),
            detect_local_max(&gt, &LocalMaxOptions::for_sigma(4.0)),
        ];
        for det in &detectors {
            let m = match_detections(&det.points, &first.points, 4.0).unwrap();
            assert_eq!(m.true_positives(), 2, "seed {seed} {:?}", det.method);
        }
    }
}

#[test]
fn ridge_estimator_counts_held_out_frames() {
    let cfg = scene(20, 12, 7);
    let sc = simulate_scene(&cfg).unwrap();
    let synth = SynthesisConfig::fixed(4.0);
    let pairs: Vec<_> = sc
        .annotations
        .frames
        .iter()
        .zip(&sc.images)
        .map(|(f, img)| {
            let gt =
                synthesize_density(&sc.annotations, f.id, &synth, cfg.width, cfg.height).unwrap();
            (img.clone(), gt)
        })
        .collect();
    let (train, test) = pairs.split_at(8);
    let opts = TrainOptions {
        sample_stride: 2,
        ..TrainOptions::default()
    };
    let model = train_on_frames(train, None, &opts).unwrap();
    let roi = RoiMask::full(cfg.width, cfg.height);
    let pred: Vec<f64> = test
        .iter()
        .map(|(img, _)| predict_density(&model, img, &roi).unwrap().sum())
        .collect();
    let truth: Vec<f64> = test.iter().map(|(_, gt)| gt.sum()).collect();
    let err = count_errors(&pred, &truth).unwrap();
    assert!(err.mae < 2.0, "mae {}", err.mae);
}

#[test]
fn tracker_follows_a_lone_person() {
    let cfg = SceneConfig {
        n_people: 1,
        n_frames: 30,
        seed: 3,
        speed: 1.5,
        ..SceneConfig::default()
    };
    let sc = simulate_scene(&cfg).unwrap();
    let truth: Vec<_> = sc.annotations.frames.iter().map(|f| f.points[0]).collect();
    let maps: Vec<DensityMap> = sc
        .annotations
        .frames
        .iter()
        .map(|f| {
            synthesize_density(
                &sc.annotations,
                f.id,
                &SynthesisConfig::fixed(4.0),
                cfg.width,
                cfg.height,
            )
            .unwrap()
        })
        .collect();
    for densities in [None, Some(maps.as_slice())] {
        let path = run_tracker(&sc.images, densities, truth[0], &TrackerConfig::default()).unwrap();
        assert_eq!(path.len(), truth.len());
        for (t, (p, g)) in path.iter().zip(&truth).enumerate() {
            assert!(p.distance(g) <= 4.0, "frame {t}: {p:?} vs {g:?}");
        }
    }
}

//! Random desk-scale datasets with planted boxes and known membership, so
//! every pipeline can run without a KITTI download.
//!
//! Boxes stand on a flat ground plane in front of the sensor and never
//! overlap in bird's-eye view. Foreground points are drawn inside the boxes;
//! background points are drawn over the ground and the surroundings and
//! rejected when they land inside a box. All coordinates are rounded to
//! `f32` so scenes survive a velodyne round trip unchanged.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{bev_intersection_area, Annotation, Difficulty, Dims, LabelMeta, Point, PointCloud, Scene};
use crate::kitti_io::Calibration;
use crate::rng::scene_seed;

/// Height of the ground plane in the LiDAR frame, meters.
pub const GROUND_Z: f64 = -1.73;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub scenes: usize,
    pub points_per_scene: usize,
    pub min_boxes: usize,
    pub max_boxes: usize,
    /// Share of the points placed inside boxes.
    pub foreground_fraction: f64,
    pub with_calib: bool,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            scenes: 8,
            points_per_scene: 20_000,
            min_boxes: 4,
            max_boxes: 10,
            foreground_fraction: 0.07,
            with_calib: true,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_boxes > self.max_boxes {
            return Err(Error::invalid("min_boxes", "exceeds max_boxes"));
        }
        crate::aug_global::check_range("foreground_fraction", self.foreground_fraction, 0.0, 1.0, false)
    }
}

const CLASSES: [(&str, f64, [f64; 3]); 3] = [
    // class, weight, mean (w, l, h)
    ("Car", 0.8, [1.62, 3.89, 1.53]),
    ("Pedestrian", 0.12, [0.66, 0.84, 1.76]),
    ("Cyclist", 0.08, [0.60, 1.76, 1.74]),
];

const DIFFICULTIES: [(Difficulty, f64); 4] = [
    (Difficulty::Easy, 0.35),
    (Difficulty::Moderate, 0.3),
    (Difficulty::Hard, 0.2),
    (Difficulty::Unknown, 0.15),
];

fn pick<'a, T, R: Rng + ?Sized>(items: &'a [T], weight: impl Fn(&T) -> f64, rng: &mut R) -> &'a T {
    let total: f64 = items.iter().map(&weight).sum();
    let mut u = rng.random::<f64>() * total;
    for item in items {
        u -= weight(item);
        if u < 0.0 {
            return item;
        }
    }
    items.last().unwrap()
}

fn f32_round(v: f64) -> f64 {
    v as f32 as f64
}

fn random_box<R: Rng + ?Sized>(rng: &mut R) -> Annotation {
    let (class, _, mean) = *pick(&CLASSES, |c| c.1, rng);
    let jitter = |m: f64, rng: &mut R| f32_round(m * rng.random_range(0.9..1.1));
    let dims = Dims::new(jitter(mean[0], rng), jitter(mean[1], rng), jitter(mean[2], rng));
    let x = rng.random_range(6.0..55.0);
    // stay within the camera's horizontal field of view
    let y = rng.random_range(-0.6..0.6) * x;
    let center = [f32_round(x), f32_round(y), f32_round(GROUND_Z + dims.h / 2.0)];
    let yaw = f32_round(rng.random_range(0.0..std::f64::consts::TAU));
    let difficulty = pick(&DIFFICULTIES, |d| d.1, rng).0;
    let mut a = Annotation::new(class, center, dims, yaw)
        .expect("generated box is valid")
        .with_difficulty(difficulty);
    a.meta = Some(LabelMeta::for_difficulty(difficulty));
    a
}

/// One scene drawn from `rng`.
pub fn synthetic_scene<R: Rng + ?Sized>(scene_id: &str, cfg: &SyntheticConfig, rng: &mut R) -> Scene {
    let want = rng.random_range(cfg.min_boxes..=cfg.max_boxes);
    let mut boxes: Vec<Annotation> = Vec::with_capacity(want);
    for _ in 0..want * 20 {
        if boxes.len() == want {
            break;
        }
        let candidate = random_box(rng);
        if boxes.iter().all(|b| bev_intersection_area(&candidate, b) == 0.0) {
            boxes.push(candidate);
        }
    }

    let foreground = if boxes.is_empty() {
        0
    } else {
        (cfg.points_per_scene as f64 * cfg.foreground_fraction).round() as usize
    };
    let mut points = Vec::with_capacity(cfg.points_per_scene);
    // one box in five is sparse, so point-count filters have something to do
    let weights: Vec<f64> = (0..boxes.len())
        .map(|_| if rng.random_bool(0.2) { 0.02 } else { 1.0 })
        .collect();
    let weight_sum: f64 = weights.iter().sum();
    for (a, w) in boxes.iter().zip(&weights) {
        let n = ((foreground as f64) * w / weight_sum).round() as usize;
        let frame = a.frame();
        let half = [a.dims.l / 2.0 * 0.97, a.dims.w / 2.0 * 0.97, a.dims.h / 2.0 * 0.97];
        for _ in 0..n {
            let local = [
                rng.random_range(-half[0]..half[0]),
                rng.random_range(-half[1]..half[1]),
                rng.random_range(-half[2]..half[2]),
            ];
            let [x, y, z] = frame.to_world(local);
            points.push(Point::new(
                f32_round(x),
                f32_round(y),
                f32_round(z),
                f32_round(rng.random::<f64>()),
            ));
        }
    }

    let frames: Vec<_> = boxes.iter().map(|a| a.frame()).collect();
    while points.len() < cfg.points_per_scene {
        let (x, y, z) = if rng.random_bool(0.6) {
            // ground returns
            let x = rng.random_range(-20.0..70.0);
            let y = rng.random_range(-40.0..40.0);
            (x, y, GROUND_Z + rng.random_range(-0.05..0.05))
        } else {
            // walls, vegetation, poles
            (
                rng.random_range(-20.0..70.0),
                rng.random_range(-40.0..40.0),
                rng.random_range(GROUND_Z..2.5),
            )
        };
        let p = Point::new(f32_round(x), f32_round(y), f32_round(z), f32_round(rng.random::<f64>()));
        if frames.iter().any(|f| f.contains(p.xyz(), 0.02)) {
            continue;
        }
        points.push(p);
    }

    let mut scene = Scene::new(scene_id, PointCloud::new(points), boxes);
    if cfg.with_calib {
        scene.calib = Some(Calibration::reference());
    }
    scene
}

/// Scenes `000000`, `000001`, …, each drawn from its own stream of
/// `cfg.seed`, so a scene does not depend on how many others are generated.
pub fn synthetic_dataset(cfg: &SyntheticConfig) -> Vec<Scene> {
    (0..cfg.scenes)
        .map(|i| {
            let id = format!("{i:06}");
            let mut rng = ChaCha8Rng::seed_from_u64(scene_seed(cfg.seed, &id));
            synthetic_scene(&id, cfg, &mut rng)
        })
        .collect()
}

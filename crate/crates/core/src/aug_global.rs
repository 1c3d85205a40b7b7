//! Scene-level augmentations. Each transform moves the whole cloud and every
//! annotation together; only ground removal drops points.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{self, Scene, YawMode};

/// Per-axis standard deviation of the translation, meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GlobalTranslateParams {
    pub sigma: f64,
}

/// Half-width of the uniform yaw range, radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GlobalRotateParams {
    pub beta: f64,
}

/// Half-width `t` of the uniform scale range `[1 − t, 1 + t]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GlobalScaleParams {
    pub t: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlipParams {
    #[serde(default = "default_flip_probability")]
    pub probability: f64,
    #[serde(default)]
    pub yaw_mode: YawMode,
}

fn default_flip_probability() -> f64 {
    0.5
}

impl Default for FlipParams {
    fn default() -> Self {
        FlipParams {
            probability: default_flip_probability(),
            yaw_mode: YawMode::Mirror,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundRemovalParams {
    pub percentile: f64,
    #[serde(default = "default_true")]
    pub apply_at_test: bool,
}

fn default_true() -> bool {
    true
}

impl GroundRemovalParams {
    pub fn new(percentile: f64) -> Self {
        GroundRemovalParams {
            percentile,
            apply_at_test: true,
        }
    }
}

pub(crate) fn check_range(name: &'static str, value: f64, lo: f64, hi: f64, hi_inclusive: bool) -> Result<()> {
    let ok = value.is_finite() && value >= lo && if hi_inclusive { value <= hi } else { value < hi };
    if ok {
        Ok(())
    } else {
        let close = if hi_inclusive { ']' } else { ')' };
        Err(Error::invalid(name, format!("{value} outside [{lo}, {hi}{close}")))
    }
}

impl GlobalTranslateParams {
    pub fn validate(&self) -> Result<()> {
        check_range("sigma", self.sigma, 0.0, f64::MAX, true)
    }
}

impl GlobalRotateParams {
    pub fn validate(&self) -> Result<()> {
        check_range("beta", self.beta, 0.0, PI, true)
    }
}

impl GlobalScaleParams {
    pub fn validate(&self) -> Result<()> {
        check_range("t", self.t, 0.0, 1.0, false)
    }
}

impl FlipParams {
    pub fn validate(&self) -> Result<()> {
        check_range("probability", self.probability, 0.0, 1.0, true)
    }
}

impl GroundRemovalParams {
    pub fn validate(&self) -> Result<()> {
        check_range("percentile", self.percentile, 0.0, 100.0, true)
    }
}

/// Independent `N(0, σ²)` offsets for x, y, z.
pub fn draw_translation<R: Rng + ?Sized>(sigma: f64, rng: &mut R) -> [f64; 3] {
    if sigma == 0.0 {
        return [0.0; 3];
    }
    let normal = Normal::new(0.0, sigma).expect("sigma validated as finite and non-negative");
    [normal.sample(rng), normal.sample(rng), normal.sample(rng)]
}

/// `α ~ U(−β, β)`.
pub fn draw_angle<R: Rng + ?Sized>(beta: f64, rng: &mut R) -> f64 {
    if beta == 0.0 {
        return 0.0;
    }
    rng.random_range(-beta..=beta)
}

/// `s ~ U(1 − t, 1 + t)`.
pub fn draw_scale<R: Rng + ?Sized>(t: f64, rng: &mut R) -> f64 {
    if t == 0.0 {
        return 1.0;
    }
    rng.random_range(1.0 - t..=1.0 + t)
}

pub fn global_translate<R: Rng + ?Sized>(scene: Scene, params: &GlobalTranslateParams, rng: &mut R) -> Scene {
    let delta = draw_translation(params.sigma, rng);
    scene.map_geometry(|c, a| geom::translate(c, a, delta))
}

pub fn global_rotate<R: Rng + ?Sized>(scene: Scene, params: &GlobalRotateParams, rng: &mut R) -> Scene {
    let alpha = draw_angle(params.beta, rng);
    if alpha == 0.0 {
        return scene;
    }
    scene.map_geometry(|c, a| geom::rotate_z(c, a, alpha))
}

pub fn global_scale<R: Rng + ?Sized>(scene: Scene, params: &GlobalScaleParams, rng: &mut R) -> Scene {
    let s = draw_scale(params.t, rng);
    if s == 1.0 {
        return scene;
    }
    scene.map_geometry(|c, a| geom::scale(c, a, s).expect("drawn scale is positive"))
}

/// Flips about the forward x axis with the configured probability. There is
/// no flip about the y axis: labels only exist in the forward camera view.
pub fn random_flip<R: Rng + ?Sized>(scene: Scene, params: &FlipParams, rng: &mut R) -> Scene {
    if params.probability > 0.0 && rng.random_bool(params.probability) {
        scene.map_geometry(|c, a| geom::flip_y(c, a, params.yaw_mode))
    } else {
        scene
    }
}

/// Nearest-rank percentile: the value at 1-indexed rank `ceil(q/100 · n)` of
/// the ascending order. `None` for `q = 0` or an empty slice. Reorders `values`.
pub fn nearest_rank(values: &mut [f64], q: f64) -> Option<f64> {
    let n = values.len();
    if n == 0 || q <= 0.0 {
        return None;
    }
    // q·n first keeps integer percentiles exact before the division
    let rank = ((q * n as f64) / 100.0).ceil().clamp(1.0, n as f64) as usize;
    let (_, nth, _) = values.select_nth_unstable_by(rank - 1, f64::total_cmp);
    Some(*nth)
}

/// Removes every point whose z is strictly below the nearest-rank z
/// percentile of the cloud. Annotations are left alone.
pub fn ground_removal(mut scene: Scene, params: &GroundRemovalParams) -> Result<Scene> {
    if params.percentile <= 0.0 {
        return Ok(scene);
    }
    if scene.cloud.is_empty() {
        return Err(Error::EmptyScene);
    }
    let mut z: Vec<f64> = scene.cloud.points.iter().map(|p| p.z).collect();
    let threshold = nearest_rank(&mut z, params.percentile).expect("cloud is non-empty");
    scene.cloud.points.retain(|p| p.z >= threshold);
    Ok(scene)
}

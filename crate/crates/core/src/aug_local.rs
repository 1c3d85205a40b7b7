//! Per-object augmentations. Every annotation gets its own random draw and
//! moves together with the points inside it; all other points stay put.
//!
//! Membership is evaluated once, before any box moves. Annotation `i` draws
//! from a generator seeded by the `i`-th `u64` of the step stream, so its
//! draw does not depend on how many values earlier draws consumed.

use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::aug_global::{check_range, draw_angle, draw_scale, draw_translation};
use crate::error::Result;
use crate::geom::{normalize_angle, BoxFrame, Dims, Scene};
use crate::rng::StepRng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocalTranslateParams {
    pub sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocalRotateParams {
    pub beta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocalScaleParams {
    pub t: f64,
}

impl LocalTranslateParams {
    pub fn validate(&self) -> Result<()> {
        check_range("sigma", self.sigma, 0.0, f64::MAX, true)
    }
}

impl LocalRotateParams {
    pub fn validate(&self) -> Result<()> {
        check_range("beta", self.beta, 0.0, std::f64::consts::PI, true)
    }
}

impl LocalScaleParams {
    pub fn validate(&self) -> Result<()> {
        check_range("t", self.t, 0.0, 1.0, false)
    }
}

/// Indices of the member points of every annotation.
pub fn member_lists(scene: &Scene) -> Vec<Vec<usize>> {
    let frames: Vec<BoxFrame> = scene.annotations.iter().map(|a| a.frame()).collect();
    let mut lists = vec![Vec::new(); frames.len()];
    if frames.is_empty() {
        return lists;
    }
    for (i, p) in scene.cloud.points.iter().enumerate() {
        let xyz = p.xyz();
        for (list, frame) in lists.iter_mut().zip(&frames) {
            if frame.contains(xyz, 0.0) {
                list.push(i);
            }
        }
    }
    lists
}

fn per_annotation<R, T, F>(count: usize, rng: &mut R, mut draw: F) -> Vec<T>
where
    R: Rng + ?Sized,
    F: FnMut(&mut StepRng) -> T,
{
    (0..count)
        .map(|_| {
            let mut sub = StepRng::seed_from_u64(rng.next_u64());
            draw(&mut sub)
        })
        .collect()
}

pub fn draw_local_translations<R: Rng + ?Sized>(
    count: usize,
    params: &LocalTranslateParams,
    rng: &mut R,
) -> Vec<[f64; 3]> {
    per_annotation(count, rng, |r| draw_translation(params.sigma, r))
}

pub fn draw_local_angles<R: Rng + ?Sized>(count: usize, params: &LocalRotateParams, rng: &mut R) -> Vec<f64> {
    per_annotation(count, rng, |r| draw_angle(params.beta, r))
}

pub fn draw_local_scales<R: Rng + ?Sized>(count: usize, params: &LocalScaleParams, rng: &mut R) -> Vec<f64> {
    per_annotation(count, rng, |r| draw_scale(params.t, r))
}

/// Shifts annotation `i` and its member points by `deltas[i]`.
pub fn apply_local_translation(mut scene: Scene, deltas: &[[f64; 3]]) -> Scene {
    assert_eq!(deltas.len(), scene.annotations.len(), "one offset per annotation");
    let members = member_lists(&scene);
    for ((a, idx), d) in scene.annotations.iter_mut().zip(&members).zip(deltas) {
        if *d == [0.0; 3] {
            continue;
        }
        for &i in idx {
            let p = &mut scene.cloud.points[i];
            p.x += d[0];
            p.y += d[1];
            p.z += d[2];
        }
        for (c, dk) in a.center.iter_mut().zip(d) {
            *c += dk;
        }
    }
    scene
}

/// Rotates annotation `i` by `angles[i]` about the vertical axis through its
/// center, taking its member points along.
pub fn apply_local_rotation(mut scene: Scene, angles: &[f64]) -> Scene {
    assert_eq!(angles.len(), scene.annotations.len(), "one angle per annotation");
    let members = member_lists(&scene);
    for ((a, idx), &alpha) in scene.annotations.iter_mut().zip(&members).zip(angles) {
        if alpha == 0.0 {
            continue;
        }
        let (s, c) = alpha.sin_cos();
        let [cx, cy, _] = a.center;
        for &i in idx {
            let p = &mut scene.cloud.points[i];
            let (dx, dy) = (p.x - cx, p.y - cy);
            p.x = cx + dx * c - dy * s;
            p.y = cy + dx * s + dy * c;
        }
        a.yaw = normalize_angle(a.yaw + alpha);
    }
    scene
}

/// Scales annotation `i` and its member points by `factors[i]` about the box
/// center. The center stays fixed.
pub fn apply_local_scaling(mut scene: Scene, factors: &[f64]) -> Scene {
    assert_eq!(factors.len(), scene.annotations.len(), "one factor per annotation");
    let members = member_lists(&scene);
    for ((a, idx), &s) in scene.annotations.iter_mut().zip(&members).zip(factors) {
        if s == 1.0 {
            continue;
        }
        let c = a.center;
        for &i in idx {
            let p = &mut scene.cloud.points[i];
            p.x = c[0] + (p.x - c[0]) * s;
            p.y = c[1] + (p.y - c[1]) * s;
            p.z = c[2] + (p.z - c[2]) * s;
        }
        a.dims = Dims::new(a.dims.w * s, a.dims.l * s, a.dims.h * s);
    }
    scene
}

pub fn local_translate<R: Rng + ?Sized>(scene: Scene, params: &LocalTranslateParams, rng: &mut R) -> Scene {
    let deltas = draw_local_translations(scene.annotations.len(), params, rng);
    apply_local_translation(scene, &deltas)
}

pub fn local_rotate<R: Rng + ?Sized>(scene: Scene, params: &LocalRotateParams, rng: &mut R) -> Scene {
    let angles = draw_local_angles(scene.annotations.len(), params, rng);
    apply_local_rotation(scene, &angles)
}

pub fn local_scale<R: Rng + ?Sized>(scene: Scene, params: &LocalScaleParams, rng: &mut R) -> Scene {
    let factors = draw_local_scales(scene.annotations.len(), params, rng);
    apply_local_scaling(scene, &factors)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{points_in_box, Annotation, Point, PointCloud};
    use crate::rng::step_rng;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn car(center: [f64; 3], yaw: f64) -> Annotation {
        Annotation::new("Car", center, Dims::new(2.0, 4.0, 2.0), yaw).unwrap()
    }

    /// Two well separated boxes, a few members each, and background points
    /// far from both.
    fn scene() -> Scene {
        let mut pts = vec![
            Point::new(10.5, 0.2, 0.1, 0.1),
            Point::new(9.2, -0.5, -0.4, 0.2),
            Point::new(11.0, 0.7, 0.3, 0.3),
            Point::new(-20.0, 5.0, 0.0, 0.4),
        ];
        pts.extend((0..4).map(|k| Point::new(-10.0 + 0.4 * k as f64, 10.0 + 0.2 * k as f64, 0.2, 0.5)));
        pts.push(Point::new(0.0, -30.0, 1.0, 0.6));
        Scene::new(
            "loc",
            PointCloud::new(pts),
            vec![car([10.0, 0.0, 0.0], 0.0), car([-9.5, 10.3, 0.0], 1.0)],
        )
    }

    fn masks(s: &Scene) -> Vec<Vec<bool>> {
        s.annotations.iter().map(|a| points_in_box(&s.cloud, a, 0.0)).collect()
    }

    #[test]
    fn zero_parameters_are_identity() {
        let s = scene();
        let mut rng = step_rng(1, 1);
        assert_eq!(
            local_translate(s.clone(), &LocalTranslateParams { sigma: 0.0 }, &mut rng),
            s
        );
        assert_eq!(local_rotate(s.clone(), &LocalRotateParams { beta: 0.0 }, &mut rng), s);
        assert_eq!(local_scale(s.clone(), &LocalScaleParams { t: 0.0 }, &mut rng), s);
    }

    #[test]
    fn forced_translation_moves_only_members() {
        let s = scene();
        let out = apply_local_translation(s.clone(), &[[0.5, 0.0, 0.0], [0.0; 3]]);
        for i in 0..3 {
            assert_abs_diff_eq!(out.cloud.points[i].x, s.cloud.points[i].x + 0.5, epsilon = 1e-12);
            assert_eq!(out.cloud.points[i].y, s.cloud.points[i].y);
        }
        assert_eq!(&out.cloud.points[3..], &s.cloud.points[3..]);
        assert_eq!(out.annotations[0].center, [10.5, 0.0, 0.0]);
        assert_eq!(out.annotations[1], s.annotations[1]);
    }

    #[test]
    fn forced_rotation_about_center() {
        let s = Scene::new(
            "r",
            PointCloud::new(vec![Point::new(11.0, 0.0, 0.0, 0.0), Point::new(0.0, 0.0, 0.0, 0.0)]),
            vec![car([10.0, 0.0, 0.0], 0.0)],
        );
        let out = apply_local_rotation(s, &[FRAC_PI_2]);
        assert_abs_diff_eq!(out.cloud.points[0].x, 10.0, epsilon = 1e-12);
        assert_abs_diff_eq!(out.cloud.points[0].y, 1.0, epsilon = 1e-12);
        assert_eq!(out.cloud.points[1], Point::new(0.0, 0.0, 0.0, 0.0));
        assert_eq!(out.annotations[0].center, [10.0, 0.0, 0.0]);
        assert_abs_diff_eq!(out.annotations[0].yaw, FRAC_PI_2, epsilon = 1e-12);
    }

    #[test]
    fn forced_scaling_about_center() {
        let s = Scene::new(
            "s",
            PointCloud::new(vec![Point::new(11.0, 0.0, 0.0, 0.0)]),
            vec![car([10.0, 0.0, 0.0], 0.0)],
        );
        let out = apply_local_scaling(s, &[1.1]);
        assert_abs_diff_eq!(out.cloud.points[0].x, 11.1, epsilon = 1e-12);
        assert_eq!(out.annotations[0].center, [10.0, 0.0, 0.0]);
        assert_abs_diff_eq!(out.annotations[0].dims.l, 4.4, epsilon = 1e-12);
        assert_abs_diff_eq!(out.annotations[0].dims.w, 2.2, epsilon = 1e-12);
        assert_abs_diff_eq!(out.annotations[0].dims.h, 2.2, epsilon = 1e-12);
    }

    #[test]
    fn rotation_and_scaling_preserve_membership() {
        let s = scene();
        let before = masks(&s);
        let mut rng = step_rng(2, 1);
        for _ in 0..50 {
            let out = local_rotate(s.clone(), &LocalRotateParams { beta: PI / 4.0 }, &mut rng);
            assert_eq!(masks(&out), before);
            let out = local_scale(s.clone(), &LocalScaleParams { t: 0.25 }, &mut rng);
            assert_eq!(masks(&out), before);
        }
    }

    #[test]
    fn non_members_are_bit_identical() {
        let s = scene();
        let members = member_lists(&s);
        let mut rng = step_rng(3, 1);
        let outs = [
            local_translate(s.clone(), &LocalTranslateParams { sigma: 1.0 }, &mut rng),
            local_rotate(s.clone(), &LocalRotateParams { beta: PI / 4.0 }, &mut rng),
            local_scale(s.clone(), &LocalScaleParams { t: 0.25 }, &mut rng),
        ];
        for out in outs {
            for i in 0..s.cloud.len() {
                if !members.iter().any(|m| m.contains(&i)) {
                    assert_eq!(out.cloud.points[i], s.cloud.points[i]);
                }
            }
        }
    }

    #[test]
    fn draws_are_reproducible_and_per_annotation() {
        let params = LocalTranslateParams { sigma: 0.25 };
        let a = draw_local_translations(2, &params, &mut step_rng(42, 3));
        let b = draw_local_translations(2, &params, &mut step_rng(42, 3));
        assert_eq!(a, b);
        assert_ne!(a[0], a[1]);
        // more annotations do not change the draws of the first ones
        let c = draw_local_translations(5, &params, &mut step_rng(42, 3));
        assert_eq!(&c[..2], &a[..]);
    }
}

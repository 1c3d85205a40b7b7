//! Core geometry: points, oriented boxes, transforms, membership and IoU.
//!
//! Conventions used throughout the crate:
//!
//! * Coordinates are in the LiDAR frame: +x forward, +y left, +z up, meters.
//! * A box yaw of 0 points its length axis along +x. Positive yaw rotates
//!   counter-clockwise seen from above (right-handed about +z).
//! * [`Annotation::center`] is the volumetric center of the box. KITTI's
//!   bottom-center convention only exists inside [`crate::kitti_io`].
//! * Yaw angles are kept in `[0, 2π)`.
//! * Boxes are closed: points on a face count as inside.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kitti_io::{Calibration, RawLabel};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub intensity: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64, z: f64, intensity: f64) -> Self {
        Point { x, y, z, intensity }
    }

    pub fn xyz(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite() && self.intensity.is_finite()
    }
}

/// Ordered point sequence. Transforms that keep every point map index `i` to
/// index `i`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PointCloud {
    pub points: Vec<Point>,
}

impl PointCloud {
    pub fn new(points: Vec<Point>) -> Self {
        PointCloud { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Keeps the points whose mask entry is true, preserving order.
    pub fn retain_mask(&mut self, mask: &[bool]) {
        debug_assert_eq!(mask.len(), self.points.len());
        let mut i = 0;
        self.points.retain(|_| {
            let keep = mask[i];
            i += 1;
            keep
        });
    }
}

impl From<Vec<Point>> for PointCloud {
    fn from(points: Vec<Point>) -> Self {
        PointCloud { points }
    }
}

/// KITTI difficulty tier. The derived ordering runs from easiest to hardest,
/// with `Unknown` last.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Difficulty {
    Easy,
    Moderate,
    Hard,
    Unknown,
}

impl Difficulty {
    pub const ALL: [Difficulty; 4] = [
        Difficulty::Easy,
        Difficulty::Moderate,
        Difficulty::Hard,
        Difficulty::Unknown,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Difficulty::Easy => "easy",
            Difficulty::Moderate => "moderate",
            Difficulty::Hard => "hard",
            Difficulty::Unknown => "unknown",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "easy" => Some(Difficulty::Easy),
            "moderate" => Some(Difficulty::Moderate),
            "hard" => Some(Difficulty::Hard),
            "unknown" => Some(Difficulty::Unknown),
            _ => None,
        }
    }
}

impl std::fmt::Display for Difficulty {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Box extents in meters: `w` across the heading, `l` along it, `h` vertical.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dims {
    pub w: f64,
    pub l: f64,
    pub h: f64,
}

impl Dims {
    pub const fn new(w: f64, l: f64, h: f64) -> Self {
        Dims { w, l, h }
    }

    pub fn volume(&self) -> f64 {
        self.w * self.l * self.h
    }
}

/// Original KITTI label fields that have no meaning in the LiDAR frame but are
/// needed to write labels back and to assign difficulty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelMeta {
    pub truncation: f64,
    pub occlusion: i32,
    pub alpha: f64,
    /// 2D box `[left, top, right, bottom]` in pixels.
    pub bbox: [f64; 4],
    pub score: Option<f64>,
}

impl LabelMeta {
    /// Image-side fields that reproduce `difficulty` under the KITTI tier
    /// thresholds. Used for boxes that never came from a label file.
    pub fn for_difficulty(difficulty: Difficulty) -> Self {
        let (height, occlusion, truncation) = match difficulty {
            Difficulty::Easy => (60.0, 0, 0.0),
            Difficulty::Moderate => (32.0, 1, 0.2),
            Difficulty::Hard => (28.0, 2, 0.4),
            Difficulty::Unknown => (10.0, 3, 0.9),
        };
        LabelMeta {
            truncation,
            occlusion,
            alpha: -10.0,
            bbox: [100.0, 150.0, 180.0, 150.0 + height],
            score: None,
        }
    }
}

/// 7-DoF upright box with KITTI metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub center: [f64; 3],
    pub dims: Dims,
    pub yaw: f64,
    pub class_name: String,
    pub difficulty: Difficulty,
    pub meta: Option<LabelMeta>,
}

impl Annotation {
    /// A box with validated geometry; the yaw is normalized to `[0, 2π)`.
    pub fn new(class_name: impl Into<String>, center: [f64; 3], dims: Dims, yaw: f64) -> Result<Self> {
        let a = Annotation {
            center,
            dims,
            yaw: normalize_angle(yaw),
            class_name: class_name.into(),
            difficulty: Difficulty::Unknown,
            meta: None,
        };
        a.validate()?;
        Ok(a)
    }

    pub fn with_difficulty(mut self, difficulty: Difficulty) -> Self {
        self.difficulty = difficulty;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !self.center.iter().all(|c| c.is_finite()) || !self.yaw.is_finite() {
            return Err(Error::invalid("annotation", "non-finite center or yaw"));
        }
        let Dims { w, l, h } = self.dims;
        if !(w > 0.0 && l > 0.0 && h > 0.0) || !(w.is_finite() && l.is_finite() && h.is_finite()) {
            return Err(Error::invalid(
                "annotation",
                format!("dims must be positive, got w={w} l={l} h={h}"),
            ));
        }
        if !(0.0..TAU).contains(&self.yaw) {
            return Err(Error::invalid(
                "annotation",
                format!("yaw {} outside [0, 2π)", self.yaw),
            ));
        }
        Ok(())
    }

    pub fn volume(&self) -> f64 {
        self.dims.volume()
    }

    pub fn frame(&self) -> BoxFrame {
        BoxFrame::new(self)
    }

    /// Footprint corners in the x-y plane, counter-clockwise.
    pub fn bev_corners(&self) -> [[f64; 2]; 4] {
        let (s, c) = self.yaw.sin_cos();
        let hl = self.dims.l / 2.0;
        let hw = self.dims.w / 2.0;
        let [cx, cy, _] = self.center;
        [(hl, hw), (-hl, hw), (-hl, -hw), (hl, -hw)].map(|(lx, ly)| [cx + lx * c - ly * s, cy + lx * s + ly * c])
    }

    pub fn z_range(&self) -> (f64, f64) {
        let hh = self.dims.h / 2.0;
        (self.center[2] - hh, self.center[2] + hh)
    }
}

/// Cached rigid frame of a box for repeated world/local conversions.
#[derive(Debug, Clone, Copy)]
pub struct BoxFrame {
    center: [f64; 3],
    cos: f64,
    sin: f64,
    half: [f64; 3],
    bev_radius: f64,
}

impl BoxFrame {
    pub fn new(a: &Annotation) -> Self {
        let (sin, cos) = a.yaw.sin_cos();
        let half = [a.dims.l / 2.0, a.dims.w / 2.0, a.dims.h / 2.0];
        BoxFrame {
            center: a.center,
            cos,
            sin,
            half,
            bev_radius: half[0].hypot(half[1]),
        }
    }

    /// World point to box-local coordinates (x along length, y along width).
    #[inline]
    pub fn to_local(&self, p: [f64; 3]) -> [f64; 3] {
        let dx = p[0] - self.center[0];
        let dy = p[1] - self.center[1];
        [
            dx * self.cos + dy * self.sin,
            -dx * self.sin + dy * self.cos,
            p[2] - self.center[2],
        ]
    }

    #[inline]
    pub fn to_world(&self, q: [f64; 3]) -> [f64; 3] {
        [
            self.center[0] + q[0] * self.cos - q[1] * self.sin,
            self.center[1] + q[0] * self.sin + q[1] * self.cos,
            self.center[2] + q[2],
        ]
    }

    #[inline]
    pub fn contains(&self, p: [f64; 3], margin: f64) -> bool {
        let dz = p[2] - self.center[2];
        if dz.abs() > self.half[2] + margin {
            return false;
        }
        let dx = p[0] - self.center[0];
        let dy = p[1] - self.center[1];
        let reach = self.bev_radius + margin;
        if dx.abs() > reach || dy.abs() > reach {
            return false;
        }
        let lx = dx * self.cos + dy * self.sin;
        let ly = -dx * self.sin + dy * self.cos;
        lx.abs() <= self.half[0] + margin && ly.abs() <= self.half[1] + margin
    }
}

/// How `flip_y` updates box yaw.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum YawMode {
    /// `θ ← (θ + π) mod 2π`, the literal published update.
    Paper,
    /// `θ ← (−θ) mod 2π`, the true mirror image under `y ← −y`.
    #[default]
    Mirror,
}

/// One LiDAR frame.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Scene {
    pub scene_id: String,
    pub cloud: PointCloud,
    pub annotations: Vec<Annotation>,
    /// KITTI `DontCare` regions. Kept for evaluation, never augmented.
    pub dont_care: Vec<RawLabel>,
    pub calib: Option<Calibration>,
}

impl Scene {
    pub fn new(scene_id: impl Into<String>, cloud: PointCloud, annotations: Vec<Annotation>) -> Self {
        Scene {
            scene_id: scene_id.into(),
            cloud,
            annotations,
            dont_care: Vec::new(),
            calib: None,
        }
    }

    /// Applies a joint cloud/annotation transform, keeping the other fields.
    pub fn map_geometry<F>(mut self, f: F) -> Self
    where
        F: FnOnce(PointCloud, Vec<Annotation>) -> (PointCloud, Vec<Annotation>),
    {
        let cloud = std::mem::take(&mut self.cloud);
        let annotations = std::mem::take(&mut self.annotations);
        let (cloud, annotations) = f(cloud, annotations);
        self.cloud = cloud;
        self.annotations = annotations;
        self
    }

    pub fn class_count(&self, class_name: &str) -> usize {
        self.annotations.iter().filter(|a| a.class_name == class_name).count()
    }
}

/// Maps an angle to `[0, 2π)`.
pub fn normalize_angle(theta: f64) -> f64 {
    let r = theta.rem_euclid(TAU);
    // rem_euclid of a tiny negative value rounds up to exactly 2π
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// Smallest absolute angular distance between two angles.
pub fn angle_diff(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    d.min(TAU - d)
}

pub fn rotate_z(mut cloud: PointCloud, mut annotations: Vec<Annotation>, alpha: f64) -> (PointCloud, Vec<Annotation>) {
    let (s, c) = alpha.sin_cos();
    for p in &mut cloud.points {
        let (x, y) = (p.x, p.y);
        p.x = x * c - y * s;
        p.y = x * s + y * c;
    }
    for a in &mut annotations {
        let [x, y, _] = a.center;
        a.center[0] = x * c - y * s;
        a.center[1] = x * s + y * c;
        a.yaw = normalize_angle(a.yaw + alpha);
    }
    (cloud, annotations)
}

pub fn translate(
    mut cloud: PointCloud,
    mut annotations: Vec<Annotation>,
    delta: [f64; 3],
) -> (PointCloud, Vec<Annotation>) {
    for p in &mut cloud.points {
        p.x += delta[0];
        p.y += delta[1];
        p.z += delta[2];
    }
    for a in &mut annotations {
        for (c, dk) in a.center.iter_mut().zip(delta) {
            *c += dk;
        }
    }
    (cloud, annotations)
}

/// Scales points, box centers and box dims about the origin.
pub fn scale(mut cloud: PointCloud, mut annotations: Vec<Annotation>, s: f64) -> Result<(PointCloud, Vec<Annotation>)> {
    if !(s > 0.0 && s.is_finite()) {
        return Err(Error::invalid("scale", format!("factor must be positive, got {s}")));
    }
    for p in &mut cloud.points {
        p.x *= s;
        p.y *= s;
        p.z *= s;
    }
    for a in &mut annotations {
        a.center = a.center.map(|c| c * s);
        a.dims = Dims::new(a.dims.w * s, a.dims.l * s, a.dims.h * s);
    }
    Ok((cloud, annotations))
}

/// Mirrors the scene across the x-z plane (`y ← −y`).
pub fn flip_y(
    mut cloud: PointCloud,
    mut annotations: Vec<Annotation>,
    yaw_mode: YawMode,
) -> (PointCloud, Vec<Annotation>) {
    for p in &mut cloud.points {
        p.y = -p.y;
    }
    for a in &mut annotations {
        a.center[1] = -a.center[1];
        a.yaw = match yaw_mode {
            YawMode::Paper => normalize_angle(a.yaw + PI),
            YawMode::Mirror => normalize_angle(-a.yaw),
        };
    }
    (cloud, annotations)
}

/// The eight corners: bottom face first (counter-clockwise from the
/// front-left corner), then the top face in the same order.
pub fn box_corners(a: &Annotation) -> [[f64; 3]; 8] {
    let (lo, hi) = a.z_range();
    let bev = a.bev_corners();
    let mut out = [[0.0; 3]; 8];
    for (i, [x, y]) in bev.into_iter().enumerate() {
        out[i] = [x, y, lo];
        out[i + 4] = [x, y, hi];
    }
    out
}

/// Membership mask of `cloud` in the closed box `a` grown by `margin`.
pub fn points_in_box(cloud: &PointCloud, a: &Annotation, margin: f64) -> Vec<bool> {
    let frame = a.frame();
    cloud.points.iter().map(|p| frame.contains(p.xyz(), margin)).collect()
}

/// Indices of the points inside `a`.
pub fn member_indices(cloud: &PointCloud, a: &Annotation, margin: f64) -> Vec<usize> {
    let frame = a.frame();
    cloud
        .points
        .iter()
        .enumerate()
        .filter(|(_, p)| frame.contains(p.xyz(), margin))
        .map(|(i, _)| i)
        .collect()
}

pub fn polygon_area(poly: &[[f64; 2]]) -> f64 {
    let n = poly.len();
    if n < 3 {
        return 0.0;
    }
    let twice: f64 = (0..n)
        .map(|i| {
            let [x0, y0] = poly[i];
            let [x1, y1] = poly[(i + 1) % n];
            x0 * y1 - x1 * y0
        })
        .sum();
    twice / 2.0
}

/// Sutherland-Hodgman clip of `subject` by the convex counter-clockwise
/// polygon `clip`.
pub fn clip_convex(subject: &[[f64; 2]], clip: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut output: Vec<[f64; 2]> = subject.to_vec();
    let n = clip.len();
    for i in 0..n {
        if output.is_empty() {
            break;
        }
        let a = clip[i];
        let b = clip[(i + 1) % n];
        let edge = [b[0] - a[0], b[1] - a[1]];
        let tol = 1e-12 * (edge[0].abs() + edge[1].abs()).max(1.0);
        let side = |p: [f64; 2]| edge[0] * (p[1] - a[1]) - edge[1] * (p[0] - a[0]);

        let input = std::mem::take(&mut output);
        let m = input.len();
        for j in 0..m {
            let cur = input[j];
            let prev = input[(j + m - 1) % m];
            let s_cur = side(cur);
            let s_prev = side(prev);
            let cur_in = s_cur >= -tol;
            let prev_in = s_prev >= -tol;
            if cur_in {
                if !prev_in {
                    output.push(intersect(prev, cur, s_prev, s_cur));
                }
                output.push(cur);
            } else if prev_in {
                output.push(intersect(prev, cur, s_prev, s_cur));
            }
        }
    }
    output
}

#[inline]
fn intersect(p: [f64; 2], q: [f64; 2], sp: f64, sq: f64) -> [f64; 2] {
    let t = sp / (sp - sq);
    [p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]
}

/// Area of the intersection of the two box footprints.
pub fn bev_intersection_area(a: &Annotation, b: &Annotation) -> f64 {
    let dx = a.center[0] - b.center[0];
    let dy = a.center[1] - b.center[1];
    let ra = (a.dims.l / 2.0).hypot(a.dims.w / 2.0);
    let rb = (b.dims.l / 2.0).hypot(b.dims.w / 2.0);
    if dx.hypot(dy) > ra + rb {
        return 0.0;
    }
    let inter = clip_convex(&a.bev_corners(), &b.bev_corners());
    polygon_area(&inter).max(0.0)
}

/// IoU of the two yaw-rotated footprints in the x-y plane.
pub fn bev_iou(a: &Annotation, b: &Annotation) -> f64 {
    let inter = bev_intersection_area(a, b);
    if inter <= 0.0 {
        return 0.0;
    }
    let area_a = a.dims.l * a.dims.w;
    let area_b = b.dims.l * b.dims.w;
    (inter / (area_a + area_b - inter)).clamp(0.0, 1.0)
}

/// IoU of two upright boxes: footprint intersection times vertical overlap.
pub fn iou_3d(a: &Annotation, b: &Annotation) -> f64 {
    let (a_lo, a_hi) = a.z_range();
    let (b_lo, b_hi) = b.z_range();
    let overlap_h = a_hi.min(b_hi) - a_lo.max(b_lo);
    if overlap_h <= 0.0 {
        return 0.0;
    }
    let inter = bev_intersection_area(a, b) * overlap_h;
    if inter <= 0.0 {
        return 0.0;
    }
    (inter / (a.volume() + b.volume() - inter)).clamp(0.0, 1.0)
}

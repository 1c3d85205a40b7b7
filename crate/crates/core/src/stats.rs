//! Foreground/background point statistics: how many LiDAR points of a
//! scene fall inside at least one annotation box.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::geom::{BoxFrame, Scene};
use crate::kitti_io::fov_mask;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneStats {
    pub scene_id: String,
    pub total_points: usize,
    /// Points inside at least one box; a point in two boxes counts once.
    pub foreground_points: usize,
    pub per_annotation_counts: Vec<usize>,
    pub foreground_ratio: f64,
}

/// Counts over the whole cloud, or only over the camera field of view when
/// `restrict_to_fov` is set and the scene carries a calibration.
pub fn scene_stats(scene: &Scene, restrict_to_fov: bool) -> SceneStats {
    let fov = match (&scene.calib, restrict_to_fov) {
        (Some(calib), true) => Some(fov_mask(&scene.cloud, calib)),
        _ => None,
    };
    let frames: Vec<BoxFrame> = scene.annotations.iter().map(|a| a.frame()).collect();
    let mut per_annotation_counts = vec![0; frames.len()];
    let mut total_points = 0;
    let mut foreground_points = 0;
    for (i, p) in scene.cloud.points.iter().enumerate() {
        if fov.as_ref().is_some_and(|m| !m[i]) {
            continue;
        }
        total_points += 1;
        let xyz = p.xyz();
        let mut inside = false;
        for (count, frame) in per_annotation_counts.iter_mut().zip(&frames) {
            if frame.contains(xyz, 0.0) {
                *count += 1;
                inside = true;
            }
        }
        foreground_points += inside as usize;
    }
    SceneStats {
        scene_id: scene.scene_id.clone(),
        total_points,
        foreground_points,
        per_annotation_counts,
        foreground_ratio: ratio(foreground_points as f64, total_points as f64),
    }
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub scene_count: usize,
    pub mean_points: f64,
    pub mean_foreground: f64,
    /// Mean foreground over mean total.
    pub foreground_ratio: f64,
    /// Per-scene ratios, in input order.
    pub scene_ratios: Vec<f64>,
}

pub fn dataset_stats(scenes: &[SceneStats]) -> DatasetStats {
    let n = scenes.len() as f64;
    let total: usize = scenes.iter().map(|s| s.total_points).sum();
    let fg: usize = scenes.iter().map(|s| s.foreground_points).sum();
    let mean_points = ratio(total as f64, n);
    let mean_foreground = ratio(fg as f64, n);
    DatasetStats {
        scene_count: scenes.len(),
        mean_points,
        mean_foreground,
        foreground_ratio: ratio(fg as f64, total as f64),
        scene_ratios: scenes.iter().map(|s| s.foreground_ratio).collect(),
    }
}

impl DatasetStats {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("stats serialize")
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "scenes             {}", self.scene_count).unwrap();
        writeln!(out, "mean points        {:.1}", self.mean_points).unwrap();
        writeln!(out, "mean foreground    {:.1}", self.mean_foreground).unwrap();
        writeln!(
            out,
            "foreground ratio   {:.4} ({:.2}%)",
            self.foreground_ratio,
            100.0 * self.foreground_ratio
        )
        .unwrap();
        if !self.scene_ratios.is_empty() {
            let mut sorted = self.scene_ratios.clone();
            sorted.sort_by(f64::total_cmp);
            let q = |f: f64| sorted[((sorted.len() - 1) as f64 * f).round() as usize];
            writeln!(
                out,
                "per-scene ratio    min {:.4}  median {:.4}  max {:.4}",
                q(0.0),
                q(0.5),
                q(1.0)
            )
            .unwrap();
        }
        out
    }
}

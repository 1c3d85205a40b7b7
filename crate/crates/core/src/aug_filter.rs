//! Annotation filters: drop boxes by KITTI difficulty or by how few LiDAR
//! points they contain. Filters never touch the point cloud.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{BoxFrame, Difficulty, Scene};
use crate::kitti_io::RawLabel;

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DifficultyFilterParams {
    pub drop: BTreeSet<Difficulty>,
}

impl DifficultyFilterParams {
    pub fn new(drop: impl IntoIterator<Item = Difficulty>) -> Result<Self> {
        let p = DifficultyFilterParams {
            drop: drop.into_iter().collect(),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.drop.contains(&Difficulty::Easy) {
            return Err(Error::invalid("drop", "easy annotations cannot be filtered"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointCountFilterParams {
    pub min_points: usize,
}

impl PointCountFilterParams {
    pub fn validate(&self) -> Result<()> {
        if self.min_points < 1 {
            return Err(Error::invalid("min_points", "must be at least 1"));
        }
        Ok(())
    }
}

/// KITTI devkit tiers from 2D box height, occlusion level and truncation.
///
/// | tier     | min height (px) | max occlusion | max truncation |
/// |----------|-----------------|---------------|----------------|
/// | easy     | 40              | 0             | 0.15           |
/// | moderate | 25              | 1             | 0.30           |
/// | hard     | 25              | 2             | 0.50           |
pub fn assign_difficulty(raw: &RawLabel) -> Difficulty {
    const TIERS: [(Difficulty, f64, i32, f64); 3] = [
        (Difficulty::Easy, 40.0, 0, 0.15),
        (Difficulty::Moderate, 25.0, 1, 0.30),
        (Difficulty::Hard, 25.0, 2, 0.50),
    ];
    let height = raw.bbox_height();
    if !height.is_finite() || height <= 0.0 || raw.occlusion < 0 || raw.truncation < 0.0 {
        return Difficulty::Unknown;
    }
    TIERS
        .iter()
        .find(|(_, min_h, max_occ, max_trunc)| {
            height >= *min_h && raw.occlusion <= *max_occ && raw.truncation <= *max_trunc
        })
        .map_or(Difficulty::Unknown, |t| t.0)
}

pub fn filter_by_difficulty(mut scene: Scene, params: &DifficultyFilterParams) -> Scene {
    scene.annotations.retain(|a| !params.drop.contains(&a.difficulty));
    scene
}

/// Number of points inside each annotation (closed box, no margin).
pub fn member_counts(scene: &Scene) -> Vec<usize> {
    let frames: Vec<BoxFrame> = scene.annotations.iter().map(|a| a.frame()).collect();
    let mut counts = vec![0; frames.len()];
    for p in &scene.cloud.points {
        let xyz = p.xyz();
        for (count, frame) in counts.iter_mut().zip(&frames) {
            if frame.contains(xyz, 0.0) {
                *count += 1;
            }
        }
    }
    counts
}

pub fn filter_by_points(mut scene: Scene, params: &PointCountFilterParams) -> Scene {
    let counts = member_counts(&scene);
    let mut keep = counts.into_iter().map(|c| c >= params.min_points);
    scene.annotations.retain(|_| keep.next().unwrap_or(true));
    scene
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{Annotation, Dims, Point, PointCloud};

    fn raw(height: f64, occlusion: i32, truncation: f64) -> RawLabel {
        RawLabel {
            type_name: "Car".into(),
            truncation,
            occlusion,
            alpha: 0.0,
            bbox: [100.0, 100.0, 150.0, 100.0 + height],
            dims_hwl: [1.5, 1.6, 4.0],
            location: [0.0, 1.5, 20.0],
            rotation_y: 0.0,
            score: None,
        }
    }

    #[test]
    fn difficulty_tiers() {
        assert_eq!(assign_difficulty(&raw(50.0, 0, 0.1)), Difficulty::Easy);
        assert_eq!(assign_difficulty(&raw(30.0, 2, 0.4)), Difficulty::Hard);
        assert_eq!(assign_difficulty(&raw(20.0, 0, 0.0)), Difficulty::Unknown);
        assert_eq!(assign_difficulty(&raw(40.0, 0, 0.15)), Difficulty::Easy);
        assert_eq!(assign_difficulty(&raw(39.9, 0, 0.0)), Difficulty::Moderate);
        assert_eq!(assign_difficulty(&raw(25.0, 1, 0.30)), Difficulty::Moderate);
        assert_eq!(assign_difficulty(&raw(100.0, 3, 0.0)), Difficulty::Unknown);
        assert_eq!(assign_difficulty(&raw(100.0, 0, 0.51)), Difficulty::Unknown);
        // no usable 2D box
        assert_eq!(assign_difficulty(&raw(0.0, 0, 0.0)), Difficulty::Unknown);
    }

    #[test]
    fn easy_cannot_be_dropped() {
        assert!(DifficultyFilterParams::new([Difficulty::Easy]).is_err());
        assert!(DifficultyFilterParams::new([Difficulty::Unknown, Difficulty::Hard, Difficulty::Moderate]).is_ok());
        assert!(PointCountFilterParams { min_points: 0 }.validate().is_err());
    }

    fn scene_with(difficulties: &[Difficulty], points_per_box: &[usize]) -> Scene {
        let mut anns = Vec::new();
        let mut pts = Vec::new();
        for (i, (d, n)) in difficulties.iter().zip(points_per_box).enumerate() {
            let x = 10.0 * i as f64;
            anns.push(
                Annotation::new("Car", [x, 0.0, 0.0], Dims::new(2.0, 4.0, 2.0), 0.0)
                    .unwrap()
                    .with_difficulty(*d),
            );
            for k in 0..*n {
                pts.push(Point::new(x + 0.1 * k as f64 - 1.0, 0.0, 0.0, 0.0));
            }
        }
        pts.push(Point::new(-50.0, 0.0, 0.0, 0.0));
        Scene::new("s", PointCloud::new(pts), anns)
    }

    #[test]
    fn difficulty_filter() {
        use Difficulty::*;
        let scene = scene_with(&[Easy, Unknown, Hard, Moderate, Hard], &[1, 1, 1, 1, 1]);
        let same = filter_by_difficulty(scene.clone(), &DifficultyFilterParams::default());
        assert_eq!(same, scene);

        let params = DifficultyFilterParams::new([Unknown, Hard]).unwrap();
        let out = filter_by_difficulty(scene.clone(), &params);
        let kept: Vec<Difficulty> = out.annotations.iter().map(|a| a.difficulty).collect();
        assert_eq!(kept, vec![Easy, Moderate]);
        assert_eq!(out.cloud, scene.cloud);
        assert_eq!(filter_by_difficulty(out.clone(), &params), out);
    }

    #[test]
    fn point_count_filter() {
        use Difficulty::*;
        let scene = scene_with(&[Easy; 4], &[0, 4, 5, 12]);
        assert_eq!(member_counts(&scene), vec![0, 4, 5, 12]);

        let out = filter_by_points(scene.clone(), &PointCountFilterParams { min_points: 1 });
        assert_eq!(out.annotations.len(), 3);
        assert_eq!(out.annotations[0].center[0], 10.0);

        let out = filter_by_points(scene.clone(), &PointCountFilterParams { min_points: 5 });
        let xs: Vec<f64> = out.annotations.iter().map(|a| a.center[0]).collect();
        assert_eq!(xs, vec![20.0, 30.0]);
        assert_eq!(out.cloud, scene.cloud);
        assert_eq!(
            filter_by_points(out.clone(), &PointCountFilterParams { min_points: 5 }),
            out
        );

        let out = filter_by_points(scene, &PointCountFilterParams { min_points: 10 });
        assert_eq!(out.annotations.len(), 1);
    }
}

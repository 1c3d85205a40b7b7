use std::collections::BTreeMap;

use lidar_aug_core::aug_sample::{build_database, SampleDatabase};
use lidar_aug_core::kitti_io::{list_scene_ids, read_scene, write_scene};
use lidar_aug_core::metrics::{evaluate, Detection, EvalConfig};
use lidar_aug_core::policy::{apply_policy, list_presets, load_policy, preset};
use lidar_aug_core::stats::{dataset_stats, scene_stats};
use lidar_aug_core::synthetic::{synthetic_dataset, SyntheticConfig};
use lidar_aug_core::{Difficulty, Mode};

fn small_dataset(seed: u64) -> Vec<lidar_aug_core::Scene> {
    synthetic_dataset(&SyntheticConfig {
        scenes: 6,
        points_per_scene: 4_000,
        seed,
        ..SyntheticConfig::default()
    })
}

#[test]
fn disk_round_trip_preserves_scenes() {
    let dir = tempfile::tempdir().unwrap();
    let scenes = small_dataset(1);
    for s in &scenes {
        write_scene(s, dir.path()).unwrap();
    }
    let ids = list_scene_ids(dir.path()).unwrap();
    assert_eq!(ids.len(), scenes.len());
    for s in &scenes {
        let back = read_scene(dir.path(), &s.scene_id).unwrap();
        assert_eq!(back.cloud, s.cloud);
        assert_eq!(back.annotations.len(), s.annotations.len());
        for (a, b) in back.annotations.iter().zip(&s.annotations) {
            assert_eq!(a.class_name, b.class_name);
            assert!((0..3).all(|k| (a.center[k] - b.center[k]).abs() < 1e-2));
        }
    }
}

#[test]
fn every_preset_runs_and_is_reproducible() {
    let scenes = small_dataset(2);
    let db = build_database(&small_dataset(3), 5);
    for (name, mut policy) in list_presets() {
        policy.seed = 5;
        for scene in &scenes {
            let a = apply_policy(scene.clone(), &policy, Some(&db), Mode::Train).unwrap();
            let b = apply_policy(scene.clone(), &policy, Some(&db), Mode::Train).unwrap();
            assert_eq!(a, b, "{name} on {}", scene.scene_id);
        }
        let reloaded = load_policy(&policy.to_json()).unwrap();
        assert_eq!(reloaded, policy, "{name}");
    }
}

#[test]
fn saved_database_drives_the_same_augmentation() {
    let dir = tempfile::tempdir().unwrap();
    let db = build_database(&small_dataset(4), 5);
    db.save(dir.path()).unwrap();
    let loaded = SampleDatabase::load(dir.path()).unwrap();
    let policy = preset("policy36").unwrap();
    for scene in small_dataset(5) {
        let a = apply_policy(scene.clone(), &policy, Some(&db), Mode::Train).unwrap();
        let b = apply_policy(scene, &policy, Some(&loaded), Mode::Train).unwrap();
        assert_eq!(a.annotations.len(), b.annotations.len());
        assert_eq!(a.cloud.len(), b.cloud.len());
    }
}

#[test]
fn ground_truth_scores_perfectly() {
    let scenes = small_dataset(6);
    let gts: BTreeMap<_, _> = scenes
        .iter()
        .map(|s| (s.scene_id.clone(), s.annotations.clone()))
        .collect();
    let dets: BTreeMap<_, _> = scenes
        .iter()
        .map(|s| {
            let d = s
                .annotations
                .iter()
                .map(|a| Detection::new(a.clone(), 1.0).unwrap())
                .collect();
            (s.scene_id.clone(), d)
        })
        .collect();
    let table = evaluate(&dets, &gts, &EvalConfig::default(), &[40, 11]).unwrap();
    for d in [Difficulty::Easy, Difficulty::Moderate, Difficulty::Hard] {
        let ap = table.get(d, 40).unwrap();
        assert!(ap == 0.0 || ap == 1.0, "{d:?}: {ap}");
    }
    assert_eq!(table.moderate(40), Some(1.0));
}

#[test]
fn foreground_ratio_tracks_the_generator() {
    let stats: Vec<_> = small_dataset(7).iter().map(|s| scene_stats(s, false)).collect();
    let report = dataset_stats(&stats);
    assert_eq!(report.scene_count, 6);
    assert!((report.mean_points - 4_000.0).abs() < 1.0);
    assert!(
        report.foreground_ratio > 0.0 && report.foreground_ratio < 0.2,
        "{}",
        report.foreground_ratio
    );
}

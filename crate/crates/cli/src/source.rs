//! Scene sources: a KITTI-layout directory or a generated dataset.

use std::path::PathBuf;

use lidar_aug_core::kitti_io::{list_scene_ids, read_scene, read_split};
use lidar_aug_core::synthetic::{synthetic_dataset, SyntheticConfig};
use lidar_aug_core::Scene;
use rayon::prelude::*;
use rayon::ThreadPool;

use crate::failure::{CliResult, Failure};
use crate::DataArgs;

pub enum Source {
    Disk { root: PathBuf, ids: Vec<String> },
    Synthetic(Vec<Scene>),
}

impl Source {
    pub fn open(args: &DataArgs) -> CliResult<Self> {
        if let Some(n) = args.synthetic {
            let cfg = SyntheticConfig {
                scenes: n,
                points_per_scene: args.synthetic_points,
                seed: args.synthetic_seed,
                ..SyntheticConfig::default()
            };
            return Ok(Source::Synthetic(synthetic_dataset(&cfg)));
        }
        let root = args
            .dataset_root
            .clone()
            .ok_or_else(|| Failure::Config("either --dataset-root or --synthetic is required".into()))?;
        if !root.is_dir() {
            return Err(Failure::Data(format!(
                "{}: dataset root is not a directory",
                root.display()
            )));
        }
        let ids = match &args.split {
            Some(split) => read_split(split)?,
            None => list_scene_ids(&root)?,
        };
        Ok(Source::Disk { root, ids })
    }

    pub fn ids(&self) -> Vec<String> {
        match self {
            Source::Disk { ids, .. } => ids.clone(),
            Source::Synthetic(scenes) => scenes.iter().map(|s| s.scene_id.clone()).collect(),
        }
    }

    pub fn load(&self, index: usize) -> CliResult<Scene> {
        match self {
            Source::Disk { root, ids } => Ok(read_scene(root, &ids[index])?),
            Source::Synthetic(scenes) => Ok(scenes[index].clone()),
        }
    }

    /// Runs `f` on every scene on the pool; results keep scene order.
    pub fn map<T, F>(&self, pool: &ThreadPool, f: F) -> CliResult<Vec<T>>
    where
        T: Send,
        F: Fn(Scene) -> CliResult<T> + Sync,
    {
        let n = self.ids().len();
        pool.install(|| (0..n).into_par_iter().map(|i| f(self.load(i)?)).collect())
    }
}

pub fn pool(args: &DataArgs) -> CliResult<ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(args.workers as usize)
        .build()
        .map_err(|e| Failure::Config(format!("cannot start {} workers: {e}", args.workers)))
}

//! Deterministic, seedable LiDAR scene augmentation.
//!
//! The crate covers the full data path of a LiDAR 3D-detection training set:
//!
//! * [`geom`]: points, oriented boxes, rigid/scale transforms, box membership,
//!   rotated-box IoU.
//! * [`kitti_io`]: KITTI velodyne/label/calib formats and the camera FOV filter.
//! * [`aug_global`], [`aug_local`], [`aug_filter`], [`aug_sample`]: the
//!   augmentation steps (scene-level, per-object, annotation filters,
//!   ground-truth oversampling).
//! * [`policy`]: seeded pipelines and the 43 preset policies.
//! * [`metrics`]: KITTI-style matching and AP over 40 or 11 recall points.
//! * [`stats`]: foreground/background point statistics.
//! * [`synthetic`]: desk-scale random datasets with planted boxes.

pub mod aug_filter;
pub mod aug_global;
pub mod aug_local;
pub mod aug_sample;
pub mod error;
pub mod geom;
pub mod kitti_io;
pub mod metrics;
pub mod policy;
pub mod rng;
pub mod stats;
pub mod synthetic;

pub use error::{Error, Result};
pub use geom::{Annotation, Difficulty, Dims, LabelMeta, Point, PointCloud, Scene, YawMode};
pub use kitti_io::{Calibration, RawLabel};
pub use policy::{Mode, Policy, StepKind};

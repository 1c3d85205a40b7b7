//! Ground-truth oversampling.
//!
//! [`build_database`] crops every sufficiently populated annotation of a
//! dataset together with its points (stored in box-local coordinates).
//! [`oversample`] then pastes crops into a scene, at their original pose,
//! until the scene holds `target_count` boxes of the class. A crop is only
//! accepted when its footprint does not overlap any box already present.
//!
//! On disk a database is two files in one directory:
//!
//! * `db_index.txt`: a header followed by one line per entry,
//!   `scene_id class x y z w l h yaw difficulty point_count byte_offset`.
//! * `db_points.bin`: the local points of all entries back to back, in the
//!   velodyne `f32 × 4` little-endian layout.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geom::{bev_iou, Annotation, BoxFrame, Difficulty, Dims, Point, Scene};
use crate::kitti_io::{read_velodyne, write_velodyne};

pub const INDEX_FILE: &str = "db_index.txt";
pub const POINTS_FILE: &str = "db_points.bin";
const FORMAT_TAG: &str = "lidar-aug-db";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct SampleEntry {
    /// Box at its pose in the source scene, without image-side metadata.
    pub annotation: Annotation,
    /// Member points in the box frame (x along length, y along width).
    pub local_points: Vec<Point>,
    pub source_scene: String,
    pub point_count: usize,
}

impl SampleEntry {
    /// Member points placed back at the stored annotation pose.
    pub fn posed_points(&self) -> Vec<Point> {
        let frame = self.annotation.frame();
        self.local_points
            .iter()
            .map(|p| {
                let [x, y, z] = frame.to_world(p.xyz());
                Point::new(x, y, z, p.intensity)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    /// SHA-256 over the scenes the database was built from.
    pub dataset_hash: String,
    pub min_points: usize,
}

impl Provenance {
    /// Single hash over the dataset hash and the build parameters.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.dataset_hash.as_bytes());
        h.update((self.min_points as u64).to_le_bytes());
        hex::encode(h.finalize())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleDatabase {
    pub entries: Vec<SampleEntry>,
    pub class_index: BTreeMap<String, Vec<usize>>,
    pub provenance: Provenance,
}

impl SampleDatabase {
    fn from_entries(entries: Vec<SampleEntry>, provenance: Provenance) -> Self {
        let mut class_index: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, e) in entries.iter().enumerate() {
            class_index.entry(e.annotation.class_name.clone()).or_default().push(i);
        }
        SampleDatabase {
            entries,
            class_index,
            provenance,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn class_entries(&self, class_name: &str) -> &[usize] {
        self.class_index.get(class_name).map_or(&[], Vec::as_slice)
    }

    /// Entry count per class, sorted by class name.
    pub fn class_counts(&self) -> BTreeMap<String, usize> {
        self.class_index.iter().map(|(k, v)| (k.clone(), v.len())).collect()
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut index = String::new();
        writeln!(index, "{FORMAT_TAG} {FORMAT_VERSION}").unwrap();
        writeln!(
            index,
            "provenance {} dataset {} min_points {}",
            self.provenance.digest(),
            self.provenance.dataset_hash,
            self.provenance.min_points
        )
        .unwrap();
        writeln!(index, "entries {}", self.entries.len()).unwrap();
        let mut blob = Vec::new();
        for e in &self.entries {
            let a = &e.annotation;
            writeln!(
                index,
                "{} {} {} {} {} {} {} {} {} {} {} {}",
                e.source_scene,
                a.class_name,
                a.center[0],
                a.center[1],
                a.center[2],
                a.dims.w,
                a.dims.l,
                a.dims.h,
                a.yaw,
                a.difficulty,
                e.point_count,
                blob.len()
            )
            .unwrap();
            blob.extend(write_velodyne(&e.local_points.clone().into()));
        }
        let ipath = dir.join(INDEX_FILE);
        fs::write(&ipath, index).map_err(|e| Error::io(&ipath, e))?;
        let ppath = dir.join(POINTS_FILE);
        fs::write(&ppath, blob).map_err(|e| Error::io(&ppath, e))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let ipath = dir.join(INDEX_FILE);
        let ppath = dir.join(POINTS_FILE);
        let index = fs::read_to_string(&ipath).map_err(|e| Error::io(&ipath, e))?;
        let blob = fs::read(&ppath).map_err(|e| Error::io(&ppath, e))?;
        let bad = |line: usize, msg: &str| Error::Database(format!("{}:{line}: {msg}", ipath.display()));

        let mut lines = index.lines().enumerate();
        let mut next = |what: &str| {
            lines
                .next()
                .ok_or_else(|| Error::Database(format!("missing {what} line")))
        };

        let (_, header) = next("header")?;
        if header != format!("{FORMAT_TAG} {FORMAT_VERSION}") {
            return Err(bad(1, &format!("unsupported header `{header}`")));
        }
        let (_, prov) = next("provenance")?;
        let fields: Vec<&str> = prov.split_whitespace().collect();
        if fields.len() != 6 || fields[0] != "provenance" || fields[2] != "dataset" || fields[4] != "min_points" {
            return Err(bad(2, "malformed provenance line"));
        }
        let provenance = Provenance {
            dataset_hash: fields[3].to_string(),
            min_points: fields[5].parse().map_err(|_| bad(2, "bad min_points"))?,
        };
        if provenance.digest() != fields[1] {
            return Err(bad(2, "provenance hash does not match its fields"));
        }
        let (_, count_line) = next("entries")?;
        let count: usize = count_line
            .strip_prefix("entries ")
            .and_then(|c| c.parse().ok())
            .ok_or_else(|| bad(3, "malformed entries line"))?;

        let mut entries = Vec::with_capacity(count);
        let mut expected_offset = 0usize;
        for (i, line) in lines {
            let line_no = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 12 {
                return Err(bad(line_no, "expected 12 fields"));
            }
            let num = |k: usize| {
                f[k].parse::<f64>()
                    .map_err(|_| bad(line_no, &format!("field {} is not a number", k + 1)))
            };
            let int = |k: usize| {
                f[k].parse::<usize>()
                    .map_err(|_| bad(line_no, &format!("field {} is not an integer", k + 1)))
            };
            let difficulty = Difficulty::parse(f[9]).ok_or_else(|| bad(line_no, "unknown difficulty"))?;
            let annotation = Annotation::new(
                f[1],
                [num(2)?, num(3)?, num(4)?],
                Dims::new(num(5)?, num(6)?, num(7)?),
                num(8)?,
            )
            .map_err(|e| bad(line_no, &e.to_string()))?
            .with_difficulty(difficulty);
            let point_count = int(10)?;
            let offset = int(11)?;
            if offset != expected_offset {
                return Err(bad(line_no, "byte offset does not follow the previous entry"));
            }
            let end = offset + point_count * 16;
            if end > blob.len() {
                return Err(bad(line_no, "points extend past the end of the blob"));
            }
            let local_points = read_velodyne(&blob[offset..end])?.points;
            expected_offset = end;
            entries.push(SampleEntry {
                annotation,
                local_points,
                source_scene: f[0].to_string(),
                point_count,
            });
        }
        if entries.len() != count {
            return Err(Error::Database(format!(
                "header announces {count} entries, found {}",
                entries.len()
            )));
        }
        if expected_offset != blob.len() {
            return Err(Error::Database(format!(
                "{} has {} trailing bytes",
                ppath.display(),
                blob.len() - expected_offset
            )));
        }
        Ok(SampleDatabase::from_entries(entries, provenance))
    }
}

/// SHA-256 over the scene id, points and annotation geometry.
pub fn scene_digest(scene: &Scene) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update((scene.scene_id.len() as u64).to_le_bytes());
    h.update(scene.scene_id.as_bytes());
    h.update((scene.cloud.len() as u64).to_le_bytes());
    for p in &scene.cloud.points {
        for v in [p.x, p.y, p.z, p.intensity] {
            h.update(v.to_le_bytes());
        }
    }
    h.update((scene.annotations.len() as u64).to_le_bytes());
    for a in &scene.annotations {
        h.update((a.class_name.len() as u64).to_le_bytes());
        h.update(a.class_name.as_bytes());
        for v in [
            a.center[0],
            a.center[1],
            a.center[2],
            a.dims.w,
            a.dims.l,
            a.dims.h,
            a.yaw,
        ] {
            h.update(v.to_le_bytes());
        }
        h.update([a.difficulty as u8]);
    }
    h.finalize().into()
}

/// Database entries of one scene: every annotation holding at least
/// `min_points` points, in annotation order.
pub fn scene_entries(scene: &Scene, min_points: usize) -> Vec<SampleEntry> {
    let frames: Vec<BoxFrame> = scene.annotations.iter().map(|a| a.frame()).collect();
    let mut members: Vec<Vec<Point>> = vec![Vec::new(); frames.len()];
    for p in &scene.cloud.points {
        let xyz = p.xyz();
        for (list, frame) in members.iter_mut().zip(&frames) {
            if frame.contains(xyz, 0.0) {
                let [x, y, z] = frame.to_local(xyz);
                list.push(Point::new(x, y, z, p.intensity));
            }
        }
    }
    scene
        .annotations
        .iter()
        .zip(members)
        .filter(|(_, local_points)| local_points.len() >= min_points)
        .map(|(a, local_points)| {
            let mut annotation = a.clone();
            annotation.meta = None;
            SampleEntry {
                annotation,
                point_count: local_points.len(),
                local_points,
                source_scene: scene.scene_id.clone(),
            }
        })
        .collect()
}

impl SampleDatabase {
    /// Assembles a database from per-scene entries and digests, in dataset
    /// order. Lets callers process scenes independently.
    pub fn from_scenes(parts: impl IntoIterator<Item = (Vec<SampleEntry>, [u8; 32])>, min_points: usize) -> Self {
        let mut h = Sha256::new();
        let mut entries = Vec::new();
        for (scene_entries, digest) in parts {
            h.update(digest);
            entries.extend(scene_entries);
        }
        let provenance = Provenance {
            dataset_hash: hex::encode(h.finalize()),
            min_points,
        };
        SampleDatabase::from_entries(entries, provenance)
    }
}

/// One entry per annotation holding at least `min_points` points, in scene
/// order then annotation order.
pub fn build_database(dataset: &[Scene], min_points: usize) -> SampleDatabase {
    SampleDatabase::from_scenes(
        dataset.iter().map(|s| (scene_entries(s, min_points), scene_digest(s))),
        min_points,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OversampleParams {
    pub target_count: usize,
    #[serde(rename = "class", default = "default_class")]
    pub class_name: String,
    /// Candidate draws per scene; defaults to `5 × target_count`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_attempts: Option<usize>,
    /// A candidate collides when its BEV IoU with any present box exceeds this.
    #[serde(default, skip_serializing_if = "is_zero")]
    pub iou_tolerance: f64,
    /// Draw exactly as many candidates as are missing and keep the ones that
    /// do not collide, without re-drawing.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub strict_skip: bool,
    /// Remove scene points that fall inside an inserted box.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub remove_covered_points: bool,
}

fn default_class() -> String {
    "Car".to_string()
}

fn is_zero(v: &f64) -> bool {
    *v == 0.0
}

impl OversampleParams {
    pub fn new(target_count: usize) -> Self {
        OversampleParams {
            target_count,
            class_name: default_class(),
            max_attempts: None,
            iou_tolerance: 0.0,
            strict_skip: false,
            remove_covered_points: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.target_count < 1 {
            return Err(Error::invalid("target_count", "must be at least 1"));
        }
        if self.max_attempts == Some(0) {
            return Err(Error::invalid("max_attempts", "must be at least 1"));
        }
        crate::aug_global::check_range("iou_tolerance", self.iou_tolerance, 0.0, 1.0, false)
    }

    pub fn attempts(&self) -> usize {
        self.max_attempts.unwrap_or(5 * self.target_count)
    }
}

/// Pastes database crops of `params.class_name` into the scene until it
/// holds `target_count` such boxes, the candidate budget runs out, or the
/// class pool is exhausted. Candidates are drawn uniformly without
/// replacement; a candidate colliding with any box already present
/// (original or previously pasted) is discarded.
pub fn oversample<R: Rng + ?Sized>(
    mut scene: Scene,
    db: &SampleDatabase,
    params: &OversampleParams,
    rng: &mut R,
) -> Scene {
    let missing = params
        .target_count
        .saturating_sub(scene.class_count(&params.class_name));
    if missing == 0 {
        return scene;
    }
    let mut pool: Vec<usize> = db.class_entries(&params.class_name).to_vec();
    let budget = if params.strict_skip { missing } else { params.attempts() };
    let draws = budget.min(pool.len());

    let original_len = scene.cloud.len();
    let mut accepted: Vec<usize> = Vec::new();
    for k in 0..draws {
        let j = rng.random_range(k..pool.len());
        pool.swap(k, j);
        let entry = &db.entries[pool[k]];
        let candidate = &entry.annotation;
        let collides = scene
            .annotations
            .iter()
            .any(|a| bev_iou(candidate, a) > params.iou_tolerance);
        if collides {
            continue;
        }
        scene.annotations.push(candidate.clone());
        accepted.push(pool[k]);
        if accepted.len() == missing {
            break;
        }
    }

    if params.remove_covered_points && !accepted.is_empty() {
        let frames: Vec<BoxFrame> = accepted.iter().map(|&i| db.entries[i].annotation.frame()).collect();
        scene.cloud.points.truncate(original_len);
        scene
            .cloud
            .points
            .retain(|p| !frames.iter().any(|f| f.contains(p.xyz(), 0.0)));
    }
    for &i in &accepted {
        scene.cloud.points.extend(db.entries[i].posed_points());
    }
    scene
}

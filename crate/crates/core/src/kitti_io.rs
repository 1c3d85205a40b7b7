//! KITTI object-detection formats.
//!
//! * `velodyne/ID.bin`: packed little-endian `f32` quadruples `(x, y, z, intensity)`.
//! * `label_2/ID.txt`: one object per line, camera frame, bottom-center location.
//! * `calib/ID.txt`: `key: values` lines, matrices row-major.
//!
//! Labels are converted to the LiDAR frame on read and back on write:
//! `p_velo = Tr⁻¹ · R0⁻¹ · p_rect`, the center is lifted by `h/2` along +z,
//! and yaw is `θ = −rotation_y − π/2`.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{Matrix3, Matrix3x4, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::aug_filter::assign_difficulty;
use crate::error::{Error, Result};
use crate::geom::{normalize_angle, Annotation, Dims, LabelMeta, Point, PointCloud, Scene};

/// KITTI color camera resolution, used when the calib file carries no size.
pub const DEFAULT_IMAGE_SIZE: (u32, u32) = (1242, 375);

const POINT_BYTES: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub p2: Matrix3x4<f64>,
    pub r0_rect: Matrix3<f64>,
    pub tr_velo_to_cam: Matrix3x4<f64>,
    pub image_size: (u32, u32),
    r0_inv: Matrix3<f64>,
}

impl Calibration {
    pub fn new(
        p2: Matrix3x4<f64>,
        r0_rect: Matrix3<f64>,
        tr_velo_to_cam: Matrix3x4<f64>,
        image_size: (u32, u32),
    ) -> Result<Self> {
        let finite = p2
            .iter()
            .chain(r0_rect.iter())
            .chain(tr_velo_to_cam.iter())
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidCalibration("non-finite matrix entry".into()));
        }
        let rot: Matrix3<f64> = tr_velo_to_cam.fixed_view::<3, 3>(0, 0).into_owned();
        let gram = rot * rot.transpose();
        if (gram - Matrix3::identity()).amax() > 1e-4 {
            return Err(Error::InvalidCalibration(
                "Tr_velo_to_cam rotation is not orthonormal".into(),
            ));
        }
        let r0_inv = r0_rect
            .try_inverse()
            .ok_or_else(|| Error::InvalidCalibration("R0_rect is singular".into()))?;
        Ok(Calibration {
            p2,
            r0_rect,
            tr_velo_to_cam,
            image_size,
            r0_inv,
        })
    }

    /// KITTI axis convention without any offset: camera x = −LiDAR y,
    /// camera y = −LiDAR z, camera z = LiDAR x; typical KITTI intrinsics.
    /// Used to read and write labels of scenes that have no calib file.
    pub fn reference() -> Self {
        #[rustfmt::skip]
        let tr = Matrix3x4::new(
            0.0, -1.0, 0.0, 0.0,
            0.0, 0.0, -1.0, 0.0,
            1.0, 0.0, 0.0, 0.0,
        );
        #[rustfmt::skip]
        let p2 = Matrix3x4::new(
            721.5377, 0.0, 609.5593, 44.85728,
            0.0, 721.5377, 172.854, 0.2163791,
            0.0, 0.0, 1.0, 0.002745884,
        );
        Calibration::new(p2, Matrix3::identity(), tr, DEFAULT_IMAGE_SIZE).expect("reference calibration is valid")
    }

    pub fn velo_to_cam(&self, p: [f64; 3]) -> Vector3<f64> {
        self.tr_velo_to_cam * Vector4::new(p[0], p[1], p[2], 1.0)
    }

    /// LiDAR point to the rectified camera frame.
    pub fn velo_to_rect(&self, p: [f64; 3]) -> Vector3<f64> {
        self.r0_rect * self.velo_to_cam(p)
    }

    pub fn rect_to_velo(&self, q: Vector3<f64>) -> [f64; 3] {
        let cam = self.r0_inv * q;
        let rot = self.tr_velo_to_cam.fixed_view::<3, 3>(0, 0);
        let t = self.tr_velo_to_cam.column(3);
        let v = rot.transpose() * (cam - t);
        [v.x, v.y, v.z]
    }

    /// Pixel coordinates and rectified depth of a LiDAR point.
    pub fn project(&self, p: [f64; 3]) -> ([f64; 2], f64) {
        let rect = self.velo_to_rect(p);
        let img = self.p2 * Vector4::new(rect.x, rect.y, rect.z, 1.0);
        ([img.x / img.z, img.y / img.z], rect.z)
    }
}

/// One line of a KITTI label file, fields in file order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawLabel {
    pub type_name: String,
    pub truncation: f64,
    pub occlusion: i32,
    pub alpha: f64,
    /// `[left, top, right, bottom]` pixels.
    pub bbox: [f64; 4],
    /// `[h, w, l]` meters.
    pub dims_hwl: [f64; 3],
    /// Bottom center, rectified camera frame.
    pub location: [f64; 3],
    pub rotation_y: f64,
    pub score: Option<f64>,
}

impl RawLabel {
    pub fn is_dont_care(&self) -> bool {
        self.type_name == "DontCare"
    }

    pub fn bbox_height(&self) -> f64 {
        self.bbox[3] - self.bbox[1]
    }

    pub fn parse(line: &str, line_no: usize) -> Result<Self> {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 15 && fields.len() != 16 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected 15 or 16 fields, found {}", fields.len()),
            });
        }
        let num = |i: usize| -> Result<f64> {
            let v: f64 = fields[i].parse().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("field {} is not a number: `{}`", i + 1, fields[i]),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("field {} is not finite", i + 1),
                });
            }
            Ok(v)
        };
        let occlusion = num(2)?;
        if occlusion.fract() != 0.0 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("occlusion must be an integer, found `{}`", fields[2]),
            });
        }
        Ok(RawLabel {
            type_name: fields[0].to_string(),
            truncation: num(1)?,
            occlusion: occlusion as i32,
            alpha: num(3)?,
            bbox: [num(4)?, num(5)?, num(6)?, num(7)?],
            dims_hwl: [num(8)?, num(9)?, num(10)?],
            location: [num(11)?, num(12)?, num(13)?],
            rotation_y: num(14)?,
            score: if fields.len() == 16 { Some(num(15)?) } else { None },
        })
    }

    pub fn to_line(&self) -> String {
        let mut s = format!(
            "{} {} {} {} {} {} {} {} {} {} {} {} {} {} {}",
            self.type_name,
            self.truncation,
            self.occlusion,
            self.alpha,
            self.bbox[0],
            self.bbox[1],
            self.bbox[2],
            self.bbox[3],
            self.dims_hwl[0],
            self.dims_hwl[1],
            self.dims_hwl[2],
            self.location[0],
            self.location[1],
            self.location[2],
            self.rotation_y,
        );
        if let Some(score) = self.score {
            s.push_str(&format!(" {score}"));
        }
        s
    }

    pub fn to_annotation(&self, calib: &Calibration) -> Result<Annotation> {
        let [h, w, l] = self.dims_hwl;
        let bottom = calib.rect_to_velo(Vector3::from(self.location));
        let center = [bottom[0], bottom[1], bottom[2] + h / 2.0];
        let mut a = Annotation::new(
            self.type_name.clone(),
            center,
            Dims::new(w, l, h),
            -self.rotation_y - FRAC_PI_2,
        )?;
        a.difficulty = assign_difficulty(self);
        a.meta = Some(LabelMeta {
            truncation: self.truncation,
            occlusion: self.occlusion,
            alpha: self.alpha,
            bbox: self.bbox,
            score: self.score,
        });
        Ok(a)
    }

    pub fn from_annotation(a: &Annotation, calib: &Calibration) -> Self {
        let meta = a.meta.unwrap_or_else(|| LabelMeta::for_difficulty(a.difficulty));
        let bottom = [a.center[0], a.center[1], a.center[2] - a.dims.h / 2.0];
        let loc = calib.velo_to_rect(bottom);
        RawLabel {
            type_name: a.class_name.clone(),
            truncation: meta.truncation,
            occlusion: meta.occlusion,
            alpha: meta.alpha,
            bbox: meta.bbox,
            dims_hwl: [a.dims.h, a.dims.w, a.dims.l],
            location: [loc.x, loc.y, loc.z],
            rotation_y: wrap_pi(-a.yaw - FRAC_PI_2),
            score: meta.score,
        }
    }
}

/// Maps an angle to `[−π, π)`.
fn wrap_pi(theta: f64) -> f64 {
    normalize_angle(theta + PI) - PI
}

/// Annotations of one label file. `DontCare` lines are kept apart.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Labels {
    pub objects: Vec<Annotation>,
    pub dont_care: Vec<RawLabel>,
}

pub fn read_velodyne(bytes: &[u8]) -> Result<PointCloud> {
    if !bytes.len().is_multiple_of(POINT_BYTES) {
        return Err(Error::TruncatedFile { len: bytes.len() });
    }
    let mut points = Vec::with_capacity(bytes.len() / POINT_BYTES);
    for (index, chunk) in bytes.chunks_exact(POINT_BYTES).enumerate() {
        let f = |k: usize| f32::from_le_bytes(chunk[4 * k..4 * k + 4].try_into().unwrap()) as f64;
        let p = Point::new(f(0), f(1), f(2), f(3));
        if !p.is_finite() {
            return Err(Error::CorruptData { index });
        }
        points.push(p);
    }
    Ok(PointCloud::new(points))
}

/// Encodes a cloud as packed `f32` quadruples. Coordinates are rounded to
/// single precision.
pub fn write_velodyne(cloud: &PointCloud) -> Vec<u8> {
    let mut out = Vec::with_capacity(cloud.len() * POINT_BYTES);
    for p in &cloud.points {
        for v in [p.x, p.y, p.z, p.intensity] {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

pub fn read_labels(text: &str, calib: &Calibration) -> Result<Labels> {
    let mut labels = Labels::default();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let raw = RawLabel::parse(line, i + 1)?;
        if raw.is_dont_care() {
            labels.dont_care.push(raw);
        } else {
            let a = raw.to_annotation(calib).map_err(|e| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
            labels.objects.push(a);
        }
    }
    Ok(labels)
}

pub fn write_labels(annotations: &[Annotation], dont_care: &[RawLabel], calib: &Calibration) -> String {
    let mut out = String::new();
    for a in annotations {
        out.push_str(&RawLabel::from_annotation(a, calib).to_line());
        out.push('\n');
    }
    for raw in dont_care {
        out.push_str(&raw.to_line());
        out.push('\n');
    }
    out
}

pub fn read_calib(text: &str) -> Result<Calibration> {
    let mut p2 = None;
    let mut r0 = None;
    let mut tr = None;
    let mut image_size = DEFAULT_IMAGE_SIZE;
    for (i, line) in text.lines().enumerate() {
        let Some((key, values)) = line.split_once(':') else {
            continue;
        };
        let key = key.trim();
        if !matches!(key, "P2" | "R0_rect" | "Tr_velo_to_cam" | "image_size") {
            continue;
        }
        let nums = values
            .split_whitespace()
            .map(|v| v.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Parse {
                line: i + 1,
                message: format!("{key}: {e}"),
            })?;
        let expect = |n: usize| -> Result<()> {
            if nums.len() == n {
                Ok(())
            } else {
                Err(Error::Parse {
                    line: i + 1,
                    message: format!("{key}: expected {n} values, found {}", nums.len()),
                })
            }
        };
        match key {
            "P2" => {
                expect(12)?;
                p2 = Some(Matrix3x4::from_row_slice(&nums));
            }
            "R0_rect" => {
                expect(9)?;
                r0 = Some(Matrix3::from_row_slice(&nums));
            }
            "Tr_velo_to_cam" => {
                expect(12)?;
                tr = Some(Matrix3x4::from_row_slice(&nums));
            }
            _ => {
                expect(2)?;
                image_size = (nums[0] as u32, nums[1] as u32);
            }
        }
    }
    let p2 = p2.ok_or_else(|| Error::MissingCalibration("P2".into()))?;
    let r0 = r0.ok_or_else(|| Error::MissingCalibration("R0_rect".into()))?;
    let tr = tr.ok_or_else(|| Error::MissingCalibration("Tr_velo_to_cam".into()))?;
    Calibration::new(p2, r0, tr, image_size)
}

pub fn write_calib(calib: &Calibration) -> String {
    let row_major = |vals: Vec<f64>| vals.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ");
    let p2: Vec<f64> = calib.p2.transpose().iter().copied().collect();
    let r0: Vec<f64> = calib.r0_rect.transpose().iter().copied().collect();
    let tr: Vec<f64> = calib.tr_velo_to_cam.transpose().iter().copied().collect();
    let mut out = format!(
        "P2: {}\nR0_rect: {}\nTr_velo_to_cam: {}\n",
        row_major(p2),
        row_major(r0),
        row_major(tr)
    );
    if calib.image_size != DEFAULT_IMAGE_SIZE {
        out.push_str(&format!("image_size: {} {}\n", calib.image_size.0, calib.image_size.1));
    }
    out
}

/// Mask of points in front of the camera that project inside the image.
pub fn fov_mask(cloud: &PointCloud, calib: &Calibration) -> Vec<bool> {
    let (w, h) = (calib.image_size.0 as f64, calib.image_size.1 as f64);
    cloud
        .points
        .iter()
        .map(|p| {
            let ([u, v], depth) = calib.project(p.xyz());
            depth > 0.0 && (0.0..w).contains(&u) && (0.0..h).contains(&v)
        })
        .collect()
}

pub fn filter_fov(cloud: &PointCloud, calib: &Calibration) -> PointCloud {
    let mut out = cloud.clone();
    out.retain_mask(&fov_mask(cloud, calib));
    out
}

pub fn velodyne_path(root: &Path, id: &str) -> PathBuf {
    root.join("velodyne").join(format!("{id}.bin"))
}

pub fn label_path(root: &Path, id: &str) -> PathBuf {
    root.join("label_2").join(format!("{id}.txt"))
}

pub fn calib_path(root: &Path, id: &str) -> PathBuf {
    root.join("calib").join(format!("{id}.txt"))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Loads one scene from a KITTI-layout directory. A missing calib file
/// leaves `calib` empty and labels are read with [`Calibration::reference`];
/// a missing label file means no annotations.
pub fn read_scene(root: &Path, id: &str) -> Result<Scene> {
    let vpath = velodyne_path(root, id);
    let bytes = fs::read(&vpath).map_err(|e| Error::io(&vpath, e))?;
    let cloud = read_velodyne(&bytes)?;

    let cpath = calib_path(root, id);
    let calib = if cpath.exists() {
        Some(read_calib(&read_text(&cpath)?).map_err(|e| with_path(e, &cpath))?)
    } else {
        None
    };
    let label_calib = calib.clone().unwrap_or_else(Calibration::reference);

    let lpath = label_path(root, id);
    let labels = if lpath.exists() {
        read_labels(&read_text(&lpath)?, &label_calib).map_err(|e| with_path(e, &lpath))?
    } else {
        Labels::default()
    };
    Ok(Scene {
        scene_id: id.to_string(),
        cloud,
        annotations: labels.objects,
        dont_care: labels.dont_care,
        calib,
    })
}

fn with_path(e: Error, path: &Path) -> Error {
    match e {
        Error::Parse { line, message } => Error::Parse {
            line,
            message: format!("{}: {message}", path.display()),
        },
        other => other,
    }
}

/// Writes `velodyne/ID.bin`, `label_2/ID.txt` and, when present, `calib/ID.txt`.
pub fn write_scene(scene: &Scene, out_dir: &Path) -> Result<()> {
    let id = &scene.scene_id;
    write_file(&velodyne_path(out_dir, id), &write_velodyne(&scene.cloud))?;
    let label_calib = scene.calib.clone().unwrap_or_else(Calibration::reference);
    let text = write_labels(&scene.annotations, &scene.dont_care, &label_calib);
    write_file(&label_path(out_dir, id), text.as_bytes())?;
    if let Some(calib) = &scene.calib {
        write_file(&calib_path(out_dir, id), write_calib(calib).as_bytes())?;
    }
    Ok(())
}

/// Scene ids from a split file, one per line.
pub fn read_split(path: &Path) -> Result<Vec<String>> {
    Ok(read_text(path)?
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect())
}

/// All scene ids under `root/velodyne`, sorted.
pub fn list_scene_ids(root: &Path) -> Result<Vec<String>> {
    let dir = root.join("velodyne");
    let entries = fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut ids = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(&dir, e))?;
        let path = entry.path();
        if path.extension().is_some_and(|e| e == "bin") {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                ids.push(stem.to_string());
            }
        }
    }
    ids.sort();
    Ok(ids)
}

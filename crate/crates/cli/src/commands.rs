use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use lidar_aug_core::aug_sample::{scene_digest, scene_entries, SampleDatabase};
use lidar_aug_core::kitti_io::write_scene;
use lidar_aug_core::metrics::{evaluate, ApTable, Detection, EvalConfig};
use lidar_aug_core::policy::{apply_policy, list_presets, load_policy, preset};
use lidar_aug_core::stats::{dataset_stats, scene_stats};
use lidar_aug_core::{Annotation, Calibration, Difficulty, Error, Mode, Policy, RawLabel};
use serde::Serialize;

use crate::failure::{CliResult, Failure};
use crate::source::{pool, Source};
use crate::{AugmentArgs, BuildDbArgs, EvalArgs, StatsArgs};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const DB_SUMMARY_FILE: &str = "db_summary.json";

/// Writes to standard output; a closed pipe (`lidar-aug presets | head`) is not an error.
fn emit(text: &str) {
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| Failure::Data(format!("{}: {e}", dir.display())))
}

#[derive(Serialize)]
struct DbSummary {
    entries: usize,
    classes: BTreeMap<String, usize>,
    provenance: String,
    dataset_hash: String,
    min_points: usize,
}

pub fn build_db(args: &BuildDbArgs) -> CliResult<()> {
    let source = Source::open(&args.data)?;
    let pool = pool(&args.data)?;
    let min_points = args.min_points;
    let parts = source.map(&pool, |scene| {
        Ok((scene_entries(&scene, min_points), scene_digest(&scene)))
    })?;
    let db = SampleDatabase::from_scenes(parts, min_points);
    db.save(&args.output_root)?;

    let summary = DbSummary {
        entries: db.len(),
        classes: db.class_counts(),
        provenance: db.provenance.digest(),
        dataset_hash: db.provenance.dataset_hash.clone(),
        min_points,
    };
    let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    write_text(&args.output_root.join(DB_SUMMARY_FILE), &format!("{json}\n"))?;
    let mut text = format!("entries {}\n", summary.entries);
    for (class, count) in &summary.classes {
        text.push_str(&format!("  {class:<16} {count}\n"));
    }
    text.push_str(&format!("provenance {}\n", summary.provenance));
    emit(&text);
    Ok(())
}

/// A preset name, or a path to a JSON policy.
fn resolve_policy(spec: &str) -> CliResult<Policy> {
    if let Some(p) = preset(spec) {
        return Ok(p);
    }
    let path = Path::new(spec);
    if !path.is_file() {
        return Err(Failure::Config(format!(
            "`{spec}` is neither a preset name nor a policy file"
        )));
    }
    let text = fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    load_policy(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

#[derive(Serialize)]
struct SceneDelta {
    scene_id: String,
    points_in: usize,
    points_out: usize,
    annotations_in: usize,
    annotations_out: usize,
}

#[derive(Serialize)]
struct Manifest<'a> {
    policy: &'a Policy,
    seed: u64,
    mode: Mode,
    database: Option<String>,
    scenes: Vec<SceneDelta>,
}

pub fn augment(args: &AugmentArgs) -> CliResult<()> {
    let mut policy = resolve_policy(&args.policy)?;
    if let Some(seed) = args.seed {
        policy.seed = seed;
    }
    let db = match (&args.db, policy.needs_database(args.mode)) {
        (Some(dir), true) => Some(SampleDatabase::load(dir)?),
        (None, true) => {
            return Err(Failure::Config(format!(
                "policy `{}` oversamples; pass --db with a database from build-db",
                policy.name
            )))
        }
        (_, false) => None,
    };
    let source = Source::open(&args.data)?;
    let pool = pool(&args.data)?;
    create_dir(&args.output_root)?;

    let scenes = source.map(&pool, |scene| {
        let (points_in, annotations_in) = (scene.cloud.len(), scene.annotations.len());
        let out = apply_policy(scene, &policy, db.as_ref(), args.mode)?;
        write_scene(&out, &args.output_root)?;
        Ok(SceneDelta {
            scene_id: out.scene_id,
            points_in,
            points_out: out.cloud.len(),
            annotations_in,
            annotations_out: out.annotations.len(),
        })
    })?;

    let manifest = Manifest {
        policy: &policy,
        seed: policy.seed,
        mode: args.mode,
        database: db.as_ref().map(|d| d.provenance.digest()),
        scenes,
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_text(&args.output_root.join(MANIFEST_FILE), &format!("{json}\n"))?;
    eprintln!(
        "augmented {} scenes with {} (seed {}, {} mode) into {}",
        manifest.scenes.len(),
        policy.name,
        policy.seed,
        args.mode,
        args.output_root.display()
    );
    Ok(())
}

pub fn stats(args: &StatsArgs) -> CliResult<()> {
    let source = Source::open(&args.data)?;
    let pool = pool(&args.data)?;
    let restrict = !args.all_points;
    let per_scene = source.map(&pool, |scene| Ok(scene_stats(&scene, restrict)))?;
    let report = dataset_stats(&per_scene);
    let text = report.to_text();
    emit(&text);
    if let Some(dir) = &args.output_root {
        create_dir(dir)?;
        write_text(&dir.join("stats.txt"), &text)?;
        write_text(&dir.join("stats.json"), &format!("{}\n", report.to_json()))?;
    }
    Ok(())
}

/// Detections of one result file. Every non-DontCare line needs a score.
fn read_results(path: &Path, calib: &Calibration) -> CliResult<Vec<Detection>> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
    let at = |line: usize, e: Error| Failure::Data(format!("{}:{line}: {e}", path.display()));
    let mut dets = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let raw = RawLabel::parse(line, i + 1).map_err(|e| at(i + 1, e))?;
        if raw.is_dont_care() {
            continue;
        }
        let score = raw
            .score
            .ok_or_else(|| Failure::Data(format!("{}:{}: missing detection score", path.display(), i + 1)))?;
        let annotation = raw.to_annotation(calib).map_err(|e| at(i + 1, e))?;
        dets.push(Detection::new(annotation, score).map_err(|e| at(i + 1, e))?);
    }
    Ok(dets)
}

pub fn eval(args: &EvalArgs) -> CliResult<()> {
    if !args.results_dir.is_dir() {
        return Err(Failure::Data(format!(
            "{}: results directory not found",
            args.results_dir.display()
        )));
    }
    let source = Source::open(&args.data)?;
    let pool = pool(&args.data)?;
    let results_dir = &args.results_dir;
    let pairs: Vec<(String, Vec<Annotation>, Vec<Detection>)> = source.map(&pool, |scene| {
        let calib = scene.calib.clone().unwrap_or_else(Calibration::reference);
        let path = results_dir.join(format!("{}.txt", scene.scene_id));
        let dets = if path.exists() {
            read_results(&path, &calib)?
        } else {
            Vec::new()
        };
        Ok((scene.scene_id, scene.annotations, dets))
    })?;

    let mut gts = BTreeMap::new();
    let mut dets = BTreeMap::new();
    for (id, g, d) in pairs {
        gts.insert(id.clone(), g);
        dets.insert(id, d);
    }
    // result files without a matching scene
    let entries = fs::read_dir(results_dir).map_err(|e| Failure::Data(format!("{}: {e}", results_dir.display())))?;
    for entry in entries {
        let path = entry.map_err(|e| Failure::Data(e.to_string()))?.path();
        if path.extension().is_some_and(|e| e == "txt") {
            let id = path.file_stem().unwrap().to_string_lossy().into_owned();
            dets.entry(id).or_default();
        }
    }

    let cfg = EvalConfig {
        iou_threshold: args.iou_threshold,
        class_name: args.class_name.clone(),
        ..EvalConfig::default()
    };
    cfg.validate()?;
    let grid: &[usize] = if args.ap11 { &[40, 11] } else { &[40] };
    let table = evaluate(&dets, &gts, &cfg, grid)?;
    emit(&render_table(&table, grid));
    if let Some(dir) = &args.output_root {
        create_dir(dir)?;
        let json = serde_json::to_string_pretty(&table).expect("table serializes");
        write_text(&dir.join("eval.json"), &format!("{json}\n"))?;
    }
    Ok(())
}

fn render_table(table: &ApTable, grid: &[usize]) -> String {
    let mut out = format!("{} 3D AP @ IoU {:.2}\n", table.class_name, table.iou_threshold);
    out.push_str(&format!("{:<10}", "difficulty"));
    for rp in grid {
        out.push_str(&format!("{:>10}", format!("AP{rp}")));
    }
    out.push('\n');
    for d in [Difficulty::Easy, Difficulty::Moderate, Difficulty::Hard] {
        out.push_str(&format!("{:<10}", d.as_str()));
        for &rp in grid {
            out.push_str(&format!("{:>10.4}", 100.0 * table.get(d, rp).unwrap_or(0.0)));
        }
        out.push('\n');
    }
    out
}

pub fn presets() -> CliResult<()> {
    let mut text = String::new();
    for (_, policy) in list_presets() {
        text.push_str(&serde_json::to_string(&policy).expect("policy serializes"));
        text.push('\n');
    }
    emit(&text);
    Ok(())
}

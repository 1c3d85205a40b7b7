#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use sha2::{Digest, Sha256};

pub fn lidar_aug(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lidar-aug"))
        .args(args)
        .env_remove("LIDAR_AUG_SEED")
        .output()
        .expect("binary runs")
}

pub fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Relative path → SHA-256 of the contents, for every file under `root`.
pub fn tree_hashes(root: &Path) -> BTreeMap<String, String> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, String>) {
        for entry in fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, hex::encode(Sha256::digest(fs::read(&path).unwrap())));
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

/// One hash over a whole tree.
pub fn tree_hash(root: &Path) -> String {
    let mut h = Sha256::new();
    for (path, digest) in tree_hashes(root) {
        h.update(path.as_bytes());
        h.update([0]);
        h.update(digest.as_bytes());
    }
    hex::encode(h.finalize())
}

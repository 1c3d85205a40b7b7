//! Seed derivation for reproducible per-scene, per-step random streams.
//!
//! The scene seed is the first 8 bytes (little-endian) of
//! `SHA-256("lidar-aug/scene/v1" || policy_seed as u64 LE || scene_id UTF-8)`.
//! Each augmentation step then draws from its own ChaCha8 stream of that
//! seed, selected by the step's fixed stream number, so enabling one step
//! never shifts the draws of another. Outputs are stable for a given release;
//! changing the hash tag or the generator is a breaking change.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type StepRng = ChaCha8Rng;

const SCENE_TAG: &[u8] = b"lidar-aug/scene/v1";

pub fn scene_seed(policy_seed: u64, scene_id: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(SCENE_TAG);
    hasher.update(policy_seed.to_le_bytes());
    hasher.update(scene_id.as_bytes());
    let digest = hasher.finalize();
    let mut head = [0u8; 8];
    head.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(head)
}

pub fn step_rng(scene_seed: u64, stream: u64) -> StepRng {
    let mut rng = ChaCha8Rng::seed_from_u64(scene_seed);
    rng.set_stream(stream);
    rng
}

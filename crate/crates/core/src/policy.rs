//! Augmentation policies: a seed plus at most one configured step of each
//! kind, executed in a fixed canonical order.
//!
//! The JSON form is
//!
//! ```json
//! {"name": "mine", "seed": 7, "steps": {"global_rotate": {"beta": 0.785}}}
//! ```
//!
//! where an absent step key means the step is disabled. The 43 presets of
//! the augmentation study are available through [`list_presets`].

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::aug_filter::{filter_by_difficulty, filter_by_points, DifficultyFilterParams, PointCountFilterParams};
use crate::aug_global::{
    global_rotate, global_scale, global_translate, ground_removal, random_flip, FlipParams, GlobalRotateParams,
    GlobalScaleParams, GlobalTranslateParams, GroundRemovalParams,
};
use crate::aug_local::{
    local_rotate, local_scale, local_translate, LocalRotateParams, LocalScaleParams, LocalTranslateParams,
};
use crate::aug_sample::{oversample, OversampleParams, SampleDatabase};
use crate::error::{Error, Result};
use crate::geom::{Difficulty, Scene};
use crate::rng::{scene_seed, step_rng};

pub const PRESET_COUNT: usize = 43;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepKind {
    FilterDifficulty,
    FilterPoints,
    Oversample,
    LocalTranslate,
    LocalRotate,
    LocalScale,
    RandomFlip,
    GlobalRotate,
    GlobalScale,
    GlobalTranslate,
    GroundRemoval,
}

impl StepKind {
    /// Execution order.
    pub const ALL: [StepKind; 11] = [
        StepKind::FilterDifficulty,
        StepKind::FilterPoints,
        StepKind::Oversample,
        StepKind::LocalTranslate,
        StepKind::LocalRotate,
        StepKind::LocalScale,
        StepKind::RandomFlip,
        StepKind::GlobalRotate,
        StepKind::GlobalScale,
        StepKind::GlobalTranslate,
        StepKind::GroundRemoval,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            StepKind::FilterDifficulty => "filter_difficulty",
            StepKind::FilterPoints => "filter_points",
            StepKind::Oversample => "oversample",
            StepKind::LocalTranslate => "local_translate",
            StepKind::LocalRotate => "local_rotate",
            StepKind::LocalScale => "local_scale",
            StepKind::RandomFlip => "random_flip",
            StepKind::GlobalRotate => "global_rotate",
            StepKind::GlobalScale => "global_scale",
            StepKind::GlobalTranslate => "global_translate",
            StepKind::GroundRemoval => "ground_removal",
        }
    }

    /// RNG stream of the step. Each kind owns a stream, so enabling one
    /// step never shifts the draws of another.
    pub fn stream(&self) -> u64 {
        *self as u64 + 1
    }
}

impl fmt::Display for StepKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Train,
    Test,
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Mode::Train),
            "test" => Ok(Mode::Test),
            other => Err(Error::Config(format!(
                "unknown mode `{other}` (expected train or test)"
            ))),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Train => "train",
            Mode::Test => "test",
        })
    }
}

/// Step parameters by kind; `None` disables the step. Field order is the
/// canonical execution order.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Steps {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filter_difficulty: Option<DifficultyFilterParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filter_points: Option<PointCountFilterParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oversample: Option<OversampleParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub local_translate: Option<LocalTranslateParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub local_rotate: Option<LocalRotateParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub local_scale: Option<LocalScaleParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub random_flip: Option<FlipParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub global_rotate: Option<GlobalRotateParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub global_scale: Option<GlobalScaleParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub global_translate: Option<GlobalTranslateParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_removal: Option<GroundRemovalParams>,
}

impl Steps {
    pub fn is_enabled(&self, kind: StepKind) -> bool {
        match kind {
            StepKind::FilterDifficulty => self.filter_difficulty.is_some(),
            StepKind::FilterPoints => self.filter_points.is_some(),
            StepKind::Oversample => self.oversample.is_some(),
            StepKind::LocalTranslate => self.local_translate.is_some(),
            StepKind::LocalRotate => self.local_rotate.is_some(),
            StepKind::LocalScale => self.local_scale.is_some(),
            StepKind::RandomFlip => self.random_flip.is_some(),
            StepKind::GlobalRotate => self.global_rotate.is_some(),
            StepKind::GlobalScale => self.global_scale.is_some(),
            StepKind::GlobalTranslate => self.global_translate.is_some(),
            StepKind::GroundRemoval => self.ground_removal.is_some(),
        }
    }

    /// Whether the step runs in test mode. Only ground removal can.
    pub fn runs_at_test(&self, kind: StepKind) -> bool {
        kind == StepKind::GroundRemoval && self.ground_removal.is_some_and(|g| g.apply_at_test)
    }

    fn validate_step(&self, kind: StepKind) -> Result<()> {
        match kind {
            StepKind::FilterDifficulty => self.filter_difficulty.as_ref().map_or(Ok(()), |p| p.validate()),
            StepKind::FilterPoints => self.filter_points.map_or(Ok(()), |p| p.validate()),
            StepKind::Oversample => self.oversample.as_ref().map_or(Ok(()), |p| p.validate()),
            StepKind::LocalTranslate => self.local_translate.map_or(Ok(()), |p| p.validate()),
            StepKind::LocalRotate => self.local_rotate.map_or(Ok(()), |p| p.validate()),
            StepKind::LocalScale => self.local_scale.map_or(Ok(()), |p| p.validate()),
            StepKind::RandomFlip => self.random_flip.map_or(Ok(()), |p| p.validate()),
            StepKind::GlobalRotate => self.global_rotate.map_or(Ok(()), |p| p.validate()),
            StepKind::GlobalScale => self.global_scale.map_or(Ok(()), |p| p.validate()),
            StepKind::GlobalTranslate => self.global_translate.map_or(Ok(()), |p| p.validate()),
            StepKind::GroundRemoval => self.ground_removal.map_or(Ok(()), |p| p.validate()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Policy {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub steps: Steps,
}

impl Policy {
    pub fn empty(name: impl Into<String>) -> Self {
        Policy {
            name: name.into(),
            ..Policy::default()
        }
    }

    /// Enabled steps in execution order.
    pub fn enabled(&self) -> Vec<StepKind> {
        StepKind::ALL
            .into_iter()
            .filter(|k| self.steps.is_enabled(*k))
            .collect()
    }

    pub fn needs_database(&self, mode: Mode) -> bool {
        mode == Mode::Train && self.steps.oversample.is_some()
    }

    pub fn validate(&self) -> Result<()> {
        for kind in StepKind::ALL {
            self.steps
                .validate_step(kind)
                .map_err(|e| Error::Config(format!("steps.{kind}: {e}")))?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("policy serializes")
    }
}

/// Parses and validates a JSON policy.
pub fn load_policy(config_text: &str) -> Result<Policy> {
    let policy: Policy = serde_json::from_str(config_text).map_err(|e| Error::Config(e.to_string()))?;
    policy.validate()?;
    Ok(policy)
}

/// Runs the enabled steps on one scene. In test mode only steps flagged
/// for test time run. Each step draws from its own stream of the scene's
/// seed, derived from `(policy.seed, scene_id)`.
pub fn apply_policy(scene: Scene, policy: &Policy, db: Option<&SampleDatabase>, mode: Mode) -> Result<Scene> {
    if policy.needs_database(mode) && db.is_none() {
        return Err(Error::Config(format!(
            "policy `{}` oversamples but no sample database was given",
            policy.name
        )));
    }
    let seed = scene_seed(policy.seed, &scene.scene_id);
    let steps = &policy.steps;
    let mut scene = scene;
    for kind in StepKind::ALL {
        let active = match mode {
            Mode::Train => steps.is_enabled(kind),
            Mode::Test => steps.runs_at_test(kind),
        };
        if !active {
            continue;
        }
        let mut rng = step_rng(seed, kind.stream());
        scene = match kind {
            StepKind::FilterDifficulty => filter_by_difficulty(scene, steps.filter_difficulty.as_ref().unwrap()),
            StepKind::FilterPoints => filter_by_points(scene, steps.filter_points.as_ref().unwrap()),
            StepKind::Oversample => oversample(scene, db.unwrap(), steps.oversample.as_ref().unwrap(), &mut rng),
            StepKind::LocalTranslate => local_translate(scene, steps.local_translate.as_ref().unwrap(), &mut rng),
            StepKind::LocalRotate => local_rotate(scene, steps.local_rotate.as_ref().unwrap(), &mut rng),
            StepKind::LocalScale => local_scale(scene, steps.local_scale.as_ref().unwrap(), &mut rng),
            StepKind::RandomFlip => random_flip(scene, steps.random_flip.as_ref().unwrap(), &mut rng),
            StepKind::GlobalRotate => global_rotate(scene, steps.global_rotate.as_ref().unwrap(), &mut rng),
            StepKind::GlobalScale => global_scale(scene, steps.global_scale.as_ref().unwrap(), &mut rng),
            StepKind::GlobalTranslate => global_translate(scene, steps.global_translate.as_ref().unwrap(), &mut rng),
            StepKind::GroundRemoval => ground_removal(scene, steps.ground_removal.as_ref().unwrap())?,
        };
    }
    Ok(scene)
}

fn filter(drop: &[Difficulty]) -> Option<DifficultyFilterParams> {
    Some(DifficultyFilterParams {
        drop: drop.iter().copied().collect(),
    })
}

/// PointPillars' own policy (#36).
fn pointpillars() -> Steps {
    Steps {
        global_translate: Some(GlobalTranslateParams { sigma: 0.2 }),
        global_rotate: Some(GlobalRotateParams { beta: PI / 4.0 }),
        global_scale: Some(GlobalScaleParams { t: 0.05 }),
        random_flip: Some(FlipParams::default()),
        local_translate: Some(LocalTranslateParams { sigma: 0.25 }),
        local_rotate: Some(LocalRotateParams { beta: PI / 20.0 }),
        filter_difficulty: filter(&[Difficulty::Unknown]),
        filter_points: Some(PointCountFilterParams { min_points: 5 }),
        oversample: Some(OversampleParams::new(15)),
        ..Steps::default()
    }
}

fn preset_steps(index: usize) -> Steps {
    use Difficulty::{Hard, Moderate, Unknown};
    let none = Steps::default;
    match index {
        0 => none(),
        1..=3 => Steps {
            global_translate: Some(GlobalTranslateParams {
                sigma: [0.1, 0.2, 0.4][index - 1],
            }),
            ..none()
        },
        4..=6 => Steps {
            global_rotate: Some(GlobalRotateParams {
                beta: PI / [8.0, 4.0, 2.0][index - 4],
            }),
            ..none()
        },
        7..=9 => Steps {
            global_scale: Some(GlobalScaleParams {
                t: [0.05, 0.10, 0.25][index - 7],
            }),
            ..none()
        },
        10 => Steps {
            random_flip: Some(FlipParams::default()),
            ..none()
        },
        11..=14 => Steps {
            ground_removal: Some(GroundRemovalParams::new([1.0, 5.0, 10.0, 15.0][index - 11])),
            ..none()
        },
        15..=18 => Steps {
            local_translate: Some(LocalTranslateParams {
                sigma: [0.05, 0.25, 0.5, 1.0][index - 15],
            }),
            ..none()
        },
        19..=21 => Steps {
            local_rotate: Some(LocalRotateParams {
                beta: PI / [20.0, 10.0, 4.0][index - 19],
            }),
            ..none()
        },
        22..=24 => Steps {
            local_scale: Some(LocalScaleParams {
                t: [0.05, 0.10, 0.25][index - 22],
            }),
            ..none()
        },
        25 => Steps {
            filter_difficulty: filter(&[Unknown]),
            ..none()
        },
        26 => Steps {
            filter_difficulty: filter(&[Unknown, Hard]),
            ..none()
        },
        27 => Steps {
            filter_difficulty: filter(&[Unknown, Hard, Moderate]),
            ..none()
        },
        28..=30 => Steps {
            filter_points: Some(PointCountFilterParams {
                min_points: [1, 5, 10][index - 28],
            }),
            ..none()
        },
        31..=35 => Steps {
            oversample: Some(OversampleParams::new([5, 10, 15, 20, 25][index - 31])),
            ..none()
        },
        36 => pointpillars(),
        37 => Steps {
            oversample: None,
            ..pointpillars()
        },
        38 => Steps {
            global_rotate: Some(GlobalRotateParams { beta: PI / 2.0 }),
            oversample: Some(OversampleParams::new(15)),
            ..none()
        },
        39 => Steps {
            local_translate: None,
            ..pointpillars()
        },
        40 => Steps {
            local_scale: Some(LocalScaleParams { t: 0.05 }),
            ..preset_steps(39)
        },
        41 => Steps {
            filter_difficulty: filter(&[Unknown, Hard]),
            ..preset_steps(40)
        },
        42 => Steps {
            global_rotate: Some(GlobalRotateParams { beta: PI / 2.0 }),
            ..preset_steps(41)
        },
        _ => unreachable!("preset index out of range"),
    }
}

/// The presets `policy0` … `policy42`, in order.
pub fn list_presets() -> Vec<(String, Policy)> {
    (0..PRESET_COUNT)
        .map(|i| {
            let name = format!("policy{i}");
            let policy = Policy {
                name: name.clone(),
                seed: 0,
                steps: preset_steps(i),
            };
            (name, policy)
        })
        .collect()
}

pub fn preset(name: &str) -> Option<Policy> {
    let index: usize = name.strip_prefix("policy")?.parse().ok()?;
    if index >= PRESET_COUNT || name != format!("policy{index}") {
        return None;
    }
    Some(Policy {
        name: name.to_string(),
        seed: 0,
        steps: preset_steps(index),
    })
}

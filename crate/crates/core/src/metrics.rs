//! KITTI-style detection evaluation: greedy 3D IoU matching with
//! difficulty-aware ignore rules, and average precision from interpolated
//! precision sampled at 40 or 11 recall points.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{iou_3d, Annotation, Difficulty};

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub annotation: Annotation,
    pub score: f64,
}

impl Detection {
    pub fn new(annotation: Annotation, score: f64) -> Result<Self> {
        if !score.is_finite() {
            return Err(Error::invalid("score", format!("{score} is not finite")));
        }
        Ok(Detection { annotation, score })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub iou_threshold: f64,
    /// 40 (recall grid 1/40 … 1) or 11 (recall grid 0, 0.1 … 1).
    pub recall_points: usize,
    pub difficulty: Difficulty,
    pub class_name: String,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            iou_threshold: 0.7,
            recall_points: 40,
            difficulty: Difficulty::Moderate,
            class_name: "Car".to_string(),
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.iou_threshold > 0.0 && self.iou_threshold <= 1.0) {
            return Err(Error::invalid(
                "iou_threshold",
                format!("{} outside (0, 1]", self.iou_threshold),
            ));
        }
        if self.recall_points != 11 && self.recall_points != 40 {
            return Err(Error::invalid(
                "recall_points",
                format!("{} is neither 11 nor 40", self.recall_points),
            ));
        }
        if self.difficulty == Difficulty::Unknown {
            return Err(Error::invalid("difficulty", "evaluation needs easy, moderate or hard"));
        }
        Ok(())
    }
}

/// Outcome of matching one scene: counted detections in descending score
/// order (`true` for a true positive) and the number of counted ground
/// truths. Detections matched to ignored ground truths are left out.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MatchResult {
    pub flags: Vec<bool>,
    pub scores: Vec<f64>,
    pub counted_gt: usize,
}

impl MatchResult {
    pub fn true_positives(&self) -> usize {
        self.flags.iter().filter(|f| **f).count()
    }

    pub fn false_positives(&self) -> usize {
        self.flags.len() - self.true_positives()
    }
}

/// Detections of other classes are skipped. Ground truths of other classes
/// are dropped; those of the class but harder than `cfg.difficulty` (or of
/// unknown difficulty) are ignored.
///
/// Detections are visited by descending score (ties keep input order).
/// Each takes the unmatched counted ground truth of highest IoU at or above
/// the threshold; failing that, an unmatched ignored one, which removes the
/// detection from the tally; otherwise it is a false positive.
pub fn match_detections(dets: &[Detection], gts: &[Annotation], cfg: &EvalConfig) -> MatchResult {
    let gts: Vec<&Annotation> = gts.iter().filter(|g| g.class_name == cfg.class_name).collect();
    let ignored: Vec<bool> = gts.iter().map(|g| g.difficulty > cfg.difficulty).collect();
    let mut taken = vec![false; gts.len()];

    let mut order: Vec<&Detection> = dets
        .iter()
        .filter(|d| d.annotation.class_name == cfg.class_name)
        .collect();
    order.sort_by(|a, b| b.score.total_cmp(&a.score));

    let mut result = MatchResult {
        counted_gt: ignored.iter().filter(|i| !**i).count(),
        ..MatchResult::default()
    };
    for det in order {
        let mut best: [Option<(usize, f64)>; 2] = [None, None];
        for (j, gt) in gts.iter().enumerate() {
            if taken[j] {
                continue;
            }
            let iou = iou_3d(&det.annotation, gt);
            if iou < cfg.iou_threshold {
                continue;
            }
            let slot = &mut best[ignored[j] as usize];
            if slot.is_none_or(|(_, b)| iou > b) {
                *slot = Some((j, iou));
            }
        }
        match best {
            [Some((j, _)), _] => {
                taken[j] = true;
                result.flags.push(true);
                result.scores.push(det.score);
            }
            [None, Some((j, _))] => taken[j] = true,
            [None, None] => {
                result.flags.push(false);
                result.scores.push(det.score);
            }
        }
    }
    result
}

/// Mean interpolated precision over the recall grid. `flags` are in
/// descending score order. Recall thresholds are compared in integers, so
/// a recall of exactly `k / R` reaches the `k`-th grid point.
pub fn average_precision(flags: &[bool], counted_gt: usize, recall_points: usize) -> f64 {
    if counted_gt == 0 || flags.is_empty() {
        return 0.0;
    }
    let (grid, first): (usize, usize) = match recall_points {
        40 => (40, 1),
        11 => (10, 0),
        other => panic!("unsupported recall point count {other}"),
    };
    let mut tp = Vec::with_capacity(flags.len());
    let mut hits = 0usize;
    for f in flags {
        hits += *f as usize;
        tp.push(hits);
    }
    let precision = |i: usize| tp[i] as f64 / (i + 1) as f64;
    // best[i]: prefix with the highest precision among prefixes i.. (recall at least that of i)
    let mut best: Vec<usize> = (0..tp.len()).collect();
    for i in (0..tp.len() - 1).rev() {
        if precision(best[i + 1]) > precision(i) {
            best[i] = best[i + 1];
        }
    }

    // sampled values come in runs; each run adds count · tp / n in one division
    let mut sum = 0.0;
    let mut cursor = 0usize;
    let mut run: Option<(Option<usize>, usize)> = None;
    let flush = |(at, count): (Option<usize>, usize)| at.map_or(0.0, |i| (count * tp[i]) as f64 / (i + 1) as f64);
    for k in first..=grid {
        while cursor < tp.len() && tp[cursor] * grid < k * counted_gt {
            cursor += 1;
        }
        let at = (cursor < tp.len()).then(|| best[cursor]);
        run = match run {
            Some((prev, count)) if prev == at => Some((prev, count + 1)),
            Some(done) => {
                sum += flush(done);
                Some((at, 1))
            }
            None => Some((at, 1)),
        };
    }
    if let Some(done) = run {
        sum += flush(done);
    }
    sum / recall_points as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApEntry {
    pub difficulty: Difficulty,
    pub recall_points: usize,
    pub ap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApTable {
    pub class_name: String,
    pub iou_threshold: f64,
    pub entries: Vec<ApEntry>,
}

impl ApTable {
    pub fn get(&self, difficulty: Difficulty, recall_points: usize) -> Option<f64> {
        self.entries
            .iter()
            .find(|e| e.difficulty == difficulty && e.recall_points == recall_points)
            .map(|e| e.ap)
    }

    /// The ranking metric: moderate difficulty at the given recall grid.
    pub fn moderate(&self, recall_points: usize) -> Option<f64> {
        self.get(Difficulty::Moderate, recall_points)
    }
}

/// Pools per-scene matches and computes AP for easy, moderate and hard at
/// every requested recall grid. Scene maps must share the same keys. Ties
/// in score across scenes are broken by scene id, then detection order.
pub fn evaluate(
    dets: &BTreeMap<String, Vec<Detection>>,
    gts: &BTreeMap<String, Vec<Annotation>>,
    base: &EvalConfig,
    recall_grid: &[usize],
) -> Result<ApTable> {
    let missing: Vec<String> = dets
        .keys()
        .filter(|k| !gts.contains_key(*k))
        .chain(gts.keys().filter(|k| !dets.contains_key(*k)))
        .cloned()
        .collect();
    if !missing.is_empty() {
        return Err(Error::Alignment { missing });
    }
    let mut entries = Vec::new();
    for difficulty in [Difficulty::Easy, Difficulty::Moderate, Difficulty::Hard] {
        let cfg = EvalConfig {
            difficulty,
            ..base.clone()
        };
        let mut pooled: Vec<(f64, bool)> = Vec::new();
        let mut counted_gt = 0;
        for (id, scene_gts) in gts {
            let m = match_detections(&dets[id], scene_gts, &cfg);
            counted_gt += m.counted_gt;
            pooled.extend(m.scores.into_iter().zip(m.flags));
        }
        pooled.sort_by(|a, b| b.0.total_cmp(&a.0));
        let flags: Vec<bool> = pooled.into_iter().map(|(_, f)| f).collect();
        for &rp in recall_grid {
            EvalConfig {
                recall_points: rp,
                ..cfg.clone()
            }
            .validate()?;
            entries.push(ApEntry {
                difficulty,
                recall_points: rp,
                ap: average_precision(&flags, counted_gt, rp),
            });
        }
    }
    Ok(ApTable {
        class_name: base.class_name.clone(),
        iou_threshold: base.iou_threshold,
        entries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Dims;
    use proptest::prelude::*;

    /// Step-function oracle: for each grid recall, the best precision over
    /// every prefix reaching it, computed directly from the PR points.
    fn brute_ap(flags: &[bool], gt: usize, rp: usize) -> f64 {
        if gt == 0 {
            return 0.0;
        }
        let grid: Vec<f64> = if rp == 40 {
            (1..=40).map(|k| k as f64 / 40.0).collect()
        } else {
            (0..=10).map(|k| k as f64 / 10.0).collect()
        };
        let points: Vec<(f64, f64)> = (0..flags.len())
            .map(|i| {
                let tp = flags[..=i].iter().filter(|f| **f).count();
                (tp as f64 / gt as f64, tp as f64 / (i + 1) as f64)
            })
            .collect();
        grid.iter()
            .map(|r| {
                points
                    .iter()
                    .filter(|(rec, _)| rec >= r)
                    .map(|(_, p)| *p)
                    .fold(0.0, f64::max)
            })
            .sum::<f64>()
            / grid.len() as f64
    }

    fn car(x: f64, d: Difficulty) -> Annotation {
        Annotation::new("Car", [x, 0.0, 0.0], Dims::new(1.6, 4.0, 1.5), 0.0)
            .unwrap()
            .with_difficulty(d)
    }

    fn det(a: &Annotation, score: f64) -> Detection {
        Detection::new(a.clone(), score).unwrap()
    }

    #[test]
    fn hand_fixture_is_five_sixths() {
        let flags = [true, false, true];
        assert_eq!(average_precision(&flags, 2, 40), 5.0 / 6.0);
        assert!((brute_ap(&flags, 2, 40) - 5.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn trivial_ap_values() {
        assert_eq!(average_precision(&[true, true, true], 3, 40), 1.0);
        assert_eq!(average_precision(&[true, true, true], 3, 11), 1.0);
        assert_eq!(average_precision(&[], 3, 40), 0.0);
        assert_eq!(average_precision(&[true], 0, 40), 0.0);
        // half recall at full precision
        assert_eq!(average_precision(&[true], 2, 40), 0.5);
        assert!((average_precision(&[true], 2, 11) - 6.0 / 11.0).abs() < 1e-15);
    }

    #[test]
    fn perfect_and_empty_detectors() {
        let gts: Vec<Annotation> = (0..4).map(|i| car(10.0 * i as f64, Difficulty::Easy)).collect();
        let dets: Vec<Detection> = gts.iter().enumerate().map(|(i, g)| det(g, 0.1 * i as f64)).collect();
        let m = match_detections(&dets, &gts, &EvalConfig::default());
        assert_eq!((m.true_positives(), m.false_positives(), m.counted_gt), (4, 0, 4));
        let m = match_detections(&[], &gts, &EvalConfig::default());
        assert_eq!((m.true_positives(), m.false_positives(), m.counted_gt), (0, 0, 4));
    }

    #[test]
    fn duplicates_yield_one_true_positive() {
        let g = car(0.0, Difficulty::Easy);
        let dets = vec![det(&g, 0.9), det(&g, 0.8), det(&g, 0.7)];
        let m = match_detections(&dets, &[g], &EvalConfig::default());
        assert_eq!(m.flags, vec![true, false, false]);
    }

    /// Enumerates every assignment of detections (in score order) to
    /// ground truths consistent with the greedy rule and checks the tallies.
    fn brute_match(dets: &[Detection], gts: &[Annotation], cfg: &EvalConfig) -> (usize, usize) {
        fn go(
            i: usize,
            dets: &[Detection],
            gts: &[Annotation],
            cfg: &EvalConfig,
            taken: &mut Vec<bool>,
        ) -> (usize, usize) {
            if i == dets.len() {
                return (0, 0);
            }
            let ignored = |j: usize| gts[j].difficulty > cfg.difficulty;
            let ok = |j: usize, taken: &[bool]| !taken[j] && iou_3d(&dets[i].annotation, &gts[j]) >= cfg.iou_threshold;
            // candidates: counted ones first with max IoU, then ignored
            let counted: Vec<usize> = (0..gts.len()).filter(|&j| !ignored(j) && ok(j, taken)).collect();
            let skipped: Vec<usize> = (0..gts.len()).filter(|&j| ignored(j) && ok(j, taken)).collect();
            let pick = |c: &[usize]| {
                c.iter().copied().max_by(|&a, &b| {
                    iou_3d(&dets[i].annotation, &gts[a]).total_cmp(&iou_3d(&dets[i].annotation, &gts[b]))
                })
            };
            if let Some(j) = pick(&counted) {
                taken[j] = true;
                let (tp, fp) = go(i + 1, dets, gts, cfg, taken);
                taken[j] = false;
                (tp + 1, fp)
            } else if let Some(j) = pick(&skipped) {
                taken[j] = true;
                let r = go(i + 1, dets, gts, cfg, taken);
                taken[j] = false;
                r
            } else {
                let (tp, fp) = go(i + 1, dets, gts, cfg, taken);
                (tp, fp + 1)
            }
        }
        let mut sorted = dets.to_vec();
        sorted.sort_by(|a, b| b.score.total_cmp(&a.score));
        go(0, &sorted, gts, cfg, &mut vec![false; gts.len()])
    }

    #[test]
    fn hard_ground_truth_is_ignored_under_easy() {
        let easy = car(0.0, Difficulty::Easy);
        let hard = car(20.0, Difficulty::Hard);
        let far = car(40.0, Difficulty::Easy);
        let gts = vec![easy.clone(), hard.clone()];
        let dets = vec![det(&easy, 0.9), det(&hard, 0.8), det(&far, 0.7)];
        let cfg = EvalConfig {
            difficulty: Difficulty::Easy,
            ..EvalConfig::default()
        };
        let m = match_detections(&dets, &gts, &cfg);
        assert_eq!(m.flags, vec![true, false]);
        assert_eq!(m.counted_gt, 1);
        assert_eq!(brute_match(&dets, &gts, &cfg), (1, 1));

        let hard_cfg = EvalConfig {
            difficulty: Difficulty::Hard,
            ..EvalConfig::default()
        };
        let m = match_detections(&dets, &gts, &hard_cfg);
        assert_eq!((m.true_positives(), m.false_positives(), m.counted_gt), (2, 1, 2));
    }

    #[test]
    fn evaluate_pools_and_checks_alignment() {
        let mut gts = BTreeMap::new();
        let mut dets = BTreeMap::new();
        let g = vec![car(0.0, Difficulty::Easy), car(10.0, Difficulty::Moderate)];
        dets.insert("a".to_string(), g.iter().map(|a| det(a, 1.0)).collect());
        gts.insert("a".to_string(), g);
        let table = evaluate(&dets, &gts, &EvalConfig::default(), &[40, 11]).unwrap();
        assert_eq!(table.entries.len(), 6);
        assert!(table.entries.iter().all(|e| e.ap == 1.0));
        assert_eq!(table.moderate(40), Some(1.0));

        gts.insert("b".to_string(), vec![]);
        match evaluate(&dets, &gts, &EvalConfig::default(), &[40]) {
            Err(Error::Alignment { missing }) => assert_eq!(missing, vec!["b".to_string()]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn config_validation() {
        assert!(EvalConfig::default().validate().is_ok());
        assert!(EvalConfig {
            recall_points: 20,
            ..EvalConfig::default()
        }
        .validate()
        .is_err());
        assert!(EvalConfig {
            iou_threshold: 0.0,
            ..EvalConfig::default()
        }
        .validate()
        .is_err());
    }

    proptest! {
        #[test]
        fn ap_matches_brute_force(flags in prop::collection::vec(any::<bool>(), 0..50), extra in 0usize..10) {
            let gt = flags.iter().filter(|f| **f).count() + extra;
            for rp in [11, 40] {
                let ap = average_precision(&flags, gt, rp);
                prop_assert!((ap - brute_ap(&flags, gt, rp)).abs() < 1e-9);
                prop_assert!((0.0..=1.0).contains(&ap));
            }
        }

        #[test]
        fn deleting_a_false_positive_never_lowers_ap(flags in prop::collection::vec(any::<bool>(), 1..40), pick in any::<prop::sample::Index>()) {
            let gt = flags.iter().filter(|f| **f).count().max(1);
            let fps: Vec<usize> = (0..flags.len()).filter(|&i| !flags[i]).collect();
            prop_assume!(!fps.is_empty());
            let mut fewer = flags.clone();
            fewer.remove(fps[pick.index(fps.len())]);
            for rp in [11, 40] {
                prop_assert!(average_precision(&fewer, gt, rp) >= average_precision(&flags, gt, rp) - 1e-15);
            }
        }

        #[test]
        fn constant_precision_curves_agree(n in 1usize..30) {
            // precision 1 everywhere, full recall
            let flags = vec![true; n];
            prop_assert_eq!(average_precision(&flags, n, 40), average_precision(&flags, n, 11));
            // precision 1/2 everywhere, full recall
            let half: Vec<bool> = (0..2 * n).map(|i| i % 2 == 1).collect();
            prop_assert!((average_precision(&half, n, 40) - average_precision(&half, n, 11)).abs() < 1e-15);
        }
    }
}

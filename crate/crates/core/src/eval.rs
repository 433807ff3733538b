//! nuScenes-style detection metrics.
//!
//! Detections are matched to ground truth of the same class by BEV center
//! distance, greedily in order of descending fused score. AP is the 101-point
//! interpolated precision over recall with operating points below 10% recall
//! or 10% precision discarded, renormalized by `1 / 0.9`. True-positive errors
//! are averaged over matched pairs at a 2 m threshold. Classes are those that
//! appear in the ground truth.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::Framed;
use crate::types::{normalize_yaw, Box3D, Detection};

pub const DEFAULT_DIST_THRESHOLDS: [f64; 4] = [0.5, 1.0, 2.0, 4.0];
pub const TP_DIST_THRESHOLD: f64 = 2.0;
const MIN_RECALL: f64 = 0.1;
const MIN_PRECISION: f64 = 0.1;
const RECALL_BINS: usize = 101;

/// One sample's detections and ground truth; matching never crosses frames.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Frame {
    pub dets: Vec<Detection>,
    pub gts: Vec<Box3D>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ItemRef {
    pub frame: usize,
    pub index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchPair {
    pub det: ItemRef,
    pub gt: ItemRef,
    pub score: f64,
    pub distance: f64,
    pub det_box: Box3D,
    pub gt_box: Box3D,
}

/// Detection in ranking order with its match, if any.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ranked {
    pub det: ItemRef,
    pub score: f64,
    pub gt: Option<ItemRef>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchSet {
    pub dist_thr: f64,
    /// Every considered detection, by descending score.
    pub ranked: Vec<Ranked>,
    /// True positives, by descending detection score.
    pub pairs: Vec<MatchPair>,
    pub unmatched_dets: Vec<ItemRef>,
    pub unmatched_gts: Vec<ItemRef>,
    pub n_gt: usize,
}

fn center_distance(a: &Box3D, b: &Box3D) -> f64 {
    (a.center[0] - b.center[0]).hypot(a.center[1] - b.center[1])
}

/// Greedy matching over several frames, optionally restricted to one class.
pub fn match_frames(frames: &[Frame], class: Option<u32>, dist_thr: f64) -> Result<MatchSet> {
    if !(dist_thr >= 0.0) {
        return Err(Error::Domain(format!("distance threshold must be >= 0, got {dist_thr}")));
    }
    let in_class = |c: u32| class.is_none_or(|k| k == c);
    let mut order: Vec<(ItemRef, f64)> = frames
        .iter()
        .enumerate()
        .flat_map(|(f, fr)| {
            fr.dets.iter().enumerate().filter(|(_, d)| in_class(d.bbox.class_id)).map(move |(i, d)| (ItemRef { frame: f, index: i }, d.fused))
        })
        .collect();
    order.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));

    let mut taken: Vec<Vec<bool>> = frames.iter().map(|f| vec![false; f.gts.len()]).collect();
    let mut ranked = Vec::with_capacity(order.len());
    let mut pairs = Vec::new();
    let mut unmatched_dets = Vec::new();
    for (det_ref, score) in order {
        let frame = &frames[det_ref.frame];
        let det = &frame.dets[det_ref.index];
        let mut best: Option<(usize, f64)> = None;
        for (g, gt) in frame.gts.iter().enumerate() {
            if taken[det_ref.frame][g] || gt.class_id != det.bbox.class_id {
                continue;
            }
            let d = center_distance(&det.bbox, gt);
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((g, d));
            }
        }
        match best {
            Some((g, d)) if d < dist_thr => {
                taken[det_ref.frame][g] = true;
                let gt_ref = ItemRef { frame: det_ref.frame, index: g };
                pairs.push(MatchPair { det: det_ref, gt: gt_ref, score, distance: d, det_box: det.bbox, gt_box: frame.gts[g] });
                ranked.push(Ranked { det: det_ref, score, gt: Some(gt_ref) });
            }
            _ => {
                unmatched_dets.push(det_ref);
                ranked.push(Ranked { det: det_ref, score, gt: None });
            }
        }
    }
    let mut unmatched_gts = Vec::new();
    let mut n_gt = 0;
    for (f, fr) in frames.iter().enumerate() {
        for (g, gt) in fr.gts.iter().enumerate() {
            if in_class(gt.class_id) {
                n_gt += 1;
                if !taken[f][g] {
                    unmatched_gts.push(ItemRef { frame: f, index: g });
                }
            }
        }
    }
    Ok(MatchSet { dist_thr, ranked, pairs, unmatched_dets, unmatched_gts, n_gt })
}

/// Single-frame matching across all classes.
pub fn match_detections(dets: &[Detection], gts: &[Box3D], dist_thr: f64) -> Result<MatchSet> {
    match_frames(&[Frame { dets: dets.to_vec(), gts: gts.to_vec() }], None, dist_thr)
}

/// `np.interp` semantics: flat to the left, `right` beyond the last point.
fn interp(x: f64, xs: &[f64], ys: &[f64], right: f64) -> f64 {
    if x < xs[0] {
        return ys[0];
    }
    let j = xs.partition_point(|v| *v <= x) - 1;
    if j == xs.len() - 1 {
        return if x == xs[j] { ys[j] } else { right };
    }
    let t = (x - xs[j]) / (xs[j + 1] - xs[j]);
    ys[j] + t * (ys[j + 1] - ys[j])
}

pub fn average_precision(matches: &MatchSet, n_gt: usize) -> f64 {
    if n_gt == 0 || matches.ranked.is_empty() {
        return 0.0;
    }
    let mut tp = 0.0;
    let mut recall = Vec::with_capacity(matches.ranked.len());
    let mut precision = Vec::with_capacity(matches.ranked.len());
    for (k, r) in matches.ranked.iter().enumerate() {
        if r.gt.is_some() {
            tp += 1.0;
        }
        recall.push(tp / n_gt as f64);
        precision.push(tp / (k + 1) as f64);
    }
    let first = (100.0 * MIN_RECALL).round() as usize + 1;
    let sum: f64 = (first..RECALL_BINS)
        .map(|b| {
            let r = b as f64 / (RECALL_BINS - 1) as f64;
            (interp(r, &recall, &precision, 0.0) - MIN_PRECISION).max(0.0)
        })
        .sum();
    (sum / (RECALL_BINS - first) as f64 / (1.0 - MIN_PRECISION)).min(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TpErrors {
    pub ate: f64,
    pub ase: f64,
    pub aoe: f64,
    pub ave: f64,
    pub aae: f64,
}

impl TpErrors {
    pub const WORST: TpErrors = TpErrors { ate: 1.0, ase: 1.0, aoe: 1.0, ave: 1.0, aae: 1.0 };

    pub fn as_array(&self) -> [f64; 5] {
        [self.ate, self.ase, self.aoe, self.ave, self.aae]
    }
}

/// `1 - IoU` of the two boxes after aligning centers and orientation.
pub fn scale_error(det: &Box3D, gt: &Box3D) -> f64 {
    let inter: f64 = det.size.iter().zip(&gt.size).map(|(a, b)| a.min(*b)).product();
    let vol = |s: &[f64; 3]| s[0] * s[1] * s[2];
    1.0 - inter / (vol(&det.size) + vol(&gt.size) - inter)
}

/// Smallest absolute yaw difference, in `[0, pi]`.
pub fn orientation_error(det: &Box3D, gt: &Box3D) -> f64 {
    normalize_yaw(det.yaw - gt.yaw).abs().min(PI)
}

pub fn pair_errors(det: &Box3D, gt: &Box3D) -> TpErrors {
    TpErrors {
        ate: center_distance(det, gt),
        ase: scale_error(det, gt),
        aoe: orientation_error(det, gt),
        ave: (det.velocity[0] - gt.velocity[0]).hypot(det.velocity[1] - gt.velocity[1]),
        aae: if det.attribute_id == gt.attribute_id { 0.0 } else { 1.0 },
    }
}

/// Mean true-positive errors over matched pairs; all 1 when nothing matched.
pub fn tp_errors(matches: &MatchSet) -> TpErrors {
    if matches.pairs.is_empty() {
        return TpErrors::WORST;
    }
    let n = matches.pairs.len() as f64;
    let mut sum = [0.0; 5];
    for p in &matches.pairs {
        for (s, e) in sum.iter_mut().zip(pair_errors(&p.det_box, &p.gt_box).as_array()) {
            *s += e;
        }
    }
    TpErrors { ate: sum[0] / n, ase: sum[1] / n, aoe: sum[2] / n, ave: sum[3] / n, aae: sum[4] / n }
}

/// `(5 * mAP + sum(1 - min(1, err))) / 10`.
pub fn nds(map: f64, ate: f64, ase: f64, aoe: f64, ave: f64, aae: f64) -> f64 {
    let tp: f64 = [ate, ase, aoe, ave, aae].iter().map(|e| 1.0 - e.min(1.0)).sum();
    (5.0 * map + tp) / 10.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub map: f64,
    pub mate: f64,
    pub mase: f64,
    pub maoe: f64,
    pub mave: f64,
    pub maae: f64,
    pub nds: f64,
}

impl MetricSet {
    pub fn from_parts(map: f64, e: TpErrors) -> Self {
        Self { map, mate: e.ate, mase: e.ase, maoe: e.aoe, mave: e.ave, maae: e.aae, nds: nds(map, e.ate, e.ase, e.aoe, e.ave, e.aae) }
    }

    pub fn recomputed_nds(&self) -> f64 {
        nds(self.map, self.mate, self.mase, self.maoe, self.mave, self.maae)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class_id: u32,
    pub ap: f64,
    pub errors: TpErrors,
    pub n_gt: usize,
    pub n_tp: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub metrics: MetricSet,
    pub per_class: Vec<ClassMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub dist_thresholds: Vec<f64>,
    pub tp_threshold: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { dist_thresholds: DEFAULT_DIST_THRESHOLDS.to_vec(), tp_threshold: TP_DIST_THRESHOLD }
    }
}

/// Groups framed detections and ground truth by frame id.
pub fn frames_by_id(dets: Vec<Framed<Detection>>, gts: Vec<Framed<Box3D>>) -> BTreeMap<u64, Frame> {
    let mut by_id: BTreeMap<u64, Frame> = BTreeMap::new();
    for d in dets {
        by_id.entry(d.frame).or_default().dets.push(d.item);
    }
    for g in gts {
        by_id.entry(g.frame).or_default().gts.push(g.item);
    }
    by_id
}

/// [`frames_by_id`] without the ids, ordered by id.
pub fn frames_from_records(dets: Vec<Framed<Detection>>, gts: Vec<Framed<Box3D>>) -> Vec<Frame> {
    frames_by_id(dets, gts).into_values().collect()
}

pub fn evaluate_frames(frames: &[Frame], cfg: &EvalConfig) -> Result<Evaluation> {
    let classes: BTreeSet<u32> = frames.iter().flat_map(|f| f.gts.iter().map(|g| g.class_id)).collect();
    if classes.is_empty() {
        return Err(Error::EmptyGroundTruth);
    }
    if cfg.dist_thresholds.is_empty() {
        return Err(Error::Invalid { field: "dist_thresholds", reason: "need at least one threshold".into() });
    }
    let mut per_class = Vec::with_capacity(classes.len());
    for &c in &classes {
        let mut ap_sum = 0.0;
        for &thr in &cfg.dist_thresholds {
            let m = match_frames(frames, Some(c), thr)?;
            ap_sum += average_precision(&m, m.n_gt);
        }
        let tp = match_frames(frames, Some(c), cfg.tp_threshold)?;
        per_class.push(ClassMetrics {
            class_id: c,
            ap: ap_sum / cfg.dist_thresholds.len() as f64,
            errors: tp_errors(&tp),
            n_gt: tp.n_gt,
            n_tp: tp.pairs.len(),
        });
    }
    let k = per_class.len() as f64;
    let map = per_class.iter().map(|c| c.ap).sum::<f64>() / k;
    let mut mean = [0.0; 5];
    for c in &per_class {
        for (m, e) in mean.iter_mut().zip(c.errors.as_array()) {
            *m += e / k;
        }
    }
    let errors = TpErrors { ate: mean[0], ase: mean[1], aoe: mean[2], ave: mean[3], aae: mean[4] };
    Ok(Evaluation { metrics: MetricSet::from_parts(map, errors), per_class })
}

pub fn evaluate(dets: &[Detection], gts: &[Box3D]) -> Result<MetricSet> {
    let frame = Frame { dets: dets.to_vec(), gts: gts.to_vec() };
    Ok(evaluate_frames(std::slice::from_ref(&frame), &EvalConfig::default())?.metrics)
}

/// CSV with one row per class: `class_id,ate,n_tp`.
pub fn per_class_ate_csv(per_class: &[ClassMetrics]) -> String {
    let mut s = String::from("class_id,ate,n_tp\n");
    for c in per_class {
        s.push_str(&format!("{},{},{}\n", c.class_id, c.errors.ate, c.n_tp));
    }
    s
}

//! Scene-level detection pipeline: optional depth re-prediction by a trained
//! model, score fusion, NMS and evaluation over a set of synthetic scenes.

use serde::{Deserialize, Serialize};

use crate::boxgeom::{nms, ScoreMode};
use crate::error::{Error, Result};
use crate::eval::{evaluate_frames, EvalConfig, Evaluation, Frame, MetricSet};
use crate::losses::Strategy;
use crate::model::ToyModel;
use crate::rng::Rng;
use crate::synth::{generate_scene, SceneConfig, SynthScene};
use crate::trainer::{dataset, train_cell, ExperimentConfig};
use crate::types::{Box3D, Detection};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub scene: SceneConfig,
    pub n_scenes: usize,
    pub iou_thr: f64,
    pub per_class: bool,
    pub eval: EvalConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self { scene: SceneConfig::default(), n_scenes: 30, iou_thr: 0.5, per_class: true, eval: EvalConfig::default() }
    }
}

impl PipelineConfig {
    pub fn violations(&self) -> Vec<Error> {
        let mut errs = Vec::new();
        if let Err(e) = self.scene.validate() {
            errs.push(e);
        }
        let mut push = |field: &'static str, ok: bool, reason: String| {
            if !ok {
                errs.push(Error::Invalid { field, reason });
            }
        };
        push("n_scenes", self.n_scenes >= 1, format!("must be >= 1, got {}", self.n_scenes));
        push("iou_thr", self.iou_thr > 0.0 && self.iou_thr <= 1.0, format!("must lie in (0, 1], got {}", self.iou_thr));
        let thr = &self.eval.dist_thresholds;
        push("dist_thresholds", !thr.is_empty() && thr.iter().all(|t| *t > 0.0 && t.is_finite()), format!("need at least one positive threshold, got {thr:?}"));
        push("tp_threshold", self.eval.tp_threshold > 0.0 && self.eval.tp_threshold.is_finite(), format!("must be > 0, got {}", self.eval.tp_threshold));
        errs
    }
}

/// `n_scenes` scenes whose seeds derive from `seed`.
pub fn generate_scenes(cfg: &PipelineConfig, seed: u64) -> Result<Vec<SynthScene>> {
    let root = Rng::new(seed);
    (0..cfg.n_scenes as u64)
        .map(|i| generate_scene(&SceneConfig { seed: root.derive(i).seed(), ..cfg.scene.clone() }))
        .collect()
}

/// Candidate detections of a scene, with depth and quality re-predicted by
/// `model` when one is given.
pub fn scene_detections(scene: &SynthScene, model: Option<&ToyModel>) -> Result<Vec<Detection>> {
    let Some(model) = model else {
        return Ok(scene.detections.clone());
    };
    if model.feature_dim() != scene.feature_dim {
        return Err(Error::DimensionMismatch { expected: model.feature_dim(), actual: scene.feature_dim });
    }
    let out = model.predict(&scene.features)?;
    scene
        .detections
        .iter()
        .enumerate()
        .map(|(i, d)| {
            let depth = out.depth[i].max(0.1);
            let [x, y] = scene.relocate(i, depth);
            let bbox = Box3D { center: [x, y, d.bbox.center[2]], ..d.bbox };
            Detection::new(bbox, d.s_cls, d.s_ctr, out.dq[i])
        })
        .collect()
}

/// Rescores with `mode`, suppresses duplicates and returns the surviving detections.
pub fn postprocess(dets: &[Detection], mode: ScoreMode, iou_thr: f64, per_class: bool) -> Result<Vec<Detection>> {
    let scored: Vec<Detection> = dets.iter().map(|d| mode.apply(d)).collect();
    Ok(nms(&scored, iou_thr, per_class)?.into_iter().map(|i| scored[i]).collect())
}

pub fn run_pipeline(cfg: &PipelineConfig, scenes: &[SynthScene], model: Option<&ToyModel>, mode: ScoreMode) -> Result<Evaluation> {
    let frames: Vec<Frame> = scenes
        .iter()
        .map(|s| {
            let dets = scene_detections(s, model)?;
            Ok(Frame { dets: postprocess(&dets, mode, cfg.iou_thr, cfg.per_class)?, gts: s.gts.clone() })
        })
        .collect::<Result<_>>()?;
    evaluate_frames(&frames, &cfg.eval)
}

/// Baseline-trained model with class and centerness ranking against a
/// GMM-trained model with depth-aware ranking, on the same scenes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineComparison {
    pub seed: u64,
    pub baseline: MetricSet,
    pub gmm: MetricSet,
}

pub fn compare_trained(exp: &ExperimentConfig, cfg: &PipelineConfig, seed: u64) -> Result<PipelineComparison> {
    let batch = dataset(exp, seed)?;
    let (base_model, _) = train_cell(exp, &batch, Strategy::Baseline, seed)?;
    let (gmm_model, _) = train_cell(exp, &batch, Strategy::Gmm, seed)?;
    let scenes = generate_scenes(cfg, seed)?;
    Ok(PipelineComparison {
        seed,
        baseline: run_pipeline(cfg, &scenes, Some(&base_model), ScoreMode::ClsCtr)?.metrics,
        gmm: run_pipeline(cfg, &scenes, Some(&gmm_model), ScoreMode::ClsCtrDq)?.metrics,
    })
}

/// Metrics of the generator's own candidates under each ranking mode.
pub fn score_mode_ablation(cfg: &PipelineConfig, seed: u64) -> Result<Vec<(ScoreMode, MetricSet)>> {
    let scenes = generate_scenes(cfg, seed)?;
    [ScoreMode::Cls, ScoreMode::ClsCtr, ScoreMode::ClsCtrDq]
        .into_iter()
        .map(|mode| Ok((mode, run_pipeline(cfg, &scenes, None, mode)?.metrics)))
        .collect()
}

//! Synthetic data: depth regression with injected ill-posed samples, and
//! street-like scenes of boxes with noisy duplicate detections.
//!
//! Inlier depth is a fixed smooth function of the informative features:
//!
//! ```text
//! s(u) = sum_j a_j u_j + 0.35 * A * sin(pi * sum_j b_j u_j),   a_j = (-1)^j / (j + 1),  b_j = 1 / (j + 1)
//! A    = sum_j |a_j|
//! g(u) = d_min + (d_max - d_min) * (s(u) + 1.35 A) / (2.7 A)
//! ```
//!
//! with `u` uniform on `[-1, 1]^k`, which keeps `g` inside `[d_min, d_max]`.
//! Outlier depths are uniform on `[d_min, d_max]` and independent of the
//! features. When outliers are identifiable, the last feature coordinate is a
//! marker (`1` for outliers, `0` otherwise).

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::boxgeom::fused_score;
use crate::error::{Error, Result};
use crate::quality::dq_relative;
use crate::rng::Rng;
use crate::types::{Box3D, Detection, SampleBatch};

const SINE_AMPLITUDE: f64 = 0.1;
// Feature perturbation of scene candidates; ill-posed ones see a corrupted view of the object.
const WELL_FEATURE_SIGMA: f64 = 0.02;
const ILL_FEATURE_SIGMA: f64 = 0.25;

// Sub-stream ids for `Rng::derive`.
const STREAM_FEATURES: u64 = 1;
const STREAM_ASSIGN: u64 = 2;
const STREAM_NOISE: u64 = 3;
const STREAM_OUTLIER_DEPTH: u64 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_samples: usize,
    pub feature_dim: usize,
    pub outlier_fraction: f64,
    pub depth_range: [f64; 2],
    pub noise_sigma: f64,
    pub outlier_identifiable: bool,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_samples: 4000,
            feature_dim: 6,
            outlier_fraction: 0.25,
            depth_range: [1.0, 60.0],
            noise_sigma: 0.5,
            outlier_identifiable: true,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let [lo, hi] = self.depth_range;
        if !(lo > 0.0 && lo < hi && hi.is_finite()) {
            return Err(Error::Invalid { field: "depth_range", reason: format!("need 0 < d_min < d_max, got [{lo}, {hi}]") });
        }
        if !(0.0..1.0).contains(&self.outlier_fraction) {
            return Err(Error::Invalid { field: "outlier_fraction", reason: format!("must lie in [0, 1), got {}", self.outlier_fraction) });
        }
        if !(self.noise_sigma >= 0.0) || !self.noise_sigma.is_finite() {
            return Err(Error::Invalid { field: "noise_sigma", reason: format!("must be >= 0, got {}", self.noise_sigma) });
        }
        let min_dim = if self.outlier_identifiable { 2 } else { 1 };
        if self.feature_dim < min_dim {
            return Err(Error::Invalid { field: "feature_dim", reason: format!("must be >= {min_dim}, got {}", self.feature_dim) });
        }
        if self.n_samples == 0 {
            return Err(Error::Invalid { field: "n_samples", reason: "must be >= 1".into() });
        }
        Ok(())
    }

    /// Number of feature coordinates that carry depth information.
    pub fn informative_dims(&self) -> usize {
        if self.outlier_identifiable {
            self.feature_dim - 1
        } else {
            self.feature_dim
        }
    }

    pub fn outlier_count(&self) -> usize {
        (self.outlier_fraction * self.n_samples as f64).round() as usize
    }
}

/// The inlier depth map `g`, evaluated on the informative coordinates only.
pub fn depth_map(informative: &[f64], depth_range: [f64; 2]) -> f64 {
    let mut linear = 0.0;
    let mut phase = 0.0;
    let mut amp = 0.0;
    for (j, u) in informative.iter().enumerate() {
        let a = if j % 2 == 0 { 1.0 } else { -1.0 } / (j as f64 + 1.0);
        linear += a * u;
        phase += u / (j as f64 + 1.0);
        amp += a.abs();
    }
    if amp == 0.0 {
        return 0.5 * (depth_range[0] + depth_range[1]);
    }
    let s = linear + SINE_AMPLITUDE * amp * (PI * phase).sin();
    let bound = (1.0 + SINE_AMPLITUDE) * amp;
    let t = ((s + bound) / (2.0 * bound)).clamp(0.0, 1.0);
    depth_range[0] + (depth_range[1] - depth_range[0]) * t
}

pub fn generate_regression(cfg: &SynthConfig) -> Result<SampleBatch> {
    generate_regression_with_outlier_stream(cfg, STREAM_OUTLIER_DEPTH)
}

/// Same as [`generate_regression`] but draws outlier depths from the given
/// sub-stream, leaving features, assignment and inlier noise untouched.
pub fn generate_regression_with_outlier_stream(cfg: &SynthConfig, outlier_stream: u64) -> Result<SampleBatch> {
    cfg.validate()?;
    let root = Rng::new(cfg.seed);
    let mut feat_rng = root.derive(STREAM_FEATURES);
    let mut assign_rng = root.derive(STREAM_ASSIGN);
    let mut noise_rng = root.derive(STREAM_NOISE);
    let mut outlier_rng = root.derive(outlier_stream);

    let n = cfg.n_samples;
    let mut flags = vec![false; n];
    let mut order: Vec<usize> = (0..n).collect();
    assign_rng.shuffle(&mut order);
    for &i in &order[..cfg.outlier_count()] {
        flags[i] = true;
    }

    let f = cfg.feature_dim;
    let k = cfg.informative_dims();
    let [lo, hi] = cfg.depth_range;
    let mut features = vec![0.0; n * f];
    let mut gt_depth = Vec::with_capacity(n);
    for i in 0..n {
        let row = &mut features[i * f..(i + 1) * f];
        for v in row[..k].iter_mut() {
            *v = feat_rng.uniform_range(-1.0, 1.0);
        }
        if cfg.outlier_identifiable {
            row[f - 1] = if flags[i] { 1.0 } else { 0.0 };
        }
        // Every sample consumes one noise and one outlier draw so streams stay aligned.
        let noise = noise_rng.normal() * cfg.noise_sigma;
        let wild = outlier_rng.uniform_range(lo, hi);
        let d = if flags[i] { wild } else { (depth_map(&row[..k], cfg.depth_range) + noise).clamp(lo, hi) };
        gt_depth.push(d);
    }
    SampleBatch::new(f, features, gt_depth, flags)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassTemplate {
    /// Mean `(w, l, h)` in meters.
    pub size: [f64; 3],
    pub n_attributes: u32,
}

pub const DEFAULT_CLASSES: [ClassTemplate; 3] = [
    ClassTemplate { size: [1.95, 4.6, 1.7], n_attributes: 3 },
    ClassTemplate { size: [0.7, 0.75, 1.75], n_attributes: 3 },
    ClassTemplate { size: [2.5, 7.5, 3.0], n_attributes: 3 },
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    /// Ground-truth objects per scene.
    pub n_objects: usize,
    /// Candidate detections generated per object.
    pub candidates_per_object: usize,
    /// Global scale on every perturbation; 0 reproduces the ground truth exactly.
    pub jitter: f64,
    /// Std. dev. of the sideways center offset of a candidate, meters.
    pub lateral_sigma: f64,
    /// Std. dev. of the depth error of a well-posed candidate, meters.
    pub depth_sigma: f64,
    /// Probability that a candidate is ill-posed (depth unrelated to the object).
    pub ill_posed_fraction: f64,
    /// Sensitivity used for the candidates' own quality scores.
    pub beta: f64,
    /// Minimum BEV distance between object centers, meters.
    pub min_separation: f64,
    pub feature_dim: usize,
    pub depth_range: [f64; 2],
    pub classes: Vec<ClassTemplate>,
    pub seed: u64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            n_objects: 8,
            candidates_per_object: 4,
            jitter: 1.0,
            lateral_sigma: 0.8,
            depth_sigma: 1.5,
            ill_posed_fraction: 0.25,
            beta: 2.0,
            min_separation: 10.0,
            feature_dim: 6,
            depth_range: [1.0, 60.0],
            classes: DEFAULT_CLASSES.to_vec(),
            seed: 0,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        let [lo, hi] = self.depth_range;
        if !(lo > 0.0 && lo < hi) {
            return Err(Error::Invalid { field: "depth_range", reason: format!("need 0 < d_min < d_max, got [{lo}, {hi}]") });
        }
        if self.classes.is_empty() {
            return Err(Error::Invalid { field: "classes", reason: "need at least one class".into() });
        }
        if self.feature_dim < 2 {
            return Err(Error::Invalid { field: "feature_dim", reason: "must be >= 2 (informative + marker)".into() });
        }
        if !(0.0..=1.0).contains(&self.ill_posed_fraction) {
            return Err(Error::Invalid { field: "ill_posed_fraction", reason: "must lie in [0, 1]".into() });
        }
        if self.jitter < 0.0 || self.lateral_sigma < 0.0 || self.depth_sigma < 0.0 || self.min_separation < 0.0 {
            return Err(Error::Invalid { field: "jitter", reason: "noise scales must be >= 0".into() });
        }
        if !(self.beta > 0.0) {
            return Err(Error::Invalid { field: "beta", reason: "must be > 0".into() });
        }
        Ok(())
    }
}

/// Ground truth plus duplicated candidate detections.
///
/// `source_gt[i]` is the ground-truth index candidate `i` was generated from;
/// evaluators must not look at it. Candidate features use the same layout as
/// [`generate_regression`] with an identifiable marker, so a model trained on
/// regression batches can re-predict each candidate's depth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthScene {
    pub gts: Vec<Box3D>,
    pub detections: Vec<Detection>,
    pub source_gt: Vec<usize>,
    pub ill_posed: Vec<bool>,
    pub feature_dim: usize,
    pub features: Vec<f64>,
    /// Unit BEV direction from the sensor towards each candidate.
    pub bearing: Vec<[f64; 2]>,
    /// Signed sideways offset of each candidate, meters.
    pub lateral: Vec<f64>,
}

impl SynthScene {
    pub fn candidate_features(&self, i: usize) -> &[f64] {
        &self.features[i * self.feature_dim..(i + 1) * self.feature_dim]
    }

    /// Places candidate `i` at `depth` along its bearing, keeping its sideways offset.
    pub fn relocate(&self, i: usize, depth: f64) -> [f64; 2] {
        let [bx, by] = self.bearing[i];
        let lat = self.lateral[i];
        [bx * depth - by * lat, by * depth + bx * lat]
    }
}

pub fn generate_scene(cfg: &SceneConfig) -> Result<SynthScene> {
    cfg.validate()?;
    let mut rng = Rng::new(cfg.seed);
    let f = cfg.feature_dim;
    let k = f - 1;
    let [lo, hi] = cfg.depth_range;
    let j = cfg.jitter;

    let mut gts: Vec<Box3D> = Vec::with_capacity(cfg.n_objects);
    let mut obj_features: Vec<Vec<f64>> = Vec::with_capacity(cfg.n_objects);
    let mut bearings: Vec<[f64; 2]> = Vec::with_capacity(cfg.n_objects);
    let mut attempts = 0;
    while gts.len() < cfg.n_objects {
        attempts += 1;
        if attempts > 10_000 * cfg.n_objects.max(1) {
            return Err(Error::Invalid { field: "min_separation", reason: "could not place objects without overlap".into() });
        }
        let u: Vec<f64> = (0..k).map(|_| rng.uniform_range(-1.0, 1.0)).collect();
        let range = depth_map(&u, cfg.depth_range);
        let theta = rng.uniform_range(-PI / 3.0, PI / 3.0);
        let dir = [theta.cos(), theta.sin()];
        let center = [dir[0] * range, dir[1] * range];
        if gts.iter().any(|g| (g.center[0] - center[0]).hypot(g.center[1] - center[1]) < cfg.min_separation) {
            continue;
        }
        let class_id = rng.below(cfg.classes.len());
        let tpl = cfg.classes[class_id];
        let scale = rng.uniform_range(0.85, 1.15);
        let size = tpl.size.map(|s| s * scale);
        let yaw = rng.uniform_range(-PI, PI);
        let speed = rng.uniform_range(0.0, 8.0);
        let velocity = [speed * yaw.cos(), speed * yaw.sin()];
        let attribute_id = rng.below(tpl.n_attributes.max(1) as usize) as u32;
        gts.push(Box3D::new([center[0], center[1], 0.5 * size[2]], size, yaw, velocity, class_id as u32, attribute_id)?);
        obj_features.push(u);
        bearings.push(dir);
    }

    let m = cfg.candidates_per_object;
    let total = gts.len() * m;
    let mut scene = SynthScene {
        detections: Vec::with_capacity(total),
        source_gt: Vec::with_capacity(total),
        ill_posed: Vec::with_capacity(total),
        feature_dim: f,
        features: Vec::with_capacity(total * f),
        bearing: Vec::with_capacity(total),
        lateral: Vec::with_capacity(total),
        gts: Vec::new(),
    };
    for (g_idx, gt) in gts.iter().enumerate() {
        let range = gt.bev_range();
        for _ in 0..m {
            let ill = rng.uniform() < cfg.ill_posed_fraction;
            let mut feats = vec![0.0; f];
            let feat_sigma = if ill { ILL_FEATURE_SIGMA } else { WELL_FEATURE_SIGMA };
            for (v, u) in feats[..k].iter_mut().zip(&obj_features[g_idx]) {
                *v = (u + j * feat_sigma * rng.normal()).clamp(-1.0, 1.0);
            }
            if ill {
                feats[k] = 1.0;
            }
            let depth_err = if ill { j * (rng.uniform_range(lo, hi) - range) } else { j * cfg.depth_sigma * rng.normal() };
            let depth = (range + depth_err).max(0.1 * lo);
            let lateral = j * cfg.lateral_sigma * rng.normal();
            let dir = bearings[g_idx];
            let cx = dir[0] * depth - dir[1] * lateral;
            let cy = dir[1] * depth + dir[0] * lateral;
            let size = gt.size.map(|s| s * (1.0 + j * 0.05 * rng.normal()).max(0.2));
            let yaw = gt.yaw + j * 0.15 * rng.normal();
            let velocity = [gt.velocity[0] + j * 0.5 * rng.normal(), gt.velocity[1] + j * 0.5 * rng.normal()];
            let keep_attr = j == 0.0 || rng.uniform() < 0.9;
            let n_attr = cfg.classes[gt.class_id as usize].n_attributes.max(1);
            let attribute_id = if keep_attr { gt.attribute_id } else { (gt.attribute_id + 1) % n_attr };
            let bbox = Box3D::new([cx, cy, gt.center[2]], size, yaw, velocity, gt.class_id, attribute_id)?;

            // Class confidence is unrelated to localization quality; centerness
            // tracks the sideways offset, depth quality tracks the depth error.
            let s_cls = rng.uniform_range(0.3, 1.0);
            let s_ctr = ((-(lateral * lateral) / (2.0 * 0.8 * 0.8)).exp() * rng.uniform_range(0.85, 1.0)).clamp(0.0, 1.0);
            let s_dq = (dq_relative(depth, range, cfg.beta)? * rng.uniform_range(0.85, 1.0)).clamp(0.0, 1.0);
            debug_assert!(fused_score(s_cls, s_ctr, s_dq).is_ok());
            scene.detections.push(Detection::new(bbox, s_cls, s_ctr, s_dq)?);
            scene.source_gt.push(g_idx);
            scene.ill_posed.push(ill);
            scene.features.extend_from_slice(&feats);
            scene.bearing.push(dir);
            scene.lateral.push(lateral);
        }
    }
    scene.gts = gts;
    Ok(scene)
}

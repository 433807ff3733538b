//! Domain types shared by every module.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::boxgeom::fused_score;
use crate::error::{Error, Result};

/// Which depth-quality metric maps a depth error into `(0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    /// `1 / (beta * |dp - dg| / dg + 1)`; `beta` is dimensionless.
    #[default]
    Relative,
    /// `exp(-(dg - dp)^2 / (2 beta^2))`; `beta` is in meters.
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QualityParams {
    pub metric: MetricKind,
    pub beta: f64,
}

pub const DEFAULT_BETA: f64 = 2.0;

impl Default for QualityParams {
    fn default() -> Self {
        Self { metric: MetricKind::Relative, beta: DEFAULT_BETA }
    }
}

impl QualityParams {
    pub fn new(metric: MetricKind, beta: f64) -> Result<Self> {
        let p = Self { metric, beta };
        p.validate()?;
        Ok(p)
    }

    pub fn relative(beta: f64) -> Result<Self> {
        Self::new(MetricKind::Relative, beta)
    }

    pub fn gaussian(beta: f64) -> Result<Self> {
        Self::new(MetricKind::Gaussian, beta)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0) || !self.beta.is_finite() {
            return Err(Error::Invalid { field: "beta", reason: format!("must be > 0, got {}", self.beta) });
        }
        Ok(())
    }
}

/// Positive training samples: a row-major feature matrix plus depth targets.
///
/// `outlier_flag` records how the generator produced each sample. Models never
/// see it; it only splits metrics into clean and outlier groups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleBatch {
    pub feature_dim: usize,
    pub features: Vec<f64>,
    pub gt_depth: Vec<f64>,
    pub outlier_flag: Vec<bool>,
    pub n: usize,
}

impl SampleBatch {
    pub fn new(feature_dim: usize, features: Vec<f64>, gt_depth: Vec<f64>, outlier_flag: Vec<bool>) -> Result<Self> {
        let b = Self { feature_dim, n: gt_depth.len(), features, gt_depth, outlier_flag };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if self.feature_dim == 0 {
            return Err(Error::Invalid { field: "feature_dim", reason: "must be >= 1".into() });
        }
        if self.gt_depth.len() != self.n {
            return Err(Error::LengthMismatch { expected: self.n, actual: self.gt_depth.len() });
        }
        if self.outlier_flag.len() != self.n {
            return Err(Error::LengthMismatch { expected: self.n, actual: self.outlier_flag.len() });
        }
        if self.features.len() != self.n * self.feature_dim {
            return Err(Error::LengthMismatch { expected: self.n * self.feature_dim, actual: self.features.len() });
        }
        if let Some(d) = self.gt_depth.iter().find(|d| !(**d > 0.0) || !d.is_finite()) {
            return Err(Error::Invalid { field: "gt_depth", reason: format!("must be finite and > 0, got {d}") });
        }
        if self.features.iter().any(|x| !x.is_finite()) {
            return Err(Error::Invalid { field: "features", reason: "must be finite".into() });
        }
        Ok(())
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.feature_dim..(i + 1) * self.feature_dim]
    }

    pub fn n_outliers(&self) -> usize {
        self.outlier_flag.iter().filter(|f| **f).count()
    }
}

/// Per-sample outputs of the prediction heads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadOutputs {
    pub depth: Vec<f64>,
    pub dq: Vec<f64>,
    pub cls: Vec<f64>,
    pub ctr: Vec<f64>,
}

impl HeadOutputs {
    pub fn len(&self) -> usize {
        self.depth.len()
    }

    pub fn is_empty(&self) -> bool {
        self.depth.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.depth.len();
        for v in [&self.dq, &self.cls, &self.ctr] {
            if v.len() != n {
                return Err(Error::LengthMismatch { expected: n, actual: v.len() });
            }
        }
        if self.depth.iter().any(|d| !d.is_finite()) {
            return Err(Error::Invalid { field: "depth", reason: "must be finite".into() });
        }
        if self.dq.iter().any(|q| !(*q > 0.0 && *q < 1.0)) {
            return Err(Error::Invalid { field: "dq", reason: "must lie strictly inside (0, 1)".into() });
        }
        if self.cls.iter().chain(&self.ctr).any(|s| !(0.0..=1.0).contains(s)) {
            return Err(Error::Invalid { field: "cls/ctr", reason: "must lie in [0, 1]".into() });
        }
        Ok(())
    }
}

/// Wraps an angle into `[-pi, pi)`. Values already in range are returned untouched.
pub fn normalize_yaw(yaw: f64) -> f64 {
    if (-PI..PI).contains(&yaw) {
        return yaw;
    }
    let two_pi = 2.0 * PI;
    let wrapped = yaw - two_pi * ((yaw + PI) / two_pi).floor();
    if wrapped >= PI {
        wrapped - two_pi
    } else {
        wrapped
    }
}

/// A 3D box. `size` is `(w, l, h)`; the length runs along the heading `yaw`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Box3DRecord")]
pub struct Box3D {
    pub center: [f64; 3],
    pub size: [f64; 3],
    pub yaw: f64,
    pub velocity: [f64; 2],
    pub class_id: u32,
    pub attribute_id: u32,
}

#[derive(Deserialize)]
struct Box3DRecord {
    center: [f64; 3],
    size: [f64; 3],
    yaw: f64,
    #[serde(default)]
    velocity: [f64; 2],
    class_id: u32,
    #[serde(default)]
    attribute_id: u32,
}

impl TryFrom<Box3DRecord> for Box3D {
    type Error = Error;

    fn try_from(r: Box3DRecord) -> Result<Self> {
        Box3D::new(r.center, r.size, r.yaw, r.velocity, r.class_id, r.attribute_id)
    }
}

impl Box3D {
    pub fn new(center: [f64; 3], size: [f64; 3], yaw: f64, velocity: [f64; 2], class_id: u32, attribute_id: u32) -> Result<Self> {
        let b = Self { center, size, yaw: normalize_yaw(yaw), velocity, class_id, attribute_id };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if self.size.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
            return Err(Error::Invalid { field: "size", reason: format!("all of w, l, h must be > 0, got {:?}", self.size) });
        }
        if self.center.iter().chain(&self.velocity).any(|v| !v.is_finite()) || !self.yaw.is_finite() {
            return Err(Error::Invalid { field: "center", reason: "must be finite".into() });
        }
        if !(-PI..PI).contains(&self.yaw) {
            return Err(Error::Invalid { field: "yaw", reason: format!("must lie in [-pi, pi), got {}", self.yaw) });
        }
        Ok(())
    }

    pub fn width(&self) -> f64 {
        self.size[0]
    }

    pub fn length(&self) -> f64 {
        self.size[1]
    }

    /// Distance from the origin in the ground plane.
    pub fn bev_range(&self) -> f64 {
        self.center[0].hypot(self.center[1])
    }
}

/// A scored detection. `fused` is always `sqrt(s_cls * s_ctr * s_dq)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DetectionRecord")]
pub struct Detection {
    #[serde(rename = "box")]
    pub bbox: Box3D,
    pub s_cls: f64,
    pub s_ctr: f64,
    pub s_dq: f64,
    pub fused: f64,
}

#[derive(Deserialize)]
struct DetectionRecord {
    #[serde(rename = "box")]
    bbox: Box3D,
    s_cls: f64,
    s_ctr: f64,
    s_dq: f64,
    fused: Option<f64>,
}

/// Tolerance when checking a stored fused score against the recomputed one.
pub const FUSED_TOLERANCE: f64 = 1e-9;

impl TryFrom<DetectionRecord> for Detection {
    type Error = Error;

    fn try_from(r: DetectionRecord) -> Result<Self> {
        let det = Detection::new(r.bbox, r.s_cls, r.s_ctr, r.s_dq)?;
        if let Some(stored) = r.fused {
            if (stored - det.fused).abs() > FUSED_TOLERANCE {
                return Err(Error::Invalid {
                    field: "fused",
                    reason: format!("stored {stored} disagrees with sqrt(s_cls*s_ctr*s_dq) = {}", det.fused),
                });
            }
        }
        Ok(det)
    }
}

impl Detection {
    pub fn new(bbox: Box3D, s_cls: f64, s_ctr: f64, s_dq: f64) -> Result<Self> {
        let fused = fused_score(s_cls, s_ctr, s_dq)?;
        Ok(Self { bbox, s_cls, s_ctr, s_dq, fused })
    }

    /// Detection carrying perfect scores, e.g. a ground-truth box replayed as a prediction.
    pub fn certain(bbox: Box3D) -> Self {
        Self { bbox, s_cls: 1.0, s_ctr: 1.0, s_dq: 1.0, fused: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        self.bbox.validate()?;
        let f = fused_score(self.s_cls, self.s_ctr, self.s_dq)?;
        if (f - self.fused).abs() > FUSED_TOLERANCE {
            return Err(Error::Invalid { field: "fused", reason: format!("expected {f}, found {}", self.fused) });
        }
        Ok(())
    }
}

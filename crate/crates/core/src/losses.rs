//! Elementary losses and the five depth-supervision strategies.
//!
//! Every strategy reports its total loss together with the gradient of that
//! total with respect to each predicted depth and each predicted quality.
//! Quantities a strategy treats as constants (mining weights, detached quality
//! targets) are captured in [`DetachedTerms`], so gradient checks can hold them
//! fixed while perturbing the outputs.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_len, Error, Result};
use crate::mining::{mining_loss, normalize_weights};
use crate::quality::{self, clamp_dq, mining_transform, MiningMode};
use crate::types::{HeadOutputs, QualityParams, SampleBatch};

/// Smooth L1 with its transition at `|d| = 1`. Returns `(value, d value / d pred)`.
pub fn smooth_l1(pred: f64, target: f64) -> (f64, f64) {
    let d = pred - target;
    if d.abs() < 1.0 {
        (0.5 * d * d, d)
    } else {
        (d.abs() - 0.5, d.signum())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BceTerms {
    pub value: f64,
    pub grad_pred: f64,
    pub grad_target: f64,
}

/// Soft-target binary cross-entropy `-(t ln p + (1 - t) ln(1 - p))`.
///
/// `pred_q` is clamped to `[1e-6, 1 - 1e-6]` first. The derivative with respect
/// to the target is `ln((1 - p) / p)`, independent of the target itself.
pub fn bce(pred_q: f64, target_q: f64) -> BceTerms {
    let p = clamp_dq(pred_q);
    let t = target_q;
    BceTerms {
        value: -(t * p.ln() + (1.0 - t) * (1.0 - p).ln()),
        grad_pred: -t / p + (1.0 - t) / (1.0 - p),
        grad_target: gam_target_grad(p),
    }
}

/// `ln((1 - q) / q)`: how strongly the quality loss pulls on its own target.
pub fn gam_target_grad(pred_dq: f64) -> f64 {
    let p = clamp_dq(pred_dq);
    ((1.0 - p) / p).ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
pub enum Strategy {
    Baseline,
    SubjectiveEasy,
    Hard,
    #[serde(rename = "MPM")]
    Mpm,
    #[serde(rename = "GMM")]
    Gmm,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [Strategy::Baseline, Strategy::SubjectiveEasy, Strategy::Hard, Strategy::Mpm, Strategy::Gmm];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Baseline => "Baseline",
            Strategy::SubjectiveEasy => "SubjectiveEasy",
            Strategy::Hard => "Hard",
            Strategy::Mpm => "MPM",
            Strategy::Gmm => "GMM",
        }
    }

    /// Whether the quality head receives supervision under this strategy.
    pub fn trains_quality_head(self) -> bool {
        matches!(self, Strategy::Mpm | Strategy::Gmm)
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Parse(format!("unknown strategy `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrategyConfig {
    pub strategy: Strategy,
    #[serde(default)]
    pub quality: QualityParams,
    #[serde(default = "one")]
    pub depth_loss_weight: f64,
    #[serde(default = "one")]
    pub dq_loss_weight: f64,
}

fn one() -> f64 {
    1.0
}

impl StrategyConfig {
    pub fn new(strategy: Strategy) -> Self {
        Self { strategy, quality: QualityParams::default(), depth_loss_weight: 1.0, dq_loss_weight: 1.0 }
    }

    pub fn with_quality(mut self, quality: QualityParams) -> Self {
        self.quality = quality;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.quality.validate()?;
        for (field, w) in [("depth_loss_weight", self.depth_loss_weight), ("dq_loss_weight", self.dq_loss_weight)] {
            if !(w >= 0.0) || !w.is_finite() {
                return Err(Error::Invalid { field, reason: format!("must be >= 0, got {w}") });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub total: f64,
    /// Unweighted smooth-L1 depth loss per sample.
    pub per_sample: Vec<f64>,
    pub grads_depth: Vec<f64>,
    pub grads_dq: Vec<f64>,
    pub depth_term: f64,
    pub quality_term: f64,
}

/// Values a strategy uses without differentiating through them.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DetachedTerms {
    /// Normalized mining weights, if the strategy reweights the depth loss.
    pub weights: Option<Vec<f64>>,
    /// Quality targets held constant inside the quality loss.
    pub dq_target: Option<Vec<f64>>,
}

fn check_shapes(batch: &SampleBatch, outputs: &HeadOutputs) -> Result<()> {
    ensure_len(batch.n, outputs.depth.len())?;
    ensure_len(batch.n, outputs.dq.len())?;
    Ok(())
}

fn quality_targets(cfg: &StrategyConfig, batch: &SampleBatch, outputs: &HeadOutputs) -> Result<Vec<f64>> {
    outputs
        .depth
        .iter()
        .zip(&batch.gt_depth)
        .map(|(dp, dg)| quality::dq(&cfg.quality, *dp, *dg))
        .collect()
}

fn depth_losses(batch: &SampleBatch, outputs: &HeadOutputs) -> Vec<f64> {
    outputs.depth.iter().zip(&batch.gt_depth).map(|(p, t)| smooth_l1(*p, *t).0).collect()
}

/// Snapshot of the constants a strategy needs at the current outputs.
pub fn detach(cfg: &StrategyConfig, batch: &SampleBatch, outputs: &HeadOutputs) -> Result<DetachedTerms> {
    check_shapes(batch, outputs)?;
    let raw_weights = match cfg.strategy {
        Strategy::Baseline | Strategy::Gmm => None,
        Strategy::SubjectiveEasy | Strategy::Hard => {
            let mode = if cfg.strategy == Strategy::Hard { MiningMode::HardMinus } else { MiningMode::EasyPlus };
            let q = quality_targets(cfg, batch, outputs)?;
            Some(q.into_iter().map(|q| mining_transform(q, mode)).collect::<Vec<_>>())
        }
        Strategy::Mpm => Some(outputs.dq.clone()),
    };
    let weights = match raw_weights {
        Some(raw) => Some(normalize_weights(&raw, &depth_losses(batch, outputs))?),
        None => None,
    };
    let dq_target = match cfg.strategy {
        Strategy::Mpm => Some(quality_targets(cfg, batch, outputs)?),
        _ => None,
    };
    Ok(DetachedTerms { weights, dq_target })
}

/// Strategy loss with the detached constants supplied by the caller.
pub fn strategy_loss_detached(
    cfg: &StrategyConfig,
    batch: &SampleBatch,
    outputs: &HeadOutputs,
    detached: &DetachedTerms,
) -> Result<LossReport> {
    check_shapes(batch, outputs)?;
    let n = batch.n;
    if n == 0 {
        return Ok(LossReport { total: 0.0, per_sample: vec![], grads_depth: vec![], grads_dq: vec![], depth_term: 0.0, quality_term: 0.0 });
    }
    let inv_n = 1.0 / n as f64;
    let w_d = cfg.depth_loss_weight;
    let w_q = cfg.dq_loss_weight;

    let (per_sample, sl1_grads): (Vec<f64>, Vec<f64>) =
        outputs.depth.iter().zip(&batch.gt_depth).map(|(p, t)| smooth_l1(*p, *t)).unzip();

    let (depth_sum, mut grads_depth) = match &detached.weights {
        Some(w) => {
            ensure_len(n, w.len())?;
            let grads = w.iter().zip(&sl1_grads).map(|(w, g)| w_d * w * g * inv_n).collect();
            (mining_loss(w, &per_sample)?, grads)
        }
        None => (per_sample.iter().sum(), sl1_grads.iter().map(|g| w_d * g * inv_n).collect::<Vec<_>>()),
    };
    let depth_term = w_d * depth_sum * inv_n;

    let mut grads_dq = vec![0.0; n];
    let mut quality_sum = 0.0;
    match cfg.strategy {
        Strategy::Mpm => {
            let targets = detached.dq_target.as_ref().ok_or(Error::Domain("MPM needs detached quality targets".into()))?;
            ensure_len(n, targets.len())?;
            for i in 0..n {
                let t = bce(outputs.dq[i], targets[i]);
                quality_sum += t.value;
                grads_dq[i] = w_q * t.grad_pred * inv_n;
            }
        }
        Strategy::Gmm => {
            for i in 0..n {
                let (dp, dg) = (outputs.depth[i], batch.gt_depth[i]);
                let target = quality::dq(&cfg.quality, dp, dg)?;
                let t = bce(outputs.dq[i], target);
                quality_sum += t.value;
                grads_dq[i] = w_q * t.grad_pred * inv_n;
                // Chain rule through the live quality target.
                grads_depth[i] += w_q * t.grad_target * quality::dq_grad(&cfg.quality, dp, dg)? * inv_n;
            }
        }
        _ => {}
    }
    let quality_term = w_q * quality_sum * inv_n;

    if grads_depth.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFiniteGradient("depth"));
    }
    if grads_dq.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFiniteGradient("dq"));
    }
    Ok(LossReport { total: depth_term + quality_term, per_sample, grads_depth, grads_dq, depth_term, quality_term })
}

pub fn strategy_loss(cfg: &StrategyConfig, batch: &SampleBatch, outputs: &HeadOutputs) -> Result<LossReport> {
    let detached = detach(cfg, batch, outputs)?;
    strategy_loss_detached(cfg, batch, outputs, &detached)
}

//! A one-hidden-layer multi-head regressor with hand-written backward pass.
//!
//! The shared trunk is `relu(W x + b)`. Four affine heads read the hidden
//! layer: depth (identity output), depth quality, class score and centerness
//! (all squashed by the logistic function).
//!
//! Flat parameter order, used by checkpoints and gradient vectors:
//! trunk weights (row-major `H x F`), trunk biases (`H`), then for each head in
//! the order depth, dq, cls, ctr: weights (`H`) followed by one bias.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_len, Error, Result};
use crate::losses::LossReport;
use crate::rng::Rng;
use crate::types::{HeadOutputs, SampleBatch};

const N_HEADS: usize = 4;
const DEPTH: usize = 0;

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyModel {
    feature_dim: usize,
    hidden_dim: usize,
    params: Vec<f64>,
}

/// Forward pass results plus the hidden activations needed for backprop.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub outputs: HeadOutputs,
    hidden: Vec<f64>,
}

impl ToyModel {
    pub fn param_count(feature_dim: usize, hidden_dim: usize) -> usize {
        hidden_dim * feature_dim + hidden_dim + N_HEADS * (hidden_dim + 1)
    }

    fn check_dims(feature_dim: usize, hidden_dim: usize) -> Result<()> {
        if feature_dim == 0 || hidden_dim == 0 {
            return Err(Error::Invalid {
                field: "model dims",
                reason: format!("feature and hidden dims must be >= 1, got ({feature_dim}, {hidden_dim})"),
            });
        }
        Ok(())
    }

    /// Weights uniform in `(-1/sqrt(fan_in), 1/sqrt(fan_in))`, biases zero.
    pub fn init(feature_dim: usize, hidden_dim: usize, rng: &mut Rng) -> Result<Self> {
        let mut m = Self::zeros(feature_dim, hidden_dim)?;
        let s_trunk = 1.0 / (feature_dim as f64).sqrt();
        for w in m.trunk_weights_mut() {
            *w = rng.uniform_range(-s_trunk, s_trunk);
        }
        let s_head = 1.0 / (hidden_dim as f64).sqrt();
        for head in 0..N_HEADS {
            let range = m.head_range(head);
            for w in &mut m.params[range] {
                *w = rng.uniform_range(-s_head, s_head);
            }
        }
        Ok(m)
    }

    pub fn zeros(feature_dim: usize, hidden_dim: usize) -> Result<Self> {
        Self::check_dims(feature_dim, hidden_dim)?;
        Ok(Self { feature_dim, hidden_dim, params: vec![0.0; Self::param_count(feature_dim, hidden_dim)] })
    }

    pub fn from_params(feature_dim: usize, hidden_dim: usize, params: Vec<f64>) -> Result<Self> {
        Self::check_dims(feature_dim, hidden_dim)?;
        ensure_len(Self::param_count(feature_dim, hidden_dim), params.len())?;
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Invalid { field: "params", reason: "must be finite".into() });
        }
        Ok(Self { feature_dim, hidden_dim, params })
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden_dim
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn trunk_weights_mut(&mut self) -> &mut [f64] {
        let n = self.hidden_dim * self.feature_dim;
        &mut self.params[..n]
    }

    fn head_offset(&self, head: usize) -> usize {
        self.hidden_dim * self.feature_dim + self.hidden_dim + head * (self.hidden_dim + 1)
    }

    /// Weight slice of one head (its bias follows immediately).
    fn head_range(&self, head: usize) -> std::ops::Range<usize> {
        let o = self.head_offset(head);
        o..o + self.hidden_dim
    }

    pub fn forward(&self, batch: &SampleBatch) -> Result<HeadOutputs> {
        Ok(self.forward_cached(batch)?.outputs)
    }

    pub fn forward_cached(&self, batch: &SampleBatch) -> Result<ForwardCache> {
        if batch.feature_dim != self.feature_dim {
            return Err(Error::DimensionMismatch { expected: self.feature_dim, actual: batch.feature_dim });
        }
        self.forward_rows(&batch.features)
    }

    /// Forward pass over a row-major feature matrix with no depth targets.
    pub fn predict(&self, features: &[f64]) -> Result<HeadOutputs> {
        if features.len() % self.feature_dim != 0 {
            return Err(Error::DimensionMismatch { expected: self.feature_dim, actual: features.len() % self.feature_dim });
        }
        Ok(self.forward_rows(features)?.outputs)
    }

    fn forward_rows(&self, features: &[f64]) -> Result<ForwardCache> {
        let (f, h) = (self.feature_dim, self.hidden_dim);
        let n = features.len() / f;
        let w1 = &self.params[..h * f];
        let b1 = &self.params[h * f..h * f + h];
        let mut hidden = vec![0.0; n * h];
        let mut heads = [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]];
        for i in 0..n {
            let x = &features[i * f..(i + 1) * f];
            let a = &mut hidden[i * h..(i + 1) * h];
            for j in 0..h {
                let z = b1[j] + w1[j * f..(j + 1) * f].iter().zip(x).map(|(w, x)| w * x).sum::<f64>();
                a[j] = z.max(0.0);
            }
            for (k, out) in heads.iter_mut().enumerate() {
                let r = self.head_range(k);
                let z = self.params[r.end] + self.params[r].iter().zip(a.iter()).map(|(w, a)| w * a).sum::<f64>();
                out[i] = if k == DEPTH { z } else { sigmoid(z) };
            }
        }
        let [depth, dq, cls, ctr] = heads;
        let outputs = HeadOutputs { depth, dq, cls, ctr };
        if outputs.depth.iter().any(|d| !d.is_finite()) {
            return Err(Error::NonFiniteGradient("forward depth"));
        }
        Ok(ForwardCache { outputs, hidden })
    }

    /// Gradient of the loss with respect to every parameter, given the
    /// upstream derivatives with respect to the depth and quality outputs.
    pub fn gradient(&self, batch: &SampleBatch, cache: &ForwardCache, upstream: &LossReport) -> Result<Vec<f64>> {
        ensure_len(batch.n, upstream.grads_depth.len())?;
        ensure_len(batch.n, upstream.grads_dq.len())?;
        if upstream.grads_depth.iter().chain(&upstream.grads_dq).any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteGradient("upstream"));
        }
        let (f, h) = (self.feature_dim, self.hidden_dim);
        let mut grad = vec![0.0; self.params.len()];
        let mut d_hidden = vec![0.0; h];
        for i in 0..batch.n {
            let a = &cache.hidden[i * h..(i + 1) * h];
            let q = cache.outputs.dq[i];
            // Upstream at the pre-activation of each head; cls/ctr are unsupervised here.
            let dz = [upstream.grads_depth[i], upstream.grads_dq[i] * q * (1.0 - q), 0.0, 0.0];
            d_hidden.iter_mut().for_each(|d| *d = 0.0);
            for (k, dzk) in dz.iter().enumerate() {
                if *dzk == 0.0 {
                    continue;
                }
                let r = self.head_range(k);
                for j in 0..h {
                    grad[r.start + j] += dzk * a[j];
                    d_hidden[j] += dzk * self.params[r.start + j];
                }
                grad[r.end] += dzk;
            }
            let x = batch.row(i);
            for j in 0..h {
                if a[j] <= 0.0 {
                    continue;
                }
                let dj = d_hidden[j];
                for (g, xv) in grad[j * f..(j + 1) * f].iter_mut().zip(x) {
                    *g += dj * xv;
                }
                grad[h * f + j] += dj;
            }
        }
        Ok(grad)
    }

    /// One plain gradient-descent step: `params -= lr * grad`.
    pub fn backward_apply(&mut self, batch: &SampleBatch, cache: &ForwardCache, upstream: &LossReport, lr: f64) -> Result<()> {
        if !(lr >= 0.0) || !lr.is_finite() {
            return Err(Error::Invalid { field: "lr", reason: format!("must be >= 0, got {lr}") });
        }
        let grad = self.gradient(batch, cache, upstream)?;
        for (p, g) in self.params.iter_mut().zip(&grad) {
            *p -= lr * g;
        }
        Ok(())
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint { shape: CheckpointShape { feature_dim: self.feature_dim, hidden_dim: self.hidden_dim }, params: self.params.clone() }
    }

    pub fn from_checkpoint(c: Checkpoint) -> Result<Self> {
        Self::from_params(c.shape.feature_dim, c.shape.hidden_dim, c.params)
    }
}

/// Parameter checkpoint: a shape header and the flat parameter array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub shape: CheckpointShape,
    pub params: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckpointShape {
    pub feature_dim: usize,
    pub hidden_dim: usize,
}

//! Loss-preserving sample reweighting.
//!
//! Raw weights are rescaled by a single positive factor so that the weighted
//! loss sum equals the unweighted one. Both inputs are treated as constants:
//! callers never differentiate through the rescaling factor.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_len, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiningWeights {
    pub raw: Vec<f64>,
    pub normalized: Vec<f64>,
}

impl MiningWeights {
    pub fn compute(raw: Vec<f64>, losses: &[f64]) -> Result<Self> {
        let normalized = normalize_weights(&raw, losses)?;
        Ok(Self { raw, normalized })
    }
}

fn check_nonnegative(field: &'static str, v: &[f64]) -> Result<()> {
    if let Some(x) = v.iter().find(|x| !(**x >= 0.0) || !x.is_finite()) {
        return Err(Error::Invalid { field, reason: format!("must be finite and >= 0, got {x}") });
    }
    Ok(())
}

/// `w_hat_g = w_g * sum(L) / sum(w * L)`, or all ones when `sum(w * L) == 0`.
pub fn normalize_weights(raw: &[f64], losses: &[f64]) -> Result<Vec<f64>> {
    ensure_len(raw.len(), losses.len())?;
    check_nonnegative("weights", raw)?;
    check_nonnegative("losses", losses)?;
    let total: f64 = losses.iter().sum();
    let weighted: f64 = raw.iter().zip(losses).map(|(w, l)| w * l).sum();
    if weighted == 0.0 {
        return Ok(vec![1.0; raw.len()]);
    }
    let scale = total / weighted;
    Ok(raw.iter().map(|w| w * scale).collect())
}

/// `sum_i w_i * L_i`.
pub fn mining_loss(weights: &[f64], losses: &[f64]) -> Result<f64> {
    ensure_len(weights.len(), losses.len())?;
    Ok(weights.iter().zip(losses).map(|(w, l)| w * l).sum())
}

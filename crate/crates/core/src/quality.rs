//! Depth-quality metrics, their derivative with respect to the predicted
//! depth, and the easy/hard mining transforms built on top of them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{MetricKind, QualityParams};

/// Lower clamp applied to a quality value before it is inverted or logged.
pub const DQ_EPS: f64 = 1e-6;

pub fn clamp_dq(dq: f64) -> f64 {
    dq.clamp(DQ_EPS, 1.0 - DQ_EPS)
}

fn check_beta(beta: f64) -> Result<()> {
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(Error::Domain(format!("beta must be > 0, got {beta}")));
    }
    Ok(())
}

/// `1 / (beta * |d_p - d_g| / d_g + 1)`.
pub fn dq_relative(d_p: f64, d_g: f64, beta: f64) -> Result<f64> {
    check_beta(beta)?;
    if !(d_g > 0.0) || !d_g.is_finite() {
        return Err(Error::Domain(format!("ground-truth depth must be > 0, got {d_g}")));
    }
    if !d_p.is_finite() {
        return Err(Error::Domain(format!("predicted depth must be finite, got {d_p}")));
    }
    Ok(1.0 / (beta * (d_p - d_g).abs() / d_g + 1.0))
}

/// `exp(-(d_g - d_p)^2 / (2 beta^2))`.
pub fn dq_gaussian(d_p: f64, d_g: f64, beta: f64) -> Result<f64> {
    check_beta(beta)?;
    if !d_p.is_finite() || !d_g.is_finite() {
        return Err(Error::Domain("depths must be finite".into()));
    }
    let diff = d_g - d_p;
    Ok((-(diff * diff) / (2.0 * beta * beta)).exp())
}

pub fn dq(params: &QualityParams, d_p: f64, d_g: f64) -> Result<f64> {
    match params.metric {
        MetricKind::Relative => dq_relative(d_p, d_g, params.beta),
        MetricKind::Gaussian => dq_gaussian(d_p, d_g, params.beta),
    }
}

/// Derivative of the quality target with respect to the predicted depth.
///
/// The relative metric has a kink at `d_p == d_g`; the subgradient 0 is
/// returned there.
pub fn dq_grad(params: &QualityParams, d_p: f64, d_g: f64) -> Result<f64> {
    let q = dq(params, d_p, d_g)?;
    let beta = params.beta;
    Ok(match params.metric {
        MetricKind::Relative => {
            let diff = d_p - d_g;
            if diff == 0.0 {
                0.0
            } else {
                -beta * diff.signum() / d_g * q * q
            }
        }
        MetricKind::Gaussian => q * (d_g - d_p) / (beta * beta),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MiningMode {
    /// Weight equals quality: easy samples count more.
    EasyPlus,
    /// Weight is `1/dq - 1`: poorly predicted samples count more.
    HardMinus,
}

pub fn mining_transform(dq: f64, mode: MiningMode) -> f64 {
    match mode {
        MiningMode::EasyPlus => dq,
        MiningMode::HardMinus => 1.0 / dq.max(DQ_EPS) - 1.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub beta: f64,
    pub rel_error: f64,
    pub dq: f64,
}

/// Tabulates quality against error for several parameter sets.
///
/// Each error value `e` is evaluated at `d_g = 1`, `d_p = 1 + e`, which for the
/// relative metric makes `e` exactly the relative depth error.
pub fn dq_curve(params_list: &[QualityParams], rel_error_grid: &[f64]) -> Result<Vec<CurvePoint>> {
    if let Some(e) = rel_error_grid.iter().find(|e| !(**e >= 0.0)) {
        return Err(Error::Domain(format!("error grid values must be >= 0, got {e}")));
    }
    let mut out = Vec::with_capacity(params_list.len() * rel_error_grid.len());
    for p in params_list {
        p.validate()?;
        for &e in rel_error_grid {
            out.push(CurvePoint { beta: p.beta, rel_error: e, dq: dq(p, 1.0 + e, 1.0)? });
        }
    }
    Ok(out)
}

/// Evenly spaced grid `0, step, ..., max` with `points` entries.
pub fn error_grid(max_err: f64, points: usize) -> Vec<f64> {
    if points < 2 {
        return vec![0.0];
    }
    (0..points).map(|i| max_err * i as f64 / (points - 1) as f64).collect()
}

pub fn curve_to_csv(points: &[CurvePoint]) -> String {
    let mut s = String::from("beta,rel_error,dq\n");
    for p in points {
        s.push_str(&format!("{},{},{}\n", p.beta, p.rel_error, p.dq));
    }
    s
}

//! Full-batch training and the multi-seed strategy comparison.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::{strategy_loss, Strategy, StrategyConfig};
use crate::model::ToyModel;
use crate::rng::Rng;
use crate::synth::{generate_regression, SynthConfig};
use crate::types::{HeadOutputs, QualityParams, SampleBatch};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub epochs: usize,
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub strategy: Strategy,
    pub seed: u64,
    pub initial_mae: f64,
    /// Clean-sample MAE after each epoch's update.
    pub mae_curve: Vec<f64>,
    pub final_mae: f64,
    /// Total loss evaluated before each epoch's update.
    pub loss_curve: Vec<f64>,
    pub dq_outlier_mean: f64,
    pub dq_inlier_mean: f64,
}

/// Mean absolute depth error over samples not flagged as outliers.
pub fn clean_mae(batch: &SampleBatch, outputs: &HeadOutputs) -> f64 {
    let (sum, count) = outputs
        .depth
        .iter()
        .zip(&batch.gt_depth)
        .zip(&batch.outlier_flag)
        .filter(|(_, o)| !**o)
        .fold((0.0, 0usize), |(s, c), ((p, g), _)| (s + (p - g).abs(), c + 1));
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

/// Mean predicted quality on outliers and on inliers.
pub fn dq_group_means(batch: &SampleBatch, outputs: &HeadOutputs) -> (f64, f64) {
    let mut acc = [(0.0, 0usize); 2];
    for (q, o) in outputs.dq.iter().zip(&batch.outlier_flag) {
        let a = &mut acc[usize::from(*o)];
        a.0 += q;
        a.1 += 1;
    }
    let mean = |(s, c): (f64, usize)| if c == 0 { f64::NAN } else { s / c as f64 };
    (mean(acc[1]), mean(acc[0]))
}

/// Trains `model` in place with full-batch gradient descent.
pub fn train(model: &mut ToyModel, batch: &SampleBatch, cfg: &StrategyConfig, opts: TrainOptions, seed: u64) -> Result<TrainReport> {
    cfg.validate()?;
    if opts.epochs == 0 {
        return Err(Error::Invalid { field: "epochs", reason: "must be >= 1".into() });
    }
    if !(opts.lr >= 0.0) || !opts.lr.is_finite() {
        return Err(Error::Invalid { field: "lr", reason: format!("must be >= 0, got {}", opts.lr) });
    }
    let mut mae_curve = Vec::with_capacity(opts.epochs);
    let mut loss_curve = Vec::with_capacity(opts.epochs);
    let mut initial_mae = 0.0;
    for epoch in 0..opts.epochs {
        let cache = model.forward_cached(batch).map_err(|_| Error::Diverged { epoch })?;
        let mae = clean_mae(batch, &cache.outputs);
        if epoch == 0 {
            initial_mae = mae;
        } else {
            mae_curve.push(mae);
        }
        let report = match strategy_loss(cfg, batch, &cache.outputs) {
            Ok(r) if r.total.is_finite() => r,
            Ok(_) | Err(Error::NonFiniteGradient(_)) => return Err(Error::Diverged { epoch }),
            Err(e) => return Err(e),
        };
        loss_curve.push(report.total);
        model.backward_apply(batch, &cache, &report, opts.lr).map_err(|_| Error::Diverged { epoch })?;
    }
    let outputs = model.forward(batch).map_err(|_| Error::Diverged { epoch: opts.epochs })?;
    let final_mae = clean_mae(batch, &outputs);
    if !final_mae.is_finite() {
        return Err(Error::Diverged { epoch: opts.epochs });
    }
    mae_curve.push(final_mae);
    let (dq_outlier_mean, dq_inlier_mean) = dq_group_means(batch, &outputs);
    Ok(TrainReport { strategy: cfg.strategy, seed, initial_mae, mae_curve, final_mae, loss_curve, dq_outlier_mean, dq_inlier_mean })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub synth: SynthConfig,
    pub hidden_dim: usize,
    pub strategies: Vec<Strategy>,
    pub seeds: Vec<u64>,
    pub epochs: usize,
    pub lr: f64,
    pub quality: QualityParams,
    pub depth_loss_weight: f64,
    pub dq_loss_weight: f64,
    /// Required gap between GMM's mean quality on inliers and on outliers.
    pub dq_separation: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            synth: SynthConfig::default(),
            hidden_dim: 16,
            strategies: Strategy::ALL.to_vec(),
            seeds: vec![1, 2, 3, 4, 5],
            epochs: 2000,
            lr: 5e-3,
            quality: QualityParams::default(),
            depth_loss_weight: 1.0,
            dq_loss_weight: 10.0,
            dq_separation: 0.1,
        }
    }
}

impl ExperimentConfig {
    pub fn strategy_config(&self, strategy: Strategy) -> StrategyConfig {
        StrategyConfig { strategy, quality: self.quality, depth_loss_weight: self.depth_loss_weight, dq_loss_weight: self.dq_loss_weight }
    }

    /// Every constraint violation, not only the first.
    pub fn violations(&self) -> Vec<Error> {
        let mut errs = Vec::new();
        if let Err(e) = self.synth.validate() {
            errs.push(e);
        }
        if let Err(e) = self.quality.validate() {
            errs.push(e);
        }
        let mut push = |field: &'static str, ok: bool, reason: String| {
            if !ok {
                errs.push(Error::Invalid { field, reason });
            }
        };
        push("hidden_dim", self.hidden_dim >= 1, format!("must be >= 1, got {}", self.hidden_dim));
        push("strategies", !self.strategies.is_empty(), "need at least one strategy".to_string());
        push("seeds", self.seeds.len() >= 3, format!("need >= 3 seeds, got {}", self.seeds.len()));
        push("epochs", self.epochs >= 1, format!("must be >= 1, got {}", self.epochs));
        push("lr", self.lr > 0.0 && self.lr.is_finite(), format!("must be > 0, got {}", self.lr));
        push("depth_loss_weight", self.depth_loss_weight >= 0.0, format!("must be >= 0, got {}", self.depth_loss_weight));
        push("dq_loss_weight", self.dq_loss_weight >= 0.0, format!("must be >= 0, got {}", self.dq_loss_weight));
        push("dq_separation", self.dq_separation >= 0.0, format!("must be >= 0, got {}", self.dq_separation));
        errs
    }

    pub fn validate(&self) -> Result<()> {
        match self.violations().into_iter().next() {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }
}

/// Seed used to initialise the model for a data seed; shared by all strategies.
pub fn model_seed(seed: u64) -> u64 {
    Rng::new(seed).derive(0x6d6f_6465_6c).seed()
}

pub fn dataset(cfg: &ExperimentConfig, seed: u64) -> Result<SampleBatch> {
    generate_regression(&SynthConfig { seed, ..cfg.synth })
}

/// Trains one (strategy, seed) cell and returns the trained model with its report.
pub fn train_cell(cfg: &ExperimentConfig, batch: &SampleBatch, strategy: Strategy, seed: u64) -> Result<(ToyModel, TrainReport)> {
    let mut rng = Rng::new(model_seed(seed));
    let mut model = ToyModel::init(cfg.synth.feature_dim, cfg.hidden_dim, &mut rng)?;
    let report = train(&mut model, batch, &cfg.strategy_config(strategy), TrainOptions { epochs: cfg.epochs, lr: cfg.lr }, seed)?;
    Ok((model, report))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub strategy: Strategy,
    pub seed: u64,
    pub report: Option<TrainReport>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategySummary {
    pub strategy: Strategy,
    pub runs: usize,
    pub mean_mae: f64,
    pub std_mae: f64,
    pub mean_dq_outlier: f64,
    pub mean_dq_inlier: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct Verdicts {
    pub gmm_beats_baseline: Option<bool>,
    pub mpm_beats_baseline: Option<bool>,
    pub hard_worse_than_baseline: Option<bool>,
    pub gmm_dq_separates_outliers: Option<bool>,
}

impl Verdicts {
    /// True when every verdict was computed and holds.
    pub fn all_hold(&self) -> bool {
        [self.gmm_beats_baseline, self.mpm_beats_baseline, self.hard_worse_than_baseline, self.gmm_dq_separates_outliers]
            .iter()
            .all(|v| *v == Some(true))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub config: ExperimentConfig,
    pub summaries: Vec<StrategySummary>,
    pub cells: Vec<CellResult>,
    pub verdicts: Verdicts,
}

impl ComparisonReport {
    pub fn summary(&self, strategy: Strategy) -> Option<&StrategySummary> {
        self.summaries.iter().find(|s| s.strategy == strategy)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("strategy,seed,final_mae\n");
        for c in &self.cells {
            let mae = c.report.as_ref().map_or("NaN".to_string(), |r| r.final_mae.to_string());
            s.push_str(&format!("{},{},{}\n", c.strategy, c.seed, mae));
        }
        s
    }
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Trains every (strategy, seed) cell on identically seeded data.
///
/// Cells run in parallel on the current rayon pool; failures are recorded per
/// cell and do not abort the others.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ComparisonReport> {
    cfg.validate()?;
    let data: Vec<(u64, SampleBatch)> = cfg.seeds.iter().map(|&s| dataset(cfg, s).map(|b| (s, b))).collect::<Result<_>>()?;
    let mut strategies = cfg.strategies.clone();
    strategies.sort();
    strategies.dedup();
    let jobs: Vec<(Strategy, usize)> = strategies.iter().flat_map(|&st| (0..data.len()).map(move |d| (st, d))).collect();
    let mut cells: Vec<CellResult> = jobs
        .par_iter()
        .map(|&(strategy, d)| {
            let (seed, batch) = &data[d];
            match train_cell(cfg, batch, strategy, *seed) {
                Ok((_, report)) => CellResult { strategy, seed: *seed, report: Some(report), error: None },
                Err(e) => CellResult { strategy, seed: *seed, report: None, error: Some(e.to_string()) },
            }
        })
        .collect();
    cells.sort_by_key(|c| (c.strategy, c.seed));

    let mut summaries = Vec::new();
    for &st in &strategies {
        let reports: Vec<&TrainReport> = cells.iter().filter(|c| c.strategy == st).filter_map(|c| c.report.as_ref()).collect();
        let maes: Vec<f64> = reports.iter().map(|r| r.final_mae).collect();
        let (mean_mae, std_mae) = mean_std(&maes);
        let (mean_dq_outlier, _) = mean_std(&reports.iter().map(|r| r.dq_outlier_mean).collect::<Vec<_>>());
        let (mean_dq_inlier, _) = mean_std(&reports.iter().map(|r| r.dq_inlier_mean).collect::<Vec<_>>());
        summaries.push(StrategySummary { strategy: st, runs: reports.len(), mean_mae, std_mae, mean_dq_outlier, mean_dq_inlier });
    }

    let get = |st: Strategy| summaries.iter().find(|s| s.strategy == st && s.runs == cfg.seeds.len());
    let base = get(Strategy::Baseline).map(|s| s.mean_mae);
    let cmp = |st: Strategy, better: bool| {
        let b = base?;
        let m = get(st)?.mean_mae;
        Some(if better { m < b } else { m > b })
    };
    let verdicts = Verdicts {
        gmm_beats_baseline: cmp(Strategy::Gmm, true),
        mpm_beats_baseline: cmp(Strategy::Mpm, true),
        hard_worse_than_baseline: cmp(Strategy::Hard, false),
        gmm_dq_separates_outliers: get(Strategy::Gmm).map(|s| s.mean_dq_inlier - s.mean_dq_outlier >= cfg.dq_separation),
    };
    Ok(ComparisonReport { config: cfg.clone(), summaries, cells, verdicts })
}

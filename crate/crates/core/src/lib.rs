//! Depth-sample mining for dense monocular 3D detection heads.
//!
//! The crate provides depth-quality metrics, loss-preserving sample
//! reweighting, the quality-supervised strategies (including the variant that
//! back-propagates through its own quality target), a small multi-head model
//! to train them on synthetic data with ill-posed outliers, rotated BEV NMS
//! with depth-aware score fusion, and nuScenes-style evaluation.

pub mod boxgeom;
pub mod config;
pub mod error;
pub mod eval;
pub mod io;
pub mod losses;
pub mod mining;
pub mod model;
pub mod pipeline;
pub mod quality;
pub mod rng;
pub mod synth;
pub mod trainer;
pub mod types;

pub use boxgeom::{fused_score, nms, rotated_iou, BevPolygon, ScoreMode};
pub use config::RunConfig;
pub use error::{Error, Result};
pub use eval::{evaluate, nds, MatchSet, MetricSet};
pub use losses::{bce, gam_target_grad, smooth_l1, strategy_loss, LossReport, Strategy, StrategyConfig};
pub use mining::{mining_loss, normalize_weights, MiningWeights};
pub use model::ToyModel;
pub use pipeline::{compare_trained, run_pipeline, score_mode_ablation, PipelineComparison, PipelineConfig};
pub use quality::{dq_curve, dq_gaussian, dq_grad, dq_relative, mining_transform, MiningMode};
pub use rng::Rng;
pub use synth::{generate_regression, generate_scene, SceneConfig, SynthConfig, SynthScene};
pub use trainer::{run_experiment, train, ComparisonReport, ExperimentConfig, TrainOptions, TrainReport};
pub use types::{Box3D, Detection, HeadOutputs, MetricKind, QualityParams, SampleBatch};

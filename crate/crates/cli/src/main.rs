use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use depthmine_core::eval::{evaluate_frames, frames_by_id, frames_from_records, per_class_ate_csv, Frame};
use depthmine_core::io::{framed_to_jsonl, read_framed_jsonl, BoxOrDetection, Framed};
use depthmine_core::pipeline::{compare_trained, generate_scenes, score_mode_ablation, PipelineComparison};
use depthmine_core::quality::{curve_to_csv, error_grid};
use depthmine_core::{dq_curve, generate_regression, run_experiment, MetricKind, QualityParams, RunConfig, ScoreMode, SynthConfig};

mod fail;
mod out;

use fail::{CliResult, Context, Failure, Kind};

/// Environment variable naming the default output directory.
const OUT_DIR_ENV: &str = "DEPTHMINE_OUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "depthmine", version, about = "Depth-quality mining experiments, depth-aware NMS and detection evaluation")]
struct Cli {
    /// Directory for outputs whose path is not given explicitly.
    #[arg(long, global = true, env = OUT_DIR_ENV, default_value = ".")]
    out_dir: PathBuf,
    /// Print progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic regression batch or scene set.
    Gen(GenArgs),
    /// Train every (strategy, seed) cell and write comparison.json and comparison.csv.
    Experiment(ExperimentArgs),
    /// Write depth-quality curves as CSV (beta, rel_error, dq).
    Curves(CurvesArgs),
    /// Suppress duplicate detections with BEV rotated-IoU NMS.
    Nms(NmsArgs),
    /// Evaluate detections against ground truth (mAP, TP errors, NDS).
    Eval(EvalArgs),
    /// Validate a config file and print it with defaults filled in.
    Validate(ValidateArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum GenKind {
    Regression,
    Scenes,
}

#[derive(Debug, Args)]
struct GenArgs {
    #[arg(value_enum)]
    kind: GenKind,
    /// Run config; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Data seed, overriding the config.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output path: a JSON-lines file for `regression` [default: <out-dir>/regression.jsonl],
    /// a directory for `scenes` [default: <out-dir>/scenes].
    #[arg(long)]
    export: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ExperimentArgs {
    /// Run config; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory [default: <out-dir>].
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated seeds, overriding the config.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Worker threads for training cells (0 = one per core).
    #[arg(long, default_value_t = 0)]
    workers: usize,
    /// Also run the scene pipeline comparison and score-mode ablation (pipeline.json).
    #[arg(long)]
    pipeline: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MetricArg {
    Relative,
    Gaussian,
}

#[derive(Debug, Args)]
struct CurvesArgs {
    /// Comma-separated beta values, one curve each.
    #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
    betas: Vec<f64>,
    /// Largest relative depth error on the grid.
    #[arg(long, default_value_t = 1.0)]
    max_err: f64,
    /// Grid points per curve, including 0 and max-err.
    #[arg(long, default_value_t = 101)]
    points: usize,
    /// Quality metric the curves are drawn for.
    #[arg(long, value_enum, default_value = "relative")]
    metric: MetricArg,
    /// Output CSV [default: <out-dir>/dq_curve.csv].
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ScoreModeArg {
    Cls,
    ClsCtr,
    ClsCtrDq,
}

impl From<ScoreModeArg> for ScoreMode {
    fn from(m: ScoreModeArg) -> Self {
        match m {
            ScoreModeArg::Cls => ScoreMode::Cls,
            ScoreModeArg::ClsCtr => ScoreMode::ClsCtr,
            ScoreModeArg::ClsCtrDq => ScoreMode::ClsCtrDq,
        }
    }
}

#[derive(Debug, Args)]
struct NmsArgs {
    /// Detections, JSON lines.
    #[arg(long)]
    dets: PathBuf,
    /// BEV IoU above which the lower-ranked box is suppressed.
    #[arg(long, default_value_t = 0.5)]
    iou_thr: f64,
    /// Scores that rank detections before suppression.
    #[arg(long, value_enum, default_value = "cls-ctr-dq")]
    score_mode: ScoreModeArg,
    /// Let boxes of different classes suppress each other.
    #[arg(long)]
    class_agnostic: bool,
    /// Output JSON lines of kept detections [default: <out-dir>/kept.jsonl].
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Detections, JSON lines (bare boxes count as certain detections).
    #[arg(long)]
    dets: PathBuf,
    /// Ground truth, JSON lines (boxes or detections).
    #[arg(long)]
    gts: PathBuf,
    /// Run config whose pipeline.eval thresholds are used.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output metrics JSON [default: <out-dir>/metrics.json].
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write per-class translation error as CSV.
    #[arg(long)]
    per_class: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    /// Run config to check.
    #[arg(long)]
    config: PathBuf,
}

/// One regression sample as exported by `gen regression`.
#[derive(Debug, Serialize, Deserialize)]
struct SampleRecord {
    features: Vec<f64>,
    gt_depth: f64,
    outlier: bool,
}

#[derive(Debug, Serialize)]
struct PipelineReport {
    comparisons: Vec<PipelineComparison>,
    ablation: Vec<AblationRow>,
}

#[derive(Debug, Serialize)]
struct AblationRow {
    seed: u64,
    score_mode: ScoreMode,
    metrics: depthmine_core::MetricSet,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            // --help and --version.
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.render().to_string();
            let f = Failure::new(Kind::Usage, msg.lines().filter(|l| !l.trim().is_empty()).map(str::to_string).collect());
            eprintln!("{}", f.to_json());
            return ExitCode::from(f.exit_code as u8);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}", f.to_json());
            ExitCode::from(f.exit_code as u8)
        }
    }
}

fn run(cli: &Cli) -> CliResult<()> {
    let log = |msg: &str| {
        if cli.verbose {
            eprintln!("{msg}");
        }
    };
    match &cli.command {
        Command::Gen(a) => gen(cli, a, &log),
        Command::Experiment(a) => experiment(cli, a, &log),
        Command::Curves(a) => curves(cli, a),
        Command::Nms(a) => nms(cli, a),
        Command::Eval(a) => eval(cli, a),
        Command::Validate(a) => {
            let cfg = load_config(Some(&a.config))?;
            println!("{}", cfg.to_json()?);
            Ok(())
        }
    }
}

fn default_out(cli: &Cli, given: &Option<PathBuf>, name: &str) -> PathBuf {
    given.clone().unwrap_or_else(|| cli.out_dir.join(name))
}

fn read_text(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).or_fail(Kind::MissingInput, format!("cannot read {}", path.display()))
}

/// Reads and validates a run config, reporting every violation; `None` gives the defaults.
fn load_config(path: Option<&PathBuf>) -> CliResult<RunConfig> {
    let Some(path) = path else {
        return Ok(RunConfig::default());
    };
    let text = read_text(path)?;
    RunConfig::from_json(&text).map_err(|errs| Failure::new(Kind::Config, errs.iter().map(|e| format!("{}: {e}", path.display())).collect()))
}

fn read_records<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<Vec<Framed<T>>> {
    let file = File::open(path).or_fail(Kind::MissingInput, format!("cannot open {}", path.display()))?;
    read_framed_jsonl(BufReader::new(file)).or_fail(Kind::BadInput, path.display())
}

fn gen(cli: &Cli, a: &GenArgs, log: &dyn Fn(&str)) -> CliResult<()> {
    let cfg = load_config(a.config.as_ref())?;
    match a.kind {
        GenKind::Regression => {
            let synth = SynthConfig { seed: a.seed, ..cfg.experiment.synth };
            let batch = generate_regression(&synth)?;
            let mut text = String::new();
            for i in 0..batch.n {
                let rec = SampleRecord { features: batch.row(i).to_vec(), gt_depth: batch.gt_depth[i], outlier: batch.outlier_flag[i] };
                text.push_str(&serde_json::to_string(&rec).or_fail(Kind::Compute, "serializing sample")?);
                text.push('\n');
            }
            let path = default_out(cli, &a.export, "regression.jsonl");
            out::write_atomic(&path, text.as_bytes())?;
            log(&format!("wrote {} samples ({} outliers) to {}", batch.n, batch.n_outliers(), path.display()));
        }
        GenKind::Scenes => {
            let scenes = generate_scenes(&cfg.pipeline, a.seed)?;
            let mut dets = Vec::new();
            let mut gts = Vec::new();
            for (frame, s) in scenes.iter().enumerate() {
                let frame = frame as u64;
                dets.extend(s.detections.iter().map(|d| Framed { frame, item: *d }));
                gts.extend(s.gts.iter().map(|g| Framed { frame, item: *g }));
            }
            let dir = default_out(cli, &a.export, "scenes");
            out::ensure_dir(&dir)?;
            out::write_atomic(&dir.join("detections.jsonl"), framed_to_jsonl(&dets)?.as_bytes())?;
            out::write_atomic(&dir.join("gts.jsonl"), framed_to_jsonl(&gts)?.as_bytes())?;
            log(&format!("wrote {} scenes ({} detections) to {}", scenes.len(), dets.len(), dir.display()));
        }
    }
    Ok(())
}

fn experiment(cli: &Cli, a: &ExperimentArgs, log: &dyn Fn(&str)) -> CliResult<()> {
    let mut cfg = load_config(a.config.as_ref())?;
    if let Some(seeds) = &a.seeds {
        cfg.experiment.seeds = seeds.clone();
        let errs = cfg.violations();
        if !errs.is_empty() {
            return Err(Failure::new(Kind::Config, errs.iter().map(ToString::to_string).collect()));
        }
    }
    let dir = a.out.clone().unwrap_or_else(|| cli.out_dir.clone());
    out::ensure_dir(&dir)?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(a.workers).build().or_fail(Kind::Compute, "starting worker pool")?;
    log(&format!("training {} strategies x {} seeds", cfg.experiment.strategies.len(), cfg.experiment.seeds.len()));
    let report = pool.install(|| run_experiment(&cfg.experiment))?;
    for c in report.cells.iter().filter(|c| c.error.is_some()) {
        log(&format!("cell {} seed {} failed: {}", c.strategy, c.seed, c.error.as_deref().unwrap_or("")));
    }
    out::write_json(&dir.join("comparison.json"), &report)?;
    out::write_atomic(&dir.join("comparison.csv"), report.to_csv().as_bytes())?;
    log(&format!("verdicts: {:?}", report.verdicts));

    if a.pipeline {
        log("running scene pipeline comparison");
        let comparisons = pool.install(|| {
            use rayon::prelude::*;
            cfg.experiment.seeds.par_iter().map(|&s| compare_trained(&cfg.experiment, &cfg.pipeline, s)).collect::<Result<Vec<_>, _>>()
        })?;
        let mut ablation = Vec::new();
        for &seed in &cfg.experiment.seeds {
            for (score_mode, metrics) in score_mode_ablation(&cfg.pipeline, seed)? {
                ablation.push(AblationRow { seed, score_mode, metrics });
            }
        }
        out::write_json(&dir.join("pipeline.json"), &PipelineReport { comparisons, ablation })?;
    }
    Ok(())
}

fn curves(cli: &Cli, a: &CurvesArgs) -> CliResult<()> {
    let metric = match a.metric {
        MetricArg::Relative => MetricKind::Relative,
        MetricArg::Gaussian => MetricKind::Gaussian,
    };
    if !(a.max_err >= 0.0 && a.max_err.is_finite()) {
        return Err(Failure::one(Kind::Usage, format!("--max-err must be a finite value >= 0, got {}", a.max_err)));
    }
    if a.points < 2 {
        return Err(Failure::one(Kind::Usage, format!("--points must be >= 2, got {}", a.points)));
    }
    let params = a.betas.iter().map(|b| QualityParams::new(metric, *b)).collect::<Result<Vec<_>, _>>().map_err(|e| Failure::one(Kind::Usage, e))?;
    let csv = curve_to_csv(&dq_curve(&params, &error_grid(a.max_err, a.points))?);
    out::write_atomic(&default_out(cli, &a.out, "dq_curve.csv"), csv.as_bytes())
}

fn nms(cli: &Cli, a: &NmsArgs) -> CliResult<()> {
    if !(0.0..=1.0).contains(&a.iou_thr) {
        return Err(Failure::one(Kind::Usage, format!("--iou-thr must lie in [0, 1], got {}", a.iou_thr)));
    }
    let records: Vec<Framed<BoxOrDetection>> = read_records(&a.dets)?;
    let frames = frames_by_id(records.into_iter().map(|r| Framed { frame: r.frame, item: r.item.into_detection() }).collect(), Vec::new());
    let mode = ScoreMode::from(a.score_mode);
    let mut kept = Vec::new();
    for (frame, f) in frames {
        let scored: Vec<_> = f.dets.iter().map(|d| mode.apply(d)).collect();
        // Survivors are written with their original scores.
        for i in depthmine_core::nms(&scored, a.iou_thr, !a.class_agnostic)? {
            kept.push(Framed { frame, item: f.dets[i] });
        }
    }
    out::write_atomic(&default_out(cli, &a.out, "kept.jsonl"), framed_to_jsonl(&kept)?.as_bytes())
}

fn eval(cli: &Cli, a: &EvalArgs) -> CliResult<()> {
    let cfg = load_config(a.config.as_ref())?;
    let dets: Vec<Framed<BoxOrDetection>> = read_records(&a.dets)?;
    let gts: Vec<Framed<BoxOrDetection>> = read_records(&a.gts)?;
    let frames: Vec<Frame> = frames_from_records(
        dets.into_iter().map(|r| Framed { frame: r.frame, item: r.item.into_detection() }).collect(),
        gts.into_iter().map(|r| Framed { frame: r.frame, item: r.item.into_box() }).collect(),
    );
    let ev = evaluate_frames(&frames, &cfg.pipeline.eval)?;
    out::write_json(&default_out(cli, &a.out, "metrics.json"), &ev)?;
    if let Some(p) = &a.per_class {
        out::write_atomic(p, per_class_ate_csv(&ev.per_class).as_bytes())?;
    }
    Ok(())
}

//! Acceptance suite. Each test prints one `acceptance <id> <name>: PASS|FAIL`
//! line (visible with `--nocapture`) and then asserts.
//!
//! Run with `cargo test -p depthmine-core --test acceptance -- --nocapture --test-threads 1`.

use depthmine_core::boxgeom::BevPolygon;
use depthmine_core::losses::{detach, strategy_loss_detached};
use depthmine_core::quality::{curve_to_csv, dq, dq_grad, error_grid};
use depthmine_core::*;
use rayon::prelude::*;

const DEFAULT_CONFIG: &str = include_str!("../../../configs/default.json");

fn report(id: u32, name: &str, pass: bool, detail: String) {
    println!("acceptance {id} {name}: {} ({detail})", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "criterion {id} failed: {detail}");
}

fn frozen() -> RunConfig {
    RunConfig::from_json(DEFAULT_CONFIG).expect("frozen config must validate")
}

fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

#[test]
fn c1_nds_formula() {
    let base = nds(0.268, 0.817, 0.271, 0.586, 1.315, 0.156);
    let gmm = nds(0.286, 0.779, 0.264, 0.540, 1.319, 0.153);
    let pass = (base - 0.351).abs() <= 1e-3 && (gmm - 0.370).abs() <= 1e-3;
    report(1, "nds-formula", pass, format!("baseline {base:.4} vs 0.351, gmm {gmm:.4} vs 0.370"));
}

fn gradient_instance(seed: u64) -> (ToyModel, SampleBatch) {
    let (f, h, n) = (3, 4, 8);
    let mut rng = Rng::new(seed);
    let mut model = ToyModel::init(f, h, &mut rng).unwrap();
    let features: Vec<f64> = (0..n * f).map(|_| rng.uniform_range(-1.0, 1.0)).collect();
    let gt: Vec<f64> = (0..n).map(|_| rng.uniform_range(5.0, 20.0)).collect();
    // Put predictions near the targets so both smooth-L1 branches occur.
    let depth_bias = h * f + h + h;
    model.params_mut()[depth_bias] = 12.0;
    let flags = (0..n).map(|i| i % 4 == 0).collect();
    (model, SampleBatch::new(f, features, gt, flags).unwrap())
}

#[test]
fn c2_gradients_match_finite_differences() {
    let step = 1e-5;
    let (model, batch) = gradient_instance(11);
    let mut worst_param = 0.0f64;
    for strategy in Strategy::ALL {
        let cfg = StrategyConfig::new(strategy);
        let cache = model.forward_cached(&batch).unwrap();
        let det = detach(&cfg, &batch, &cache.outputs).unwrap();
        let rep = strategy_loss_detached(&cfg, &batch, &cache.outputs, &det).unwrap();
        let grad = model.gradient(&batch, &cache, &rep).unwrap();
        let loss_at = |params: &[f64]| {
            let m = ToyModel::from_params(3, 4, params.to_vec()).unwrap();
            let out = m.forward(&batch).unwrap();
            strategy_loss_detached(&cfg, &batch, &out, &det).unwrap().total
        };
        for k in 0..grad.len() {
            let mut p = model.params().to_vec();
            p[k] += step;
            let up = loss_at(&p);
            p[k] -= 2.0 * step;
            let down = loss_at(&p);
            let fd = (up - down) / (2.0 * step);
            worst_param = worst_param.max(rel_err(fd, grad[k], 1e-8));
        }
    }

    let mut rng = Rng::new(12);
    let mut worst_dq = 0.0f64;
    for i in 0..10_000 {
        let metric = if i % 2 == 0 { MetricKind::Relative } else { MetricKind::Gaussian };
        let params = QualityParams::new(metric, rng.uniform_range(0.5, 4.0)).unwrap();
        let dg = rng.uniform_range(1.0, 60.0);
        let dp = dg + rng.uniform_range(-0.5, 0.5) * dg;
        let h = 1e-6 * dg;
        if (dp - dg).abs() < 2.0 * h {
            continue;
        }
        let fd = (dq(&params, dp + h, dg).unwrap() - dq(&params, dp - h, dg).unwrap()) / (2.0 * h);
        worst_dq = worst_dq.max(rel_err(fd, dq_grad(&params, dp, dg).unwrap(), 1e-12));
    }
    report(
        2,
        "gradient-check",
        worst_param <= 1e-4 && worst_dq <= 1e-5,
        format!("worst parameter rel err {worst_param:.2e} (tol 1e-4), worst quality rel err {worst_dq:.2e} (tol 1e-5)"),
    );
}

#[test]
fn c3_gam_closed_form() {
    let mut rng = Rng::new(13);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let p = rng.uniform_range(0.01, 0.99);
        // BCE is affine in its target, so a wide symmetric difference is exact up to rounding.
        let fd = bce(p, 1.0).value - bce(p, 0.0).value;
        worst = worst.max(rel_err(fd, gam_target_grad(p), 1e-300));
    }
    let at_half = gam_target_grad(0.5);
    report(3, "gam-closed-form", worst <= 1e-6 && at_half == 0.0, format!("worst rel err {worst:.2e}, value at 0.5 = {at_half}"));
}

#[test]
fn c4_normalization_conservation() {
    let mut rng = Rng::new(14);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let n = 1 + rng.below(64);
        let w: Vec<f64> = (0..n).map(|_| rng.uniform_range(0.0, 10.0)).collect();
        let l: Vec<f64> = (0..n).map(|_| rng.uniform_range(0.0, 50.0)).collect();
        let total: f64 = l.iter().sum();
        let mined = mining_loss(&normalize_weights(&w, &l).unwrap(), &l).unwrap();
        worst = worst.max(rel_err(mined, total, f64::MIN_POSITIVE));
    }
    let degenerate = normalize_weights(&[0.0; 5], &[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
    let uniform = degenerate.iter().all(|w| *w == degenerate[0]);
    report(4, "normalization-conservation", worst <= 1e-9 && uniform, format!("worst rel err {worst:.2e}, degenerate weights {degenerate:?}"));
}

#[test]
fn c5_mining_strategy_ordering() {
    let cfg = frozen();
    assert_eq!(cfg.experiment.seeds.len(), 5);
    let rep = run_experiment(&cfg.experiment).unwrap();
    let failed: Vec<_> = rep.cells.iter().filter_map(|c| c.error.clone()).collect();
    let v = &rep.verdicts;
    let pass = failed.is_empty() && v.all_hold();
    let summary: Vec<String> = rep
        .summaries
        .iter()
        .map(|s| format!("{} {:.3}±{:.3} dq {:.3}/{:.3}", s.strategy, s.mean_mae, s.std_mae, s.mean_dq_inlier, s.mean_dq_outlier))
        .collect();
    report(5, "mining-strategy-ordering", pass, format!("{v:?}; {}", summary.join("; ")));
}

#[test]
fn c6_quality_curves() {
    let betas = [1.0, 2.0, 3.0];
    let params: Vec<QualityParams> = betas.iter().map(|b| QualityParams::relative(*b).unwrap()).collect();
    let csv = curve_to_csv(&dq_curve(&params, &error_grid(1.0, 101)).unwrap());
    let rows: Vec<[f64; 3]> = csv
        .lines()
        .skip(1)
        .map(|l| {
            let v: Vec<f64> = l.split(',').map(|x| x.parse().unwrap()).collect();
            [v[0], v[1], v[2]]
        })
        .collect();
    let series = |beta: f64| rows.iter().filter(|r| r[0] == beta).map(|r| (r[1], r[2])).collect::<Vec<_>>();
    let mut pass = csv.starts_with("beta,rel_error,dq\n");
    for b in betas {
        let s = series(b);
        pass &= s.len() == 101;
        pass &= s.iter().any(|(e, q)| *e == 0.0 && *q == 1.0);
        pass &= s.windows(2).all(|w| w[1].1 <= w[0].1);
    }
    let shape_ok = pass;
    let pairs: Vec<(f64, f64, f64)> = series(1.0).iter().zip(series(3.0)).filter(|((e, _), _)| *e > 0.0).map(|((e, q1), (_, q3))| (*e, *q1, q3)).collect();
    let below = pairs.iter().all(|(_, q1, q3)| q1 <= q3);
    pass &= below;
    let (e, q1, q3) = pairs[pairs.len() / 2];
    report(
        6,
        "quality-curves",
        pass,
        format!("{} rows; header, unit value and monotonicity ok: {shape_ok}; beta=1 <= beta=3 for error > 0: {below} (at error {e}: {q1:.4} vs {q3:.4})", rows.len()),
    );
}

fn random_box(rng: &mut Rng, spread: f64, class_id: u32) -> Box3D {
    Box3D::new(
        [rng.uniform_range(-spread, spread), rng.uniform_range(-spread, spread), 0.0],
        [rng.uniform_range(0.5, 4.0), rng.uniform_range(0.5, 6.0), 1.5],
        rng.uniform_range(-std::f64::consts::PI, std::f64::consts::PI),
        [0.0, 0.0],
        class_id,
        0,
    )
    .unwrap()
}

/// Intersection area by sampling points uniformly inside `a` and testing them against `b`.
fn monte_carlo_iou(a: &Box3D, b: &Box3D, samples: u64, seed: u64) -> f64 {
    let pb = BevPolygon::from_box(b).unwrap();
    let (c, s) = (a.yaw.cos(), a.yaw.sin());
    let mut rng = Rng::new(seed);
    let mut hits = 0u64;
    for _ in 0..samples {
        let u = (rng.uniform() - 0.5) * a.length();
        let v = (rng.uniform() - 0.5) * a.width();
        if pb.contains([a.center[0] + c * u - s * v, a.center[1] + s * u + c * v]) {
            hits += 1;
        }
    }
    let area_a = a.length() * a.width();
    let area_b = b.length() * b.width();
    let inter = area_a * hits as f64 / samples as f64;
    inter / (area_a + area_b - inter)
}

/// The kept set of greedy NMS is the unique subset in which a box is kept
/// exactly when no kept box ranked above it overlaps it beyond the threshold.
fn brute_force_nms(dets: &[Detection], thr: f64, per_class: bool) -> Vec<usize> {
    let n = dets.len();
    let mut rank: Vec<usize> = (0..n).collect();
    rank.sort_by(|&i, &j| dets[j].fused.total_cmp(&dets[i].fused));
    let pos: Vec<usize> = {
        let mut p = vec![0; n];
        for (r, &i) in rank.iter().enumerate() {
            p[i] = r;
        }
        p
    };
    let conflict = |i: usize, j: usize| (!per_class || dets[i].bbox.class_id == dets[j].bbox.class_id) && rotated_iou(&dets[i].bbox, &dets[j].bbox).unwrap() > thr;
    let mut found = Vec::new();
    for mask in 0u32..(1 << n) {
        let kept = |i: usize| mask & (1 << i) != 0;
        let consistent = (0..n).all(|i| {
            let blocked = (0..n).any(|j| kept(j) && pos[j] < pos[i] && conflict(i, j));
            kept(i) != blocked
        });
        if consistent {
            found.push((0..n).filter(|&i| kept(i)).collect::<Vec<_>>());
        }
    }
    assert_eq!(found.len(), 1, "greedy suppression has a unique fixed point");
    found.pop().unwrap()
}

#[test]
fn c7_geometry_oracles() {
    let mut rng = Rng::new(17);
    let pairs: Vec<(Box3D, Box3D)> = (0..200)
        .map(|_| {
            let a = random_box(&mut rng, 1.5, 0);
            let b = random_box(&mut rng, 1.5, 0);
            (a, b)
        })
        .collect();
    let worst_iou = pairs
        .par_iter()
        .enumerate()
        .map(|(k, (a, b))| (rotated_iou(a, b).unwrap() - monte_carlo_iou(a, b, 10_000_000, 1000 + k as u64)).abs())
        .reduce(|| 0.0, f64::max);

    let mut nms_mismatch = 0;
    for trial in 0..100u64 {
        let n = 1 + rng.below(10);
        let dets: Vec<Detection> = (0..n)
            .map(|_| {
                let class_id = rng.below(2) as u32;
                let b = random_box(&mut rng, 3.0, class_id);
                // Coarse scores so ties occur.
                let q = |r: &mut Rng| (r.below(4) + 1) as f64 / 4.0;
                Detection::new(b, q(&mut rng), q(&mut rng), q(&mut rng)).unwrap()
            })
            .collect();
        let thr = [0.1, 0.3, 0.5][trial as usize % 3];
        for per_class in [false, true] {
            let mut got = nms(&dets, thr, per_class).unwrap();
            got.sort_unstable();
            if got != brute_force_nms(&dets, thr, per_class) {
                nms_mismatch += 1;
            }
        }
    }
    report(
        7,
        "geometry-oracles",
        worst_iou <= 0.01 && nms_mismatch == 0,
        format!("worst |iou - monte carlo| {worst_iou:.2e} (tol 0.01), nms mismatches {nms_mismatch}/200"),
    );
}

#[test]
fn c8_trained_pipeline_translation_error() {
    let cfg = frozen();
    let results: Vec<PipelineComparison> = cfg.experiment.seeds.par_iter().map(|&s| compare_trained(&cfg.experiment, &cfg.pipeline, s).unwrap()).collect();
    let wins = results.iter().filter(|r| r.gmm.mate < r.baseline.mate).count();
    let detail: Vec<String> = results.iter().map(|r| format!("seed {} {:.3} vs {:.3}", r.seed, r.gmm.mate, r.baseline.mate)).collect();
    report(8, "trained-pipeline-mate", wins >= 4, format!("gmm lower on {wins}/5 seeds; {}", detail.join(", ")));
}

#[test]
fn c9_score_mode_ablation() {
    let cfg = frozen();
    let mut holds = 0;
    let mut detail = Vec::new();
    for &seed in &cfg.experiment.seeds {
        let rows = score_mode_ablation(&cfg.pipeline, seed).unwrap();
        let [cls, ctr, dq] = [rows[0].1.nds, rows[1].1.nds, rows[2].1.nds];
        assert_eq!(rows.iter().map(|r| r.0).collect::<Vec<_>>(), ScoreMode::ALL.to_vec());
        if dq >= ctr && ctr >= cls {
            holds += 1;
        }
        detail.push(format!("seed {seed} {cls:.3}/{ctr:.3}/{dq:.3}"));
    }
    report(9, "score-mode-ablation", holds >= 4, format!("ordering holds on {holds}/5 seeds; {}", detail.join(", ")));
}

//! Bird's-eye-view box overlap, depth-aware score fusion and greedy NMS.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Box3D, Detection};

/// `sqrt(s_cls * s_ctr * s_dq)`, each input weighted equally.
pub fn fused_score(s_cls: f64, s_ctr: f64, s_dq: f64) -> Result<f64> {
    for (name, s) in [("s_cls", s_cls), ("s_ctr", s_ctr), ("s_dq", s_dq)] {
        if !(0.0..=1.0).contains(&s) {
            return Err(Error::Domain(format!("{name} must lie in [0, 1], got {s}")));
        }
    }
    Ok((s_cls * s_ctr * s_dq).sqrt())
}

/// Which scores rank detections for NMS and evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ScoreMode {
    Cls,
    ClsCtr,
    #[default]
    ClsCtrDq,
}

impl ScoreMode {
    pub const ALL: [ScoreMode; 3] = [ScoreMode::Cls, ScoreMode::ClsCtr, ScoreMode::ClsCtrDq];

    pub fn name(self) -> &'static str {
        match self {
            ScoreMode::Cls => "cls",
            ScoreMode::ClsCtr => "cls_ctr",
            ScoreMode::ClsCtrDq => "cls_ctr_dq",
        }
    }

    /// Replaces the scores this mode ignores by 1 and refreshes the fused score.
    ///
    /// The fused score of the result is a monotone function of the mode's
    /// ranking score (`sqrt(s_cls)` for `Cls`), so ranking by it is equivalent.
    pub fn apply(self, det: &Detection) -> Detection {
        let (ctr, dq) = match self {
            ScoreMode::Cls => (1.0, 1.0),
            ScoreMode::ClsCtr => (det.s_ctr, 1.0),
            ScoreMode::ClsCtrDq => (det.s_ctr, det.s_dq),
        };
        Detection { s_ctr: ctr, s_dq: dq, fused: (det.s_cls * ctr * dq).sqrt(), ..*det }
    }
}

impl std::str::FromStr for ScoreMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ScoreMode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Parse(format!("unknown score mode `{s}` (expected cls, cls_ctr or cls_ctr_dq)")))
    }
}

/// Counter-clockwise ground-plane footprint of a box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BevPolygon {
    pub corners: [[f64; 2]; 4],
}

impl BevPolygon {
    pub fn from_box(b: &Box3D) -> Result<Self> {
        let (w, l) = (b.width(), b.length());
        if !(w > 0.0 && l > 0.0) {
            return Err(Error::DegenerateBox(format!("footprint {w} x {l}")));
        }
        let (s, c) = b.yaw.sin_cos();
        let (hl, hw) = (0.5 * l, 0.5 * w);
        let local = [[hl, -hw], [hl, hw], [-hl, hw], [-hl, -hw]];
        let corners = local.map(|[x, y]| [b.center[0] + c * x - s * y, b.center[1] + s * x + c * y]);
        Ok(Self { corners })
    }

    pub fn area(&self) -> f64 {
        polygon_area(&self.corners)
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        (0..4).all(|i| cross(self.corners[i], self.corners[(i + 1) % 4], p) >= 0.0)
    }
}

fn cross(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])
}

/// Shoelace area; positive for counter-clockwise vertex order.
pub fn polygon_area(points: &[[f64; 2]]) -> f64 {
    let n = points.len();
    if n < 3 {
        return 0.0;
    }
    let twice: f64 = (0..n)
        .map(|i| {
            let (a, b) = (points[i], points[(i + 1) % n]);
            a[0] * b[1] - b[0] * a[1]
        })
        .sum();
    0.5 * twice
}

/// Sutherland-Hodgman clipping of `subject` against the convex CCW polygon `clip`.
pub fn clip_convex(subject: &[[f64; 2]], clip: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut output = subject.to_vec();
    for i in 0..clip.len() {
        if output.is_empty() {
            break;
        }
        let (a, b) = (clip[i], clip[(i + 1) % clip.len()]);
        let input = std::mem::take(&mut output);
        for j in 0..input.len() {
            let cur = input[j];
            let prev = input[(j + input.len() - 1) % input.len()];
            let (c_cur, c_prev) = (cross(a, b, cur), cross(a, b, prev));
            if c_cur >= 0.0 {
                if c_prev < 0.0 {
                    output.push(intersect(prev, cur, c_prev, c_cur));
                }
                output.push(cur);
            } else if c_prev >= 0.0 {
                output.push(intersect(prev, cur, c_prev, c_cur));
            }
        }
    }
    output
}

fn intersect(p: [f64; 2], q: [f64; 2], cp: f64, cq: f64) -> [f64; 2] {
    let t = cp / (cp - cq);
    [p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]
}

/// Intersection over union of the two boxes' ground-plane footprints.
pub fn rotated_iou(a: &Box3D, b: &Box3D) -> Result<f64> {
    let pa = BevPolygon::from_box(a)?;
    let pb = BevPolygon::from_box(b)?;
    let (area_a, area_b) = (pa.area(), pb.area());
    // Cheap reject on circumscribed circles.
    let reach = 0.5 * (a.width().hypot(a.length()) + b.width().hypot(b.length()));
    if (a.center[0] - b.center[0]).hypot(a.center[1] - b.center[1]) > reach {
        return Ok(0.0);
    }
    let inter = polygon_area(&clip_convex(&pa.corners, &pb.corners)).max(0.0);
    let union = area_a + area_b - inter;
    Ok((inter / union).clamp(0.0, 1.0))
}

fn check_threshold(iou_thr: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&iou_thr) {
        return Err(Error::Domain(format!("iou threshold must lie in [0, 1], got {iou_thr}")));
    }
    Ok(())
}

/// Indices ordered by fused score, descending; ties keep input order.
pub fn rank_by_score(dets: &[Detection]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&i, &j| dets[j].fused.total_cmp(&dets[i].fused));
    order
}

fn greedy(dets: &[Detection], order: &[usize], iou_thr: f64) -> Result<Vec<usize>> {
    let mut kept: Vec<usize> = Vec::new();
    let mut suppressed = vec![false; order.len()];
    for (pos, &i) in order.iter().enumerate() {
        if suppressed[pos] {
            continue;
        }
        kept.push(i);
        for (later, &j) in order.iter().enumerate().skip(pos + 1) {
            if !suppressed[later] && rotated_iou(&dets[i].bbox, &dets[j].bbox)? > iou_thr {
                suppressed[later] = true;
            }
        }
    }
    Ok(kept)
}

/// Greedy non-maximum suppression over fused scores.
///
/// Returns kept indices in descending score order. With `per_class`, boxes
/// only suppress boxes of their own class.
pub fn nms(dets: &[Detection], iou_thr: f64, per_class: bool) -> Result<Vec<usize>> {
    check_threshold(iou_thr)?;
    for d in dets {
        if !d.fused.is_finite() {
            return Err(Error::Domain("detection without a fused score".into()));
        }
    }
    let order = rank_by_score(dets);
    if !per_class {
        return greedy(dets, &order, iou_thr);
    }
    let mut groups: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for &i in &order {
        groups.entry(dets[i].bbox.class_id).or_default().push(i);
    }
    let groups: Vec<Vec<usize>> = groups.into_values().collect();
    let per_group: Vec<Vec<usize>> = groups.par_iter().map(|g| greedy(dets, g, iou_thr)).collect::<Result<_>>()?;
    let mut keep = vec![false; dets.len()];
    for i in per_group.into_iter().flatten() {
        keep[i] = true;
    }
    Ok(order.into_iter().filter(|i| keep[*i]).collect())
}

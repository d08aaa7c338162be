//! Material curves advected with gap and curvature control, and extraction of
//! attracting and repelling LCS by advecting seed segments.

use crate::error::{Error, Result};
use crate::flow_map::advect_point;
use crate::geom::Vec2;
use crate::ode::Tolerance;
use crate::velocity::VelocityField;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LcsKind {
    Attracting,
    Repelling,
}

impl LcsKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LcsKind::Attracting => "attracting",
            LcsKind::Repelling => "repelling",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Advection {
    None,
    Forward,
    Backward,
}

/// Polyline following a material line, stamped with the time it represents.
#[derive(Debug, Clone, PartialEq)]
pub struct MaterialCurve {
    pub points: Vec<Vec2>,
    pub time: f64,
    pub seed_id: usize,
    pub kind: LcsKind,
    pub advection: Advection,
    pub insertions: usize,
    pub max_gap: f64,
    /// Refinement stopped early because the point budget ran out.
    pub truncated: bool,
    /// Part of the curve left the domain and was cut off.
    pub exited: bool,
}

impl MaterialCurve {
    pub fn new(points: Vec<Vec2>, time: f64, seed_id: usize, kind: LcsKind) -> Self {
        let max_gap = max_gap(&points);
        MaterialCurve {
            points,
            time,
            seed_id,
            kind,
            advection: Advection::None,
            insertions: 0,
            max_gap,
            truncated: false,
            exited: false,
        }
    }

    pub fn arc_length(&self) -> f64 {
        arc_length(&self.points)
    }
}

pub fn arc_length(points: &[Vec2]) -> f64 {
    points.windows(2).map(|w| w[0].distance(w[1])).sum()
}

pub fn max_gap(points: &[Vec2]) -> f64 {
    points.windows(2).map(|w| w[0].distance(w[1])).fold(0.0, f64::max)
}

/// Refinement controls for [`advect_curve`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Refinement {
    pub delta_max: f64,
    pub n_substeps: usize,
    pub max_points: usize,
    /// Turning angle in degrees above which a vertex is refined.
    pub max_turn_deg: f64,
}

impl Refinement {
    pub fn new(delta_max: f64) -> Self {
        Refinement { delta_max, n_substeps: 20, max_points: 100_000, max_turn_deg: 20.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta_max > 0.0 && self.delta_max.is_finite()) {
            return Err(Error::invalid(format!("delta_max must be positive, got {}", self.delta_max)));
        }
        if self.n_substeps == 0 {
            return Err(Error::invalid("n_substeps must be at least 1"));
        }
        if self.max_points < 2 {
            return Err(Error::invalid("max_points must be at least 2"));
        }
        if !(self.max_turn_deg > 0.0) {
            return Err(Error::invalid("max_turn_deg must be positive"));
        }
        Ok(())
    }
}

/// Edges shorter than this fraction of `delta_max` are never split for curvature.
const CURVATURE_MIN_EDGE: f64 = 0.05;

/// Keeps the longest run of consecutive `Some` pairs.
fn longest_run(pre: Vec<Vec2>, post: Vec<Option<Vec2>>) -> (Vec<Vec2>, Vec<Vec2>, bool) {
    let n = post.len();
    let (mut best, mut best_len, mut start) = (0, 0, 0);
    for k in 0..=n {
        if k == n || post[k].is_none() {
            if k - start > best_len {
                best = start;
                best_len = k - start;
            }
            start = k + 1;
        }
    }
    let cut = best_len < n;
    let pre = pre[best..best + best_len].to_vec();
    let post = post[best..best + best_len].iter().map(|p| p.unwrap()).collect();
    (pre, post, cut)
}

fn turning_angle(a: Vec2, b: Vec2, c: Vec2) -> f64 {
    let u = b - a;
    let v = c - b;
    let (nu, nv) = (u.norm(), v.norm());
    if nu == 0.0 || nv == 0.0 {
        return 0.0;
    }
    (u.dot(v) / (nu * nv)).clamp(-1.0, 1.0).acos()
}

/// Edges of `post` that need a midpoint, in ascending order.
fn edges_to_split(post: &[Vec2], refine: &Refinement) -> Vec<usize> {
    let n = post.len();
    let mut flag = vec![false; n.saturating_sub(1)];
    for i in 0..n.saturating_sub(1) {
        if post[i].distance(post[i + 1]) > refine.delta_max {
            flag[i] = true;
        }
    }
    let max_turn = refine.max_turn_deg.to_radians();
    let min_edge = CURVATURE_MIN_EDGE * refine.delta_max;
    for i in 1..n.saturating_sub(1) {
        if turning_angle(post[i - 1], post[i], post[i + 1]) > max_turn {
            let left = post[i - 1].distance(post[i]);
            let right = post[i].distance(post[i + 1]);
            let (e, len) = if left >= right { (i - 1, left) } else { (i, right) };
            if len > min_edge {
                flag[e] = true;
            }
        }
    }
    flag.iter().enumerate().filter(|(_, f)| **f).map(|(i, _)| i).collect()
}

/// Advects `curve` from `t_from` to `t_to` in `n_substeps` legs. After each
/// leg, edges longer than `delta_max` (or sitting at a sharp turn) receive the
/// midpoint of the pre-leg edge, advected across the leg. Points whose
/// trajectories leave the domain split the curve; the longest intact run is
/// kept and `exited` is set.
pub fn advect_curve(
    field: &VelocityField,
    curve: &MaterialCurve,
    t_from: f64,
    t_to: f64,
    refine: &Refinement,
    tol: Tolerance,
) -> Result<MaterialCurve> {
    refine.validate()?;
    if curve.points.len() < 2 {
        return Err(Error::invalid("material curve needs at least two points"));
    }
    let mut out = curve.clone();
    out.time = t_to;
    if t_from == t_to {
        return Ok(out);
    }
    out.advection = if t_to > t_from { Advection::Forward } else { Advection::Backward };
    let n = refine.n_substeps;
    let mut points = curve.points.clone();
    for leg in 0..n {
        let s0 = t_from + (t_to - t_from) * leg as f64 / n as f64;
        let s1 = if leg + 1 == n { t_to } else { t_from + (t_to - t_from) * (leg + 1) as f64 / n as f64 };
        let moved: Vec<Option<Vec2>> = points.iter().map(|&p| advect_point(field, p, s0, s1, tol).ok()).collect();
        let (mut pre, mut post, cut) = longest_run(points, moved);
        out.exited |= cut;
        if post.len() < 2 {
            return Err(Error::DomainExit { time: s0 });
        }
        if !out.truncated {
            loop {
                let split = edges_to_split(&post, refine);
                if split.is_empty() {
                    break;
                }
                if post.len() + split.len() > refine.max_points {
                    out.truncated = true;
                    break;
                }
                let mids: Vec<Vec2> = split.iter().map(|&i| pre[i].lerp(pre[i + 1], 0.5)).collect();
                if split.iter().zip(&mids).any(|(&i, m)| *m == pre[i] || *m == pre[i + 1]) {
                    // Pre-leg points have collapsed to adjacent floats.
                    out.truncated = true;
                    break;
                }
                let moved: Vec<Option<Vec2>> = mids.iter().map(|&m| advect_point(field, m, s0, s1, tol).ok()).collect();
                let mut new_pre = Vec::with_capacity(pre.len() + mids.len());
                let mut new_post = Vec::with_capacity(pre.len() + mids.len());
                let mut next = split.iter().zip(mids.iter().zip(moved)).peekable();
                for i in 0..pre.len() {
                    new_pre.push(pre[i]);
                    new_post.push(Some(post[i]));
                    if let Some((_, (m, q))) = next.next_if(|(&e, _)| e == i) {
                        new_pre.push(*m);
                        new_post.push(q);
                    }
                }
                out.insertions += mids.len();
                let (p, q, cut) = longest_run(new_pre, new_post);
                out.exited |= cut;
                if q.len() < 2 {
                    return Err(Error::DomainExit { time: s0 });
                }
                pre = p;
                post = q;
            }
        }
        points = post;
    }
    out.max_gap = max_gap(&points);
    out.points = points;
    Ok(out)
}

/// The interval over which a flow map was computed; LCS are only extracted
/// at times inside it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeWindow {
    pub t1: f64,
    pub t2: f64,
}

impl TimeWindow {
    pub fn new(t1: f64, t2: f64) -> Result<Self> {
        if !(t1 < t2) || !t1.is_finite() || !t2.is_finite() {
            return Err(Error::invalid(format!("time window needs t1 < t2, got [{t1}, {t2}]")));
        }
        Ok(TimeWindow { t1, t2 })
    }

    pub fn check(&self, t: f64) -> Result<()> {
        if !(self.t1 <= t && t <= self.t2) {
            return Err(Error::invalid(format!("time {t} outside the window [{}, {}]", self.t1, self.t2)));
        }
        Ok(())
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.t1 + self.t2)
    }
}

/// Result of advecting one seed segment.
#[derive(Debug)]
pub struct CurveOutcome {
    pub seed_id: usize,
    pub result: Result<MaterialCurve>,
}

fn extract(
    field: &VelocityField,
    segments: &[MaterialCurve],
    t_from: f64,
    t: f64,
    kind: LcsKind,
    refine: &Refinement,
    tol: Tolerance,
) -> Result<Vec<CurveOutcome>> {
    refine.validate()?;
    if let Some(s) = segments.iter().find(|s| s.kind != kind || s.time != t_from) {
        return Err(Error::invalid(format!(
            "seed segment {} is a {} segment at t = {}, expected {} at t = {t_from}",
            s.seed_id,
            s.kind.as_str(),
            s.time,
            kind.as_str()
        )));
    }
    Ok(segments
        .par_iter()
        .map(|s| CurveOutcome { seed_id: s.seed_id, result: advect_curve(field, s, t_from, t, refine, tol) })
        .collect())
}

/// Attracting LCS at time `t`: segments seeded at `t1` advected forward.
pub fn extract_attracting_lcs(
    field: &VelocityField,
    segments: &[MaterialCurve],
    window: TimeWindow,
    t: f64,
    refine: &Refinement,
    tol: Tolerance,
) -> Result<Vec<CurveOutcome>> {
    window.check(t)?;
    extract(field, segments, window.t1, t, LcsKind::Attracting, refine, tol)
}

/// Repelling LCS at time `t`: segments seeded at `t2` advected backward.
pub fn extract_repelling_lcs(
    field: &VelocityField,
    segments: &[MaterialCurve],
    window: TimeWindow,
    t: f64,
    refine: &Refinement,
    tol: Tolerance,
) -> Result<Vec<CurveOutcome>> {
    window.check(t)?;
    extract(field, segments, window.t2, t, LcsKind::Repelling, refine, tol)
}

#[derive(Serialize)]
struct CurveRecord<'a> {
    time: f64,
    kind: LcsKind,
    seed_id: usize,
    points: Vec<[f64; 2]>,
    truncated: bool,
    exited: bool,
    advection: Advection,
    insertions: usize,
    max_gap: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    family: Option<&'a str>,
}

fn record(c: &MaterialCurve) -> CurveRecord<'static> {
    CurveRecord {
        time: c.time,
        kind: c.kind,
        seed_id: c.seed_id,
        points: c.points.iter().map(|p| [p.x, p.y]).collect(),
        truncated: c.truncated,
        exited: c.exited,
        advection: c.advection,
        insertions: c.insertions,
        max_gap: c.max_gap,
        family: None,
    }
}

pub fn write_curves_json<W: Write>(w: &mut W, curves: &[MaterialCurve]) -> Result<()> {
    let records: Vec<_> = curves.iter().map(record).collect();
    serde_json::to_writer_pretty(&mut *w, &records)?;
    writeln!(w)?;
    Ok(())
}

/// One row per vertex: `seed_id,kind,index,x,y`.
pub fn write_curves_csv<W: Write>(w: &mut W, curves: &[MaterialCurve]) -> Result<()> {
    writeln!(w, "seed_id,kind,index,x,y")?;
    for c in curves {
        for (i, p) in c.points.iter().enumerate() {
            writeln!(w, "{},{},{},{},{}", c.seed_id, c.kind.as_str(), i, p.x, p.y)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Mat2;
    use crate::velocity::{duffing_field, AnalyticField};
    use proptest::prelude::*;

    fn segment(centre: Vec2, dir: Vec2, length: f64, kind: LcsKind, time: f64) -> MaterialCurve {
        let pts = (-5..=5).map(|k| centre + dir * (length * k as f64 / 10.0)).collect();
        MaterialCurve::new(pts, time, 0, kind)
    }

    #[test]
    fn uniform_flow_translates_without_insertions() {
        let f = VelocityField::Analytic(AnalyticField::Uniform(Vec2::new(1.0, 0.0)));
        let seg = segment(Vec2::ZERO, Vec2::new(1.0, 0.0), 0.1, LcsKind::Attracting, 0.0);
        let out = advect_curve(&f, &seg, 0.0, 1.0, &Refinement::new(0.05), Tolerance::default()).unwrap();
        assert_eq!(out.insertions, 0);
        assert_eq!(out.time, 1.0);
        for (a, b) in seg.points.iter().zip(&out.points) {
            assert!((*b - *a - Vec2::new(1.0, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn linear_saddle_stretches_by_e_cubed() {
        let f = VelocityField::Analytic(AnalyticField::Linear(Mat2::new(1.0, 0.0, 0.0, -1.0)));
        let seg = segment(Vec2::ZERO, Vec2::new(1.0, 0.0), 0.1, LcsKind::Attracting, 0.0);
        let out = advect_curve(&f, &seg, 0.0, 3.0, &Refinement::new(0.05), Tolerance::default()).unwrap();
        let e3 = 3f64.exp();
        assert!(out.max_gap <= 0.05);
        assert!(out.insertions > 0);
        assert!((out.points[0].x + 0.05 * e3).abs() < 1e-6);
        assert!((out.points.last().unwrap().x - 0.05 * e3).abs() < 1e-6);
        assert!((out.arc_length() / (0.1 * e3) - 1.0).abs() < 0.01);
    }

    #[test]
    fn forward_then_backward_returns_in_centre_region() {
        let f = duffing_field();
        let seg = segment(Vec2::new(2.0, 0.0), Vec2::new(0.0, 1.0), 0.1, LcsKind::Attracting, 0.0);
        let refine = Refinement::new(0.02);
        let tol = Tolerance::default();
        let fwd = advect_curve(&f, &seg, 0.0, 1.0, &refine, tol).unwrap();
        let back = advect_curve(&f, &fwd, 1.0, 0.0, &refine, tol).unwrap();
        assert!(back.points[0].distance(seg.points[0]) < 10.0 * tol.atol);
        assert!(back.points.last().unwrap().distance(*seg.points.last().unwrap()) < 10.0 * tol.atol);
    }

    #[test]
    fn curvature_refinement_splits_sharp_turns() {
        // Rigid rotation keeps lengths, so only the turn at the corner can trigger splits.
        let f = VelocityField::Analytic(AnalyticField::Linear(Mat2::new(0.0, -1.0, 1.0, 0.0)));
        let pts = vec![Vec2::new(1.0, 0.0), Vec2::new(1.04, 0.0), Vec2::new(1.04, 0.04)];
        let c = MaterialCurve::new(pts, 0.0, 0, LcsKind::Attracting);
        let out = advect_curve(&f, &c, 0.0, 0.5, &Refinement::new(0.05), Tolerance::default()).unwrap();
        assert!(out.insertions > 0);
        let mut sharp = Refinement::new(0.05);
        sharp.max_turn_deg = 180.0;
        let out = advect_curve(&f, &c, 0.0, 0.5, &sharp, Tolerance::default()).unwrap();
        assert_eq!(out.insertions, 0);
    }

    #[test]
    fn budget_exhaustion_sets_truncation_flag() {
        let f = VelocityField::Analytic(AnalyticField::Linear(Mat2::new(2.0, 0.0, 0.0, -2.0)));
        let seg = segment(Vec2::ZERO, Vec2::new(1.0, 0.0), 0.1, LcsKind::Attracting, 0.0);
        let mut refine = Refinement::new(1e-3);
        refine.max_points = 200;
        let out = advect_curve(&f, &seg, 0.0, 3.0, &refine, Tolerance::default()).unwrap();
        assert!(out.truncated);
        assert!(out.points.len() <= 200);
    }

    #[test]
    fn domain_exit_keeps_longest_run() {
        use crate::velocity::GriddedField;
        let n = 9;
        let u = vec![vec![1.0; n * n]; 2];
        let v = vec![vec![0.0; n * n]; 2];
        let g = GriddedField::new([0.0, 1.0, 0.0, 1.0], n, n, (false, false), vec![0.0, 10.0], u, v).unwrap();
        let f = VelocityField::Gridded(g);
        let pts = (0..=10).map(|k| Vec2::new(0.1 + 0.06 * k as f64, 0.5)).collect();
        let c = MaterialCurve::new(pts, 0.0, 0, LcsKind::Attracting);
        let out = advect_curve(&f, &c, 0.0, 0.5, &Refinement::new(0.1), Tolerance::default()).unwrap();
        assert!(out.exited);
        assert!(out.points.len() < 11 && out.points.len() >= 2);
        assert!(out.points.iter().all(|p| p.x <= 1.0));
    }

    #[test]
    fn window_rejects_extrapolation() {
        let f = duffing_field();
        let w = TimeWindow::new(0.0, 2.5).unwrap();
        let seg = segment(Vec2::ZERO, Vec2::new(1.0, 0.0), 0.1, LcsKind::Attracting, 0.0);
        let r = Refinement::new(0.05);
        assert!(extract_attracting_lcs(&f, std::slice::from_ref(&seg), w, 3.0, &r, Tolerance::default()).is_err());
        let out = extract_attracting_lcs(&f, std::slice::from_ref(&seg), w, 0.0, &r, Tolerance::default()).unwrap();
        assert_eq!(out[0].result.as_ref().unwrap().points, seg.points);
        // Attracting segments cannot be fed to the repelling extraction.
        assert!(extract_repelling_lcs(&f, &[seg], w, 1.0, &r, Tolerance::default()).is_err());
        assert!(TimeWindow::new(1.0, 1.0).is_err());
    }

    #[test]
    fn json_and_csv_exports() {
        let c = MaterialCurve::new(vec![Vec2::new(0.0, 1.0), Vec2::new(0.5, 1.5)], 2.5, 7, LcsKind::Repelling);
        let mut buf = Vec::new();
        write_curves_json(&mut buf, std::slice::from_ref(&c)).unwrap();
        let v: serde_json::Value = serde_json::from_slice(&buf).unwrap();
        assert_eq!(v[0]["kind"], "repelling");
        assert_eq!(v[0]["seed_id"], 7);
        assert_eq!(v[0]["points"][1][0], 0.5);
        assert_eq!(v[0]["truncated"], false);
        let mut buf = Vec::new();
        write_curves_csv(&mut buf, &[c]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().nth(2).unwrap(), "7,repelling,1,0.5,1.5");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn gaps_bounded_after_advection(
            x in -1.5f64..1.5, y in -1.5f64..1.5, angle in 0.0f64..std::f64::consts::PI,
            span in 0.2f64..2.0, delta in 0.02f64..0.2,
        ) {
            let f = duffing_field();
            let seg = segment(Vec2::new(x, y), Vec2::new(angle.cos(), angle.sin()), 0.1, LcsKind::Attracting, 0.0);
            let out = advect_curve(&f, &seg, 0.0, span, &Refinement::new(delta), Tolerance::default()).unwrap();
            prop_assert!(!out.truncated);
            prop_assert!(out.max_gap <= delta);
            prop_assert_eq!(out.time, span);
        }
    }
}

//! Shrink and stretch lines: integral curves of the singular-vector line
//! fields, and the curve comparison used to contrast them with advected
//! material lines.

use crate::error::{Error, Result};
use crate::flow_map::deformation_at_points;
use crate::geom::Vec2;
use crate::grid::{GridSpec, Periodicity, ScalarGrid};
use crate::ode::Tolerance;
use crate::seeding::SeedPoint;
use crate::svd::{svd2x2, SvdFields};
use crate::tracking::{arc_length, LcsKind};
use crate::velocity::VelocityField;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;

/// Nodes whose singular values are closer than this ratio stop integration.
pub const DEGENERATE_RATIO: f64 = 1.0 + 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Xi1,
    Xi2,
    Theta1,
    Theta2,
}

impl Family {
    pub fn as_str(self) -> &'static str {
        match self {
            Family::Xi1 => "xi1",
            Family::Xi2 => "xi2",
            Family::Theta1 => "theta1",
            Family::Theta2 => "theta2",
        }
    }

    /// Shrink lines mark repelling structures, stretch lines attracting ones.
    pub fn kind(self) -> LcsKind {
        match self {
            Family::Xi1 | Family::Theta2 => LcsKind::Repelling,
            Family::Xi2 | Family::Theta1 => LcsKind::Attracting,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    DomainExit,
    DegeneratePoint,
    MaxLength,
}

/// Unsigned unit vectors on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionField {
    pub grid: GridSpec,
    pub vectors: Vec<Vec2>,
    pub masked: Vec<bool>,
    /// Near-isotropic nodes where the line field is undefined.
    pub blocked: Vec<bool>,
    pub periodicity: Periodicity,
}

impl DirectionField {
    pub fn new(grid: GridSpec, vectors: Vec<Vec2>, periodicity: Periodicity) -> Result<Self> {
        if vectors.len() != grid.len() {
            return Err(Error::ShapeMismatch(format!("{} vectors for {} nodes", vectors.len(), grid.len())));
        }
        let masked = vectors.iter().map(|v| !v.is_finite()).collect();
        Ok(DirectionField { grid, vectors, masked, blocked: vec![false; grid.len()], periodicity })
    }

    /// `xi1` or `xi2` of an analysed grid. The theta families live on the
    /// scattered advected positions and have no grid form.
    pub fn from_svd(svd: &SvdFields, family: Family, periodicity: Periodicity) -> Result<Self> {
        let vectors = match family {
            Family::Xi1 => svd.xi1.clone(),
            Family::Xi2 => svd.xi2.clone(),
            _ => return Err(Error::invalid(format!("{} is not defined on the seed grid", family.as_str()))),
        };
        let blocked = svd
            .sigma2f
            .iter()
            .zip(&svd.sigma1f)
            .map(|(s2, s1)| !(s2 / s1 >= DEGENERATE_RATIO))
            .collect();
        Ok(DirectionField { grid: svd.grid, vectors, masked: svd.mask.clone(), blocked, periodicity })
    }

    /// Bilinear blend of the corner vectors, each flipped to agree with
    /// `reference`, then normalised and aligned once more.
    pub fn sample(&self, p: Vec2, reference: Vec2) -> std::result::Result<Vec2, StopReason> {
        let cell = self.grid.locate_wrapped(p, self.periodicity).ok_or(StopReason::DomainExit)?;
        let mut acc = Vec2::ZERO;
        for (k, w) in cell.corners(&self.grid) {
            if self.masked[k] {
                return Err(StopReason::DomainExit);
            }
            if self.blocked[k] {
                return Err(StopReason::DegeneratePoint);
            }
            let v = self.vectors[k];
            acc += if v.dot(reference) < 0.0 { -v } else { v } * w;
        }
        let n = acc.norm();
        if !(n > 1e-12) {
            return Err(StopReason::DegeneratePoint);
        }
        let d = acc * (1.0 / n);
        Ok(if d.dot(reference) < 0.0 { -d } else { d })
    }

    fn reference_at(&self, p: Vec2) -> std::result::Result<Vec2, StopReason> {
        let cell = self.grid.locate_wrapped(p, self.periodicity).ok_or(StopReason::DomainExit)?;
        let (k, _) = cell.corners(&self.grid).into_iter().max_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
        if self.masked[k] {
            return Err(StopReason::DomainExit);
        }
        Ok(self.vectors[k])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LineFieldCurve {
    pub points: Vec<Vec2>,
    pub family: Family,
    pub seed: Vec2,
    pub seed_id: usize,
    /// Index of the seed within `points`.
    pub seed_index: usize,
    /// Why each end stopped: `[start, end]`.
    pub stops: [StopReason; 2],
}

impl LineFieldCurve {
    /// The first end that did not stop at the length limit, if any.
    pub fn stop_reason(&self) -> StopReason {
        self.stops.into_iter().find(|s| *s != StopReason::MaxLength).unwrap_or(StopReason::MaxLength)
    }

    pub fn arc_length(&self) -> f64 {
        arc_length(&self.points)
    }
}

fn grow(field: &DirectionField, seed: Vec2, dir: Vec2, h: f64, steps: usize) -> (Vec<Vec2>, StopReason) {
    let mut p = seed;
    let mut prev = dir;
    let mut out = Vec::with_capacity(steps);
    for _ in 0..steps {
        let stage = || -> std::result::Result<Vec2, StopReason> {
            let k1 = field.sample(p, prev)?;
            let k2 = field.sample(p + k1 * (0.5 * h), k1)?;
            let k3 = field.sample(p + k2 * (0.5 * h), k2)?;
            let k4 = field.sample(p + k3 * h, k3)?;
            Ok((k1 + k2 * 2.0 + k3 * 2.0 + k4) * (1.0 / 6.0))
        };
        match stage() {
            Ok(inc) => {
                p += inc * h;
                prev = inc.normalized();
                out.push(p);
            }
            Err(reason) => return (out, reason),
        }
    }
    (out, StopReason::MaxLength)
}

/// Fixed-step RK4 integral curve of a line field through `seed`, grown
/// `max_len / 2` in each direction.
pub fn integrate_line_field(field: &DirectionField, seed: Vec2, step: f64, max_len: f64, family: Family) -> Result<LineFieldCurve> {
    if !(step > 0.0 && max_len > 0.0 && step.is_finite() && max_len.is_finite()) {
        return Err(Error::invalid(format!("step ({step}) and max_len ({max_len}) must be positive")));
    }
    let reference = field
        .reference_at(seed)
        .map_err(|r| Error::invalid(format!("seed ({}, {}) is unusable: {r:?}", seed.x, seed.y)))?;
    let d0 = field
        .sample(seed, reference)
        .map_err(|r| Error::invalid(format!("seed ({}, {}) is unusable: {r:?}", seed.x, seed.y)))?;
    let half = 0.5 * max_len;
    let steps = (half / step).ceil() as usize;
    let h = half / steps as f64;
    let (back, stop_back) = grow(field, seed, -d0, h, steps);
    let (fwd, stop_fwd) = grow(field, seed, d0, h, steps);
    let mut points: Vec<Vec2> = back.into_iter().rev().collect();
    let seed_index = points.len();
    points.push(seed);
    points.extend(fwd);
    Ok(LineFieldCurve { points, family, seed, seed_id: 0, seed_index, stops: [stop_back, stop_fwd] })
}

/// Shrink lines (`xi1` integral curves) through each seed position.
pub fn shrink_lines_through_seeds(
    svd: &SvdFields,
    seeds: &[SeedPoint],
    step: f64,
    max_len: f64,
    periodicity: Periodicity,
) -> Result<Vec<(usize, Result<LineFieldCurve>)>> {
    let field = DirectionField::from_svd(svd, Family::Xi1, periodicity)?;
    Ok(seeds
        .par_iter()
        .map(|s| {
            let r = integrate_line_field(&field, s.position, step, max_len, Family::Xi1).map(|mut c| {
                c.seed_id = s.id;
                c
            });
            (s.id, r)
        })
        .collect())
}

#[derive(Serialize)]
struct LineRecord<'a> {
    time: f64,
    kind: LcsKind,
    seed_id: usize,
    points: Vec<[f64; 2]>,
    truncated: bool,
    family: &'a str,
    stops: [StopReason; 2],
}

/// Same schema as material curves, plus the family tag and stop reasons.
pub fn write_line_curves_json<W: Write>(w: &mut W, curves: &[LineFieldCurve], time: f64) -> Result<()> {
    let records: Vec<_> = curves
        .iter()
        .map(|c| LineRecord {
            time,
            kind: c.family.kind(),
            seed_id: c.seed_id,
            points: c.points.iter().map(|p| [p.x, p.y]).collect(),
            truncated: false,
            family: c.family.as_str(),
            stops: c.stops,
        })
        .collect();
    serde_json::to_writer_pretty(&mut *w, &records)?;
    writeln!(w)?;
    Ok(())
}

pub fn write_line_curves_csv<W: Write>(w: &mut W, curves: &[LineFieldCurve]) -> Result<()> {
    writeln!(w, "seed_id,family,index,x,y")?;
    for c in curves {
        for (i, p) in c.points.iter().enumerate() {
            writeln!(w, "{},{},{},{},{}", c.seed_id, c.family.as_str(), i, p.x, p.y)?;
        }
    }
    Ok(())
}

/// Points at `n` uniform arc-length fractions `k / (n - 1)` along a polyline.
pub fn resample(points: &[Vec2], n: usize) -> Vec<Vec2> {
    if points.len() < 2 || n < 2 {
        return points.iter().take(n).copied().collect();
    }
    let mut cum = Vec::with_capacity(points.len());
    cum.push(0.0);
    for w in points.windows(2) {
        cum.push(cum.last().unwrap() + w[0].distance(w[1]));
    }
    let total = *cum.last().unwrap();
    let mut seg = 0;
    (0..n)
        .map(|k| {
            let s = total * k as f64 / (n - 1) as f64;
            while seg + 2 < cum.len() && cum[seg + 1] < s {
                seg += 1;
            }
            let len = cum[seg + 1] - cum[seg];
            let f = if len > 0.0 { ((s - cum[seg]) / len).clamp(0.0, 1.0) } else { 0.0 };
            points[seg].lerp(points[seg + 1], f)
        })
        .collect()
}

fn point_segment_distance(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    let ab = b - a;
    let len2 = ab.dot(ab);
    let s = if len2 > 0.0 { ((p - a).dot(ab) / len2).clamp(0.0, 1.0) } else { 0.0 };
    p.distance(a + ab * s)
}

fn distance_to_polyline(p: Vec2, poly: &[Vec2]) -> f64 {
    if poly.len() == 1 {
        return p.distance(poly[0]);
    }
    poly.windows(2).map(|w| point_segment_distance(p, w[0], w[1])).fold(f64::INFINITY, f64::min)
}

/// Largest distance from the vertices and edge midpoints of `a` to polyline `b`.
fn directed_hausdorff(a: &[Vec2], b: &[Vec2]) -> f64 {
    let probes: Vec<Vec2> = a
        .iter()
        .copied()
        .chain(a.windows(2).map(|w| w[0].lerp(w[1], 0.5)))
        .collect();
    probes.par_iter().map(|&p| distance_to_polyline(p, b)).reduce(|| 0.0, f64::max)
}

pub fn hausdorff(a: &[Vec2], b: &[Vec2]) -> f64 {
    if a == b {
        return 0.0;
    }
    directed_hausdorff(a, b).max(directed_hausdorff(b, a))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricStats {
    pub min: f64,
    pub median: f64,
    pub max: f64,
    /// Metric at each arc-length fraction; NaN where the curve leaves the grid.
    pub samples: Vec<f64>,
}

impl MetricStats {
    fn from_samples(samples: Vec<f64>) -> Self {
        let mut live: Vec<f64> = samples.iter().copied().filter(|v| v.is_finite()).collect();
        live.sort_by(f64::total_cmp);
        let (min, median, max) = if live.is_empty() {
            (f64::NAN, f64::NAN, f64::NAN)
        } else {
            let n = live.len();
            let median = if n % 2 == 1 { live[n / 2] } else { 0.5 * (live[n / 2 - 1] + live[n / 2]) };
            (live[0], median, live[n - 1])
        };
        MetricStats { min, median, max, samples }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveComparison {
    pub hausdorff: f64,
    pub length_a: f64,
    pub length_b: f64,
    pub metric_a: MetricStats,
    pub metric_b: MetricStats,
}

impl CurveComparison {
    /// Fraction of matched samples where curve `a` scores at least as high as `b`.
    pub fn fraction_a_not_below_b(&self) -> f64 {
        let pairs: Vec<(f64, f64)> = self
            .metric_a
            .samples
            .iter()
            .zip(&self.metric_b.samples)
            .filter(|(a, b)| a.is_finite() && b.is_finite())
            .map(|(a, b)| (*a, *b))
            .collect();
        if pairs.is_empty() {
            return f64::NAN;
        }
        pairs.iter().filter(|(a, b)| a >= b).count() as f64 / pairs.len() as f64
    }
}

/// Scalar quantity evaluated along curves.
pub trait CurveMetric: Sync {
    /// One value per point; NaN where the metric is unavailable.
    fn evaluate(&self, points: &[Vec2]) -> Vec<f64>;
}

/// Bilinear sampling of a gridded field.
pub struct GridMetric<'a> {
    pub grid: &'a ScalarGrid,
    pub periodicity: Periodicity,
}

impl CurveMetric for GridMetric<'_> {
    fn evaluate(&self, points: &[Vec2]) -> Vec<f64> {
        points.iter().map(|&p| self.grid.sample_wrapped(p, self.periodicity).unwrap_or(f64::NAN)).collect()
    }
}

/// Forward FTLE computed at each point from its own auxiliary stencil. Two
/// curves closer together than a grid cell are only distinguishable this way.
pub struct PointwiseFtle<'a> {
    pub field: &'a VelocityField,
    pub t_a: f64,
    pub t_b: f64,
    pub tol: Tolerance,
    pub rho: f64,
}

impl CurveMetric for PointwiseFtle<'_> {
    fn evaluate(&self, points: &[Vec2]) -> Vec<f64> {
        let span = (self.t_b - self.t_a).abs();
        deformation_at_points(self.field, points, self.t_a, self.t_b, self.tol, self.rho)
            .into_iter()
            .map(|r| {
                r.and_then(|(_, m)| svd2x2(m).ok())
                    .map(|s| s.sigma2.ln() / span)
                    .unwrap_or(f64::NAN)
            })
            .collect()
    }
}

/// Hausdorff distance, arc lengths, and `metric` sampled at `n_samples`
/// uniform arc-length fractions of both curves. `b` is traversed in whichever
/// direction puts its ends nearest the matching ends of `a`.
pub fn compare_curves(a: &[Vec2], b: &[Vec2], metric: &dyn CurveMetric, n_samples: usize) -> Result<CurveComparison> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::invalid("cannot compare empty curves"));
    }
    let (a0, a1, b0, b1) = (a[0], a[a.len() - 1], b[0], b[b.len() - 1]);
    let reversed: Vec<Vec2>;
    let b = if a0.distance(b1) + a1.distance(b0) < a0.distance(b0) + a1.distance(b1) {
        reversed = b.iter().rev().copied().collect();
        &reversed[..]
    } else {
        b
    };
    let sample = |pts: &[Vec2]| MetricStats::from_samples(metric.evaluate(&resample(pts, n_samples.max(2))));
    Ok(CurveComparison {
        hausdorff: hausdorff(a, b),
        length_a: arc_length(a),
        length_b: arc_length(b),
        metric_a: sample(a),
        metric_b: sample(b),
    })
}

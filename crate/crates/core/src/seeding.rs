//! Seed points at singular-value extrema and the short segments grown from them.

use crate::error::{Error, Result};
use crate::geom::Vec2;
use crate::grid::{Periodicity, ScalarGrid};
use crate::svd::SvdFields;
use crate::tracking::{LcsKind, MaterialCurve};
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::io::Write;

/// Seed segment length used when none is configured.
pub const DEFAULT_SEGMENT_LENGTH: f64 = 0.1;
/// Points per side of a seed segment, excluding the centre.
pub const SEGMENT_HALF_POINTS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Extremum {
    pub index: usize,
    pub position: Vec2,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeedPoint {
    pub id: usize,
    pub kind: LcsKind,
    pub position: Vec2,
    pub time: f64,
    pub value: f64,
    pub direction: Vec2,
    /// Grid node the seed was found at.
    pub index: usize,
}

fn strict_extrema(field: &ScalarGrid, mask: &[bool], sign: f64) -> Vec<Extremum> {
    let spec = field.spec;
    let (nx, ny) = (spec.nx, spec.ny);
    let ok = |k: usize| !mask.get(k).copied().unwrap_or(false) && field.values[k].is_finite();
    let mut out = Vec::new();
    for j in 1..ny.saturating_sub(1) {
        'node: for i in 1..nx - 1 {
            let k = spec.index(i, j);
            if !ok(k) {
                continue;
            }
            let v = sign * field.values[k];
            for dj in [-1i64, 0, 1] {
                for di in [-1i64, 0, 1] {
                    if di == 0 && dj == 0 {
                        continue;
                    }
                    let n = spec.index((i as i64 + di) as usize, (j as i64 + dj) as usize);
                    if !ok(n) || sign * field.values[n] >= v {
                        continue 'node;
                    }
                }
            }
            out.push(Extremum { index: k, position: spec.node(i, j), value: field.values[k] });
        }
    }
    out
}

/// Nodes strictly larger than all eight neighbours. Boundary nodes and nodes
/// next to a masked node are skipped. Result is in grid-index order.
pub fn local_maxima(field: &ScalarGrid, mask: &[bool]) -> Vec<Extremum> {
    strict_extrema(field, mask, 1.0)
}

/// Nodes strictly smaller than all eight neighbours.
pub fn local_minima(field: &ScalarGrid, mask: &[bool]) -> Vec<Extremum> {
    strict_extrema(field, mask, -1.0)
}

/// Greedy suppression: repeatedly keep the best remaining extremum and drop
/// everything within `radius` of it. `larger_is_better` selects maxima or
/// minima ordering; ties go to the lower grid index.
pub fn filter_extrema(extrema: &[Extremum], radius: f64, per: Periodicity, larger_is_better: bool) -> Result<Vec<Extremum>> {
    if !(radius > 0.0) {
        return Err(Error::invalid(format!("filter radius must be positive, got {radius}")));
    }
    let mut order: Vec<&Extremum> = extrema.iter().collect();
    order.sort_by(|a, b| {
        let by_value = if larger_is_better { b.value.total_cmp(&a.value) } else { a.value.total_cmp(&b.value) };
        match by_value {
            Ordering::Equal => a.index.cmp(&b.index),
            o => o,
        }
    });
    let mut kept: Vec<Extremum> = Vec::new();
    for e in order {
        if kept.iter().all(|k| per.distance(k.position, e.position) >= radius) {
            kept.push(*e);
        }
    }
    Ok(kept)
}

/// Value of the `p`-th percentile (0..=100) of the finite entries, nearest rank.
pub fn percentile(values: &[f64], p: f64) -> Option<f64> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let rank = ((p.clamp(0.0, 100.0) / 100.0) * v.len() as f64).ceil() as usize;
    Some(v[rank.clamp(1, v.len()) - 1])
}

/// Straight `2k + 1`-point segment of total length `length`, centred at the
/// seed and aligned with its direction.
pub fn seed_segment(seed: &SeedPoint, length: f64) -> MaterialCurve {
    let k = SEGMENT_HALF_POINTS as i64;
    let step = 0.5 * length / k as f64;
    let points = (-k..=k).map(|m| seed.position + seed.direction * (step * m as f64)).collect();
    MaterialCurve::new(points, seed.time, seed.id, seed.kind)
}

pub fn make_seed_segments(seeds: &[SeedPoint], length: f64) -> Result<Vec<MaterialCurve>> {
    if !(length > 0.0 && length.is_finite()) {
        return Err(Error::invalid(format!("segment length must be positive, got {length}")));
    }
    Ok(seeds.iter().map(|s| seed_segment(s, length)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeedOptions {
    pub radius: f64,
    /// Keep only extrema beyond this percentile of the field (minima use the
    /// mirrored percentile). `None` disables the floor.
    pub floor_percentile: Option<f64>,
    pub periodicity: Periodicity,
}

impl SeedOptions {
    pub fn new(radius: f64) -> Self {
        SeedOptions { radius, floor_percentile: Some(90.0), periodicity: Periodicity::NONE }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SeedSelection {
    pub attracting: Vec<SeedPoint>,
    pub repelling: Vec<SeedPoint>,
    /// Raw strict extrema before the floor and the radius filter.
    pub extrema_found: usize,
    pub dropped_degenerate: usize,
}

fn candidates(svd: &SvdFields, values: &[f64], maxima: bool, floor: Option<f64>) -> (usize, Vec<Extremum>) {
    let grid = svd.scalar(values);
    let raw = if maxima { local_maxima(&grid, &svd.mask) } else { local_minima(&grid, &svd.mask) };
    let n = raw.len();
    let threshold = floor.and_then(|p| {
        let live: Vec<f64> = values.iter().zip(&svd.mask).filter(|(_, m)| !**m).map(|(v, _)| *v).collect();
        percentile(&live, if maxima { p } else { 100.0 - p })
    });
    let kept = raw
        .into_iter()
        .filter(|e| match threshold {
            Some(t) if maxima => e.value >= t,
            Some(t) => e.value <= t,
            None => true,
        })
        .collect();
    (n, kept)
}

/// Attracting seeds at `t_a` (direction `xi2`) and repelling seeds at the
/// advected positions at `t_b` (direction `theta1`).
///
/// Incompressible flows use one pass over maxima of `sigma2f` for both
/// families. Otherwise attracting seeds come from minima of `sigma1f` and
/// repelling seeds from maxima of `sigma2f`.
pub fn select_seeds(svd: &SvdFields, opts: &SeedOptions) -> Result<SeedSelection> {
    if !(svd.t_a < svd.t_b) {
        return Err(Error::invalid("seed selection needs a forward flow map (t_a < t_b)"));
    }
    let mut sel = SeedSelection::default();
    let mut drop_degenerate = |list: Vec<Extremum>| -> Vec<Extremum> {
        let before = list.len();
        let kept: Vec<Extremum> = list.into_iter().filter(|e| !svd.degenerate[e.index]).collect();
        sel.dropped_degenerate += before - kept.len();
        kept
    };
    let (maxima, minima) = if svd.incompressible {
        let (n, c) = candidates(svd, &svd.sigma2f, true, opts.floor_percentile);
        let kept = drop_degenerate(filter_extrema(&c, opts.radius, opts.periodicity, true)?);
        sel.extrema_found = n;
        (kept.clone(), kept)
    } else {
        let (n_max, c_max) = candidates(svd, &svd.sigma2f, true, opts.floor_percentile);
        let (n_min, c_min) = candidates(svd, &svd.sigma1f, false, opts.floor_percentile);
        let kept_max = drop_degenerate(filter_extrema(&c_max, opts.radius, opts.periodicity, true)?);
        let kept_min = drop_degenerate(filter_extrema(&c_min, opts.radius, opts.periodicity, false)?);
        sel.extrema_found = n_max + n_min;
        (kept_max, kept_min)
    };
    sel.attracting = minima
        .iter()
        .enumerate()
        .map(|(id, e)| SeedPoint {
            id,
            kind: LcsKind::Attracting,
            position: e.position,
            time: svd.t_a,
            value: e.value,
            direction: svd.xi2[e.index],
            index: e.index,
        })
        .collect();
    sel.repelling = maxima
        .iter()
        .enumerate()
        .map(|(id, e)| SeedPoint {
            id,
            kind: LcsKind::Repelling,
            position: svd.x2[e.index],
            time: svd.t_b,
            value: e.value,
            direction: svd.theta1[e.index],
            index: e.index,
        })
        .collect();
    Ok(sel)
}

/// Plain-text table: `kind x y value dir_x dir_y`, one seed per line.
pub fn write_seeds_table<W: Write>(w: &mut W, seeds: &[SeedPoint]) -> Result<()> {
    writeln!(w, "# kind x y value dir_x dir_y")?;
    for s in seeds {
        writeln!(
            w,
            "{} {} {} {} {} {}",
            s.kind.as_str(),
            s.position.x,
            s.position.y,
            s.value,
            s.direction.x,
            s.direction.y
        )?;
    }
    Ok(())
}

pub fn write_seeds_json<W: Write>(w: &mut W, seeds: &[SeedPoint]) -> Result<()> {
    serde_json::to_writer_pretty(&mut *w, seeds)?;
    writeln!(w)?;
    Ok(())
}

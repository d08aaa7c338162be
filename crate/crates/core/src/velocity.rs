//! Time-dependent 2-D velocity fields: closed-form analytic fields and gridded
//! snapshot data with space-time interpolation.
//!
//! Gridded data are interpolated in each spatial axis with a local cubic
//! Hermite interpolant whose node slopes come from fourth-order central
//! differences (C1, six-point stencil, exact on cubic data), and linearly in
//! time. Non-periodic axes use linearly extrapolated ghost nodes at the
//! boundary and reject queries outside the declared bounds; periodic axes wrap.

use crate::binio::*;
use crate::error::{Error, Result};
use crate::geom::{Mat2, Vec2};
use crate::grid::Periodicity;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

pub const GRID_MAGIC: &[u8; 8] = b"LCSGRID1";

/// Header counts above this are treated as corrupt rather than allocated.
const MAX_AXIS_LEN: u64 = 1 << 24;

#[derive(Debug, Clone, PartialEq)]
pub enum AnalyticField {
    /// Hamiltonian vector field of `H = x^4/4 - 2x^2 + y^2/2`.
    Duffing,
    Zero,
    Uniform(Vec2),
    /// `v = A x`.
    Linear(Mat2),
}

impl AnalyticField {
    pub fn by_name(name: &str) -> Option<AnalyticField> {
        match name {
            "duffing" => Some(AnalyticField::Duffing),
            "zero" => Some(AnalyticField::Zero),
            "uniform" => Some(AnalyticField::Uniform(Vec2::new(1.0, 0.0))),
            "saddle" => Some(AnalyticField::Linear(Mat2::new(1.0, 0.0, 0.0, -1.0))),
            _ => None,
        }
    }

    pub fn eval(&self, p: Vec2) -> Vec2 {
        match self {
            AnalyticField::Duffing => Vec2::new(p.y, 4.0 * p.x - p.x * p.x * p.x),
            AnalyticField::Zero => Vec2::ZERO,
            AnalyticField::Uniform(u) => *u,
            AnalyticField::Linear(a) => a.apply(p),
        }
    }
}

/// Hamiltonian of the Duffing field.
pub fn duffing_energy(p: Vec2) -> f64 {
    0.25 * p.x.powi(4) - 2.0 * p.x * p.x + 0.5 * p.y * p.y
}

/// Velocity snapshots on a uniform grid.
///
/// On a periodic axis the `n` nodes sit at `min + i * (max - min) / n` and
/// `max - min` is the period; otherwise they sit at `min + i * (max - min) / (n - 1)`.
/// Arrays are row-major `[t][y][x]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GriddedField {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub nx: usize,
    pub ny: usize,
    pub periodic_x: bool,
    pub periodic_y: bool,
    pub times: Vec<f64>,
    pub u: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

#[derive(Clone, Copy)]
/// Weights on nodes `base - 2 ..= base + 3`.
struct AxisWeights {
    base: isize,
    w: [f64; STENCIL],
}

const STENCIL: usize = 6;

impl GriddedField {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        bounds: [f64; 4],
        nx: usize,
        ny: usize,
        periodic: (bool, bool),
        times: Vec<f64>,
        u: Vec<Vec<f64>>,
        v: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let [x_min, x_max, y_min, y_max] = bounds;
        let field = GriddedField {
            x_min,
            x_max,
            y_min,
            y_max,
            nx,
            ny,
            periodic_x: periodic.0,
            periodic_y: periodic.1,
            times,
            u,
            v,
        };
        field.validate()?;
        Ok(field)
    }

    fn validate(&self) -> Result<()> {
        if !self.bounds().iter().all(|b| b.is_finite()) || self.x_min >= self.x_max || self.y_min >= self.y_max {
            return Err(Error::MalformedHeader(format!("invalid bounds {:?}", self.bounds())));
        }
        if self.nx < 2 || self.ny < 2 {
            return Err(Error::MalformedHeader(format!(
                "need at least 2 nodes per axis, got {}x{}",
                self.nx, self.ny
            )));
        }
        if self.times.is_empty() {
            return Err(Error::MalformedHeader("no time samples".into()));
        }
        if let Some(k) = self.times.iter().position(|t| !t.is_finite()) {
            return Err(Error::MalformedHeader(format!("time sample {k} is not finite")));
        }
        if let Some(k) = self.times.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::NonMonotoneTime { index: k + 1 });
        }
        let n = self.nx * self.ny;
        if self.u.len() != self.times.len() || self.v.len() != self.times.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} time samples but {} u and {} v slices",
                self.times.len(),
                self.u.len(),
                self.v.len()
            )));
        }
        for (k, (u, v)) in self.u.iter().zip(&self.v).enumerate() {
            if u.len() != n || v.len() != n {
                return Err(Error::ShapeMismatch(format!(
                    "slice {k}: expected {n} values, got u={} v={}",
                    u.len(),
                    v.len()
                )));
            }
        }
        Ok(())
    }

    pub fn bounds(&self) -> [f64; 4] {
        [self.x_min, self.x_max, self.y_min, self.y_max]
    }

    pub fn hx(&self) -> f64 {
        let cells = if self.periodic_x { self.nx } else { self.nx - 1 };
        (self.x_max - self.x_min) / cells as f64
    }

    pub fn hy(&self) -> f64 {
        let cells = if self.periodic_y { self.ny } else { self.ny - 1 };
        (self.y_max - self.y_min) / cells as f64
    }

    pub fn node(&self, i: usize, j: usize) -> Vec2 {
        Vec2::new(self.x_min + i as f64 * self.hx(), self.y_min + j as f64 * self.hy())
    }

    pub fn periodicity(&self) -> Periodicity {
        Periodicity {
            x: self.periodic_x.then_some(self.x_max - self.x_min),
            y: self.periodic_y.then_some(self.y_max - self.y_min),
        }
    }

    fn axis_weights(coord: f64, min: f64, max: f64, h: f64, n: usize, periodic: bool) -> Option<AxisWeights> {
        let mut c = coord - min;
        if periodic {
            c = c.rem_euclid(max - min);
        } else if !(coord >= min && coord <= max) {
            return None;
        }
        let f = c / h;
        let mut base = f.floor() as isize;
        if !periodic {
            base = base.min(n as isize - 2);
        } else if base >= n as isize {
            base = n as isize - 1;
        }
        let s = f - base as f64;
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        // Slopes h*f'(x_i) = (f[i-2] - 8 f[i-1] + 8 f[i+1] - f[i+2]) / 12.
        let (a, b) = (h10 / 12.0, h11 / 12.0);
        Some(AxisWeights {
            base,
            w: [a, -8.0 * a + b, h00 - 8.0 * b, h01 + 8.0 * a, -a + 8.0 * b, -b],
        })
    }

    /// One row of data interpolated along x; `j` already resolved to a stored row.
    fn interp_row(&self, data: &[f64], j: usize, wx: &AxisWeights) -> f64 {
        let n = self.nx as isize;
        let row = &data[j * self.nx..(j + 1) * self.nx];
        let fetch = |k: isize| -> f64 {
            if self.periodic_x {
                row[k.rem_euclid(n) as usize]
            } else if k < 0 {
                row[0] + k as f64 * (row[1] - row[0])
            } else if k >= n {
                let last = row[(n - 1) as usize];
                last + (k - n + 1) as f64 * (last - row[(n - 2) as usize])
            } else {
                row[k as usize]
            }
        };
        (0..STENCIL).map(|m| wx.w[m] * fetch(wx.base - 2 + m as isize)).sum()
    }

    fn interp_slice(&self, data: &[f64], wx: &AxisWeights, wy: &AxisWeights) -> f64 {
        let n = self.ny as isize;
        let row = |k: isize| -> f64 {
            if self.periodic_y {
                self.interp_row(data, k.rem_euclid(n) as usize, wx)
            } else if k < 0 {
                let r0 = self.interp_row(data, 0, wx);
                r0 + k as f64 * (self.interp_row(data, 1, wx) - r0)
            } else if k >= n {
                let last = self.interp_row(data, (n - 1) as usize, wx);
                last + (k - n + 1) as f64 * (last - self.interp_row(data, (n - 2) as usize, wx))
            } else {
                self.interp_row(data, k as usize, wx)
            }
        };
        (0..STENCIL).map(|m| wy.w[m] * row(wy.base - 2 + m as isize)).sum()
    }

    pub fn eval(&self, p: Vec2, t: f64) -> Result<Vec2> {
        let out = || Error::OutOfDomain { x: p.x, y: p.y, t };
        let wx = Self::axis_weights(p.x, self.x_min, self.x_max, self.hx(), self.nx, self.periodic_x).ok_or_else(out)?;
        let wy = Self::axis_weights(p.y, self.y_min, self.y_max, self.hy(), self.ny, self.periodic_y).ok_or_else(out)?;
        let nt = self.times.len();
        let (k, s) = if nt == 1 {
            (0, 0.0)
        } else {
            let (t0, t1) = (self.times[0], self.times[nt - 1]);
            if !(t >= t0 && t <= t1) {
                return Err(out());
            }
            let k = self.times.partition_point(|&tk| tk <= t).clamp(1, nt - 1) - 1;
            (k, (t - self.times[k]) / (self.times[k + 1] - self.times[k]))
        };
        let mut u = self.interp_slice(&self.u[k], &wx, &wy);
        let mut v = self.interp_slice(&self.v[k], &wx, &wy);
        if s > 0.0 {
            let u1 = self.interp_slice(&self.u[k + 1], &wx, &wy);
            let v1 = self.interp_slice(&self.v[k + 1], &wx, &wy);
            u += s * (u1 - u);
            v += s * (v1 - v);
        }
        Ok(Vec2::new(u, v))
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        write_magic(w, GRID_MAGIC)?;
        write_u64(w, self.nx as u64)?;
        write_u64(w, self.ny as u64)?;
        write_u64(w, self.times.len() as u64)?;
        for b in self.bounds() {
            write_f64(w, b)?;
        }
        write_f64s(w, &self.times)?;
        write_u8(w, self.periodic_x as u8)?;
        write_u8(w, self.periodic_y as u8)?;
        for u in &self.u {
            write_f64s(w, u)?;
        }
        for v in &self.v {
            write_f64s(w, v)?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        read_magic(r, GRID_MAGIC)?;
        let nx = read_u64(r, "nx")?;
        let ny = read_u64(r, "ny")?;
        let nt = read_u64(r, "nt")?;
        for (name, n) in [("nx", nx), ("ny", ny), ("nt", nt)] {
            if n == 0 || n > MAX_AXIS_LEN {
                return Err(Error::MalformedHeader(format!("axis count {name} = {n} out of range")));
            }
        }
        let mut bounds = [0.0; 4];
        for (b, name) in bounds.iter_mut().zip(["x_min", "x_max", "y_min", "y_max"]) {
            *b = read_f64(r, name)?;
        }
        let mut times = Vec::with_capacity(nt as usize);
        for _ in 0..nt {
            times.push(read_f64(r, "time stamps")?);
        }
        let mut flags = [false; 2];
        for (f, name) in flags.iter_mut().zip(["periodic_x", "periodic_y"]) {
            *f = match read_u8(r, name)? {
                0 => false,
                1 => true,
                b => return Err(Error::MalformedHeader(format!("{name} flag byte {b} is not 0 or 1"))),
            };
        }
        let n = (nx * ny) as usize;
        let mut u = Vec::with_capacity(nt as usize);
        for k in 0..nt {
            u.push(read_f64s(r, n, &format!("u slice {k}"))?);
        }
        let mut v = Vec::with_capacity(nt as usize);
        for k in 0..nt {
            v.push(read_f64s(r, n, &format!("v slice {k}"))?);
        }
        expect_eof(r)?;
        GriddedField::new(bounds, nx as usize, ny as usize, (flags[0], flags[1]), times, u, v)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum VelocityField {
    Analytic(AnalyticField),
    Gridded(GriddedField),
}

impl VelocityField {
    pub fn eval(&self, p: Vec2, t: f64) -> Result<Vec2> {
        match self {
            VelocityField::Analytic(a) => Ok(a.eval(p)),
            VelocityField::Gridded(g) => g.eval(p, t),
        }
    }

    pub fn periodicity(&self) -> Periodicity {
        match self {
            VelocityField::Analytic(_) => Periodicity::NONE,
            VelocityField::Gridded(g) => g.periodicity(),
        }
    }

    /// Time span covered by the data; `None` for fields defined at all times.
    pub fn time_range(&self) -> Option<(f64, f64)> {
        match self {
            VelocityField::Analytic(_) => None,
            VelocityField::Gridded(g) if g.times.len() > 1 => Some((g.times[0], *g.times.last().unwrap())),
            VelocityField::Gridded(_) => None,
        }
    }

    /// Breakpoints of the piecewise-linear time interpolation strictly between
    /// `t_a` and `t_b`, ordered from `t_a` towards `t_b`.
    pub fn time_knots(&self, t_a: f64, t_b: f64) -> Vec<f64> {
        let (lo, hi) = if t_a <= t_b { (t_a, t_b) } else { (t_b, t_a) };
        let mut k: Vec<f64> = match self {
            VelocityField::Gridded(g) if g.times.len() > 1 => g.times.iter().copied().filter(|&t| t > lo && t < hi).collect(),
            _ => Vec::new(),
        };
        if t_a > t_b {
            k.reverse();
        }
        k
    }

    /// Spatial bounds; infinite on unbounded or periodic axes.
    pub fn spatial_bounds(&self) -> [f64; 4] {
        match self {
            VelocityField::Analytic(_) => [f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY],
            VelocityField::Gridded(g) => {
                let (x0, x1) = if g.periodic_x { (f64::NEG_INFINITY, f64::INFINITY) } else { (g.x_min, g.x_max) };
                let (y0, y1) = if g.periodic_y { (f64::NEG_INFINITY, f64::INFINITY) } else { (g.y_min, g.y_max) };
                [x0, x1, y0, y1]
            }
        }
    }
}

pub fn duffing_field() -> VelocityField {
    VelocityField::Analytic(AnalyticField::Duffing)
}

pub fn load_gridded_field(path: impl AsRef<Path>) -> Result<VelocityField> {
    let mut r = BufReader::new(File::open(path)?);
    Ok(VelocityField::Gridded(GriddedField::read_from(&mut r)?))
}

pub fn save_gridded_field(field: &GriddedField, path: impl AsRef<Path>) -> Result<()> {
    field.save(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sampled(nx: usize, ny: usize, periodic: (bool, bool), bounds: [f64; 4], times: &[f64], f: impl Fn(Vec2, f64) -> Vec2) -> GriddedField {
        let mut g = GriddedField {
            x_min: bounds[0],
            x_max: bounds[1],
            y_min: bounds[2],
            y_max: bounds[3],
            nx,
            ny,
            periodic_x: periodic.0,
            periodic_y: periodic.1,
            times: times.to_vec(),
            u: vec![],
            v: vec![],
        };
        for &t in times {
            let mut u = Vec::new();
            let mut v = Vec::new();
            for j in 0..ny {
                for i in 0..nx {
                    let w = f(g.node(i, j), t);
                    u.push(w.x);
                    v.push(w.y);
                }
            }
            g.u.push(u);
            g.v.push(v);
        }
        g.validate().unwrap();
        g
    }

    #[test]
    fn duffing_values() {
        let f = duffing_field();
        assert_eq!(f.eval(Vec2::new(0.0, 0.0), 3.0).unwrap(), Vec2::new(0.0, 0.0));
        assert_eq!(f.eval(Vec2::new(1.0, 0.0), -1.0).unwrap(), Vec2::new(0.0, 3.0));
        assert_eq!(f.eval(Vec2::new(0.0, 1.0), 7.0).unwrap(), Vec2::new(1.0, 0.0));
    }

    #[test]
    fn duffing_is_divergence_free() {
        // d(y)/dx + d(4x - x^3)/dy vanishes identically; check by central differences.
        let f = AnalyticField::Duffing;
        let e = 1e-5;
        for &(x, y) in &[(0.3, -1.2), (2.0, 0.7), (-2.5, 2.5)] {
            let dudx = (f.eval(Vec2::new(x + e, y)).x - f.eval(Vec2::new(x - e, y)).x) / (2.0 * e);
            let dvdy = (f.eval(Vec2::new(x, y + e)).y - f.eval(Vec2::new(x, y - e)).y) / (2.0 * e);
            assert!((dudx + dvdy).abs() < 1e-9);
        }
    }

    #[test]
    fn constant_field_two_slices() {
        let g = sampled(5, 4, (false, false), [0.0, 1.0, 0.0, 1.0], &[0.0, 1.0], |_, _| Vec2::new(1.0, 0.0));
        for &(x, y, t) in &[(0.0, 0.0, 0.0), (0.33, 0.71, 0.4), (1.0, 1.0, 1.0)] {
            let w = g.eval(Vec2::new(x, y), t).unwrap();
            assert!((w.x - 1.0).abs() < 1e-14 && w.y.abs() < 1e-14);
        }
    }

    #[test]
    fn reproduces_nodes() {
        let g = sampled(7, 6, (false, false), [-1.0, 2.0, 0.0, 1.0], &[0.0, 0.5, 2.0], |p, t| {
            Vec2::new((p.x * 3.0).sin() + t, (p.y * p.x).cos() * t)
        });
        for k in 0..3 {
            for j in 0..6 {
                for i in 0..7 {
                    let w = g.eval(g.node(i, j), g.times[k]).unwrap();
                    let idx = j * 7 + i;
                    assert!((w.x - g.u[k][idx]).abs() < 1e-13);
                    assert!((w.y - g.v[k][idx]).abs() < 1e-13);
                }
            }
        }
    }

    #[test]
    fn linear_data_is_reproduced_everywhere() {
        let g = sampled(6, 5, (false, false), [-2.0, 2.0, -1.0, 1.0], &[0.0, 1.0], |p, _| Vec2::new(p.x, -p.y));
        for &(x, y) in &[(-2.0, -1.0), (-1.93, 0.97), (0.123, -0.456), (2.0, 1.0), (1.99, 0.01)] {
            let w = g.eval(Vec2::new(x, y), 0.37).unwrap();
            assert!((w.x - x).abs() < 1e-12 && (w.y + y).abs() < 1e-12, "{w:?} at ({x},{y})");
        }
    }

    #[test]
    fn cubic_data_is_exact_away_from_ghost_nodes() {
        let c = |x: f64| 0.3 * x * x * x - x * x + 2.0 * x - 0.5;
        let g = sampled(21, 21, (false, false), [-2.0, 2.0, -2.0, 2.0], &[0.0], |p, _| Vec2::new(c(p.x), c(p.y) * c(p.x)));
        for &(x, y) in &[(-0.93, 0.17), (0.123, -0.456), (1.01, 0.99)] {
            let w = g.eval(Vec2::new(x, y), 0.0).unwrap();
            assert!((w.x - c(x)).abs() < 1e-12 && (w.y - c(x) * c(y)).abs() < 1e-11, "{w:?}");
        }
    }

    #[test]
    fn knots_lie_strictly_inside_in_integration_order() {
        let g = sampled(4, 4, (false, false), [0.0, 1.0, 0.0, 1.0], &[0.0, 1.0, 2.0, 3.0], |_, _| Vec2::ZERO);
        let f = VelocityField::Gridded(g);
        assert_eq!(f.time_knots(0.5, 3.0), vec![1.0, 2.0]);
        assert_eq!(f.time_knots(3.0, 1.0), vec![2.0]);
        assert!(f.time_knots(1.0, 2.0).is_empty());
        assert!(duffing_field().time_knots(0.0, 5.0).is_empty());
    }

    #[test]
    fn periodic_interpolation_converges_at_fourth_order() {
        let tau = 2.0 * std::f64::consts::PI;
        let err = |n: usize| {
            let g = sampled(n, n, (true, true), [0.0, tau, 0.0, tau], &[0.0], |p, _| Vec2::new((p.x + 2.0 * p.y).sin(), 0.0));
            (0..50)
                .map(|k| {
                    let p = Vec2::new(0.37 * k as f64, 0.11 * k as f64);
                    (g.eval(p, 0.0).unwrap().x - (p.x + 2.0 * p.y).sin()).abs()
                })
                .fold(0.0, f64::max)
        };
        let ratio = err(32) / err(64);
        assert!(ratio > 12.0, "{ratio}");
    }

    #[test]
    fn out_of_domain_is_an_error() {
        let g = sampled(4, 4, (false, false), [0.0, 1.0, 0.0, 1.0], &[0.0, 1.0], |_, _| Vec2::ZERO);
        assert!(matches!(g.eval(Vec2::new(1.01, 0.5), 0.5), Err(Error::OutOfDomain { .. })));
        assert!(matches!(g.eval(Vec2::new(0.5, 0.5), 1.5), Err(Error::OutOfDomain { .. })));
    }

    #[test]
    fn non_monotone_times_rejected() {
        let g = sampled(4, 4, (false, false), [0.0, 1.0, 0.0, 1.0], &[0.0, 1.0, 2.0], |_, _| Vec2::ZERO);
        let mut bad = g.clone();
        bad.times = vec![0.0, 1.0, 1.0];
        let mut buf = Vec::new();
        bad.write_to(&mut buf).unwrap();
        let err = GriddedField::read_from(&mut buf.as_slice()).unwrap_err();
        assert!(matches!(err, Error::NonMonotoneTime { index: 2 }));
        assert!(err.to_string().contains("non-monotone time axis"));
    }

    #[test]
    fn malformed_and_truncated_files() {
        let g = sampled(4, 3, (true, false), [0.0, 1.0, 0.0, 1.0], &[0.0, 1.0], |p, _| p);
        let mut buf = Vec::new();
        g.write_to(&mut buf).unwrap();

        let mut bad_magic = buf.clone();
        bad_magic[0] = b'X';
        assert!(matches!(GriddedField::read_from(&mut bad_magic.as_slice()), Err(Error::BadMagic { .. })));

        let short_header = &buf[..20];
        assert!(matches!(GriddedField::read_from(&mut &short_header[..]), Err(Error::MalformedHeader(_))));

        let mut bad_flag = buf.clone();
        let flag_pos = 8 + 3 * 8 + 4 * 8 + 2 * 8;
        bad_flag[flag_pos] = 7;
        assert!(matches!(GriddedField::read_from(&mut bad_flag.as_slice()), Err(Error::MalformedHeader(_))));

        let truncated = &buf[..buf.len() - 8];
        assert!(matches!(GriddedField::read_from(&mut &truncated[..]), Err(Error::ShapeMismatch(_))));

        let mut extra = buf.clone();
        extra.push(0);
        assert!(matches!(GriddedField::read_from(&mut extra.as_slice()), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn file_round_trip_is_bit_exact() {
        let g = sampled(9, 7, (true, true), [0.0, 6.0, 0.0, 4.0], &[0.0, 0.1, 0.3], |p, t| {
            Vec2::new((p.x + t).sin() / 3.0, (p.y * 1.7).cos() * std::f64::consts::PI)
        });
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.grid");
        save_gridded_field(&g, &path).unwrap();
        let VelocityField::Gridded(back) = load_gridded_field(&path).unwrap() else { panic!() };
        assert_eq!(back.times.iter().map(|t| t.to_bits()).collect::<Vec<_>>(), g.times.iter().map(|t| t.to_bits()).collect::<Vec<_>>());
        for k in 0..3 {
            assert!(back.u[k].iter().zip(&g.u[k]).all(|(a, b)| a.to_bits() == b.to_bits()));
            assert!(back.v[k].iter().zip(&g.v[k]).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
        assert_eq!(back, g);
    }

    proptest! {
        #[test]
        fn periodic_wrap(x in 0.0..std::f64::consts::TAU, y in 0.0..std::f64::consts::TAU, t in 0.0..1.0f64, m in -2i32..3, n in -2i32..3) {
            let l = 2.0 * std::f64::consts::PI;
            let g = sampled(16, 12, (true, true), [0.0, l, 0.0, l], &[0.0, 1.0], |p, t| {
                Vec2::new(p.y.sin() * (1.0 + t), (2.0 * p.x).cos())
            });
            let a = g.eval(Vec2::new(x, y), t).unwrap();
            let b = g.eval(Vec2::new(x + m as f64 * l, y + n as f64 * l), t).unwrap();
            prop_assert!((a.x - b.x).abs() < 1e-12 && (a.y - b.y).abs() < 1e-12);
        }
    }
}

//! Uniform seed grids and scalar fields sampled on them.

use crate::error::{Error, Result};
use crate::geom::Vec2;
use serde::{Deserialize, Serialize};

/// Uniform node-centred grid with `nx * ny` nodes including both end points of
/// each axis. Storage is row-major: `index(i, j) = j * nx + i`, `i` along x.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub nx: usize,
    pub ny: usize,
}

impl GridSpec {
    pub fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64, nx: usize, ny: usize) -> Result<Self> {
        if nx < 2 || ny < 2 {
            return Err(Error::invalid(format!("grid needs at least 2x2 nodes, got {nx}x{ny}")));
        }
        if !(x_min < x_max && y_min < y_max) || ![x_min, x_max, y_min, y_max].iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("grid bounds must be finite with min < max"));
        }
        Ok(GridSpec { x_min, x_max, y_min, y_max, nx, ny })
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn hx(&self) -> f64 {
        (self.x_max - self.x_min) / (self.nx - 1) as f64
    }

    pub fn hy(&self) -> f64 {
        (self.y_max - self.y_min) / (self.ny - 1) as f64
    }

    /// The smaller of the two spacings.
    pub fn h(&self) -> f64 {
        self.hx().min(self.hy())
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn coords(&self, idx: usize) -> (usize, usize) {
        (idx % self.nx, idx / self.nx)
    }

    pub fn node(&self, i: usize, j: usize) -> Vec2 {
        Vec2::new(
            self.x_min + i as f64 * self.hx(),
            self.y_min + j as f64 * self.hy(),
        )
    }

    pub fn node_at(&self, idx: usize) -> Vec2 {
        let (i, j) = self.coords(idx);
        self.node(i, j)
    }

    pub fn nodes(&self) -> Vec<Vec2> {
        (0..self.len()).map(|k| self.node_at(k)).collect()
    }

    pub fn contains(&self, p: Vec2) -> bool {
        p.x >= self.x_min && p.x <= self.x_max && p.y >= self.y_min && p.y <= self.y_max
    }

    /// Cell containing `p` and the local coordinates inside it, or `None` outside.
    pub fn locate(&self, p: Vec2) -> Option<(usize, usize, f64, f64)> {
        if !self.contains(p) {
            return None;
        }
        let fx = (p.x - self.x_min) / self.hx();
        let fy = (p.y - self.y_min) / self.hy();
        let i = (fx.floor() as usize).min(self.nx - 2);
        let j = (fy.floor() as usize).min(self.ny - 2);
        Some((i, j, fx - i as f64, fy - j as f64))
    }

    /// Like [`GridSpec::locate`], but periodic axes wrap. A grid whose nodes
    /// stop one spacing short of the period gets a closing cell between the
    /// last and first node.
    pub fn locate_wrapped(&self, p: Vec2, per: Periodicity) -> Option<Cell> {
        let (i0, i1, sx) = wrap_axis(p.x, self.x_min, self.hx(), self.nx, per.x)?;
        let (j0, j1, sy) = wrap_axis(p.y, self.y_min, self.hy(), self.ny, per.y)?;
        Some(Cell { i0, i1, j0, j1, sx, sy })
    }
}

/// Corner indices and local coordinates of a (possibly wrapped) grid cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub i0: usize,
    pub i1: usize,
    pub j0: usize,
    pub j1: usize,
    pub sx: f64,
    pub sy: f64,
}

impl Cell {
    /// Corner indices paired with their bilinear weights.
    pub fn corners(&self, spec: &GridSpec) -> [(usize, f64); 4] {
        let (sx, sy) = (self.sx, self.sy);
        [
            (spec.index(self.i0, self.j0), (1.0 - sx) * (1.0 - sy)),
            (spec.index(self.i1, self.j0), sx * (1.0 - sy)),
            (spec.index(self.i0, self.j1), (1.0 - sx) * sy),
            (spec.index(self.i1, self.j1), sx * sy),
        ]
    }
}

fn wrap_axis(x: f64, min: f64, h: f64, n: usize, period: Option<f64>) -> Option<(usize, usize, f64)> {
    if !x.is_finite() {
        return None;
    }
    let x = match period {
        Some(l) => min + (x - min).rem_euclid(l),
        None => x,
    };
    let f = (x - min) / h;
    let last = (n - 1) as f64;
    if f < 0.0 {
        return None;
    }
    if f <= last {
        let i = (f.floor() as usize).min(n - 2);
        return Some((i, i + 1, f - i as f64));
    }
    match period {
        Some(l) if (n as f64 * h - l).abs() <= 1e-9 * l => Some((n - 1, 0, f - last)),
        _ => None,
    }
}

/// Periods of the periodic axes, if any.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Periodicity {
    pub x: Option<f64>,
    pub y: Option<f64>,
}

impl Periodicity {
    pub const NONE: Periodicity = Periodicity { x: None, y: None };

    /// Minimum-image separation.
    pub fn delta(&self, a: Vec2, b: Vec2) -> Vec2 {
        fn wrap(d: f64, period: Option<f64>) -> f64 {
            match period {
                Some(l) => d - l * (d / l).round(),
                None => d,
            }
        }
        Vec2::new(wrap(b.x - a.x, self.x), wrap(b.y - a.y, self.y))
    }

    pub fn distance(&self, a: Vec2, b: Vec2) -> f64 {
        self.delta(a, b).norm()
    }
}

/// Scalar values on a [`GridSpec`]; masked entries are NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarGrid {
    pub spec: GridSpec,
    pub values: Vec<f64>,
}

impl ScalarGrid {
    pub fn new(spec: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != spec.len() {
            return Err(Error::ShapeMismatch(format!(
                "grid has {} nodes, got {} values",
                spec.len(),
                values.len()
            )));
        }
        Ok(ScalarGrid { spec, values })
    }

    pub fn from_fn(spec: GridSpec, f: impl Fn(Vec2) -> f64) -> Self {
        let values = (0..spec.len()).map(|k| f(spec.node_at(k))).collect();
        ScalarGrid { spec, values }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[self.spec.index(i, j)]
    }

    /// Bilinear interpolation; `None` outside the grid or next to a masked node.
    pub fn sample(&self, p: Vec2) -> Option<f64> {
        let (i, j, sx, sy) = self.spec.locate(p)?;
        let v00 = self.get(i, j);
        let v10 = self.get(i + 1, j);
        let v01 = self.get(i, j + 1);
        let v11 = self.get(i + 1, j + 1);
        let v = (1.0 - sy) * ((1.0 - sx) * v00 + sx * v10) + sy * ((1.0 - sx) * v01 + sx * v11);
        v.is_finite().then_some(v)
    }

    /// Bilinear interpolation with periodic wrap on the given axes.
    pub fn sample_wrapped(&self, p: Vec2, per: Periodicity) -> Option<f64> {
        let cell = self.spec.locate_wrapped(p, per)?;
        let v: f64 = cell.corners(&self.spec).iter().map(|&(k, w)| w * self.values[k]).sum();
        v.is_finite().then_some(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn node_layout_includes_endpoints() {
        let g = GridSpec::new(-3.0, 3.0, -1.0, 1.0, 7, 3).unwrap();
        assert_eq!(g.node(0, 0), Vec2::new(-3.0, -1.0));
        assert_eq!(g.node(6, 2), Vec2::new(3.0, 1.0));
        assert_eq!(g.coords(g.index(4, 2)), (4, 2));
    }

    #[test]
    fn bilinear_is_exact_on_affine() {
        let g = GridSpec::new(0.0, 1.0, 0.0, 2.0, 5, 9).unwrap();
        let s = ScalarGrid::from_fn(g, |p| 2.0 * p.x - 3.0 * p.y + 1.0);
        let v = s.sample(Vec2::new(0.37, 1.21)).unwrap();
        assert!((v - (2.0 * 0.37 - 3.0 * 1.21 + 1.0)).abs() < 1e-12);
        assert!(s.sample(Vec2::new(1.1, 0.0)).is_none());
    }

    #[test]
    fn wrapped_sampling_closes_the_period() {
        let l = 2.0 * std::f64::consts::PI;
        let n = 16;
        let open = GridSpec::new(0.0, l * (n - 1) as f64 / n as f64, 0.0, l * (n - 1) as f64 / n as f64, n, n).unwrap();
        let per = Periodicity { x: Some(l), y: Some(l) };
        let s = ScalarGrid::from_fn(open, |p| p.x.sin() + p.y.cos());
        for p in [Vec2::new(l - 0.1, 0.3), Vec2::new(0.2, -0.05), Vec2::new(3.0 * l + 0.4, 1.0)] {
            let v = s.sample_wrapped(p, per).unwrap();
            assert!((v - (p.x.sin() + p.y.cos())).abs() < 0.05, "{p:?} {v}");
        }
        let a = s.sample_wrapped(Vec2::new(0.7, 0.9), per).unwrap();
        let b = s.sample_wrapped(Vec2::new(0.7 + l, 0.9 - 2.0 * l), per).unwrap();
        assert!((a - b).abs() < 1e-12);
        assert!(s.sample_wrapped(Vec2::new(l - 0.1, 0.3), Periodicity::NONE).is_none());
    }

    #[test]
    fn periodic_minimum_image() {
        let p = Periodicity { x: Some(10.0), y: None };
        let d = p.distance(Vec2::new(0.5, 0.0), Vec2::new(9.5, 0.0));
        assert!((d - 1.0).abs() < 1e-12);
        let d = p.distance(Vec2::new(0.0, 0.5), Vec2::new(0.0, 9.5));
        assert!((d - 9.0).abs() < 1e-12);
    }
}

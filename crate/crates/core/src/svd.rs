//! Closed-form 2x2 SVD of deformation gradients and the forward/backward
//! singular-value and FTLE fields derived from it.

use crate::binio::*;
use crate::error::{Error, Result};
use crate::flow_map::FlowMapGrid;
use crate::geom::{Mat2, Vec2};
use crate::grid::{GridSpec, ScalarGrid};
use rayon::prelude::*;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

pub const SVD_MAGIC: &[u8; 8] = b"LCSSVD01";

/// Relative singular-value gap below which singular vectors are unreliable.
pub const DEGENERACY_THRESHOLD: f64 = 1e-9;

/// `M = sigma2 theta2 xi2^T + sigma1 theta1 xi1^T` with `sigma2 >= sigma1 > 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Svd2 {
    pub sigma2: f64,
    pub sigma1: f64,
    pub xi2: Vec2,
    pub xi1: Vec2,
    pub theta2: Vec2,
    pub theta1: Vec2,
}

impl Svd2 {
    pub fn reconstruct(&self) -> Mat2 {
        let outer = |u: Vec2, v: Vec2, s: f64| Mat2::new(s * u.x * v.x, s * u.x * v.y, s * u.y * v.x, s * u.y * v.y);
        let p = outer(self.theta2, self.xi2, self.sigma2);
        let q = outer(self.theta1, self.xi1, self.sigma1);
        Mat2::new(p.a + q.a, p.b + q.b, p.c + q.c, p.d + q.d)
    }

    pub fn is_degenerate(&self) -> bool {
        self.sigma2 - self.sigma1 <= DEGENERACY_THRESHOLD * self.sigma2
    }
}

/// Closed-form SVD.
///
/// `xi2` is the principal axis of `M^T M` from its rotation angle, oriented with
/// a nonnegative first component (nonnegative second on ties); `xi1` is `xi2`
/// rotated by +90 degrees. `sigma2 = Q + R` and `sigma1 = |det M| / sigma2`,
/// `theta2 = M xi2 / sigma2` and `theta1 = sign(det M) * rot90(theta2)`.
pub fn svd2x2(m: Mat2) -> Result<Svd2> {
    if !m.is_finite() {
        return Err(Error::SingularMatrix);
    }
    let det = m.det();
    if det == 0.0 || !det.is_finite() {
        return Err(Error::SingularMatrix);
    }
    let e = 0.5 * (m.a + m.d);
    let f = 0.5 * (m.a - m.d);
    let g = 0.5 * (m.c + m.b);
    let h = 0.5 * (m.c - m.b);
    let q = e.hypot(h);
    let r = f.hypot(g);
    let sigma2 = q + r;
    let sigma1 = det.abs() / sigma2;

    // M^T M = [[p, s], [s, w]]
    let p = m.a * m.a + m.c * m.c;
    let w = m.b * m.b + m.d * m.d;
    let s = m.a * m.b + m.c * m.d;
    let angle = 0.5 * (2.0 * s).atan2(p - w);
    let mut xi2 = Vec2::new(angle.cos(), angle.sin());
    if xi2.x < 0.0 || (xi2.x == 0.0 && xi2.y < 0.0) {
        xi2 = -xi2;
    }
    let xi1 = xi2.perp();
    let theta2 = m.apply(xi2).normalized();
    let theta1 = if det > 0.0 { theta2.perp() } else { -theta2.perp() };
    Ok(Svd2 { sigma2, sigma1, xi2, xi1, theta2, theta1 })
}

/// `(1/T) log sigma2` for every entry; NaN entries (masked) pass through.
pub fn ftle(sigma2: &[f64], duration: f64) -> Result<Vec<f64>> {
    if !(duration > 0.0) {
        return Err(Error::invalid(format!("FTLE needs a positive duration, got {duration}")));
    }
    sigma2
        .iter()
        .map(|&s| {
            if s.is_nan() {
                Ok(f64::NAN)
            } else if s > 0.0 && s.is_finite() {
                Ok(s.ln() / duration)
            } else {
                Err(Error::invalid(format!("FTLE needs positive finite stretch factors, got {s}")))
            }
        })
        .collect()
}

/// Per-node singular-value data of a flow map. Vectors `theta_i` and the
/// backward quantities are attached at the advected position `x2`.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdFields {
    pub grid: GridSpec,
    pub t_a: f64,
    pub t_b: f64,
    pub incompressible: bool,
    pub sigma2f: Vec<f64>,
    pub sigma1f: Vec<f64>,
    pub xi2: Vec<Vec2>,
    pub xi1: Vec<Vec2>,
    pub theta2: Vec<Vec2>,
    pub theta1: Vec<Vec2>,
    pub sigma2b: Vec<f64>,
    pub sigma1b: Vec<f64>,
    pub ftle_f: Vec<f64>,
    pub ftle_b: Vec<f64>,
    pub x2: Vec<Vec2>,
    pub mask: Vec<bool>,
    pub degenerate: Vec<bool>,
}

impl SvdFields {
    pub fn duration(&self) -> f64 {
        (self.t_b - self.t_a).abs()
    }

    pub fn scalar(&self, values: &[f64]) -> ScalarGrid {
        ScalarGrid { spec: self.grid, values: values.to_vec() }
    }

    pub fn ftle_grid(&self) -> ScalarGrid {
        self.scalar(&self.ftle_f)
    }

    fn channels(&self) -> Vec<(&'static str, Vec<f64>)> {
        let comp = |v: &[Vec2], x: bool| v.iter().map(|p| if x { p.x } else { p.y }).collect::<Vec<_>>();
        let flag = |v: &[bool]| v.iter().map(|&b| b as u8 as f64).collect::<Vec<_>>();
        vec![
            ("sigma2f", self.sigma2f.clone()),
            ("sigma1f", self.sigma1f.clone()),
            ("xi2_x", comp(&self.xi2, true)),
            ("xi2_y", comp(&self.xi2, false)),
            ("xi1_x", comp(&self.xi1, true)),
            ("xi1_y", comp(&self.xi1, false)),
            ("theta2_x", comp(&self.theta2, true)),
            ("theta2_y", comp(&self.theta2, false)),
            ("theta1_x", comp(&self.theta1, true)),
            ("theta1_y", comp(&self.theta1, false)),
            ("sigma2b", self.sigma2b.clone()),
            ("sigma1b", self.sigma1b.clone()),
            ("ftle_f", self.ftle_f.clone()),
            ("ftle_b", self.ftle_b.clone()),
            ("x2_x", comp(&self.x2, true)),
            ("x2_y", comp(&self.x2, false)),
            ("mask", flag(&self.mask)),
            ("degenerate", flag(&self.degenerate)),
        ]
    }

    /// Header: magic, bounds, nx, ny, t_a, t_b, incompressible byte, channel
    /// count; then per channel a length-prefixed UTF-8 name and `nx * ny` values.
    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        write_magic(w, SVD_MAGIC)?;
        for b in [self.grid.x_min, self.grid.x_max, self.grid.y_min, self.grid.y_max] {
            write_f64(w, b)?;
        }
        write_u64(w, self.grid.nx as u64)?;
        write_u64(w, self.grid.ny as u64)?;
        write_f64(w, self.t_a)?;
        write_f64(w, self.t_b)?;
        write_u8(w, self.incompressible as u8)?;
        let channels = self.channels();
        write_u64(w, channels.len() as u64)?;
        for (name, values) in channels {
            write_u64(w, name.len() as u64)?;
            w.write_all(name.as_bytes())?;
            write_f64s(w, &values)?;
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }
}

/// Named channels of an SVD container, as read back from disk.
pub fn read_svd_channels<R: Read>(r: &mut R) -> Result<(GridSpec, Vec<(String, Vec<f64>)>)> {
    read_magic(r, SVD_MAGIC)?;
    let mut b = [0.0; 4];
    for v in b.iter_mut() {
        *v = read_f64(r, "bounds")?;
    }
    let nx = read_u64(r, "nx")? as usize;
    let ny = read_u64(r, "ny")? as usize;
    if nx > 1 << 24 || ny > 1 << 24 {
        return Err(Error::MalformedHeader(format!("grid {nx}x{ny} out of range")));
    }
    let grid = GridSpec::new(b[0], b[1], b[2], b[3], nx, ny).map_err(|e| Error::MalformedHeader(e.to_string()))?;
    read_f64(r, "t_a")?;
    read_f64(r, "t_b")?;
    read_u8(r, "incompressible flag")?;
    let count = read_u64(r, "channel count")?;
    if count > 1024 {
        return Err(Error::MalformedHeader(format!("{count} channels")));
    }
    let mut out = Vec::new();
    for _ in 0..count {
        let len = read_u64(r, "channel name length")? as usize;
        if len > 256 {
            return Err(Error::MalformedHeader("channel name too long".into()));
        }
        let mut name = vec![0u8; len];
        r.read_exact(&mut name).map_err(|_| Error::MalformedHeader("truncated channel name".into()))?;
        let name = String::from_utf8(name).map_err(|_| Error::MalformedHeader("channel name is not UTF-8".into()))?;
        let values = read_f64s(r, grid.len(), &name)?;
        out.push((name, values));
    }
    expect_eof(r)?;
    Ok((grid, out))
}

/// SVD of every unmasked deformation gradient, with backward singular values
/// `sigma2b = 1 / sigma1f` and `sigma1b = 1 / sigma2f` attached at `x2`.
pub fn analyze(fmg: &FlowMapGrid, incompressible: bool) -> Result<SvdFields> {
    let grads = fmg
        .gradients
        .as_ref()
        .ok_or_else(|| Error::invalid("flow map has no deformation gradients"))?;
    let duration = fmg.duration();
    if !(duration > 0.0) {
        return Err(Error::invalid("flow map spans zero time"));
    }
    let per_node: Vec<Option<Svd2>> = grads
        .par_iter()
        .zip(fmg.mask.par_iter())
        .map(|(m, &masked)| if masked { None } else { svd2x2(*m).ok() })
        .collect();

    let n = fmg.grid.len();
    let nan = Vec2::new(f64::NAN, f64::NAN);
    let mut out = SvdFields {
        grid: fmg.grid,
        t_a: fmg.t_a,
        t_b: fmg.t_b,
        incompressible,
        sigma2f: vec![f64::NAN; n],
        sigma1f: vec![f64::NAN; n],
        xi2: vec![nan; n],
        xi1: vec![nan; n],
        theta2: vec![nan; n],
        theta1: vec![nan; n],
        sigma2b: vec![f64::NAN; n],
        sigma1b: vec![f64::NAN; n],
        ftle_f: vec![f64::NAN; n],
        ftle_b: vec![f64::NAN; n],
        x2: fmg.positions.clone(),
        mask: vec![true; n],
        degenerate: vec![false; n],
    };
    for (k, svd) in per_node.iter().enumerate() {
        let Some(s) = svd else { continue };
        out.sigma2f[k] = s.sigma2;
        out.sigma1f[k] = s.sigma1;
        out.xi2[k] = s.xi2;
        out.xi1[k] = s.xi1;
        out.theta2[k] = s.theta2;
        out.theta1[k] = s.theta1;
        out.sigma2b[k] = 1.0 / s.sigma1;
        out.sigma1b[k] = 1.0 / s.sigma2;
        out.mask[k] = false;
        out.degenerate[k] = s.is_degenerate();
    }
    out.ftle_f = ftle(&out.sigma2f, duration)?;
    out.ftle_b = ftle(&out.sigma2b, duration)?;
    Ok(out)
}

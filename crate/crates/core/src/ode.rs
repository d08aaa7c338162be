//! Embedded Dormand-Prince 5(4) integrator with PI step-size control.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub atol: f64,
    pub rtol: f64,
}

impl Tolerance {
    pub const fn both(tol: f64) -> Self {
        Tolerance { atol: tol, rtol: tol }
    }
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance::both(1e-8)
    }
}

const MAX_STEPS: usize = 1_000_000;
const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;
const BETA: f64 = 0.04;
const ALPHA: f64 = 0.2 - 0.75 * BETA;

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

fn combo<const N: usize>(y: &[f64; N], h: f64, terms: &[(f64, &[f64; N])]) -> [f64; N] {
    let mut out = *y;
    for (c, k) in terms {
        for i in 0..N {
            out[i] += h * c * k[i];
        }
    }
    out
}

fn error_norm<const N: usize>(y0: &[f64; N], y1: &[f64; N], err: &[f64; N], tol: Tolerance) -> f64 {
    let mut acc = 0.0;
    for i in 0..N {
        let sk = tol.atol + tol.rtol * y0[i].abs().max(y1[i].abs());
        acc += (err[i] / sk).powi(2);
    }
    (acc / N as f64).sqrt()
}

/// Hairer's starting step heuristic.
fn initial_step<const N: usize, F>(f: &F, t0: f64, y0: &[f64; N], f0: &[f64; N], dir: f64, span: f64, tol: Tolerance) -> f64
where
    F: Fn(f64, &[f64; N]) -> Result<[f64; N]>,
{
    let scale = |i: usize| tol.atol + tol.rtol * y0[i].abs();
    let d0 = (0..N).map(|i| (y0[i] / scale(i)).powi(2)).sum::<f64>().sqrt() / (N as f64).sqrt();
    let d1 = (0..N).map(|i| (f0[i] / scale(i)).powi(2)).sum::<f64>().sqrt() / (N as f64).sqrt();
    let mut h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    h0 = h0.min(span);
    let y1 = combo(y0, dir * h0, &[(1.0, f0)]);
    let h1 = match f(t0 + dir * h0, &y1) {
        Ok(f1) => {
            let d2 = (0..N).map(|i| ((f1[i] - f0[i]) / scale(i)).powi(2)).sum::<f64>().sqrt() / (N as f64).sqrt() / h0;
            if d1.max(d2) <= 1e-15 {
                (h0 * 1e-3).max(1e-6)
            } else {
                (0.01 / d1.max(d2)).powf(0.2)
            }
        }
        Err(_) => h0,
    };
    (100.0 * h0).min(h1).min(span)
}

/// Integrates `y' = f(t, y)` from `t0` to `t1`; `t1 < t0` integrates backward.
///
/// A failing right-hand side (typically a domain exit) shrinks the step; once
/// the step cannot shrink further the failure is reported as
/// [`Error::DomainExit`] at the last accepted time.
pub fn integrate<const N: usize, F>(f: F, t0: f64, t1: f64, y0: [f64; N], tol: Tolerance) -> Result<[f64; N]>
where
    F: Fn(f64, &[f64; N]) -> Result<[f64; N]>,
{
    if t0 == t1 {
        return Ok(y0);
    }
    if !(t0.is_finite() && t1.is_finite()) {
        return Err(Error::invalid("integration bounds must be finite"));
    }
    let dir = (t1 - t0).signum();
    let span = (t1 - t0).abs();
    let mut t = t0;
    let mut y = y0;
    let mut k1 = f(t, &y).map_err(|_| Error::DomainExit { time: t0 })?;
    let mut h = initial_step(&f, t0, &y0, &k1, dir, span, tol);
    let mut err_old: f64 = 1e-4;
    let mut rejected_last = false;

    for _ in 0..MAX_STEPS {
        let remaining = (t1 - t) * dir;
        if remaining <= 0.0 {
            return Ok(y);
        }
        let last = h >= remaining;
        if last {
            h = remaining;
        }
        let hmin = 1e-14 * t.abs().max(span).max(1.0);
        if h < hmin {
            return Err(Error::StepUnderflow { time: t });
        }
        let hs = dir * h;
        let stages = (|| -> Result<([f64; N], [f64; N], [f64; N])> {
            let k2 = f(t + C2 * hs, &combo(&y, hs, &[(A21, &k1)]))?;
            let k3 = f(t + C3 * hs, &combo(&y, hs, &[(A31, &k1), (A32, &k2)]))?;
            let k4 = f(t + C4 * hs, &combo(&y, hs, &[(A41, &k1), (A42, &k2), (A43, &k3)]))?;
            let k5 = f(t + C5 * hs, &combo(&y, hs, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]))?;
            let k6 = f(
                t + hs,
                &combo(&y, hs, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]),
            )?;
            let y_new = combo(&y, hs, &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)]);
            let t_new = if last { t1 } else { t + hs };
            let k7 = f(t_new, &y_new)?;
            let mut err = [0.0; N];
            for i in 0..N {
                err[i] = hs * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            }
            Ok((y_new, k7, err))
        })();

        let (y_new, k7, err) = match stages {
            Ok(s) => s,
            Err(_) => {
                if h <= 1e-10 * t.abs().max(1.0) {
                    return Err(Error::DomainExit { time: t });
                }
                h *= 0.25;
                rejected_last = true;
                continue;
            }
        };

        let e = error_norm(&y, &y_new, &err, tol);
        if !e.is_finite() {
            h *= 0.25;
            rejected_last = true;
            continue;
        }
        if e <= 1.0 {
            let fac11 = e.powf(ALPHA);
            let mut fac = fac11 / err_old.powf(BETA);
            fac = (fac / SAFETY).clamp(1.0 / FAC_MAX, 1.0 / FAC_MIN);
            let mut h_new = h / fac;
            if rejected_last {
                h_new = h_new.min(h);
            }
            err_old = e.max(1e-4);
            t = if last { t1 } else { t + hs };
            y = y_new;
            k1 = k7;
            h = h_new;
            rejected_last = false;
            if last {
                return Ok(y);
            }
        } else {
            let fac11 = e.powf(ALPHA);
            h /= (fac11 / SAFETY).min(1.0 / FAC_MIN);
            rejected_last = true;
        }
    }
    Err(Error::TooManySteps(MAX_STEPS))
}

//! Acceptance criteria 1-8, run in sequence with their stated tolerances.
//! Prints one PASS/FAIL line per criterion and exits nonzero if any fail.

use lcs_cli::config::parse;
use lcs_cli::pipeline::{self, ExtractOutput, Resolved};
use lcs_core::seeding::SeedSelection;
use lcs_core::flow_map::{deformation_at_points, deformation_gradient_aux, FlowMapGrid};
use lcs_core::svd::{analyze, svd2x2};
use lcs_core::tracking::{advect_curve, LcsKind, MaterialCurve, Refinement};
use lcs_core::velocity::{duffing_energy, duffing_field, AnalyticField, VelocityField};
use lcs_core::{GridSpec, Mat2, Tolerance, Vec2};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn within(elapsed: Duration, limit: f64) -> bool {
    elapsed.as_secs_f64() < limit
}

/// Config for the library pipeline: defaults plus `overrides`, writing into `dir`.
fn resolved(dir: &Path, overrides: &[&str]) -> Resolved {
    let mut o: Vec<String> = overrides.iter().map(|s| s.to_string()).collect();
    o.push(format!("run.output_dir={:?}", dir.display().to_string()));
    let lc = parse("", "<acceptance>", &o).expect("config parses");
    pipeline::resolve(&lc).expect("config resolves")
}

/// Largest |sigma2 sigma1 - 1| with both singular values taken from the raw
/// gradients, and the number of nodes without a usable gradient.
fn det_error(fm: &FlowMapGrid) -> (f64, usize) {
    let svd = analyze(fm, false).expect("svd");
    let worst = svd
        .sigma2f
        .iter()
        .zip(&svd.sigma1f)
        .filter(|(a, b)| a.is_finite() && b.is_finite())
        .map(|(a, b)| (a * b - 1.0).abs())
        .fold(0.0, f64::max);
    (worst, svd.mask.iter().filter(|m| **m).count())
}

/// Backward FTLE from each advected grid point against the forward FTLE at
/// its origin. Returns the fraction within `tol` and the worst difference.
fn duality(field: &VelocityField, fm: &FlowMapGrid, tol_rt: Tolerance, rho: f64, tol: f64) -> (f64, f64, usize) {
    let fwd = analyze(fm, true).expect("svd");
    let live: Vec<usize> = (0..fm.positions.len()).filter(|&k| !fwd.mask[k]).collect();
    let x2: Vec<Vec2> = live.iter().map(|&k| fm.positions[k]).collect();
    let back = deformation_at_points(field, &x2, fm.t_b, fm.t_a, tol_rt, rho);
    let span = fm.duration();
    let (mut ok, mut worst, mut n) = (0usize, 0.0f64, 0usize);
    for (&k, r) in live.iter().zip(back) {
        let Some((_, m)) = r else { continue };
        let lb = svd2x2(m).expect("svd").sigma2.ln() / span;
        let d = (lb - fwd.ftle_f[k]).abs();
        n += 1;
        worst = worst.max(d);
        if d <= tol {
            ok += 1;
        }
    }
    (ok as f64 / n.max(1) as f64, worst, n)
}

fn c1() -> Verdict {
    let start = Instant::now();
    let grid = GridSpec::new(-0.01, 0.01, -0.01, 0.01, 3, 3).unwrap();
    let fm = deformation_gradient_aux(&duffing_field(), &grid, 0.0, 2.5, Tolerance::both(1e-8), 1e-4).unwrap();
    let elapsed = start.elapsed();
    let got = fm.gradient(grid.index(1, 1)).unwrap().to_array();
    let (c, s) = (5f64.cosh(), 5f64.sinh());
    let want = Mat2::new(c, 0.5 * s, 2.0 * s, c).to_array();
    let rel = got.iter().zip(&want).map(|(g, w)| ((g - w) / w).abs()).fold(0.0, f64::max);
    verdict(rel <= 1e-4 && within(elapsed, 1.0), format!("max relative entry error {rel:.2e} (limit 1e-4), {:.3} s (limit 1 s)", elapsed.as_secs_f64()))
}

fn c2() -> Verdict {
    let start = Instant::now();
    let grid = GridSpec::new(-3.0, 3.0, -3.0, 3.0, 300, 300).unwrap();
    let fm = deformation_gradient_aux(&duffing_field(), &grid, 0.0, 2.5, Tolerance::both(1e-8), 1e-6).unwrap();
    let (err, masked) = det_error(&fm);
    let elapsed = start.elapsed();
    verdict(
        err <= 1e-4 && masked == 0 && within(elapsed, 60.0),
        format!(
            "300x300 Duffing grid, rho 1e-6: max |s1 s2 - 1| = {err:.2e} (limit 1e-4), {masked} masked, {:.1} s (limit 60 s)",
            elapsed.as_secs_f64()
        ),
    )
}

fn c3() -> Verdict {
    let start = Instant::now();
    let field = duffing_field();
    let tol = Tolerance::both(1e-8);
    let grid = GridSpec::new(-3.0, 3.0, -3.0, 3.0, 300, 300).unwrap();
    let fm = deformation_gradient_aux(&field, &grid, 0.0, 2.5, tol, 1e-6).unwrap();
    let (frac, worst, n) = duality(&field, &fm, tol, 1e-6, 1e-3);
    let elapsed = start.elapsed();
    verdict(
        frac >= 0.99 && within(elapsed, 120.0),
        format!(
            "{:.2}% of {n} points within 1e-3 (need 99%), worst {worst:.2e}, {:.1} s (limit 120 s)",
            100.0 * frac,
            elapsed.as_secs_f64()
        ),
    )
}

/// Duffing runs use an odd grid so that the origin is a node.
const DUFFING: [&str; 3] = ["flow.rho=1e-6", "grid.nx=301", "grid.ny=301"];

/// Id of the repelling seed found at the origin node.
fn origin_seed(res: &Resolved, seeds: &SeedSelection) -> Option<usize> {
    seeds.repelling.iter().find(|s| res.grid.node_at(s.index).norm() < 1e-12).map(|s| s.id)
}

/// Principal direction of the points within `r` of the origin.
fn local_direction(points: &[Vec2], r: f64) -> Option<Vec2> {
    let near: Vec<Vec2> = points.iter().copied().filter(|p| p.norm() < r).collect();
    if near.len() < 3 {
        return None;
    }
    let n = near.len() as f64;
    let m = near.iter().fold(Vec2::ZERO, |a, &p| a + p) * (1.0 / n);
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for p in &near {
        let d = *p - m;
        sxx += d.x * d.x;
        sxy += d.x * d.y;
        syy += d.y * d.y;
    }
    let angle = 0.5 * (2.0 * sxy).atan2(sxx - syy);
    Some(Vec2::new(angle.cos(), angle.sin()))
}

struct DuffingRun {
    res: Resolved,
    out: ExtractOutput,
    elapsed: Duration,
}

fn duffing_extract(dir: &Path) -> DuffingRun {
    let start = Instant::now();
    let res = resolved(dir, &DUFFING);
    let out = pipeline::cmd_extract(&res).expect("extract");
    DuffingRun { res, out, elapsed: start.elapsed() }
}

fn c4(run: &DuffingRun) -> Verdict {
    let Some(id) = origin_seed(&run.res, &run.out.seeds.seeds) else {
        return verdict(false, "no repelling seed at the origin".into());
    };
    let Some(curve) = run.out.repelling.iter().find(|c| c.seed_id == id) else {
        return verdict(false, format!("no repelling curve for the origin seed {id}"));
    };
    let h_max = curve.points.iter().map(|&p| duffing_energy(p).abs()).fold(0.0, f64::max);
    let Some(dir) = local_direction(&curve.points, 0.05) else {
        return verdict(false, "curve does not pass within 0.05 of the origin".into());
    };
    let stable = Vec2::new(1.0, -2.0).normalized();
    let angle = dir.dot(stable).abs().min(1.0).acos().to_degrees();
    verdict(
        h_max <= 5e-3 && angle <= 0.5,
        format!(
            "origin seed {id}: {} points, length {:.3}, max |H| = {h_max:.2e} (limit 5e-3), tangent off by {angle:.3} deg (limit 0.5), extract took {:.1} s",
            curve.points.len(),
            curve.arc_length(),
            run.elapsed.as_secs_f64()
        ),
    )
}

fn c5(dir: &Path) -> Verdict {
    let res = resolved(dir, &DUFFING);
    let report = pipeline::cmd_compare(&res).expect("compare");
    let seeds = pipeline::cmd_seeds(&res).expect("seeds");
    let Some(id) = origin_seed(&res, &seeds.seeds) else {
        return verdict(false, "no repelling seed at the origin".into());
    };
    let Some(s) = report.seeds.iter().find(|s| s.seed_id == id) else {
        return verdict(false, format!("no comparison for the origin seed {id}"));
    };
    let pairs: Vec<(f64, f64)> = s
        .metric_advected
        .samples
        .iter()
        .zip(&s.metric_baseline.samples)
        .filter(|(a, b)| a.is_finite() && b.is_finite())
        .map(|(a, b)| (*a, *b))
        .collect();
    let strict = pairs.iter().filter(|(a, b)| a > b).count() as f64 / pairs.len().max(1) as f64;
    let (ma, mb) = (s.metric_advected.median, s.metric_baseline.median);
    verdict(
        ma > mb && strict >= 0.95,
        format!(
            "origin seed {id}: median FTLE {ma:.6} advected vs {mb:.6} shrink line; advected higher at {:.1}% of {} samples (need 95%); Hausdorff {:.2e}",
            100.0 * strict,
            pairs.len(),
            s.hausdorff
        ),
    )
}

struct TurbulenceRun {
    res: Resolved,
    out: ExtractOutput,
}

fn c6(dir: &Path) -> (Verdict, Option<TurbulenceRun>) {
    let start = Instant::now();
    let data = dir.join("turbulence.bin");
    let data_opt = format!("field.path={:?}", data.display().to_string());
    let mut o = vec![data_opt.clone(), format!("run.output_dir={:?}", dir.display().to_string())];
    let lc = parse("", "<acceptance>", &o).unwrap();
    if lc.config.turbulence.n != 128 || lc.config.turbulence.window != 5.0 {
        return (verdict(false, "turbulence defaults are not N=128 over a window of 5".into()), None);
    }
    if let Err(e) = pipeline::cmd_turbulence(&lc) {
        return (verdict(false, format!("generation failed: {e}")), None);
    }
    let generated = start.elapsed();
    o.extend(["grid.nx=64".into(), "grid.ny=64".into(), "flow.rho=3e-9".into()]);
    let lc = parse("", "<acceptance>", &o).unwrap();
    let mut res = pipeline::resolve(&lc).unwrap();
    let mid = res.window.midpoint();
    res.t = mid;
    res.config.time.t = Some(mid);
    let out = match pipeline::cmd_extract(&res) {
        Ok(out) => out,
        Err(e) => return (verdict(false, format!("extract failed: {e}")), None),
    };
    let extracted = start.elapsed();

    let fm = &out.seeds.ftle.flow_map;
    let (det, masked) = det_error(fm);
    let (frac, worst, n) = duality(&res.field, fm, res.tol, res.rho, 5e-2);

    let per = res.periodicity();
    let spacing = |pts: &[Vec2]| {
        let mut d = f64::INFINITY;
        for i in 0..pts.len() {
            for j in i + 1..pts.len() {
                d = d.min(per.distance(pts[i], pts[j]));
            }
        }
        d
    };
    let a_pos: Vec<Vec2> = out.seeds.seeds.attracting.iter().map(|s| s.position).collect();
    let r_pos: Vec<Vec2> = out.seeds.seeds.repelling.iter().map(|s| res.grid.node_at(s.index)).collect();
    let gap = spacing(&a_pos).min(spacing(&r_pos));
    let radius = res.seeding.radius;
    let (na, nr) = (out.attracting.len(), out.repelling.len());
    let elapsed = start.elapsed();

    let pass = det <= 1e-2 && masked == 0 && frac >= 0.99 && radius == 0.2 && gap >= radius && na == nr && na > 0 && within(elapsed, 900.0);
    let detail = format!(
        "N=128, 64x64 seed grid over [{}, {}], rho 3e-9: max |s1 s2 - 1| = {det:.2e} (limit 1e-2), {masked} masked; duality {:.2}% of {n} within 5e-2 \
         (need 99%), worst {worst:.2e}; {} seeds per family, closest pair {gap:.3} (radius {radius}); {na} attracting / {nr} repelling \
         curves at t = {mid}; generation {:.0} s, extract {:.0} s, total {:.0} s (limit 900 s)",
        res.window.t1,
        res.window.t2,
        100.0 * frac,
        a_pos.len(),
        generated.as_secs_f64(),
        (extracted - generated).as_secs_f64(),
        elapsed.as_secs_f64()
    );
    (verdict(pass, detail), Some(TurbulenceRun { res, out }))
}

fn gap_violations(curves: &[MaterialCurve], delta_max: f64) -> (usize, f64) {
    let bad = curves.iter().filter(|c| c.max_gap > delta_max * (1.0 + 1e-12)).count();
    let worst = curves.iter().map(|c| c.max_gap / delta_max).fold(0.0, f64::max);
    (bad, worst)
}

fn c7(duffing: &DuffingRun, turb: Option<&TurbulenceRun>) -> Verdict {
    let mut lines = Vec::new();
    let mut pass = true;
    let mut check = |name: &str, curves: &[MaterialCurve], delta: f64| {
        let (bad, worst) = gap_violations(curves, delta);
        pass &= bad == 0;
        lines.push(format!("{name}: {} curves, worst gap {worst:.3} delta_max, {bad} over", curves.len()));
    };
    check("duffing attracting", &duffing.out.attracting, duffing.res.refine.delta_max);
    check("duffing repelling", &duffing.out.repelling, duffing.res.refine.delta_max);
    match turb {
        Some(t) => {
            check("turbulence attracting", &t.out.attracting, t.res.refine.delta_max);
            check("turbulence repelling", &t.out.repelling, t.res.refine.delta_max);
        }
        None => {
            pass = false;
            lines.push("turbulence curves unavailable".into());
        }
    }
    let saddle = VelocityField::Analytic(AnalyticField::Linear(Mat2::new(1.0, 0.0, 0.0, -1.0)));
    let seg: Vec<Vec2> = (0..=10).map(|i| Vec2::new(-0.05 + 0.01 * i as f64, 0.0)).collect();
    let seg = MaterialCurve::new(seg, 0.0, 0, LcsKind::Attracting);
    let out = advect_curve(&saddle, &seg, 0.0, 3.0, &Refinement::new(0.05), Tolerance::default()).unwrap();
    let rel = (out.arc_length() / (0.1 * 3f64.exp()) - 1.0).abs();
    pass &= rel <= 0.01 && out.max_gap <= 0.05;
    lines.push(format!("saddle segment length off 0.1 e^3 by {:.2e} (limit 1e-2), max gap {:.4}", rel, out.max_gap));
    verdict(pass, lines.join("; "))
}

fn run_cli(workdir: &Path, args: &[&str]) -> Result<(), String> {
    let status = Command::new(env!("CARGO_BIN_EXE_lcs"))
        .current_dir(workdir)
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if status.status.success() {
        Ok(())
    } else {
        Err(format!("{args:?}: {}", String::from_utf8_lossy(&status.stderr)))
    }
}

fn files(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    v.sort();
    v
}

fn c8(dir: &Path) -> Verdict {
    let turb_cfg = "[turbulence]\nn = 32\noutput_n = 32\nspinup = 1.0\nwindow = 1.0\ninterval = 0.25\nseed = 7\n";
    let mut compared = 0;
    let runs: Vec<PathBuf> = ["a", "b"].iter().map(|r| dir.join(r)).collect();
    for (k, run) in runs.iter().enumerate() {
        std::fs::create_dir_all(run).unwrap();
        std::fs::write(run.join("turb.toml"), turb_cfg).unwrap();
        let threads = if k == 0 { "1" } else { "4" };
        let steps: [&[&str]; 3] = [
            &["extract", "--threads", threads, "--output-dir", "out", "--set", "grid.nx=61", "--set", "grid.ny=61"],
            &["compare", "--threads", threads, "--output-dir", "out", "--set", "grid.nx=61", "--set", "grid.ny=61"],
            &["turbulence", "--threads", threads, "--config", "turb.toml", "--output-dir", "turb"],
        ];
        for args in steps {
            if let Err(e) = run_cli(run, args) {
                return verdict(false, e);
            }
        }
    }
    for sub in ["out", "turb"] {
        let (a, b) = (files(&runs[0].join(sub)), files(&runs[1].join(sub)));
        if a.len() != b.len() || a.is_empty() {
            return verdict(false, format!("{sub}: {} vs {} files", a.len(), b.len()));
        }
        for (fa, fb) in a.iter().zip(&b) {
            if std::fs::read(fa).unwrap() != std::fs::read(fb).unwrap() {
                return verdict(false, format!("{} differs between runs", fa.strip_prefix(&runs[0]).unwrap().display()));
            }
            compared += 1;
        }
    }
    verdict(true, format!("{compared} output files byte-identical across two runs (1 thread vs 4 threads)"))
}

fn main() {
    let tmp = tempfile::tempdir().expect("temp dir");
    let root = tmp.path();
    let sub = |name: &str| {
        let d = root.join(name);
        std::fs::create_dir_all(&d).unwrap();
        d
    };
    let mut results: Vec<(u32, &str, Verdict)> = Vec::new();
    let mut record = |n: u32, name: &'static str, v: Verdict| {
        println!("criterion {n} ({name}): {} | {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
        results.push((n, name, v));
    };

    record(1, "deformation-gradient oracle", c1());
    record(2, "incompressibility", c2());
    record(3, "FTLE duality", c3());
    let duffing = duffing_extract(&sub("duffing"));
    record(4, "stable-manifold recovery", c4(&duffing));
    record(5, "advected beats shrink line", c5(&sub("compare")));
    let (v6, turb) = c6(&sub("turbulence"));
    record(6, "turbulence pipeline", v6);
    record(7, "refinement contract", c7(&duffing, turb.as_ref()));
    record(8, "determinism", c8(&sub("determinism")));

    let failed: Vec<u32> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    if failed.is_empty() {
        println!("acceptance: all 8 criteria PASS");
    } else {
        println!("acceptance: FAIL on criteria {failed:?}");
        std::process::exit(1);
    }
}

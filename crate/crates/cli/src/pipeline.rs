//! The commands: resolve a configuration against its field, run the stages,
//! and write their artifacts into the output directory.

use crate::config::{Baseline, Config, GridSection, LoadedConfig, Method, MetricKind};
use crate::error::CliError;
use lcs_core::flow_map::{compute_flow_map_grid, deformation_gradient_aux, deformation_gradient_main, FlowMapGrid};
use lcs_core::ns_solver::generate_turbulence;
use lcs_core::seeding::{make_seed_segments, select_seeds, write_seeds_json, write_seeds_table, SeedOptions, SeedSelection};
use lcs_core::shrinkline::{
    compare_curves, integrate_line_field, CurveComparison, CurveMetric, DirectionField, Family, GridMetric, MetricStats, PointwiseFtle,
};
use lcs_core::svd::{analyze, SvdFields};
use lcs_core::tracking::{
    advect_curve, extract_attracting_lcs, extract_repelling_lcs, write_curves_csv, write_curves_json, CurveOutcome, LcsKind, MaterialCurve,
    Refinement, TimeWindow,
};
use lcs_core::velocity::{load_gridded_field, AnalyticField, VelocityField};
use lcs_core::{GridSpec, Periodicity, Tolerance};
use serde::Serialize;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

/// Window used for analytic fields when none is configured.
const DEFAULT_ANALYTIC_WINDOW: (f64, f64) = (0.0, 2.5);
/// Default seed grid of analytic fields: `[-3, 3]^2` with 301 nodes per axis,
/// so the origin is a node.
const DEFAULT_ANALYTIC_GRID: ([f64; 4], [usize; 2]) = ([-3.0, 3.0, -3.0, 3.0], [301, 301]);
/// Nodes per period on periodic axes when no grid is configured.
const DEFAULT_PERIODIC_NODES: usize = 128;
/// Fraction of a non-periodic data extent kept clear of the default seed grid.
const DOMAIN_MARGIN: f64 = 0.05;

/// A configuration with every default filled in, plus the objects it names.
pub struct Resolved {
    pub config: Config,
    pub field: VelocityField,
    pub grid: GridSpec,
    pub window: TimeWindow,
    pub t: f64,
    pub rho: f64,
    pub tol: Tolerance,
    pub refine: Refinement,
    pub seeding: SeedOptions,
    pub compare_time: f64,
    pub compare_step: f64,
    pub output_dir: PathBuf,
}

impl Resolved {
    pub fn periodicity(&self) -> Periodicity {
        self.field.periodicity()
    }
}

fn core(context: &str) -> impl Fn(lcs_core::Error) -> CliError + '_ {
    move |e| CliError::from_core(context, e)
}

fn io(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Io(format!("{}: {e}", path.display()))
}

pub fn load_field(lc: &LoadedConfig) -> Result<VelocityField, CliError> {
    let f = &lc.config.field;
    match (&f.builtin, &f.path) {
        (Some(_), Some(_)) => Err(lc.error_at("field", "path", "set either field.builtin or field.path, not both")),
        (_, Some(path)) => load_gridded_field(path).map_err(core(&path.display().to_string())),
        (name, None) => {
            let name = name.as_deref().unwrap_or("duffing");
            AnalyticField::by_name(name)
                .map(VelocityField::Analytic)
                .ok_or_else(|| lc.error_at("field", "builtin", format!("unknown field `{name}` (duffing, saddle, uniform, zero)")))
        }
    }
}

fn default_grid(field: &VelocityField) -> ([f64; 4], [usize; 2]) {
    let VelocityField::Gridded(g) = field else {
        return DEFAULT_ANALYTIC_GRID;
    };
    let axis = |min: f64, max: f64, periodic: bool, n_data: usize| {
        if periodic {
            let n = DEFAULT_PERIODIC_NODES;
            (min, min + (max - min) * (n - 1) as f64 / n as f64, n)
        } else {
            let m = DOMAIN_MARGIN * (max - min);
            (min + m, max - m, n_data.max(2))
        }
    };
    let (x_min, x_max, nx) = axis(g.x_min, g.x_max, g.periodic_x, g.nx);
    let (y_min, y_max, ny) = axis(g.y_min, g.y_max, g.periodic_y, g.ny);
    ([x_min, x_max, y_min, y_max], [nx, ny])
}

/// Fills defaults from the field and validates everything, pointing errors
/// at the responsible key.
pub fn resolve(lc: &LoadedConfig) -> Result<Resolved, CliError> {
    let field = load_field(lc)?;
    let mut c = lc.config.clone();
    if c.field.path.is_none() && c.field.builtin.is_none() {
        c.field.builtin = Some("duffing".into());
    }

    let (d1, d2) = field.time_range().unwrap_or(DEFAULT_ANALYTIC_WINDOW);
    let t1 = *c.time.t1.get_or_insert(d1);
    let t2 = *c.time.t2.get_or_insert(d2);
    if !(t1 < t2) {
        return Err(lc.error_at("time", "t2", format!("need t1 < t2, got t1 = {t1}, t2 = {t2}")));
    }
    if let Some((lo, hi)) = field.time_range() {
        if t1 < lo {
            return Err(lc.error_at("time", "t1", format!("t1 = {t1} precedes the data, which starts at {lo}")));
        }
        if t2 > hi {
            return Err(lc.error_at("time", "t2", format!("t2 = {t2} is past the data, which ends at {hi}")));
        }
    }
    let window = TimeWindow::new(t1, t2).map_err(core("time"))?;
    let t = *c.time.t.get_or_insert(t1);
    if !(t1..=t2).contains(&t) {
        return Err(lc.error_at("time", "t", format!("output time {t} is outside [{t1}, {t2}]")));
    }

    let ([dx0, dx1, dy0, dy1], [dnx, dny]) = default_grid(&field);
    let g = &mut c.grid;
    let gs = GridSection {
        x_min: Some(*g.x_min.get_or_insert(dx0)),
        x_max: Some(*g.x_max.get_or_insert(dx1)),
        y_min: Some(*g.y_min.get_or_insert(dy0)),
        y_max: Some(*g.y_max.get_or_insert(dy1)),
        nx: Some(*g.nx.get_or_insert(dnx)),
        ny: Some(*g.ny.get_or_insert(dny)),
    };
    let [x_min, x_max, y_min, y_max] = [gs.x_min, gs.x_max, gs.y_min, gs.y_max].map(Option::unwrap);
    let (nx, ny) = (gs.nx.unwrap(), gs.ny.unwrap());
    if nx < 2 || ny < 2 {
        let key = if nx < 2 { "nx" } else { "ny" };
        return Err(lc.error_at("grid", key, "need at least 2 nodes per axis"));
    }
    if !(x_min < x_max) {
        return Err(lc.error_at("grid", "x_max", format!("need x_min < x_max, got {x_min} and {x_max}")));
    }
    if !(y_min < y_max) {
        return Err(lc.error_at("grid", "y_max", format!("need y_min < y_max, got {y_min} and {y_max}")));
    }
    let grid = GridSpec::new(x_min, x_max, y_min, y_max, nx, ny).map_err(|e| lc.error_at("grid", "nx", e.to_string()))?;
    let [bx0, bx1, by0, by1] = field.spatial_bounds();
    if x_min < bx0 || x_max > bx1 {
        return Err(lc.error_at("grid", "x_min", format!("grid x range [{x_min}, {x_max}] leaves the data [{bx0}, {bx1}]")));
    }
    if y_min < by0 || y_max > by1 {
        return Err(lc.error_at("grid", "y_min", format!("grid y range [{y_min}, {y_max}] leaves the data [{by0}, {by1}]")));
    }
    let h = grid.h();

    let rho = *c.flow.rho.get_or_insert(lcs_core::flow_map::DEFAULT_RHO_FRACTION * h);
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(lc.error_at("flow", "rho", format!("must be positive, got {rho}")));
    }
    if !(c.flow.atol > 0.0) {
        return Err(lc.error_at("flow", "atol", "must be positive"));
    }
    if !(c.flow.rtol > 0.0) {
        return Err(lc.error_at("flow", "rtol", "must be positive"));
    }
    let tol = Tolerance { atol: c.flow.atol, rtol: c.flow.rtol };

    let s = &c.seeding;
    if !(s.radius > 0.0) {
        return Err(lc.error_at("seeding", "radius", format!("must be positive, got {}", s.radius)));
    }
    if !(s.length > 0.0) {
        return Err(lc.error_at("seeding", "length", format!("must be positive, got {}", s.length)));
    }
    if !(0.0..=100.0).contains(&s.floor_percentile) {
        return Err(lc.error_at("seeding", "floor_percentile", "must lie in [0, 100]"));
    }
    let seeding = SeedOptions {
        radius: s.radius,
        floor_percentile: s.floor.then_some(s.floor_percentile),
        periodicity: field.periodicity(),
    };

    let delta_max = *c.refine.delta_max.get_or_insert(h);
    let refine = Refinement {
        delta_max,
        n_substeps: c.refine.n_substeps,
        max_points: c.refine.max_points,
        max_turn_deg: c.refine.max_turn_deg,
    };
    if let Err(e) = refine.validate() {
        let key = if !(delta_max > 0.0) {
            "delta_max"
        } else if refine.n_substeps == 0 {
            "n_substeps"
        } else if refine.max_points < 2 {
            "max_points"
        } else {
            "max_turn_deg"
        };
        return Err(lc.error_at("refine", key, e.to_string()));
    }

    let compare_time = *c.compare.time.get_or_insert(t1);
    if !(t1 <= compare_time && compare_time < t2) {
        return Err(lc.error_at("compare", "time", format!("must lie in [{t1}, {t2}), got {compare_time}")));
    }
    if c.compare.metric == MetricKind::Grid && compare_time != t1 {
        return Err(lc.error_at("compare", "metric", "the grid metric lives at t1; use `pointwise` for later comparison times"));
    }
    let compare_step = *c.compare.step.get_or_insert(0.5 * h);
    if !(compare_step > 0.0) {
        return Err(lc.error_at("compare", "step", "must be positive"));
    }
    if c.compare.samples < 2 {
        return Err(lc.error_at("compare", "samples", "need at least 2 samples"));
    }

    let output_dir = c.run.output_dir.clone();
    Ok(Resolved { config: c, field, grid, window, t, rho, tol, refine, seeding, compare_time, compare_step, output_dir })
}

fn create(dir: &Path, name: &str) -> Result<(BufWriter<File>, PathBuf), CliError> {
    let path = dir.join(name);
    let f = File::create(&path).map_err(io(&path))?;
    Ok((BufWriter::new(f), path))
}

fn write_with(dir: &Path, name: &str, body: impl FnOnce(&mut BufWriter<File>) -> lcs_core::Result<()>) -> Result<(), CliError> {
    let (mut w, path) = create(dir, name)?;
    body(&mut w).map_err(core(&path.display().to_string()))?;
    w.flush().map_err(io(&path))
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<(), CliError> {
    write_with(dir, name, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        writeln!(w)?;
        Ok(())
    })
}

fn prepare_output(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(io(dir))
}

fn write_effective_config(dir: &Path, config: &Config) -> Result<(), CliError> {
    let path = dir.join("effective_config.toml");
    fs::write(&path, config.to_toml()).map_err(io(&path))
}

#[derive(Serialize)]
struct FtleSummary {
    nodes: usize,
    masked: usize,
    degenerate: usize,
    ftle_max: f64,
    argmax: [f64; 2],
    det_error_max: f64,
}

pub struct FtleOutput {
    pub flow_map: FlowMapGrid,
    pub svd: SvdFields,
}

/// Flow map, deformation gradients and SVD over the seed grid.
pub fn compute_ftle(res: &Resolved) -> Result<FtleOutput, CliError> {
    let (t1, t2) = (res.window.t1, res.window.t2);
    let flow_map = match res.config.flow.method {
        Method::Aux => deformation_gradient_aux(&res.field, &res.grid, t1, t2, res.tol, res.rho).map_err(core("flow map"))?,
        Method::Main => deformation_gradient_main(compute_flow_map_grid(&res.field, &res.grid, t1, t2, res.tol)),
    };
    if flow_map.masked_count() == res.grid.len() {
        return Err(CliError::Numerical("every grid trajectory left the domain".into()));
    }
    let svd = analyze(&flow_map, res.config.run.incompressible).map_err(core("SVD"))?;
    Ok(FtleOutput { flow_map, svd })
}

pub fn cmd_ftle(res: &Resolved) -> Result<FtleOutput, CliError> {
    let dir = &res.output_dir;
    prepare_output(dir)?;
    write_effective_config(dir, &res.config)?;
    let out = compute_ftle(res)?;
    let svd = &out.svd;
    write_with(dir, "flowmap.bin", |w| out.flow_map.write_to(w))?;
    write_with(dir, "svd.bin", |w| svd.write_to(w))?;
    write_with(dir, "ftle.csv", |w| {
        writeln!(w, "i,j,x,y,ftle,masked")?;
        for k in 0..res.grid.len() {
            let (i, j) = res.grid.coords(k);
            let p = res.grid.node_at(k);
            writeln!(w, "{i},{j},{},{},{},{}", p.x, p.y, svd.ftle_f[k], svd.mask[k] as u8)?;
        }
        Ok(())
    })?;
    let (mut best, mut arg) = (f64::NEG_INFINITY, 0);
    for (k, v) in svd.ftle_f.iter().enumerate() {
        if v.is_finite() && *v > best {
            best = *v;
            arg = k;
        }
    }
    let p = res.grid.node_at(arg);
    let det_error_max = svd
        .sigma2f
        .iter()
        .zip(&svd.sigma1f)
        .filter(|(a, b)| a.is_finite() && b.is_finite())
        .map(|(a, b)| (a * b - 1.0).abs())
        .fold(0.0, f64::max);
    write_json(
        dir,
        "ftle_summary.json",
        &FtleSummary {
            nodes: res.grid.len(),
            masked: svd.mask.iter().filter(|m| **m).count(),
            degenerate: svd.degenerate.iter().filter(|m| **m).count(),
            ftle_max: best,
            argmax: [p.x, p.y],
            det_error_max,
        },
    )?;
    Ok(out)
}

#[derive(Serialize)]
struct SeedsFile<'a> {
    extrema_found: usize,
    dropped_degenerate: usize,
    attracting: &'a [lcs_core::seeding::SeedPoint],
    repelling: &'a [lcs_core::seeding::SeedPoint],
}

pub struct SeedsOutput {
    pub ftle: FtleOutput,
    pub seeds: SeedSelection,
}

pub fn cmd_seeds(res: &Resolved) -> Result<SeedsOutput, CliError> {
    let ftle = cmd_ftle(res)?;
    let seeds = select_seeds(&ftle.svd, &res.seeding).map_err(core("seeding"))?;
    let dir = &res.output_dir;
    write_with(dir, "seeds.txt", |w| {
        write_seeds_table(w, &seeds.attracting)?;
        for s in &seeds.repelling {
            writeln!(w, "{} {} {} {} {} {}", s.kind.as_str(), s.position.x, s.position.y, s.value, s.direction.x, s.direction.y)?;
        }
        Ok(())
    })?;
    write_with(dir, "seeds.json", |w| {
        let file = SeedsFile {
            extrema_found: seeds.extrema_found,
            dropped_degenerate: seeds.dropped_degenerate,
            attracting: &seeds.attracting,
            repelling: &seeds.repelling,
        };
        serde_json::to_writer_pretty(&mut *w, &file)?;
        writeln!(w)?;
        Ok(())
    })?;
    // Also keep the plain per-family JSON lists for consumers that want one array.
    write_with(dir, "seeds_attracting.json", |w| write_seeds_json(w, &seeds.attracting))?;
    write_with(dir, "seeds_repelling.json", |w| write_seeds_json(w, &seeds.repelling))?;
    Ok(SeedsOutput { ftle, seeds })
}

#[derive(Serialize)]
struct Failure {
    seed_id: usize,
    error: String,
}

#[derive(Serialize)]
struct FamilySummary {
    seeds: usize,
    curves: usize,
    truncated: usize,
    exited: usize,
    failures: Vec<Failure>,
}

#[derive(Serialize)]
struct ExtractSummary {
    time: f64,
    t1: f64,
    t2: f64,
    attracting: FamilySummary,
    repelling: FamilySummary,
}

fn split_outcomes(outcomes: Vec<CurveOutcome>) -> (Vec<MaterialCurve>, FamilySummary) {
    let seeds = outcomes.len();
    let mut curves = Vec::new();
    let mut failures = Vec::new();
    for o in outcomes {
        match o.result {
            Ok(c) => curves.push(c),
            Err(e) => failures.push(Failure { seed_id: o.seed_id, error: e.to_string() }),
        }
    }
    let summary = FamilySummary {
        seeds,
        curves: curves.len(),
        truncated: curves.iter().filter(|c| c.truncated).count(),
        exited: curves.iter().filter(|c| c.exited).count(),
        failures,
    };
    (curves, summary)
}

pub struct ExtractOutput {
    pub seeds: SeedsOutput,
    pub attracting: Vec<MaterialCurve>,
    pub repelling: Vec<MaterialCurve>,
}

pub fn cmd_extract(res: &Resolved) -> Result<ExtractOutput, CliError> {
    let seeds = cmd_seeds(res)?;
    let len = res.config.seeding.length;
    let a_segs = make_seed_segments(&seeds.seeds.attracting, len).map_err(core("seeding"))?;
    let r_segs = make_seed_segments(&seeds.seeds.repelling, len).map_err(core("seeding"))?;
    let a = extract_attracting_lcs(&res.field, &a_segs, res.window, res.t, &res.refine, res.tol).map_err(core("attracting LCS"))?;
    let r = extract_repelling_lcs(&res.field, &r_segs, res.window, res.t, &res.refine, res.tol).map_err(core("repelling LCS"))?;
    let (attracting, a_sum) = split_outcomes(a);
    let (repelling, r_sum) = split_outcomes(r);
    let dir = &res.output_dir;
    write_with(dir, "attracting.json", |w| write_curves_json(w, &attracting))?;
    write_with(dir, "attracting.csv", |w| write_curves_csv(w, &attracting))?;
    write_with(dir, "repelling.json", |w| write_curves_json(w, &repelling))?;
    write_with(dir, "repelling.csv", |w| write_curves_csv(w, &repelling))?;
    write_json(
        dir,
        "extract_summary.json",
        &ExtractSummary { time: res.t, t1: res.window.t1, t2: res.window.t2, attracting: a_sum, repelling: r_sum },
    )?;
    Ok(ExtractOutput { seeds, attracting, repelling })
}

#[derive(Serialize)]
pub struct SeedComparison {
    pub seed_id: usize,
    pub hausdorff: f64,
    /// Hausdorff distance in units of the refinement gap `delta_max`.
    pub hausdorff_over_delta: f64,
    pub length_advected: f64,
    pub length_baseline: f64,
    pub metric_advected: MetricStats,
    pub metric_baseline: MetricStats,
    /// Fraction of matched samples where the advected curve scores at least as high.
    pub fraction_advected_not_below: f64,
}

#[derive(Serialize)]
pub struct CompareReport {
    pub time: f64,
    pub t1: f64,
    pub t2: f64,
    pub metric: MetricKind,
    pub baseline: Baseline,
    pub delta_max: f64,
    pub seeds: Vec<SeedComparison>,
    pub failures: Vec<(usize, String)>,
    pub seeds_above_10_delta: usize,
}

fn seed_comparison(seed_id: usize, cmp: CurveComparison, delta_max: f64) -> SeedComparison {
    let fraction = cmp.fraction_a_not_below_b();
    SeedComparison {
        seed_id,
        hausdorff: cmp.hausdorff,
        hausdorff_over_delta: cmp.hausdorff / delta_max,
        length_advected: cmp.length_a,
        length_baseline: cmp.length_b,
        metric_advected: cmp.metric_a,
        metric_baseline: cmp.metric_b,
        fraction_advected_not_below: fraction,
    }
}

/// Backward-advected stretch lines against forward shrink lines through the
/// matched seeds, both brought to the comparison time.
pub fn cmd_compare(res: &Resolved) -> Result<CompareReport, CliError> {
    let seeds = cmd_seeds(res)?;
    let svd = &seeds.ftle.svd;
    let (t1, t2, tc) = (res.window.t1, res.window.t2, res.compare_time);
    let segs = make_seed_segments(&seeds.seeds.repelling, res.config.seeding.length).map_err(core("seeding"))?;
    let at_t1 = extract_repelling_lcs(&res.field, &segs, res.window, t1, &res.refine, res.tol).map_err(core("repelling LCS"))?;
    let direction = DirectionField::from_svd(svd, Family::Xi1, res.periodicity()).map_err(core("shrink lines"))?;
    let grid_ftle = svd.ftle_grid();
    let metric: Box<dyn CurveMetric> = match res.config.compare.metric {
        MetricKind::Grid => Box::new(GridMetric { grid: &grid_ftle, periodicity: res.periodicity() }),
        MetricKind::Pointwise => Box::new(PointwiseFtle { field: &res.field, t_a: tc, t_b: t2, tol: res.tol, rho: res.rho }),
    };

    let mut comparisons = Vec::new();
    let mut failures = Vec::new();
    let mut advected_curves = Vec::new();
    let mut baseline_curves = Vec::new();
    for (seed, outcome) in seeds.seeds.repelling.iter().zip(at_t1) {
        let run = || -> lcs_core::Result<(MaterialCurve, MaterialCurve)> {
            let a1 = outcome.result?;
            let a = if tc == t1 { a1.clone() } else { advect_curve(&res.field, &segs[seed.id], t2, tc, &res.refine, res.tol)? };
            let b = match res.config.compare.baseline {
                Baseline::Advected => a.clone(),
                Baseline::Shrinkline => {
                    let p = res.grid.node_at(seed.index);
                    let line = integrate_line_field(&direction, p, res.compare_step, a1.arc_length(), Family::Xi1)?;
                    let b1 = MaterialCurve::new(line.points, t1, seed.id, LcsKind::Repelling);
                    advect_curve(&res.field, &b1, t1, tc, &res.refine, res.tol)?
                }
            };
            Ok((a, b))
        };
        match run() {
            Ok((a, b)) => {
                let cmp = compare_curves(&a.points, &b.points, metric.as_ref(), res.config.compare.samples).map_err(core("compare"))?;
                comparisons.push(seed_comparison(seed.id, cmp, res.refine.delta_max));
                advected_curves.push(a);
                baseline_curves.push(b);
            }
            Err(e) => failures.push((seed.id, e.to_string())),
        }
    }
    let report = CompareReport {
        time: tc,
        t1,
        t2,
        metric: res.config.compare.metric,
        baseline: res.config.compare.baseline,
        delta_max: res.refine.delta_max,
        seeds_above_10_delta: comparisons.iter().filter(|c| c.hausdorff_over_delta > 10.0).count(),
        seeds: comparisons,
        failures,
    };
    let dir = &res.output_dir;
    write_json(dir, "compare.json", &report)?;
    write_with(dir, "compare_advected.json", |w| write_curves_json(w, &advected_curves))?;
    write_with(dir, "compare_baseline.json", |w| write_curves_json(w, &baseline_curves))?;
    write_with(dir, "compare_advected.csv", |w| write_curves_csv(w, &advected_curves))?;
    write_with(dir, "compare_baseline.csv", |w| write_curves_csv(w, &baseline_curves))?;
    Ok(report)
}

/// Runs the spectral solver and writes the velocity grid file to
/// `field.path`, or `turbulence.bin` in the output directory.
pub fn cmd_turbulence(lc: &LoadedConfig) -> Result<PathBuf, CliError> {
    let mut c = lc.config.clone();
    c.turbulence.validate().map_err(|e| CliError::Config(format!("{}: turbulence: {e}", lc.origin)))?;
    if c.field.builtin.is_some() {
        return Err(lc.error_at("field", "builtin", "the turbulence command writes a gridded field; remove field.builtin"));
    }
    let dir = c.run.output_dir.clone();
    prepare_output(&dir)?;
    let path = c.field.path.get_or_insert_with(|| dir.join("turbulence.bin")).clone();
    write_effective_config(&dir, &c)?;
    let field = generate_turbulence(&c.turbulence).map_err(core("turbulence"))?;
    field.save(&path).map_err(core(&path.display().to_string()))?;
    Ok(path)
}

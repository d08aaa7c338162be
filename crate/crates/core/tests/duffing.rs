use lcs_core::flow_map::deformation_gradient_aux;
use lcs_core::seeding::{make_seed_segments, select_seeds, SeedOptions};
use lcs_core::shrinkline::{hausdorff, integrate_line_field, DirectionField, Family};
use lcs_core::svd::{analyze, SvdFields};
use lcs_core::tracking::{advect_curve, extract_repelling_lcs, Refinement, TimeWindow};
use lcs_core::velocity::duffing_field;
use lcs_core::{GridSpec, Periodicity, Tolerance, Vec2};

fn duffing_svd(n: usize) -> SvdFields {
    let grid = GridSpec::new(-3.0, 3.0, -3.0, 3.0, n, n).unwrap();
    let fm = deformation_gradient_aux(&duffing_field(), &grid, 0.0, 2.5, Tolerance::default(), 1e-6).unwrap();
    analyze(&fm, true).unwrap()
}

#[test]
fn shrink_line_through_origin_converges_with_step() {
    let svd = duffing_svd(121);
    let field = DirectionField::from_svd(&svd, Family::Xi1, Periodicity::NONE).unwrap();
    let h = svd.grid.h();
    let coarse = integrate_line_field(&field, Vec2::ZERO, h / 2.0, 2.0, Family::Xi1).unwrap();
    let fine = integrate_line_field(&field, Vec2::ZERO, h / 4.0, 2.0, Family::Xi1).unwrap();
    let d = hausdorff(&coarse.points, &fine.points);
    assert!(d < 1e-3, "step halving moved the curve by {d}");
}

/// Inserted points are chord midpoints, slightly off the material curve; the
/// forward flow regrows that offset, so the round trip converges at second order.
#[test]
fn round_trip_error_is_second_order_in_delta_max() {
    let svd = duffing_svd(121);
    let seeds = select_seeds(&svd, &SeedOptions::new(0.5)).unwrap();
    let segs = make_seed_segments(&seeds.repelling[..3], 0.1).unwrap();
    let window = TimeWindow::new(0.0, 2.5).unwrap();
    let field = duffing_field();
    let round_trip = |delta_max: f64| -> Vec<f64> {
        let refine = Refinement::new(delta_max);
        let curves = extract_repelling_lcs(&field, &segs, window, 0.0, &refine, Tolerance::default()).unwrap();
        segs.iter()
            .zip(curves)
            .map(|(seg, out)| {
                let curve = out.result.unwrap();
                assert!(curve.max_gap <= delta_max);
                let back = advect_curve(&field, &curve, 0.0, 2.5, &refine, Tolerance::default()).unwrap();
                hausdorff(&back.points, &seg.points)
            })
            .collect()
    };
    let h = svd.grid.h();
    let (coarse, fine) = (round_trip(h), round_trip(h / 2.0));
    for (c, f) in coarse.iter().zip(&fine) {
        assert!(c / f > 3.5, "{c} -> {f}");
        assert!(*f < 5e-3);
    }
}

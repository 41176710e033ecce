use gapcert_core::covering::{evaluate_covering, radius_sweep, two_piece_covering};
use gapcert_core::localbound::{best_local_bound, bound_constant_floor};
use gapcert_core::oracle::radial_sector_gap;
use gapcert_core::powerlaw::assemble_two_piece_bound;
use gapcert_core::*;

#[test]
fn two_piece_bounds_sit_below_the_oracle() {
    for alpha in [1.5, 2.0, 3.0, 4.0] {
        for n in [4, 8, 16] {
            let spec = PowerLawSpec::new(alpha, 1.0, 1.0, n, PowerLawBranch::Pure).unwrap();
            let g = assemble_two_piece_bound(&spec, &BoundConfig::default()).unwrap();
            let rm = spec.measure().unwrap();
            let o = radial_sector_gap(&rm, &Cell::whole(n), 4, 4096).unwrap();
            println!(
                "alpha={alpha} n={n} bound={:.5} oracle={:.5} cert={} methods={:?}",
                g.value,
                o.value,
                g.certified,
                g.per_cell.iter().map(|r| (r.method, r.value)).collect::<Vec<_>>()
            );
            assert!(g.certified, "{:?}", g.notes);
            assert!(g.value > 0.0 && g.value <= o.value + 3.0 * o.error_estimate);
        }
    }
}

#[test]
fn constant_floor_of_power_law_curvature_on_the_ball() {
    let rm = RadialMeasure::power_law(8, 1.5, 1.0, 1.0, PowerLawBranch::Pure).unwrap();
    let cf = CurvatureField::from_measure(&MeasureSpec::Radial(rm)).unwrap();
    let r_a = 8f64.powf(1.0 / 1.5);
    let ball = bound_constant_floor(&cf.field, &Cell::centered_ball(8, r_a).unwrap()).unwrap();
    assert!((ball.value - 0.5 * 8f64.powf(-1.0 / 3.0)).abs() < 1e-9, "{}", ball.value);
    let outside = bound_constant_floor(&cf.field, &Cell::ball_complement(8, r_a).unwrap()).unwrap();
    assert_eq!(outside.value, 0.0);
}

#[test]
fn best_bound_for_quartic_ball() {
    let n = 16;
    let rm = RadialMeasure::power_law(n, 4.0, 1.0, 1.0, PowerLawBranch::Pure).unwrap();
    let m = normalize(&MeasureSpec::Radial(rm), 1e-12).unwrap();
    let cf = CurvatureField::from_measure(&m.base).unwrap();
    let cell = Cell::centered_ball(n, 2.0).unwrap();
    let p = poincare::bobkov_gap_bounds(&m, &cell).unwrap().lower_estimate();
    let cfg = LocalBoundConfig { k_grid: Some(vec![0.0]), ..LocalBoundConfig::default() };
    let r = best_local_bound(&cf.field, &cell, Some(&p), &m, &cfg).unwrap();
    let mean_rho = m.mean(&cf.field, &cell).unwrap();
    println!("{:?} {} mean_rho={mean_rho} lambda={}", r.method, r.value, p.lambda1);
    assert!(r.value >= 0.25 * mean_rho * 0.9 && r.value <= 0.5 * mean_rho * 1.1);
}

#[test]
fn sweep_dominates() {
    let n = 8;
    let rm = RadialMeasure::power_law(n, 4.0, 1.0, 1.0, PowerLawBranch::Pure).unwrap();
    let m = normalize(&MeasureSpec::Radial(rm), 1e-12).unwrap();
    let r1 = 8f64.powf(0.25);
    let radii = [0.5 * r1, r1, 2.0 * r1];
    let cfg = BoundConfig::default();
    let s = radius_sweep(&m, &radii, &|r| two_piece_covering(r, n), &cfg).unwrap();
    for &r in &radii {
        let g = evaluate_covering(&m, &two_piece_covering(r, n).unwrap(), &cfg).unwrap();
        assert!(s.best.value >= g.value);
    }
    println!("{:?}", s.table);
}

#[test]
fn cell_values_below_ground_energy() {
    use gapcert_core::oracle::schrodinger_ground_energy;
    for alpha in [1.5, 3.0, 4.0] {
        for n in [4, 16] {
            let spec = PowerLawSpec::new(alpha, 1.0, 1.0, n, PowerLawBranch::Pure).unwrap();
            let g = assemble_two_piece_bound(&spec, &BoundConfig::default()).unwrap();
            let rm = spec.measure().unwrap();
            let cf = CurvatureField::from_measure(&MeasureSpec::Radial(rm.clone())).unwrap();
            for r in &g.per_cell {
                let e = schrodinger_ground_energy(&MeasureSpec::Radial(rm.clone()), &r.cell, &cf.field, 4096).unwrap();
                println!("alpha={alpha} n={n} {} {:?} value={:.5} ground={:.5}", r.cell.label(), r.method, r.value, e.value);
                assert!(r.value <= e.value + 3.0 * e.error_estimate);
            }
        }
    }
}

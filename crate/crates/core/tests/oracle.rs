use std::sync::Arc;

use gapcert_core::oracle::*;
use gapcert_core::potential::{PolynomialPotential, PowerLawProfile, ScaledProfile};
use gapcert_core::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn quartic_2d() -> MeasureSpec {
    let pe = PolynomialPotential::new(vec![vec![0.5, 0.1], vec![0.1, 0.3]], vec![0.2, -0.1], vec![0.05, 0.1]).unwrap();
    MeasureSpec::Evaluator(Arc::new(pe))
}

#[test]
fn rayleigh_quotients_stay_above_the_gap() {
    let m = quartic_2d();
    let cell = Cell::boxed(vec![-1.0, -1.5], vec![1.5, 1.0]).unwrap();
    let h = 1.0 / 16.0;
    let gap = grid_gap(&m, &cell, h).unwrap().value;
    let nodes = grid_nodes(&cell, h).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..100 {
        let c: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
        let u: Vec<f64> = nodes
            .iter()
            .map(|x| c[0] * x[0] + c[1] * x[1] + c[2] * x[0] * x[1] + c[3] * (3.0 * x[0]).sin() + c[4] * x[1].powi(2) + c[5] * rng.random_range(-0.1..0.1))
            .collect();
        let q = rayleigh_quotient(&u, &m, &cell, h).unwrap();
        // The extrapolated gap may sit slightly below the discrete one.
        assert!(q >= gap * (1.0 - 1e-2), "{q} < {gap}");
    }
}

#[test]
fn scaling_covariance() {
    for s in [0.5, 2.0] {
        let base = RadialMeasure::custom(3, Arc::new(PowerLawProfile::pure(3.0)));
        let scaled = RadialMeasure::custom(3, Arc::new(ScaledProfile { inner: Arc::new(PowerLawProfile::pure(3.0)), scale: s }));
        let a = radial_sector_gap(&base, &Cell::whole(3), 3, 4096).unwrap().value;
        let b = radial_sector_gap(&scaled, &Cell::whole(3), 3, 4096).unwrap().value;
        assert!((b * s * s / a - 1.0).abs() <= 1e-2, "s={s}: {a} {b}");
    }
}

#[test]
fn mesh_refinement_converges() {
    let rm = RadialMeasure::power_law(4, 4.0, 1.0, 1.0, PowerLawBranch::Pure).unwrap();
    let cell = Cell::centered_ball(4, 1.5).unwrap();
    let values: Vec<f64> = [256, 1024, 4096].iter().map(|&m| radial_sector_gap(&rm, &cell, 3, m).unwrap().value).collect();
    assert!((values[2] - values[1]).abs() <= (values[1] - values[0]).abs() + 1e-9, "{values:?}");
    let r = radial_sector_gap(&rm, &cell, 3, 4096).unwrap();
    assert!(r.error_estimate <= 1e-4 * r.value, "{r:?}");
}

#[test]
fn radial_and_grid_agree_on_the_gaussian() {
    let rm = RadialMeasure::gaussian(2);
    let radial = radial_sector_gap(&rm, &Cell::whole(2), 3, 4096).unwrap();
    assert!((radial.value - 1.0).abs() < 1e-6);
    let bx = Cell::boxed(vec![-6.0, -6.0], vec![6.0, 6.0]).unwrap();
    let grid = grid_gap(&MeasureSpec::Evaluator(Arc::new(PolynomialPotential::gaussian(2))), &bx, 12.0 / 96.0).unwrap();
    assert!((grid.value / radial.value - 1.0).abs() <= 2e-2, "{grid:?}");
}

#[test]
fn the_gap_lives_in_low_sectors() {
    for (n, alpha) in [(2, 4.0), (5, 1.5), (10, 3.0)] {
        let rm = RadialMeasure::power_law(n, alpha, 1.0, 1.0, PowerLawBranch::Pure).unwrap();
        let r = radial_sector_gap(&rm, &Cell::whole(n), 4, 2048).unwrap();
        assert!(r.sector_l.unwrap() <= 1, "n={n} alpha={alpha}: {r:?}");
    }
}

#[test]
fn ground_energy_of_a_constant_potential() {
    let m = MeasureSpec::Radial(RadialMeasure::gaussian(1));
    let u = ScalarField::point(1, |_| 0.7);
    let e = schrodinger_ground_energy(&m, &Cell::boxed(vec![-2.0], vec![2.0]).unwrap(), &u, 2048).unwrap();
    assert!((e.value - 0.7).abs() < 1e-6, "{e:?}");
}

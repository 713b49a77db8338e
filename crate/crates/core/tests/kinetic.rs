use std::sync::OnceLock;

use proptest::prelude::*;

use scatterkin::collision::Collision;
use scatterkin::grid::{AngularRule, SpatialGrid, SymmetryKind, VelocityGrid};
use scatterkin::hydro::{FourierMode, HydroState};
use scatterkin::kinetic::{
    read_snapshot, well_prepared_initial, write_snapshot, KineticOptions, SnapshotHeader, CLAMP_LIMIT,
};
use scatterkin::linops::CgOptions;
use scatterkin::{Collision64, DistributionField64, Error, KineticSolver64, ReducedCollision64};

fn collision() -> &'static Collision64 {
    static C: OnceLock<Collision64> = OnceLock::new();
    C.get_or_init(|| Collision::new(VelocityGrid::new(8, 4.0, AngularRule::default()).unwrap()).unwrap())
}

fn red() -> &'static ReducedCollision64 {
    static R: OnceLock<ReducedCollision64> = OnceLock::new();
    R.get_or_init(|| ReducedCollision64::new(collision(), SymmetryKind::Slab))
}

fn state(grid: &SpatialGrid, rho_amp: f64, temp_amp: f64) -> HydroState {
    let m = |a: f64, phase: f64| FourierMode {
        wavenumber: [1, 0, 0],
        amplitude: a,
        phase,
    };
    HydroState::from_modes(grid, (1.0, 1.0), &[m(rho_amp, 0.0)], &[m(temp_amp, 1.0)]).unwrap()
}

#[test]
fn zero_epsilon_gives_the_local_maxwellian() {
    let grid = SpatialGrid::new(1, 16).unwrap();
    let s = state(&grid, 0.1, 0.05);
    let wp = well_prepared_initial(&s, 0.0, red(), 1.0, &grid, &CgOptions::default()).unwrap();
    assert_eq!(wp.field, DistributionField64::local_maxwellian(&s, red(), 0.0));
    assert_eq!(wp.clamped_mass_fraction, 0.0);
}

#[test]
fn well_prepared_data_is_positive_and_moment_free() {
    let grid = SpatialGrid::new(1, 64).unwrap();
    let s = state(&grid, 0.1, 0.0);
    let eps = 0.05;
    let wp = well_prepared_initial(&s, eps, red(), 1.0, &grid, &CgOptions::default()).unwrap();
    assert!(wp.positivity_threshold > eps);
    assert!(wp.field.values().iter().all(|&x| x > 0.0));
    let mu = DistributionField64::local_maxwellian(&s, red(), eps);
    let r = red();
    for c in 0..grid.n_cells() {
        let d: Vec<f64> = wp.field.cell(c).iter().zip(mu.cell(c)).map(|(a, b)| a - b).collect();
        let scale = r.moment(&d.iter().map(|x| x.abs()).collect::<Vec<_>>(), |v| {
            1.0 + v[0] * v[0] + v[1] * v[1] + v[2] * v[2]
        });
        assert!(scale > 0.0);
        assert!(r.moment(&d, |_| 1.0).abs() <= 1e-8 * scale);
        assert!(r.moment(&d, |v| v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).abs() <= 1e-8 * scale);
    }
}

#[test]
fn oversized_epsilon_is_reported() {
    let grid = SpatialGrid::new(1, 16).unwrap();
    let s = state(&grid, 0.4, 0.3);
    let r = well_prepared_initial(&s, 5.0, red(), 1.0, &grid, &CgOptions::default());
    match r {
        Err(Error::EpsilonTooLarge { epsilon, threshold }) => assert!(threshold < epsilon),
        other => panic!("expected EpsilonTooLarge, got {other:?}"),
    }
}

#[test]
fn steps_per_unit_time_scale_inversely_with_epsilon() {
    let grid = SpatialGrid::new(1, 16).unwrap();
    let dt = |eps: f64| {
        KineticSolver64::new(red(), grid, 1.0, eps, KineticOptions::default())
            .unwrap()
            .max_dt()
    };
    let (a, b, c) = (dt(0.1), dt(0.05), dt(0.025));
    assert!((a / b - 2.0).abs() <= 1e-12 && (b / c - 2.0).abs() <= 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn steps_conserve_mass_and_energy(ra in -0.15f64..0.15, ta in -0.1f64..0.1, eps in 0.03f64..0.2) {
        let grid = SpatialGrid::new(1, 12).unwrap();
        let s = state(&grid, ra, ta);
        let mut f = well_prepared_initial(&s, eps, red(), 1.0, &grid, &CgOptions::default()).unwrap().field;
        let mut solver = KineticSolver64::new(red(), grid, 1.0, eps, KineticOptions::default()).unwrap();
        let (m0, e0) = f.totals(red(), &grid);
        let dt = solver.max_dt();
        for _ in 0..4 {
            let stats = solver.step(&mut f, dt).unwrap();
            prop_assert!(stats.clamped_mass_fraction <= CLAMP_LIMIT);
        }
        let (m, e) = f.totals(red(), &grid);
        prop_assert!((m - m0).abs() <= 1e-12 * m0, "mass drift {:e}", (m - m0).abs() / m0);
        prop_assert!((e - e0).abs() <= 1e-12 * e0, "energy drift {:e}", (e - e0).abs() / e0);
    }
}

#[test]
fn drifting_gas_loses_momentum_but_not_mass() {
    let grid = SpatialGrid::new(1, 4).unwrap();
    let r = red();
    let cell = r.maxwellian(1.0, 0.2, 1.0);
    let values: Vec<f64> = (0..grid.n_cells()).flat_map(|_| cell.clone()).collect();
    let mut f = DistributionField64::new(values, r.len(), 0.1, 0.0).unwrap();
    let mut solver = KineticSolver64::new(r, grid, 1.0, 0.1, KineticOptions::default()).unwrap();
    let (m0, _) = f.totals(r, &grid);
    for _ in 0..10 {
        solver.step(&mut f, solver.max_dt()).unwrap();
    }
    let u = f.macro_fields(r).unwrap()[0].u[0];
    assert!(u > 0.0 && u < 0.2 * 0.5, "u = {u}");
    assert!((f.totals(r, &grid).0 - m0).abs() <= 1e-12 * m0);
}

#[test]
fn snapshot_round_trip() {
    let grid = SpatialGrid::new(1, 8).unwrap();
    let s = state(&grid, 0.1, 0.05);
    let mut f = well_prepared_initial(&s, 0.1, red(), 1.0, &grid, &CgOptions::default())
        .unwrap()
        .field;
    f.time = 0.125;
    let header = SnapshotHeader {
        velocity_grid_hash: collision().grid.hash(),
        symmetry: SymmetryKind::Slab,
        spatial: grid,
        n_vel: red().len(),
        epsilon: 0.1,
        time: f.time,
        config_hash: "abc".into(),
        code_version: "test".into(),
    };
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("f.bin");
    write_snapshot(&path, &header, &f).unwrap();
    let (h, g) = read_snapshot::<f64>(&path).unwrap();
    assert_eq!(h, header);
    assert_eq!(g, f);
}

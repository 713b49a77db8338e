use std::sync::OnceLock;

use proptest::prelude::*;

use scatterkin::collision::Collision;
use scatterkin::grid::{AngularRule, SymmetryKind, VelocityGrid};
use scatterkin::linops::CgOptions;
use scatterkin::transport::{TransportCoefficients, TransportTable};
use scatterkin::{Error, LinearizedOperator64, ReducedCollision64};

fn reduced(n: usize, v_max: f64) -> ReducedCollision64 {
    let c = Collision::new(VelocityGrid::new(n, v_max, AngularRule::default()).unwrap()).unwrap();
    ReducedCollision64::new(&c, SymmetryKind::Slab)
}

fn small() -> &'static ReducedCollision64 {
    static R: OnceLock<ReducedCollision64> = OnceLock::new();
    R.get_or_init(|| reduced(8, 4.0))
}

fn coefficients(red: &ReducedCollision64, rho: f64, temp: f64, alpha: f64) -> TransportCoefficients {
    let op = LinearizedOperator64::assemble(red, rho, temp, alpha).unwrap();
    TransportCoefficients::compute(&op, &CgOptions::default()).unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

#[test]
fn density_scaling_on_a_fixed_lattice() {
    // L(ρ, T, α) = ρ L(1, T, α/ρ) and the sources scale with √ρ
    let red = small();
    for (rho, alpha) in [(2.0, 2.0), (0.5, 0.8), (1.7, 0.6)] {
        let a = coefficients(red, rho, 1.0, alpha);
        let b = coefficients(red, 1.0, 1.0, alpha / rho);
        for (x, y) in [(a.h, b.h), (a.h_prime, b.h_prime), (a.h1_prime, b.h1_prime)] {
            assert!(rel(x, y) <= 1e-8, "{x} vs {y}");
        }
    }
}

#[test]
fn temperature_scaling_on_a_stretched_lattice() {
    let g = VelocityGrid::<f64>::new(8, 4.0, AngularRule::default()).unwrap();
    for (rho, temp, alpha) in [(1.2, 1.44, 1.0), (0.7, 0.64, 1.5)] {
        let stretched = ReducedCollision64::new(
            &Collision::new(g.rescaled(f64::sqrt(temp)).unwrap()).unwrap(),
            SymmetryKind::Slab,
        );
        let direct = coefficients(&stretched, rho, temp, alpha);
        let reference = coefficients(small(), 1.0, 1.0, alpha / rho);
        let s = temp.sqrt();
        for (x, y) in [
            (direct.h, s * reference.h),
            (direct.h_prime, s * reference.h_prime),
            (direct.h1_prime, s * reference.h1_prime),
        ] {
            assert!(rel(x, y) <= 1e-5, "{x} vs {y}");
        }
    }
}

#[test]
fn table_midpoints_within_one_percent() {
    let red = small();
    let table = TransportTable::tabulate(red, (0.5, 2.0), (0.5, 2.0), 1.0, (9, 9), &CgOptions::default()).unwrap();
    let (rn, tn) = (table.rho_nodes().to_vec(), table.temp_nodes().to_vec());
    for i in 0..rn.len() - 1 {
        for j in 0..tn.len() - 1 {
            let (r, t) = (0.5 * (rn[i] + rn[i + 1]), 0.5 * (tn[j] + tn[j + 1]));
            let got = table.lookup(r, t);
            assert!(!got.clamped);
            let exact = coefficients(red, r, t, 1.0);
            for (x, y) in [
                (got.coefficients.h, exact.h),
                (got.coefficients.h_prime, exact.h_prime),
                (got.coefficients.h1_prime, exact.h1_prime),
            ] {
                assert!(rel(x, y) <= 0.01, "at ({r}, {t}): {x} vs {y}");
            }
        }
    }
    let node = table.lookup(rn[3], tn[5]);
    assert_eq!(node.coefficients.h, table.entry(3, 5).h);
}

#[test]
fn out_of_range_lookup_is_clamped_and_flagged() {
    let table = TransportTable::tabulate(small(), (0.9, 1.1), (0.9, 1.1), 1.0, (2, 2), &CgOptions::default()).unwrap();
    let l = table.lookup(3.0, 1.0);
    assert!(l.clamped);
    assert_eq!(l.coefficients.h, table.lookup(1.1, 1.0).coefficients.h);
    assert!(matches!(table.lookup_strict(3.0, 1.0), Err(Error::TableRange { .. })));
    let single = TransportTable::tabulate(small(), (1.0, 1.0), (1.0, 1.0), 1.0, (5, 5), &CgOptions::default()).unwrap();
    assert_eq!(
        single.lookup(1.0, 1.0).coefficients.h,
        coefficients(small(), 1.0, 1.0, 1.0).h
    );
}

#[test]
fn coefficients_converge_under_velocity_refinement() {
    let coarse = coefficients(&reduced(12, 6.0), 1.0, 1.0, 1.0);
    let fine = coefficients(&reduced(16, 6.0), 1.0, 1.0, 1.0);
    assert!(rel(coarse.h, fine.h) <= 0.02, "H {} vs {}", coarse.h, fine.h);
}

fn table_states() -> &'static Vec<TransportCoefficients> {
    static C: OnceLock<Vec<TransportCoefficients>> = OnceLock::new();
    C.get_or_init(|| {
        [(1.0, 1.0), (0.6, 1.8), (1.9, 0.7)]
            .iter()
            .map(|&(r, t)| coefficients(small(), r, t, 1.0))
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fugacity_and_gradient_forms_agree(k in 0usize..3, dr in -5.0f64..5.0, dt in -5.0f64..5.0) {
        let c = &table_states()[k];
        let (rho, temp) = (c.rho, c.temp);
        // ∇log z = ∇ρ/ρ - (3/2)∇T/T and ∇(1/T) = -∇T/T²
        let a = c.flux_from_gradients(dr / rho, dt / temp);
        let b = c.flux_from_forces(dr / rho - 1.5 * dt / temp, -dt / (temp * temp));
        for i in 0..2 {
            prop_assert!((a[i] - b[i]).abs() <= 1e-10 * a[i].abs().max(b[i].abs()).max(1.0));
        }
    }

    #[test]
    fn onsager_matrix_is_positive_definite(k in 0usize..3, x in -1.0f64..1.0, y in -1.0f64..1.0) {
        let o = table_states()[k].onsager();
        let q = o[(0, 0)] * x * x + 2.0 * o[(0, 1)] * x * y + o[(1, 1)] * y * y;
        prop_assert!(q >= 0.0);
        prop_assert!(x == 0.0 && y == 0.0 || q > 0.0);
    }
}

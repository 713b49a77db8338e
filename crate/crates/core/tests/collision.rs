use std::sync::OnceLock;

use proptest::prelude::*;

use scatterkin::collision::{conserve_project, entropy_dissipation_b, entropy_dissipation_d, Collision, Invariants};
use scatterkin::grid::{maxwellian, moment, moment_with, AngularRule, SymmetryKind, VelocityGrid, Weight};
use scatterkin::linops::LinearizedOperator;
use scatterkin::{Collision64, ReducedCollision64};

const N: usize = 8;

fn collision() -> &'static Collision64 {
    static C: OnceLock<Collision64> = OnceLock::new();
    C.get_or_init(|| Collision::new(VelocityGrid::new(N, 4.0, AngularRule::default()).unwrap()).unwrap())
}

fn perturbed(r: &[f64]) -> Vec<f64> {
    let g = &collision().grid;
    maxwellian(1.0, [0.0; 3], 1.0, g)
        .iter()
        .zip(r)
        .map(|(m, x)| m * (1.0 + 0.9 * x))
        .collect()
}

fn abs_mass(q: &[f64]) -> f64 {
    q.iter().map(|x| x.abs()).sum::<f64>() * collision().grid.weight()
}

fn noise() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, N * N * N)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn q_b_conserves_five_moments_and_is_symmetric(a in noise(), b in noise()) {
        let c = collision();
        let (f, h) = (perturbed(&a), perturbed(&b));
        let fh = c.q_b(&f, &h).unwrap();
        let hf = c.q_b(&h, &f).unwrap();
        let scale = abs_mass(&fh);
        for (x, y) in fh.iter().zip(&hf) {
            prop_assert!((x - y).abs() <= 1e-14 * scale.max(1.0));
        }
        for w in [Weight::One, Weight::V(0), Weight::V(1), Weight::V(2), Weight::Speed2] {
            prop_assert!(moment(&fh, w, &c.grid).abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn q_d_conserves_mass_and_energy(a in noise()) {
        let c = collision();
        let f = perturbed(&a);
        let q = c.q_d(&f).unwrap();
        let scale = abs_mass(&q);
        prop_assert!(moment(&q, Weight::One, &c.grid).abs() <= 1e-12 * scale);
        prop_assert!(moment(&q, Weight::Speed2, &c.grid).abs() <= 1e-12 * scale);
    }

    #[test]
    fn q_d_drags_a_drifting_maxwellian(u in -0.8f64..0.8) {
        let c = collision();
        let f = maxwellian(1.0, [u, 0.0, 0.0], 1.0, &c.grid);
        let dj = moment(&c.q_d(&f).unwrap(), Weight::V(0), &c.grid);
        prop_assert!(u * dj <= 0.0);
        prop_assert!(u == 0.0 || dj != 0.0);
    }

    #[test]
    fn entropy_dissipation_has_the_right_sign(a in noise()) {
        let c = collision();
        let f = perturbed(&a);
        prop_assert!(entropy_dissipation_b(&f, &c.table, &c.grid).unwrap() <= 1e-14);
        prop_assert!(entropy_dissipation_d(&f, &c.scatter, &c.grid).unwrap() <= 1e-14);
    }

    #[test]
    fn conservation_projection_is_idempotent(a in noise()) {
        let g = &collision().grid;
        let q: Vec<f64> = a.iter().map(|x| 1e-3 * x).collect();
        for inv in [Invariants::MassEnergy, Invariants::MassMomentumEnergy] {
            let p = conserve_project(&q, inv, g);
            let pp = conserve_project(&p, inv, g);
            let d = p.iter().zip(&pp).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            prop_assert!(d <= 1e-15);
            let scale = moment_with(&q.iter().map(|x| x.abs()).collect::<Vec<_>>(), |v| 1.0 + v[0] * v[0] + v[1] * v[1] + v[2] * v[2], g);
            prop_assert!(moment(&p, Weight::One, g).abs() <= 1e-14 * scale);
            prop_assert!(moment(&p, Weight::Speed2, g).abs() <= 1e-14 * scale);
        }
    }
}

#[test]
fn rate_scales_with_the_lattice() {
    // Stretching the lattice by √T must reproduce ρ√T·L(1, 1, α/ρ)
    let g = VelocityGrid::<f64>::new(N, 4.0, AngularRule::default()).unwrap();
    let reference = ReducedCollision64::new(&Collision::new(g.clone()).unwrap(), SymmetryKind::Slab);
    let base = LinearizedOperator::assemble(&reference, 1.0, 1.0, 1.0).unwrap();
    for (rho, temp, alpha) in [(1.3, 1.44, 0.7), (0.6, 0.81, 2.0)] {
        let stretched = ReducedCollision64::new(
            &Collision::new(g.rescaled(f64::sqrt(temp)).unwrap()).unwrap(),
            SymmetryKind::Slab,
        );
        let direct = LinearizedOperator::assemble(&stretched, rho, temp, alpha).unwrap();
        let predicted = base.scaling_prediction(rho, temp, alpha).unwrap();
        let d = (direct.matrix() - &predicted).abs().max();
        assert!(d <= 1e-12 * predicted.abs().max(), "defect {d:e}");
    }
}

#[test]
fn slab_spectrum_is_contained_in_the_full_one() {
    let c = collision();
    let full = ReducedCollision64::new(c, SymmetryKind::Trivial);
    let slab = ReducedCollision64::new(c, SymmetryKind::Slab);
    let lf = LinearizedOperator::assemble(&full, 1.0, 1.0, 1.0).unwrap();
    let ls = LinearizedOperator::assemble(&slab, 1.0, 1.0, 1.0).unwrap();
    // λ_d of the x-momentum mode is a Rayleigh quotient on a slab-invariant vector
    assert!((lf.lambda_d() - ls.lambda_d()).abs() <= 1e-12 * lf.lambda_d());
    // slab spectrum is a subset of the full one
    let full_ev = lf.spectrum();
    for e in ls.spectrum() {
        let nearest = full_ev.iter().map(|x| (x - e).abs()).fold(f64::INFINITY, f64::min);
        assert!(nearest <= 1e-9 * e.abs().max(1.0), "slab eigenvalue {e} missing");
    }
}
